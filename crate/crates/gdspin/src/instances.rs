//! Random instance ensembles, G-Set file I/O, and instance metadata.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GdError, Result};
use crate::model::{CouplingMatrix, WeightedGraph};

/// How sparse-ensemble edge weights are drawn from the anchor set
/// {-10, -3, 3, 10}.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SparseWeightRule {
    /// Pick two distinct anchors a < b, then draw uniform in [a, b].
    #[default]
    IntervalEndpoints,
    /// Uniform over [-10, 10] excluding (-3, 3).
    UniformExcludingGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnsembleKind {
    /// Off-diagonal entries i.i.d. uniform in [-bound, bound].
    Dense { bound: f64 },
    /// Random 3-regular graph with anchored weights.
    Sparse3 { rule: SparseWeightRule },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn dense(n: usize, bound: f64, seed: u64) -> Self {
        Self {
            kind: EnsembleKind::Dense { bound },
            n,
            seed,
        }
    }

    pub fn sparse3(n: usize, seed: u64) -> Self {
        Self {
            kind: EnsembleKind::Sparse3 {
                rule: SparseWeightRule::default(),
            },
            n,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(GdError::InvalidSpec("ensemble needs n >= 2".into()));
        }
        match &self.kind {
            EnsembleKind::Dense { bound } => {
                if *bound <= 0.0 {
                    return Err(GdError::NonPositive("bound"));
                }
            }
            EnsembleKind::Sparse3 { .. } => {
                if self.n < 4 {
                    return Err(GdError::InvalidSpec(
                        "3-regular graphs need n >= 4".into(),
                    ));
                }
                if self.n % 2 != 0 {
                    return Err(GdError::InvalidSpec(
                        "3-regular graphs need even n".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<CouplingMatrix> {
        self.validate()?;
        match &self.kind {
            EnsembleKind::Dense { bound } => gen_dense_inner(self.n, *bound, self.seed),
            EnsembleKind::Sparse3 { rule } => gen_sparse3_inner(self.n, *rule, self.seed),
        }
    }
}

/// Dense ensemble: symmetric, zero diagonal, entries uniform in
/// [-bound, bound], deterministic in (spec, seed).
pub fn gen_dense(spec: &EnsembleSpec) -> Result<CouplingMatrix> {
    match spec.kind {
        EnsembleKind::Dense { .. } => spec.generate(),
        _ => Err(GdError::InvalidSpec("spec kind is not dense".into())),
    }
}

fn gen_dense_inner(n: usize, bound: f64, seed: u64) -> Result<CouplingMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.gen_range(-bound..bound);
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    CouplingMatrix::from_dense(n, entries)
}

/// Sparse ensemble: uniformly sampled random 3-regular graph (pairing
/// model with rejection) with anchored edge weights.
pub fn gen_sparse3(spec: &EnsembleSpec) -> Result<CouplingMatrix> {
    match spec.kind {
        EnsembleKind::Sparse3 { .. } => spec.generate(),
        _ => Err(GdError::InvalidSpec("spec kind is not sparse3".into())),
    }
}

const PAIRING_RETRY_CAP: usize = 1000;
const WEIGHT_ANCHORS: [f64; 4] = [-10.0, -3.0, 3.0, 10.0];

fn gen_sparse3_inner(n: usize, rule: SparseWeightRule, seed: u64) -> Result<CouplingMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = None;
    for attempt in 0..PAIRING_RETRY_CAP {
        if attempt > 0 && attempt % 100 == 0 {
            // next substream keeps the sampler deterministic but fresh
            rng.set_stream(attempt as u64);
        }
        if let Some(pairing) = try_pairing(n, &mut rng) {
            edges = Some(pairing);
            break;
        }
    }
    let edges = edges.ok_or(GdError::PairingExhausted(PAIRING_RETRY_CAP))?;
    let mut triplets = Vec::with_capacity(edges.len());
    for (i, j) in edges {
        let w = match rule {
            SparseWeightRule::IntervalEndpoints => {
                let a_idx = rng.gen_range(0..WEIGHT_ANCHORS.len());
                let mut b_idx = rng.gen_range(0..WEIGHT_ANCHORS.len() - 1);
                if b_idx >= a_idx {
                    b_idx += 1;
                }
                let (lo, hi) = (
                    WEIGHT_ANCHORS[a_idx].min(WEIGHT_ANCHORS[b_idx]),
                    WEIGHT_ANCHORS[a_idx].max(WEIGHT_ANCHORS[b_idx]),
                );
                rng.gen_range(lo..hi)
            }
            SparseWeightRule::UniformExcludingGap => loop {
                let v: f64 = rng.gen_range(-10.0..10.0);
                if v.abs() >= 3.0 {
                    break v;
                }
            },
        };
        triplets.push((i, j, w));
    }
    triplets.sort_by_key(|&(i, j, _)| (i, j));
    CouplingMatrix::sparse_from_triplets(n, &triplets)
}

/// One pairing-model draw: 3 stubs per node, random perfect matching,
/// rejected on self-loops or multi-edges.
fn try_pairing(n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|i| [i, i, i]).collect();
    stubs.shuffle(rng);
    let mut edges = Vec::with_capacity(3 * n / 2);
    for pair in stubs.chunks_exact(2) {
        let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        if a == b {
            return None;
        }
        edges.push((a, b));
    }
    edges.sort_unstable();
    if edges.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some(edges)
}

/// Parse the G-Set text format: first line "n m", then m lines "i j w"
/// with 1-based node indices.
pub fn parse_gset<R: BufRead>(reader: R) -> Result<WeightedGraph> {
    let mut lines = reader.lines().enumerate();
    let (n, m) = loop {
        match lines.next() {
            None => {
                return Err(GdError::Parse {
                    line: 1,
                    msg: "empty input".into(),
                })
            }
            Some((idx, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let mut it = line.split_whitespace();
                let n: usize = parse_field(&mut it, idx + 1, "node count")?;
                let m: usize = parse_field(&mut it, idx + 1, "edge count")?;
                break (n, m);
            }
        }
    };
    let mut edges = Vec::with_capacity(m);
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut it = line.split_whitespace();
        let i: usize = parse_field(&mut it, lineno, "node index")?;
        let j: usize = parse_field(&mut it, lineno, "node index")?;
        let w: f64 = parse_field(&mut it, lineno, "weight")?;
        if i < 1 || i > n || j < 1 || j > n {
            return Err(GdError::Parse {
                line: lineno,
                msg: format!("node index out of range 1..={n}"),
            });
        }
        if i == j {
            return Err(GdError::Parse {
                line: lineno,
                msg: format!("self-loop at node {i}"),
            });
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(GdError::Parse {
                line: lineno,
                msg: format!("duplicate edge ({i},{j})"),
            });
        }
        edges.push((i - 1, j - 1, w));
    }
    if edges.len() != m {
        return Err(GdError::Parse {
            line: edges.len() + 1,
            msg: format!("expected {m} edges, found {}", edges.len()),
        });
    }
    WeightedGraph::new(n, edges)
}

fn parse_field<'a, T: std::str::FromStr, I: Iterator<Item = &'a str>>(
    it: &mut I,
    line: usize,
    what: &str,
) -> Result<T> {
    it.next()
        .ok_or_else(|| GdError::Parse {
            line,
            msg: format!("missing {what}"),
        })?
        .parse()
        .map_err(|_| GdError::Parse {
            line,
            msg: format!("malformed {what}"),
        })
}

/// Write the G-Set text format (1-based indices).
pub fn write_gset<W: Write>(graph: &WeightedGraph, mut writer: W) -> Result<()> {
    writeln!(writer, "{} {}", graph.n(), graph.edges().len())?;
    for &(i, j, w) in graph.edges() {
        if w == w.trunc() && w.abs() < 1e15 {
            writeln!(writer, "{} {} {}", i + 1, j + 1, w as i64)?;
        } else {
            writeln!(writer, "{} {} {}", i + 1, j + 1, w)?;
        }
    }
    Ok(())
}

pub fn parse_gset_file(path: &Path) -> Result<WeightedGraph> {
    let file = std::fs::File::open(path)?;
    parse_gset(std::io::BufReader::new(file))
}

/// Best-known-value metadata: lines of "name value"; '#' comments and
/// blank lines allowed.
pub fn parse_metadata<R: BufRead>(reader: R) -> Result<HashMap<String, f64>> {
    let mut map = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut it = content.split_whitespace();
        let name = it.next().unwrap().to_string();
        let value: f64 = parse_field(&mut it, idx + 1, "value")?;
        map.insert(name, value);
    }
    Ok(map)
}

pub fn load_metadata(path: &Path) -> Result<HashMap<String, f64>> {
    let file = std::fs::File::open(path)?;
    parse_metadata(std::io::BufReader::new(file))
}

/// Internal JSON matrix format: node count plus upper-triangle triplets.
#[derive(Serialize, Deserialize)]
struct MatrixFile {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

pub fn write_matrix_json<W: Write>(j: &CouplingMatrix, writer: W) -> Result<()> {
    let file = MatrixFile {
        n: j.n(),
        entries: j.triplets(),
    };
    serde_json::to_writer_pretty(writer, &file)?;
    Ok(())
}

pub fn read_matrix_json<R: std::io::Read>(reader: R) -> Result<CouplingMatrix> {
    let file: MatrixFile = serde_json::from_reader(reader)?;
    CouplingMatrix::sparse_from_triplets(file.n, &file.entries)
}
