//! Problem instances and spin-Hamiltonian evaluation.
//!
//! Energies follow the ordered-pair convention: the coupling sum runs over
//! all (i, j) with j != i, so each unordered pair is counted twice.
//! Accumulation is always in ascending index order so dense and sparse
//! storage of the same instance produce the same result.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GdError, Result};

pub const TAU: f64 = 2.0 * PI;

/// Reduce a phase to [0, 2*pi).
pub fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Signed difference wrapped to (-pi, pi].
pub fn wrap_diff(d: f64) -> f64 {
    let mut t = d.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    Xy,
    Ising,
    Potts(u32),
}

impl ModelTag {
    /// Number of allowed discrete phases; None for the continuous XY model.
    pub fn arity(&self) -> Option<u32> {
        match self {
            ModelTag::Xy => None,
            ModelTag::Ising => Some(2),
            ModelTag::Potts(q) => Some(*q),
        }
    }
}

/// Which sign the external-field term carries in the energy.
///
/// The Hamiltonian can be written with +sum g_i cos(theta_i) or with
/// -sum g_i cos(theta_i); both appear in the literature. `MinusCos` is
/// what the gain-dissipative dynamics optimises and is the default used
/// when a q=1 resonant term is converted to an external field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FieldSign {
    PlusCos,
    #[default]
    MinusCos,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Storage {
    /// Row-major n*n values.
    Dense(Vec<f64>),
    /// Symmetric CSR holding both (i,j) and (j,i); columns sorted per row.
    Sparse {
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

/// Symmetric coupling matrix J with zero diagonal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingMatrix {
    n: usize,
    storage: Storage,
}

impl CouplingMatrix {
    pub fn from_dense(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(GdError::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(GdError::NonzeroDiagonal(i));
            }
            for j in (i + 1)..n {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(GdError::Asymmetric { i, j });
                }
            }
        }
        Ok(Self {
            n,
            storage: Storage::Dense(entries),
        })
    }

    /// Build dense storage from upper-triangle triplets (i < j).
    pub fn dense_from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = vec![0.0; n * n];
        for &(i, j, v) in triplets {
            check_triplet(n, i, j)?;
            if entries[i * n + j] != 0.0 {
                return Err(GdError::DuplicateEntry { i, j });
            }
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
        Self::from_dense(n, entries)
    }

    /// Build sparse storage from upper-triangle triplets (i < j).
    pub fn sparse_from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            check_triplet(n, i, j)?;
            if adj[i].iter().any(|&(c, _)| c == j) {
                return Err(GdError::DuplicateEntry { i, j });
            }
            adj[i].push((j, v));
            adj[j].push((i, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            storage: Storage::Sparse { row_ptr, cols, vals },
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(e) => e[i * self.n + j],
            Storage::Sparse { row_ptr, cols, vals } => {
                let lo = row_ptr[i];
                let hi = row_ptr[i + 1];
                match cols[lo..hi].binary_search(&j) {
                    Ok(k) => vals[lo + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Iterate row i as (column, value) with ascending columns.
    /// Dense storage yields every off-diagonal column including zeros.
    pub fn row_iter(&self, i: usize) -> Box<dyn Iterator<Item = (usize, f64)> + '_> {
        match &self.storage {
            Storage::Dense(e) => {
                let n = self.n;
                Box::new((0..n).filter(move |&j| j != i).map(move |j| (j, e[i * n + j])))
            }
            Storage::Sparse { row_ptr, cols, vals } => {
                let lo = row_ptr[i];
                let hi = row_ptr[i + 1];
                Box::new(cols[lo..hi].iter().copied().zip(vals[lo..hi].iter().copied()))
            }
        }
    }

    /// Backing value slice; layout is storage-specific. Used together with
    /// `for_each_entry` and `mul_complex_with` for the adjustable couplings
    /// of the GD-mod dynamics, which share this layout.
    pub fn values(&self) -> &[f64] {
        match &self.storage {
            Storage::Dense(e) => e,
            Storage::Sparse { vals, .. } => vals,
        }
    }

    /// Visit every stored entry as (value_index, i, j, value). Dense storage
    /// visits only off-diagonal positions.
    pub fn for_each_entry<F: FnMut(usize, usize, usize, f64)>(&self, mut f: F) {
        match &self.storage {
            Storage::Dense(e) => {
                for i in 0..self.n {
                    for j in 0..self.n {
                        if i != j {
                            f(i * self.n + j, i, j, e[i * self.n + j]);
                        }
                    }
                }
            }
            Storage::Sparse { row_ptr, cols, vals } => {
                for i in 0..self.n {
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        f(k, i, cols[k], vals[k]);
                    }
                }
            }
        }
    }

    /// out[i] = sum_j vals[layout(i,j)] * x[j] with `vals` in this matrix's
    /// layout (see `values`).
    pub fn mul_complex_with(&self, vals: &[f64], x: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        match &self.storage {
            Storage::Dense(_) => {
                for i in 0..n {
                    let row = &vals[i * n..(i + 1) * n];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, &v) in row.iter().enumerate() {
                        acc += v * x[j];
                    }
                    out[i] = acc;
                }
            }
            Storage::Sparse { row_ptr, cols, .. } => {
                for i in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        acc += vals[k] * x[cols[k]];
                    }
                    out[i] = acc;
                }
            }
        }
    }

    pub fn mul_complex(&self, x: &[Complex64], out: &mut [Complex64]) {
        self.mul_complex_with(self.values(), x, out)
    }

    /// max_i sum_j |J_ij|
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row_iter(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        match &mut out.storage {
            Storage::Dense(e) => e.iter_mut().for_each(|v| *v *= factor),
            Storage::Sparse { vals, .. } => vals.iter_mut().for_each(|v| *v *= factor),
        }
        out
    }

    /// Same instance in dense storage.
    pub fn to_dense(&self) -> Self {
        let mut entries = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row_iter(i) {
                entries[i * self.n + j] = v;
            }
        }
        Self {
            n: self.n,
            storage: Storage::Dense(entries),
        }
    }

    /// Same instance in sparse storage (exact zeros dropped).
    pub fn to_sparse(&self) -> Self {
        let mut triplets = Vec::new();
        for i in 0..self.n {
            for (j, v) in self.row_iter(i) {
                if j > i && v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::sparse_from_triplets(self.n, &triplets).expect("valid by construction")
    }

    /// Upper-triangle nonzero triplets (i < j), ascending.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for (j, v) in self.row_iter(i) {
                if j > i && v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }
}

fn check_triplet(n: usize, i: usize, j: usize) -> Result<()> {
    if i >= n || j >= n {
        return Err(GdError::IndexOutOfRange { i, j, n });
    }
    if i == j {
        return Err(GdError::SelfLoop(i));
    }
    if i > j {
        return Err(GdError::InvalidSpec(format!(
            "triplet ({i},{j}) must have i < j"
        )));
    }
    Ok(())
}

/// One resonant-field term h_{q,i}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldTerm {
    pub q: u32,
    pub h: Vec<f64>,
}

/// The resonant-field coefficients selecting XY/Ising/Potts behaviour.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FieldSpec {
    terms: Vec<FieldTerm>,
}

impl FieldSpec {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(mut terms: Vec<FieldTerm>) -> Result<Self> {
        terms.sort_by_key(|t| t.q);
        for w in terms.windows(2) {
            if w[0].q == w[1].q {
                return Err(GdError::InvalidSpec(format!(
                    "duplicate resonance order q={}",
                    w[0].q
                )));
            }
        }
        if terms.iter().any(|t| t.q < 1) {
            return Err(GdError::InvalidSpec("resonance order q must be >= 1".into()));
        }
        Ok(Self { terms })
    }

    /// Uniform q=2 penalty selecting the Ising model.
    pub fn ising(n: usize, h2: f64) -> Self {
        Self {
            terms: vec![FieldTerm {
                q: 2,
                h: vec![h2; n],
            }],
        }
    }

    /// Uniform q-th resonance selecting the q-state Potts model.
    pub fn potts(n: usize, q: u32, hq: f64) -> Self {
        Self {
            terms: vec![FieldTerm {
                q,
                h: vec![hq; n],
            }],
        }
    }

    pub fn terms(&self) -> &[FieldTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Discretization implied by the highest resonance order above 1.
    pub fn model_tag(&self) -> ModelTag {
        match self.terms.iter().map(|t| t.q).filter(|&q| q > 1).max() {
            None => ModelTag::Xy,
            Some(2) => ModelTag::Ising,
            Some(q) => ModelTag::Potts(q),
        }
    }

    /// External field g_i = h_{1,i} / sqrt(rho_th) from the q=1 term.
    pub fn external_field(&self, rho_th: f64) -> Option<Vec<f64>> {
        self.terms
            .iter()
            .find(|t| t.q == 1)
            .map(|t| t.h.iter().map(|h| h / rho_th.sqrt()).collect())
    }

    /// Checks the Ising penalty condition h_2 > max_i sum_{j!=i} |J_ij|.
    /// Returns a warning string when violated; this is not a hard error.
    pub fn validate_ising_penalty(&self, j: &CouplingMatrix) -> Option<String> {
        let term = self.terms.iter().find(|t| t.q == 2)?;
        let bound = j.max_abs_row_sum();
        let h_min = term.h.iter().fold(f64::INFINITY, |m, &h| m.min(h));
        if h_min <= bound {
            Some(format!(
                "Ising penalty h2={h_min} does not exceed max row sum {bound}; \
                 phases may not lock to {{0, pi}}"
            ))
        } else {
            None
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| FieldTerm {
                    q: t.q,
                    h: t.h.iter().map(|h| h * factor).collect(),
                })
                .collect(),
        }
    }
}

/// Per-site phases reduced to [0, 2*pi).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    theta: Vec<f64>,
    model_tag: ModelTag,
}

impl SpinConfiguration {
    pub fn new(theta: Vec<f64>, model_tag: ModelTag) -> Self {
        Self {
            theta: theta.into_iter().map(wrap_phase).collect(),
            model_tag,
        }
    }

    pub fn xy(theta: Vec<f64>) -> Self {
        Self::new(theta, ModelTag::Xy)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn model_tag(&self) -> ModelTag {
        self.model_tag
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Ising spins s_i = cos(theta_i) in {-1, +1}. Errors unless every phase
    /// is exactly 0 or pi.
    pub fn ising_spins(&self) -> Result<Vec<i8>> {
        self.theta
            .iter()
            .enumerate()
            .map(|(site, &t)| {
                if t == 0.0 {
                    Ok(1)
                } else if t == PI {
                    Ok(-1)
                } else {
                    Err(GdError::NonIsingConfiguration { site, theta: t })
                }
            })
            .collect()
    }
}

/// Undirected weighted graph carrying Max-Cut instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    /// Edges are 0-based with i < j; self-loops and duplicates rejected.
    pub fn new(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
        edges.sort_by_key(|&(i, j, _)| (i, j));
        for &(i, j, _) in &edges {
            if i == j {
                return Err(GdError::SelfLoop(i));
            }
            if j >= n {
                return Err(GdError::IndexOutOfRange { i, j, n });
            }
        }
        for w in edges.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(GdError::DuplicateEntry {
                    i: w[0].0,
                    j: w[0].1,
                });
            }
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|&(_, _, w)| w).sum()
    }
}

fn check_dims(j: &CouplingMatrix, g: Option<&[f64]>, conf: &SpinConfiguration) -> Result<()> {
    if conf.len() != j.n() {
        return Err(GdError::DimensionMismatch {
            expected: j.n(),
            got: conf.len(),
        });
    }
    if let Some(g) = g {
        if g.len() != j.n() {
            return Err(GdError::DimensionMismatch {
                expected: j.n(),
                got: g.len(),
            });
        }
    }
    Ok(())
}

/// XY energy H = -sum_{i!=j} J_ij cos(theta_i - theta_j) + sum_i g_i cos(theta_i).
pub fn xy_energy(j: &CouplingMatrix, g: Option<&[f64]>, conf: &SpinConfiguration) -> Result<f64> {
    xy_energy_signed(j, g, conf, FieldSign::PlusCos)
}

/// XY energy with an explicit field-sign convention.
pub fn xy_energy_signed(
    j: &CouplingMatrix,
    g: Option<&[f64]>,
    conf: &SpinConfiguration,
    sign: FieldSign,
) -> Result<f64> {
    check_dims(j, g, conf)?;
    let t = conf.theta();
    let mut acc = 0.0;
    for i in 0..j.n() {
        for (k, v) in j.row_iter(i) {
            acc -= v * (t[i] - t[k]).cos();
        }
    }
    if let Some(g) = g {
        let s = match sign {
            FieldSign::PlusCos => 1.0,
            FieldSign::MinusCos => -1.0,
        };
        for i in 0..j.n() {
            acc += s * g[i] * t[i].cos();
        }
    }
    Ok(acc)
}

/// dH/dtheta_k = 2 sum_j J_kj sin(theta_k - theta_j) - g_k sin(theta_k).
pub fn xy_gradient(
    j: &CouplingMatrix,
    g: Option<&[f64]>,
    conf: &SpinConfiguration,
) -> Result<Vec<f64>> {
    xy_gradient_signed(j, g, conf, FieldSign::PlusCos)
}

pub fn xy_gradient_signed(
    j: &CouplingMatrix,
    g: Option<&[f64]>,
    conf: &SpinConfiguration,
    sign: FieldSign,
) -> Result<Vec<f64>> {
    check_dims(j, g, conf)?;
    let t = conf.theta();
    let n = j.n();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for (k, v) in j.row_iter(i) {
            acc += v * (t[i] - t[k]).sin();
        }
        grad[i] = 2.0 * acc;
    }
    if let Some(g) = g {
        let s = match sign {
            FieldSign::PlusCos => 1.0,
            FieldSign::MinusCos => -1.0,
        };
        for i in 0..n {
            grad[i] -= s * g[i] * t[i].sin();
        }
    }
    Ok(grad)
}

/// The functional the gain-dissipative dynamics optimises:
/// H_s = -sum_{i!=j} J_ij cos(theta_ij) - sum_q rho_th^{q/2-1} sum_i h_qi cos(q theta_i).
pub fn generalized_energy(
    j: &CouplingMatrix,
    fields: &FieldSpec,
    rho_th: f64,
    conf: &SpinConfiguration,
) -> Result<f64> {
    if rho_th <= 0.0 {
        return Err(GdError::NonPositive("rho_th"));
    }
    check_dims(j, None, conf)?;
    let t = conf.theta();
    let mut acc = 0.0;
    for i in 0..j.n() {
        for (k, v) in j.row_iter(i) {
            acc -= v * (t[i] - t[k]).cos();
        }
    }
    for term in fields.terms() {
        if term.h.len() != j.n() {
            return Err(GdError::DimensionMismatch {
                expected: j.n(),
                got: term.h.len(),
            });
        }
        let prefac = rho_th.powf(f64::from(term.q) / 2.0 - 1.0);
        let q = f64::from(term.q);
        for i in 0..j.n() {
            acc -= prefac * term.h[i] * (q * t[i]).cos();
        }
    }
    Ok(acc)
}

/// Snap each phase to the nearest allowed discrete value for the target
/// model; ties break toward the smaller value.
pub fn discretize(conf: &SpinConfiguration, model_tag: ModelTag) -> SpinConfiguration {
    let q = match model_tag.arity() {
        Some(q) => q,
        None => return conf.clone(),
    };
    let step = TAU / f64::from(q);
    let theta = conf
        .theta()
        .iter()
        .map(|&t| {
            let k0 = (t / step).floor();
            let a0 = wrap_phase(k0 * step);
            let a1 = wrap_phase((k0 + 1.0) * step);
            let d0 = wrap_diff(t - a0).abs();
            let d1 = wrap_diff(t - a1).abs();
            if d0 < d1 {
                a0
            } else if d1 < d0 {
                a1
            } else {
                a0.min(a1)
            }
        })
        .collect();
    SpinConfiguration::new(theta, model_tag)
}

/// Ising coupling matrix for a Max-Cut instance: J_ij = -w_ij, plus the
/// offset W/2 so that Cut(s) = offset - H_Ising(s)/4 under the
/// ordered-pair energy convention.
pub fn ising_from_maxcut(graph: &WeightedGraph) -> (CouplingMatrix, f64) {
    let triplets: Vec<_> = graph
        .edges()
        .iter()
        .map(|&(i, j, w)| (i, j, -w))
        .collect();
    let j = CouplingMatrix::sparse_from_triplets(graph.n(), &triplets)
        .expect("graph invariants guarantee valid triplets");
    (j, graph.total_weight() / 2.0)
}

/// Total weight of edges crossing the partition given by an Ising assignment.
pub fn maxcut_value(graph: &WeightedGraph, spins: &SpinConfiguration) -> Result<f64> {
    if spins.len() != graph.n() {
        return Err(GdError::DimensionMismatch {
            expected: graph.n(),
            got: spins.len(),
        });
    }
    let s = spins.ising_spins()?;
    Ok(graph
        .edges()
        .iter()
        .filter(|&&(i, j, _)| s[i] != s[j])
        .map(|&(_, _, w)| w)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_spin(j12: f64) -> CouplingMatrix {
        CouplingMatrix::dense_from_triplets(2, &[(0, 1, j12)]).unwrap()
    }

    fn random_dense(n: usize, bound: f64, seed: u64) -> CouplingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                t.push((i, j, rng.gen_range(-bound..bound)));
            }
        }
        CouplingMatrix::dense_from_triplets(n, &t).unwrap()
    }

    fn random_conf(n: usize, seed: u64) -> SpinConfiguration {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpinConfiguration::xy((0..n).map(|_| rng.gen::<f64>() * TAU).collect())
    }

    /// Independent naive re-evaluation of the ordered-pair energy.
    fn naive_energy(j: &CouplingMatrix, g: Option<&[f64]>, t: &[f64]) -> f64 {
        let n = j.n();
        let mut h = 0.0;
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    h -= j.get(i, k) * (t[i] - t[k]).cos();
                }
            }
        }
        if let Some(g) = g {
            for i in 0..n {
                h += g[i] * t[i].cos();
            }
        }
        h
    }

    #[test]
    fn aligned_pair_energy() {
        let j = two_spin(1.0);
        let conf = SpinConfiguration::xy(vec![0.0, 0.0]);
        assert_eq!(xy_energy(&j, None, &conf).unwrap(), -2.0);
    }

    #[test]
    fn anti_aligned_pair_energy() {
        let j = two_spin(1.0);
        let conf = SpinConfiguration::xy(vec![0.0, PI]);
        assert!((xy_energy(&j, None, &conf).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn energy_matches_naive_oracle() {
        for seed in 0..20 {
            let j = random_dense(5, 10.0, seed);
            let conf = random_conf(5, seed + 100);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
            let g: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let got = xy_energy(&j, Some(&g), &conf).unwrap();
            let want = naive_energy(&j, Some(&g), conf.theta());
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_stationary_at_aligned_pair() {
        let j = two_spin(1.0);
        let conf = SpinConfiguration::xy(vec![0.0, 0.0]);
        assert_eq!(xy_gradient(&j, None, &conf).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_quarter_turn_pair() {
        let j = two_spin(1.0);
        let conf = SpinConfiguration::xy(vec![PI / 2.0, 0.0]);
        let g = xy_gradient(&j, None, &conf).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-12);
        assert!((g[1] + 2.0).abs() < 1e-12);
    }

    fn finite_difference(j: &CouplingMatrix, g: Option<&[f64]>, conf: &SpinConfiguration) -> Vec<f64> {
        let h = 1e-6;
        let t = conf.theta();
        (0..t.len())
            .map(|k| {
                let mut up = t.to_vec();
                let mut dn = t.to_vec();
                up[k] += h;
                dn[k] -= h;
                let eu = xy_energy(j, g, &SpinConfiguration::xy(up)).unwrap();
                let ed = xy_energy(j, g, &SpinConfiguration::xy(dn)).unwrap();
                (eu - ed) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..100 {
            let n = 3 + (seed as usize % 18);
            let j = random_dense(n, 10.0, seed);
            let conf = random_conf(n, seed + 1000);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 2000);
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let grad = xy_gradient(&j, Some(&g), &conf).unwrap();
            let fd = finite_difference(&j, Some(&g), &conf);
            let scale = grad.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            for (a, b) in grad.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * scale, "grad {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn global_phase_invariance() {
        for seed in 0..20 {
            let j = random_dense(7, 10.0, seed);
            let conf = random_conf(7, seed + 50);
            let e0 = xy_energy(&j, None, &conf).unwrap();
            for c in [0.3, 1.7, -2.5] {
                let shifted = SpinConfiguration::xy(conf.theta().iter().map(|t| t + c).collect());
                let e1 = xy_energy(&j, None, &shifted).unwrap();
                assert!((e0 - e1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn generalized_reduces_to_xy() {
        for seed in 0..10 {
            let j = random_dense(6, 10.0, seed);
            let conf = random_conf(6, seed + 10);
            let xy = xy_energy(&j, None, &conf).unwrap();
            let gen = generalized_energy(&j, &FieldSpec::empty(), 1.0, &conf).unwrap();
            assert_eq!(xy, gen);
        }
    }

    #[test]
    fn generalized_single_site_ising_term() {
        let j = CouplingMatrix::from_dense(1, vec![0.0]).unwrap();
        let fields = FieldSpec::ising(1, 1.0);
        let conf = SpinConfiguration::xy(vec![0.0]);
        let e = generalized_energy(&j, &fields, 1.0, &conf).unwrap();
        assert!((e + 1.0).abs() < 1e-15);
    }

    #[test]
    fn generalized_matches_naive_oracle() {
        for seed in 0..20 {
            let j = random_dense(4, 10.0, seed);
            let conf = random_conf(4, seed + 30);
            let rho_th = 1.7;
            let h2 = 2.5;
            let fields = FieldSpec::ising(4, h2);
            let got = generalized_energy(&j, &fields, rho_th, &conf).unwrap();
            let mut want = naive_energy(&j, None, conf.theta());
            for &t in conf.theta() {
                want -= rho_th.powf(0.0) * h2 * (2.0 * t).cos();
            }
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn nonpositive_rho_th_rejected() {
        let j = two_spin(1.0);
        let conf = SpinConfiguration::xy(vec![0.0, 0.0]);
        assert!(generalized_energy(&j, &FieldSpec::empty(), 0.0, &conf).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let j = two_spin(1.0);
        let conf = SpinConfiguration::xy(vec![0.0; 3]);
        assert!(matches!(
            xy_energy(&j, None, &conf),
            Err(GdError::DimensionMismatch { .. })
        ));
        let conf2 = SpinConfiguration::xy(vec![0.0; 2]);
        assert!(xy_energy(&j, Some(&[1.0]), &conf2).is_err());
    }

    #[test]
    fn discretize_ising() {
        let conf = SpinConfiguration::xy(vec![0.1, 3.0, PI / 2.0, 3.0 * PI / 2.0]);
        let d = discretize(&conf, ModelTag::Ising);
        assert_eq!(d.theta()[0], 0.0);
        assert_eq!(d.theta()[1], PI);
        // ties break toward the smaller value
        assert_eq!(d.theta()[2], 0.0);
        assert_eq!(d.theta()[3], 0.0);
    }

    #[test]
    fn discretize_potts3() {
        let conf = SpinConfiguration::xy(vec![2.0]);
        let d = discretize(&conf, ModelTag::Potts(3));
        assert!((d.theta()[0] - TAU / 3.0).abs() < 1e-15);
    }

    #[test]
    fn discretize_satisfies_invariant() {
        let conf = random_conf(40, 9);
        for q in [2u32, 3, 5] {
            let tag = if q == 2 { ModelTag::Ising } else { ModelTag::Potts(q) };
            let d = discretize(&conf, tag);
            for &t in d.theta() {
                let k = t / (TAU / f64::from(q));
                assert!((k - k.round()).abs() < 1e-12);
                assert!(t >= 0.0 && t < TAU);
            }
        }
    }

    fn brute_force_ising_min(j: &CouplingMatrix) -> f64 {
        let n = j.n();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << n) {
            let theta: Vec<f64> = (0..n)
                .map(|i| if mask & (1 << i) != 0 { PI } else { 0.0 })
                .collect();
            let conf = SpinConfiguration::new(theta, ModelTag::Ising);
            best = best.min(xy_energy(j, None, &conf).unwrap());
        }
        best
    }

    #[test]
    fn maxcut_triangle() {
        let g = WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let (j, offset) = ising_from_maxcut(&g);
        let h_min = brute_force_ising_min(&j);
        let best_cut = offset - h_min / 4.0;
        assert!((best_cut - 2.0).abs() < 1e-12);
        let conf = SpinConfiguration::new(vec![0.0, 0.0, PI], ModelTag::Ising);
        assert_eq!(maxcut_value(&g, &conf).unwrap(), 2.0);
    }

    #[test]
    fn maxcut_single_edge() {
        let g = WeightedGraph::new(2, vec![(0, 1, 1.0)]).unwrap();
        let conf = SpinConfiguration::new(vec![0.0, PI], ModelTag::Ising);
        assert_eq!(maxcut_value(&g, &conf).unwrap(), 1.0);
    }

    #[test]
    fn maxcut_four_cycle() {
        let g = WeightedGraph::new(
            4,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)],
        )
        .unwrap();
        let (j, offset) = ising_from_maxcut(&g);
        let best_cut = offset - brute_force_ising_min(&j) / 4.0;
        assert!((best_cut - 4.0).abs() < 1e-12);
    }

    #[test]
    fn maxcut_empty_cut_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut edges = Vec::new();
        for i in 0..8usize {
            for j in (i + 1)..8 {
                if rng.gen::<f64>() < 0.5 {
                    edges.push((i, j, rng.gen_range(0.5..4.0)));
                }
            }
        }
        let g = WeightedGraph::new(8, edges).unwrap();
        let all_up = SpinConfiguration::new(vec![0.0; 8], ModelTag::Ising);
        assert_eq!(maxcut_value(&g, &all_up).unwrap(), 0.0);
        let (j, offset) = ising_from_maxcut(&g);
        for mask in 0..256u32 {
            let theta: Vec<f64> = (0..8)
                .map(|i| if mask & (1 << i) != 0 { PI } else { 0.0 })
                .collect();
            let conf = SpinConfiguration::new(theta, ModelTag::Ising);
            let cut = maxcut_value(&g, &conf).unwrap();
            let h = xy_energy(&j, None, &conf).unwrap();
            assert!((cut - (offset - h / 4.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn maxcut_rejects_continuous_conf() {
        let g = WeightedGraph::new(2, vec![(0, 1, 1.0)]).unwrap();
        let conf = SpinConfiguration::xy(vec![0.3, 1.0]);
        assert!(matches!(
            maxcut_value(&g, &conf),
            Err(GdError::NonIsingConfiguration { .. })
        ));
    }

    #[test]
    fn sparse_dense_agreement() {
        for seed in 0..10 {
            let dense = random_dense(12, 10.0, seed);
            let sparse = dense.to_sparse();
            let conf = random_conf(12, seed + 5);
            let ed = xy_energy(&dense, None, &conf).unwrap();
            let es = xy_energy(&sparse, None, &conf).unwrap();
            assert!((ed - es).abs() <= 1e-12 * ed.abs().max(1.0));
        }
    }

    #[test]
    fn construction_invariants() {
        assert!(matches!(
            CouplingMatrix::from_dense(2, vec![0.0, 1.0, 2.0, 0.0]),
            Err(GdError::Asymmetric { .. })
        ));
        assert!(matches!(
            CouplingMatrix::from_dense(1, vec![3.0]),
            Err(GdError::NonzeroDiagonal(0))
        ));
        assert!(CouplingMatrix::sparse_from_triplets(3, &[(0, 0, 1.0)]).is_err());
        assert!(CouplingMatrix::sparse_from_triplets(3, &[(0, 1, 1.0), (0, 1, 2.0)]).is_err());
    }

    #[test]
    fn field_spec_validation() {
        assert!(FieldSpec::new(vec![
            FieldTerm { q: 2, h: vec![1.0] },
            FieldTerm { q: 2, h: vec![2.0] },
        ])
        .is_err());
        let j = two_spin(4.0);
        let weak = FieldSpec::ising(2, 1.0);
        assert!(weak.validate_ising_penalty(&j).is_some());
        let strong = FieldSpec::ising(2, 10.0);
        assert!(strong.validate_ising_penalty(&j).is_none());
    }

    #[test]
    fn graph_validation() {
        assert!(WeightedGraph::new(3, vec![(1, 1, 1.0)]).is_err());
        assert!(WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(WeightedGraph::new(2, vec![(0, 5, 1.0)]).is_err());
    }

    #[test]
    fn model_tag_inference() {
        assert_eq!(FieldSpec::empty().model_tag(), ModelTag::Xy);
        assert_eq!(FieldSpec::ising(3, 2.0).model_tag(), ModelTag::Ising);
        assert_eq!(FieldSpec::potts(3, 4, 2.0).model_tag(), ModelTag::Potts(4));
    }
}
