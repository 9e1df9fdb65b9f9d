//! Experiment harness: success-probability statistics, G-Set Max-Cut
//! runs under a time budget, complexity scaling fits, and the projected
//! hardware run time.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{basin_hopping, mc_multistart, BasinHoppingParams, LbfgsParams};
use crate::error::{GdError, Result};
use crate::gd::{run_gd, CouplingMode, GdParams, RunRecord};
use crate::instances::EnsembleSpec;
use crate::model::{ising_from_maxcut, maxcut_value, CouplingMatrix, FieldSpec, SpinConfiguration, TAU};

/// Ten-significant-digit match criterion on energies.
pub const SUCCESS_REL_TOL: f64 = 1e-9;

pub const DEFAULT_FEEDBACK_LATENCY: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Gd,
    GdMod,
    Mc,
    Bh,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::GdMod => "gd-mod",
            Algorithm::Mc => "mc",
            Algorithm::Bh => "bh",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = GdError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Algorithm::Gd),
            "gd-mod" | "gd_mod" | "gdmod" => Ok(Algorithm::GdMod),
            "mc" => Ok(Algorithm::Mc),
            "bh" => Ok(Algorithm::Bh),
            other => Err(GdError::InvalidSpec(format!("unknown algorithm {other}"))),
        }
    }
}

/// How the per-instance reference minimum is established.
#[derive(Clone, Debug, Default)]
pub enum ReferencePolicy {
    /// Minimum over every run of every method on the instance.
    #[default]
    Consensus,
    /// Externally known values by instance name; instances without an
    /// entry fall back to consensus.
    Metadata(HashMap<String, f64>),
}

#[derive(Clone, Debug)]
pub struct NamedInstance {
    pub name: String,
    pub coupling: CouplingMatrix,
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub algorithms: Vec<Algorithm>,
    pub instances: Vec<NamedInstance>,
    pub runs_per_instance: usize,
    pub reference_policy: ReferencePolicy,
    pub time_budget: Option<f64>,
    pub seed: u64,
    pub gd: GdParams,
    pub bh: BasinHoppingParams,
    pub lbfgs: LbfgsParams,
}

impl ExperimentSpec {
    pub fn new(algorithms: Vec<Algorithm>, instances: Vec<NamedInstance>) -> Self {
        Self {
            algorithms,
            instances,
            runs_per_instance: 1,
            reference_policy: ReferencePolicy::Consensus,
            time_budget: None,
            seed: 0,
            gd: GdParams::default(),
            bh: BasinHoppingParams::default(),
            lbfgs: LbfgsParams::default(),
        }
    }
}

/// One archived run, NDJSON-serialized by `write_archive`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArchivedRun {
    pub instance: String,
    pub method: String,
    pub record: RunRecord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuccessStats {
    pub method: String,
    /// (instance name, fraction of runs matching the reference).
    pub per_instance: Vec<(String, f64)>,
    /// Instance counts over ten equal probability bins on [0, 1].
    pub histogram: [usize; 10],
}

impl SuccessStats {
    pub fn mean(&self) -> f64 {
        if self.per_instance.is_empty() {
            return 0.0;
        }
        self.per_instance.iter().map(|(_, p)| p).sum::<f64>() / self.per_instance.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub stats: Vec<SuccessStats>,
    pub records: Vec<ArchivedRun>,
    /// (instance name, reference minimum energy).
    pub references: Vec<(String, f64)>,
}

fn mix_seed(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over the packed indices
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(c.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn one_run(
    algo: Algorithm,
    j: &CouplingMatrix,
    spec: &ExperimentSpec,
    run_seed: u64,
) -> Result<RunRecord> {
    match algo {
        Algorithm::Gd | Algorithm::GdMod => {
            let params = GdParams {
                seed: run_seed,
                time_budget: spec.time_budget,
                ..spec.gd.clone()
            };
            let mode = if algo == Algorithm::Gd {
                CouplingMode::Dissipative
            } else {
                CouplingMode::Gain
            };
            run_gd(j, &FieldSpec::empty(), mode, &params)
        }
        Algorithm::Mc => mc_multistart(j, None, 1, &spec.lbfgs, run_seed),
        Algorithm::Bh => {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            let theta0 = SpinConfiguration::xy(
                (0..j.n()).map(|_| rng.gen::<f64>() * TAU).collect(),
            );
            let bh = BasinHoppingParams {
                seed: run_seed,
                ..spec.bh.clone()
            };
            basin_hopping(j, None, &theta0, &bh, &spec.lbfgs).map(|o| o.record)
        }
    }
}

/// Run every (instance, algorithm, run) combination, establish the
/// per-instance reference minimum, and compute success probabilities.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    if spec.runs_per_instance < 1 {
        return Err(GdError::InvalidSpec("runs_per_instance must be >= 1".into()));
    }
    let mut jobs = Vec::new();
    for ii in 0..spec.instances.len() {
        for (ai, &algo) in spec.algorithms.iter().enumerate() {
            for run in 0..spec.runs_per_instance {
                jobs.push((ii, ai, algo, run));
            }
        }
    }
    let records: Vec<ArchivedRun> = jobs
        .into_par_iter()
        .map(|(ii, ai, algo, run)| {
            let inst = &spec.instances[ii];
            let seed = mix_seed(spec.seed, ii as u64, ai as u64, run as u64);
            let record = one_run(algo, &inst.coupling, spec, seed)?;
            Ok(ArchivedRun {
                instance: inst.name.clone(),
                method: algo.label().to_string(),
                record,
            })
        })
        .collect::<Result<_>>()?;

    let mut references = Vec::new();
    for inst in &spec.instances {
        let consensus = records
            .iter()
            .filter(|r| r.instance == inst.name)
            .map(|r| r.record.best_energy)
            .fold(f64::INFINITY, f64::min);
        let reference = match &spec.reference_policy {
            ReferencePolicy::Consensus => consensus,
            ReferencePolicy::Metadata(map) => map.get(&inst.name).copied().unwrap_or(consensus),
        };
        references.push((inst.name.clone(), reference));
    }

    let mut stats = Vec::new();
    for &algo in &spec.algorithms {
        let mut per_instance = Vec::new();
        let mut histogram = [0usize; 10];
        for (name, reference) in &references {
            let runs: Vec<&ArchivedRun> = records
                .iter()
                .filter(|r| r.instance == *name && r.method == algo.label())
                .collect();
            let hits = runs
                .iter()
                .filter(|r| {
                    (r.record.best_energy - reference).abs()
                        <= SUCCESS_REL_TOL * reference.abs()
                })
                .count();
            let p = hits as f64 / runs.len().max(1) as f64;
            histogram[((p * 10.0) as usize).min(9)] += 1;
            per_instance.push((name.clone(), p));
        }
        stats.push(SuccessStats {
            method: algo.label().to_string(),
            per_instance,
            histogram,
        });
    }
    Ok(ExperimentOutcome {
        stats,
        records,
        references,
    })
}

/// Per-instance Max-Cut run statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxcutStat {
    pub instance: String,
    pub best_cut: f64,
    pub mean_cut: f64,
    pub runs: usize,
    /// Percentage below the best-known value, when metadata has one.
    pub deviation_pct: Option<f64>,
}

/// Solve Max-Cut instances with the GD / GD-mod dynamics under a per-run
/// time budget. The Ising penalty is set to 1.5x the largest coupling
/// row sum of each instance.
pub fn run_maxcut_suite(
    instances: &[(String, crate::model::WeightedGraph)],
    algorithm: Algorithm,
    runs_per_instance: usize,
    time_budget: Option<f64>,
    metadata: &HashMap<String, f64>,
    gd: &GdParams,
    seed: u64,
) -> Result<Vec<MaxcutStat>> {
    let mode = match algorithm {
        Algorithm::Gd => CouplingMode::Dissipative,
        Algorithm::GdMod => CouplingMode::Gain,
        other => {
            return Err(GdError::InvalidSpec(format!(
                "maxcut suite supports gd/gd-mod, not {}",
                other.label()
            )))
        }
    };
    let mut out = Vec::new();
    for (ii, (name, graph)) in instances.iter().enumerate() {
        let (j, _offset) = ising_from_maxcut(graph);
        let h2 = 1.5 * j.max_abs_row_sum();
        let fields = FieldSpec::ising(graph.n(), h2);
        let cuts: Vec<f64> = (0..runs_per_instance)
            .into_par_iter()
            .map(|run| {
                let params = GdParams {
                    seed: mix_seed(seed, ii as u64, 0, run as u64),
                    time_budget,
                    ..gd.clone()
                };
                let record = run_gd(&j, &fields, mode, &params)?;
                maxcut_value(graph, &record.best_conf)
            })
            .collect::<Result<_>>()?;
        let best = cuts.iter().fold(f64::NEG_INFINITY, |m, &c| m.max(c));
        let mean = cuts.iter().sum::<f64>() / cuts.len().max(1) as f64;
        out.push(MaxcutStat {
            instance: name.clone(),
            best_cut: best,
            mean_cut: mean,
            runs: cuts.len(),
            deviation_pct: metadata
                .get(name)
                .map(|bk| (bk - best) / bk * 100.0),
        });
    }
    Ok(out)
}

/// Least-squares line in (log N, log T) space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingFit {
    pub sizes: Vec<f64>,
    pub times: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Fit log T = slope * log N + intercept (natural logs) by least squares.
pub fn fit_loglog(sizes: &[f64], times: &[f64]) -> Result<ScalingFit> {
    if sizes.len() != times.len() {
        return Err(GdError::DimensionMismatch {
            expected: sizes.len(),
            got: times.len(),
        });
    }
    if sizes.len() < 2 {
        return Err(GdError::InvalidSpec("need at least 2 points to fit".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GdError::InvalidSpec("sizes must be strictly increasing".into()));
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| n.ln()).collect();
    let ys: Vec<f64> = times.iter().map(|&t| t.ln()).collect();
    let m = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    let residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (slope * x + intercept))
        .collect();
    Ok(ScalingFit {
        sizes: sizes.to_vec(),
        times: times.to_vec(),
        slope,
        intercept,
        residuals,
    })
}

/// Time solver runs on dense instances of growing size and fit the
/// scaling exponent. Runs execute one at a time so timings do not suffer
/// from contention.
pub fn scaling_study(
    sizes: &[usize],
    algorithm: Algorithm,
    repeats: usize,
    seed: u64,
    gd: &GdParams,
    bh: &BasinHoppingParams,
    lbfgs: &LbfgsParams,
) -> Result<ScalingFit> {
    let mut times = Vec::with_capacity(sizes.len());
    for (si, &n) in sizes.iter().enumerate() {
        let j = EnsembleSpec::dense(n, 10.0, mix_seed(seed, si as u64, 7, 0)).generate()?;
        let mut total = 0.0;
        for rep in 0..repeats.max(1) {
            let run_seed = mix_seed(seed, si as u64, 1, rep as u64);
            let start = Instant::now();
            match algorithm {
                Algorithm::Gd | Algorithm::GdMod => {
                    let params = GdParams {
                        seed: run_seed,
                        ..gd.clone()
                    };
                    let mode = if algorithm == Algorithm::Gd {
                        CouplingMode::Dissipative
                    } else {
                        CouplingMode::Gain
                    };
                    run_gd(&j, &FieldSpec::empty(), mode, &params)?;
                }
                Algorithm::Bh => {
                    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
                    let theta0 = SpinConfiguration::xy(
                        (0..n).map(|_| rng.gen::<f64>() * TAU).collect(),
                    );
                    let params = BasinHoppingParams {
                        seed: run_seed,
                        ..bh.clone()
                    };
                    basin_hopping(&j, None, &theta0, &params, lbfgs)?;
                }
                Algorithm::Mc => {
                    mc_multistart(&j, None, 10, lbfgs, run_seed)?;
                }
            }
            total += start.elapsed().as_secs_f64();
        }
        times.push(total / repeats.max(1) as f64);
    }
    fit_loglog(&sizes.iter().map(|&n| n as f64).collect::<Vec<_>>(), &times)
}

/// Projected wall time of a physical simulator executing the same
/// feedback schedule: one latency period per feedback update.
pub fn project_hw_time(record: &RunRecord, feedback_latency: f64) -> f64 {
    record.feedback_updates as f64 * feedback_latency
}

/// Newline-delimited JSON archive of runs.
pub fn write_archive<W: Write>(records: &[ArchivedRun], mut writer: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writeln!(writer)?;
    }
    Ok(())
}

pub fn read_archive<R: BufRead>(reader: R) -> Result<Vec<ArchivedRun>> {
    reader
        .lines()
        .filter(|l| l.as_ref().map(|l| !l.trim().is_empty()).unwrap_or(true))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

/// CSV with one row per (method, instance) success probability.
pub fn write_success_csv<W: Write>(stats: &[SuccessStats], mut writer: W) -> Result<()> {
    writeln!(writer, "method,instance,success_probability")?;
    for s in stats {
        for (name, p) in &s.per_instance {
            writeln!(writer, "{},{},{}", s.method, name, p)?;
        }
    }
    Ok(())
}

/// CSV of the fitted scaling data with the fit in a trailing comment row.
pub fn write_scaling_csv<W: Write>(fit: &ScalingFit, mut writer: W) -> Result<()> {
    writeln!(writer, "n,seconds")?;
    for (n, t) in fit.sizes.iter().zip(&fit.times) {
        writeln!(writer, "{n},{t}")?;
    }
    writeln!(writer, "# slope={} intercept={}", fit.slope, fit.intercept)?;
    Ok(())
}

/// CSV of Max-Cut statistics.
pub fn write_maxcut_csv<W: Write>(stats: &[MaxcutStat], mut writer: W) -> Result<()> {
    writeln!(writer, "instance,best_cut,mean_cut,runs,deviation_pct")?;
    for s in stats {
        writeln!(
            writer,
            "{},{},{},{},{}",
            s.instance,
            s.best_cut,
            s.mean_cut,
            s.runs,
            s.deviation_pct.map_or(String::new(), |d| d.to_string())
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::parse_gset;

    const TOY6: &str = include_str!("../data/toy6.gset");

    fn ferro2() -> NamedInstance {
        NamedInstance {
            name: "ferro2".into(),
            coupling: CouplingMatrix::dense_from_triplets(2, &[(0, 1, 1.0)]).unwrap(),
        }
    }

    #[test]
    fn loglog_fit_recovers_quadratic() {
        let sizes: Vec<f64> = vec![100.0, 200.0, 400.0, 800.0];
        let times: Vec<f64> = sizes.iter().map(|n| 3.0e-7 * n * n).collect();
        let fit = fit_loglog(&sizes, &times).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-6, "slope {}", fit.slope);
        assert!((fit.intercept - 3.0e-7_f64.ln()).abs() < 1e-6);
        for r in &fit.residuals {
            assert!(r.abs() < 1e-9);
        }
    }

    #[test]
    fn loglog_fit_input_checks() {
        assert!(fit_loglog(&[100.0], &[1.0]).is_err());
        assert!(fit_loglog(&[100.0, 100.0], &[1.0, 2.0]).is_err());
        assert!(fit_loglog(&[200.0, 100.0], &[1.0, 2.0]).is_err());
        assert!(fit_loglog(&[100.0, 200.0], &[1.0]).is_err());
    }

    #[test]
    fn hardware_projection_is_latency_times_updates() {
        let mut rec = RunRecord {
            schema_version: crate::gd::RUN_RECORD_SCHEMA_VERSION,
            best_energy: 0.0,
            best_conf: SpinConfiguration::xy(vec![0.0]),
            iterations: 0,
            feedback_updates: 0,
            wall_time: 0.0,
            converged: true,
            trajectory: None,
        };
        assert_eq!(project_hw_time(&rec, DEFAULT_FEEDBACK_LATENCY), 0.0);
        rec.feedback_updates = 10_000;
        assert!((project_hw_time(&rec, 1e-4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn every_method_solves_the_two_spin_ferromagnet() {
        let spec = ExperimentSpec {
            runs_per_instance: 3,
            seed: 77,
            ..ExperimentSpec::new(
                vec![Algorithm::Gd, Algorithm::GdMod, Algorithm::Mc, Algorithm::Bh],
                vec![ferro2()],
            )
        };
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.references.len(), 1);
        assert!((out.references[0].1 + 2.0).abs() < 1e-9);
        for s in &out.stats {
            assert_eq!(s.per_instance.len(), 1);
            assert!(
                (s.per_instance[0].1 - 1.0).abs() < 1e-12,
                "method {} success {}",
                s.method,
                s.per_instance[0].1
            );
            assert!((s.mean() - 1.0).abs() < 1e-12);
            assert_eq!(s.histogram[9], 1);
            assert_eq!(s.histogram[..9].iter().sum::<usize>(), 0);
        }
    }

    #[test]
    fn experiment_is_reproducible() {
        let mut spec = ExperimentSpec::new(
            vec![Algorithm::Gd, Algorithm::Mc],
            vec![
                ferro2(),
                NamedInstance {
                    name: "d6".into(),
                    coupling: EnsembleSpec::dense(6, 1.0, 5).generate().unwrap(),
                },
            ],
        );
        spec.runs_per_instance = 2;
        spec.seed = 9;
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.references, b.references);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.instance, rb.instance);
            assert_eq!(ra.method, rb.method);
            assert!(ra.record.same_outcome(&rb.record));
        }
        for (sa, sb) in a.stats.iter().zip(&b.stats) {
            assert_eq!(sa.per_instance, sb.per_instance);
            assert_eq!(sa.histogram, sb.histogram);
        }
    }

    #[test]
    fn consensus_reference_is_never_beaten() {
        let spec = ExperimentSpec {
            runs_per_instance: 3,
            seed: 4,
            ..ExperimentSpec::new(
                vec![Algorithm::Gd, Algorithm::Mc, Algorithm::Bh],
                vec![NamedInstance {
                    name: "d8".into(),
                    coupling: EnsembleSpec::dense(8, 1.0, 21).generate().unwrap(),
                }],
            )
        };
        let out = run_experiment(&spec).unwrap();
        let reference = out.references[0].1;
        for r in &out.records {
            assert!(r.record.best_energy >= reference - 1e-12);
        }
    }

    #[test]
    fn archive_round_trips_bit_for_bit() {
        let spec = ExperimentSpec {
            seed: 13,
            ..ExperimentSpec::new(vec![Algorithm::Gd, Algorithm::Bh], vec![ferro2()])
        };
        let out = run_experiment(&spec).unwrap();
        let mut buf = Vec::new();
        write_archive(&out.records, &mut buf).unwrap();
        let back = read_archive(&buf[..]).unwrap();
        let mut buf2 = Vec::new();
        write_archive(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
        assert_eq!(back.len(), out.records.len());
        for (a, b) in out.records.iter().zip(&back) {
            assert_eq!(a.record.best_energy.to_bits(), b.record.best_energy.to_bits());
        }
    }

    #[test]
    fn maxcut_toy_instance() {
        let graph = parse_gset(TOY6.as_bytes()).unwrap();
        let instances = vec![("toy6".to_string(), graph.clone())];
        let mut metadata = HashMap::new();
        metadata.insert("toy6".to_string(), 16.0);

        // starved of time: must still return a valid (possibly poor) cut
        let starved = run_maxcut_suite(
            &instances,
            Algorithm::Gd,
            1,
            Some(1e-6),
            &metadata,
            &GdParams::default(),
            1,
        )
        .unwrap();
        let w_pos: f64 = graph.edges().iter().map(|(_, _, w)| w.max(0.0)).sum();
        assert!(starved[0].best_cut <= w_pos + 1e-12);

        // with a normal budget the optimum cut of 16 is found
        let stats = run_maxcut_suite(
            &instances,
            Algorithm::Gd,
            12,
            None,
            &metadata,
            &GdParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(stats[0].runs, 12);
        assert!(
            (stats[0].best_cut - 16.0).abs() < 1e-9,
            "best cut {}",
            stats[0].best_cut
        );
        assert!((stats[0].deviation_pct.unwrap()).abs() < 1e-9);
        assert!(run_maxcut_suite(&instances, Algorithm::Mc, 1, None, &metadata, &GdParams::default(), 1).is_err());
    }

    #[test]
    fn csv_writers_emit_headers() {
        let stats = vec![SuccessStats {
            method: "gd".into(),
            per_instance: vec![("a".into(), 0.96)],
            histogram: [0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
        }];
        let mut buf = Vec::new();
        write_success_csv(&stats, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,instance,success"));
        assert!(text.contains("gd,a,0.96"));

        let fit = fit_loglog(&[100.0, 200.0], &[1.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_scaling_csv(&fit, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().count() >= 3);

        let mc = vec![MaxcutStat {
            instance: "toy6".into(),
            best_cut: 16.0,
            mean_cut: 15.5,
            runs: 4,
            deviation_pct: Some(0.0),
        }];
        let mut buf = Vec::new();
        write_maxcut_csv(&mc, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("instance,"));
    }
}
