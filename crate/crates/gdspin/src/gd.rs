//! The gain-dissipative (GD / GD-mod) dynamics.
//!
//! Integration is carried out on the complex amplitudes Psi_i with a
//! classical RK4 step; the stochastic drive is frozen per step and enters
//! with Euler-Maruyama sqrt(dt) scaling. Couplings are pre-scaled so that
//! max_i sum_j |J_ij| = 1 inside the dynamics; readout energies are
//! reported in original units.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GdError, Result};
use crate::model::{
    discretize, generalized_energy, wrap_diff, wrap_phase, CouplingMatrix, FieldSpec, ModelTag,
    SpinConfiguration,
};

pub const RUN_RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingMode {
    /// Delta_ij = 1; K is fixed to J (the GD algorithm).
    Dissipative,
    /// Delta_ij = gamma_i^inj + gamma_j^inj; K evolves toward J/Delta
    /// (the GD-mod algorithm).
    Gain,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GdParams {
    /// Particle loss rate gamma_c.
    pub gamma_c: f64,
    /// Target condensation density rho_th.
    pub rho_th: f64,
    /// Gain-adjustment speed epsilon.
    pub eps: f64,
    /// Coupling-adjustment speed epsilon-hat (GD-mod only).
    pub eps_hat: f64,
    /// Diffusion coefficient D of the stochastic drive.
    pub noise_d: f64,
    /// RK4 step.
    pub dt: f64,
    /// Integration horizon in dimensionless time.
    pub t_max: f64,
    /// Cap on |K_ij| in scaled units; None means 10 * max|J_scaled|.
    pub k_max: Option<f64>,
    /// Stationarity: max_i |rho_i - rho_th| < delta_rho * rho_th.
    pub delta_rho: f64,
    /// Stationarity: max_i |dtheta_i| / dt < delta_theta.
    pub delta_theta: f64,
    /// Length (time units) both criteria must hold before declaring
    /// convergence.
    pub window: f64,
    /// Noise stream seed.
    pub seed: u64,
    /// Clamp gamma_inj at zero from below. Off by default: field terms
    /// (e.g. the Ising penalty) add gain of their own, and the stationary
    /// balance then needs a negative injection rate, i.e. net dissipation.
    pub clamp_gamma: bool,
    /// Pre-scale couplings to max row sum 1 inside the dynamics.
    pub prescale: bool,
    /// Optional wall-clock budget per run, seconds.
    pub time_budget: Option<f64>,
    /// Trajectory sampling interval in time units; None disables sampling.
    pub sample_interval: Option<f64>,
}

impl Default for GdParams {
    fn default() -> Self {
        Self {
            gamma_c: 0.1,
            rho_th: 1.0,
            eps: 0.05,
            eps_hat: 0.05,
            noise_d: 0.05,
            dt: 0.02,
            t_max: 2000.0,
            k_max: None,
            delta_rho: 1e-3,
            delta_theta: 1e-4,
            window: 50.0,
            seed: 0,
            clamp_gamma: false,
            prescale: true,
            time_budget: None,
            sample_interval: None,
        }
    }
}

impl GdParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Hard validation of positivity constraints plus a soft step-size
    /// heuristic; returns warnings rather than failing on the latter.
    pub fn validate(&self, j: &CouplingMatrix, fields: &FieldSpec) -> Result<Vec<String>> {
        if self.rho_th <= 0.0 {
            return Err(GdError::NonPositive("rho_th"));
        }
        if self.eps <= 0.0 {
            return Err(GdError::NonPositive("eps"));
        }
        if self.eps_hat <= 0.0 {
            return Err(GdError::NonPositive("eps_hat"));
        }
        if self.dt <= 0.0 {
            return Err(GdError::NonPositive("dt"));
        }
        if self.t_max <= 0.0 {
            return Err(GdError::NonPositive("t_max"));
        }
        if self.gamma_c < 0.0 {
            return Err(GdError::NonPositive("gamma_c"));
        }
        if self.noise_d < 0.0 {
            return Err(GdError::NonPositive("noise_d"));
        }
        let mut warnings = Vec::new();
        let row = if self.prescale {
            1.0
        } else {
            j.max_abs_row_sum()
        };
        let h_max = fields
            .terms()
            .iter()
            .flat_map(|t| t.h.iter())
            .fold(0.0_f64, |m, &h| m.max(h.abs()));
        let h_scale = if self.prescale && j.max_abs_row_sum() > 0.0 {
            h_max / j.max_abs_row_sum()
        } else {
            h_max
        };
        let gain_scale = self.gamma_c + self.rho_th + row + h_scale;
        if self.dt >= 1.0 / gain_scale {
            warnings.push(format!(
                "dt={} may be too large for gain scale {gain_scale:.3}; \
                 consider dt < {:.4}",
                self.dt,
                1.0 / gain_scale
            ));
        }
        if let Some(w) = fields.validate_ising_penalty(j) {
            warnings.push(w);
        }
        Ok(warnings)
    }
}

/// Full dynamical state of the oscillator network.
#[derive(Clone, Debug)]
pub struct OscillatorState {
    pub psi: Vec<Complex64>,
    pub gamma_inj: Vec<f64>,
    /// Adjustable couplings in the layout of the coupling matrix's value
    /// slice (GD-mod only).
    pub k: Option<Vec<f64>>,
    pub t: f64,
}

impl OscillatorState {
    /// Zero amplitudes and injection rates; GD-mod starts from K = J.
    pub fn vacuum(j: &CouplingMatrix, mode: CouplingMode) -> Self {
        Self {
            psi: vec![Complex64::new(0.0, 0.0); j.n()],
            gamma_inj: vec![0.0; j.n()],
            k: match mode {
                CouplingMode::Dissipative => None,
                CouplingMode::Gain => Some(j.values().to_vec()),
            },
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.psi.len()
    }

    pub fn densities(&self) -> Vec<f64> {
        self.psi.iter().map(|p| p.norm_sqr()).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.psi.iter().map(|p| wrap_phase(p.arg())).collect()
    }
}

/// Time derivatives of (psi, gamma_inj, K).
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub d_psi: Vec<Complex64>,
    pub d_gamma: Vec<f64>,
    pub d_k: Option<Vec<f64>>,
}

/// One trajectory sample for diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
    pub gamma_inj: Vec<f64>,
}

/// Outcome of one solver run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub best_energy: f64,
    pub best_conf: SpinConfiguration,
    pub iterations: u64,
    pub feedback_updates: u64,
    pub wall_time: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trajectory: Option<Vec<TrajectorySample>>,
}

impl RunRecord {
    /// Equality of everything the dynamics determines; wall_time is a
    /// measurement and excluded.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.schema_version == other.schema_version
            && self.best_energy == other.best_energy
            && self.best_conf == other.best_conf
            && self.iterations == other.iterations
            && self.feedback_updates == other.feedback_updates
            && self.converged == other.converged
            && self.trajectory == other.trajectory
    }
}

/// Scale (J, fields) so max_i sum_j |J_ij| = 1 inside the dynamics.
/// Returns the scaled pair and the factor applied.
pub fn prescale(j: &CouplingMatrix, fields: &FieldSpec) -> (CouplingMatrix, FieldSpec, f64) {
    let row = j.max_abs_row_sum();
    if row > 0.0 {
        let s = 1.0 / row;
        (j.scaled(s), fields.scaled(s), s)
    } else {
        (j.clone(), fields.clone(), 1.0)
    }
}

fn coupling_term(
    state: &OscillatorState,
    j: &CouplingMatrix,
    mode: CouplingMode,
    out: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    match mode {
        CouplingMode::Dissipative => {
            j.mul_complex(&state.psi, out);
        }
        CouplingMode::Gain => {
            // sum_j (g_i + g_j) K_ij psi_j = g_i (K psi)_i + (K (g .* psi))_i
            let k = state.k.as_ref().expect("gain mode carries K");
            j.mul_complex_with(k, &state.psi, out);
            for i in 0..state.n() {
                scratch[i] = state.gamma_inj[i] * state.psi[i];
            }
            let mut second = vec![Complex64::new(0.0, 0.0); state.n()];
            j.mul_complex_with(k, scratch, &mut second);
            for i in 0..state.n() {
                out[i] = state.gamma_inj[i] * out[i] + second[i];
            }
        }
    }
}

/// Right-hand side of the rate equations. `noise_sample` is the frozen
/// per-step stochastic drive (already carrying any annealing and dt
/// scaling); it enters as + D * noise_sample[i].
pub fn rhs(
    state: &OscillatorState,
    j: &CouplingMatrix,
    fields: &FieldSpec,
    mode: CouplingMode,
    params: &GdParams,
    noise_sample: &[Complex64],
) -> Result<Derivatives> {
    let n = j.n();
    if state.n() != n || noise_sample.len() != n {
        return Err(GdError::DimensionMismatch {
            expected: n,
            got: state.n().min(noise_sample.len()),
        });
    }
    let mut d_psi = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); n];
    coupling_term(state, j, mode, &mut d_psi, &mut scratch);
    for i in 0..n {
        let psi = state.psi[i];
        d_psi[i] += psi * (state.gamma_inj[i] - params.gamma_c - psi.norm_sqr());
        d_psi[i] += params.noise_d * noise_sample[i];
    }
    for term in fields.terms() {
        if term.h.len() != n {
            return Err(GdError::DimensionMismatch {
                expected: n,
                got: term.h.len(),
            });
        }
        for i in 0..n {
            d_psi[i] += term.h[i] * state.psi[i].conj().powu(term.q - 1);
        }
    }
    let d_gamma = state
        .psi
        .iter()
        .map(|p| params.eps * (params.rho_th - p.norm_sqr()))
        .collect();
    let d_k = match mode {
        CouplingMode::Dissipative => None,
        CouplingMode::Gain => {
            let k = state.k.as_ref().expect("gain mode carries K");
            let mut d = vec![0.0; k.len()];
            j.for_each_entry(|idx, a, b, j_ab| {
                let delta = state.gamma_inj[a] + state.gamma_inj[b];
                d[idx] = params.eps_hat * (j_ab - delta * k[idx]);
            });
            Some(d)
        }
    };
    Ok(Derivatives {
        d_psi,
        d_gamma,
        d_k,
    })
}

fn advanced(state: &OscillatorState, d: &Derivatives, h: f64) -> OscillatorState {
    OscillatorState {
        psi: state
            .psi
            .iter()
            .zip(&d.d_psi)
            .map(|(p, dp)| p + h * dp)
            .collect(),
        gamma_inj: state
            .gamma_inj
            .iter()
            .zip(&d.d_gamma)
            .map(|(g, dg)| g + h * dg)
            .collect(),
        k: match (&state.k, &d.d_k) {
            (Some(k), Some(dk)) => Some(k.iter().zip(dk).map(|(k, dk)| k + h * dk).collect()),
            (Some(k), None) => Some(k.clone()),
            _ => None,
        },
        t: state.t + h,
    }
}

/// One classical RK4 step over dt with the stochastic drive frozen across
/// the four stages. `noise_raw` are unit circular Gaussian samples; the
/// step applies density annealing and Euler-Maruyama sqrt(dt) scaling so
/// the net stochastic increment is D * anneal_i * xi_i * sqrt(dt).
pub fn step_rk4(
    state: &OscillatorState,
    j: &CouplingMatrix,
    fields: &FieldSpec,
    mode: CouplingMode,
    params: &GdParams,
    noise_raw: &[Complex64],
) -> Result<OscillatorState> {
    let n = j.n();
    let inv_sqrt_dt = 1.0 / params.dt.sqrt();
    let noise: Vec<Complex64> = (0..n)
        .map(|i| {
            let rho = state.psi[i].norm_sqr();
            let anneal = ((params.rho_th - rho) / params.rho_th).max(0.0);
            noise_raw[i] * anneal * inv_sqrt_dt
        })
        .collect();

    let k1 = rhs(state, j, fields, mode, params, &noise)?;
    let s2 = advanced(state, &k1, params.dt / 2.0);
    let k2 = rhs(&s2, j, fields, mode, params, &noise)?;
    let s3 = advanced(state, &k2, params.dt / 2.0);
    let k3 = rhs(&s3, j, fields, mode, params, &noise)?;
    let s4 = advanced(state, &k3, params.dt);
    let k4 = rhs(&s4, j, fields, mode, params, &noise)?;

    let sixth = params.dt / 6.0;
    let mut next = OscillatorState {
        psi: (0..n)
            .map(|i| {
                state.psi[i]
                    + sixth * (k1.d_psi[i] + 2.0 * k2.d_psi[i] + 2.0 * k3.d_psi[i] + k4.d_psi[i])
            })
            .collect(),
        gamma_inj: (0..n)
            .map(|i| {
                let g = state.gamma_inj[i]
                    + sixth
                        * (k1.d_gamma[i]
                            + 2.0 * k2.d_gamma[i]
                            + 2.0 * k3.d_gamma[i]
                            + k4.d_gamma[i]);
                if params.clamp_gamma {
                    g.max(0.0)
                } else {
                    g
                }
            })
            .collect(),
        k: None,
        t: state.t + params.dt,
    };
    if let (Some(k), Some(dk1)) = (&state.k, &k1.d_k) {
        let dk2 = k2.d_k.as_ref().expect("consistent mode");
        let dk3 = k3.d_k.as_ref().expect("consistent mode");
        let dk4 = k4.d_k.as_ref().expect("consistent mode");
        let cap = params.k_max.unwrap_or_else(|| 10.0 * j.max_abs());
        next.k = Some(
            (0..k.len())
                .map(|idx| {
                    let v = k[idx] + sixth * (dk1[idx] + 2.0 * dk2[idx] + 2.0 * dk3[idx] + dk4[idx]);
                    v.clamp(-cap, cap)
                })
                .collect(),
        );
    }
    for p in &next.psi {
        if !p.re.is_finite() || !p.im.is_finite() {
            return Err(GdError::NonFinite { t: next.t });
        }
    }
    if next.gamma_inj.iter().any(|g| !g.is_finite()) {
        return Err(GdError::NonFinite { t: next.t });
    }
    Ok(next)
}

/// Deviation of the current state from the fixed-point balance
/// rho_th = gamma_i^inj - gamma_c + sum_j J_ij cos(theta_ij)
///        + sum_q h_qi rho_th^{q/2-1} cos(q theta_i),
/// reported as the max over sites.
pub fn fixed_point_residual(
    state: &OscillatorState,
    j: &CouplingMatrix,
    fields: &FieldSpec,
    params: &GdParams,
) -> f64 {
    let theta = state.phases();
    let n = j.n();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let mut balance = state.gamma_inj[i] - params.gamma_c;
        for (k, v) in j.row_iter(i) {
            balance += v * (theta[i] - theta[k]).cos();
        }
        for term in fields.terms() {
            let prefac = params.rho_th.powf(f64::from(term.q) / 2.0 - 1.0);
            balance += term.h[i] * prefac * (f64::from(term.q) * theta[i]).cos();
        }
        worst = worst.max((params.rho_th - balance).abs());
    }
    worst
}

/// A finished run together with the final state of the scaled system it
/// evolved (useful for fixed-point diagnostics).
pub struct GdRun {
    pub record: RunRecord,
    pub final_state: OscillatorState,
    pub scaled_j: CouplingMatrix,
    pub scaled_fields: FieldSpec,
}

/// Integrate the GD / GD-mod dynamics from vacuum until stationarity,
/// t_max, or the wall-clock budget.
pub fn run_gd(
    j: &CouplingMatrix,
    fields: &FieldSpec,
    mode: CouplingMode,
    params: &GdParams,
) -> Result<RunRecord> {
    run_gd_with(j, fields, mode, params, |_| {}).map(|run| run.record)
}

/// Like `run_gd` but also invokes `on_sample` at the trajectory sampling
/// interval and returns the final state.
pub fn run_gd_with<F: FnMut(&TrajectorySample)>(
    j: &CouplingMatrix,
    fields: &FieldSpec,
    mode: CouplingMode,
    params: &GdParams,
    mut on_sample: F,
) -> Result<GdRun> {
    let start = Instant::now();
    let (js, fs) = if params.prescale {
        let (js, fs, _) = prescale(j, fields);
        (js, fs)
    } else {
        (j.clone(), fields.clone())
    };
    let n = j.n();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = OscillatorState::vacuum(&js, mode);
    let mut prev_theta = state.phases();
    let mut noise_raw = vec![Complex64::new(0.0, 0.0); n];
    let window_steps = (params.window / params.dt).ceil() as u64;
    let mut stall_steps = 0u64;
    let mut iterations = 0u64;
    let mut converged = false;
    let mut trajectory: Option<Vec<TrajectorySample>> =
        params.sample_interval.map(|_| Vec::new());
    let sample_every = params
        .sample_interval
        .map(|dt_s| (dt_s / params.dt).max(1.0).round() as u64);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;

    while state.t < params.t_max {
        for s in noise_raw.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *s = Complex64::new(re * inv_sqrt2, im * inv_sqrt2);
        }
        state = step_rk4(&state, &js, &fs, mode, params, &noise_raw)?;
        iterations += 1;

        let theta = state.phases();
        let mut max_rho_dev = 0.0_f64;
        let mut max_dtheta = 0.0_f64;
        for i in 0..n {
            max_rho_dev = max_rho_dev.max((state.psi[i].norm_sqr() - params.rho_th).abs());
            max_dtheta = max_dtheta.max(wrap_diff(theta[i] - prev_theta[i]).abs());
        }
        prev_theta = theta;
        if max_rho_dev < params.delta_rho * params.rho_th
            && max_dtheta / params.dt < params.delta_theta
        {
            stall_steps += 1;
            if stall_steps >= window_steps {
                converged = true;
                break;
            }
        } else {
            stall_steps = 0;
        }

        if let Some(every) = sample_every {
            if iterations % every == 0 {
                let sample = TrajectorySample {
                    t: state.t,
                    rho: state.densities(),
                    theta: state.phases(),
                    gamma_inj: state.gamma_inj.clone(),
                };
                on_sample(&sample);
                if let Some(tr) = trajectory.as_mut() {
                    tr.push(sample);
                }
            }
        }
        if let Some(budget) = params.time_budget {
            if start.elapsed().as_secs_f64() >= budget {
                break;
            }
        }
    }

    let tag = fs.model_tag();
    let mut conf = SpinConfiguration::new(state.phases(), ModelTag::Xy);
    if tag != ModelTag::Xy {
        conf = discretize(&conf, tag);
    }
    let best_energy = generalized_energy(j, fields, params.rho_th, &conf)?;
    let record = RunRecord {
        schema_version: RUN_RECORD_SCHEMA_VERSION,
        best_energy,
        best_conf: conf,
        iterations,
        // one gain-feedback adjustment per integration step
        feedback_updates: iterations,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        trajectory,
    };
    Ok(GdRun {
        record,
        final_state: state,
        scaled_j: js,
        scaled_fields: fs,
    })
}
