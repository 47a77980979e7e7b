//! Pseudo-range localization scenario: a network of satellites estimates the
//! position of a stationary emitter plus a shared clock bias from biased
//! range measurements, and a Monte-Carlo harness produces bound and MSE
//! curves per agent, iteration and state component.
//!
//! State is x = (East, North, Up, bias) with F = I₄ and Q = σ_w²·I₄. Each
//! satellite observes H_i = [u_i 1] where u_i is the unit line-of-sight
//! vector from the satellite to the emitter (fixed at the origin).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dfilter::{
    centralized_kf_step, AgentModel, AgentState, DfilterError, FusionMethod, Level, OmegaPolicy,
    SystemModel,
};
use crate::matlib::{psd_sqrt, MatError, Matrix, SpdMatrix};
use crate::netsim::{run_round, NetsimError, RoundPolicy, Topology};
use crate::omega::OmegaConfig;

pub const STATE_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("configs must differ only in method: {0}")]
    ConfigMismatch(String),
    /// Bounds are measurement-independent and must agree bit for bit
    /// across replicates; a disagreeing replicate indicates a bug.
    #[error("bounds differ across replicates at run {run}")]
    NonDeterministicBounds { run: usize },
    /// Replicate bounds drifted away from the deterministic ω-schedule pass.
    #[error("replicate bounds disagree with the schedule pass")]
    ScheduleMismatch,
    #[error(transparent)]
    Net(#[from] NetsimError),
    #[error(transparent)]
    Dfilter(#[from] DfilterError),
    #[error(transparent)]
    Mat(#[from] MatError),
}

/// Estimation method for a scenario run. `Centralized` runs the optimal
/// Kalman baseline over all measurements and ignores level and topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Ci,
    Sci,
    Esci,
    Centralized,
}

/// One satellite's sky position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Satellite {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

/// Full experiment description. Deserializable from a JSON file with the
/// same field names; every field has a nine-satellite default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SarConfig {
    pub satellites: Vec<Satellite>,
    /// Undirected edges over 0-based satellite indices.
    pub edges: Vec<(usize, usize)>,
    /// Process-noise std, meters.
    pub sigma_w: f64,
    /// Measurement-noise std, meters.
    pub sigma_m: f64,
    /// Initial uncertainty P₀ = p0_scale·I₄, meters².
    pub p0_scale: f64,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub level: Level,
    pub method: Method,
}

impl Default for SarConfig {
    fn default() -> Self {
        SarConfig {
            satellites: default_satellites(),
            edges: default_edges(),
            sigma_w: 5.0,
            sigma_m: 10.0,
            p0_scale: 100.0,
            horizon: 20,
            runs: 1000,
            seed: 20260808,
            level: Level::L2,
            method: Method::Esci,
        }
    }
}

/// Nine-satellite skyplot: three high satellites 120° apart at 75°
/// elevation, six low ones 60° apart at 45°.
pub fn default_satellites() -> Vec<Satellite> {
    let positions = [
        (90.0, 75.0),
        (330.0, 75.0),
        (210.0, 75.0),
        (120.0, 45.0),
        (60.0, 45.0),
        (0.0, 45.0),
        (300.0, 45.0),
        (240.0, 45.0),
        (180.0, 45.0),
    ];
    positions
        .iter()
        .map(|&(azimuth_deg, elevation_deg)| Satellite {
            azimuth_deg,
            elevation_deg,
        })
        .collect()
}

/// Default network: the three high satellites form a triangle, each serves
/// its two nearest low satellites, and the low satellites form a ring.
pub fn default_edges() -> Vec<(usize, usize)> {
    vec![
        (0, 1),
        (0, 2),
        (1, 2),
        (0, 3),
        (0, 4),
        (1, 5),
        (1, 6),
        (2, 7),
        (2, 8),
        (3, 4),
        (4, 5),
        (5, 6),
        (6, 7),
        (7, 8),
        (8, 3),
    ]
}

impl SarConfig {
    pub fn n_agents(&self) -> usize {
        self.satellites.len()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.satellites.is_empty() {
            return Err(ScenarioError::Config("at least one satellite".into()));
        }
        for (i, s) in self.satellites.iter().enumerate() {
            if !(s.elevation_deg > 0.0 && s.elevation_deg <= 90.0) {
                return Err(ScenarioError::InvalidGeometry(format!(
                    "satellite {i} elevation {}° outside (0°, 90°]",
                    s.elevation_deg
                )));
            }
        }
        if !(self.sigma_w > 0.0 && self.sigma_m > 0.0 && self.p0_scale > 0.0) {
            return Err(ScenarioError::Config(
                "noise scales must be positive".into(),
            ));
        }
        if self.horizon < 1 || self.runs < 1 {
            return Err(ScenarioError::Config(
                "horizon and runs must be at least 1".into(),
            ));
        }
        if self.method != Method::Centralized {
            Topology::from_edges(self.n_agents(), &self.edges)?;
            fusion_method_of(self.level, self.method).ok_or_else(|| {
                ScenarioError::Config(format!(
                    "method {:?} is not available at level {:?}",
                    self.method, self.level
                ))
            })?;
        }
        Ok(())
    }
}

fn fusion_method_of(level: Level, method: Method) -> Option<FusionMethod> {
    match (level, method) {
        (Level::L1, Method::Ci) => Some(FusionMethod::Ci),
        (Level::L2, Method::Sci) => Some(FusionMethod::Sci),
        (Level::L2, Method::Esci) => Some(FusionMethod::Esci),
        (Level::L3, Method::Ci) => Some(FusionMethod::Ci),
        (Level::L3, Method::Esci) => Some(FusionMethod::Esci),
        _ => None,
    }
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_hash(cfg: &SarConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serialization cannot fail");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Build the system model and the agent models from the config.
pub fn build_sar_agents(cfg: &SarConfig) -> Result<(SystemModel, Vec<AgentModel>), ScenarioError> {
    cfg.validate()?;
    let sys = SystemModel::new(
        Matrix::identity(STATE_DIM),
        SpdMatrix::scaled_identity(STATE_DIM, cfg.sigma_w * cfg.sigma_w)?,
        SpdMatrix::scaled_identity(STATE_DIM, cfg.p0_scale)?,
        vec![0.0; STATE_DIM],
    )?;
    let topology = Topology::from_edges(cfg.n_agents(), &cfg.edges)?;
    let r = SpdMatrix::scaled_identity(1, cfg.sigma_m * cfg.sigma_m)?;
    let agents = cfg
        .satellites
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let az = s.azimuth_deg.to_radians();
            let el = s.elevation_deg.to_radians();
            // Unit vector satellite → emitter, East/North/Up components.
            let u = [-el.cos() * az.sin(), -el.cos() * az.cos(), -el.sin()];
            let h = Matrix::from_vec(1, STATE_DIM, vec![u[0], u[1], u[2], 1.0])?;
            Ok(AgentModel::new(i, h, r.clone(), topology.neighbors_of(i))?)
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    Ok((sys, agents))
}

// One RNG stream per (run, purpose): stream 0 of a run drives the truth
// trajectory, streams 1.. drive the per-agent measurement noise. Replicates
// are therefore independent and reproducible regardless of scheduling.
fn truth_rng(seed: u64, run: usize, n_agents: usize) -> ChaCha8Rng {
    stream_rng(seed, run as u64 * (n_agents as u64 + 1))
}

fn measurement_rng(seed: u64, run: usize, n_agents: usize, agent: usize) -> ChaCha8Rng {
    stream_rng(seed, run as u64 * (n_agents as u64 + 1) + 1 + agent as u64)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_vector<R: Rng + ?Sized>(sqrt: &Matrix, rng: &mut R) -> Vec<f64> {
    let noise: Vec<f64> = (0..sqrt.cols())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    sqrt.matvec(&noise)
}

/// Simulate a truth trajectory of `horizon`+1 states: x(0) ~ N(x₀, P₀) and
/// x(k+1) = F·x(k) + w with w ~ N(0, Q).
pub fn simulate_truth<R: Rng + ?Sized>(
    sys: &SystemModel,
    horizon: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let p0_sqrt = psd_sqrt(&sys.p0);
    let q_sqrt = psd_sqrt(&sys.q);
    let mut trajectory = Vec::with_capacity(horizon + 1);
    let mut x: Vec<f64> = sys
        .x0
        .iter()
        .zip(gaussian_vector(&p0_sqrt, rng))
        .map(|(m, n)| m + n)
        .collect();
    trajectory.push(x.clone());
    for _ in 0..horizon {
        x = sys
            .f
            .matvec(&x)
            .iter()
            .zip(gaussian_vector(&q_sqrt, rng))
            .map(|(m, n)| m + n)
            .collect();
        trajectory.push(x.clone());
    }
    trajectory
}

/// Generate the per-round measurement table z_i(k) = H_i·x(k) + v_i(k) for
/// rounds 1..=horizon, with independent white noise per agent and time.
pub fn generate_measurements<R: Rng + ?Sized>(
    trajectory: &[Vec<f64>],
    agents: &[AgentModel],
    rng: &mut R,
) -> Vec<Vec<Vec<f64>>> {
    let sqrts: Vec<Matrix> = agents.iter().map(|a| psd_sqrt(&a.r)).collect();
    trajectory[1..]
        .iter()
        .map(|x| {
            agents
                .iter()
                .zip(&sqrts)
                .map(|(a, s)| {
                    a.h.matvec(x)
                        .iter()
                        .zip(gaussian_vector(s, rng))
                        .map(|(m, n)| m + n)
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Measurement table drawn from the per-(run, agent) streams.
fn measurements_for_run(
    cfg: &SarConfig,
    trajectory: &[Vec<f64>],
    agents: &[AgentModel],
    run: usize,
) -> Vec<Vec<Vec<f64>>> {
    let n = agents.len();
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| measurement_rng(cfg.seed, run, n, i))
        .collect();
    let sqrts: Vec<Matrix> = agents.iter().map(|a| psd_sqrt(&a.r)).collect();
    trajectory[1..]
        .iter()
        .map(|x| {
            agents
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    a.h.matvec(x)
                        .iter()
                        .zip(gaussian_vector(&sqrts[i], &mut rngs[i]))
                        .map(|(m, n)| m + n)
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Monte-Carlo curves per (agent, iteration, component): the deterministic
/// bound diagonal, the empirical MSE, and the MSE's standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub n_agents: usize,
    pub horizon: usize,
    pub state_dim: usize,
    pub bound: Vec<f64>,
    pub mse: Vec<f64>,
    pub stderr: Vec<f64>,
    pub config_hash: String,
    pub seed: u64,
}

impl McResult {
    /// Flat index of (agent, iteration (1-based), component).
    pub fn idx(&self, agent: usize, iter: usize, component: usize) -> usize {
        cell_index(self.horizon, agent, iter, component)
    }
}

fn cell_index(horizon: usize, agent: usize, iter: usize, component: usize) -> usize {
    ((agent * horizon) + (iter - 1)) * STATE_DIM + component
}

/// Deterministic per-round quantities: the optimized ω schedule and the
/// bound diagonals. Bounds never depend on measurement realizations, so one
/// pass with zero measurements fixes them for every replicate.
struct Schedule {
    omegas: Vec<Vec<Vec<f64>>>,
    bounds: Vec<f64>,
}

fn distributed_schedule(
    cfg: &SarConfig,
    sys: &SystemModel,
    agents: &[AgentModel],
    topology: &Topology,
    method: FusionMethod,
) -> Result<Schedule, ScenarioError> {
    let n = agents.len();
    let policy = OmegaPolicy::Optimize(OmegaConfig::default());
    let zero_measurements: Vec<Vec<f64>> = agents.iter().map(|a| vec![0.0; a.h.rows()]).collect();
    let mut states: Vec<AgentState> = vec![sys.initial_state(); n];
    let mut omegas = Vec::with_capacity(cfg.horizon);
    let mut bounds = vec![0.0; n * cfg.horizon * STATE_DIM];
    for k in 1..=cfg.horizon {
        let (next, log) = run_round(
            topology,
            agents,
            &states,
            sys,
            cfg.level,
            method,
            &zero_measurements,
            &RoundPolicy::Uniform(&policy),
            k,
        )?;
        for (i, s) in next.iter().enumerate() {
            for c in 0..STATE_DIM {
                bounds[cell_index(cfg.horizon, i, k, c)] = s.bound.get(c, c);
            }
        }
        omegas.push(log.omegas);
        states = next;
    }
    Ok(Schedule { omegas, bounds })
}

struct RunOutput {
    sq_errors: Vec<f64>,
    bounds: Vec<f64>,
}

fn distributed_run(
    cfg: &SarConfig,
    sys: &SystemModel,
    agents: &[AgentModel],
    topology: &Topology,
    method: FusionMethod,
    schedule: &Schedule,
    run: usize,
) -> Result<RunOutput, ScenarioError> {
    let n = agents.len();
    let mut truth_rng = truth_rng(cfg.seed, run, n);
    let trajectory = simulate_truth(sys, cfg.horizon, &mut truth_rng);
    let measurements = measurements_for_run(cfg, &trajectory, agents, run);
    let mut states: Vec<AgentState> = vec![sys.initial_state(); n];
    let mut sq_errors = vec![0.0; n * cfg.horizon * STATE_DIM];
    let mut bounds = vec![0.0; n * cfg.horizon * STATE_DIM];
    for k in 1..=cfg.horizon {
        let (next, _) = run_round(
            topology,
            agents,
            &states,
            sys,
            cfg.level,
            method,
            &measurements[k - 1],
            &RoundPolicy::PerAgent(&schedule.omegas[k - 1]),
            k,
        )?;
        for (i, s) in next.iter().enumerate() {
            for c in 0..STATE_DIM {
                let idx = cell_index(cfg.horizon, i, k, c);
                let e = s.mean[c] - trajectory[k][c];
                sq_errors[idx] = e * e;
                bounds[idx] = s.bound.get(c, c);
            }
        }
        states = next;
    }
    Ok(RunOutput { sq_errors, bounds })
}

fn centralized_schedule(
    cfg: &SarConfig,
    sys: &SystemModel,
    agents: &[AgentModel],
) -> Result<Schedule, ScenarioError> {
    let zero: Vec<Vec<f64>> = agents.iter().map(|a| vec![0.0; a.h.rows()]).collect();
    let mut state = sys.initial_state();
    let mut bounds = vec![0.0; cfg.horizon * STATE_DIM];
    for k in 1..=cfg.horizon {
        state = centralized_kf_step(&state, sys, agents, &zero)?;
        for c in 0..STATE_DIM {
            bounds[cell_index(cfg.horizon, 0, k, c)] = state.bound.get(c, c);
        }
    }
    Ok(Schedule {
        omegas: Vec::new(),
        bounds,
    })
}

fn centralized_run(
    cfg: &SarConfig,
    sys: &SystemModel,
    agents: &[AgentModel],
    run: usize,
) -> Result<RunOutput, ScenarioError> {
    let n = agents.len();
    let mut truth_rng = truth_rng(cfg.seed, run, n);
    let trajectory = simulate_truth(sys, cfg.horizon, &mut truth_rng);
    let measurements = measurements_for_run(cfg, &trajectory, agents, run);
    let mut state = sys.initial_state();
    let mut sq_errors = vec![0.0; cfg.horizon * STATE_DIM];
    let mut bounds = vec![0.0; cfg.horizon * STATE_DIM];
    for k in 1..=cfg.horizon {
        state = centralized_kf_step(&state, sys, agents, &measurements[k - 1])?;
        for c in 0..STATE_DIM {
            let idx = cell_index(cfg.horizon, 0, k, c);
            let e = state.mean[c] - trajectory[k][c];
            sq_errors[idx] = e * e;
            bounds[idx] = state.bound.get(c, c);
        }
    }
    Ok(RunOutput { sq_errors, bounds })
}

/// Run the full Monte-Carlo experiment: `cfg.runs` independent replicates,
/// each with its own RNG streams; bounds from the deterministic schedule
/// (asserted bit-identical in every replicate), MSE averaged per cell.
/// Replicates run in parallel; the reduction is sequential in run order, so
/// results are reproducible across thread counts.
pub fn monte_carlo(cfg: &SarConfig) -> Result<McResult, ScenarioError> {
    cfg.validate()?;
    let (sys, agents) = build_sar_agents(cfg)?;
    let (schedule, outputs, out_agents) = if cfg.method == Method::Centralized {
        let schedule = centralized_schedule(cfg, &sys, &agents)?;
        let outputs: Result<Vec<RunOutput>, ScenarioError> = (0..cfg.runs)
            .into_par_iter()
            .map(|run| centralized_run(cfg, &sys, &agents, run))
            .collect();
        (schedule, outputs?, 1)
    } else {
        let topology = Topology::from_edges(cfg.n_agents(), &cfg.edges)?;
        let method =
            fusion_method_of(cfg.level, cfg.method).expect("validated level/method combination");
        let schedule = distributed_schedule(cfg, &sys, &agents, &topology, method)?;
        let outputs: Result<Vec<RunOutput>, ScenarioError> = (0..cfg.runs)
            .into_par_iter()
            .map(|run| distributed_run(cfg, &sys, &agents, &topology, method, &schedule, run))
            .collect();
        (schedule, outputs?, agents.len())
    };
    // Bounds must be bit-identical across replicates; report run 0's.
    let bound = outputs[0].bounds.clone();
    for (run, out) in outputs.iter().enumerate().skip(1) {
        let same = out
            .bounds
            .iter()
            .zip(&bound)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(ScenarioError::NonDeterministicBounds { run });
        }
    }
    // The schedule pass reached the same bounds (up to its own ω
    // renormalization round-off).
    for (a, b) in bound.iter().zip(&schedule.bounds) {
        if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
            return Err(ScenarioError::ScheduleMismatch);
        }
    }
    let cells = out_agents * cfg.horizon * STATE_DIM;
    let mut sum = vec![0.0; cells];
    let mut sum_sq = vec![0.0; cells];
    for out in &outputs {
        for (i, &e2) in out.sq_errors.iter().enumerate() {
            sum[i] += e2;
            sum_sq[i] += e2 * e2;
        }
    }
    let runs = cfg.runs as f64;
    let mse: Vec<f64> = sum.iter().map(|s| s / runs).collect();
    let stderr: Vec<f64> = sum_sq
        .iter()
        .zip(&mse)
        .map(|(s2, m)| ((s2 / runs - m * m).max(0.0) / runs).sqrt())
        .collect();
    Ok(McResult {
        n_agents: out_agents,
        horizon: cfg.horizon,
        state_dim: STATE_DIM,
        bound,
        mse,
        stderr,
        config_hash: config_hash(cfg),
        seed: cfg.seed,
    })
}

/// Deterministic bound curves only (no replicates).
pub fn bound_curves(cfg: &SarConfig) -> Result<McResult, ScenarioError> {
    let one_run = SarConfig {
        runs: 1,
        ..cfg.clone()
    };
    monte_carlo(&one_run)
}

/// Steady-state bound reduction of `candidate` relative to `reference`:
/// 100·(1 − B_candidate/B_reference) per agent and component at the final
/// iteration. The configs may differ only in method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionTable {
    pub n_agents: usize,
    pub state_dim: usize,
    pub reference_bound: Vec<f64>,
    pub candidate_bound: Vec<f64>,
    pub reduction_pct: Vec<f64>,
}

impl ReductionTable {
    pub fn at(&self, agent: usize, component: usize) -> f64 {
        self.reduction_pct[agent * self.state_dim + component]
    }
}

pub fn compare_methods(
    reference: &SarConfig,
    candidate: &SarConfig,
) -> Result<ReductionTable, ScenarioError> {
    let mut ref_as_candidate = reference.clone();
    ref_as_candidate.method = candidate.method;
    if ref_as_candidate != *candidate {
        return Err(ScenarioError::ConfigMismatch(
            "a field other than `method` differs".into(),
        ));
    }
    if reference.method == Method::Centralized || candidate.method == Method::Centralized {
        return Err(ScenarioError::ConfigMismatch(
            "reductions are defined between distributed methods".into(),
        ));
    }
    reference.validate()?;
    candidate.validate()?;
    let ref_curves = bound_curves(reference)?;
    let cand_curves = bound_curves(candidate)?;
    let n = ref_curves.n_agents;
    let horizon = ref_curves.horizon;
    let mut reference_bound = Vec::with_capacity(n * STATE_DIM);
    let mut candidate_bound = Vec::with_capacity(n * STATE_DIM);
    let mut reduction_pct = Vec::with_capacity(n * STATE_DIM);
    for agent in 0..n {
        for c in 0..STATE_DIM {
            let r = ref_curves.bound[ref_curves.idx(agent, horizon, c)];
            let k = cand_curves.bound[cand_curves.idx(agent, horizon, c)];
            reference_bound.push(r);
            candidate_bound.push(k);
            reduction_pct.push(100.0 * (1.0 - k / r));
        }
    }
    Ok(ReductionTable {
        n_agents: n,
        state_dim: STATE_DIM,
        reference_bound,
        candidate_bound,
        reduction_pct,
    })
}

/// One output row of a plain simulation: per (run, iteration, agent,
/// component) the estimate, the bound diagonal and the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub run: usize,
    pub iter: usize,
    pub agent: usize,
    pub component: usize,
    pub mean: f64,
    pub bound_diag: f64,
    pub truth: f64,
}

/// Run `cfg.runs` replicates and emit every state snapshot as a flat table
/// (the `simulate` command's payload).
pub fn simulate_table(cfg: &SarConfig) -> Result<Vec<SimRecord>, ScenarioError> {
    cfg.validate()?;
    let (sys, agents) = build_sar_agents(cfg)?;
    let n = agents.len();
    let mut records = Vec::new();
    if cfg.method == Method::Centralized {
        for run in 0..cfg.runs {
            let mut rng = truth_rng(cfg.seed, run, n);
            let trajectory = simulate_truth(&sys, cfg.horizon, &mut rng);
            let measurements = measurements_for_run(cfg, &trajectory, &agents, run);
            let mut state = sys.initial_state();
            for k in 1..=cfg.horizon {
                state = centralized_kf_step(&state, &sys, &agents, &measurements[k - 1])?;
                for c in 0..STATE_DIM {
                    records.push(SimRecord {
                        run,
                        iter: k,
                        agent: 0,
                        component: c,
                        mean: state.mean[c],
                        bound_diag: state.bound.get(c, c),
                        truth: trajectory[k][c],
                    });
                }
            }
        }
        return Ok(records);
    }
    let topology = Topology::from_edges(n, &cfg.edges)?;
    let method =
        fusion_method_of(cfg.level, cfg.method).expect("validated level/method combination");
    let schedule = distributed_schedule(cfg, &sys, &agents, &topology, method)?;
    for run in 0..cfg.runs {
        let mut rng = truth_rng(cfg.seed, run, n);
        let trajectory = simulate_truth(&sys, cfg.horizon, &mut rng);
        let measurements = measurements_for_run(cfg, &trajectory, &agents, run);
        let mut states: Vec<AgentState> = vec![sys.initial_state(); n];
        for k in 1..=cfg.horizon {
            let (next, _) = run_round(
                &topology,
                &agents,
                &states,
                &sys,
                cfg.level,
                method,
                &measurements[k - 1],
                &RoundPolicy::PerAgent(&schedule.omegas[k - 1]),
                k,
            )?;
            for (i, s) in next.iter().enumerate() {
                for c in 0..STATE_DIM {
                    records.push(SimRecord {
                        run,
                        iter: k,
                        agent: i,
                        component: c,
                        mean: s.mean[c],
                        bound_diag: s.bound.get(c, c),
                        truth: trajectory[k][c],
                    });
                }
            }
            states = next;
        }
    }
    Ok(records)
}
