//! One agent's share of the distributed estimation algorithm: prediction,
//! autonomous measurement update, fusion with neighbor messages, and the
//! post-fusion update — under three communication levels.
//!
//! * L1 messages carry the autonomous estimate and its bound; fusion can
//!   only use CI.
//! * L2 messages additionally carry HᵀR⁻¹H, which lets the receiver
//!   reconstruct the sender's prediction and split its error into a
//!   correlated part and an independent measurement-noise part (SCI), or
//!   further isolate the shared process noise (ESCI).
//! * L3 messages carry the prediction plus raw information terms HᵀR⁻¹z and
//!   HᵀR⁻¹H; predictions are fused (CI, or ESCI exploiting the shared
//!   process noise) and every neighborhood measurement enters the final
//!   update exactly once.
//!
//! A centralized Kalman filter step is provided as the optimal baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{
    ci_fuse, esci_fuse_additive_noise, esci_fuse_common_noise, sci_fuse, FusionError,
    FusionProblem, PlainEstimate, SciEstimate, SplitEstimate,
};
use crate::matlib::{floor_to_psd, spd_inverse_matrix, MatError, Matrix, SpdMatrix};
use crate::omega::{optimize_omega, OmegaConfig, OmegaError};

#[derive(Debug, Error)]
pub enum DfilterError {
    #[error("missing quantity: {0}")]
    MissingQuantity(&'static str),
    /// (Pᵃ)⁻¹ − HᵀR⁻¹H reconstructed from a message is not positive
    /// definite; the payload is inconsistent.
    #[error("cannot recover the prior of agent {sender} from its message")]
    UnrecoverablePrior { sender: usize },
    #[error("fusion method {method:?} is not available at level {level:?}")]
    UnsupportedFusion { level: Level, method: FusionMethod },
    #[error("fixed omega has {got} entries but the fusion has {expected} inputs")]
    OmegaLengthMismatch { expected: usize, got: usize },
    #[error("message serialization: {0}")]
    Serialization(String),
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Omega(#[from] OmegaError),
}

/// Communication level: how much each agent may transmit per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

/// Fusion rule used at the fusion step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FusionMethod {
    Ci,
    Sci,
    Esci,
}

/// Static description of one agent: observation model and neighbor set.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub id: usize,
    /// Observation matrix H (m×d); may have zero rows for a sensor-less agent.
    pub h: Matrix,
    /// Measurement-noise covariance R.
    pub r: SpdMatrix,
    pub neighbors: Vec<usize>,
}

impl AgentModel {
    pub fn new(
        id: usize,
        h: Matrix,
        r: SpdMatrix,
        mut neighbors: Vec<usize>,
    ) -> Result<Self, DfilterError> {
        if r.dim() != h.rows() {
            return Err(MatError::DimensionMismatch(format!(
                "R is {}x{} but H has {} rows",
                r.dim(),
                r.dim(),
                h.rows()
            ))
            .into());
        }
        neighbors.sort_unstable();
        neighbors.dedup();
        if neighbors.contains(&id) {
            return Err(DfilterError::MissingQuantity(
                "agent cannot neighbor itself",
            ));
        }
        Ok(AgentModel {
            id,
            h,
            r,
            neighbors,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.h.cols()
    }
}

/// One agent's running estimate and its conservative bound.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub mean: Vec<f64>,
    pub bound: SpdMatrix,
}

impl AgentState {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Constant-coefficient linear system x(k+1) = F·x(k) + w(k+1) with
/// x(0) ~ N(x₀, P₀).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub f: Matrix,
    pub q: SpdMatrix,
    pub p0: SpdMatrix,
    pub x0: Vec<f64>,
}

impl SystemModel {
    pub fn new(f: Matrix, q: SpdMatrix, p0: SpdMatrix, x0: Vec<f64>) -> Result<Self, DfilterError> {
        let d = x0.len();
        if f.rows() != d || f.cols() != d || q.dim() != d || p0.dim() != d {
            return Err(MatError::DimensionMismatch(
                "system matrices must share the state dim".into(),
            )
            .into());
        }
        Ok(SystemModel { f, q, p0, x0 })
    }

    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    pub fn initial_state(&self) -> AgentState {
        AgentState {
            mean: self.x0.clone(),
            bound: self.p0.clone(),
        }
    }
}

/// A round message. The payload carries exactly the fields of the sender's
/// communication level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: usize,
    #[serde(flatten)]
    pub payload: MessagePayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "level")]
pub enum MessagePayload {
    /// Autonomous estimate and bound.
    L1 { mean: Vec<f64>, cov: SpdMatrix },
    /// Autonomous estimate, bound and the sender's HᵀR⁻¹H.
    L2 {
        mean: Vec<f64>,
        cov: SpdMatrix,
        info_matrix: Matrix,
    },
    /// Prediction plus raw information terms HᵀR⁻¹z and HᵀR⁻¹H.
    L3 {
        pred_mean: Vec<f64>,
        pred_cov: SpdMatrix,
        info_vector: Vec<f64>,
        info_matrix: Matrix,
    },
}

impl Message {
    pub fn level(&self) -> Level {
        match self.payload {
            MessagePayload::L1 { .. } => Level::L1,
            MessagePayload::L2 { .. } => Level::L2,
            MessagePayload::L3 { .. } => Level::L3,
        }
    }

    /// Lossless self-describing serialization.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("message serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Message, DfilterError> {
        serde_json::from_str(text).map_err(|e| DfilterError::Serialization(e.to_string()))
    }
}

/// How ω is chosen at a fusion step.
#[derive(Debug, Clone, PartialEq)]
pub enum OmegaPolicy {
    /// Re-optimize the trace objective at every fusion step.
    Optimize(OmegaConfig),
    /// Use this fixed ω (length must match the number of fused estimates).
    Fixed(Vec<f64>),
}

impl Default for OmegaPolicy {
    fn default() -> Self {
        OmegaPolicy::Optimize(OmegaConfig::default())
    }
}

impl OmegaPolicy {
    fn resolve(&self, problem: &FusionProblem) -> Result<Vec<f64>, DfilterError> {
        match self {
            OmegaPolicy::Optimize(cfg) => Ok(optimize_omega(problem, cfg)?.0),
            OmegaPolicy::Fixed(w) => {
                if w.len() != problem.n_estimates() {
                    return Err(DfilterError::OmegaLengthMismatch {
                        expected: problem.n_estimates(),
                        got: w.len(),
                    });
                }
                Ok(w.clone())
            }
        }
    }
}

/// Measurement information terms HᵀR⁻¹H and HᵀR⁻¹z.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoTerm {
    pub info_matrix: Matrix,
    pub info_vector: Vec<f64>,
}

impl InfoTerm {
    pub fn from_measurement(h: &Matrix, r: &SpdMatrix, z: &[f64]) -> Result<Self, DfilterError> {
        if z.len() != h.rows() || r.dim() != h.rows() {
            return Err(MatError::DimensionMismatch(format!(
                "measurement of length {} for H with {} rows",
                z.len(),
                h.rows()
            ))
            .into());
        }
        let d = h.cols();
        if h.rows() == 0 {
            return Ok(InfoTerm {
                info_matrix: Matrix::zeros(d, d),
                info_vector: vec![0.0; d],
            });
        }
        let ht_rinv = h.transpose().mul(r.inverse()?.as_matrix());
        Ok(InfoTerm {
            info_matrix: ht_rinv.mul(h).symmetrized(),
            info_vector: ht_rinv.matvec(z),
        })
    }
}

/// HᵀR⁻¹H alone (for L2 message payloads).
pub fn measurement_info_matrix(h: &Matrix, r: &SpdMatrix) -> Result<Matrix, DfilterError> {
    let d = h.cols();
    if h.rows() == 0 {
        return Ok(Matrix::zeros(d, d));
    }
    if r.dim() != h.rows() {
        return Err(MatError::DimensionMismatch("R dim vs H rows".into()).into());
    }
    Ok(h.transpose()
        .mul(r.inverse()?.as_matrix())
        .mul(h)
        .symmetrized())
}

/// Prediction step: mean ← F·mean, bound ← F·bound·Fᵀ + Q.
pub fn predict(state: &AgentState, sys: &SystemModel) -> Result<AgentState, DfilterError> {
    if state.dim() != sys.state_dim() {
        return Err(MatError::DimensionMismatch("state dim vs system dim".into()).into());
    }
    let mean = sys.f.matvec(&state.mean);
    let bound = sys
        .f
        .mul(state.bound.as_matrix())
        .mul(&sys.f.transpose())
        .add(sys.q.as_matrix());
    Ok(AgentState {
        mean,
        bound: SpdMatrix::from_symmetric_unchecked(bound),
    })
}

/// Information-form update with an arbitrary set of measurement terms.
fn info_update(state: &AgentState, terms: &[&InfoTerm]) -> Result<AgentState, DfilterError> {
    let prior_info = spd_inverse_matrix(state.bound.as_matrix())?;
    let mut info = prior_info.clone();
    let mut ivec = prior_info.matvec(&state.mean);
    for t in terms {
        info = info.add(&t.info_matrix);
        for (a, b) in ivec.iter_mut().zip(&t.info_vector) {
            *a += b;
        }
    }
    let bound = spd_inverse_matrix(&info.symmetrized())?;
    let mean = bound.matvec(&ivec);
    Ok(AgentState {
        mean,
        bound: SpdMatrix::from_symmetric_unchecked(bound),
    })
}

/// Kalman update in information form:
/// P⁻¹ ← P⁻¹ + HᵀR⁻¹H, mean via the matching information vector.
/// An empty H leaves the state untouched.
pub fn measurement_update(
    state: &AgentState,
    h: &Matrix,
    r: &SpdMatrix,
    z: &[f64],
) -> Result<AgentState, DfilterError> {
    if h.rows() == 0 {
        return Ok(state.clone());
    }
    if h.cols() != state.dim() {
        return Err(MatError::DimensionMismatch("H cols vs state dim".into()).into());
    }
    let term = InfoTerm::from_measurement(h, r, z)?;
    info_update(state, &[&term])
}

/// Assemble the message an agent sends for the given level.
///
/// L1/L2 require the autonomous update of step 2; L3 requires only the
/// prediction plus the raw information terms.
pub fn build_message(
    level: Level,
    agent: &AgentModel,
    prediction: &AgentState,
    autonomous: Option<&AgentState>,
    z: &[f64],
) -> Result<Message, DfilterError> {
    let payload = match level {
        Level::L1 => {
            let auto = autonomous.ok_or(DfilterError::MissingQuantity(
                "autonomous estimate for an L1 message",
            ))?;
            MessagePayload::L1 {
                mean: auto.mean.clone(),
                cov: auto.bound.clone(),
            }
        }
        Level::L2 => {
            let auto = autonomous.ok_or(DfilterError::MissingQuantity(
                "autonomous estimate for an L2 message",
            ))?;
            MessagePayload::L2 {
                mean: auto.mean.clone(),
                cov: auto.bound.clone(),
                info_matrix: measurement_info_matrix(&agent.h, &agent.r)?,
            }
        }
        Level::L3 => {
            let term = InfoTerm::from_measurement(&agent.h, &agent.r, z)?;
            MessagePayload::L3 {
                pred_mean: prediction.mean.clone(),
                pred_cov: prediction.bound.clone(),
                info_vector: term.info_vector,
                info_matrix: term.info_matrix,
            }
        }
    };
    Ok(Message {
        sender: agent.id,
        payload,
    })
}

/// L1 fusion: CI over the own prediction and the neighbors' autonomous
/// estimates. Returns the fused state and the ω used.
pub fn fuse_l1(
    own_prediction: &AgentState,
    inbox: &[&Message],
    policy: &OmegaPolicy,
) -> Result<(AgentState, Vec<f64>), DfilterError> {
    if inbox.is_empty() {
        return Ok((own_prediction.clone(), vec![1.0]));
    }
    let mut estimates = Vec::with_capacity(inbox.len() + 1);
    estimates.push(PlainEstimate {
        mean: own_prediction.mean.clone(),
        cov: own_prediction.bound.clone(),
    });
    for msg in inbox {
        let MessagePayload::L1 { mean, cov } = &msg.payload else {
            return Err(DfilterError::MissingQuantity("L1 payload"));
        };
        estimates.push(PlainEstimate {
            mean: mean.clone(),
            cov: cov.clone(),
        });
    }
    let problem = FusionProblem::Ci(&estimates);
    let omega = policy.resolve(&problem)?;
    let out = ci_fuse(&estimates, &omega)?;
    Ok((
        AgentState {
            mean: out.mean,
            bound: out.bound,
        },
        out.omega,
    ))
}

/// Quantities recovered from one L2 message: the sender's prediction bound
/// (via information subtraction) and the derived map A = Pᵃ·P(k|k−1)⁻¹.
struct RecoveredL2 {
    mean: Vec<f64>,
    auto_cov: SpdMatrix,
    info_matrix: Matrix,
    prior_info: Matrix,
    a: Matrix,
}

fn recover_l2(msg: &Message) -> Result<RecoveredL2, DfilterError> {
    let MessagePayload::L2 {
        mean,
        cov,
        info_matrix,
    } = &msg.payload
    else {
        return Err(DfilterError::MissingQuantity("L2 payload"));
    };
    let auto_info = spd_inverse_matrix(cov.as_matrix())?;
    let prior_info = auto_info.sub(info_matrix).symmetrized();
    // Reject inconsistent payloads: the implied prior must exist.
    if crate::matlib::cholesky_matrix(&prior_info).is_err() {
        return Err(DfilterError::UnrecoverablePrior { sender: msg.sender });
    }
    let a = cov.as_matrix().mul(&prior_info);
    Ok(RecoveredL2 {
        mean: mean.clone(),
        auto_cov: cov.clone(),
        info_matrix: info_matrix.clone(),
        prior_info,
        a,
    })
}

/// L2 fusion of the own prediction with the neighbors' autonomous
/// estimates, by SCI (split into prior-propagated and measurement-noise
/// components) or ESCI (additionally isolating the shared process noise).
pub fn fuse_l2(
    own_prediction: &AgentState,
    inbox: &[&Message],
    method: FusionMethod,
    sys: &SystemModel,
    policy: &OmegaPolicy,
) -> Result<(AgentState, Vec<f64>), DfilterError> {
    if inbox.is_empty() {
        return Ok((own_prediction.clone(), vec![1.0]));
    }
    let d = own_prediction.dim();
    let recovered: Vec<RecoveredL2> = inbox
        .iter()
        .map(|m| recover_l2(m))
        .collect::<Result<_, _>>()?;
    let use_esci = match method {
        FusionMethod::Sci => false,
        // A zero process noise has no common component; the ESCI split
        // degenerates to the SCI split exactly.
        FusionMethod::Esci => sys.q.as_matrix().max_abs() > 0.0,
        FusionMethod::Ci => {
            return Err(DfilterError::UnsupportedFusion {
                level: Level::L2,
                method,
            })
        }
    };
    if !use_esci {
        let mut estimates = Vec::with_capacity(recovered.len() + 1);
        estimates.push(SciEstimate {
            mean: own_prediction.mean.clone(),
            p1: own_prediction.bound.clone(),
            p2: SpdMatrix::zeros(d),
        });
        for r in &recovered {
            // Component covariances from transmitted quantities:
            // x̃⁽¹⁾ = A·x̃(k|k−1)  →  Pᵃ·P(k|k−1)⁻¹·Pᵃ,
            // x̃⁽²⁾ = Pᵃ·HᵀR⁻¹·v  →  Pᵃ·HᵀR⁻¹H·Pᵃ.
            let p1 = r
                .auto_cov
                .as_matrix()
                .mul(&r.prior_info)
                .mul(r.auto_cov.as_matrix());
            let p2 = r
                .auto_cov
                .as_matrix()
                .mul(&r.info_matrix)
                .mul(r.auto_cov.as_matrix());
            estimates.push(SciEstimate {
                mean: r.mean.clone(),
                p1: SpdMatrix::from_symmetric_unchecked(p1),
                p2: SpdMatrix::from_symmetric_unchecked(p2),
            });
        }
        let problem = FusionProblem::Sci(&estimates);
        let omega = policy.resolve(&problem)?;
        let out = sci_fuse(&estimates, &omega)?;
        return Ok((
            AgentState {
                mean: out.mean,
                bound: out.bound,
            },
            out.omega,
        ));
    }
    // ESCI: strip the shared process noise w(k) out of every first
    // component. Own prediction error is F·x̃(k−1|k−1) − w, the received
    // errors are A·F·x̃_j(k−1|k−1) + Pᵃ·HᵀR⁻¹·v_j − A·w.
    let q = &sys.q;
    let own_pre_noise = floor_to_psd(&own_prediction.bound.as_matrix().sub(q.as_matrix()))?;
    let mut estimates = Vec::with_capacity(recovered.len() + 1);
    estimates.push(SplitEstimate {
        mean: own_prediction.mean.clone(),
        p1: own_pre_noise,
        p_ind: SpdMatrix::zeros(d),
        m: Matrix::identity(d).scale(-1.0),
    });
    for r in &recovered {
        let p_pred = spd_inverse_matrix(&r.prior_info)?;
        let pre_noise = floor_to_psd(&p_pred.sub(q.as_matrix()))?;
        let p1 = r.a.mul(pre_noise.as_matrix()).mul(&r.a.transpose());
        let p_ind = r
            .auto_cov
            .as_matrix()
            .mul(&r.info_matrix)
            .mul(r.auto_cov.as_matrix());
        estimates.push(SplitEstimate {
            mean: r.mean.clone(),
            p1: SpdMatrix::from_symmetric_unchecked(p1),
            p_ind: SpdMatrix::from_symmetric_unchecked(p_ind),
            m: r.a.scale(-1.0),
        });
    }
    let problem = FusionProblem::EsciCommonNoise {
        estimates: &estimates,
        q,
    };
    let omega = policy.resolve(&problem)?;
    let out = esci_fuse_common_noise(&estimates, q, &omega)?;
    Ok((
        AgentState {
            mean: out.mean,
            bound: out.bound,
        },
        out.omega,
    ))
}

/// L3 fusion of the own prediction with the neighbors' predictions, by CI
/// directly on the predictions or by ESCI on their pre-noise parts (all
/// predictions share the same process-noise draw).
pub fn fuse_l3(
    own_prediction: &AgentState,
    inbox: &[&Message],
    method: FusionMethod,
    sys: &SystemModel,
    policy: &OmegaPolicy,
) -> Result<(AgentState, Vec<f64>), DfilterError> {
    if inbox.is_empty() {
        return Ok((own_prediction.clone(), vec![1.0]));
    }
    let mut means = Vec::with_capacity(inbox.len() + 1);
    let mut covs = Vec::with_capacity(inbox.len() + 1);
    means.push(own_prediction.mean.clone());
    covs.push(own_prediction.bound.clone());
    for msg in inbox {
        let MessagePayload::L3 {
            pred_mean,
            pred_cov,
            ..
        } = &msg.payload
        else {
            return Err(DfilterError::MissingQuantity("L3 payload"));
        };
        means.push(pred_mean.clone());
        covs.push(pred_cov.clone());
    }
    match method {
        FusionMethod::Ci => {
            let estimates: Vec<PlainEstimate> = means
                .into_iter()
                .zip(covs)
                .map(|(mean, cov)| PlainEstimate { mean, cov })
                .collect();
            let problem = FusionProblem::Ci(&estimates);
            let omega = policy.resolve(&problem)?;
            let out = ci_fuse(&estimates, &omega)?;
            Ok((
                AgentState {
                    mean: out.mean,
                    bound: out.bound,
                },
                out.omega,
            ))
        }
        FusionMethod::Esci => {
            let d = own_prediction.dim();
            let estimates: Vec<SciEstimate> = means
                .into_iter()
                .zip(covs)
                .map(|(mean, cov)| {
                    Ok(SciEstimate {
                        mean,
                        p1: floor_to_psd(&cov.as_matrix().sub(sys.q.as_matrix()))?,
                        p2: SpdMatrix::zeros(d),
                    })
                })
                .collect::<Result<_, DfilterError>>()?;
            let problem = FusionProblem::EsciAdditiveNoise {
                estimates: &estimates,
                q: &sys.q,
            };
            let omega = policy.resolve(&problem)?;
            let out = esci_fuse_additive_noise(&estimates, &sys.q, &omega)?;
            Ok((
                AgentState {
                    mean: out.mean,
                    bound: out.bound,
                },
                out.omega,
            ))
        }
        FusionMethod::Sci => Err(DfilterError::UnsupportedFusion {
            level: Level::L3,
            method,
        }),
    }
}

/// Final update of the fused estimate. L1/L2 add only the agent's own
/// measurement information; L3 sums over the closed neighborhood.
pub fn post_fusion_update(
    fused: &AgentState,
    level: Level,
    own: &InfoTerm,
    neighbor_terms: &[InfoTerm],
) -> Result<AgentState, DfilterError> {
    if level != Level::L3 && !neighbor_terms.is_empty() {
        return Err(DfilterError::MissingQuantity(
            "neighbor information terms are only available at L3",
        ));
    }
    let mut terms: Vec<&InfoTerm> = Vec::with_capacity(1 + neighbor_terms.len());
    terms.push(own);
    terms.extend(neighbor_terms.iter());
    info_update(fused, &terms)
}

/// Centralized Kalman step: predict, then an information-form update
/// stacking every agent's measurement. The optimal-performance baseline.
pub fn centralized_kf_step(
    state: &AgentState,
    sys: &SystemModel,
    agents: &[AgentModel],
    measurements: &[Vec<f64>],
) -> Result<AgentState, DfilterError> {
    if agents.len() != measurements.len() {
        return Err(MatError::DimensionMismatch("one measurement vector per agent".into()).into());
    }
    let pred = predict(state, sys)?;
    let terms: Vec<InfoTerm> = agents
        .iter()
        .zip(measurements)
        .map(|(a, z)| InfoTerm::from_measurement(&a.h, &a.r, z))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&InfoTerm> = terms.iter().collect();
    if refs.is_empty() {
        return Ok(pred);
    }
    info_update(&pred, &refs)
}
