//! Bound-comparison demo: CI vs SCI vs ESCI on a fixed two-estimate
//! instance whose errors share a correlated noise component, swept over a
//! grid of ω plus the trace-optimal ω per method.

use covfuse::fusion::{CentralizedSplit, FusionProblem, PlainEstimate, SciEstimate};
use covfuse::matlib::{BlockMatrix, Matrix, SpdMatrix};
use covfuse::omega::{optimize_omega, OmegaConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One estimate of the demo instance, as nested JSON arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoEstimate {
    pub p1: Vec<Vec<f64>>,
    pub p_ind: Vec<Vec<f64>>,
    /// Coupling to the common noise; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<Vec<f64>>>,
}

/// Demo instance: two 2×2 estimates plus the common-noise covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoConfig {
    pub estimates: Vec<DemoEstimate>,
    pub q: Vec<Vec<f64>>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            estimates: vec![
                DemoEstimate {
                    p1: vec![vec![1.0, -2.0], vec![-2.0, 5.0]],
                    p_ind: vec![vec![2.0, 0.0], vec![0.0, 9.0]],
                    m: None,
                },
                DemoEstimate {
                    p1: vec![vec![9.0, -1.0], vec![-1.0, 1.0]],
                    p_ind: vec![vec![9.0, 3.0], vec![3.0, 2.0]],
                    m: None,
                },
            ],
            q: vec![vec![2.0, 2.0], vec![2.0, 2.0]],
        }
    }
}

fn matrix_of(rows: &[Vec<f64>], what: &str) -> Result<Matrix, CliError> {
    let r = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Config(format!("{what}: ragged matrix")));
    }
    Matrix::from_vec(r, c, rows.iter().flatten().copied().collect())
        .map_err(|e| CliError::Config(format!("{what}: {e}")))
}

fn psd_of(rows: &[Vec<f64>], what: &str) -> Result<SpdMatrix, CliError> {
    SpdMatrix::new_psd(matrix_of(rows, what)?).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

/// Demo inputs lifted to the three fusion problems. ESCI runs in its
/// general (stacked) form so that a singular common-noise covariance is
/// handled exactly.
pub struct DemoInstance {
    ci: Vec<PlainEstimate>,
    sci: Vec<SciEstimate>,
    esci: CentralizedSplit,
}

pub const DEMO_METHODS: [&str; 3] = ["CI", "SCI", "ESCI"];

impl DemoInstance {
    pub fn build(cfg: &DemoConfig) -> Result<DemoInstance, CliError> {
        if cfg.estimates.len() != 2 {
            return Err(CliError::Config(
                "the demo takes exactly two estimates".into(),
            ));
        }
        let q = psd_of(&cfg.q, "q")?;
        let d = q.dim();
        if d != 2 {
            return Err(CliError::Config(
                "the demo is a 2-dimensional comparison".into(),
            ));
        }
        let n = cfg.estimates.len();
        let mut ci = Vec::new();
        let mut sci = Vec::new();
        let mut p1_diag = Vec::new();
        let mut p2_cent = BlockMatrix::zeros(&vec![d; n]);
        let mut couplings = Vec::new();
        for (i, e) in cfg.estimates.iter().enumerate() {
            let p1 = psd_of(&e.p1, &format!("estimates[{i}].p1"))?;
            let p_ind = psd_of(&e.p_ind, &format!("estimates[{i}].p_ind"))?;
            let m = match &e.m {
                Some(rows) => matrix_of(rows, &format!("estimates[{i}].m"))?,
                None => Matrix::identity(d),
            };
            if p1.dim() != d || p_ind.dim() != d || m.rows() != d || m.cols() != d {
                return Err(CliError::Config(format!(
                    "estimates[{i}]: dimension mismatch"
                )));
            }
            let mqmt = m.mul(q.as_matrix()).mul(&m.transpose());
            // CI sees the total covariance; SCI folds the common noise into
            // the correlated part; ESCI keeps all three components apart.
            ci.push(PlainEstimate {
                mean: vec![0.0; d],
                cov: SpdMatrix::new_psd(p1.as_matrix().add(p_ind.as_matrix()).add(&mqmt))
                    .map_err(|e| CliError::Config(format!("estimates[{i}]: {e}")))?,
            });
            sci.push(SciEstimate {
                mean: vec![0.0; d],
                p1: SpdMatrix::new_psd(p1.as_matrix().add(&mqmt))
                    .map_err(|e| CliError::Config(format!("estimates[{i}]: {e}")))?,
                p2: p_ind.clone(),
            });
            p2_cent.set_block(i, i, &p_ind.as_matrix().add(&mqmt));
            p1_diag.push(p1);
            couplings.push(m);
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let blk = couplings[i]
                        .mul(q.as_matrix())
                        .mul(&couplings[j].transpose());
                    p2_cent.set_block(i, j, &blk);
                }
            }
        }
        let esci = CentralizedSplit {
            means: vec![vec![0.0; d]; n],
            p1_diag,
            p2_cent,
            p12_cent: None,
        };
        Ok(DemoInstance { ci, sci, esci })
    }

    fn problem(&self, method: &str) -> Result<FusionProblem<'_>, CliError> {
        match method {
            "CI" => Ok(FusionProblem::Ci(&self.ci)),
            "SCI" => Ok(FusionProblem::Sci(&self.sci)),
            "ESCI" => Ok(FusionProblem::EsciGeneral(&self.esci)),
            other => Err(CliError::Config(format!("unknown method {other}"))),
        }
    }

    fn bound(&self, method: &str, omega: &[f64]) -> Result<SpdMatrix, CliError> {
        let out = self.problem(method)?.fuse(omega);
        Ok(out.map_err(|e| CliError::Config(e.to_string()))?.bound)
    }

    fn optimal_omega(&self, method: &str) -> Result<Vec<f64>, CliError> {
        let (omega, _) = optimize_omega(&self.problem(method)?, &OmegaConfig::default())
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(omega)
    }
}

/// One CSV row of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoRow {
    pub method: &'static str,
    pub omega: [f64; 2],
    pub bound: SpdMatrix,
    pub trace: f64,
    pub is_optimal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSummary {
    pub trace_ci: f64,
    pub trace_sci: f64,
    pub trace_esci: f64,
}

impl DemoSummary {
    /// The tightening the demo demonstrates.
    pub fn ordering_holds(&self) -> bool {
        self.trace_esci <= self.trace_sci && self.trace_sci <= self.trace_ci
    }
}

/// Sweep each method over `omega_rows − 1` evenly spaced weights plus its
/// trace-optimal ω.
pub fn run_demo(
    cfg: &DemoConfig,
    omega_rows: usize,
) -> Result<(Vec<DemoRow>, DemoSummary), CliError> {
    if omega_rows < 3 {
        return Err(CliError::Config("--omega-grid must be at least 3".into()));
    }
    let instance = DemoInstance::build(cfg)?;
    let grid_points = omega_rows - 1;
    let mut rows = Vec::new();
    let mut optimal_traces = [0.0; 3];
    for (mi, method) in DEMO_METHODS.iter().enumerate() {
        for j in 0..grid_points {
            let w1 = j as f64 / (grid_points - 1) as f64;
            let omega = [w1, 1.0 - w1];
            let bound = instance.bound(method, &omega)?;
            let trace = bound.trace();
            rows.push(DemoRow {
                method,
                omega,
                bound,
                trace,
                is_optimal: false,
            });
        }
        let opt = instance.optimal_omega(method)?;
        let bound = instance.bound(method, &opt)?;
        let trace = bound.trace();
        optimal_traces[mi] = trace;
        rows.push(DemoRow {
            method,
            omega: [opt[0], opt[1]],
            bound,
            trace,
            is_optimal: true,
        });
    }
    let summary = DemoSummary {
        trace_ci: optimal_traces[0],
        trace_sci: optimal_traces[1],
        trace_esci: optimal_traces[2],
    };
    Ok((rows, summary))
}
