//! Conservative fusion rules.
//!
//! Fuses N unbiased estimates of a common state into one estimate with a
//! bound B_F on the fused error covariance that holds for every admissible
//! cross-correlation. Three families are provided:
//!
//! * [`ci_fuse`] — Covariance Intersection: arbitrary correlation between
//!   the errors, bound is the ω-weighted information combination.
//! * [`sci_fuse`] — Split CI: each error carries a known mutually
//!   independent component which tightens the bound.
//! * [`esci_fuse_general`] / [`esci_fuse_common_noise`] /
//!   [`esci_fuse_additive_noise`] — Extended SCI: the second error component
//!   may additionally be correlated across estimates (fully known second
//!   moments, e.g. a process noise observed by everyone), which tightens the
//!   bound further. The general form works on the stacked centralized
//!   covariance; the common-noise forms are algebraically equivalent
//!   specializations that only invert d-sized matrices.
//!
//! [`sample_admissible_centralized`] draws random members of the admissible
//! centralized-covariance set and is the oracle used to test
//! conservativeness: for every sampled P_cent, K·P_cent·Kᵀ ⪯ B_F.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::matlib::{
    cholesky_matrix, diag_block, spd_inverse_matrix, sub_block, sym_inverse_sqrt, BlockMatrix,
    MatError, Matrix, SpdMatrix,
};

/// Weights below this are clamped (and ω renormalized) by the ESCI rules,
/// whose bound assembly divides by ω_i.
pub const OMEGA_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    /// ω is invalid (negative entry, wrong sum) or leads to a singular
    /// combined information matrix; move ω off the boundary or regularize.
    #[error("degenerate omega: {0}")]
    DegenerateOmega(String),
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// The centralized split still carries a cross-covariance; run
    /// [`decorrelate_split`] first.
    #[error("centralized split is not decorrelated")]
    NotDecorrelated,
}

impl From<MatError> for FusionError {
    fn from(e: MatError) -> Self {
        match e {
            MatError::NotPositiveDefinite(c) => FusionError::NotPositiveDefinite(c),
            MatError::DimensionMismatch(d) => FusionError::DimensionMismatch(d),
        }
    }
}

/// An estimate with a plain covariance, as consumed by CI.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainEstimate {
    pub mean: Vec<f64>,
    pub cov: SpdMatrix,
}

/// An estimate split into a correlated-to-unknown-degree part `p1` and a
/// mutually independent part `p2`, as consumed by SCI (and by the additive
/// ESCI form, where `p2` is the independent component).
#[derive(Debug, Clone, PartialEq)]
pub struct SciEstimate {
    pub mean: Vec<f64>,
    pub p1: SpdMatrix,
    pub p2: SpdMatrix,
}

/// An estimate whose error decomposes as x̃ = x̃⁽¹⁾ + x̃⁽ⁱⁿᵈ⁾ + M·w with a
/// common noise w shared by all estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEstimate {
    pub mean: Vec<f64>,
    /// Covariance of the component correlated to an unknown degree.
    pub p1: SpdMatrix,
    /// Covariance of the mutually independent component.
    pub p_ind: SpdMatrix,
    /// Coupling to the common noise (identity when unused).
    pub m: Matrix,
}

/// Stacked view of all estimates for the general ESCI form: only the
/// diagonal blocks of the first-component covariance are known, the second
/// component covariance (and optionally its cross-covariance with the first)
/// is fully known.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedSplit {
    pub means: Vec<Vec<f64>>,
    pub p1_diag: Vec<SpdMatrix>,
    pub p2_cent: BlockMatrix,
    /// Cross-covariance between the stacked first and second components;
    /// `None` once decorrelated.
    pub p12_cent: Option<BlockMatrix>,
}

impl CentralizedSplit {
    pub fn n_estimates(&self) -> usize {
        self.means.len()
    }

    pub fn state_dim(&self) -> usize {
        self.means.first().map(Vec::len).unwrap_or(0)
    }

    fn validate(&self) -> Result<(usize, usize), FusionError> {
        let n = self.means.len();
        if n == 0 {
            return Err(FusionError::DimensionMismatch("no estimates".into()));
        }
        let d = self.means[0].len();
        if self.means.iter().any(|m| m.len() != d) {
            return Err(FusionError::DimensionMismatch(
                "inconsistent mean dims".into(),
            ));
        }
        if self.p1_diag.len() != n {
            return Err(FusionError::DimensionMismatch(format!(
                "{} first-component blocks for {} means",
                self.p1_diag.len(),
                n
            )));
        }
        if self.p1_diag.iter().any(|p| p.dim() != d) {
            return Err(FusionError::DimensionMismatch(
                "first-component block dims".into(),
            ));
        }
        if self.p2_cent.block_count() != n || self.p2_cent.dims().iter().any(|&b| b != d) {
            return Err(FusionError::DimensionMismatch(
                "second-component block structure".into(),
            ));
        }
        Ok((n, d))
    }
}

/// Result of a fusion: fused mean, conservative bound, per-input gains and
/// the ω actually used (after normalization/flooring).
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub mean: Vec<f64>,
    pub bound: SpdMatrix,
    pub gains: Vec<Matrix>,
    pub omega: Vec<f64>,
}

/// Validate ω against the unit simplex and normalize it exactly.
/// Entries in [−1e-12, 0) are clamped to zero.
fn checked_omega(omega: &[f64], n: usize) -> Result<Vec<f64>, FusionError> {
    if omega.len() != n {
        return Err(FusionError::DimensionMismatch(format!(
            "omega has {} entries for {} estimates",
            omega.len(),
            n
        )));
    }
    let mut w: Vec<f64> = omega.to_vec();
    for x in &mut w {
        if *x < 0.0 {
            if *x < -1e-12 {
                return Err(FusionError::DegenerateOmega(format!("negative weight {x}")));
            }
            *x = 0.0;
        }
    }
    let sum: f64 = w.iter().sum();
    if !(sum.is_finite() && (sum - 1.0).abs() <= 1e-9) {
        return Err(FusionError::DegenerateOmega(format!(
            "weights sum to {sum}"
        )));
    }
    for x in &mut w {
        *x /= sum;
    }
    Ok(w)
}

/// ω preprocessing for the ESCI rules: clamp entries below [`OMEGA_FLOOR`]
/// and renormalize, keeping the bound assembly finite at the boundary.
fn floored_omega(omega: &[f64], n: usize) -> Result<Vec<f64>, FusionError> {
    let mut w = checked_omega(omega, n)?;
    for x in &mut w {
        if *x < OMEGA_FLOOR {
            *x = OMEGA_FLOOR;
        }
    }
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    Ok(w)
}

fn common_dim(means: impl Iterator<Item = usize>) -> Result<usize, FusionError> {
    let mut dims = means;
    let d = dims
        .next()
        .ok_or_else(|| FusionError::DimensionMismatch("no estimates".into()))?;
    if dims.any(|x| x != d) {
        return Err(FusionError::DimensionMismatch(
            "estimates have mixed dims".into(),
        ));
    }
    Ok(d)
}

/// Assemble a fusion output from per-estimate information terms
/// `info_i = K̃_i` (pre-multiplication by the bound) and the total
/// information matrix.
fn output_from_information(
    total_info: &Matrix,
    pre_gains: Vec<Matrix>,
    means: Vec<&[f64]>,
    omega: Vec<f64>,
    singular_is_omega: bool,
) -> Result<FusionOutput, FusionError> {
    let bound = match spd_inverse_matrix(total_info) {
        Ok(b) => b,
        Err(MatError::NotPositiveDefinite(_)) if singular_is_omega => {
            return Err(FusionError::DegenerateOmega(
                "combined information matrix is singular".into(),
            ))
        }
        Err(e) => return Err(e.into()),
    };
    let d = bound.rows();
    let mut mean = vec![0.0; d];
    let mut gains = Vec::with_capacity(pre_gains.len());
    for (pre, m) in pre_gains.into_iter().zip(means) {
        let k = bound.mul(&pre);
        for (acc, v) in mean.iter_mut().zip(k.matvec(m)) {
            *acc += v;
        }
        gains.push(k);
    }
    Ok(FusionOutput {
        mean,
        bound: SpdMatrix::from_symmetric_unchecked(bound),
        gains,
        omega,
    })
}

/// Covariance Intersection. Zero weights drop the corresponding estimate's
/// information term (and zero its gain).
pub fn ci_fuse(estimates: &[PlainEstimate], omega: &[f64]) -> Result<FusionOutput, FusionError> {
    let d = common_dim(estimates.iter().map(|e| e.mean.len()))?;
    if estimates.iter().any(|e| e.cov.dim() != d) {
        return Err(FusionError::DimensionMismatch("covariance dims".into()));
    }
    let w = checked_omega(omega, estimates.len())?;
    let mut total_info = Matrix::zeros(d, d);
    let mut pre_gains = Vec::with_capacity(estimates.len());
    for (e, &wi) in estimates.iter().zip(&w) {
        if wi == 0.0 {
            pre_gains.push(Matrix::zeros(d, d));
            continue;
        }
        let info = spd_inverse_matrix(e.cov.as_matrix())?.scale(wi);
        total_info = total_info.add(&info);
        pre_gains.push(info);
    }
    output_from_information(
        &total_info,
        pre_gains,
        estimates.iter().map(|e| e.mean.as_slice()).collect(),
        w,
        true,
    )
}

/// Split Covariance Intersection: per-estimate term ω_i·(P⁽¹⁾ + ω_i·P⁽²⁾)⁻¹.
/// Zero weights drop the estimate.
pub fn sci_fuse(estimates: &[SciEstimate], omega: &[f64]) -> Result<FusionOutput, FusionError> {
    let d = common_dim(estimates.iter().map(|e| e.mean.len()))?;
    if estimates.iter().any(|e| e.p1.dim() != d || e.p2.dim() != d) {
        return Err(FusionError::DimensionMismatch(
            "component covariance dims".into(),
        ));
    }
    let w = checked_omega(omega, estimates.len())?;
    let mut total_info = Matrix::zeros(d, d);
    let mut pre_gains = Vec::with_capacity(estimates.len());
    for (e, &wi) in estimates.iter().zip(&w) {
        if wi == 0.0 {
            pre_gains.push(Matrix::zeros(d, d));
            continue;
        }
        let combined = e.p1.as_matrix().add(&e.p2.as_matrix().scale(wi));
        let info = spd_inverse_matrix(&combined)?.scale(wi);
        total_info = total_info.add(&info);
        pre_gains.push(info);
    }
    output_from_information(
        &total_info,
        pre_gains,
        estimates.iter().map(|e| e.mean.as_slice()).collect(),
        w,
        true,
    )
}

/// Re-split the error components so that the cross-covariance between the
/// stacked first and second components vanishes, using the linear transform
/// x̃⁽¹⁾ ← x̃⁽¹⁾ − T·x̃⁽²⁾, x̃⁽²⁾ ← (I+T)·x̃⁽²⁾ with T = P⁽¹,²⁾(P⁽²⁾)⁻¹.
/// Every diagonal block of the new first-component covariance only involves
/// known quantities, so the output satisfies the same knowledge model.
pub fn decorrelate_split(cs: &CentralizedSplit) -> Result<CentralizedSplit, FusionError> {
    let (n, d) = cs.validate()?;
    let Some(p12) = &cs.p12_cent else {
        return Ok(CentralizedSplit {
            p12_cent: None,
            ..cs.clone()
        });
    };
    let nd = n * d;
    if p12.total_dim() != nd {
        return Err(FusionError::DimensionMismatch(
            "cross-covariance dims".into(),
        ));
    }
    let p2 = cs.p2_cent.as_matrix();
    let p2_inv = spd_inverse_matrix(p2)?;
    let t = p12.as_matrix().mul(&p2_inv);
    // Diagonal blocks of the corrected first component:
    // P⁽¹⁾ − T·P⁽²,¹⁾ − P⁽¹,²⁾·Tᵀ + T·P⁽²⁾·Tᵀ.
    let a = t.mul(&p12.as_matrix().transpose());
    let b = t.mul(p2).mul(&t.transpose());
    let mut p1_diag = Vec::with_capacity(n);
    for i in 0..n {
        let a_ii = diag_block(&a, d, i);
        let correction = a_ii.add(&a_ii.transpose()).sub(&diag_block(&b, d, i));
        let new_p1 = cs.p1_diag[i].as_matrix().sub(&correction);
        p1_diag.push(SpdMatrix::new_psd(new_p1)?);
    }
    let i_plus_t = Matrix::identity(nd).add(&t);
    let new_p2 = i_plus_t.mul(p2).mul(&i_plus_t.transpose()).symmetrized();
    Ok(CentralizedSplit {
        means: cs.means.clone(),
        p1_diag,
        p2_cent: BlockMatrix::from_dense(cs.p2_cent.dims(), new_p2)?,
        p12_cent: None,
    })
}

/// General ESCI fusion on the stacked centralized covariance:
/// B_cent = diag(P_i⁽¹⁾/ω_i) + P̃_cent⁽²⁾, B_F = (Hᵀ B_cent⁻¹ H)⁻¹ and
/// K = B_F Hᵀ B_cent⁻¹ with H = 1_N ⊗ I_d. Requires a decorrelated split.
pub fn esci_fuse_general(
    cs: &CentralizedSplit,
    omega: &[f64],
) -> Result<FusionOutput, FusionError> {
    let (n, d) = cs.validate()?;
    if cs.p12_cent.is_some() {
        return Err(FusionError::NotDecorrelated);
    }
    let w = floored_omega(omega, n)?;
    let mut b_cent = cs.p2_cent.as_matrix().clone();
    for i in 0..n {
        let p1 = &cs.p1_diag[i];
        for r in 0..d {
            for c in 0..d {
                let v = b_cent.get(i * d + r, i * d + c) + p1.get(r, c) / w[i];
                b_cent.set(i * d + r, i * d + c, v);
            }
        }
    }
    let b_inv = spd_inverse_matrix(&b_cent)?;
    // Hᵀ B⁻¹ H sums every d×d block; Hᵀ B⁻¹ sums blocks per block-column.
    let mut total_info = Matrix::zeros(d, d);
    let mut pre_gains = vec![Matrix::zeros(d, d); n];
    for i in 0..n {
        for j in 0..n {
            let blk = sub_block(&b_inv, d, i, j);
            total_info = total_info.add(&blk);
            pre_gains[j] = pre_gains[j].add(&blk);
        }
    }
    output_from_information(
        &total_info.symmetrized(),
        pre_gains,
        cs.means.iter().map(|m| m.as_slice()).collect(),
        w,
        false,
    )
}

/// ESCI fusion for errors x̃_i = x̃_i⁽¹⁾ + x̃_i⁽ⁱⁿᵈ⁾ + M_i·w with a common
/// noise w of covariance `q`. Only inverts N+1 matrices of size d (plus the
/// noise dimension), making it much cheaper than [`esci_fuse_general`].
pub fn esci_fuse_common_noise(
    estimates: &[SplitEstimate],
    q: &SpdMatrix,
    omega: &[f64],
) -> Result<FusionOutput, FusionError> {
    let d = common_dim(estimates.iter().map(|e| e.mean.len()))?;
    let qdim = q.dim();
    for e in estimates {
        if e.p1.dim() != d || e.p_ind.dim() != d {
            return Err(FusionError::DimensionMismatch(
                "component covariance dims".into(),
            ));
        }
        if e.m.rows() != d || e.m.cols() != qdim {
            return Err(FusionError::DimensionMismatch(format!(
                "coupling matrix is {}x{}, expected {}x{}",
                e.m.rows(),
                e.m.cols(),
                d,
                qdim
            )));
        }
    }
    let w = floored_omega(omega, estimates.len())?;
    let mut s0 = spd_inverse_matrix(q.as_matrix())?;
    let mut s1 = Matrix::zeros(d, qdim);
    let mut sum_info = Matrix::zeros(d, d);
    let mut prime_invs = Vec::with_capacity(estimates.len());
    for (e, &wi) in estimates.iter().zip(&w) {
        let prime = e.p1.as_matrix().add(&e.p_ind.as_matrix().scale(wi));
        let pinv = spd_inverse_matrix(&prime)?;
        sum_info = sum_info.add(&pinv.scale(wi));
        s1 = s1.add(&pinv.mul(&e.m).scale(wi));
        s0 = s0.add(&e.m.transpose().mul(&pinv).mul(&e.m).scale(wi));
        prime_invs.push(pinv);
    }
    let s0_inv = spd_inverse_matrix(&s0.symmetrized())?;
    let c = s1.mul(&s0_inv);
    let total_info = sum_info.sub(&c.mul(&s1.transpose())).symmetrized();
    let eye = Matrix::identity(d);
    let mut pre_gains = Vec::with_capacity(estimates.len());
    for ((e, pinv), &wi) in estimates.iter().zip(&prime_invs).zip(&w) {
        pre_gains.push(eye.sub(&c.mul(&e.m.transpose())).mul(pinv).scale(wi));
    }
    output_from_information(
        &total_info,
        pre_gains,
        estimates.iter().map(|e| e.mean.as_slice()).collect(),
        w,
        false,
    )
}

/// ESCI fusion when every coupling matrix is the identity: fuse the
/// uncorrupted estimates with SCI, then add the common noise covariance to
/// the bound.
pub fn esci_fuse_additive_noise(
    estimates: &[SciEstimate],
    q: &SpdMatrix,
    omega: &[f64],
) -> Result<FusionOutput, FusionError> {
    let d = common_dim(estimates.iter().map(|e| e.mean.len()))?;
    if q.dim() != d {
        return Err(FusionError::DimensionMismatch(
            "noise covariance dim".into(),
        ));
    }
    if estimates.iter().any(|e| e.p1.dim() != d || e.p2.dim() != d) {
        return Err(FusionError::DimensionMismatch(
            "component covariance dims".into(),
        ));
    }
    let w = floored_omega(omega, estimates.len())?;
    let mut total_info = Matrix::zeros(d, d);
    let mut pre_gains = Vec::with_capacity(estimates.len());
    for (e, &wi) in estimates.iter().zip(&w) {
        let prime = e.p1.as_matrix().add(&e.p2.as_matrix().scale(wi));
        let info = spd_inverse_matrix(&prime)?.scale(wi);
        total_info = total_info.add(&info);
        pre_gains.push(info);
    }
    let mut out = output_from_information(
        &total_info,
        pre_gains,
        estimates.iter().map(|e| e.mean.as_slice()).collect(),
        w,
        false,
    )?;
    out.bound = SpdMatrix::from_symmetric_unchecked(out.bound.as_matrix().add(q.as_matrix()));
    Ok(out)
}

/// Exact fused covariance K·P_cent·Kᵀ for a given gain set and a fully known
/// centralized covariance. Symmetric by construction; PSD whenever `p_cent`
/// is PSD.
pub fn exact_fused_covariance(
    gains: &[Matrix],
    p_cent: &BlockMatrix,
) -> Result<SpdMatrix, FusionError> {
    if gains.len() != p_cent.block_count() {
        return Err(FusionError::DimensionMismatch(format!(
            "{} gains for {} blocks",
            gains.len(),
            p_cent.block_count()
        )));
    }
    let d = gains.first().map(Matrix::rows).unwrap_or(0);
    let mut k = Matrix::zeros(d, p_cent.total_dim());
    let mut col = 0;
    for (g, &bd) in gains.iter().zip(p_cent.dims()) {
        if g.rows() != d || g.cols() != bd {
            return Err(FusionError::DimensionMismatch(format!(
                "gain is {}x{}, expected {}x{}",
                g.rows(),
                g.cols(),
                d,
                bd
            )));
        }
        for r in 0..d {
            for c in 0..bd {
                k.set(r, col + c, g.get(r, c));
            }
        }
        col += bd;
    }
    let fused = k.mul(p_cent.as_matrix()).mul(&k.transpose());
    Ok(SpdMatrix::from_symmetric_unchecked(fused))
}

/// Draw a random admissible centralized covariance P_cent⁽¹⁾ + P̃_cent⁽²⁾:
/// P_cent⁽¹⁾ is PSD with its diagonal blocks equal to the given P_i⁽¹⁾.
///
/// Construction: a random Gram matrix S = G·Gᵀ is normalized so that every
/// diagonal block becomes the identity (a congruence, which preserves PSD),
/// then scaled back by the Cholesky factors of P_i⁽¹⁾ + 1e-12·I.
pub fn sample_admissible_centralized<R: Rng + ?Sized>(
    cs: &CentralizedSplit,
    rng: &mut R,
) -> Result<BlockMatrix, FusionError> {
    let (n, d) = cs.validate()?;
    let nd = n * d;
    let mut g = Matrix::zeros(nd, nd);
    for i in 0..nd {
        for j in 0..nd {
            g.set(i, j, rng.sample(StandardNormal));
        }
    }
    let gram = g.mul(&g.transpose());
    admissible_from_gram(cs, &gram)
}

/// Deterministic kernel of [`sample_admissible_centralized`]: build the
/// admissible covariance from an explicit PSD Gram matrix. With `gram = I`
/// the result is the fully uncorrelated member diag(P_i⁽¹⁾) + P̃_cent⁽²⁾.
pub fn admissible_from_gram(
    cs: &CentralizedSplit,
    gram: &Matrix,
) -> Result<BlockMatrix, FusionError> {
    let (n, d) = cs.validate()?;
    if cs.p12_cent.is_some() {
        return Err(FusionError::NotDecorrelated);
    }
    let nd = n * d;
    if gram.rows() != nd || gram.cols() != nd {
        return Err(FusionError::DimensionMismatch("Gram matrix dims".into()));
    }
    let inv_sqrts: Vec<Matrix> = (0..n)
        .map(|i| sym_inverse_sqrt(&diag_block(gram, d, i)))
        .collect();
    let reg = Matrix::identity(d).scale(1e-12);
    let chols: Vec<Matrix> = cs
        .p1_diag
        .iter()
        .map(|p| cholesky_matrix(&p.as_matrix().add(&reg)))
        .collect::<Result<_, _>>()?;
    let mut p1 = Matrix::zeros(nd, nd);
    for i in 0..n {
        for j in 0..n {
            let shat = inv_sqrts[i]
                .mul(&sub_block(gram, d, i, j))
                .mul(&inv_sqrts[j]);
            let blk = chols[i].mul(&shat).mul(&chols[j].transpose());
            for r in 0..d {
                for c in 0..d {
                    p1.set(i * d + r, j * d + c, blk.get(r, c));
                }
            }
        }
    }
    let total = p1.symmetrized().add(cs.p2_cent.as_matrix());
    Ok(BlockMatrix::from_dense(cs.p2_cent.dims(), total)?)
}

/// A fusion rule bound to its inputs, for weight selection and generic
/// dispatch.
#[derive(Debug, Clone)]
pub enum FusionProblem<'a> {
    Ci(&'a [PlainEstimate]),
    Sci(&'a [SciEstimate]),
    EsciGeneral(&'a CentralizedSplit),
    EsciCommonNoise {
        estimates: &'a [SplitEstimate],
        q: &'a SpdMatrix,
    },
    EsciAdditiveNoise {
        estimates: &'a [SciEstimate],
        q: &'a SpdMatrix,
    },
}

impl FusionProblem<'_> {
    pub fn n_estimates(&self) -> usize {
        match self {
            FusionProblem::Ci(e) => e.len(),
            FusionProblem::Sci(e) => e.len(),
            FusionProblem::EsciGeneral(cs) => cs.n_estimates(),
            FusionProblem::EsciCommonNoise { estimates, .. } => estimates.len(),
            FusionProblem::EsciAdditiveNoise { estimates, .. } => estimates.len(),
        }
    }

    pub fn fuse(&self, omega: &[f64]) -> Result<FusionOutput, FusionError> {
        match self {
            FusionProblem::Ci(e) => ci_fuse(e, omega),
            FusionProblem::Sci(e) => sci_fuse(e, omega),
            FusionProblem::EsciGeneral(cs) => esci_fuse_general(cs, omega),
            FusionProblem::EsciCommonNoise { estimates, q } => {
                esci_fuse_common_noise(estimates, q, omega)
            }
            FusionProblem::EsciAdditiveNoise { estimates, q } => {
                esci_fuse_additive_noise(estimates, q, omega)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlib::psd_margin;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_spd(v: f64) -> SpdMatrix {
        SpdMatrix::new_spd(Matrix::from_rows(&[[v]])).unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn rel_close(a: &Matrix, b: &Matrix, tol: f64) {
        let scale = a.frobenius_norm().max(b.frobenius_norm()).max(1e-300);
        assert!(
            a.sub(b).frobenius_norm() <= tol * scale,
            "matrices differ by {} (rel tol {tol})",
            a.sub(b).frobenius_norm() / scale
        );
    }

    #[test]
    fn ci_single_estimate_is_identity() {
        let e = PlainEstimate {
            mean: vec![1.0, -2.0],
            cov: SpdMatrix::new_spd(Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]])).unwrap(),
        };
        let out = ci_fuse(std::slice::from_ref(&e), &[1.0]).unwrap();
        rel_close(out.bound.as_matrix(), e.cov.as_matrix(), 1e-12);
        assert_close(out.mean[0], 1.0, 1e-12);
        assert_close(out.mean[1], -2.0, 1e-12);
    }

    #[test]
    fn ci_duplicates_cannot_improve() {
        let e = PlainEstimate {
            mean: vec![3.0],
            cov: scalar_spd(2.0),
        };
        let out = ci_fuse(&[e.clone(), e.clone()], &[0.5, 0.5]).unwrap();
        assert_close(out.bound.get(0, 0), 2.0, 1e-12);
        assert_close(out.mean[0], 3.0, 1e-12);
    }

    #[test]
    fn ci_scalar_two_estimates() {
        let e1 = PlainEstimate {
            mean: vec![0.0],
            cov: scalar_spd(1.0),
        };
        let e2 = PlainEstimate {
            mean: vec![2.0],
            cov: scalar_spd(1.0),
        };
        let out = ci_fuse(&[e1, e2], &[0.5, 0.5]).unwrap();
        assert_close(out.bound.get(0, 0), 1.0, 1e-12);
        assert_close(out.mean[0], 1.0, 1e-12);
    }

    #[test]
    fn ci_zero_weight_drops_estimate() {
        let e1 = PlainEstimate {
            mean: vec![0.0],
            cov: scalar_spd(1.0),
        };
        let e2 = PlainEstimate {
            mean: vec![5.0],
            cov: scalar_spd(4.0),
        };
        let out = ci_fuse(&[e1, e2], &[1.0, 0.0]).unwrap();
        assert_close(out.bound.get(0, 0), 1.0, 1e-12);
        assert_close(out.mean[0], 0.0, 1e-12);
        assert_eq!(out.gains[1], Matrix::zeros(1, 1));
    }

    #[test]
    fn ci_rejects_bad_omega() {
        let e = PlainEstimate {
            mean: vec![0.0],
            cov: scalar_spd(1.0),
        };
        assert!(matches!(
            ci_fuse(&[e.clone(), e.clone()], &[0.9, 0.3]),
            Err(FusionError::DegenerateOmega(_))
        ));
        assert!(matches!(
            ci_fuse(std::slice::from_ref(&e), &[1.0, 0.0]),
            Err(FusionError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sci_single_estimate_collapses_to_sum() {
        let e = SciEstimate {
            mean: vec![1.0],
            p1: scalar_spd(1.5),
            p2: scalar_spd(0.5),
        };
        let out = sci_fuse(std::slice::from_ref(&e), &[1.0]).unwrap();
        assert_close(out.bound.get(0, 0), 2.0, 1e-12);
        assert_close(out.mean[0], 1.0, 1e-12);
    }

    #[test]
    fn sci_with_zero_correlated_part_is_information_fusion() {
        let e1 = SciEstimate {
            mean: vec![0.0],
            p1: SpdMatrix::zeros(1),
            p2: scalar_spd(2.0),
        };
        let e2 = SciEstimate {
            mean: vec![1.0],
            p1: SpdMatrix::zeros(1),
            p2: scalar_spd(2.0),
        };
        // ω cancels: bound⁻¹ = Σ (P⁽²⁾)⁻¹ for any interior ω.
        for w in [[0.5, 0.5], [0.3, 0.7], [0.9, 0.1]] {
            let out = sci_fuse(&[e1.clone(), e2.clone()], &w).unwrap();
            assert_close(out.bound.get(0, 0), 1.0, 1e-12);
        }
    }

    #[test]
    fn sci_scalar_bound() {
        let e = SciEstimate {
            mean: vec![0.0],
            p1: scalar_spd(1.0),
            p2: scalar_spd(1.0),
        };
        let out = sci_fuse(&[e.clone(), e.clone()], &[0.5, 0.5]).unwrap();
        assert_close(out.bound.get(0, 0), 1.5, 1e-12);
    }

    fn scalar_split(p1: f64, p2: f64, p12: f64) -> CentralizedSplit {
        let mut p12_m = BlockMatrix::zeros(&[1]);
        p12_m.set_block(0, 0, &Matrix::from_rows(&[[p12]]));
        let mut p2_m = BlockMatrix::zeros(&[1]);
        p2_m.set_block(0, 0, &Matrix::from_rows(&[[p2]]));
        CentralizedSplit {
            means: vec![vec![0.0]],
            p1_diag: vec![scalar_spd(p1)],
            p2_cent: p2_m,
            p12_cent: Some(p12_m),
        }
    }

    #[test]
    fn decorrelate_zero_cross_is_identity() {
        let cs = scalar_split(1.0, 1.0, 0.0);
        let out = decorrelate_split(&cs).unwrap();
        assert!(out.p12_cent.is_none());
        assert_close(out.p1_diag[0].get(0, 0), 1.0, 1e-14);
        assert_close(out.p2_cent.as_matrix().get(0, 0), 1.0, 1e-14);
    }

    #[test]
    fn decorrelate_scalar_case() {
        // T = 0.5; new P⁽²⁾ = 1.5²·1 = 2.25;
        // new P⁽¹⁾ = 1 − 0.25 − 0.25 + 0.25 = 0.75 (brute-force covariance
        // propagation below confirms), and the total 0.75 + 2.25 = 3 matches
        // the original 1 + 1 + 2·0.5.
        let cs = scalar_split(1.0, 1.0, 0.5);
        let out = decorrelate_split(&cs).unwrap();
        assert_close(out.p2_cent.as_matrix().get(0, 0), 2.25, 1e-12);
        assert_close(out.p1_diag[0].get(0, 0), 0.75, 1e-12);
        // Brute force: Var(x1 − T x2) with Var(x1)=Var(x2)=1, Cov=0.5.
        let t = 0.5;
        let brute = 1.0 - 2.0 * t * 0.5 + t * t * 1.0;
        assert_close(out.p1_diag[0].get(0, 0), brute, 1e-12);
        // Cross-covariance of the new components is zero.
        let cross = (0.5 - t * 1.0) * (1.0 + t);
        assert_close(cross, 0.0, 1e-15);
        let total = out.p1_diag[0].get(0, 0) + out.p2_cent.as_matrix().get(0, 0);
        assert_close(total, 3.0, 1e-12);
    }

    #[test]
    fn decorrelate_preserves_total_covariance() {
        // Full ground-truth instance (2 agents, d = 2): propagate the
        // transform explicitly and compare against the operation's output.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (n, d) = (2, 2);
            let nd = n * d;
            let p1_full = random_spd(nd, &mut rng);
            let p2_full = random_spd(nd, &mut rng);
            let mut x = Matrix::zeros(nd, nd);
            for i in 0..nd {
                for j in 0..nd {
                    x.set(i, j, 0.3 * gauss(&mut rng));
                }
            }
            // A valid joint second moment for (x⁽¹⁾, x⁽²⁾) needs
            // [[P1, X],[Xᵀ, P2]] PSD; scale X down until it is.
            let mut p12 = x;
            loop {
                let mut joint = Matrix::zeros(2 * nd, 2 * nd);
                for i in 0..nd {
                    for j in 0..nd {
                        joint.set(i, j, p1_full.get(i, j));
                        joint.set(i, nd + j, p12.get(i, j));
                        joint.set(nd + i, j, p12.get(j, i));
                        joint.set(nd + i, nd + j, p2_full.get(i, j));
                    }
                }
                if psd_margin(&joint) > 1e-9 {
                    break;
                }
                p12 = p12.scale(0.5);
            }
            let cs = CentralizedSplit {
                means: vec![vec![0.0; d]; n],
                p1_diag: (0..n)
                    .map(|i| SpdMatrix::new_psd(diag_block(&p1_full, d, i)).unwrap())
                    .collect(),
                p2_cent: BlockMatrix::from_dense(&[d; 2], p2_full.clone()).unwrap(),
                p12_cent: Some(BlockMatrix::from_dense(&[d; 2], p12.clone()).unwrap()),
            };
            let out = decorrelate_split(&cs).unwrap();
            // Oracle: full covariance propagation of the linear transform.
            let t = p12.mul(&spd_inverse_matrix(&p2_full).unwrap());
            let new_p1_full = p1_full
                .sub(&t.mul(&p12.transpose()))
                .sub(&p12.mul(&t.transpose()))
                .add(&t.mul(&p2_full).mul(&t.transpose()));
            let i_plus_t = Matrix::identity(nd).add(&t);
            let new_p2_full = i_plus_t.mul(&p2_full).mul(&i_plus_t.transpose());
            let new_cross = p12.sub(&t.mul(&p2_full)).mul(&i_plus_t.transpose());
            assert!(new_cross.frobenius_norm() <= 1e-10 * p2_full.frobenius_norm().max(1.0));
            for i in 0..n {
                rel_close(
                    out.p1_diag[i].as_matrix(),
                    &diag_block(&new_p1_full, d, i),
                    1e-10,
                );
            }
            rel_close(out.p2_cent.as_matrix(), &new_p2_full.symmetrized(), 1e-10);
            // Total covariance of the summed error is preserved.
            let old_total = p1_full.add(&p2_full).add(&p12).add(&p12.transpose());
            let new_total = new_p1_full
                .add(&new_p2_full)
                .add(&new_cross)
                .add(&new_cross.transpose());
            rel_close(&old_total, &new_total, 1e-10);
        }
    }

    fn gauss<R: Rng>(rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn random_spd<R: Rng>(n: usize, rng: &mut R) -> Matrix {
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g.set(i, j, gauss(rng));
            }
        }
        g.mul(&g.transpose())
            .add(&Matrix::identity(n).scale(0.1 * n as f64))
    }

    fn random_decorrelated_split<R: Rng>(n: usize, d: usize, rng: &mut R) -> CentralizedSplit {
        let means = (0..n)
            .map(|_| (0..d).map(|_| gauss(rng)).collect())
            .collect();
        let p1_diag = (0..n)
            .map(|_| SpdMatrix::new_spd(random_spd(d, rng)).unwrap())
            .collect();
        let p2 = random_spd(n * d, rng);
        CentralizedSplit {
            means,
            p1_diag,
            p2_cent: BlockMatrix::from_dense(&vec![d; n], p2).unwrap(),
            p12_cent: None,
        }
    }

    #[test]
    fn esci_general_single_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cs = random_decorrelated_split(1, 2, &mut rng);
        let out = esci_fuse_general(&cs, &[1.0]).unwrap();
        let expect = cs.p1_diag[0].as_matrix().add(cs.p2_cent.as_matrix());
        rel_close(out.bound.as_matrix(), &expect, 1e-10);
        for (a, b) in out.mean.iter().zip(&cs.means[0]) {
            assert_close(*a, *b, 1e-10);
        }
    }

    #[test]
    fn esci_general_block_diagonal_matches_sci() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (n, d) = (3, 2);
            let mut cs = random_decorrelated_split(n, d, &mut rng);
            // Make the second component block diagonal.
            let mut p2 = BlockMatrix::zeros(&vec![d; n]);
            let mut sci = Vec::new();
            for i in 0..n {
                let blk = random_spd(d, &mut rng);
                p2.set_block(i, i, &blk);
                sci.push(SciEstimate {
                    mean: cs.means[i].clone(),
                    p1: cs.p1_diag[i].clone(),
                    p2: SpdMatrix::new_spd(blk).unwrap(),
                });
            }
            cs.p2_cent = p2;
            let omega = [0.25, 0.4, 0.35];
            let a = esci_fuse_general(&cs, &omega).unwrap();
            let b = sci_fuse(&sci, &omega).unwrap();
            rel_close(a.bound.as_matrix(), b.bound.as_matrix(), 1e-10);
            for (x, y) in a.mean.iter().zip(&b.mean) {
                assert_close(*x, *y, 1e-9);
            }
        }
    }

    fn random_split_estimates<R: Rng>(
        n: usize,
        d: usize,
        qdim: usize,
        rng: &mut R,
    ) -> (Vec<SplitEstimate>, SpdMatrix) {
        let ests = (0..n)
            .map(|_| {
                let mut m = Matrix::zeros(d, qdim);
                for i in 0..d {
                    for j in 0..qdim {
                        m.set(i, j, gauss(rng));
                    }
                }
                SplitEstimate {
                    mean: (0..d).map(|_| gauss(rng)).collect(),
                    p1: SpdMatrix::new_spd(random_spd(d, rng)).unwrap(),
                    p_ind: SpdMatrix::new_spd(random_spd(d, rng)).unwrap(),
                    m,
                }
            })
            .collect();
        (ests, SpdMatrix::new_spd(random_spd(qdim, rng)).unwrap())
    }

    /// Centralized second-component covariance implied by a common-noise
    /// split: blocks δ_ij·P_i⁽ⁱⁿᵈ⁾ + M_i·Q·M_jᵀ.
    fn centralized_of_split(ests: &[SplitEstimate], q: &SpdMatrix) -> CentralizedSplit {
        let n = ests.len();
        let d = ests[0].mean.len();
        let mut p2 = BlockMatrix::zeros(&vec![d; n]);
        for i in 0..n {
            for j in 0..n {
                let mut blk = ests[i].m.mul(q.as_matrix()).mul(&ests[j].m.transpose());
                if i == j {
                    blk = blk.add(ests[i].p_ind.as_matrix());
                }
                p2.set_block(i, j, &blk);
            }
        }
        CentralizedSplit {
            means: ests.iter().map(|e| e.mean.clone()).collect(),
            p1_diag: ests.iter().map(|e| e.p1.clone()).collect(),
            p2_cent: p2,
            p12_cent: None,
        }
    }

    #[test]
    fn esci_common_noise_matches_general_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let (ests, q) = random_split_estimates(3, 2, 2, &mut rng);
            let cs = centralized_of_split(&ests, &q);
            let omega = [0.2, 0.5, 0.3];
            let a = esci_fuse_common_noise(&ests, &q, &omega).unwrap();
            let b = esci_fuse_general(&cs, &omega).unwrap();
            rel_close(a.bound.as_matrix(), b.bound.as_matrix(), 1e-8);
            for (x, y) in a.mean.iter().zip(&b.mean) {
                assert_close(*x, *y, 1e-8 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn esci_common_noise_vanishing_q_matches_sci() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let (mut ests, _) = random_split_estimates(2, 2, 2, &mut rng);
        for e in &mut ests {
            e.m = Matrix::identity(2);
        }
        let q = SpdMatrix::scaled_identity(2, 1e-12).unwrap();
        let omega = [0.6, 0.4];
        let a = esci_fuse_common_noise(&ests, &q, &omega).unwrap();
        let sci: Vec<SciEstimate> = ests
            .iter()
            .map(|e| SciEstimate {
                mean: e.mean.clone(),
                p1: e.p1.clone(),
                p2: e.p_ind.clone(),
            })
            .collect();
        let b = sci_fuse(&sci, &omega).unwrap();
        rel_close(a.bound.as_matrix(), b.bound.as_matrix(), 1e-6);
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert_close(*x, *y, 1e-6 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn esci_common_noise_identity_couplings_match_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (mut ests, q) = random_split_estimates(3, 2, 2, &mut rng);
        for e in &mut ests {
            e.m = Matrix::identity(2);
        }
        let sci: Vec<SciEstimate> = ests
            .iter()
            .map(|e| SciEstimate {
                mean: e.mean.clone(),
                p1: e.p1.clone(),
                p2: e.p_ind.clone(),
            })
            .collect();
        let omega = [0.2, 0.3, 0.5];
        let a = esci_fuse_common_noise(&ests, &q, &omega).unwrap();
        let b = esci_fuse_additive_noise(&sci, &q, &omega).unwrap();
        rel_close(a.bound.as_matrix(), b.bound.as_matrix(), 1e-10);
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert_close(*x, *y, 1e-10 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn esci_additive_scalar_case() {
        let e = SciEstimate {
            mean: vec![0.0],
            p1: scalar_spd(1.0),
            p2: scalar_spd(1.0),
        };
        let q = scalar_spd(2.0);
        let out = esci_fuse_additive_noise(&[e.clone(), e.clone()], &q, &[0.5, 0.5]).unwrap();
        // B₀ = 1.5 (the SCI bound), B_F = B₀ + Q = 3.5.
        assert_close(out.bound.get(0, 0), 3.5, 1e-12);
    }

    #[test]
    fn esci_additive_zero_noise_is_sci() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let ests: Vec<SciEstimate> = (0..3)
            .map(|_| SciEstimate {
                mean: vec![gauss(&mut rng), gauss(&mut rng)],
                p1: SpdMatrix::new_spd(random_spd(2, &mut rng)).unwrap(),
                p2: SpdMatrix::new_spd(random_spd(2, &mut rng)).unwrap(),
            })
            .collect();
        let omega = [0.3, 0.3, 0.4];
        let a = esci_fuse_additive_noise(&ests, &SpdMatrix::zeros(2), &omega).unwrap();
        let b = sci_fuse(&ests, &omega).unwrap();
        rel_close(a.bound.as_matrix(), b.bound.as_matrix(), 1e-12);
        // Structural identity: additive bound = SCI bound + Q entrywise.
        let q = SpdMatrix::new_spd(random_spd(2, &mut rng)).unwrap();
        let c = esci_fuse_additive_noise(&ests, &q, &omega).unwrap();
        rel_close(
            c.bound.as_matrix(),
            &b.bound.as_matrix().add(q.as_matrix()),
            1e-12,
        );
    }

    #[test]
    fn esci_floors_boundary_omega() {
        let e = SciEstimate {
            mean: vec![0.0],
            p1: scalar_spd(1.0),
            p2: scalar_spd(1.0),
        };
        let q = scalar_spd(0.5);
        let out = esci_fuse_additive_noise(&[e.clone(), e.clone()], &q, &[1.0, 0.0]).unwrap();
        assert!(out.bound.get(0, 0).is_finite());
        assert!(out.omega[1] > 0.0 && out.omega[1] <= 2.0 * OMEGA_FLOOR);
        // General form divides by ω_i and must also stay finite.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cs = random_decorrelated_split(2, 1, &mut rng);
        let out = esci_fuse_general(&cs, &[0.0, 1.0]).unwrap();
        assert!(out.bound.get(0, 0).is_finite());
    }

    #[test]
    fn general_form_requires_a_decorrelated_split() {
        let mut cs = scalar_split(1.0, 1.0, 0.5);
        assert!(matches!(
            esci_fuse_general(&cs, &[1.0]),
            Err(FusionError::NotDecorrelated)
        ));
        assert!(matches!(
            admissible_from_gram(&cs, &Matrix::identity(1)),
            Err(FusionError::NotDecorrelated)
        ));
        cs = decorrelate_split(&cs).unwrap();
        assert!(esci_fuse_general(&cs, &[1.0]).is_ok());
    }

    #[test]
    fn exact_fused_covariance_selects_block() {
        let p =
            BlockMatrix::from_dense(&[1, 1], Matrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]])).unwrap();
        let k = [Matrix::identity(1), Matrix::zeros(1, 1)];
        let out = exact_fused_covariance(&k, &p).unwrap();
        assert_close(out.get(0, 0), 2.0, 1e-15);
    }

    #[test]
    fn exact_fused_covariance_half_gains() {
        let p = BlockMatrix::from_dense(&[2, 2], Matrix::identity(4)).unwrap();
        let k = [
            Matrix::identity(2).scale(0.5),
            Matrix::identity(2).scale(0.5),
        ];
        let out = exact_fused_covariance(&k, &p).unwrap();
        rel_close(out.as_matrix(), &Matrix::identity(2).scale(0.5), 1e-15);
    }

    #[test]
    fn ci_is_loose_by_factor_two_on_independent_duplicates() {
        let e = PlainEstimate {
            mean: vec![0.0],
            cov: scalar_spd(1.0),
        };
        let out = ci_fuse(&[e.clone(), e.clone()], &[0.5, 0.5]).unwrap();
        let p_cent = BlockMatrix::from_dense(&[1, 1], Matrix::identity(2)).unwrap();
        let exact = exact_fused_covariance(&out.gains, &p_cent).unwrap();
        assert_close(exact.get(0, 0), 0.5 * out.bound.get(0, 0), 1e-12);
    }

    #[test]
    fn admissible_from_identity_gram_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let cs = random_decorrelated_split(3, 2, &mut rng);
        let nd = 6;
        let sample = admissible_from_gram(&cs, &Matrix::identity(nd)).unwrap();
        let p1_part = sample.as_matrix().sub(cs.p2_cent.as_matrix());
        for i in 0..3 {
            for j in 0..3 {
                let blk = sub_block(&p1_part, 2, i, j);
                if i == j {
                    rel_close(&blk, cs.p1_diag[i].as_matrix(), 1e-10);
                } else {
                    assert!(blk.frobenius_norm() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn sampled_admissible_is_psd_with_fixed_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let cs = random_decorrelated_split(3, 2, &mut rng);
        for _ in 0..25 {
            let sample = sample_admissible_centralized(&cs, &mut rng).unwrap();
            assert!(psd_margin(sample.as_matrix()) >= -1e-9 * (1.0 + sample.as_matrix().trace()));
            let p1_part = sample.as_matrix().sub(cs.p2_cent.as_matrix());
            for i in 0..3 {
                let blk = diag_block(&p1_part, 2, i);
                rel_close(&blk, cs.p1_diag[i].as_matrix(), 1e-10);
            }
        }
    }

    #[test]
    fn esci_conservative_over_sampled_admissible_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..3 {
            let cs = random_decorrelated_split(3, 2, &mut rng);
            let out = esci_fuse_general(&cs, &[0.3, 0.5, 0.2]).unwrap();
            for _ in 0..50 {
                let p_cent = sample_admissible_centralized(&cs, &mut rng).unwrap();
                let exact = exact_fused_covariance(&out.gains, &p_cent).unwrap();
                let slack = out.bound.as_matrix().sub(exact.as_matrix());
                assert!(
                    psd_margin(&slack) >= -1e-8 * out.bound.trace(),
                    "conservativeness violated: margin {}",
                    psd_margin(&slack)
                );
            }
        }
    }

    #[test]
    fn unbiasedness_equal_means_are_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let x = vec![1.5, -0.5];
        let ests: Vec<PlainEstimate> = (0..3)
            .map(|_| PlainEstimate {
                mean: x.clone(),
                cov: SpdMatrix::new_spd(random_spd(2, &mut rng)).unwrap(),
            })
            .collect();
        let out = ci_fuse(&ests, &[0.2, 0.5, 0.3]).unwrap();
        for (a, b) in out.mean.iter().zip(&x) {
            assert_close(*a, *b, 1e-10);
        }
        // Gains sum to the identity.
        let mut sum = Matrix::zeros(2, 2);
        for g in &out.gains {
            sum = sum.add(g);
        }
        assert!(sum.sub(&Matrix::identity(2)).frobenius_norm() <= 1e-10);
    }
}
