//! Spectral normalization of bounded SPD tensors.
//!
//! Given bounds `Y_R ⪯ Y ⪯ Y_V` with gap factorization `Y_V − Y_R = L Lᵀ`,
//! the congruence `Ỹ = L⁺ (Y_V − Y) L⁺ᵀ` maps every admissible `Y` to a
//! symmetric matrix with spectrum in `[0, 1]`. Conversely any
//! `Ỹ = Q Λ Qᵀ` with `Q` orthogonal and `Λ ∈ [0,1]^r` maps back to an
//! admissible `Y = Y_V − L Ỹ Lᵀ`. A model that emits `(ξ_q, ξ_λ)` in the
//! unit cube therefore cannot produce a tensor outside the bounds.

use crate::bounds::BoundsPair;
use crate::error::{Error, Result};
use crate::orth::{param_to_q, q_to_param};
use crate::spd::{eig_sym, loewner_leq, loewner_margin, SymMat};

/// Eigenvalue slack accepted on normalized targets before clipping.
pub const SPECTRUM_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedTarget {
    pub y_tilde: SymMat,
    pub xi_lambda: Vec<f64>,
    pub xi_q: Vec<f64>,
}

impl NormalizedTarget {
    pub fn rank(&self) -> usize {
        self.y_tilde.dim()
    }

    /// `Q(ξ_q) diag(ξ_λ) Q(ξ_q)ᵀ`.
    pub fn reconstruct(&self) -> Result<SymMat> {
        compose(&self.xi_q, &self.xi_lambda)
    }
}

/// `Q(ξ_q) diag(ξ_λ) Q(ξ_q)ᵀ` for parameters in the unit cube.
pub fn compose(xi_q: &[f64], xi_lambda: &[f64]) -> Result<SymMat> {
    let r = xi_lambda.len();
    let (q, _) = param_to_q(xi_q, r)?;
    Ok(SymMat::from_diag(xi_lambda).congruence(&q))
}

pub fn normalize(y: &SymMat, b: &BoundsPair) -> Result<NormalizedTarget> {
    if y.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "tensor of dim {} against bounds of dim {}",
            y.dim(),
            b.dim()
        )));
    }
    for (lo, hi, which) in [(&b.y_reuss, y, "below Reuss"), (y, &b.y_voigt, "above Voigt")] {
        if !loewner_leq(lo, hi, SPECTRUM_TOL)? {
            return Err(Error::BoundViolation {
                eigenvalue: loewner_margin(lo, hi)?,
                context: format!("tensor lies {which} bound"),
            });
        }
    }
    if b.rank == 0 {
        return Ok(NormalizedTarget {
            y_tilde: SymMat::zeros(0),
            xi_lambda: Vec::new(),
            xi_q: Vec::new(),
        });
    }

    let y_tilde = (&b.y_voigt - y).congruence(&b.l_pinv);
    let eig = eig_sym(&y_tilde)?;
    for &l in &eig.values {
        if !(-SPECTRUM_TOL..=1.0 + SPECTRUM_TOL).contains(&l) {
            return Err(Error::BoundViolation {
                eigenvalue: l,
                context: "normalized spectrum outside [0, 1]".into(),
            });
        }
    }
    let xi_lambda: Vec<f64> = eig.values.iter().map(|l| l.clamp(0.0, 1.0)).collect();
    let xi_q = q_to_param(&eig.vectors)?;
    let y_tilde = compose(&xi_q, &xi_lambda)?;
    Ok(NormalizedTarget {
        y_tilde,
        xi_lambda,
        xi_q,
    })
}

/// `Y_V − L Ỹ Lᵀ`.
pub fn denormalize(y_tilde: &SymMat, b: &BoundsPair) -> Result<SymMat> {
    if y_tilde.dim() != b.rank {
        return Err(Error::invalid(format!(
            "normalized tensor of dim {} against bounds of rank {}",
            y_tilde.dim(),
            b.rank
        )));
    }
    if b.rank == 0 {
        return Ok(b.y_voigt.clone());
    }
    let eig = eig_sym(y_tilde)?;
    if let Some(&l) = eig
        .values
        .iter()
        .find(|l| !(-SPECTRUM_TOL..=1.0 + SPECTRUM_TOL).contains(*l))
    {
        return Err(Error::BoundViolation {
            eigenvalue: l,
            context: "normalized spectrum outside [0, 1]".into(),
        });
    }
    Ok(&b.y_voigt - &y_tilde.congruence(&b.l_factor))
}

pub fn denormalize_target(nt: &NormalizedTarget, b: &BoundsPair) -> Result<SymMat> {
    denormalize(&nt.y_tilde, b)
}

/// `‖Ỹ − Ŷ‖²_F / m`, the training objective.
pub fn phi_squared(y_tilde_true: &SymMat, y_tilde_pred: &SymMat) -> Result<f64> {
    let d = crate::spd::frob_dist(y_tilde_true, y_tilde_pred)?;
    let m = y_tilde_true.dim();
    Ok(if m == 0 { 0.0 } else { d * d / m as f64 })
}

/// `φ = ‖Ỹ − Ŷ‖_F / √m`: error relative to the admissible range.
pub fn phi_loss(y_tilde_true: &SymMat, y_tilde_pred: &SymMat) -> Result<f64> {
    Ok(phi_squared(y_tilde_true, y_tilde_pred)?.sqrt())
}

/// `‖Ŷ − Y‖_F / ‖Y‖_F`.
pub fn rel_frob_error(y_true: &SymMat, y_pred: &SymMat) -> Result<f64> {
    let denom = y_true.frob_norm();
    if denom == 0.0 {
        return Err(Error::invalid("relative error against a zero tensor"));
    }
    Ok(crate::spd::frob_dist(y_true, y_pred)? / denom)
}

/// Normalizes any tensor (admissible or not) without range checks.
///
/// Used to score unconstrained predictions on the normalized scale.
pub fn normalize_unchecked(y: &SymMat, b: &BoundsPair) -> SymMat {
    if b.rank == 0 {
        return SymMat::zeros(0);
    }
    (&b.y_voigt - y).congruence(&b.l_pinv)
}
