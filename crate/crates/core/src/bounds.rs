//! Voigt and Reuss bounds for piecewise-constant multiphase media.
//!
//! For phases with volume fractions `cᵢ` and SPD property matrices `Yᵢ` the
//! effective property satisfies `Y_R ⪯ Ȳ ⪯ Y_V` with
//! `Y_V = Σ cᵢ Yᵢ` and `Y_R = (Σ cᵢ Yᵢ⁻¹)⁻¹`. `make_bounds` also factors
//! the gap `Y_V − Y_R = L Lᵀ`, which is what the spectral normalization in
//! [`crate::specnorm`] consumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{eig_sym, inv_spd, Matrix, SymMat};

/// Default relative truncation for the bound-gap spectrum.
pub const DEFAULT_EPS_REL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSystem {
    fractions: Vec<f64>,
    properties: Vec<SymMat>,
}

impl PhaseSystem {
    pub fn new(fractions: Vec<f64>, properties: Vec<SymMat>) -> Result<Self> {
        if fractions.is_empty() || fractions.len() != properties.len() {
            return Err(Error::invalid(format!(
                "need one property matrix per phase ({} fractions, {} properties)",
                fractions.len(),
                properties.len()
            )));
        }
        if let Some(c) = fractions.iter().find(|&&c| !(c > 0.0 && c <= 1.0)) {
            return Err(Error::invalid(format!("volume fraction {c} outside (0, 1]")));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("volume fractions sum to {total}, not 1")));
        }
        let m = properties[0].dim();
        for p in &properties {
            if p.dim() != m {
                return Err(Error::invalid("property matrices of mixed dimension"));
            }
            let lmin = p.min_eigenvalue()?;
            if lmin <= 0.0 {
                return Err(Error::invalid(format!(
                    "property matrix is not positive definite (min eigenvalue {lmin:.3e})"
                )));
            }
        }
        Ok(Self {
            fractions,
            properties,
        })
    }

    /// Two isotropic phases in `dim` dimensions, the inclusion occupying
    /// `inclusion_fraction`. Empty phases are dropped.
    pub fn isotropic_two_phase(
        dim: usize,
        inclusion_fraction: f64,
        kappa_matrix: f64,
        kappa_inclusion: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&inclusion_fraction) {
            return Err(Error::invalid(format!(
                "inclusion fraction {inclusion_fraction} outside [0, 1]"
            )));
        }
        let mut fractions = Vec::new();
        let mut properties = Vec::new();
        for (c, k) in [
            (1.0 - inclusion_fraction, kappa_matrix),
            (inclusion_fraction, kappa_inclusion),
        ] {
            if c > 0.0 {
                fractions.push(c);
                properties.push(SymMat::scaled_identity(dim, k));
            }
        }
        Self::new(fractions, properties)
    }

    pub fn dim(&self) -> usize {
        self.properties[0].dim()
    }

    pub fn n_phases(&self) -> usize {
        self.fractions.len()
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn properties(&self) -> &[SymMat] {
        &self.properties
    }
}

/// Fraction-weighted arithmetic mean of the phase matrices.
pub fn voigt_bound(ps: &PhaseSystem) -> SymMat {
    ps.fractions
        .iter()
        .zip(&ps.properties)
        .fold(SymMat::zeros(ps.dim()), |acc, (&c, p)| &acc + &p.scale(c))
}

/// Inverse of the fraction-weighted mean of inverses.
pub fn reuss_bound(ps: &PhaseSystem) -> Result<SymMat> {
    let mut acc = SymMat::zeros(ps.dim());
    for (&c, p) in ps.fractions.iter().zip(&ps.properties) {
        acc = &acc + &inv_spd(p)?.scale(c);
    }
    inv_spd(&acc)
}

pub fn hill_average(ps: &PhaseSystem) -> Result<SymMat> {
    Ok((&voigt_bound(ps) + &reuss_bound(ps)?).scale(0.5))
}

/// Bounds together with the factorization `Y_V − Y_R = L Lᵀ` and `L⁺`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsPair {
    pub y_voigt: SymMat,
    pub y_reuss: SymMat,
    /// `m × r`, columns `qₖ √λₖ` of the retained gap eigenpairs.
    pub l_factor: Matrix,
    /// `r × m`, rows `qₖᵀ / √λₖ`.
    pub l_pinv: Matrix,
    pub rank: usize,
}

impl BoundsPair {
    /// Factors the gap between given upper and lower bounds.
    pub fn from_bounds(y_voigt: SymMat, y_reuss: SymMat, eps_rel: f64) -> Result<Self> {
        if y_voigt.dim() != y_reuss.dim() {
            return Err(Error::invalid("bounds of mixed dimension"));
        }
        let m = y_voigt.dim();
        let gap = &y_voigt - &y_reuss;
        let eig = eig_sym(&gap)?;
        let lmax = eig.values.first().copied().unwrap_or(0.0).max(0.0);
        let cutoff = eps_rel * lmax;
        if let Some(&lmin) = eig.values.last() {
            if lmin < -cutoff {
                return Err(Error::BoundViolation {
                    eigenvalue: lmin,
                    context: "Voigt minus Reuss is not positive semi-definite".into(),
                });
            }
        }
        let kept: Vec<usize> = (0..m)
            .filter(|&k| eig.values[k] > cutoff && eig.values[k] > 0.0)
            .collect();
        let r = kept.len();
        let q = &eig.vectors;
        let l_factor = Matrix::from_fn(m, r, |i, c| q[(i, kept[c])] * eig.values[kept[c]].sqrt());
        let l_pinv = Matrix::from_fn(r, m, |c, j| q[(j, kept[c])] / eig.values[kept[c]].sqrt());
        Ok(Self {
            y_voigt,
            y_reuss,
            l_factor,
            l_pinv,
            rank: r,
        })
    }

    pub fn dim(&self) -> usize {
        self.y_voigt.dim()
    }

    pub fn gap(&self) -> SymMat {
        &self.y_voigt - &self.y_reuss
    }

    pub fn hill(&self) -> SymMat {
        (&self.y_voigt + &self.y_reuss).scale(0.5)
    }
}

pub fn make_bounds(ps: &PhaseSystem, eps_rel: f64) -> Result<BoundsPair> {
    BoundsPair::from_bounds(voigt_bound(ps), reuss_bound(ps)?, eps_rel)
}
