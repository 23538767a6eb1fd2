//! Compact geometric descriptors of binary microstructures.
//!
//! Layout of [`SCHEMA_ID`], with `d` the grid dimension:
//!
//! | block | entries | content |
//! |-------|---------|---------|
//! | volume fraction | 1 | inclusion fraction |
//! | two-point correlation | `6d` | `S₂(h eₐ)` for `h ∈ {1,2,4,8,16,32}`, axis-major |
//! | band fraction | `d` | fraction of lines along axis `a` that are pure matrix |
//! | directional variance | `d` | variance of the inclusion fraction of lines along axis `a` |
//! | interface density | 1 | phase-boundary faces per voxel |
//!
//! This gives 18 values in 2D and 26 in 3D. Lags wrap periodically.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::microgen::VoxelGrid;

pub const SCHEMA_ID: &str = "vrnet-compact-v1";
pub const S2_LAGS: [usize; 6] = [1, 2, 4, 8, 16, 32];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: String,
}

pub fn feature_len(dim: usize) -> usize {
    2 + dim * (S2_LAGS.len() + 2)
}

pub fn feature_names(dim: usize) -> Vec<String> {
    let axes = ["x", "y", "z"];
    let mut names = vec!["vf".to_string()];
    for ax in &axes[..dim] {
        for h in S2_LAGS {
            names.push(format!("s2_{ax}_{h}"));
        }
    }
    names.extend(axes[..dim].iter().map(|ax| format!("band_{ax}")));
    names.extend(axes[..dim].iter().map(|ax| format!("linevar_{ax}")));
    names.push("interface".into());
    names
}

/// Periodic autocorrelation `S₂(r) = ⟨I(x) I(x + r)⟩` of the inclusion indicator.
pub fn two_point_correlation(g: &VoxelGrid) -> Vec<f64> {
    let n = g.len() as f64;
    let mut buf: Vec<Complex64> = g
        .to_field(0.0, 1.0)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    let mut fft = FftNd::new(g.shape());
    fft.forward(&mut buf);
    for v in &mut buf {
        *v = Complex64::new(v.norm_sqr(), 0.0);
    }
    fft.inverse(&mut buf);
    buf.iter().map(|v| v.re / (n * n)).collect()
}

/// For every line parallel to `axis`, the number of inclusion voxels on it.
fn line_counts(g: &VoxelGrid, axis: usize) -> Vec<usize> {
    let shape = g.shape();
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer = g.len() / (n * stride);
    let mut counts = Vec::with_capacity(outer * stride);
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * n * stride + inner;
            counts.push((0..n).filter(|&k| g.get_linear(base + k * stride)).count());
        }
    }
    counts
}

fn interface_density(g: &VoxelGrid) -> f64 {
    let shape = g.shape();
    let mut faces = 0usize;
    let mut idx = vec![0i64; shape.len()];
    for lin in 0..g.len() {
        let here = g.get_linear(lin);
        for a in 0..shape.len() {
            idx[a] += 1;
            if g.get_linear(g.wrapped_index(&idx)) != here {
                faces += 1;
            }
            idx[a] -= 1;
        }
        for a in (0..idx.len()).rev() {
            idx[a] += 1;
            if (idx[a] as usize) < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    faces as f64 / g.len() as f64
}

pub fn extract_features(g: &VoxelGrid) -> Result<FeatureVector> {
    let ones = g.count_ones();
    if ones == 0 || ones == g.len() {
        return Err(Error::invalid("descriptors need both phases present"));
    }
    let d = g.dim();
    let vf = g.volume_fraction();
    let s2 = two_point_correlation(g);
    assert!((s2[0] - vf).abs() < 1e-9, "S2(0) = {} but vf = {vf}", s2[0]);

    let mut values = Vec::with_capacity(feature_len(d));
    values.push(vf);
    for a in 0..d {
        let stride: usize = g.shape()[a + 1..].iter().product();
        let n = g.shape()[a];
        for h in S2_LAGS {
            values.push(s2[(h % n) * stride]);
        }
    }
    let mut variances = Vec::with_capacity(d);
    for a in 0..d {
        let counts = line_counts(g, a);
        let n = g.shape()[a] as f64;
        let lines = counts.len() as f64;
        values.push(counts.iter().filter(|&&c| c == 0).count() as f64 / lines);
        let fr: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let mean = fr.iter().sum::<f64>() / lines;
        variances.push(fr.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / lines);
    }
    values.extend(variances);
    values.push(interface_density(g));
    debug_assert_eq!(values.len(), feature_len(d));
    Ok(FeatureVector {
        values,
        schema: SCHEMA_ID.to_string(),
    })
}

/// Geometric features followed by `log₁₀ R`.
pub fn assemble_input(fv: &FeatureVector, contrast: f64) -> Result<Vec<f64>> {
    if !(contrast.is_finite() && contrast > 0.0) {
        return Err(Error::invalid(format!("contrast {contrast} must be positive and finite")));
    }
    let mut x = fv.values.clone();
    x.push(contrast.log10());
    Ok(x)
}
