//! Parameterization of rotations by points of the unit cube.
//!
//! A vector `ξ ∈ [0,1]^{m(m−1)/2}` is mapped affinely to generator entries
//! `aₖ = π(2ξₖ − 1)`, placed in the strictly lower triangle of a
//! skew-symmetric `S` (row order: `(1,0), (2,0), (2,1), (3,0), …`), and
//! `Q = exp(S)`. For `m = 2` this is the rotation by `a₀`; for `m = 3` the
//! Rodrigues formula with axis-angle vector `ω = (a₂, −a₁, a₀)`.
//!
//! Since `QΛQᵀ` is unchanged by flipping the sign of any column of `Q`, the
//! inverse map may pick whichever sign pattern yields a proper rotation whose
//! rotation angles stay furthest from `π`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spd::{eig_sym, Matrix, SymMat};

pub fn n_angles(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

fn lower_pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..m).flat_map(|i| (0..i).map(move |j| (i, j)))
}

pub fn angles_from_xi(xi: &[f64]) -> Vec<f64> {
    xi.iter().map(|x| PI * (2.0 * x - 1.0)).collect()
}

pub fn skew_from_angles(a: &[f64], m: usize) -> Matrix {
    let mut s = Matrix::zeros(m, m);
    for ((i, j), &v) in lower_pairs(m).zip(a) {
        s[(i, j)] = v;
        s[(j, i)] = -v;
    }
    s
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(a: &Matrix) -> Matrix {
    let n = a.rows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm1 * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a.scale(scale);
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    for k in 1..=18 {
        term = term.matmul(&x).scale(1.0 / k as f64);
        sum = &sum + &term;
        if term.frob_norm() < 1e-18 * sum.frob_norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    sum
}

/// Rodrigues rotation for `[ω]ₓ`.
fn rodrigues(w: [f64; 3]) -> Matrix {
    let theta2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-4 {
        // series of sin(θ)/θ and (1 − cos θ)/θ²
        (1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0, 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = Matrix::from_rows(&[&[0.0, -w[2], w[1]], &[w[2], 0.0, -w[0]], &[-w[1], w[0], 0.0]]);
    let k2 = k.matmul(&k);
    &(&Matrix::identity(3) + &k.scale(a)) + &k2.scale(b)
}

/// Builds `Q(ξ)`. The flag reports whether any `ξₖ` had to be clipped into
/// `[0, 1]`, which points at an activation bug upstream.
pub fn param_to_q(xi: &[f64], m: usize) -> Result<(Matrix, bool)> {
    if xi.len() != n_angles(m) {
        return Err(Error::invalid(format!(
            "rotation of dim {m} takes {} parameters, got {}",
            n_angles(m),
            xi.len()
        )));
    }
    let clipped = xi.iter().any(|x| !(0.0..=1.0).contains(x));
    let xi: Vec<f64> = xi.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    let a = angles_from_xi(&xi);
    let q = match m {
        0 | 1 => Matrix::identity(m),
        2 => {
            let (s, c) = a[0].sin_cos();
            Matrix::from_rows(&[&[c, -s], &[s, c]])
        }
        3 => rodrigues([a[2], -a[1], a[0]]),
        _ => expm(&skew_from_angles(&a, m)),
    };
    Ok((q, clipped))
}

/// Gradient of a scalar loss with respect to `ξ`, given `∂L/∂Q`.
///
/// Uses the adjoint of the Fréchet derivative of the exponential,
/// `∂L/∂S = L_exp(Sᵀ, ∂L/∂Q)`, evaluated from the upper-right block of
/// `exp([[Sᵀ, G], [0, Sᵀ]])`.
pub fn param_to_q_backward(xi: &[f64], m: usize, grad_q: &Matrix) -> Vec<f64> {
    let a = angles_from_xi(xi);
    let dadxi = 2.0 * PI;
    match m {
        0 | 1 => Vec::new(),
        2 => {
            let (s, c) = a[0].sin_cos();
            let g = grad_q;
            let d = -s * g[(0, 0)] - c * g[(0, 1)] + c * g[(1, 0)] - s * g[(1, 1)];
            vec![d * dadxi]
        }
        _ => {
            let st = skew_from_angles(&a, m).transpose();
            let mut block = Matrix::zeros(2 * m, 2 * m);
            for i in 0..m {
                for j in 0..m {
                    block[(i, j)] = st[(i, j)];
                    block[(m + i, m + j)] = st[(i, j)];
                    block[(i, m + j)] = grad_q[(i, j)];
                }
            }
            let e = expm(&block);
            lower_pairs(m)
                .map(|(i, j)| (e[(i, m + j)] - e[(j, m + i)]) * dadxi)
                .collect()
        }
    }
}

/// Proper-rotation representative of `q` up to column sign flips.
///
/// Among all sign patterns with `det = +1`, picks the one maximizing the
/// smallest eigenvalue of the symmetric part, i.e. keeping every rotation
/// angle as far from `π` as possible. Ties go to the first pattern in
/// binary order.
pub fn rotation_representative(q: &Matrix) -> Result<Matrix> {
    let m = q.rows();
    let det = q.det();
    let flip = |pattern: u32| {
        Matrix::from_fn(m, m, |i, j| if pattern >> j & 1 == 1 { -q[(i, j)] } else { q[(i, j)] })
    };
    let proper = |pattern: u32| {
        let parity = if pattern.count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        parity * det > 0.0
    };
    match m {
        0 | 1 => Ok(Matrix::identity(m)),
        2 => Ok(if det > 0.0 { q.clone() } else { flip(0b10) }),
        _ => {
            let mut best: Option<(f64, Matrix)> = None;
            for pattern in 0..(1u32 << m) {
                if !proper(pattern) {
                    continue;
                }
                let cand = flip(pattern);
                let score = SymMat::from_dense(&cand).min_eigenvalue()?;
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, cand));
                }
            }
            Ok(best.expect("at least one proper sign pattern").1)
        }
    }
}

/// Principal logarithm of a proper rotation, as a skew-symmetric matrix.
fn log_rotation(q: &Matrix) -> Result<Matrix> {
    let m = q.rows();
    let sym = SymMat::from_dense(q);
    let skew = (q - &q.transpose()).scale(0.5);
    let eig = eig_sym(&sym)?;
    let v = &eig.vectors;
    // θ/sin θ as a function of c = cos θ
    let ratio = |c: f64| {
        let c = c.clamp(-1.0, 1.0);
        let d = 1.0 - c;
        if d < 1e-6 {
            1.0 + d / 3.0 + 2.0 * d * d / 15.0
        } else {
            c.acos() / (1.0 - c * c).sqrt()
        }
    };
    const HALF_TURN: f64 = -1.0 + 1e-9;
    let weights: Vec<f64> = eig
        .values
        .iter()
        .map(|&c| if c <= HALF_TURN { 0.0 } else { ratio(c) })
        .collect();
    let g = eig.reconstruct_with(&weights).to_dense();
    let gk = g.matmul(&skew);
    let mut s = (&gk - &gk.transpose()).scale(0.5);

    // Planes rotated by exactly π carry no skew part; any complex structure
    // on them exponentiates to −I.
    let half: Vec<usize> = (0..m).filter(|&k| eig.values[k] <= HALF_TURN).collect();
    for pair in half.chunks(2) {
        if let [p, r] = *pair {
            for i in 0..m {
                for j in 0..m {
                    s[(i, j)] += PI * (v[(i, r)] * v[(j, p)] - v[(i, p)] * v[(j, r)]);
                }
            }
        }
    }
    Ok(s)
}

/// Inverse of [`param_to_q`] up to column signs of `q`.
pub fn q_to_param(q: &Matrix) -> Result<Vec<f64>> {
    let m = q.rows();
    if q.cols() != m {
        return Err(Error::invalid("rotation parameters of a non-square matrix"));
    }
    let rep = rotation_representative(q)?;
    let angles: Vec<f64> = match m {
        0 | 1 => Vec::new(),
        2 => vec![rep[(1, 0)].atan2(rep[(0, 0)])],
        _ => {
            let s = log_rotation(&rep)?;
            lower_pairs(m).map(|(i, j)| s[(i, j)]).collect()
        }
    };
    Ok(angles
        .iter()
        .map(|a| ((a / PI + 1.0) * 0.5).clamp(0.0, 1.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain truncated power series, independent of the scaling-and-squaring path.
    fn series_exp(a: &Matrix, terms: usize) -> Matrix {
        let n = a.rows();
        let mut term = Matrix::identity(n);
        let mut sum = Matrix::identity(n);
        for k in 1..terms {
            term = term.matmul(a).scale(1.0 / k as f64);
            sum = &sum + &term;
        }
        sum
    }

    fn random_rotation(rng: &mut ChaCha8Rng, m: usize) -> Matrix {
        let xi: Vec<f64> = (0..n_angles(m)).map(|_| rng.random_range(0.0..1.0)).collect();
        param_to_q(&xi, m).unwrap().0
    }

    fn qlq(q: &Matrix, lambda: &[f64]) -> Matrix {
        let m = q.rows();
        let l = Matrix::from_fn(m, m, |i, j| if i == j { lambda[i] } else { 0.0 });
        q.matmul(&l).matmul(&q.transpose())
    }

    #[test]
    fn two_by_two_examples() {
        let (q, clipped) = param_to_q(&[0.5], 2).unwrap();
        assert!(!clipped);
        assert!((&q - &Matrix::identity(2)).frob_norm() < 1e-15);
        let (q, _) = param_to_q(&[0.75], 2).unwrap();
        let want = Matrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert!((&q - &want).frob_norm() < 1e-15);
    }

    #[test]
    fn out_of_range_is_clipped_and_flagged() {
        let (q, clipped) = param_to_q(&[1.3], 2).unwrap();
        assert!(clipped);
        let (q1, _) = param_to_q(&[1.0], 2).unwrap();
        assert_eq!(q, q1);
        assert!(param_to_q(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn rodrigues_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            // small generators: the 12-term series is itself accurate to ~1e-12 here
            let xi: Vec<f64> = (0..3).map(|_| rng.random_range(0.45..0.55)).collect();
            let (q, _) = param_to_q(&xi, 3).unwrap();
            let s = skew_from_angles(&angles_from_xi(&xi), 3);
            let want = series_exp(&s, 12);
            assert!((&q - &want).frob_norm() < 1e-10);
        }
        for _ in 0..100 {
            // full range: series on S/16, squared four times
            let xi: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            let (q, _) = param_to_q(&xi, 3).unwrap();
            let s = skew_from_angles(&angles_from_xi(&xi), 3);
            let mut want = series_exp(&s.scale(1.0 / 16.0), 12);
            for _ in 0..4 {
                want = want.matmul(&want);
            }
            assert!((&q - &want).frob_norm() < 1e-10);
        }
    }

    #[test]
    fn generated_matrices_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [2, 3, 4, 6] {
            for _ in 0..50 {
                let q = random_rotation(&mut rng, m);
                let qtq = q.transpose().matmul(&q);
                assert!((&qtq - &Matrix::identity(m)).frob_norm() < 1e-12, "m={m}");
                assert!((q.det() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(q_to_param(&Matrix::identity(2)).unwrap(), vec![0.5]);
        let xi = q_to_param(&Matrix::identity(3)).unwrap();
        assert!(xi.iter().all(|x| (x - 0.5).abs() < 1e-15));
        let rot = Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!((q_to_param(&rot).unwrap()[0] - 0.25).abs() < 1e-15);
        // rotation by π sits on the boundary
        let half = Matrix::from_rows(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        let xi = q_to_param(&half).unwrap()[0];
        assert!(xi == 0.0 || xi == 1.0);
    }

    #[test]
    fn round_trip_preserves_qlqt() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for m in [2, 3, 4, 6] {
            for _ in 0..200 {
                let mut q = random_rotation(&mut rng, m);
                // random column signs, including improper ones
                for j in 0..m {
                    if rng.random_bool(0.5) {
                        for i in 0..m {
                            q[(i, j)] = -q[(i, j)];
                        }
                    }
                }
                let lambda: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
                let xi = q_to_param(&q).unwrap();
                assert!(xi.iter().all(|x| (0.0..=1.0).contains(x)));
                let (q2, clipped) = param_to_q(&xi, m).unwrap();
                assert!(!clipped);
                let err = (&qlq(&q, &lambda) - &qlq(&q2, &lambda)).frob_norm();
                assert!(err < 1e-10, "m={m} err={err:e}");
            }
        }
    }

    #[test]
    fn half_turn_in_three_dimensions() {
        // rotation by π about z cannot be moved off π by sign flips alone
        // without changing it to the identity; either way QΛQᵀ must survive
        let q = Matrix::from_rows(&[&[-1.0, 0.0, 0.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let lambda = [0.2, 0.7, 0.4];
        let xi = q_to_param(&q).unwrap();
        let (q2, _) = param_to_q(&xi, 3).unwrap();
        assert!((&qlq(&q, &lambda) - &qlq(&q2, &lambda)).frob_norm() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for m in [2, 3, 4] {
            for _ in 0..10 {
                let xi: Vec<f64> = (0..n_angles(m)).map(|_| rng.random_range(0.05..0.95)).collect();
                let weights = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
                let loss = |xi: &[f64]| {
                    let (q, _) = param_to_q(xi, m).unwrap();
                    q.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum::<f64>()
                };
                let grad = param_to_q_backward(&xi, m, &weights);
                for k in 0..xi.len() {
                    let h = 1e-6;
                    let mut p = xi.clone();
                    p[k] += h;
                    let mut n = xi.clone();
                    n[k] -= h;
                    let fd = (loss(&p) - loss(&n)) / (2.0 * h);
                    assert!((fd - grad[k]).abs() < 1e-7 * fd.abs().max(1.0), "m={m} k={k} {fd} {}", grad[k]);
                }
            }
        }
    }
}
