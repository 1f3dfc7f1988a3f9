//! Probability-simplex primitives: categorical distributions, total variation
//! distance, Tsallis entropy, and the trade-off functions built from them.
//!
//! All operations are pure functions over immutable values and are safe to
//! call concurrently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the probability mass of a [`Simplex`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// A finite categorical distribution: non-negative entries summing to one
/// within [`MASS_TOLERANCE`], at least two of them.
///
/// Construction validates. Inputs that fail the mass check are rejected rather
/// than silently renormalized; use [`normalize`] when renormalization is what
/// you want.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Simplex {
    probs: Vec<f64>,
}

impl Simplex {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::DimTooSmall(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteEntry { index });
            }
            if value < 0.0 {
                return Err(Error::NegativeEntry { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::MassNotUnit {
                sum,
                tolerance: MASS_TOLERANCE,
            });
        }
        Ok(Self { probs })
    }

    /// The uniform distribution over `dim` outcomes.
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimTooSmall(dim));
        }
        Ok(Self {
            probs: vec![1.0 / dim as f64; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, index: usize) -> f64 {
        self.probs[index]
    }
}

impl TryFrom<Vec<f64>> for Simplex {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Simplex::new(probs)
    }
}

impl From<Simplex> for Vec<f64> {
    fn from(s: Simplex) -> Self {
        s.probs
    }
}

/// A degenerate distribution putting all mass on one token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHot {
    index: usize,
    dim: usize,
}

impl OneHot {
    pub fn new(index: usize, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimTooSmall(dim));
        }
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, dim });
        }
        Ok(Self { index, dim })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_simplex(&self) -> Simplex {
        let mut probs = vec![0.0; self.dim];
        probs[self.index] = 1.0;
        Simplex { probs }
    }
}

/// A raw trade-off value alongside its clamp onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaValue {
    pub raw: f64,
    pub clamped: f64,
}

impl GammaValue {
    pub fn new(raw: f64) -> Self {
        Self {
            raw,
            clamped: raw.clamp(0.0, 1.0),
        }
    }
}

/// Divide non-negative entries by their sum.
pub fn normalize(raw: &[f64]) -> Result<Simplex> {
    if raw.len() < 2 {
        return Err(Error::DimTooSmall(raw.len()));
    }
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFiniteEntry { index });
        }
        if value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(Error::ZeroMass(sum));
    }
    Ok(Simplex {
        probs: raw.iter().map(|&v| v / sum).collect(),
    })
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimMismatch { left, right });
    }
    Ok(())
}

/// Total variation distance `½ Σ_i |p_i − q_i|`.
pub fn tvd(p: &Simplex, q: &Simplex) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    let sum: f64 = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(0.5 * sum)
}

/// Total variation distance between a one-hot sample and a distribution:
/// `½ (|1 − p_w| + Σ_{j≠w} p_j)`, which equals `1 − p_w` on a valid simplex.
pub fn tvd_onehot(w: &OneHot, p: &Simplex) -> Result<f64> {
    check_dims(w.dim(), p.dim())?;
    let pw = p.probs[w.index];
    let rest: f64 = p
        .probs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != w.index)
        .map(|(_, &v)| v)
        .sum();
    Ok(0.5 * ((1.0 - pw).abs() + rest))
}

/// Tsallis entropy `H_α`: `(1/(α(α−1))) (1 − Σ p_i^α)` for `α ≠ 1`, Shannon
/// entropy (natural log, `0·log 0 := 0`) for `α = 1`.
///
/// `alpha` must be positive.
pub fn tsallis_entropy(p: &Simplex, alpha: f64) -> f64 {
    assert!(
        alpha > 0.0 && alpha.is_finite(),
        "alpha must be positive and finite, got {alpha}"
    );
    if alpha == 1.0 {
        -p.probs
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v * v.ln())
            .sum::<f64>()
    } else if alpha == 2.0 {
        // The α = 2 case is on every hot path; keep it a single pass of
        // correctly rounded multiplies.
        0.5 * (1.0 - p.probs.iter().map(|&v| v * v).sum::<f64>())
    } else {
        let sum: f64 = p.probs.iter().map(|&v| v.powf(alpha)).sum();
        (1.0 - sum) / (alpha * (alpha - 1.0))
    }
}

/// Step function: 1 for `z ≥ 0`, 0 otherwise.
pub fn indicator(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Piecewise-linear relaxation of [`indicator`] with ramp slope `lambda`:
/// 0 below `−1/(2λ)`, `λz + ½` on the ramp, 1 above `1/(2λ)`.
pub fn smooth_indicator(z: f64, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let half_width = 1.0 / (2.0 * lambda);
    Ok(if z < -half_width {
        0.0
    } else if z > half_width {
        1.0
    } else {
        lambda * z + 0.5
    })
}

/// Estimation error of the weighted bound: `(1−γ)·TVD(p_o, p_θ) + γ·2H₂(p_o)`.
pub fn estimation_error(p_o: &Simplex, p_theta: &Simplex, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    let t = tvd(p_o, p_theta)?;
    Ok((1.0 - gamma) * t + gamma * 2.0 * tsallis_entropy(p_o, 2.0))
}

/// The exact minimizer of [`estimation_error`] over `γ ∈ [0, 1]`:
/// `1[TVD(p_o, p_θ) − 2H₂(p_o)]`.
pub fn gamma_opt(p_o: &Simplex, p_theta: &Simplex) -> Result<f64> {
    let z = tvd(p_o, p_theta)? - 2.0 * tsallis_entropy(p_o, 2.0);
    Ok(indicator(z))
}

/// `Σ_j p_j (p_j − p_w)`: algebraically `tvd_onehot(w, p) − 2H₂(p)`, but
/// exactly zero on uniform rows in floating point for any dimension.
pub(crate) fn onehot_z(probs: &[f64], w: usize) -> f64 {
    let pw = probs[w];
    probs.iter().map(|&p| p * (p - pw)).sum()
}

/// Sampled trade-off `½ + λ (TVD(e^(w), p_θ) − 2H₂(p_θ))`, clamped onto
/// [0, 1]. Uniform predictions yield exactly ½ for any `λ`.
pub fn gamma_tilde(w: &OneHot, p_theta: &Simplex, lambda: f64) -> Result<GammaValue> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    check_dims(w.dim(), p_theta.dim())?;
    Ok(GammaValue::new(
        0.5 + lambda * onehot_z(p_theta.probs(), w.index()),
    ))
}

/// `Σ_i |p_i − q_i|`; equals `2·tvd`.
pub fn l1_dist(p: &Simplex, q: &Simplex) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// `max_i |p_i − q_i|`.
pub fn linf_dist(p: &Simplex, q: &Simplex) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Inner product `Σ_i p_i q_i`.
pub fn inner(p: &Simplex, q: &Simplex) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex(v: &[f64]) -> Simplex {
        Simplex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_divides_by_sum() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(
            normalize(&[1.0, 0.0, 0.0]).unwrap().probs(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(normalize(&[1.0, 3.0]).unwrap().probs(), &[0.25, 0.75]);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(matches!(
            normalize(&[0.0, 0.0]),
            Err(Error::ZeroMass(_))
        ));
        assert!(matches!(
            normalize(&[1.0, -0.5]),
            Err(Error::NegativeEntry { .. })
        ));
        assert!(matches!(normalize(&[1.0]), Err(Error::DimTooSmall(1))));
    }

    #[test]
    fn simplex_rejects_mass_drift() {
        assert!(matches!(
            Simplex::new(vec![0.6, 0.6]),
            Err(Error::MassNotUnit { .. })
        ));
        assert!(Simplex::new(vec![0.5, 0.5 + 5e-10]).is_ok());
    }

    #[test]
    fn tvd_examples() {
        let p = simplex(&[0.7, 0.3]);
        assert_eq!(tvd(&p, &p).unwrap(), 0.0);
        let a = simplex(&[1.0, 0.0]);
        let b = simplex(&[0.0, 1.0]);
        assert_eq!(tvd(&a, &b).unwrap(), 1.0);
        let q = simplex(&[0.4, 0.6]);
        assert!((tvd(&p, &q).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tvd_dim_mismatch() {
        let p = simplex(&[0.5, 0.5]);
        let q = simplex(&[0.4, 0.3, 0.3]);
        assert!(matches!(tvd(&p, &q), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn tvd_onehot_examples() {
        let w = OneHot::new(0, 2).unwrap();
        assert_eq!(tvd_onehot(&w, &simplex(&[1.0, 0.0])).unwrap(), 0.0);
        assert!((tvd_onehot(&w, &simplex(&[0.8, 0.2])).unwrap() - 0.2).abs() < 1e-15);
        let w1 = OneHot::new(1, 2).unwrap();
        assert_eq!(tvd_onehot(&w1, &simplex(&[0.5, 0.5])).unwrap(), 0.5);
    }

    #[test]
    fn tvd_onehot_agrees_with_dense_route() {
        let p = simplex(&[0.1, 0.25, 0.3, 0.35]);
        for i in 0..4 {
            let w = OneHot::new(i, 4).unwrap();
            let direct = tvd_onehot(&w, &p).unwrap();
            let dense = tvd(&w.as_simplex(), &p).unwrap();
            assert!((direct - dense).abs() < 1e-12);
            assert!((direct - (1.0 - p.get(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn tsallis_examples() {
        let onehot = simplex(&[1.0, 0.0]);
        assert_eq!(tsallis_entropy(&onehot, 2.0), 0.0);
        let u = Simplex::uniform(2).unwrap();
        assert!((tsallis_entropy(&u, 2.0) - 0.25).abs() < 1e-15);
        let p = simplex(&[0.8, 0.2]);
        assert!((tsallis_entropy(&p, 2.0) - 0.16).abs() < 1e-15);
        // α = 1 is Shannon with 0·log 0 = 0.
        assert!((tsallis_entropy(&u, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(tsallis_entropy(&onehot, 1.0), 0.0);
    }

    #[test]
    fn smooth_indicator_examples() {
        for lambda in [0.5, 1.0, 3.0] {
            assert_eq!(smooth_indicator(0.0, lambda).unwrap(), 0.5);
            let bp = 1.0 / (2.0 * lambda);
            assert!((smooth_indicator(bp, lambda).unwrap() - 1.0).abs() < 1e-15);
            assert_eq!(smooth_indicator(bp + 1e-12, lambda).unwrap(), 1.0);
            assert_eq!(smooth_indicator(-bp - 1e-12, lambda).unwrap(), 0.0);
        }
        assert!((smooth_indicator(-0.25, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            smooth_indicator(0.0, 0.0),
            Err(Error::NonPositiveLambda(_))
        ));
    }

    #[test]
    fn estimation_error_examples() {
        let p = simplex(&[0.6, 0.4]);
        let gamma = 0.3;
        let expect = gamma * 2.0 * tsallis_entropy(&p, 2.0);
        assert!((estimation_error(&p, &p, gamma).unwrap() - expect).abs() < 1e-15);

        let q = simplex(&[0.2, 0.8]);
        assert!((estimation_error(&p, &q, 0.0).unwrap() - tvd(&p, &q).unwrap()).abs() < 1e-15);

        let half = simplex(&[0.5, 0.5]);
        let hot = simplex(&[1.0, 0.0]);
        assert!((estimation_error(&half, &hot, 0.5).unwrap() - 0.5).abs() < 1e-15);

        assert!(matches!(
            estimation_error(&p, &q, 1.5),
            Err(Error::GammaOutOfRange(_))
        ));
    }

    #[test]
    fn gamma_opt_examples() {
        let hot = simplex(&[1.0, 0.0]);
        let q = simplex(&[0.3, 0.7]);
        assert_eq!(gamma_opt(&hot, &q).unwrap(), 1.0);

        let u = Simplex::uniform(2).unwrap();
        assert_eq!(gamma_opt(&u, &u).unwrap(), 0.0);

        // z = 0.5 − 0.5 = 0 and the indicator maps 0 to 1.
        let hot0 = simplex(&[1.0, 0.0]);
        assert_eq!(gamma_opt(&u, &hot0).unwrap(), 1.0);
    }

    #[test]
    fn gamma_tilde_examples() {
        // Uniform predictions pin the raw value at exactly ½, any dim or λ.
        for dim in [2, 3, 5, 7, 32] {
            let u = Simplex::uniform(dim).unwrap();
            for lambda in [0.5, 1.0, 100.0] {
                let g = gamma_tilde(&OneHot::new(dim - 1, dim).unwrap(), &u, lambda).unwrap();
                assert_eq!(g.raw, 0.5);
                assert_eq!(g.clamped, 0.5);
            }
        }

        let p = simplex(&[0.8, 0.2]);
        let g = gamma_tilde(&OneHot::new(0, 2).unwrap(), &p, 1.0).unwrap();
        assert!((g.raw - 0.38).abs() < 1e-12);
        assert!((g.clamped - 0.38).abs() < 1e-12);

        let sharp = simplex(&[0.99, 0.01]);
        let g = gamma_tilde(&OneHot::new(0, 2).unwrap(), &sharp, 100.0).unwrap();
        assert!((g.raw - (-0.48)).abs() < 1e-10);
        assert_eq!(g.clamped, 0.0);
    }

    #[test]
    fn norm_ops_examples() {
        let p = simplex(&[0.8, 0.2]);
        assert_eq!(l1_dist(&p, &p).unwrap(), 0.0);
        let a = simplex(&[1.0, 0.0]);
        let b = simplex(&[0.0, 1.0]);
        assert_eq!(linf_dist(&a, &b).unwrap(), 1.0);
        let q = simplex(&[0.5, 0.5]);
        assert!((inner(&p, &q).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn onehot_validation() {
        assert!(matches!(OneHot::new(2, 2), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(OneHot::new(0, 1), Err(Error::DimTooSmall(1))));
        let w = OneHot::new(1, 3).unwrap();
        assert_eq!(w.as_simplex().probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn simplex_deserialization_validates() {
        let ok: Simplex = serde_json::from_str("[0.5, 0.5]").unwrap();
        assert_eq!(ok.dim(), 2);
        assert!(serde_json::from_str::<Simplex>("[0.9, 0.9]").is_err());
        assert!(serde_json::from_str::<Simplex>("[1.0]").is_err());
    }
}
