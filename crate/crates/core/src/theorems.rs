//! Brute-force numerical verification of the optimality and approximation
//! guarantees behind the adaptive trade-off, producing machine-readable
//! pass/fail reports with measured margins.
//!
//! Every expectation over a sampled token `w` is a finite sum over the
//! distribution's support, so no Monte Carlo error enters any bound check;
//! randomness only picks the trial distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::simplex::{
    estimation_error, gamma_opt, indicator, inner, l1_dist, linf_dist, smooth_indicator, tsallis_entropy,
    tvd, tvd_onehot, OneHot, Simplex,
};

/// Trial dimensions used by the default suites. Larger dimensions slow the
/// exact expectations without tightening any bound.
pub const DEFAULT_DIMS: &[usize] = &[2, 3, 4, 8, 16, 32, 64];

/// Ramp slopes used by the default suites.
pub const DEFAULT_LAMBDAS: &[f64] = &[0.5, 1.0, 2.0, 4.0];

/// Numerical slack allowed on top of a report's bound when deciding `pass`.
pub const REPORT_TOLERANCE: f64 = 1e-9;

/// Per-dimension or per-lambda breakdown inside a [`TheoremReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDetail {
    pub label: String,
    pub bound: f64,
    pub max_violation: f64,
    /// Largest raw value of the checked expression, where meaningful.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_max: Option<f64>,
    /// Fraction of sampled trade-offs that fell outside [0, 1].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp_rate: Option<f64>,
}

impl ReportDetail {
    fn new(label: String, bound: f64, max_violation: f64) -> Self {
        Self {
            label,
            bound,
            max_violation,
            measured_max: None,
            clamp_rate: None,
        }
    }
}

/// Outcome of one verification run. `bound` is the allowed `max_violation`;
/// `pass` holds iff `max_violation ≤ bound + 1e-9`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub name: String,
    pub trials: usize,
    pub seed: u64,
    pub bound: f64,
    pub max_violation: f64,
    pub pass: bool,
    pub details: Vec<ReportDetail>,
}

impl TheoremReport {
    fn conclude(
        name: &str,
        trials: usize,
        seed: u64,
        bound: f64,
        max_violation: f64,
        details: Vec<ReportDetail>,
    ) -> Self {
        Self {
            name: name.to_string(),
            trials,
            seed,
            bound,
            max_violation,
            pass: max_violation <= bound + REPORT_TOLERANCE,
            details,
        }
    }
}

/// One random pair of distributions plus the derived quantities the bounds
/// are stated over.
#[derive(Debug, Clone)]
pub struct TheoremTrial {
    pub p_o: Simplex,
    pub p_theta: Simplex,
    /// Tight distance constant: `½ ‖p_θ − p_o‖₁`.
    pub d: f64,
    /// `TVD(p_o, p_θ) − 2 H₂(p_o)`.
    pub z: f64,
    /// Exact expectation of [`TheoremTrial::z_tilde`] over `w ~ p_o`.
    pub z_tilde_expectation: f64,
}

impl TheoremTrial {
    pub fn generate(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let p_o = sample_simplex(dim, rng);
        let p_theta = sample_simplex(dim, rng);
        Self::from_pair(p_o, p_theta)
    }

    pub fn from_pair(p_o: Simplex, p_theta: Simplex) -> Self {
        let d = 0.5 * l1_dist(&p_theta, &p_o).expect("matching dims");
        let z = tvd(&p_o, &p_theta).expect("matching dims")
            - 2.0 * tsallis_entropy(&p_o, 2.0);
        let z_tilde_expectation = (0..p_o.dim())
            .map(|w| p_o.get(w) * Self::z_tilde_of(&p_theta, w))
            .sum();
        Self {
            p_o,
            p_theta,
            d,
            z,
            z_tilde_expectation,
        }
    }

    /// Empirical surrogate for `z` built from a one-hot sample at `w`.
    ///
    /// The tail term is `2(1 − ‖p_θ‖²)`, twice the one in the training-time
    /// trade-off: with this form the exact expectation over `w` satisfies
    /// `|z − E[z̃]| ≤ 4d` with equality of the two sides at `p_θ = p_o`,
    /// which is what the approximation bounds are built on.
    pub fn z_tilde(&self, w: usize) -> f64 {
        Self::z_tilde_of(&self.p_theta, w)
    }

    fn z_tilde_of(p_theta: &Simplex, w: usize) -> f64 {
        let one_hot = OneHot::new(w, p_theta.dim()).expect("w within dim");
        let sum_sq: f64 = p_theta.probs().iter().map(|&p| p * p).sum();
        tvd_onehot(&one_hot, p_theta).expect("matching dims") - 2.0 * (1.0 - sum_sq)
    }

    /// The estimation error as an affine function of the trade-off, valid for
    /// any real `gamma` (the bound checks evaluate it outside [0, 1]).
    pub fn epsilon_affine(&self, gamma: f64) -> f64 {
        let t = tvd(&self.p_o, &self.p_theta).expect("matching dims");
        (1.0 - gamma) * t + gamma * 2.0 * tsallis_entropy(&self.p_o, 2.0)
    }
}

/// A draw from the flat Dirichlet via normalized exponentials; deterministic
/// per RNG state.
pub fn sample_simplex(dim: usize, rng: &mut ChaCha8Rng) -> Simplex {
    assert!(dim >= 2, "need at least 2 outcomes, got {dim}");
    loop {
        let raw: Vec<f64> = (0..dim)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        if raw.iter().sum::<f64>() > 0.0 {
            return crate::simplex::normalize(&raw).expect("positive exponentials");
        }
    }
}

/// RNG for trial `index` of a run seeded with `seed`; trials are independent
/// streams so reports are reproducible regardless of evaluation order.
fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(crate::seeding::derive(seed, index))
}

/// Check that the indicator-valued trade-off minimizes the estimation error:
/// for each random pair, its error must not exceed the minimum over a uniform
/// grid of trade-offs by more than 1e-12.
pub fn verify_theorem1(
    trials: usize,
    dims: &[usize],
    grid_points: usize,
    seed: u64,
) -> TheoremReport {
    assert!(grid_points >= 3, "need at least 3 grid points");
    let mut max_violation = f64::NEG_INFINITY;
    let mut per_dim: Vec<(usize, f64)> = dims.iter().map(|&d| (d, f64::NEG_INFINITY)).collect();
    for t in 0..trials {
        let slot = t % dims.len();
        let dim = dims[slot];
        let mut rng = trial_rng(seed, t as u64);
        let p_o = sample_simplex(dim, &mut rng);
        let p_theta = sample_simplex(dim, &mut rng);
        let opt = gamma_opt(&p_o, &p_theta).expect("matching dims");
        let at_opt = estimation_error(&p_o, &p_theta, opt).expect("valid gamma");
        let mut grid_min = f64::INFINITY;
        for k in 0..grid_points {
            let gamma = k as f64 / (grid_points - 1) as f64;
            let e = estimation_error(&p_o, &p_theta, gamma).expect("valid gamma");
            grid_min = grid_min.min(e);
        }
        let violation = at_opt - grid_min;
        max_violation = max_violation.max(violation);
        per_dim[slot].1 = per_dim[slot].1.max(violation);
    }
    let details = per_dim
        .into_iter()
        .map(|(d, v)| ReportDetail::new(format!("dim={d}"), 1e-12, v))
        .collect();
    TheoremReport::conclude("theorem1", trials, seed, 1e-12, max_violation, details)
}

/// Check the approximation guarantee of the sampled trade-off: the exact
/// expected excess error must stay within `9/(16λ) + 4D` per trial.
///
/// The unclamped affine trade-off is used for the bound check; how often the
/// [0, 1] clamp would have engaged is recorded per lambda as `clamp_rate`.
pub fn verify_theorem2(trials: usize, lambdas: &[f64], seed: u64) -> Result<TheoremReport> {
    for &l in lambdas {
        if l <= 0.0 || !l.is_finite() {
            return Err(crate::error::Error::NonPositiveLambda(l));
        }
    }
    let mut max_violation = f64::NEG_INFINITY;
    let mut details = Vec::new();
    for &lambda in lambdas {
        let mut lambda_max = f64::NEG_INFINITY;
        let mut clamped = 0usize;
        let mut outcomes = 0usize;
        for t in 0..trials {
            let dim = DEFAULT_DIMS[t % DEFAULT_DIMS.len()];
            let mut rng = trial_rng(seed, t as u64);
            let trial = TheoremTrial::generate(dim, &mut rng);
            let opt = indicator(trial.z);
            let eps_opt = trial.epsilon_affine(opt);
            let mut expected = 0.0;
            for w in 0..dim {
                let raw = 0.5 + lambda * trial.z_tilde(w);
                if !(0.0..=1.0).contains(&raw) {
                    clamped += 1;
                }
                outcomes += 1;
                expected += trial.p_o.get(w) * trial.epsilon_affine(raw);
            }
            // The gap is nonnegative by optimality, so the absolute value in
            // the guarantee is dropped before checking.
            let gap = expected - eps_opt;
            let bound = 9.0 / (16.0 * lambda) + 4.0 * trial.d;
            lambda_max = lambda_max.max(gap - bound);
        }
        max_violation = max_violation.max(lambda_max);
        let mut detail = ReportDetail::new(format!("lambda={lambda}"), 0.0, lambda_max);
        detail.clamp_rate = Some(clamped as f64 / outcomes.max(1) as f64);
        details.push(detail);
    }
    Ok(TheoremReport::conclude(
        "theorem2",
        trials,
        seed,
        0.0,
        max_violation,
        details,
    ))
}

/// Check the closed form of the expected empirical TVD:
/// `E_{w~p_o}[TVD(e^(w), p_θ)] = 1 − ⟨p_θ, p_o⟩`, exactly.
pub fn verify_lemma_sampled_tvd(trials: usize, seed: u64) -> TheoremReport {
    let mut max_violation = f64::NEG_INFINITY;
    for t in 0..trials {
        let dim = DEFAULT_DIMS[t % DEFAULT_DIMS.len()];
        let mut rng = trial_rng(seed, t as u64);
        let p_o = sample_simplex(dim, &mut rng);
        let p_theta = sample_simplex(dim, &mut rng);
        let expected: f64 = (0..dim)
            .map(|w| {
                let one_hot = OneHot::new(w, dim).expect("w within dim");
                p_o.get(w) * tvd_onehot(&one_hot, &p_theta).expect("matching dims")
            })
            .sum();
        let closed_form = 1.0 - inner(&p_theta, &p_o).expect("matching dims");
        max_violation = max_violation.max((expected - closed_form).abs());
    }
    TheoremReport::conclude(
        "lemma_sampled_tvd",
        trials,
        seed,
        1e-12,
        max_violation,
        Vec::new(),
    )
}

/// Check `‖p − q‖_∞ ≤ ½ ‖p − q‖₁` over random simplex pairs.
pub fn verify_lemma_norms(trials: usize, seed: u64) -> TheoremReport {
    let mut max_violation = f64::NEG_INFINITY;
    for t in 0..trials {
        let dim = DEFAULT_DIMS[t % DEFAULT_DIMS.len()];
        let mut rng = trial_rng(seed, t as u64);
        let p = sample_simplex(dim, &mut rng);
        let q = sample_simplex(dim, &mut rng);
        let linf = linf_dist(&p, &q).expect("matching dims");
        let l1 = l1_dist(&p, &q).expect("matching dims");
        max_violation = max_violation.max(linf - 0.5 * l1);
    }
    TheoremReport::conclude("lemma_norms", trials, seed, 1e-12, max_violation, Vec::new())
}

/// Check `|z − E_{w~p_o}[z̃]| ≤ 4D` per trial with the exact expectation.
pub fn verify_lemma_zdiff(trials: usize, seed: u64) -> TheoremReport {
    let mut max_violation = f64::NEG_INFINITY;
    for t in 0..trials {
        let dim = DEFAULT_DIMS[t % DEFAULT_DIMS.len()];
        let mut rng = trial_rng(seed, t as u64);
        let trial = TheoremTrial::generate(dim, &mut rng);
        let gap = (trial.z - trial.z_tilde_expectation).abs();
        max_violation = max_violation.max(gap - 4.0 * trial.d);
    }
    TheoremReport::conclude("lemma_zdiff", trials, seed, 0.0, max_violation, Vec::new())
}

/// Check the smooth-approximation error `(1[z] − f(z,λ))·z ≤ 1/(16λ)` over a
/// dense grid that includes the breakpoints and the analytic maximizer
/// `z = 1/(4λ)`, where the bound is tight.
pub fn verify_lemma_smooth(
    lambdas: &[f64],
    z_min: f64,
    z_max: f64,
    step: f64,
) -> Result<TheoremReport> {
    assert!(z_min < z_max && step > 0.0, "grid must be non-empty");
    let mut max_violation = f64::NEG_INFINITY;
    let mut details = Vec::new();
    let mut evaluations = 0usize;
    for &lambda in lambdas {
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(crate::error::Error::NonPositiveLambda(lambda));
        }
        let bound = 1.0 / (16.0 * lambda);
        let mut measured = f64::NEG_INFINITY;
        let mut eval = |z: f64| -> Result<()> {
            let value = (indicator(z) - smooth_indicator(z, lambda)?) * z;
            measured = measured.max(value);
            Ok(())
        };
        let steps = ((z_max - z_min) / step).round() as usize;
        for k in 0..=steps {
            eval(z_min + k as f64 * step)?;
            evaluations += 1;
        }
        let half_width = 1.0 / (2.0 * lambda);
        for z in [0.0, half_width, -half_width, 0.25 / lambda, -0.25 / lambda] {
            eval(z)?;
            evaluations += 1;
        }
        let violation = measured - bound;
        max_violation = max_violation.max(violation);
        let mut detail = ReportDetail::new(format!("lambda={lambda}"), bound, violation);
        detail.measured_max = Some(measured);
        details.push(detail);
    }
    Ok(TheoremReport::conclude(
        "lemma_smooth",
        evaluations,
        0,
        0.0,
        max_violation,
        details,
    ))
}

/// Check the data-distribution approximation error
/// `E_{w~p_o}[(f(z,λ) − f(z̃,λ))·z] ≤ ½/λ + 4D` per trial, exact expectation.
pub fn verify_lemma_dist_approx(
    trials: usize,
    lambdas: &[f64],
    seed: u64,
) -> Result<TheoremReport> {
    let mut max_violation = f64::NEG_INFINITY;
    let mut details = Vec::new();
    for &lambda in lambdas {
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(crate::error::Error::NonPositiveLambda(lambda));
        }
        let mut lambda_max = f64::NEG_INFINITY;
        for t in 0..trials {
            let dim = DEFAULT_DIMS[t % DEFAULT_DIMS.len()];
            let mut rng = trial_rng(seed, t as u64);
            let trial = TheoremTrial::generate(dim, &mut rng);
            let f_z = smooth_indicator(trial.z, lambda)?;
            let mut expected = 0.0;
            for w in 0..dim {
                let f_zt = smooth_indicator(trial.z_tilde(w), lambda)?;
                expected += trial.p_o.get(w) * (f_z - f_zt) * trial.z;
            }
            let bound = 0.5 / lambda + 4.0 * trial.d;
            lambda_max = lambda_max.max(expected - bound);
        }
        max_violation = max_violation.max(lambda_max);
        details.push(ReportDetail::new(format!("lambda={lambda}"), 0.0, lambda_max));
    }
    Ok(TheoremReport::conclude(
        "lemma_dist_approx",
        trials,
        seed,
        0.0,
        max_violation,
        details,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_simplex_is_valid_and_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let p = sample_simplex(16, &mut a);
        let q = sample_simplex(16, &mut b);
        assert_eq!(p.probs(), q.probs());
        assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_simplex_coordinates_are_symmetric() {
        // Flat Dirichlet at dim 3 has coordinate mean 1/3.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let draws = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..draws {
            let p = sample_simplex(3, &mut rng);
            for (s, &v) in sums.iter_mut().zip(p.probs()) {
                *s += v;
            }
        }
        for s in sums {
            assert!((s / draws as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn theorem1_onehot_and_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [2, 4, 8] {
            let hot = OneHot::new(0, dim).unwrap().as_simplex();
            let other = sample_simplex(dim, &mut rng);
            assert_eq!(gamma_opt(&hot, &other).unwrap(), 1.0);

            let p = sample_simplex(dim, &mut rng);
            assert_eq!(gamma_opt(&p, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn theorem1_report_is_reproducible() {
        let a = verify_theorem1(200, DEFAULT_DIMS, 101, 3);
        let b = verify_theorem1(200, DEFAULT_DIMS, 101, 3);
        assert_eq!(a.max_violation.to_bits(), b.max_violation.to_bits());
        assert!(a.pass);
        assert!(a.max_violation <= 1e-12);
    }

    #[test]
    fn theorem2_identity_pair_obeys_smooth_bound() {
        // At p_θ = p_o the distance constant vanishes and the gap must sit
        // under 9/(16λ) alone.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for lambda in [0.5, 1.0, 4.0, 32.0] {
            for dim in [2, 3, 16] {
                let p = sample_simplex(dim, &mut rng);
                let trial = TheoremTrial::from_pair(p.clone(), p);
                assert!(trial.d.abs() < 1e-15);
                let eps_opt = trial.epsilon_affine(indicator(trial.z));
                let expected: f64 = (0..dim)
                    .map(|w| {
                        trial.p_o.get(w) * trial.epsilon_affine(0.5 + lambda * trial.z_tilde(w))
                    })
                    .sum();
                assert!(expected - eps_opt <= 9.0 / (16.0 * lambda) + 1e-12);
            }
        }
    }

    #[test]
    fn zdiff_vanishes_at_identical_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for dim in [2, 5, 32] {
            let p = sample_simplex(dim, &mut rng);
            let trial = TheoremTrial::from_pair(p.clone(), p);
            assert!((trial.z - trial.z_tilde_expectation).abs() < 1e-12);
        }
    }

    #[test]
    fn zdiff_extreme_pair_within_bound() {
        let a = Simplex::new(vec![1.0, 0.0]).unwrap();
        let b = Simplex::new(vec![0.0, 1.0]).unwrap();
        let trial = TheoremTrial::from_pair(a, b);
        assert!((trial.d - 1.0).abs() < 1e-15);
        assert!((trial.z - trial.z_tilde_expectation).abs() <= 4.0 * trial.d);
    }

    #[test]
    fn smooth_bound_is_tight_at_quarter_lambda() {
        let report = verify_lemma_smooth(&[1.0], -2.0, 2.0, 1e-4).unwrap();
        assert!(report.pass);
        let measured = report.details[0].measured_max.unwrap();
        assert!((measured - 0.0625).abs() < 1e-12);
        // f saturates outside the ramp, so the expression is zero there.
        let g = |z: f64| (indicator(z) - smooth_indicator(z, 1.0).unwrap()) * z;
        assert_eq!(g(0.6), 0.0);
        assert_eq!(g(-0.6), 0.0);
    }

    #[test]
    fn suite_passes_at_small_trial_counts() {
        assert!(verify_theorem1(500, DEFAULT_DIMS, 101, 17).pass);
        assert!(verify_theorem2(200, DEFAULT_LAMBDAS, 17).unwrap().pass);
        assert!(verify_lemma_sampled_tvd(500, 17).pass);
        assert!(verify_lemma_norms(500, 17).pass);
        assert!(verify_lemma_zdiff(500, 17).pass);
        assert!(verify_lemma_smooth(DEFAULT_LAMBDAS, -2.0, 2.0, 1e-3)
            .unwrap()
            .pass);
        assert!(verify_lemma_dist_approx(200, DEFAULT_LAMBDAS, 17)
            .unwrap()
            .pass);
    }

    #[test]
    fn lambda_set_rejects_non_positive() {
        assert!(verify_theorem2(10, &[0.0], 1).is_err());
        assert!(verify_lemma_dist_approx(10, &[-1.0], 1).is_err());
        assert!(verify_lemma_smooth(&[0.0], -1.0, 1.0, 0.1).is_err());
    }
}
