//! Property tests for the simplex arithmetic, the weighting factors, and the
//! inequalities the bound checks rely on.

use proptest::prelude::*;

use adatailr::losses::{self, LossKind, LossSpec, TokenBatch};
use adatailr::simplex::{
    self, estimation_error, gamma_opt, inner, l1_dist, linf_dist, smooth_indicator,
    tsallis_entropy, tvd, tvd_onehot, OneHot, Simplex,
};

fn raw_weights(max_dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..=max_dim)
        .prop_filter("positive mass", |v| v.iter().sum::<f64>() > 1e-6)
}

fn simplex_pair(max_dim: usize) -> impl Strategy<Value = (Simplex, Simplex)> {
    (2..=max_dim).prop_flat_map(|dim| {
        let one = prop::collection::vec(1e-9f64..1.0, dim)
            .prop_map(|v| simplex::normalize(&v).unwrap());
        (one.clone(), one)
    })
}

proptest! {
    #[test]
    fn normalize_lands_on_the_simplex(raw in raw_weights(16)) {
        let s = simplex::normalize(&raw).unwrap();
        let sum: f64 = s.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(s.probs().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn tvd_is_a_bounded_symmetric_half_l1((p, q) in simplex_pair(32)) {
        let d = tvd(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - tvd(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!((d - 0.5 * l1_dist(&p, &q).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn linf_below_half_l1((p, q) in simplex_pair(32)) {
        prop_assert!(linf_dist(&p, &q).unwrap() <= 0.5 * l1_dist(&p, &q).unwrap() + 1e-12);
    }

    #[test]
    fn quadratic_entropy_range(raw in raw_weights(32)) {
        let p = simplex::normalize(&raw).unwrap();
        let h2x2 = 2.0 * tsallis_entropy(&p, 2.0);
        let cap = 1.0 - 1.0 / p.dim() as f64;
        prop_assert!((-1e-12..=cap + 1e-12).contains(&h2x2));
    }

    #[test]
    fn holder_inequality((p, q) in simplex_pair(32)) {
        let prod_l1: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| (a * b).abs()).sum();
        let p_l1: f64 = p.probs().iter().sum();
        let q_linf = q.probs().iter().cloned().fold(0.0, f64::max);
        prop_assert!(prod_l1 <= p_l1 * q_linf + 1e-12);
    }

    #[test]
    fn gamma_opt_beats_a_grid((p_o, p_theta) in simplex_pair(16)) {
        let opt = gamma_opt(&p_o, &p_theta).unwrap();
        let at_opt = estimation_error(&p_o, &p_theta, opt).unwrap();
        for k in 0..=100 {
            let gamma = k as f64 / 100.0;
            prop_assert!(at_opt <= estimation_error(&p_o, &p_theta, gamma).unwrap() + 1e-12);
        }
    }

    #[test]
    fn smooth_indicator_converges_pointwise(z in -1.0f64..1.0, lambda in 0.01f64..100.0) {
        prop_assume!(z != 0.0);
        let f = smooth_indicator(z, lambda).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        if lambda > 1.0 / (2.0 * z.abs()) {
            prop_assert_eq!(f, simplex::indicator(z));
        }
    }

    #[test]
    fn tvd_onehot_is_one_minus_mass(raw in raw_weights(16), index in 0usize..16) {
        let p = simplex::normalize(&raw).unwrap();
        let index = index % p.dim();
        let w = OneHot::new(index, p.dim()).unwrap();
        let d = tvd_onehot(&w, &p).unwrap();
        prop_assert!((d - (1.0 - p.get(index))).abs() <= 1e-12);
        prop_assert!((d - tvd(&w.as_simplex(), &p).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn sampled_tvd_expectation_identity((p_o, p_theta) in simplex_pair(16)) {
        let expected: f64 = (0..p_o.dim())
            .map(|w| {
                let one_hot = OneHot::new(w, p_o.dim()).unwrap();
                p_o.get(w) * tvd_onehot(&one_hot, &p_theta).unwrap()
            })
            .sum();
        let closed = 1.0 - inner(&p_theta, &p_o).unwrap();
        prop_assert!((expected - closed).abs() <= 1e-12);
    }

    #[test]
    fn reweight_factor_is_monotone_in_p(
        gamma in 1e-6f64..=1.0,
        a in 1e-9f64..1.0,
        b in 1e-9f64..1.0,
    ) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(losses::reweight_factor(lo, gamma) < losses::reweight_factor(hi, gamma));
    }

    #[test]
    fn weights_stay_in_range(
        raw in raw_weights(8),
        label in 0usize..8,
        gamma in 0.0f64..=1.0,
        delta in 0.0f64..=1.0,
    ) {
        let p = simplex::normalize(&raw).unwrap();
        let label = label % p.dim();
        let batch = TokenBatch::new(vec![p], vec![label]).unwrap();
        let out = losses::tailr_loss(&batch, gamma, delta).unwrap();
        let w = out.per_token_weight[0];
        prop_assert!(w <= 1.0 + 1e-12);
        prop_assert!(w >= delta - 1e-15);
        let raw_w = losses::reweight_factor(batch.probs()[0].get(label), gamma);
        prop_assert!(raw_w > 0.0 && raw_w <= 1.0 + 1e-12);
    }

    #[test]
    fn adatailr_gamma_in_unit_interval(
        raw in raw_weights(8),
        label in 0usize..8,
        lambda in 0.01f64..50.0,
    ) {
        let p = simplex::normalize(&raw).unwrap();
        let label = label % p.dim();
        let batch = TokenBatch::new(vec![p], vec![label]).unwrap();
        let (weights, gammas) = losses::adatailr_weights(&batch, lambda, 0.0).unwrap();
        prop_assert!((0.0..=1.0).contains(&gammas[0]));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&weights[0]));
    }

    #[test]
    fn truncation_total_is_monotone_in_fraction(
        losses_vec in prop::collection::vec(0.0f64..10.0, 1..40),
        c_lo in 0.0f64..1.0,
        c_hi in 0.0f64..1.0,
    ) {
        let (lo, hi) = if c_lo <= c_hi { (c_lo, c_hi) } else { (c_hi, c_lo) };
        let t_lo = losses::loss_truncation(&losses_vec, lo).unwrap();
        let t_hi = losses::loss_truncation(&losses_vec, hi).unwrap();
        prop_assert!(t_hi.total <= t_lo.total + 1e-12);
        let full = losses::loss_truncation(&losses_vec, 0.0).unwrap();
        let sum: f64 = losses_vec.iter().sum();
        prop_assert!((full.total - sum).abs() <= 1e-9);
    }

    #[test]
    fn gmm_posteriors_sum_to_one(
        mut losses_vec in prop::collection::vec(0.0f64..6.0, 8..40),
        components in 2usize..4,
    ) {
        prop_assume!(losses_vec.len() >= 2 * components);
        losses_vec[0] = 0.01; // guarantee non-degenerate spread
        losses_vec[1] = 5.9;
        let out = losses::gmm_reweight(&losses_vec, components).unwrap();
        for row in &out.responsibilities {
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
        prop_assert!(out.weights.iter().all(|&w| (0.0..=1.0 + 1e-12).contains(&w)));
    }

    #[test]
    fn gradients_match_finite_differences_everywhere(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..4),
        labels in prop::collection::vec(0usize..4, 4),
        kind_pick in 0usize..3,
    ) {
        let labels: Vec<usize> = labels.into_iter().take(rows.len()).collect();
        prop_assume!(labels.len() == rows.len());
        let kind = [LossKind::Kld, LossKind::TaiLr, LossKind::AdaTaiLr][kind_pick];
        let mut spec = LossSpec::new(kind);
        spec.delta = 0.0;
        let analytic = losses::loss_grad(&rows, &labels, &spec).unwrap();
        let weights: Vec<f64> = rows
            .iter()
            .zip(&labels)
            .map(|(row, &y)| {
                let p = losses::softmax(row);
                match kind {
                    LossKind::Kld => 1.0,
                    LossKind::TaiLr => losses::reweight_factor(p[y], spec.gamma),
                    LossKind::AdaTaiLr => losses::reweight_factor(
                        p[y],
                        losses::adatailr_gamma(&p, y, spec.lambda),
                    ),
                    _ => unreachable!(),
                }
            })
            .collect();
        let fd = losses::gradcheck::central_difference(&rows, &labels, &weights, 1e-5);
        prop_assert!(losses::gradcheck::relative_error(&analytic, &fd) < 1e-5);
    }
}
