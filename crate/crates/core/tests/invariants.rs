use bnncert::posterior::{bonferroni_bounds, intersection_sums};
use bnncert::{
    dsafe_lower, dsafe_upper, forward, ibp_forward, lbp_forward, linf_ball, max_robust_radius, pgd, propagate,
    psafe_lower, psafe_upper, relax_activation, Activation, AttackConfig, CertifyConfig, Epsilon, GaussianPosterior,
    InputBox, Method, Network, Objective, OutputSpec, Posterior, RadiusSearchConfig, SamplePosterior, Task,
    WeightBox, WeightVector,
};
use proptest::prelude::*;

fn small_net(hidden: usize, act: Activation) -> Network {
    Network::mlp(&[2, hidden, 3], act).unwrap()
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Relu), Just(Activation::Tanh)]
}

/// Network plus a weight vector of matching length.
fn net_and_weights() -> impl Strategy<Value = (Network, Vec<f64>)> {
    (2usize..6, activation()).prop_flat_map(|(h, act)| {
        let net = small_net(h, act);
        let n = net.num_params();
        (Just(net), prop::collection::vec(-1.5f64..1.5, n))
    })
}

fn gaussian(mean: &[f64], var: f64) -> Posterior<f64> {
    GaussianPosterior::new(mean.to_vec(), vec![var; mean.len()]).unwrap().into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ibp_box_grows_with_input_box(
        (net, w) in net_and_weights(),
        x in prop::collection::vec(-1.0f64..1.0, 2),
        e1 in 0.0f64..0.3,
        extra in 0.0f64..0.3,
        wr in 0.0f64..0.05,
    ) {
        let r = WeightBox::new(w.iter().map(|v| v - wr).collect(), w.iter().map(|v| v + wr).collect()).unwrap();
        let small = linf_ball(&x, &Epsilon::Uniform(e1), None).unwrap();
        let big = linf_ball(&x, &Epsilon::Uniform(e1 + extra), None).unwrap();
        let (sl, su) = ibp_forward(&net, &small, &r).unwrap();
        let (bl, bu) = ibp_forward(&net, &big, &r).unwrap();
        for k in 0..sl.len() {
            prop_assert!(bl[k] <= sl[k] && su[k] <= bu[k]);
        }
    }

    #[test]
    fn point_boxes_are_exact((net, w) in net_and_weights(), x in prop::collection::vec(-1.0f64..1.0, 2)) {
        let y = forward(&net, &WeightVector(w.clone()), &x).unwrap();
        let t = InputBox::point(&x).unwrap();
        let r = WeightBox::point(&w);
        for (lo, hi) in [ibp_forward(&net, &t, &r).unwrap(), lbp_forward(&net, &t, &r).unwrap()] {
            for k in 0..y.len() {
                prop_assert!((lo[k] - y[k]).abs() <= 1e-9 && (hi[k] - y[k]).abs() <= 1e-9);
                prop_assert!(lo[k] <= y[k] && y[k] <= hi[k]);
            }
        }
    }

    #[test]
    fn relaxation_sandwiches_activation(act in activation(), a in -6.0f64..6.0, width in 0.0f64..8.0) {
        let (zl, zu) = (a, a + width);
        let rel = relax_activation(act, zl, zu).unwrap();
        for i in 0..=1000 {
            let z = zl + (zu - zl) * i as f64 / 1000.0;
            let s = act.apply(z);
            prop_assert!(rel.lower_at(z) - s <= 1e-12, "lower at {z}: {} > {s}", rel.lower_at(z));
            prop_assert!(s - rel.upper_at(z) <= 1e-12, "upper at {z}: {} < {s}", rel.upper_at(z));
        }
    }

    #[test]
    fn contains_and_excludes_are_exclusive(
        lo in prop::collection::vec(-2.0f64..2.0, 3),
        w in prop::collection::vec(0.0f64..2.0, 3),
        class in 0usize..3,
    ) {
        let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
        let s = OutputSpec::argmax(class, 3).unwrap();
        prop_assert!(!(s.contains(&lo, &hi).unwrap() && s.excludes(&lo, &hi).unwrap()));
    }

    #[test]
    fn box_mass_bounded_and_monotone(
        mean in prop::collection::vec(-1.0f64..1.0, 3),
        var in 0.01f64..2.0,
        lo in prop::collection::vec(-2.0f64..2.0, 3),
        w in prop::collection::vec(0.0f64..2.0, 3),
        grow in 0.0f64..1.0,
    ) {
        let post = gaussian(&mean, var);
        let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
        let inner = WeightBox::new(lo.clone(), hi.clone()).unwrap();
        let outer = WeightBox::new(lo.iter().map(|v| v - grow).collect(), hi.iter().map(|v| v + grow).collect()).unwrap();
        let (m1, m2) = (post.box_mass(&inner), post.box_mass(&outer));
        prop_assert!((0.0..=1.0).contains(&m1) && (0.0..=1.0).contains(&m2));
        prop_assert!(m1 <= m2);
    }

    #[test]
    fn bonferroni_depth_one_is_union_bound_and_depths_tighten(
        centers in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2..7),
        half in 0.1f64..1.2,
    ) {
        let post = gaussian(&[0.0, 0.0], 1.0);
        let boxes: Vec<WeightBox<f64>> = centers
            .iter()
            .map(|c| WeightBox::new(c.iter().map(|v| v - half).collect(), c.iter().map(|v| v + half).collect()).unwrap())
            .collect();
        let singles: f64 = boxes.iter().map(|b| post.box_mass(b)).sum();
        let (_, u1) = bonferroni_bounds(&boxes, &post, 2, 1).unwrap();
        prop_assert!((u1 - singles.min(1.0)).abs() <= 1e-12);
        let n = boxes.len();
        let exact = {
            let s = intersection_sums(&post, &boxes, n);
            s.iter().enumerate().map(|(j, v)| if j % 2 == 0 { *v } else { -*v }).sum::<f64>()
        };
        let mut prev_lo = f64::NEG_INFINITY;
        let mut prev_hi = f64::INFINITY;
        for k in 1..=n.div_ceil(2) {
            let (lo, hi) = bonferroni_bounds(&boxes, &post, 2 * k, 2 * k - 1).unwrap();
            prop_assert!(lo >= prev_lo - 1e-12 && hi <= prev_hi + 1e-12, "depth {k}: not tighter");
            prop_assert!(lo <= exact + 1e-12 && exact <= hi + 1e-12);
            prev_lo = lo;
            prev_hi = hi;
        }
    }

    #[test]
    fn pgd_stays_inside_and_restarts_never_hurt(
        (net, w) in net_and_weights(),
        x in prop::collection::vec(-1.0f64..1.0, 2),
        eps in 0.0f64..0.5,
        class in 0usize..3,
        seed in any::<u64>(),
    ) {
        let t = linf_ball(&x, &Epsilon::Uniform(eps), None).unwrap();
        let w = WeightVector(w);
        let obj = Objective::CrossEntropy { class };
        let mut best = f64::NEG_INFINITY;
        for restarts in 1..=4 {
            let cfg = AttackConfig { iterations: 10, restarts, seed, ..AttackConfig::default() };
            let out = pgd(&net, &w, &t, &obj, &cfg).unwrap();
            prop_assert!(t.contains_point(&out.x));
            prop_assert!(out.value >= best);
            best = out.value;
        }
    }
}

/// Two-class net on one input whose logit margin is `w0 * x + w1`.
fn margin_net() -> Network {
    Network::mlp(&[1, 2], Activation::Identity).unwrap()
}

fn margin_posterior(mean: [f64; 2], var: f64) -> Posterior<f64> {
    // weights: W = [[a], [0]], b = [c, 0]
    GaussianPosterior::new(vec![mean[0], 0.0, mean[1], 0.0], vec![var, 1e-12, var, 1e-12]).unwrap().into()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn psafe_bounds_monotone_in_samples_and_radius(
        a in -1.0f64..1.0,
        c in 0.0f64..1.5,
        x in -1.0f64..1.0,
        var in 0.001f64..0.2,
        e1 in 0.0f64..0.3,
        extra in 0.0f64..0.3,
        seed in any::<u64>(),
        method in prop_oneof![Just(Method::Ibp), Just(Method::Lbp)],
    ) {
        let net = margin_net();
        let post = margin_posterior([a, c], var);
        let s = OutputSpec::argmax(0, 2).unwrap();
        let small = linf_ball(&[x], &Epsilon::Uniform(e1), None).unwrap();
        let big = linf_ball(&[x], &Epsilon::Uniform(e1 + extra), None).unwrap();
        let cfg = |n| CertifyConfig { num_samples: n, gamma: 1.5, method, rng_seed: seed, ..CertifyConfig::default() };
        let mut prev = 0.0;
        for n in [5, 10, 20] {
            let lo = psafe_lower(&net, &post, &small, &s, &cfg(n)).unwrap().value.scalar();
            prop_assert!(lo >= prev, "N={n}: {lo} < {prev}");
            prev = lo;
            let lo_big = psafe_lower(&net, &post, &big, &s, &cfg(n)).unwrap().value.scalar();
            prop_assert!(lo_big <= lo);
            let hi = psafe_upper(&net, &post, &small, &s, &cfg(n)).unwrap().value.scalar();
            prop_assert!(lo <= hi);
        }
    }

    #[test]
    fn dsafe_bounds_in_unit_interval(
        mean in prop::collection::vec(-1.0f64..1.0, 4),
        var in 0.001f64..0.5,
        x in -1.0f64..1.0,
        eps in 0.0f64..0.5,
        class in 0usize..2,
        method in prop_oneof![Just(Method::Ibp), Just(Method::Lbp)],
    ) {
        let net = margin_net();
        let post = gaussian(&mean, var);
        let t = linf_ball(&[x], &Epsilon::Uniform(eps), None).unwrap();
        let cfg = CertifyConfig { num_samples: 10, method, ..CertifyConfig::default() };
        let task = Task::Classification { class };
        let lo = dsafe_lower(&net, &post, &t, task, &cfg).unwrap().value.scalar();
        let hi = dsafe_upper(&net, &post, &t, task, &cfg).unwrap().value.scalar();
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(lo <= hi + 1e-12);
    }

    #[test]
    fn radius_grid_alignment_and_refinement(
        atoms in prop::collection::vec((-1.0f64..1.0, 0.05f64..1.0), 4..10),
        x in -0.5f64..0.5,
    ) {
        let net = margin_net();
        let samples: Vec<WeightVector<f64>> =
            atoms.iter().map(|&(a, c)| WeightVector(vec![a, 0.0, c, 0.0])).collect();
        let post: Posterior<f64> = SamplePosterior::uniform(samples).unwrap().into();
        let s = OutputSpec::argmax(0, 2).unwrap();
        let cfg = CertifyConfig { num_samples: atoms.len(), gamma: 0.0, ..CertifyConfig::default() };
        let coarse = RadiusSearchConfig { tau_safe: 0.6, step: 0.04, ..RadiusSearchConfig::default() };
        let fine = RadiusSearchConfig { step: 0.02, ..coarse.clone() };
        let rc = max_robust_radius(&net, &post, &[x], &s, &cfg, &coarse).unwrap();
        let rf = max_robust_radius(&net, &post, &[x], &s, &cfg, &fine).unwrap();
        for (r, step) in [(rc, 0.04), (rf, 0.02)] {
            let k = (r / step).round();
            prop_assert!((r - k * step).abs() <= 1e-12 || (r - coarse.eps_cap).abs() <= 1e-12);
        }
        prop_assert!(rf <= rc + 0.04 + 1e-12, "fine {rf} vs coarse {rc}");
    }
}

#[test]
fn forward_is_bitwise_deterministic() {
    let net = small_net(5, Activation::Tanh);
    let w = WeightVector((0..net.num_params()).map(|i| (i as f64 * 0.37).sin()).collect());
    let a = forward(&net, &w, &[0.3, -0.2]).unwrap();
    let b = forward(&net, &w, &[0.3, -0.2]).unwrap();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn distinct_atoms_point_boxes_sum_to_weights() {
    let samples: Vec<WeightVector<f64>> = (0..5).map(|i| WeightVector(vec![i as f64, 1.0])).collect();
    let weights = vec![0.1, 0.2, 0.3, 0.15, 0.25];
    let post: Posterior<f64> = SamplePosterior::new(samples.clone(), weights.clone()).unwrap().into();
    let total: f64 = samples.iter().map(|w| post.box_mass(&WeightBox::point(w.as_slice()))).sum();
    assert_eq!(total, weights.iter().sum::<f64>());
}

#[test]
fn f32_pipeline_is_sound() {
    let net = small_net(4, Activation::Relu);
    let w: Vec<f32> = (0..net.num_params()).map(|i| ((i * 7 % 11) as f32 - 5.0) / 5.0).collect();
    let r = WeightBox::new(w.iter().map(|v| v - 0.01).collect(), w.iter().map(|v| v + 0.01).collect()).unwrap();
    let t = InputBox::new(vec![0.1f32, -0.2], vec![0.2, -0.1]).unwrap();
    for method in [Method::Ibp, Method::Lbp] {
        let (lo, hi) = propagate(method, &net, &t, &r).unwrap();
        for x in [[0.1f32, -0.2], [0.2, -0.1], [0.15, -0.15]] {
            let y = forward(&net, &WeightVector(w.clone()), &x).unwrap();
            for k in 0..y.len() {
                assert!(lo[k] <= y[k] && y[k] <= hi[k]);
            }
        }
    }
}
