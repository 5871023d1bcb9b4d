use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steadystein::birth_death::{stationary, Centering};
use steadystein::diffusion::DensityCurve;
use steadystein::metrics::{kolmogorov, kolmogorov_discrete, wasserstein1, wasserstein1_discrete, DiscreteLaw};
use steadystein::mphn::{des_simulate, DesConfig, PhaseType};
use steadystein::{Mode, QueueParams};

/// Erlang-C mean number in system from the Erlang-B recursion.
fn erlang_c_mean(r: f64, n: u64) -> f64 {
    let mut b = 1.0;
    for k in 1..=n {
        b = r * b / (k as f64 + r * b);
    }
    let rho = r / n as f64;
    let c = b / (1.0 - rho * (1.0 - b));
    r + c * rho / (1.0 - rho)
}

fn erlang_c() -> impl Strategy<Value = QueueParams> {
    (1u64..200, 0.05f64..0.98).prop_map(|(n, f)| QueueParams::with_load(f * n as f64, n, 0.0).unwrap())
}

fn erlang_a() -> impl Strategy<Value = QueueParams> {
    (1u64..200, 0.2f64..2.5, 0.05f64..5.0).prop_map(|(n, f, a)| QueueParams::with_load(f * n as f64, n, a).unwrap())
}

fn any_queue() -> impl Strategy<Value = QueueParams> {
    prop_oneof![erlang_c(), erlang_a()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn departure_rate_is_monotone(p in any_queue(), k in 0.0f64..400.0) {
        prop_assert!(p.departure_rate(k + 1.0) >= p.departure_rate(k));
        prop_assert!(p.departure_rate(k) >= 0.0);
    }

    #[test]
    fn drift_vanishes_at_fluid_point(p in any_queue()) {
        prop_assert!(p.drift(0.0).abs() < 1e-12);
        prop_assert!(p.lattice_point(0) < 0.0);
        let x = p.lattice_point(p.n());
        prop_assert!((x + p.zeta()).abs() < 1e-9 * (1.0 + x.abs()));
    }

    #[test]
    fn drift_points_inward(p in any_queue(), x in 0.01f64..20.0) {
        prop_assert!(p.drift(-x) > 0.0);
        prop_assert!(p.drift(x) <= 0.0);
        if p.alpha() > 0.0 {
            prop_assert!(p.drift(x) < 0.0);
        }
    }

    #[test]
    fn diffusion_coefficient_positive(p in any_queue(), x in -30.0f64..30.0) {
        for m in Mode::ALL {
            prop_assert!(p.diff_coeff(x, m) > 0.0);
        }
    }

    #[test]
    fn lattice_normalised_and_balanced(p in any_queue()) {
        let l = stationary(&p, 1e-12).unwrap();
        let total: f64 = l.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(l.probs().iter().all(|&x| x >= 0.0));
        prop_assert!(l.detailed_balance_error() < 1e-10);
    }

    #[test]
    fn erlang_c_mean_matches_recursion(p in erlang_c()) {
        let l = stationary(&p, 1e-14).unwrap();
        let want = erlang_c_mean(p.offered_load(), p.n());
        prop_assert!((l.mean_count() - want).abs() < 1e-8 * want.max(1.0));
    }

    #[test]
    fn matched_abandonment_is_poisson(n in 1u64..100, r in 0.5f64..150.0) {
        let p = QueueParams::with_load(r, n, 1.0).unwrap();
        let l = stationary(&p, 1e-14).unwrap();
        let mut pk = (-r).exp();
        for k in 0..l.probs().len().min(60) {
            prop_assert!((l.pmf_at(k) - pk).abs() < 1e-12 + 1e-9 * pk);
            pk *= r / (k + 1) as f64;
        }
        let m1 = l.scaled_moment(1, Centering::Fluid).unwrap();
        let m2 = l.scaled_moment(2, Centering::Fluid).unwrap();
        prop_assert!(m1.abs() < 1e-8);
        prop_assert!((m2 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn densities_integrate_to_one(p in any_queue()) {
        for m in Mode::ALL {
            let c = DensityCurve::new(&p, m).unwrap();
            prop_assert!((c.cdf(f64::INFINITY) - 1.0).abs() < 1e-9);
            prop_assert!(c.cdf(f64::NEG_INFINITY).abs() < 1e-12);
            let (a, b) = (c.cdf(-0.5), c.cdf(0.5));
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn distances_are_bounded(p in any_queue()) {
        let l = stationary(&p, 1e-12).unwrap();
        for m in Mode::ALL {
            let c = DensityCurve::new(&p, m).unwrap();
            let k = kolmogorov(&l, &c);
            prop_assert!((0.0..=1.0).contains(&k));
            prop_assert!(wasserstein1(&l, &c) >= 0.0);
        }
    }

    #[test]
    fn discrete_metrics_symmetric(
        xs in prop::collection::vec((-10.0f64..10.0, 0.01f64..1.0), 1..8),
        ys in prop::collection::vec((-10.0f64..10.0, 0.01f64..1.0), 1..8),
    ) {
        let norm = |v: Vec<(f64, f64)>| {
            let s: f64 = v.iter().map(|a| a.1).sum();
            DiscreteLaw::new(v.into_iter().map(|(x, p)| (x, p / s)).collect()).unwrap()
        };
        let (a, b) = (norm(xs), norm(ys));
        prop_assert_eq!(wasserstein1_discrete(&a, &a), 0.0);
        prop_assert_eq!(kolmogorov_discrete(&a, &a), 0.0);
        prop_assert!((wasserstein1_discrete(&a, &b) - wasserstein1_discrete(&b, &a)).abs() < 1e-12);
        prop_assert!((kolmogorov_discrete(&a, &b) - kolmogorov_discrete(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn point_masses(x in -50.0f64..50.0, y in -50.0f64..50.0) {
        let (a, b) = (DiscreteLaw::point(x), DiscreteLaw::point(y));
        prop_assert!((wasserstein1_discrete(&a, &b) - (x - y).abs()).abs() < 1e-12);
    }
}

fn random_phase_type(rng: &mut ChaCha8Rng) -> PhaseType {
    let d = rng.random_range(1..=4usize);
    let mut p: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    let last = d - 1;
    p[last] = 1.0 - p[..last].iter().sum::<f64>();
    let nu = (0..d).map(|_| rng.random_range(0.2..5.0)).collect();
    let mut routing = vec![0.0; d * d];
    for i in 0..d {
        let keep = rng.random_range(0.0..0.9);
        let w: Vec<f64> = (0..d).map(|j| if j == i { 0.0 } else { rng.random::<f64>() }).collect();
        let ws: f64 = w.iter().sum();
        if ws > 0.0 {
            for j in 0..d {
                routing[i * d + j] = keep * w[j] / ws;
            }
        }
    }
    PhaseType::new(p, nu, routing).unwrap()
}

#[test]
fn phase_type_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let pt = random_phase_type(&mut rng);
        let g: f64 = pt.gamma().iter().sum();
        assert!((g - 1.0).abs() < 1e-12, "gamma sums to {g}");
        assert!(pt.gamma().iter().all(|&x| x >= 0.0));
        let s = pt.sigma();
        assert!((&s - s.transpose()).amax() < 1e-14);
        assert!(s.clone().cholesky().is_some(), "sigma not positive definite: {s}");
        // R gamma = mu p.
        let rg = pt.r_matrix() * nalgebra::DVector::from_column_slice(pt.gamma());
        for i in 0..pt.dim() {
            assert!((rg[i] - pt.mu() * pt.p()[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn des_conserves_customers() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..6 {
        let pt = random_phase_type(&mut rng);
        let cfg = DesConfig { horizon: 200.0, burnin: 10.0, reps: 2, seed: i, ssc_interval: 0.0 };
        let res = des_simulate(&pt, 20.0 * pt.mu(), 20, 0.7, &cfg).unwrap();
        assert!(res.flow_balanced(), "{:?}", res.flows);
        assert!(res.events() > 0);
    }
}

#[test]
fn des_is_reproducible() {
    let cfg = DesConfig { horizon: 100.0, burnin: 5.0, reps: 2, seed: 3, ssc_interval: 1.0 };
    let pt = PhaseType::h2_preset();
    let a = des_simulate(&pt, 30.0, 30, 1.0, &cfg).unwrap();
    let b = des_simulate(&pt, 30.0, 30, 1.0, &cfg).unwrap();
    assert_eq!(a.mean_abs_total.estimate, b.mean_abs_total.estimate);
    assert_eq!(a.ssc_samples, b.ssc_samples);
}
