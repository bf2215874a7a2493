use deautoconv::autoconv::{autoconvolve, autoconvolve_naive, derivative_adjoint, derivative_apply, DataCase};
use deautoconv::experiments::{add_noise, estimate_holder, NoiseSpec};
use deautoconv::grid::{combine, l2_norm, project_nonneg, GridFn, GridSpec};
use deautoconv::io;
use deautoconv::regularize::{minimize, TikhonovConfig};
use proptest::prelude::*;

fn grid_fn(dim: usize, max_m: usize) -> impl Strategy<Value = GridFn> {
    (2..=max_m).prop_flat_map(move |m| {
        let len = m.pow(dim as u32);
        prop::collection::vec(-2.0..2.0f64, len)
            .prop_map(move |v| GridFn::from_values(GridSpec::unit_cube(dim, m).unwrap(), v).unwrap())
    })
}

fn any_case() -> impl Strategy<Value = DataCase> {
    prop_oneof![Just(DataCase::Full), Just(DataCase::Limited)]
}

fn pair(dim: usize, max_m: usize) -> impl Strategy<Value = (GridFn, GridFn)> {
    grid_fn(dim, max_m).prop_flat_map(|x| {
        let spec = x.spec().clone();
        let len = spec.len();
        (Just(x), prop::collection::vec(-2.0..2.0f64, len).prop_map(move |v| GridFn::from_values(spec.clone(), v).unwrap()))
    })
}

fn rel_dist(a: &GridFn, b: &GridFn) -> f64 {
    l2_norm(&combine(1.0, a, -1.0, b).unwrap()) / l2_norm(b).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_matches_direct_sum(x in prop_oneof![grid_fn(1, 40), grid_fn(2, 12), grid_fn(3, 6)], case in any_case()) {
        prop_assert!(rel_dist(&autoconvolve(&x, case).unwrap(), &autoconvolve_naive(&x, case).unwrap()) <= 1e-10);
    }

    #[test]
    fn operator_is_even_and_quadratic(x in grid_fn(2, 10), case in any_case(), c in -3.0..3.0f64) {
        let y = autoconvolve(&x, case).unwrap();
        prop_assert_eq!(autoconvolve(&x.scale(-1.0), case).unwrap(), y.clone());
        prop_assert!(rel_dist(&autoconvolve(&x.scale(c), case).unwrap(), &y.scale(c * c)) <= 1e-12);
    }

    #[test]
    fn derivative_is_polarization((x, d) in pair(2, 10), case in any_case()) {
        // F(x + d) − F(x − d) = 2·F′(x)d
        let fp = autoconvolve(&combine(1.0, &x, 1.0, &d).unwrap(), case).unwrap();
        let fm = autoconvolve(&combine(1.0, &x, -1.0, &d).unwrap(), case).unwrap();
        let lin = derivative_apply(&x, &d, case).unwrap();
        let lhs = combine(0.5, &fp, -0.5, &fm).unwrap();
        prop_assert!(l2_norm(&combine(1.0, &lhs, -1.0, &lin).unwrap()) <= 1e-12 * (1.0 + l2_norm(&lin)));
    }

    #[test]
    fn adjoint_dot_product((x, d) in pair(2, 9), case in any_case(), seed in any::<u64>()) {
        let y = autoconvolve(&x, case).unwrap();
        let w = add_noise(&y, &NoiseSpec { delta_rel: 1.0, seed }).unwrap();
        let lhs = derivative_apply(&x, &d, case).unwrap().inner(&w).unwrap();
        let rhs = d.inner(&derivative_adjoint(&x, &w, case).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1e-12));
    }

    #[test]
    fn noise_has_exact_level(x in grid_fn(2, 8), delta in 1e-4..0.5f64, seed in any::<u64>()) {
        prop_assume!(l2_norm(&x) > 0.0);
        let yd = add_noise(&x, &NoiseSpec { delta_rel: delta, seed }).unwrap();
        prop_assert!((rel_dist(&yd, &x) - delta).abs() <= 1e-13 * delta.max(1.0));
    }

    #[test]
    fn holder_recovers_planted_exponent(kappa in 0.05..1.5f64, c in 0.01..10.0f64) {
        let pairs: Vec<_> = [0.1, 0.03, 0.01, 0.003, 0.001].iter().map(|&d: &f64| (d, c * d.powf(kappa))).collect();
        prop_assert!((estimate_holder(&pairs).unwrap() - kappa).abs() <= 1e-10);
    }

    #[test]
    fn gfn_roundtrip(x in prop_oneof![grid_fn(1, 20), grid_fn(3, 5)]) {
        let mut buf = Vec::new();
        io::write_gridfn(&mut buf, &x).unwrap();
        prop_assert_eq!(io::read_gridfn(buf.as_slice()).unwrap(), x);
    }

    #[test]
    fn constrained_solves_stay_feasible(x in grid_fn(1, 12), seed in any::<u64>()) {
        let xp = project_nonneg(&x);
        prop_assume!(l2_norm(&xp) > 0.0);
        let y = autoconvolve(&xp, DataCase::Limited).unwrap();
        let yd = add_noise(&y, &NoiseSpec { delta_rel: 0.05, seed }).unwrap();
        let mut cfg = TikhonovConfig::new(GridFn::constant(x.spec().clone(), 0.5), DataCase::Limited).with_alpha(1e-3);
        cfg.max_iters = 300;
        cfg.record_trace = true;
        let res = minimize(&yd, &cfg.xbar.clone(), &cfg).unwrap();
        prop_assert!(res.x.min_value() >= 0.0);
        prop_assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
