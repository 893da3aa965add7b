use proptest::prelude::*;
use statrs::function::beta::beta;

use bsq_core::calculus::{d_sigma, hk_inner, l12, partial_beta};
use bsq_core::elliptic::{decompose_with, EllipticOperator};
use bsq_core::evolution::{Model, StepOptions};
use bsq_core::params::ETA;
use bsq_core::profiles::residual_of;
use bsq_core::samples::{self, Kind};
use bsq_core::verify::{assemble_mf, hardy_cos_sides, hardy_eta_sides, Trig};
use bsq_core::{Frame, Grid, Params, ScalarField};

fn grid(n: usize) -> (Params, Grid) {
    let mut p = Params::default().with_resolution(n, n);
    p.k = 2;
    let g = Grid::new(&p).unwrap();
    (p, g)
}

fn sample(g: &Grid, kind: Kind, seed: u64) -> ScalarField {
    samples::admissible_field(g, Frame::Y, kind, &mut samples::rng(seed))
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-10 * scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hk_inner_is_bilinear(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000, c in -3.0f64..3.0, k in 0usize..3) {
        let (_, g) = grid(24);
        let (f, h, w) = (sample(&g, Kind::Odd, s1), sample(&g, Kind::Odd, s2), sample(&g, Kind::Odd, s3));
        let lhs = hk_inner(&g, &f.axpy(c, &h), &w, k).unwrap();
        let rhs = hk_inner(&g, &f, &w, k).unwrap() + c * hk_inner(&g, &h, &w, k).unwrap();
        let scale = hk_inner(&g, &f, &f, k).unwrap().sqrt() * hk_inner(&g, &w, &w, k).unwrap().sqrt() * (1.0 + c.abs());
        prop_assert!(close(lhs, rhs, scale), "{lhs} vs {rhs}");
        let sym = hk_inner(&g, &w, &f, k).unwrap();
        prop_assert!(close(sym, hk_inner(&g, &f, &w, k).unwrap(), scale));
    }

    #[test]
    fn l12_is_additive(s1 in 0u64..1000, s2 in 0u64..1000, c in -3.0f64..3.0, y in 0.0f64..4.0) {
        let (_, g) = grid(32);
        let (f, h) = (sample(&g, Kind::Odd, s1), sample(&g, Kind::Odd, s2));
        let lhs = l12(&g, &f.axpy(c, &h), y).unwrap();
        let (a, b) = (l12(&g, &f, y).unwrap(), l12(&g, &h, y).unwrap());
        prop_assert!(close(lhs, a + c * b, a.abs() + c.abs() * b.abs() + 1e-12));
    }

    #[test]
    fn elliptic_solve_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, c in -3.0f64..3.0) {
        let (p, g) = grid(32);
        let op = EllipticOperator::new(&g, &p).unwrap();
        let (f, h) = (sample(&g, Kind::Odd, s1), sample(&g, Kind::Odd, s2));
        let sum = decompose_with(&g, &op, &f.axpy(c, &h)).unwrap().phi;
        let parts = decompose_with(&g, &op, &f).unwrap().phi.axpy(c, &decompose_with(&g, &op, &h).unwrap().phi);
        prop_assert!(sum.max_abs_diff(&parts) <= 1e-9 * (1.0 + parts.max_abs()));
    }

    #[test]
    fn linearization_matches_central_difference(seed in 0u64..1000) {
        // the profile operator is quadratic in F, so the central difference is exact
        let (p, _) = grid(32);
        let model = Model::new(&p, StepOptions::default()).unwrap();
        let g = &model.grid;
        let e = model.project(&sample(g, Kind::Odd, seed)).unwrap();
        let pf = &model.profile;
        let phi_e = decompose_with(g, &model.op, &e).unwrap().phi;
        let (de, be) = (d_sigma(g, &e), partial_beta(g, &e).unwrap());
        let eval = |h: f64| {
            residual_of(
                g,
                &pf.f_star.axpy(h, &e),
                &pf.f_star_dsigma.axpy(h, &de),
                &pf.f_star_dbeta.axpy(h, &be),
                &model.phi_f.axpy(h, &phi_e),
                &p,
            )
            .unwrap()
            .0
        };
        let h = 1e-3;
        let fd = eval(h).sub(&eval(-h)).scale(0.5 / h);
        let mf = assemble_mf(&model, &e).unwrap();
        prop_assert!(fd.max_abs_diff(&mf) <= 1e-8 * (1.0 + mf.max_abs()), "{}", fd.max_abs_diff(&mf));
    }

    #[test]
    fn linearization_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, c in -2.0f64..2.0) {
        let (p, _) = grid(24);
        let model = Model::new(&p, StepOptions::default()).unwrap();
        let g = &model.grid;
        let (f, h) = (sample(g, Kind::Odd, s1), sample(g, Kind::Odd, s2));
        let lhs = assemble_mf(&model, &f.axpy(c, &h)).unwrap();
        let rhs = assemble_mf(&model, &f).unwrap().axpy(c, &assemble_mf(&model, &h).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-9 * (1.0 + rhs.max_abs()));
    }
}

// Beta-function oracles for the two Hardy functionals on simple samples.

#[test]
fn hardy_eta_sides_of_sin2b() {
    let x = (1.0 - ETA) / 2.0;
    // int sin^{-eta}(2b) db and 4 int cos^2(2b) sin^{-eta}(2b) db over (0, pi/2)
    let lhs = 0.5 * beta(x, 0.5);
    let rhs = 2.0 * beta(x, 1.5) / (1.0 + ETA).powi(2);
    let (l, r) = hardy_eta_sides(|t: &Trig| (t.s2, 2.0 * t.c2), 512);
    assert!((l - lhs).abs() < 1e-9 * lhs, "{l} vs {lhs}");
    assert!((r - rhs).abs() < 1e-9 * rhs, "{r} vs {rhs}");
}

#[test]
fn hardy_cos_sides_of_constant() {
    let lhs = 0.5 * beta(0.5, (1.0 - ETA) / 2.0);
    let z = 0.5 * beta(0.5, (3.0 - ETA) / 2.0);
    let rhs = (2.0 / (1.0 - ETA) + 1.0) * z;
    let (l, r) = hardy_cos_sides(|_: &Trig| (1.0, 0.0), 512);
    assert!((l - lhs).abs() < 1e-9 * lhs, "{l} vs {lhs}");
    assert!((r - rhs).abs() < 1e-9 * rhs, "{r} vs {rhs}");
}

#[test]
fn hardy_eta_sides_of_sin2b_cos2b() {
    // f = sin(2b) cos(2b): f' = 2 cos(4b)
    let x = (1.0 - ETA) / 2.0;
    let lhs = 0.5 * beta(x, 1.5);
    // 4 int_0^{pi/2} cos^2(4b) sin^{-eta}(2b) db, with cos^2(2u) = 1 - 4 sin^2 u cos^2 u
    let c2 = 0.5 * beta(x, 0.5) - 2.0 * beta(x + 1.0, 1.5);
    let rhs = 4.0 * c2 / (1.0 + ETA).powi(2);
    let (l, r) = hardy_eta_sides(|t: &Trig| (t.s2 * t.c2, 2.0 * (t.c2 * t.c2 - t.s2 * t.s2)), 512);
    assert!((l - lhs).abs() < 1e-9 * lhs, "{l} vs {lhs}");
    assert!((r - rhs).abs() < 1e-9 * rhs, "{r} vs {rhs}");
    assert!(l <= r);
}

fn zero_model(p: &Params) -> (Model, bsq_core::evolution::SimState) {
    let model = Model::new(p, StepOptions { forcing: false, ..Default::default() }).unwrap();
    let th = ScalarField::zeros(&model.grid, Frame::YBar, bsq_core::calculus::parity::THETA);
    let e = ScalarField::zeros(&model.grid, Frame::Y, bsq_core::Parity::ODD);
    let st = model.init_from_theta(&th, &e).unwrap();
    (model, st)
}

#[test]
fn modulation_identities_hold_along_a_run() {
    let mut p = Params::default().with_resolution(32, 32);
    p.k = 1;
    let model = Model::new(&p, StepOptions::default()).unwrap();
    let st = model.initial_state(5).unwrap();
    let m0 = st.modulation.clone();
    let c0 = m0.ln_mu - (2.0 + p.delta) * (m0.ln_lambda + m0.s);
    let mut n = 0;
    model
        .run_to(st, 0.25, |s| {
            let m = &s.modulation;
            let c = m.ln_mu - (2.0 + p.delta) * (m.ln_lambda + m.s);
            assert!((c - c0).abs() < 1e-12 * (1.0 + c0.abs()), "{c} vs {c0}");
            assert!((m.l1() * m.s.exp() - 1.0).abs() < 1e-13);
            n += 1;
            Ok(())
        })
        .unwrap();
    assert_eq!(n, 100);
}

#[test]
fn zero_data_stays_zero() {
    let (model, st) = zero_model(&Params::default().with_resolution(24, 24));
    let st = model.run_to(st, 0.1, |_| Ok(())).unwrap();
    assert_eq!(st.eps.max_abs(), 0.0);
    assert!(st.history.iter().all(|r| r.e == 0.0 && r.eps_hk == 0.0));
}

#[test]
fn runs_are_bit_reproducible() {
    let mut p = Params::default().with_resolution(32, 32);
    p.k = 1;
    let go = || {
        let model = Model::new(&p, StepOptions::default()).unwrap();
        let st = model.run_to(model.initial_state(11).unwrap(), 0.05, |_| Ok(())).unwrap();
        st.history.iter().flat_map(|r| r.values().map(f64::to_bits)).collect::<Vec<_>>()
    };
    let a = go();
    bsq_core::par::set_sequential(true);
    let b = go();
    bsq_core::par::set_sequential(false);
    assert_eq!(a, b);
    assert_eq!(a, go());
}
