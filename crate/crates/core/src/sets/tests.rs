use super::*;
use crate::ident::{LearnedModel, PimlModel};
use crate::idx;
use nalgebra::{DMatrix, Matrix1, Matrix4, Vector1};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn weights() -> (SMatrix<f64, NX, NX>, SMatrix<f64, NU, NU>) {
    let q = SMatrix::<f64, NX, NX>::from_diagonal(&State::from_row_slice(&[
        10.0, 10.0, 10.0, 5.0, 5.0, 5.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0,
    ]));
    (q, Matrix4::identity() * 0.1)
}

fn hover() -> (PimlModel, MatA, MatB) {
    let p = QuadParams::default();
    let m = PimlModel::nominal(p.clone(), 0.01);
    let (a, b) = hover_linearization(&m, &p, [0.0, 0.0, 2.0]);
    (m, a, b)
}

struct Linear {
    a: MatA,
    b: MatB,
}

impl DiscreteModel for Linear {
    fn dt(&self) -> f64 {
        1.0
    }
    fn step(&self, x: &State, u: &Input) -> State {
        self.a * x + self.b * u
    }
    fn step_jacobian(&self, x: &State, u: &Input) -> (State, MatA, MatB) {
        (self.step(x, u), self.a, self.b)
    }
}

#[test]
fn jacobian_of_linear_map_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lin = Linear {
        a: MatA::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        b: MatB::from_fn(|_, _| rng.random_range(-1.0..1.0)),
    };
    let (a, b) = jacobian(&lin, &State::repeat(0.3), &Input::repeat(-0.2));
    assert!((a - lin.a).amax() < 1e-6);
    assert!((b - lin.b).amax() < 1e-6);
}

#[test]
fn hover_jacobian_position_rows() {
    let (m, _, _) = hover();
    let p = QuadParams::default();
    let (a, _) = jacobian(&m, &crate::quadsim::hover_state([0.0, 0.0, 2.0]), &p.hover_input());
    for i in 0..3 {
        for j in 0..3 {
            let expect = if i == j { 0.01 } else { 0.0 };
            assert!((a[(i, 3 + j)] - expect).abs() < 1e-4);
        }
    }
}

#[test]
fn finite_differences_agree_with_richardson_and_analytic() {
    let (m, _, _) = hover();
    let mut x = crate::quadsim::hover_state([0.1, -0.2, 2.0]);
    x[idx::PHI] = 0.2;
    x[idx::THETA] = -0.1;
    x[idx::WZ] = 0.5;
    x[idx::VX] = 0.3;
    let u = Input::new(0.3, 1e-3, -2e-3, 5e-4);
    let (a1, b1) = jacobian(&m, &x, &u);
    let (a2, b2) = jacobian_richardson(&m, &x, &u);
    let (_, a3, b3) = m.step_jacobian(&x, &u);
    assert!((a1 - a2).amax() < 1e-5, "{}", (a1 - a2).amax());
    assert!((b1 - b2).amax() < 1e-5);
    assert!((a1 - a3).amax() < 1e-5);
    assert!((b1 - b3).amax() < 1e-5);
}

#[test]
fn hover_lqr_has_small_residual_and_stable_loop() {
    let (_, a, b) = hover();
    let (q, r) = weights();
    let lqr = lqr_gain(&a, &b, &q, &r).unwrap();
    assert!(lqr.residual <= 1e-8, "{}", lqr.residual);
    let (gain, p) = tube_gain(&a, &b, &q, &r).unwrap();
    assert_eq!(p, lqr.p);
    assert!(spectral_radius(&gain.closed_loop(&a, &b)) < 1.0);
    assert!(gain.k.norm() <= gain.bound + 1e-12);
}

#[test]
fn center_update_examples() {
    let d = DisturbanceSet::new(DisturbanceConfig::default()).unwrap();
    let c = d.update_center(&State::repeat(0.1)).center;
    assert!((c - State::repeat(0.01)).amax() < 1e-15);

    let mut fixed = d.clone();
    fixed.center = State::repeat(0.4);
    assert_eq!(fixed.update_center(&fixed.center.clone()).center, fixed.center);

    let mut s = d;
    let target = State::repeat(-0.3);
    for k in 1..=50 {
        s = s.update_center(&target);
        let expect = -0.3 * (1.0 - 0.9f64.powi(k));
        assert!((s.center[0] - expect).abs() < 1e-12);
    }
}

#[test]
fn bounds_update_examples() {
    let mut d = DisturbanceSet::new(DisturbanceConfig::default()).unwrap();
    d.half_widths = State::repeat(0.05);
    let mut sample = State::zeros();
    sample[4] = 0.05;
    let out = d.update_bounds(&sample);
    assert!((out.half_widths - State::repeat(0.05)).amax() < 1e-15);

    sample[4] = 10.0;
    let capped = d.update_bounds(&sample);
    assert_eq!(capped.half_widths, State::repeat(0.1));

    let mut z = d.clone();
    for k in 1..=40 {
        z = z.update_bounds(&State::zeros());
        let expect = (0.05 * 0.95f64.powi(k)).max(1e-4);
        assert!((z.half_widths[0] - expect).abs() < 1e-14);
    }
    for _ in 0..500 {
        z = z.update_bounds(&State::zeros());
    }
    assert_eq!(z.half_widths, State::repeat(1e-4));
}

#[test]
fn per_component_variant_tracks_each_axis() {
    let cfg = DisturbanceConfig {
        per_component: true,
        ..DisturbanceConfig::default()
    };
    let mut d = DisturbanceSet::new(cfg).unwrap();
    let mut sample = State::zeros();
    sample[3] = 0.08;
    for _ in 0..300 {
        d = d.update_bounds(&sample);
    }
    assert!((d.half_widths[3] - 0.08).abs() < 1e-6);
    assert_eq!(d.half_widths[0], 1e-4);
    assert_eq!(d.max_residual[3], 0.08);
}

#[test]
fn invalid_gains_are_rejected() {
    for (l, g) in [(1.0, 0.5), (0.5, 0.0), (-0.1, 0.5)] {
        let cfg = DisturbanceConfig {
            lambda: l,
            gamma: g,
            ..DisturbanceConfig::default()
        };
        assert!(DisturbanceSet::new(cfg).is_err());
    }
}

#[test]
fn learning_uncertainty_examples() {
    assert_eq!(learning_uncertainty(3.0, 0.0).half_widths(), State::zeros());
    assert_eq!(learning_uncertainty(2.0, 0.5).half_widths(), State::repeat(1.0));
}

#[test]
fn scalar_lipschitz_cost() {
    let b = 0.7;
    let q = 3.0;
    let x = BoxSet::symmetric(Vector1::new(b));
    let l = lipschitz_cost(
        &Matrix1::new(q),
        &Matrix1::new(1.0),
        &x,
        &x,
        &Vector1::zeros(),
        &Vector1::zeros(),
    );
    assert!((l.l_x - 2.0 * q * b).abs() < 1e-14);

    let point = BoxSet::symmetric(Vector1::zeros());
    let l0 = lipschitz_cost(
        &Matrix1::new(q),
        &Matrix1::new(1.0),
        &point,
        &point,
        &Vector1::zeros(),
        &Vector1::zeros(),
    );
    assert_eq!(l0.l_x, 0.0);
}

#[test]
fn lipschitz_vertex_enumeration_matches_diagonal_path() {
    let x = BoxSet::new(
        nalgebra::Vector3::new(-1.0, 0.0, 2.0),
        nalgebra::Vector3::new(0.5, 1.0, 3.0),
    )
    .unwrap();
    let q = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 2.0, 3.0));
    let mut q_dense = q;
    q_dense[(0, 1)] = 1e-300;
    let r = Matrix1::new(1.0);
    let u = BoxSet::symmetric(Vector1::new(1.0));
    let xr = nalgebra::Vector3::new(0.0, 0.5, 2.5);
    let a = lipschitz_cost(&q, &r, &x, &u, &xr, &Vector1::zeros());
    let b = lipschitz_cost(&q_dense, &r, &x, &u, &xr, &Vector1::zeros());
    assert!((a.l_x - b.l_x).abs() < 1e-12);
}

#[test]
fn lipschitz_bound_holds_on_benchmark_boxes() {
    let (q, r) = weights();
    let xb = state_constraints();
    let ub = input_constraints();
    let xr = crate::quadsim::hover_state([0.0, 0.0, 2.0]);
    let ur = QuadParams::default().hover_input();
    let l = lipschitz_cost(&q, &r, &xb, &ub, &xr, &ur);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draw_x = |rng: &mut ChaCha8Rng| State::from_fn(|i, _| rng.random_range(xb.lower[i]..=xb.upper[i]));
    let draw_u = |rng: &mut ChaCha8Rng| Input::from_fn(|i, _| rng.random_range(ub.lower[i]..=ub.upper[i]));
    for _ in 0..10_000 {
        let (x1, x2) = (draw_x(&mut rng), draw_x(&mut rng));
        let (u1, u2) = (draw_u(&mut rng), draw_u(&mut rng));
        let lhs = (stage_cost(&q, &r, &x1, &u1, &xr, &ur) - stage_cost(&q, &r, &x2, &u2, &xr, &ur)).abs();
        let rhs = l.l_x * (x1 - x2).norm() + l.l_u * (u1 - u2).norm();
        assert!(lhs <= rhs * (1.0 + 1e-12));
    }
}

#[test]
fn l_xi_examples() {
    let samples: Vec<(State, Input)> = (0..20)
        .map(|k| (State::repeat(k as f64 * 0.1), Input::repeat(0.01 * k as f64)))
        .collect();
    assert!((estimate_l_xi(&[Term::Const], &samples) - 1.5).abs() < 1e-15);
    let more = estimate_l_xi(&[Term::Const, Term::State(0), Term::StateInput(1, 0)], &samples);
    assert!(more >= 1.5);
}

proptest! {
    #[test]
    fn l_xi_bounds_coefficient_changes(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = vec![Term::Const, Term::State(3), Term::Sin(6), Term::StateInput(2, 0)];
        let samples: Vec<(State, Input)> = (0..50)
            .map(|_| (State::from_fn(|_, _| rng.random_range(-1.0..1.0)),
                      Input::from_fn(|_, _| rng.random_range(-0.5..0.5))))
            .collect();
        let l = estimate_l_xi(&terms, &samples);
        let xi1 = DMatrix::from_fn(terms.len(), NX, |_, _| rng.random_range(-1.0..1.0));
        let xi2 = DMatrix::from_fn(terms.len(), NX, |_, _| rng.random_range(-1.0..1.0));
        let m1 = LearnedModel::new(terms.clone(), &xi1, 1).unwrap();
        let m2 = LearnedModel::new(terms.clone(), &xi2, 1).unwrap();
        let (x, u) = &samples[rng.random_range(0..samples.len())];
        let lhs = (m1.evaluate(x, u) - m2.evaluate(x, u)).norm();
        prop_assert!(lhs <= l * (&xi1 - &xi2).norm() + 1e-12);
    }

    #[test]
    fn center_update_is_convex_combination(c in -1.0f64..1.0, s in -1.0f64..1.0) {
        let mut d = DisturbanceSet::new(DisturbanceConfig::default()).unwrap();
        d.center = State::repeat(c);
        let out = d.update_center(&State::repeat(s)).center[0];
        prop_assert!(out >= c.min(s) - 1e-15 && out <= c.max(s) + 1e-15);
    }

    #[test]
    fn half_widths_stay_within_floor_and_cap(samples in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        let mut d = DisturbanceSet::new(DisturbanceConfig::default()).unwrap();
        for v in samples {
            let mut x = State::zeros();
            x[5] = v;
            d = d.update(&x);
            prop_assert!(d.half_widths.iter().all(|h| *h >= 1e-4 && *h <= 0.1));
        }
    }
}

#[test]
fn benchmark_rpi_is_certified() {
    let (_, a, b) = hover();
    let (q, r) = weights();
    let (gain, _) = tube_gain(&a, &b, &q, &r).unwrap();
    let a_cl = gain.closed_loop(&a, &b);
    let map = RpiMap::new(&a_cl, 1e-10).unwrap();
    let w = State::repeat(0.1 * 0.01);
    let s = map.apply(&w).unwrap();
    eprintln!(
        "rho {} rho_abs {} method {} s {:?}",
        map.spectral_radius,
        map.abs_spectral_radius,
        map.method_name(),
        s.half_widths.as_slice()
    );
    assert!(s.margin >= 0.0);
    let x_s = tighten(&state_constraints(), &s.half_widths);
    let u_s = tighten_input(&input_constraints(), &gain.k, &s.half_widths);
    eprintln!("x_s {:?}\nu_s {:?}", x_s.map(|b| b.half_widths()), u_s);
}

#[test]
fn tube_falls_back_to_previous_snapshot() {
    let (_, a, b) = hover();
    let (q, r) = weights();
    let (gain, _) = tube_gain(&a, &b, &q, &r).unwrap();
    let a_cl = gain.closed_loop(&a, &b);
    let hover_u = QuadParams::default().hover_input();
    let mut tube = Tube::new(&a_cl, gain.clone(), state_constraints(), input_constraints(), hover_u, 0.01, 1e-10).unwrap();
    let small = DisturbanceSet::fixed(1e-4);
    let first = tube.refresh(&small, &learning_uncertainty(1.0, 0.0)).unwrap();
    assert!(!first.fallback);
    assert_eq!(first.scale, 1.0);
    let second = tube.refresh(&small, &learning_uncertainty(1.0, 1e6)).unwrap();
    assert!(second.fallback);
    assert_eq!(tube.fallbacks, 1);
    assert_eq!(second.rpi, first.rpi);

    // no admissible history: the box is scaled until half the headroom survives
    let mut fresh = Tube::new(&a_cl, gain, state_constraints(), input_constraints(), hover_u, 0.01, 1e-10).unwrap();
    let big = fresh.refresh(&DisturbanceSet::fixed(0.1), &learning_uncertainty(1.0, 0.0)).unwrap();
    assert!(big.fallback && big.scale > 0.0 && big.scale < 1.0);
    let headroom = 0.4 - hover_u[0];
    assert!(big.input_box.upper[0] >= hover_u[0] + 0.5 * headroom - 1e-9);
    assert!(big.input_box.upper[0] <= hover_u[0] + 0.5 * headroom + 1e-6);
}

#[test]
fn learned_model_changes_hover_jacobian() {
    let p = QuadParams::default();
    let mut xi = DMatrix::zeros(1, NX);
    xi[(0, idx::VX)] = -0.5;
    let m = PimlModel::new(
        p.clone(),
        0.01,
        Arc::new(LearnedModel::new(vec![Term::State(idx::VX)], &xi, 1).unwrap()),
    );
    let (a, _) = hover_linearization(&m, &p, [0.0, 0.0, 2.0]);
    let (_, a0, _) = hover();
    assert!((a[(idx::VX, idx::VX)] - (a0[(idx::VX, idx::VX)] - 0.005)).abs() < 1e-9);
}
