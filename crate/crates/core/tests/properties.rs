use proptest::prelude::*;

use wellscatter::analysis::{detect_peaks, fit_power_law};
use wellscatter::core1d::{energy_expectation, norm, CayleyPropagator, ComplexField1D, EvolutionParams, Grid1D};
use wellscatter::model::{make_packet_1d, make_packet_2d, PacketSpec, PotentialShape, PotentialSpec};
use wellscatter::oracle::SquareWellStates;
use wellscatter::radial2d::{evolve_2d_with, radial_grid, Evolve2dOptions, Observers2D};

fn shape() -> impl Strategy<Value = PotentialShape> {
    prop_oneof![Just(PotentialShape::Gaussian), Just(PotentialShape::Square), Just(PotentialShape::Lorentzian)]
}

fn potential() -> impl Strategy<Value = PotentialSpec> {
    (shape(), 0.0..2.0f64, 0.3..2.0f64).prop_map(|(shape, depth, width)| PotentialSpec { shape, depth, width })
}

struct Case {
    grid: Grid1D,
    v: Vec<f64>,
    psi: ComplexField1D,
    mass: f64,
}

fn case(pot: PotentialSpec, q: f64, x0: f64, mass: f64) -> Case {
    let grid = Grid1D::symmetric(20.0, 0.05).unwrap();
    let v = pot.sample(&grid);
    let psi = make_packet_1d(&PacketSpec::gaussian(q, x0, 0.8), &grid).unwrap();
    Case { grid, v, psi, mass }
}

fn max_diff(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cayley_step_is_unitary(pot in potential(), q in -2.0..2.0f64, x0 in -6.0..6.0f64, mass in 1.0..30.0f64, dt in 1e-3..0.2f64) {
        let c = case(pot, q, x0, mass);
        let prop = CayleyPropagator::new(&c.grid, &c.v, c.mass, dt).unwrap();
        let mut psi = c.psi.clone();
        for _ in 0..20 {
            let before = norm(&psi);
            prop.step(psi.values_mut());
            prop_assert!((norm(&psi) / before - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_steps_undo_forward_steps(pot in potential(), q in -2.0..2.0f64, mass in 1.0..30.0f64, dt in 1e-3..0.1f64, n in 1usize..200) {
        let c = case(pot, q, -3.0, mass);
        let fwd = CayleyPropagator::new(&c.grid, &c.v, c.mass, dt).unwrap();
        let bwd = CayleyPropagator::new(&c.grid, &c.v, c.mass, -dt).unwrap();
        let mut psi = c.psi.clone();
        for _ in 0..n {
            fwd.step(psi.values_mut());
        }
        for _ in 0..n {
            bwd.step(psi.values_mut());
        }
        prop_assert!(max_diff(psi.values(), c.psi.values()) < 1e-9 * c.psi.max_abs());
    }

    #[test]
    fn discrete_energy_is_conserved(pot in potential(), q in -1.5..1.5f64, mass in 1.0..30.0f64, dt in 1e-3..0.1f64) {
        let c = case(pot, q, -4.0, mass);
        let prop = CayleyPropagator::new(&c.grid, &c.v, c.mass, dt).unwrap();
        let e0 = energy_expectation(&c.psi, &c.v, c.mass).unwrap().value;
        let mut psi = c.psi.clone();
        for _ in 0..100 {
            prop.step(psi.values_mut());
        }
        let e1 = energy_expectation(&psi, &c.v, c.mass).unwrap().value;
        prop_assert!((e1 - e0).abs() < 1e-10 * e0.abs().max(1.0));
    }

    #[test]
    fn evolution_commutes_with_parity(pot in potential(), q in -2.0..2.0f64, x0 in -6.0..6.0f64, mass in 1.0..30.0f64, dt in 1e-3..0.1f64) {
        let c = case(pot, q, x0, mass);
        let prop = CayleyPropagator::new(&c.grid, &c.v, c.mass, dt).unwrap();
        let mut a = c.psi.clone();
        let mut b: Vec<_> = c.psi.values().iter().rev().copied().collect();
        for _ in 0..30 {
            prop.step(a.values_mut());
            prop.step(&mut b);
        }
        b.reverse();
        prop_assert!(max_diff(a.values(), &b) < 1e-12 * c.psi.max_abs());
    }

    #[test]
    fn gaussian_packets_are_normalized(q in -3.0..3.0f64, x0 in -5.0..5.0f64, width in 0.3..2.0f64) {
        let grid = Grid1D::symmetric(25.0, 0.02).unwrap();
        let psi = make_packet_1d(&PacketSpec::gaussian(q, x0, width), &grid).unwrap();
        prop_assert!((norm(&psi) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn potentials_are_even_and_bounded(pot in potential(), x in -10.0..10.0f64) {
        let v = pot.eval(x);
        prop_assert_eq!(v, pot.eval(-x));
        prop_assert!(v <= 0.0 && v >= -pot.depth);
    }

    #[test]
    fn square_well_conserves_flux(depth in 0.01..3.0f64, a in 0.2..3.0f64, mass in 0.5..30.0f64, p in 1e-3..20.0f64, sign in prop::bool::ANY) {
        let s = SquareWellStates::new(depth, a, mass).unwrap();
        let p = if sign { p } else { -p };
        let flux = s.reflection(p).unwrap().norm_sqr() + s.transmission(p).unwrap().norm_sqr();
        prop_assert!((flux - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_states_solve_their_matching_condition(depth in 0.01..3.0f64, a in 0.2..3.0f64, mass in 0.5..30.0f64) {
        let s = SquareWellStates::new(depth, a, mass).unwrap();
        prop_assert_eq!(s.bound_states.len(), s.analytic_count());
        for b in &s.bound_states {
            prop_assert!(b.energy < 0.0 && b.energy > -depth);
            prop_assert!(s.bound_state_residual(b) < 1e-10);
        }
    }

    #[test]
    fn peak_detection_ignores_scale(scale in 1e-3..1e3f64, k in 0.5..2.0f64, lambda in 0.0..0.15f64) {
        let xs: Vec<f64> = (0..=4000).map(|i| -40.0 + 35.0 * i as f64 / 4000.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (-lambda * x.abs()).exp() * (k * x).sin().powi(2)).collect();
        let scaled: Vec<f64> = ys.iter().map(|y| y * scale).collect();
        let a = detect_peaks(&xs, &ys, (-40.0, -5.0), 0.05).unwrap();
        let b = detect_peaks(&xs, &scaled, (-40.0, -5.0), 0.05).unwrap();
        prop_assert_eq!(a.positions, b.positions);
    }

    #[test]
    fn power_law_fit_recovers_exact_series(c in 0.01..100.0f64, p in 0.3..3.0f64) {
        let series: Vec<(f64, f64)> = (0..=200).map(|i| 100.0 + 10.0 * i as f64).map(|t| (t, c * t.powf(-p))).collect();
        let fit = fit_power_law(&series, (100.0, 2100.0)).unwrap();
        prop_assert!((fit.exponent - p).abs() < 1e-9);
        prop_assert!((fit.prefactor / c - 1.0).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn on_axis_scattering_is_mirror_symmetric(q in 0.3..1.5f64, depth in 0.0..1.5f64, w in 0.5..2.0f64, angle in 1.0..179.0f64) {
        let grid = radial_grid(12.0, 0.05).unwrap();
        let set = make_packet_2d(&PacketSpec::gaussian(q, -5.0, 0.8), &grid, 24).unwrap();
        let t = 2.0;
        let obs = Observers2D::default().with_profiles(&[(angle, t), (-angle, t)]);
        let params = EvolutionParams::new(5.0, 0.02, t).unwrap();
        let ev = evolve_2d_with(&set, &PotentialSpec::gaussian(depth, w), &params, &obs, Evolve2dOptions { exploit_mirror_symmetry: false }).unwrap();
        let (a, b) = (ev.profile(angle, t).unwrap(), ev.profile(-angle, t).unwrap());
        let scale = a.max().max(1e-300);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            prop_assert!((x.1 - y.1).abs() <= 1e-8 * scale);
        }
    }
}
