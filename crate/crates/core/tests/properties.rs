//! Randomized invariants over the pure calculation layers.

use proptest::prelude::*;
use robinlab::boundary::{in_a_ratio, BoundaryField};
use robinlab::mesh::{BoundaryLoop, BoundaryTag};
use robinlab::spectral::FourierSeries;
use robinlab::stability::{geometric_grid, phi, PhiParams};

proptest! {
    // band-limited data on a uniform circle grid below Nyquist projects
    // back to the exact coefficients
    #[test]
    fn fourier_projection_round_trips(
        a0 in -5.0..5.0f64,
        cos in prop::collection::vec(-3.0..3.0f64, 1..6),
        sin in prop::collection::vec(-3.0..3.0f64, 1..6),
    ) {
        let mut series = FourierSeries::constant(a0);
        series.cos = cos;
        series.sin = sin;
        let order = series.order();
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, 4 * order + 8);
        let values = series.sample(&lp.angles);
        let back = FourierSeries::from_samples(&values, &lp.angles, &lp.node_weights, order);
        prop_assert!((back.a0 - series.a0).abs() < 1e-10);
        for n in 1..=order {
            for kind in [robinlab::spectral::ModeKind::Cos, robinlab::spectral::ModeKind::Sin] {
                prop_assert!((back.coef(n, kind) - series.coef(n, kind)).abs() < 1e-10);
            }
        }
    }

    // the modulus function never increases within either of its branches
    // (the branches themselves meet discontinuously unless e^-c = c^-eta)
    #[test]
    fn phi_is_nonincreasing_per_branch(
        eta in 0.01..0.24f64,
        c in 0.1..5.0f64,
        t_lo in 0.001..0.999f64,
        t_hi in 0.001..0.999f64,
        upper in any::<bool>(),
    ) {
        let params = PhiParams::new(eta, c).unwrap();
        let switch = c.exp();
        let (r_lo, r_hi) = if upper {
            // both radii beyond the switch point
            (switch * (1.0 + t_lo), switch * (1.0 + t_lo + t_hi))
        } else {
            (switch * t_lo.min(t_hi), switch * t_lo.max(t_hi))
        };
        prop_assume!(r_hi > r_lo);
        let lo = phi(&params, r_lo).unwrap();
        let hi = phi(&params, r_hi).unwrap();
        prop_assert!(hi <= lo * (1.0 + 1e-12));
    }

    // the gradient ratio that decides flux-class membership is scale
    // invariant
    #[test]
    fn gradient_ratio_ignores_scaling(
        values in prop::collection::vec(-10.0..10.0f64, 16..40),
        scale in prop::sample::select(vec![-7.5, -0.3, 0.04, 2.0, 1e4]),
    ) {
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::S, 1.0, values.len());
        let f = BoundaryField::from_values(&lp, values).unwrap();
        prop_assume!(f.l2_norm() > 1e-9);
        let base = in_a_ratio(&f).unwrap();
        let scaled = in_a_ratio(&f.scale(scale)).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1.0));
    }

    // geometric grids hit both endpoints and stay strictly increasing
    #[test]
    fn geometric_grid_is_sound(
        lo in 1e-4..1.0f64,
        ratio in 1.5..1e4f64,
        n in 2..80usize,
    ) {
        let hi = lo * ratio;
        let grid = geometric_grid(lo, hi, n).unwrap();
        prop_assert_eq!(grid.len(), n);
        prop_assert!((grid[0] - lo).abs() <= 1e-12 * lo);
        prop_assert!((grid[n - 1] - hi).abs() <= 1e-12 * hi);
        prop_assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }

    // moving a field onto the loop it already lives on changes nothing
    #[test]
    fn resample_onto_same_loop_is_identity(
        values in prop::collection::vec(-10.0..10.0f64, 12..48),
    ) {
        let lp = BoundaryLoop::uniform_circle(BoundaryTag::Gamma, 2.0, values.len());
        let f = BoundaryField::from_values(&lp, values).unwrap();
        let back = f.resample(&lp).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
