//! Lebesgue norms over discrete parabolic cylinders.

use serde::Serialize;

use crate::calculus::gradient_slice;
use crate::error::{Error, Result};
use crate::grid::{ParabolicCylinder, ScalarField};

fn check_q(q: f64) -> Result<()> {
    if q.is_finite() && q >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("exponent q = {q} must be >= 1")))
    }
}

/// `(Σ_{Q} |F|^q hⁿ·tau)^{1/q}`.
pub fn cylinder_norm(f: &ScalarField, cyl: &ParabolicCylinder, q: f64) -> Result<f64> {
    check_q(q)?;
    let nodes = cyl.nodes(f.grid())?;
    let n = f.grid().space().node_count();
    let v = f.values();
    Ok(nodes
        .integrate(|l, k| v[l * n + k].abs().powf(q))
        .powf(1.0 / q))
}

/// `max_t ‖F(·, t)‖_{L²(B_ρ)}` over the levels of the cylinder.
pub fn sup_time_slice_norm(f: &ScalarField, cyl: &ParabolicCylinder) -> Result<f64> {
    let nodes = cyl.nodes(f.grid())?;
    let n = f.grid().space().node_count();
    let v = f.values();
    Ok(nodes.sup_slice(|l, k| v[l * n + k].powi(2)).sqrt())
}

/// Both sides of the parabolic interpolation inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterpolationSides {
    pub lhs: f64,
    pub rhs: f64,
}

/// `lhs = ∫_Q |v|^{p+pq/n}`, `rhs = (sup_t ∫_{B}|v|^q)^{p/n} · ∫_Q |Dv|^p`.
pub fn interpolation_check(
    v: &ScalarField,
    cyl: &ParabolicCylinder,
    p: f64,
    q: f64,
) -> Result<InterpolationSides> {
    check_q(q)?;
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be >= 1")));
    }
    let grid = v.grid();
    let space = grid.space();
    let nodes = cyl.nodes(grid)?;
    let n = space.node_count();
    let dim = space.dim() as f64;
    let vals = v.values();
    let lhs = nodes.integrate(|l, k| vals[l * n + k].abs().powf(p + p * q / dim));
    let sup = nodes.sup_slice(|l, k| vals[l * n + k].abs().powf(q));
    let mut grad_norms = vec![Vec::new(); grid.levels()];
    for &l in &nodes.levels {
        grad_norms[l] = gradient_slice(space, v.slice(l)).norms();
    }
    let energy = nodes.integrate(|l, k| grad_norms[l][k].powf(p));
    Ok(InterpolationSides {
        lhs,
        rhs: sup.powf(p / dim) * energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpaceTimeGrid, SpatialGrid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(SpatialGrid::cube(2, 16, 0.0, 1.0).unwrap(), 0.01, 0.0, 30).unwrap()
    }

    fn cyl() -> ParabolicCylinder {
        ParabolicCylinder::new(vec![0.5, 0.5], 0.3, 0.4).unwrap()
    }

    #[test]
    fn constant_fields() {
        let g = grid();
        let one = ScalarField::from_fn(g.clone(), |_, _| 1.0).unwrap();
        let nodes = cyl().nodes(&g).unwrap();
        let measure = nodes.count() as f64 * g.cell_measure();
        assert!((cylinder_norm(&one, &cyl(), 1.0).unwrap() - measure).abs() < 1e-14);
        let zero = ScalarField::zeros(g);
        assert_eq!(cylinder_norm(&zero, &cyl(), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn half_indicator() {
        let g = grid();
        let ind = ScalarField::from_fn(g.clone(), |x, _| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let nodes = cyl().nodes(&g).unwrap();
        let count = nodes
            .space
            .iter()
            .filter(|&&k| g.space().coord(k)[0] < 0.5)
            .count();
        let expected = (count as f64 * nodes.levels.len() as f64 * g.cell_measure()).sqrt();
        let got = cylinder_norm(&ind, &cyl(), 2.0).unwrap();
        assert!((got - expected).abs() < 1e-14);
        let half = (nodes.measure() / 2.0).sqrt();
        // the nodes on the centre line x₁ = 1/2 are the quadrature error
        let layer = nodes
            .space
            .iter()
            .filter(|&&k| g.space().coord(k)[0] == 0.5)
            .count() as f64
            * nodes.levels.len() as f64
            * g.cell_measure();
        assert!((got * got - half * half).abs() <= layer);
    }

    #[test]
    fn empty_cylinder() {
        let g = grid();
        let tiny = ParabolicCylinder::new(vec![0.51, 0.51], 0.3, 0.005).unwrap();
        let f = ScalarField::zeros(g);
        assert!(matches!(
            cylinder_norm(&f, &tiny, 2.0),
            Err(Error::DegenerateRegion(_))
        ));
    }

    #[test]
    fn sup_slice() {
        let g = grid();
        let f = ScalarField::from_fn(g.clone(), |_, t| t).unwrap();
        let nodes = cyl().nodes(&g).unwrap();
        let expected = 0.3 * (nodes.space.len() as f64 * g.space().cell_volume()).sqrt();
        assert!((sup_time_slice_norm(&f, &cyl()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn interpolation_trivial_and_homogeneous() {
        let g = grid();
        let zero = ScalarField::zeros(g.clone());
        let s = interpolation_check(&zero, &cyl(), 2.0, 2.0).unwrap();
        assert_eq!((s.lhs, s.rhs), (0.0, 0.0));
        let bump = ScalarField::from_fn(g, |x, t| {
            let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
            (1.0 + t) * (0.16 - r2).max(0.0).powi(2)
        })
        .unwrap();
        let a = interpolation_check(&bump, &cyl(), 2.0, 2.0).unwrap();
        let b = interpolation_check(&bump.map(|v| 2.0 * v), &cyl(), 2.0, 2.0).unwrap();
        let factor = 2f64.powf(2.0 + 2.0 * 2.0 / 2.0);
        assert!((b.lhs / a.lhs - factor).abs() < 1e-10 * factor);
        assert!((b.rhs / a.rhs - factor).abs() < 1e-10 * factor);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn norms_increase_with_q_on_unit_measure(seed in any::<u64>()) {
            let g = grid();
            let nodes = cyl().nodes(&g).unwrap();
            let scale = nodes.measure();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = g.space().node_count() * g.levels();
            let f = ScalarField::from_values(g, (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let mut prev = 0.0;
            for q in [1.0, 1.5, 2.0, 3.0, 4.5, 8.0] {
                // normalize |Q| = 1
                let v = cylinder_norm(&f, &cyl(), q).unwrap() / scale.powf(1.0 / q);
                prop_assert!(v >= prev * (1.0 - 1e-12));
                prev = v;
            }
        }
    }
}
