use llab_core::benchmarks::observed_orders;
use llab_core::calculus::{divergence, gradient_slice};
use llab_core::grid::{SpatialGrid, VectorSlice};

#[test]
fn gradient_of_sine_is_second_order() {
    let mut errors = Vec::new();
    for cells in [10, 20, 40] {
        let space = SpatialGrid::cube(2, cells, 0.0, 1.0).unwrap();
        let u = space.sample(|x| x[0].sin());
        let g = gradient_slice(&space, &u);
        let err = (0..space.node_count())
            .map(|k| {
                let x = space.coord(k);
                (g.at(k)[0] - x[0].cos()).abs().max(g.at(k)[1].abs())
            })
            .fold(0.0, f64::max);
        errors.push(err);
    }
    for order in observed_orders(&errors) {
        assert!(order >= 1.9, "{errors:?}");
    }
}

#[test]
fn divergence_of_a_gradient_field_converges_away_from_the_boundary() {
    let mut errors = Vec::new();
    for cells in [16, 32, 64] {
        let space = SpatialGrid::cube(2, cells, 0.0, std::f64::consts::PI).unwrap();
        let mut values = Vec::with_capacity(2 * space.node_count());
        for k in 0..space.node_count() {
            let x = space.coord(k);
            values.push(x[0].cos() * x[1].sin());
            values.push(x[0].sin() * x[1].cos());
        }
        let div = divergence(&space, &VectorSlice::from_values(2, values));
        let err = (0..space.node_count())
            .filter(|&k| space.boundary_distance(k) >= 3)
            .map(|k| {
                let x = space.coord(k);
                (div[k] + 2.0 * x[0].sin() * x[1].sin()).abs()
            })
            .fold(0.0, f64::max);
        errors.push(err);
    }
    for order in observed_orders(&errors) {
        assert!(order >= 1.9, "{errors:?}");
    }
}

#[test]
fn constant_fields_are_annihilated() {
    let space = SpatialGrid::cube(2, 12, -1.0, 1.0).unwrap();
    let g = gradient_slice(&space, &vec![3.5; space.node_count()]);
    assert!(g.values().iter().all(|v| *v == 0.0));
    let f = VectorSlice::from_values(2, [1.5, -2.0].repeat(space.node_count()));
    let div = divergence(&space, &f);
    for k in (0..space.node_count()).filter(|&k| space.boundary_distance(k) >= 2) {
        assert!(div[k].abs() < 1e-12, "{}", div[k]);
    }
}
