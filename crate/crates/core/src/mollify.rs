//! Discrete space-time mollification with zero extension.

use crate::error::{Error, Result};
use crate::grid::{ScalarField, SpaceTimeGrid};

/// Normalized samples of the bump `exp(−1/(1 − s²))` on the grid stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifierKernel {
    pub epsilon: f64,
    /// `(axis offsets, weight)` for the spatial stencil.
    pub spatial: Vec<([isize; 2], f64)>,
    /// `(level offset, weight)` for the temporal stencil.
    pub temporal: Vec<(isize, f64)>,
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Rescales `w` to unit sum and then nudges the entry at `center` until the
/// left-to-right sum is exactly `1.0`.
fn normalize(w: &mut [f64], center: usize) {
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    for _ in 0..16 {
        let s: f64 = w.iter().sum();
        if s == 1.0 {
            return;
        }
        w[center] += 1.0 - s;
    }
}

impl MollifierKernel {
    pub fn new(grid: &SpaceTimeGrid, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mollification radius {epsilon} must be >= 0"
            )));
        }
        let h = grid.h();
        let dim = grid.dim();
        let mut spatial = Vec::new();
        let reach = if epsilon > 0.0 { (epsilon / h).ceil() as isize } else { 0 };
        let (bmin, bmax) = if dim == 2 { (-reach, reach) } else { (0, 0) };
        for b in bmin..=bmax {
            for a in -reach..=reach {
                let r = h * ((a * a + b * b) as f64).sqrt();
                let w = if a == 0 && b == 0 {
                    1.0
                } else if epsilon > 0.0 {
                    bump(r / epsilon) / bump(0.0)
                } else {
                    0.0
                };
                if w > 0.0 {
                    spatial.push(([a, b], w));
                }
            }
        }
        let tau = grid.tau();
        let treach = if epsilon > 0.0 { (epsilon / tau).ceil() as isize } else { 0 };
        let mut temporal = Vec::new();
        for k in -treach..=treach {
            let w = if k == 0 {
                1.0
            } else {
                bump(tau * k as f64 / epsilon) / bump(0.0)
            };
            if w > 0.0 {
                temporal.push((k, w));
            }
        }
        let mut ws: Vec<f64> = spatial.iter().map(|e| e.1).collect();
        let cs = spatial.iter().position(|e| e.0 == [0, 0]).expect("center");
        normalize(&mut ws, cs);
        for (e, w) in spatial.iter_mut().zip(ws) {
            e.1 = w;
        }
        let mut wt: Vec<f64> = temporal.iter().map(|e| e.1).collect();
        let ct = temporal.iter().position(|e| e.0 == 0).expect("center");
        normalize(&mut wt, ct);
        for (e, w) in temporal.iter_mut().zip(wt) {
            e.1 = w;
        }
        Ok(Self {
            epsilon,
            spatial,
            temporal,
        })
    }

    pub fn spatial_sum(&self) -> f64 {
        self.spatial.iter().map(|e| e.1).sum()
    }

    pub fn temporal_sum(&self) -> f64 {
        self.temporal.iter().map(|e| e.1).sum()
    }
}

/// `f_ε`: convolution in space, then in time, with `f = 0` outside the grid.
/// `epsilon = 0` returns a copy of `f`.
pub fn mollify(f: &ScalarField, epsilon: f64) -> Result<ScalarField> {
    if epsilon == 0.0 {
        return Ok(f.clone());
    }
    let grid = f.grid();
    let kernel = MollifierKernel::new(grid, epsilon)?;
    let space = grid.space();
    let n = space.node_count();
    let cells = space.cells();
    let dim = space.dim();
    let mut stage = vec![0.0; n * grid.levels()];
    for level in 0..grid.levels() {
        let src = f.slice(level);
        let dst = &mut stage[level * n..(level + 1) * n];
        for (node, out) in dst.iter_mut().enumerate() {
            let m = space.multi_index(node);
            let mut acc = 0.0;
            for &(off, w) in &kernel.spatial {
                let mut mm = [0usize; 2];
                let mut inside = true;
                for s in 0..dim {
                    // f(x − εy): subtract the offset
                    let v = m[s] as isize - off[s];
                    if v < 0 || v > cells[s] as isize {
                        inside = false;
                        break;
                    }
                    mm[s] = v as usize;
                }
                if inside {
                    acc += w * src[space.flat(mm)];
                }
            }
            *out = acc;
        }
    }
    let mut values = vec![0.0; n * grid.levels()];
    let levels = grid.levels() as isize;
    for level in 0..grid.levels() {
        for &(k, w) in &kernel.temporal {
            let l = level as isize - k;
            if l < 0 || l >= levels {
                continue;
            }
            let l = l as usize;
            let (dst, src) = (
                &mut values[level * n..(level + 1) * n],
                &stage[l * n..(l + 1) * n],
            );
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    ScalarField::from_values(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;

    fn grid(cells: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(SpatialGrid::cube(2, cells, 0.0, 1.0).unwrap(), 0.01, 0.0, 40).unwrap()
    }

    #[test]
    fn weights_are_normalized_exactly() {
        for eps in [0.001, 0.05, 0.1, 0.2, 0.37] {
            let k = MollifierKernel::new(&grid(32), eps).unwrap();
            assert_eq!(k.spatial_sum(), 1.0);
            assert_eq!(k.temporal_sum(), 1.0);
            assert!(k.spatial.iter().all(|e| e.1 >= 0.0));
            assert!(k.temporal.iter().all(|e| e.1 >= 0.0));
            let h = 1.0 / 32.0;
            for (off, _) in &k.spatial {
                let r = h * ((off[0] * off[0] + off[1] * off[1]) as f64).sqrt();
                assert!(r < eps || *off == [0, 0]);
            }
        }
    }

    #[test]
    fn zero_radius_is_identity() {
        let f = ScalarField::from_fn(grid(8), |x, t| x[0] * x[1] + t).unwrap();
        assert_eq!(mollify(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn constants_are_preserved_away_from_the_boundary() {
        let g = grid(32);
        let f = ScalarField::from_fn(g.clone(), |_, _| 1.0).unwrap();
        let m = mollify(&f, 0.06).unwrap();
        let space = g.space();
        for level in 10..30 {
            for node in 0..space.node_count() {
                if space.boundary_distance(node) > 2 {
                    assert!((m.slice(level)[node] - 1.0).abs() < 1e-14);
                }
            }
        }
        // zero extension lowers the corner value
        assert!(m.slice(0)[0] < 0.5);
    }

    #[test]
    fn error_shrinks_with_radius() {
        let g = grid(40);
        let f = ScalarField::from_fn(g.clone(), |x, t| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() + t * t)
            .unwrap();
        let space = g.space();
        let mut prev = f64::INFINITY;
        for eps in [0.2, 0.1, 0.05] {
            let m = mollify(&f, eps).unwrap();
            let mut err: f64 = 0.0;
            for level in 25..=40 {
                for node in 0..space.node_count() {
                    let x = space.coord(node);
                    if (x[0] - 0.5).abs() < 0.2 && (x[1] - 0.5).abs() < 0.2 {
                        err = err.max((m.slice(level)[node] - f.slice(level)[node]).abs());
                    }
                }
            }
            assert!(err < prev, "eps {eps}: {err} vs {prev}");
            prev = err;
        }
    }
}
