//! Reference problems with known behavior: exact solutions, steady states
//! and stagnant data.

use std::f64::consts::PI;

use crate::error::Result;
use crate::flux::FluxParams;
use crate::grid::{ScalarField, SpaceTimeGrid, SpatialGrid};
use crate::scenario::{Datum, Scenario};
use crate::solver::SolveResult;

/// A scenario together with its exact solution, when one is known.
pub struct Benchmark {
    pub scenario: Scenario,
    pub exact: Option<fn([f64; 2], f64) -> f64>,
}

impl Benchmark {
    /// Largest nodal error over all levels.
    pub fn max_error(&self, result: &SolveResult) -> Option<f64> {
        let exact = self.exact?;
        let grid = result.grid();
        let space = grid.space();
        let mut worst: f64 = 0.0;
        for level in 0..grid.levels() {
            let t = grid.time(level);
            for (k, v) in result.u.slice(level).iter().enumerate() {
                worst = worst.max((v - exact(space.coord(k), t)).abs());
            }
        }
        Some(worst)
    }
}

fn box_grid(lower: [f64; 2], upper: [f64; 2], cells: usize, t_end: f64, steps: usize) -> Result<SpaceTimeGrid> {
    let h = (upper[0] - lower[0]) / cells as f64;
    let cells1 = ((upper[1] - lower[1]) / h).round() as usize;
    let space = SpatialGrid::new(vec![cells, cells1], h, lower.to_vec())?;
    SpaceTimeGrid::new(space, t_end / steps as f64, 0.0, steps)
}

fn plain(grid: SpaceTimeGrid, p: f64, nu: f64, f: Datum, g: Datum, schedule: Vec<f64>) -> Result<Scenario> {
    let mut s = Scenario::new(grid, FluxParams::new(p, nu, 0.0)?, f, g, schedule)?;
    s.mollify = false;
    Ok(s)
}

fn heat_exact(x: [f64; 2], t: f64) -> f64 {
    (-2.0 * t).exp() * x[0].sin() * x[1].sin()
}

/// `p = 2`, `ν = 0`, `f = 0` on `[0, π]²` with `u = e^{−2t} sin x₁ sin x₂`.
pub fn heat(cells: usize, steps: usize, t_end: f64, schedule: Vec<f64>) -> Result<Benchmark> {
    let grid = box_grid([0.0, 0.0], [PI, PI], cells, t_end, steps)?;
    let g = Datum::expr("exp(-2*t) * sin(x1) * sin(x2)")?;
    Ok(Benchmark {
        scenario: plain(grid, 2.0, 0.0, Datum::zero(), g, schedule)?,
        exact: Some(heat_exact),
    })
}

fn affine_exact(x: [f64; 2], _t: f64) -> f64 {
    2.0 * x[0]
}

/// `u = 2x₁` with `p = 3`, `ν = 0.5`, `f = 0` on the unit square: steady.
pub fn affine(cells: usize, steps: usize, epsilon: f64) -> Result<Benchmark> {
    let grid = box_grid([0.0, 0.0], [1.0, 1.0], cells, 1.0, steps)?;
    Ok(Benchmark {
        scenario: plain(grid, 3.0, 0.5, Datum::zero(), Datum::expr("2 * x1")?, vec![epsilon])?,
        exact: Some(affine_exact),
    })
}

/// Amplitude of the stagnant bump; its gradient peaks at `0.85ν`.
pub const STAGNANT_PEAK: f64 = 0.85;

/// `u₀ = (0.85/π) sin(πx₁) sin(πx₂)` with `p = 2`, `ν = 1`, `f = 0`: the
/// gradient stays inside the degeneracy ball, so only the `ε` term moves it.
pub fn stagnant(cells: usize, steps: usize, epsilon: f64) -> Result<Benchmark> {
    let grid = box_grid([0.0, 0.0], [1.0, 1.0], cells, 1.0, steps)?;
    let g = Datum::expr(&format!("{STAGNANT_PEAK} / pi * sin(pi*x1) * sin(pi*x2)"))?;
    Ok(Benchmark {
        scenario: plain(grid, 2.0, 1.0, Datum::zero(), g, vec![epsilon])?,
        exact: None,
    })
}

fn manufactured_exact(x: [f64; 2], t: f64) -> f64 {
    (1.0 + t) * x[0] * x[0] / 2.0 + t.sin() * x[1]
}

/// Parameters of [`manufactured`].
pub const MANUFACTURED_P: f64 = 3.0;
pub const MANUFACTURED_NU: f64 = 0.5;

/// `u* = (1+t)x₁²/2 + sin(t)x₂` on `[1,2]×[0,1]` with `p = 3`, `ν = 0.5`.
/// Here `|Du*| ≥ x₁ ≥ ν + 0.5`, and the datum is
/// `f = ∂_t u* − div[((r−ν)²/r + εr) Du*]`, tabulated on the grid for the
/// given `ε`.
pub fn manufactured(cells: usize, steps: usize, t_end: f64, epsilon: f64) -> Result<Benchmark> {
    let grid = box_grid([1.0, 0.0], [2.0, 1.0], cells, t_end, steps)?;
    let nu = MANUFACTURED_NU;
    let f = ScalarField::from_fn(grid.clone(), |x, t| {
        let a = (1.0 + t) * x[0];
        let b = t.sin();
        let r = a.hypot(b);
        let k = (r - nu).powi(2) / r + epsilon * r;
        // d/dr of the radial flux profile r·k(r) = (r−ν)² + εr²
        let dk = 1.0 - nu * nu / (r * r) + epsilon;
        let div = (1.0 + t) * (k + dk * a * a / r);
        x[0] * x[0] / 2.0 + t.cos() * x[1] - div
    })?;
    Ok(Benchmark {
        scenario: plain(
            grid,
            MANUFACTURED_P,
            nu,
            Datum::Table(f),
            Datum::expr("(1 + t) * x1^2 / 2 + sin(t) * x2")?,
            vec![epsilon],
        )?,
        exact: Some(manufactured_exact),
    })
}

/// `log₂(e_k / e_{k+1})` for consecutive errors under halving.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
