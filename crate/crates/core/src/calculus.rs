//! Discrete gradient and divergence with summation by parts, difference
//! quotients along coordinate axes.
//!
//! The gradient is centered in the interior and uses the second-order
//! one-sided formula `(∓3u₀ ± 4u₁ ∓ u₂)/2h` on boundary nodes. The inner
//! product carries per-axis node weights `h·(1/4, 5/4, 1, …, 1, 5/4, 1/4)`;
//! these are the unique weights for which the negative adjoint of that
//! gradient annihilates constant vector fields at every interior node, so
//! affine profiles are discrete steady states. The divergence is defined as
//! that adjoint and summation by parts holds by construction.

use crate::error::{Error, Result};
use crate::grid::{ScalarField, SpatialGrid, VectorSlice};

/// 1D quadrature weights (without the factor `h`) for `nodes ≥ 3`.
pub fn axis_weights(nodes: usize) -> Vec<f64> {
    debug_assert!(nodes >= 3);
    let mut w = vec![1.0; nodes];
    if nodes == 3 {
        return vec![0.25, 1.5, 0.25];
    }
    w[0] = 0.25;
    w[1] = 1.25;
    w[nodes - 2] = 1.25;
    w[nodes - 1] = 0.25;
    w
}

/// Per-node inner-product weights `hⁿ Π_s w_s`.
pub fn node_weights(grid: &SpatialGrid) -> Vec<f64> {
    let axes: Vec<Vec<f64>> = (0..grid.dim()).map(|s| axis_weights(grid.nodes_on(s))).collect();
    let vol = grid.cell_volume();
    (0..grid.node_count())
        .map(|k| {
            let m = grid.multi_index(k);
            vol * (0..grid.dim()).map(|s| axes[s][m[s]]).product::<f64>()
        })
        .collect()
}

/// Row `i` of the 1D difference matrix as `(offset, coefficient·2h)` pairs.
#[inline]
pub(crate) fn stencil_1d(i: usize, nodes: usize) -> [(usize, f64); 3] {
    if i == 0 {
        [(0, -3.0), (1, 4.0), (2, -1.0)]
    } else if i == nodes - 1 {
        [(nodes - 3, 1.0), (nodes - 2, -4.0), (nodes - 1, 3.0)]
    } else {
        [(i - 1, -1.0), (i, 0.0), (i + 1, 1.0)]
    }
}

/// Gradient stencil at `node`: for each axis three `(node, coefficient)` pairs.
pub(crate) fn gradient_stencil(grid: &SpatialGrid, node: usize) -> [[(usize, f64); 3]; 2] {
    let m = grid.multi_index(node);
    let inv = 0.5 / grid.h();
    let mut out = [[(node, 0.0); 3]; 2];
    for s in 0..grid.dim() {
        let stride = grid.stride(s);
        let base = node - m[s] * stride;
        for (slot, (j, c)) in out[s].iter_mut().zip(stencil_1d(m[s], grid.nodes_on(s))) {
            *slot = (base + j * stride, c * inv);
        }
    }
    out
}

/// Writes the gradient of `u` into `out` (interleaved by node).
pub(crate) fn gradient_into(grid: &SpatialGrid, u: &[f64], out: &mut [f64]) {
    let dim = grid.dim();
    for node in 0..grid.node_count() {
        let st = gradient_stencil(grid, node);
        for s in 0..dim {
            out[node * dim + s] = st[s].iter().map(|&(j, c)| c * u[j]).sum();
        }
    }
}

pub fn gradient_slice(grid: &SpatialGrid, u: &[f64]) -> VectorSlice {
    let mut out = VectorSlice::zeros(grid.dim(), grid.node_count());
    gradient_into(grid, u, out.values_mut());
    out
}

/// Discrete `Du` at one time level.
pub fn gradient(u: &ScalarField, level: usize) -> VectorSlice {
    gradient_slice(u.grid().space(), u.slice(level))
}

/// Negative adjoint of the gradient under the weighted inner product.
pub(crate) fn divergence_into(grid: &SpatialGrid, f: &[f64], weights: &[f64], out: &mut [f64]) {
    let dim = grid.dim();
    out.iter_mut().for_each(|v| *v = 0.0);
    for node in 0..grid.node_count() {
        let st = gradient_stencil(grid, node);
        let w = weights[node];
        for s in 0..dim {
            let fs = w * f[node * dim + s];
            for &(j, c) in &st[s] {
                out[j] += c * fs;
            }
        }
    }
    for (o, w) in out.iter_mut().zip(weights) {
        *o = -*o / w;
    }
}

pub fn divergence(grid: &SpatialGrid, f: &VectorSlice) -> Vec<f64> {
    let weights = node_weights(grid);
    let mut out = vec![0.0; grid.node_count()];
    divergence_into(grid, f.values(), &weights, &mut out);
    out
}

/// Weighted inner product of two nodal scalars.
pub fn inner(grid: &SpatialGrid, a: &[f64], b: &[f64]) -> f64 {
    node_weights(grid)
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

/// Weighted inner product of two nodal vector fields.
pub fn inner_vec(grid: &SpatialGrid, a: &VectorSlice, b: &VectorSlice) -> f64 {
    let dim = grid.dim();
    node_weights(grid)
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let s: f64 = (0..dim).map(|s| a.at(k)[s] * b.at(k)[s]).sum();
            w * s
        })
        .sum()
}

/// Converts a real shift to a whole number of grid steps.
pub fn shift_steps(grid: &SpatialGrid, hstep: f64) -> Result<isize> {
    let ratio = hstep / grid.h();
    let k = ratio.round();
    if !ratio.is_finite() || k == 0.0 || (ratio - k).abs() > 1e-9 * (1.0 + k.abs()) {
        return Err(Error::Alignment {
            hstep,
            h: grid.h(),
        });
    }
    Ok(k as isize)
}

/// A field restricted to the shrunk domain `Ω_{|h|}`; values outside are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedField {
    pub values: Vec<f64>,
    pub inside: Vec<bool>,
}

fn shifted_node(grid: &SpatialGrid, node: usize, s: usize, k: isize) -> Option<usize> {
    let m = grid.multi_index(node);
    let target = m[s] as isize + k;
    if target < 0 || target > grid.cells()[s] as isize {
        return None;
    }
    let mut mm = m;
    mm[s] = target as usize;
    Some(grid.flat(mm))
}

/// `τ_{s,h}F(x) = F(x + h e_s) − F(x)` on nodes at distance `> |h|` from `∂Ω`.
pub fn tau_shift(grid: &SpatialGrid, f: &[f64], s: usize, hstep: f64) -> Result<ShiftedField> {
    if s >= grid.dim() {
        return Err(Error::InvalidParameter(format!("axis {s} out of range")));
    }
    let k = shift_steps(grid, hstep)?;
    let reach = k.unsigned_abs();
    let mut values = vec![0.0; grid.node_count()];
    let mut inside = vec![false; grid.node_count()];
    for node in 0..grid.node_count() {
        if grid.boundary_distance(node) > reach {
            let j = shifted_node(grid, node, s, k).expect("inside the shrunk domain");
            values[node] = f[j] - f[node];
            inside[node] = true;
        }
    }
    if !inside.iter().any(|&b| b) {
        return Err(Error::DegenerateRegion(format!(
            "shrunk domain for shift {hstep} is empty"
        )));
    }
    Ok(ShiftedField { values, inside })
}

/// `Δ_{s,h}F = τ_{s,h}F / h`.
pub fn difference_quotient(
    grid: &SpatialGrid,
    f: &[f64],
    s: usize,
    hstep: f64,
) -> Result<ShiftedField> {
    let mut out = tau_shift(grid, f, s, hstep)?;
    for v in &mut out.values {
        *v /= hstep;
    }
    Ok(out)
}

/// Right side of the discrete product rule
/// `Δ_h(FG)(x) = F(x + h e_s)Δ_h G(x) + G(x)Δ_h F(x)`.
pub fn product_rule_rhs(
    grid: &SpatialGrid,
    f: &[f64],
    g: &[f64],
    s: usize,
    hstep: f64,
) -> Result<ShiftedField> {
    let k = shift_steps(grid, hstep)?;
    let dg = difference_quotient(grid, g, s, hstep)?;
    let df = difference_quotient(grid, f, s, hstep)?;
    let mut values = vec![0.0; grid.node_count()];
    for node in 0..grid.node_count() {
        if dg.inside[node] {
            let j = shifted_node(grid, node, s, k).expect("inside");
            values[node] = f[j] * dg.values[node] + g[node] * df.values[node];
        }
    }
    Ok(ShiftedField {
        values,
        inside: dg.inside,
    })
}

/// `∫_{B_ρ(x₀)} |F(x + h e_s)|^q dx` with `F` extended by zero outside the grid.
pub fn shifted_ball_integral(
    grid: &SpatialGrid,
    f: &[f64],
    center: &[f64],
    rho: f64,
    s: usize,
    hstep: f64,
    q: f64,
) -> Result<f64> {
    let k = shift_steps(grid, hstep)?;
    let mut total = 0.0;
    for node in ball_nodes(grid, center, rho) {
        if let Some(j) = shifted_node(grid, node, s, k) {
            total += f[j].abs().powf(q);
        }
    }
    Ok(total * grid.cell_volume())
}

/// Nodes with `|x − x₀| < ρ`.
pub fn ball_nodes(grid: &SpatialGrid, center: &[f64], rho: f64) -> Vec<usize> {
    (0..grid.node_count())
        .filter(|&k| {
            let x = grid.coord(k);
            let d2: f64 = (0..grid.dim()).map(|s| (x[s] - center[s]).powi(2)).sum();
            d2 < rho * rho
        })
        .collect()
}

/// `∫_{B_ρ} |F|^q dx` as a node sum.
pub fn ball_integral(grid: &SpatialGrid, f: &[f64], center: &[f64], rho: f64, q: f64) -> f64 {
    ball_nodes(grid, center, rho)
        .into_iter()
        .map(|k| f[k].abs().powf(q))
        .sum::<f64>()
        * grid.cell_volume()
}
