//! Uniform Cartesian grids, node-valued fields and parabolic cylinders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `nodes × levels` for a space-time allocation.
pub const DEFAULT_BUDGET: usize = 40_000_000;

/// Uniform grid on the box `origin + [0, cells·h]^dim`.
///
/// Nodes are numbered with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    cells: Vec<usize>,
    h: f64,
    origin: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(cells: Vec<usize>, h: f64, origin: Vec<f64>) -> Result<Self> {
        if cells.is_empty() || cells.len() > 2 {
            return Err(Error::Grid(format!(
                "dimension {} not supported, expected 1 or 2",
                cells.len()
            )));
        }
        if origin.len() != cells.len() {
            return Err(Error::Grid("origin length differs from dimension".into()));
        }
        if let Some(c) = cells.iter().find(|&&c| c < 2) {
            return Err(Error::Grid(format!("extent {c} must be at least 2 cells")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Grid(format!("spatial step h = {h} must be > 0")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Grid("origin must be finite".into()));
        }
        Ok(Self { cells, h, origin })
    }

    /// Square (or interval) `[a, b]^dim` split into `cells` cells per axis.
    pub fn cube(dim: usize, cells: usize, a: f64, b: f64) -> Result<Self> {
        if !(b > a) {
            return Err(Error::Grid(format!("empty interval [{a}, {b}]")));
        }
        Self::new(vec![cells; dim], (b - a) / cells as f64, vec![a; dim])
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Nodes along `axis`.
    pub fn nodes_on(&self, axis: usize) -> usize {
        self.cells[axis] + 1
    }

    pub fn node_count(&self) -> usize {
        self.cells.iter().map(|c| c + 1).product()
    }

    /// Stride of `axis` in the flat node numbering.
    pub fn stride(&self, axis: usize) -> usize {
        self.cells[..axis].iter().map(|c| c + 1).product()
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        let n0 = self.nodes_on(0);
        if self.dim() == 1 {
            [node, 0]
        } else {
            [node % n0, node / n0]
        }
    }

    pub fn flat(&self, idx: [usize; 2]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] + self.nodes_on(0) * idx[1]
        }
    }

    pub fn coord(&self, node: usize) -> [f64; 2] {
        let m = self.multi_index(node);
        let mut x = [0.0; 2];
        for (s, xs) in x.iter_mut().enumerate().take(self.dim()) {
            *xs = self.origin[s] + m[s] as f64 * self.h;
        }
        x
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + self.cells[axis] as f64 * self.h
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let m = self.multi_index(node);
        (0..self.dim()).any(|s| m[s] == 0 || m[s] == self.cells[s])
    }

    /// Number of nodes between `node` and the nearest boundary face.
    pub fn boundary_distance(&self, node: usize) -> usize {
        let m = self.multi_index(node);
        (0..self.dim())
            .map(|s| m[s].min(self.cells[s] - m[s]))
            .min()
            .unwrap_or(0)
    }

    /// Volume element `hⁿ` of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.node_count()).map(|k| f(self.coord(k))).collect()
    }
}

/// Spatial grid times `steps + 1` time levels `t0 + k·tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    space: SpatialGrid,
    tau: f64,
    t0: f64,
    steps: usize,
}

impl SpaceTimeGrid {
    pub fn new(space: SpatialGrid, tau: f64, t0: f64, steps: usize) -> Result<Self> {
        Self::with_budget(space, tau, t0, steps, DEFAULT_BUDGET)
    }

    pub fn with_budget(
        space: SpatialGrid,
        tau: f64,
        t0: f64,
        steps: usize,
        budget: usize,
    ) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Grid(format!("time step tau = {tau} must be > 0")));
        }
        if !t0.is_finite() {
            return Err(Error::Grid("initial time must be finite".into()));
        }
        if steps < 1 {
            return Err(Error::Grid("at least one time step is required".into()));
        }
        let total = space.node_count().saturating_mul(steps + 1);
        if total > budget {
            return Err(Error::Grid(format!(
                "{total} space-time nodes exceed the allocation budget {budget}"
            )));
        }
        Ok(Self {
            space,
            tau,
            t0,
            steps,
        })
    }

    pub fn space(&self) -> &SpatialGrid {
        &self.space
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn time(&self, level: usize) -> f64 {
        self.t0 + level as f64 * self.tau
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn h(&self) -> f64 {
        self.space.h()
    }

    /// Space-time volume element `hⁿ·tau`.
    pub fn cell_measure(&self) -> f64 {
        self.space.cell_volume() * self.tau
    }
}

/// One real value per node per time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: SpaceTimeGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: SpaceTimeGrid) -> Self {
        let len = grid.space().node_count() * grid.levels();
        Self {
            grid,
            values: vec![0.0; len],
        }
    }

    pub fn from_values(grid: SpaceTimeGrid, values: Vec<f64>) -> Result<Self> {
        let len = grid.space().node_count() * grid.levels();
        if values.len() != len {
            return Err(Error::Grid(format!(
                "expected {len} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::RejectedInput(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples a closed form `f(x, t)` at every node and level.
    pub fn from_fn(grid: SpaceTimeGrid, f: impl Fn([f64; 2], f64) -> f64) -> Result<Self> {
        let space = grid.space();
        let mut values = Vec::with_capacity(space.node_count() * grid.levels());
        for level in 0..grid.levels() {
            let t = grid.time(level);
            for node in 0..space.node_count() {
                values.push(f(space.coord(node), t));
            }
        }
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, level: usize) -> &[f64] {
        let n = self.grid.space().node_count();
        &self.values[level * n..(level + 1) * n]
    }

    pub fn slice_mut(&mut self, level: usize) -> &mut [f64] {
        let n = self.grid.space().node_count();
        &mut self.values[level * n..(level + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Vector values at every node of one time level, interleaved by node.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSlice {
    dim: usize,
    values: Vec<f64>,
}

impl VectorSlice {
    pub fn zeros(dim: usize, nodes: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; dim * nodes],
        }
    }

    pub fn from_values(dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len() % dim, 0);
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    pub fn at_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.values[node * self.dim..(node + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn component(&self, s: usize) -> Vec<f64> {
        self.values.iter().skip(s).step_by(self.dim).copied().collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.values
            .chunks(self.dim)
            .map(crate::flux::norm)
            .collect()
    }

    /// Applies `g` nodewise, writing a vector of the same dimension.
    pub fn map_vectors(&self, g: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut out = Self::zeros(self.dim, self.len());
        for (src, dst) in self
            .values
            .chunks(self.dim)
            .zip(out.values.chunks_mut(self.dim))
        {
            g(src, dst);
        }
        out
    }
}

/// `Q_ρ(z₀) = B_ρ(x₀) × (t₀ − ρ², t₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicCylinder {
    pub x0: Vec<f64>,
    pub t0: f64,
    pub rho: f64,
}

/// The discrete realization of a cylinder: nodes with `|x − x₀| < ρ` and
/// levels with `t ∈ (t₀ − ρ², t₀]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderNodes {
    pub space: Vec<usize>,
    pub levels: Vec<usize>,
    pub cell_measure: f64,
    pub cell_volume: f64,
}

impl CylinderNodes {
    pub fn count(&self) -> usize {
        self.space.len() * self.levels.len()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.cell_measure
    }

    /// `Σ_{levels} Σ_{nodes} g(level, node) · hⁿ·tau`.
    pub fn integrate(&self, mut g: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        for &level in &self.levels {
            let mut slice = 0.0;
            for &node in &self.space {
                slice += g(level, node);
            }
            total += slice;
        }
        total * self.cell_measure
    }

    /// `max_{levels} Σ_{nodes} g(level, node) · hⁿ`.
    pub fn sup_slice(&self, mut g: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut best: f64 = 0.0;
        for &level in &self.levels {
            let slice: f64 = self.space.iter().map(|&node| g(level, node)).sum();
            best = best.max(slice * self.cell_volume);
        }
        best
    }
}

const GEOMETRY_SLACK: f64 = 1e-12;

impl ParabolicCylinder {
    pub fn new(x0: Vec<f64>, t0: f64, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Geometry(format!("width rho = {rho} must be > 0")));
        }
        if !t0.is_finite() || x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("vertex must be finite".into()));
        }
        Ok(Self { x0, t0, rho })
    }

    /// Same vertex, width scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.x0.clone(), self.t0, self.rho * factor)
    }

    pub fn contains_cylinder(&self, inner: &ParabolicCylinder) -> bool {
        let dx = crate::flux::norm(
            &self
                .x0
                .iter()
                .zip(&inner.x0)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        dx + inner.rho <= self.rho * (1.0 + GEOMETRY_SLACK)
            && inner.t0 <= self.t0 + GEOMETRY_SLACK
            && inner.t0 - inner.rho * inner.rho >= self.t0 - self.rho * self.rho - GEOMETRY_SLACK
    }

    /// Checks that the closed cylinder lies in the grid's space-time box.
    pub fn check_inside(&self, grid: &SpaceTimeGrid) -> Result<()> {
        let space = grid.space();
        if self.x0.len() != space.dim() {
            return Err(Error::Geometry(format!(
                "center has {} coordinates, grid has dimension {}",
                self.x0.len(),
                space.dim()
            )));
        }
        let slack = GEOMETRY_SLACK * (1.0 + self.rho);
        for s in 0..space.dim() {
            let lo = space.origin()[s];
            let hi = space.upper(s);
            if self.x0[s] - self.rho < lo - slack || self.x0[s] + self.rho > hi + slack {
                return Err(Error::Geometry(format!(
                    "ball of radius {} around {:?} leaves the domain along axis {s}",
                    self.rho, self.x0
                )));
            }
        }
        let bottom = self.t0 - self.rho * self.rho;
        if bottom < grid.t0() - slack || self.t0 > grid.t_end() + slack {
            return Err(Error::Geometry(format!(
                "time interval ({bottom}, {}] leaves [{}, {}]",
                self.t0,
                grid.t0(),
                grid.t_end()
            )));
        }
        Ok(())
    }

    /// Discrete node set; errors when the cylinder leaves the grid or
    /// contains no node.
    pub fn nodes(&self, grid: &SpaceTimeGrid) -> Result<CylinderNodes> {
        self.check_inside(grid)?;
        let space = grid.space();
        let r2 = self.rho * self.rho;
        let nodes: Vec<usize> = (0..space.node_count())
            .filter(|&k| {
                let x = space.coord(k);
                let d2: f64 = (0..space.dim()).map(|s| (x[s] - self.x0[s]).powi(2)).sum();
                d2 < r2
            })
            .collect();
        let bottom = self.t0 - r2;
        let eps_t = 1e-9 * grid.tau();
        let levels: Vec<usize> = (0..grid.levels())
            .filter(|&l| {
                let t = grid.time(l);
                t > bottom + eps_t && t <= self.t0 + eps_t
            })
            .collect();
        if nodes.is_empty() || levels.is_empty() {
            return Err(Error::DegenerateRegion(format!(
                "cylinder rho = {} at {:?}, t0 = {} contains {} nodes and {} levels",
                self.rho,
                self.x0,
                self.t0,
                nodes.len(),
                levels.len()
            )));
        }
        Ok(CylinderNodes {
            space: nodes,
            levels,
            cell_measure: grid.cell_measure(),
            cell_volume: space.cell_volume(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(SpatialGrid::cube(2, 8, 0.0, 1.0).unwrap(), 0.01, 0.0, 20).unwrap()
    }

    #[test]
    fn indexing_round_trip() {
        let g = SpatialGrid::cube(2, 4, -1.0, 1.0).unwrap();
        assert_eq!(g.node_count(), 25);
        for k in 0..g.node_count() {
            assert_eq!(g.flat(g.multi_index(k)), k);
        }
        assert_eq!(g.coord(6), [-0.5, -0.5]);
        assert!(g.is_boundary(0));
        assert!(!g.is_boundary(6));
        assert_eq!(g.stride(1), 5);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpatialGrid::new(vec![1, 4], 0.1, vec![0.0, 0.0]).is_err());
        assert!(SpatialGrid::new(vec![4, 4], 0.0, vec![0.0, 0.0]).is_err());
        assert!(SpatialGrid::new(vec![4, 4, 4], 0.1, vec![0.0; 3]).is_err());
        let s = SpatialGrid::cube(2, 100, 0.0, 1.0).unwrap();
        assert!(SpaceTimeGrid::with_budget(s.clone(), 0.1, 0.0, 10, 1000).is_err());
        assert!(SpaceTimeGrid::new(s, -0.1, 0.0, 10).is_err());
    }

    #[test]
    fn field_slices() {
        let g = grid();
        let f = ScalarField::from_fn(g.clone(), |x, t| x[0] + t).unwrap();
        assert_eq!(f.slice(3).len(), 81);
        assert!((f.slice(3)[1] - (0.125 + 0.03)).abs() < 1e-15);
        assert!(ScalarField::from_values(g, vec![f64::NAN; 81 * 21]).is_err());
    }

    #[test]
    fn cylinder_membership() {
        let g = grid();
        let q = ParabolicCylinder::new(vec![0.5, 0.5], 0.2, 0.25).unwrap();
        let nodes = q.nodes(&g).unwrap();
        // levels with t in (0.1375, 0.2]
        assert_eq!(nodes.levels, (14..=20).collect::<Vec<_>>());
        // |x − c| < 1/4 on the 1/8 lattice: center, 4 axis neighbours, 4 diagonals
        assert_eq!(nodes.space.len(), 9);
        let outside = ParabolicCylinder::new(vec![0.9, 0.5], 0.2, 0.25).unwrap();
        assert!(matches!(outside.nodes(&g), Err(Error::Geometry(_))));
        let late = ParabolicCylinder::new(vec![0.5, 0.5], 0.3, 0.1).unwrap();
        assert!(matches!(late.nodes(&g), Err(Error::Geometry(_))));
    }

    #[test]
    fn nesting() {
        let outer = ParabolicCylinder::new(vec![0.5, 0.5], 1.0, 0.4).unwrap();
        assert!(outer.contains_cylinder(&outer.scaled(0.5).unwrap()));
        let shifted = ParabolicCylinder::new(vec![0.7, 0.5], 1.0, 0.3).unwrap();
        assert!(!outer.contains_cylinder(&shifted));
    }
}
