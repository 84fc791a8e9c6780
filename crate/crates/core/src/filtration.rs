//! Gas filtration with a limiting pressure gradient, reduced to the
//! degenerate equation for the pressure squared `u = P²`.
//!
//! The linearized law is `∂_t u = (kP₀/(mμ)) div[(|Du| − G)_+ Du/|Du|]`.
//! Rescaling time by `D = kP₀/(mμ)` gives the model equation with `p = 2`,
//! `f = 0` and `ν = G`; optionally `u` is also divided by `G`, which gives
//! `ν = 1`. Both choices are recorded in the scenario metadata.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::calculus::gradient_into;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flux::{h_lambda_into, norm, FluxParams};
use crate::grid::{ScalarField, SpaceTimeGrid, SpatialGrid, VectorSlice};
use crate::scenario::{Datum, NewtonConfig, PhysicalConfig, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalParams {
    /// Rock permeability.
    pub k: f64,
    /// Gas viscosity.
    pub mu: f64,
    pub m: f64,
    /// Limiting gradient of the pressure squared.
    pub g: f64,
    /// Reference pressure of the linearization.
    pub p0: f64,
    /// Density-law constant, `ϱ = P/C`.
    pub c: f64,
}

impl PhysicalParams {
    pub fn new(k: f64, mu: f64, m: f64, g: f64, p0: f64, c: f64) -> Result<Self> {
        let p = Self { k, mu, m, g, p0, c };
        p.validate()?;
        Ok(p)
    }

    /// All constants positive, except `G` which may be zero (no threshold).
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k", self.k), ("mu", self.mu), ("m", self.m), ("P0", self.p0), ("C", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::InvalidParameter(format!("G = {} must be >= 0", self.g)));
        }
        Ok(())
    }

    /// `kP₀/(mμ)`.
    pub fn time_scale(&self) -> f64 {
        self.k * self.p0 / (self.m * self.mu)
    }

    /// `k/(2μC)`.
    pub fn flux_coefficient(&self) -> f64 {
        self.k / (2.0 * self.mu * self.c)
    }
}

impl TryFrom<&PhysicalConfig> for PhysicalParams {
    type Error = Error;

    fn try_from(c: &PhysicalConfig) -> Result<Self> {
        Self::new(c.k, c.mu, c.m, c.g, c.p0, c.c)
    }
}

/// Space and physical time discretization of a filtration run.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalGeometry {
    pub space: SpatialGrid,
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

/// Pressure data in physical units: boundary values and, optionally, a
/// different initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureData {
    pub boundary: Expr,
    pub initial: Option<Expr>,
}

/// How the normalized scenario relates to physical quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaling {
    /// Normalized time is `D·t`.
    pub time_scale: f64,
    /// Normalized `u` is `u_scale·P²`.
    pub u_scale: f64,
    pub nu: f64,
    pub normalized: bool,
}

impl Scaling {
    pub fn new(phys: &PhysicalParams, normalize: bool) -> Result<Self> {
        phys.validate()?;
        if normalize && phys.g == 0.0 {
            return Err(Error::InvalidParameter(
                "cannot normalize gradients by G = 0".into(),
            ));
        }
        Ok(Self {
            time_scale: phys.time_scale(),
            u_scale: if normalize { 1.0 / phys.g } else { 1.0 },
            nu: if normalize { 1.0 } else { phys.g },
            normalized: normalize,
        })
    }
}

/// Builds the normalized scenario: `p = 2`, `f = 0`, `u`-data equal to the
/// squared pressure data.
pub fn to_scenario(
    phys: &PhysicalParams,
    geometry: &PhysicalGeometry,
    pressure: &PressureData,
    normalize: bool,
    epsilon_schedule: Vec<f64>,
    newton: NewtonConfig,
) -> Result<Scenario> {
    let scaling = Scaling::new(phys, normalize)?;
    if geometry.steps == 0 || !(geometry.t_end > geometry.t0) {
        return Err(Error::Grid("need t_end > t0 and at least one step".into()));
    }
    let d = scaling.time_scale;
    let tau = (geometry.t_end - geometry.t0) / geometry.steps as f64;
    let grid = SpaceTimeGrid::new(geometry.space.clone(), d * tau, d * geometry.t0, geometry.steps)?;
    let mut values = Vec::with_capacity(grid.space().node_count() * grid.levels());
    for level in 0..grid.levels() {
        let t = geometry.t0 + tau * level as f64;
        let source = match (&pressure.initial, level) {
            (Some(init), 0) => init,
            _ => &pressure.boundary,
        };
        for node in 0..grid.space().node_count() {
            let x = grid.space().coord(node);
            let pv = source.eval(x, t);
            if !(pv.is_finite() && pv >= 0.0) {
                return Err(Error::RejectedInput(format!(
                    "pressure {pv} at {x:?}, t = {t} must be finite and >= 0"
                )));
            }
            values.push(scaling.u_scale * pv * pv);
        }
    }
    let g = ScalarField::from_values(grid.clone(), values)?;
    let params = FluxParams::new(2.0, scaling.nu, 0.0)?;
    let mut s = Scenario::new(grid, params, Datum::zero(), Datum::Table(g), epsilon_schedule)?;
    s.newton = newton;
    s.mollify = false;
    let meta = [
        ("filtration.time_scale", d.to_string()),
        ("filtration.u_scale", scaling.u_scale.to_string()),
        (
            "filtration.normalization",
            if normalize { "u = P^2/G, nu = 1" } else { "u = P^2, nu = G" }.to_string(),
        ),
        ("filtration.boundary_pressure", pressure.boundary.source().to_string()),
    ];
    for (k, v) in meta {
        s.metadata.insert(k.into(), v);
    }
    if let Some(init) = &pressure.initial {
        s.metadata.insert("filtration.initial_pressure".into(), init.source().into());
    }
    Ok(s)
}

/// Scenario from a configuration's `[filtration]` block, domain and grid.
pub fn scenario_from_config(cfg: &crate::scenario::Config) -> Result<(Scenario, PhysicalParams, Scaling)> {
    let block = cfg
        .filtration
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no [filtration] block".into()))?;
    let phys = PhysicalParams::try_from(block).map_err(|e| Error::Config(e.to_string()))?;
    let physical_grid = cfg.grid()?;
    let geometry = PhysicalGeometry {
        space: physical_grid.space().clone(),
        t0: cfg.grid.t0,
        t_end: cfg.grid.t_end,
        steps: cfg.grid.steps,
    };
    let parse = |s: &str| Expr::parse(s).map_err(|e| Error::Config(e.to_string()));
    let pressure = PressureData {
        boundary: parse(&block.boundary_pressure)?,
        initial: block.initial_pressure.as_deref().map(parse).transpose()?,
    };
    let scaling = Scaling::new(&phys, block.normalize).map_err(|e| Error::Config(e.to_string()))?;
    let scenario = to_scenario(
        &phys,
        &geometry,
        &pressure,
        block.normalize,
        cfg.epsilon_schedule.clone(),
        cfg.newton,
    )
    .map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    Ok((scenario, phys, scaling))
}

/// Pressure and pressure squared in physical units, with stagnant masks.
#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationState {
    pub pressure: ScalarField,
    pub u: ScalarField,
    /// `|Du| ≤ G` per level and node.
    pub stagnant: Vec<Vec<bool>>,
}

impl FiltrationState {
    /// From a physical pressure-squared field; `u` must be nonnegative.
    pub fn from_u(u: ScalarField, g: f64) -> Result<Self> {
        if let Some(v) = u.values().iter().find(|v| **v < 0.0) {
            return Err(Error::RejectedInput(format!("pressure squared {v} is negative")));
        }
        let pressure = u.map(f64::sqrt);
        let stagnant = (0..u.grid().levels()).map(|l| stagnant_zone(&u, g, l)).collect();
        Ok(Self { pressure, u, stagnant })
    }

    /// From a normalized solution; undoes the `u` scaling. Tiny negative
    /// values left by the nonlinear solve tolerance are clipped to zero.
    pub fn from_solution(u: &ScalarField, phys: &PhysicalParams, scaling: &Scaling, tol: f64) -> Result<Self> {
        let mut values = Vec::with_capacity(u.values().len());
        for &v in u.values() {
            let w = v / scaling.u_scale;
            if w < -tol {
                return Err(Error::RejectedInput(format!("pressure squared {w} is negative")));
            }
            values.push(w.max(0.0));
        }
        Self::from_u(ScalarField::from_values(u.grid().clone(), values)?, phys.g)
    }

    /// Largest `|P² − u|/(1 + |u|)`.
    pub fn consistency(&self) -> f64 {
        self.pressure
            .values()
            .iter()
            .zip(self.u.values())
            .fold(0.0, |a, (p, u)| a.max((p * p - u).abs() / (1.0 + u.abs())))
    }

    /// `(min P, max P, max |P − P₀|/P₀)` over all levels.
    pub fn pressure_range(&self, p0: f64) -> (f64, f64, f64) {
        self.pressure.values().iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, 0.0f64),
            |(lo, hi, dev), &p| (lo.min(p), hi.max(p), dev.max((p - p0).abs() / p0)),
        )
    }
}

/// `j = −(k/(2μC)) (|Du| − G)_+ Du/|Du|`, zero wherever `|Du| ≤ G`.
pub fn mass_flux(state: &FiltrationState, phys: &PhysicalParams, level: usize) -> VectorSlice {
    let space = state.u.grid().space();
    let dim = space.dim();
    let mut grad = vec![0.0; space.node_count() * dim];
    gradient_into(space, state.u.slice(level), &mut grad);
    flux_from_gradient(&grad, dim, phys)
}

pub(crate) fn flux_from_gradient(grad: &[f64], dim: usize, phys: &PhysicalParams) -> VectorSlice {
    let c = phys.flux_coefficient();
    let mut out = VectorSlice::zeros(dim, grad.len() / dim);
    let mut h = vec![0.0; dim];
    for (k, x) in grad.chunks(dim).enumerate() {
        h_lambda_into(x, 1.0, phys.g, &mut h);
        for (o, v) in out.at_mut(k).iter_mut().zip(&h) {
            // keep the stagnant zone at +0.0 rather than -0.0
            *o = if *v == 0.0 { 0.0 } else { -c * v };
        }
    }
    out
}

/// Nodes where `|Du| ≤ ν`.
pub fn stagnant_zone(u: &ScalarField, nu: f64, level: usize) -> Vec<bool> {
    let space = u.grid().space();
    let dim = space.dim();
    let mut grad = vec![0.0; space.node_count() * dim];
    gradient_into(space, u.slice(level), &mut grad);
    grad.chunks(dim).map(|x| norm(x) <= nu).collect()
}

/// Per-level stagnant area and whether it never shrinks. Reported only:
/// the monotonicity is an empirical observation, not a guarantee.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StagnantTrend {
    pub area: Vec<f64>,
    pub nondecreasing: bool,
}

pub fn stagnant_trend(state: &FiltrationState) -> StagnantTrend {
    let vol = state.u.grid().space().cell_volume();
    let area: Vec<f64> = state
        .stagnant
        .iter()
        .map(|m| m.iter().filter(|&&b| b).count() as f64 * vol)
        .collect();
    let nondecreasing = area.windows(2).all(|w| w[1] >= w[0]);
    StagnantTrend { area, nondecreasing }
}

/// Summary of a filtration run, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiltrationSummary {
    pub params: PhysicalParams,
    pub scaling: Scaling,
    pub times: Vec<f64>,
    pub stagnant: StagnantTrend,
    pub pressure_min: f64,
    pub pressure_max: f64,
    /// `max |P − P₀|/P₀`, a diagnostic for the linearization.
    pub pressure_deviation: f64,
    pub consistency: f64,
    /// Largest flux magnitude on stagnant nodes; zero by construction.
    pub stagnant_flux: f64,
    /// Largest `⟨j, Du⟩`; never positive.
    pub max_alignment: f64,
    pub metadata: BTreeMap<String, String>,
}

pub fn summarize(state: &FiltrationState, phys: &PhysicalParams, scaling: &Scaling) -> FiltrationSummary {
    let grid = state.u.grid();
    let space = grid.space();
    let dim = space.dim();
    let (lo, hi, dev) = state.pressure_range(phys.p0);
    let mut stagnant_flux: f64 = 0.0;
    let mut align = f64::NEG_INFINITY;
    let mut grad = vec![0.0; space.node_count() * dim];
    for level in 0..grid.levels() {
        gradient_into(space, state.u.slice(level), &mut grad);
        let j = flux_from_gradient(&grad, dim, phys);
        for k in 0..space.node_count() {
            let jk = j.at(k);
            if state.stagnant[level][k] {
                stagnant_flux = stagnant_flux.max(norm(jk));
            }
            let dot: f64 = jk.iter().zip(&grad[k * dim..(k + 1) * dim]).map(|(a, b)| a * b).sum();
            align = align.max(dot);
        }
    }
    let times = (0..grid.levels()).map(|l| grid.time(l) / scaling.time_scale).collect();
    FiltrationSummary {
        params: *phys,
        scaling: *scaling,
        times,
        stagnant: stagnant_trend(state),
        pressure_min: lo,
        pressure_max: hi,
        pressure_deviation: dev,
        consistency: state.consistency(),
        stagnant_flux,
        max_alignment: align,
        metadata: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::solve_cauchy_dirichlet;

    fn phys(g: f64) -> PhysicalParams {
        // k = 2μC so the flux coefficient is 1
        PhysicalParams::new(2.0, 0.5, 1.0, g, 0.25, 2.0).unwrap()
    }

    fn geometry(cells: usize) -> PhysicalGeometry {
        PhysicalGeometry {
            space: SpatialGrid::cube(2, cells, 0.0, 1.0).unwrap(),
            t0: 0.0,
            t_end: 0.1,
            steps: 4,
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PhysicalParams::new(0.0, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 1.0, -1.0, 1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 1.0, 0.0, 1.0, 1.0).is_ok());
        assert!(Scaling::new(&phys(0.0), true).is_err());
    }

    #[test]
    fn identity_scaling() {
        // G = 1 and kP₀/(mμ) = 1 leave the model equation with p = 2, ν = 1
        let p = phys(1.0);
        assert_eq!(p.time_scale(), 1.0);
        let data = PressureData {
            boundary: Expr::parse("1 + x1").unwrap(),
            initial: None,
        };
        for normalize in [false, true] {
            let s = to_scenario(&p, &geometry(4), &data, normalize, vec![1e-3], NewtonConfig::default()).unwrap();
            assert_eq!(s.params.p, 2.0);
            assert_eq!(s.params.nu, 1.0);
            assert_eq!(s.grid.tau(), 0.1 / 4.0);
            assert_eq!(s.f.describe(), "0");
            let g = s.g.field(&s.grid).unwrap();
            let x = s.grid.space().coord(7);
            assert_eq!(g.slice(2)[7], (1.0 + x[0]) * (1.0 + x[0]));
        }
    }

    #[test]
    fn time_and_gradient_scaling_are_recorded() {
        let p = PhysicalParams::new(3.0, 2.0, 0.5, 4.0, 2.0, 1.0).unwrap();
        let data = PressureData {
            boundary: Expr::parse("2").unwrap(),
            initial: None,
        };
        let s = to_scenario(&p, &geometry(4), &data, false, vec![1e-3], NewtonConfig::default()).unwrap();
        assert_eq!(s.params.nu, 4.0);
        assert_eq!(s.grid.tau(), 6.0 * 0.025);
        assert_eq!(s.metadata["filtration.time_scale"], "6");
        let s = to_scenario(&p, &geometry(4), &data, true, vec![1e-3], NewtonConfig::default()).unwrap();
        assert_eq!(s.params.nu, 1.0);
        assert_eq!(s.g.field(&s.grid).unwrap().values()[0], 1.0);
        // doubling G doubles ν without normalization
        let p2 = PhysicalParams { g: 8.0, ..p };
        let s2 = to_scenario(&p2, &geometry(4), &data, false, vec![1e-3], NewtonConfig::default()).unwrap();
        assert_eq!(s2.params.nu, 8.0);
    }

    #[test]
    fn uniform_pressure_is_steady() {
        let p = phys(1.0);
        let data = PressureData {
            boundary: Expr::parse("1.5").unwrap(),
            initial: None,
        };
        let s = to_scenario(&p, &geometry(8), &data, false, vec![1e-3], NewtonConfig::default()).unwrap();
        let r = solve_cauchy_dirichlet(&s, 1e-3).unwrap();
        assert_eq!(r.drift(), 0.0);
        let scaling = Scaling::new(&p, false).unwrap();
        let state = FiltrationState::from_solution(&r.u, &p, &scaling, 0.0).unwrap();
        assert!(state.stagnant.iter().flatten().all(|&b| b));
        assert!(state.consistency() <= 1e-12);
        let j = mass_flux(&state, &p, 4);
        assert!(j.values().iter().all(|v| v.to_bits() == 0));
    }

    fn state_from(expr: &str, cells: usize, g: f64) -> FiltrationState {
        let grid = SpaceTimeGrid::new(SpatialGrid::cube(2, cells, 0.0, 1.0).unwrap(), 0.1, 0.0, 1).unwrap();
        let e = Expr::parse(expr).unwrap();
        let u = ScalarField::from_fn(grid, |x, t| e.eval(x, t)).unwrap();
        FiltrationState::from_u(u, g).unwrap()
    }

    #[test]
    fn hand_evaluated_flux() {
        // grad u = (2G, 0) with k = 2μC gives j = (−G, 0)
        let g = 0.75;
        let p = phys(g);
        let state = state_from("1 + 1.5 * x1", 6, g);
        let j = mass_flux(&state, &p, 0);
        for k in 0..j.len() {
            assert!((j.at(k)[0] + g).abs() <= 1e-12);
            assert_eq!(j.at(k)[1], 0.0);
        }
        assert!(state.stagnant[0].iter().all(|&b| !b));
    }

    #[test]
    fn darcy_limit_and_degeneracy() {
        let u = "2 + sin(3*x1) * cos(2*x2) + x1*x2";
        let p0 = phys(0.0);
        let state = state_from(u, 12, 0.0);
        let j = mass_flux(&state, &p0, 0);
        let du = crate::calculus::gradient(&state.u, 0);
        for (a, b) in j.values().iter().zip(du.values()) {
            assert!((a + p0.flux_coefficient() * b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let p = phys(2.0);
        let state = state_from(u, 12, 2.0);
        let j = mass_flux(&state, &p, 0);
        let mut stagnant = 0;
        for k in 0..j.len() {
            let dot: f64 = j.at(k).iter().zip(du.at(k)).map(|(a, b)| a * b).sum();
            assert!(dot <= 0.0);
            if state.stagnant[0][k] {
                stagnant += 1;
                assert!(j.at(k).iter().all(|v| v.to_bits() == 0));
            }
        }
        assert!(stagnant > 0 && stagnant < j.len());
    }

    #[test]
    fn mask_is_a_threshold() {
        let state = state_from("x1^2 + x2", 10, 1.0);
        let u = &state.u;
        assert_eq!(stagnant_zone(u, 2.0, 0), FiltrationState::from_u(u.clone(), 2.0).unwrap().stagnant[0]);
        assert!(stagnant_zone(&u.map(|_| 3.0), 0.5, 0).iter().all(|&b| b));
        let affine = state_from("1 + 1.25 * x1", 10, 1.0);
        assert!(affine.stagnant[0].iter().all(|&b| !b));
    }

    #[test]
    fn negative_pressure_squared_is_rejected() {
        let grid = SpaceTimeGrid::new(SpatialGrid::cube(1, 4, 0.0, 1.0).unwrap(), 0.1, 0.0, 1).unwrap();
        let u = ScalarField::from_fn(grid, |x, _| x[0] - 0.5).unwrap();
        assert!(FiltrationState::from_u(u, 1.0).is_err());
    }
}
