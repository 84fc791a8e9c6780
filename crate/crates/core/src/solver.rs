//! Backward Euler for the regularized Cauchy–Dirichlet problem
//!
//! `∂_t u − div(H_{p−1}(Du) + ε|Du|^{p−2}Du) = f_ε`, `u = g` on the parabolic boundary,
//!
//! with a damped Newton inner loop and the ε-continuation driver.
//!
//! The discrete system at each level is written in weighted (weak) form
//! `R(u) = W(u − u_prev)/τ − W f + Gᵀ W A(Gu)` over interior nodes, where `G` is
//! the discrete gradient and `W` the node weights. Its Jacobian
//! `W/τ + Gᵀ W DA G` is symmetric positive definite whenever `ε > 0`.

use std::time::Instant;

use serde::Serialize;

use crate::calculus::{divergence_into, gradient_into, gradient_stencil, node_weights};
use crate::error::{Error, Result};
use crate::flux::{
    flux_coefficient, h_lambda_into, regularized_flux_into, regularized_flux_jacobian_into,
    FluxParams,
};
use crate::grid::{ScalarField, SpaceTimeGrid, SpatialGrid};
use crate::linsys::SpdPattern;
use crate::mollify::mollify;
use crate::scenario::{NewtonConfig, Scenario};

const NO_UNKNOWN: usize = usize::MAX;

/// Per-step record of the nonlinear solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub newton_iterations: usize,
    pub picard_iterations: usize,
    pub rejected_trials: usize,
    /// Final `τ·‖r‖_∞`.
    pub residual: f64,
    /// Whether every accepted Newton update lowered the merit function.
    pub monotone: bool,
}

/// One backward Euler level solver on a fixed grid; reusable across levels
/// and across ε (the symbolic factorization depends on the grid only).
pub struct Stepper {
    space: SpatialGrid,
    tau: f64,
    weights: Vec<f64>,
    unknown_of: Vec<usize>,
    nodes_of: Vec<usize>,
    stencils: Vec<[[(usize, f64); 3]; 2]>,
    pattern: SpdPattern,
    newton: NewtonConfig,
}

struct Work {
    grad: Vec<f64>,
    flux: Vec<f64>,
    div: Vec<f64>,
    resid: Vec<f64>,
    values: Vec<f64>,
    jac: Vec<f64>,
}

impl Stepper {
    pub fn new(space: &SpatialGrid, tau: f64, newton: NewtonConfig) -> Result<Self> {
        newton.validate()?;
        let n = space.node_count();
        let mut unknown_of = vec![NO_UNKNOWN; n];
        let mut nodes_of = Vec::new();
        for (node, slot) in unknown_of.iter_mut().enumerate() {
            if !space.is_boundary(node) {
                *slot = nodes_of.len();
                nodes_of.push(node);
            }
        }
        if nodes_of.is_empty() {
            return Err(Error::Grid("grid has no interior nodes".into()));
        }
        let stencils: Vec<_> = (0..n).map(|k| gradient_stencil(space, k)).collect();
        let mut entries: Vec<(usize, usize)> = nodes_of.iter().enumerate().map(|(k, _)| (k, k)).collect();
        let dim = space.dim();
        for st in &stencils {
            for_each_pair(st, dim, &unknown_of, |ka, kb, _, _, _| entries.push((ka, kb)));
        }
        let pattern = SpdPattern::new(nodes_of.len(), &entries)?;
        Ok(Self {
            space: space.clone(),
            tau,
            weights: node_weights(space),
            unknown_of,
            nodes_of,
            stencils,
            pattern,
            newton,
        })
    }

    pub fn space(&self) -> &SpatialGrid {
        &self.space
    }

    fn work(&self) -> Work {
        let n = self.space.node_count();
        let dim = self.space.dim();
        Work {
            grad: vec![0.0; n * dim],
            flux: vec![0.0; n * dim],
            div: vec![0.0; n],
            resid: vec![0.0; self.nodes_of.len()],
            values: Vec::new(),
            jac: vec![0.0; dim * dim],
        }
    }

    /// Fills `w.resid` with `R/W` on the unknowns and returns the merit
    /// `Σ W r²` together with `τ‖r‖_∞`.
    fn residual(
        &self,
        u: &[f64],
        u_prev: &[f64],
        f: &[f64],
        params: &FluxParams,
        w: &mut Work,
    ) -> (f64, f64) {
        let dim = self.space.dim();
        gradient_into(&self.space, u, &mut w.grad);
        for (g, a) in w.grad.chunks(dim).zip(w.flux.chunks_mut(dim)) {
            regularized_flux_into(g, params, a);
        }
        divergence_into(&self.space, &w.flux, &self.weights, &mut w.div);
        let mut merit = 0.0;
        let mut sup: f64 = 0.0;
        for (k, &node) in self.nodes_of.iter().enumerate() {
            let r = (u[node] - u_prev[node]) / self.tau - f[node] - w.div[node];
            w.resid[k] = r;
            merit += self.weights[node] * r * r;
            sup = sup.max(r.abs());
        }
        (merit, self.tau * sup)
    }

    /// Assembles the lower triangle of the Jacobian (or of the lagged
    /// diffusivity operator) at the gradient stored in `w.grad`.
    fn assemble(&self, params: &FluxParams, picard: bool, w: &mut Work) {
        let dim = self.space.dim();
        w.values.clear();
        for &node in &self.nodes_of {
            w.values.push(self.weights[node] / self.tau);
        }
        for (m, st) in self.stencils.iter().enumerate() {
            let g = &w.grad[m * dim..(m + 1) * dim];
            if picard {
                let kappa = flux_coefficient(crate::flux::norm(g), params);
                w.jac.iter_mut().for_each(|v| *v = 0.0);
                for s in 0..dim {
                    w.jac[s * dim + s] = kappa;
                }
            } else {
                regularized_flux_jacobian_into(g, params, &mut w.jac);
            }
            let wm = self.weights[m];
            let jac = &w.jac;
            let values = &mut w.values;
            for_each_pair(st, dim, &self.unknown_of, |_, _, s, t, c| {
                values.push(wm * jac[s * dim + t] * c);
            });
        }
    }

    fn tolerance(&self, u: &[f64]) -> f64 {
        let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.newton.abs_tol + self.newton.rel_tol * (1.0 + scale)
    }

    /// Solves one backward Euler level. `u` carries the initial guess on
    /// entry (its boundary values are the Dirichlet data and are never
    /// modified) and the solution on exit.
    pub fn step(
        &self,
        u: &mut [f64],
        u_prev: &[f64],
        f: &[f64],
        params: &FluxParams,
        level: usize,
    ) -> Result<StepStats> {
        if !(params.epsilon > 0.0) {
            return Err(Error::InvalidParameter(
                "implicit steps need epsilon > 0; epsilon = 0 is reached only by continuation"
                    .into(),
            ));
        }
        let cfg = &self.newton;
        let mut w = self.work();
        let mut trial = u.to_vec();
        let mut stats = StepStats {
            newton_iterations: 0,
            picard_iterations: 0,
            rejected_trials: 0,
            residual: 0.0,
            monotone: true,
        };
        let (mut merit, mut res) = self.residual(u, u_prev, f, params, &mut w);
        let mut picard = false;
        let mut delta = vec![0.0; self.nodes_of.len()];
        let total_budget = cfg.max_iter * if cfg.picard_fallback { 2 } else { 1 };
        let mut iterations = 0;
        while res > self.tolerance(u) {
            if iterations >= total_budget {
                return Err(Error::StepFailure {
                    level,
                    epsilon: params.epsilon,
                    residual: res,
                });
            }
            iterations += 1;
            // the residual is recomputed at u so that w.grad holds Du
            gradient_into(&self.space, u, &mut w.grad);
            self.assemble(params, picard, &mut w);
            for (d, (k, r)) in delta.iter_mut().zip(w.resid.iter().enumerate()) {
                *d = -self.weights[self.nodes_of[k]] * r;
            }
            self.pattern.solve(&w.values, &mut delta)?;
            let mut alpha = 1.0;
            let mut rejections = 0;
            let accepted = loop {
                for (k, &node) in self.nodes_of.iter().enumerate() {
                    trial[node] = u[node] + alpha * delta[k];
                }
                let (m_new, r_new) = self.residual(&trial, u_prev, f, params, &mut w);
                if m_new <= (1.0 - 2.0 * cfg.armijo * alpha) * merit || r_new <= self.tolerance(&trial) {
                    break Some((m_new, r_new));
                }
                rejections += 1;
                stats.rejected_trials += 1;
                if rejections >= cfg.rejections_before_fallback {
                    break None;
                }
                alpha *= cfg.backtrack;
            };
            match accepted {
                Some((m_new, r_new)) => {
                    if m_new > merit {
                        stats.monotone = false;
                    }
                    u.copy_from_slice(&trial);
                    merit = m_new;
                    res = r_new;
                    if picard {
                        stats.picard_iterations += 1;
                    } else {
                        stats.newton_iterations += 1;
                    }
                }
                None if !picard && cfg.picard_fallback => {
                    picard = true;
                    // restore the residual work arrays at the current iterate
                    let (m0, r0) = self.residual(u, u_prev, f, params, &mut w);
                    merit = m0;
                    res = r0;
                }
                None if picard => {
                    // lagged-coefficient steps are taken undamped when the
                    // merit function cannot certify them
                    for (k, &node) in self.nodes_of.iter().enumerate() {
                        u[node] += delta[k];
                    }
                    let (m0, r0) = self.residual(u, u_prev, f, params, &mut w);
                    merit = m0;
                    res = r0;
                    stats.picard_iterations += 1;
                }
                None => {
                    return Err(Error::StepFailure {
                        level,
                        epsilon: params.epsilon,
                        residual: res,
                    })
                }
            }
        }
        stats.residual = res;
        Ok(stats)
    }
}

/// Calls `emit(ka, kb, s, t, ca·cb)` for every gradient-stencil pair at one
/// node whose unknowns satisfy `ka ≥ kb`.
#[inline]
fn for_each_pair(
    st: &[[(usize, f64); 3]; 2],
    dim: usize,
    unknown_of: &[usize],
    mut emit: impl FnMut(usize, usize, usize, usize, f64),
) {
    for s in 0..dim {
        for &(a, ca) in &st[s] {
            let ka = unknown_of[a];
            if ca == 0.0 || ka == NO_UNKNOWN {
                continue;
            }
            for t in 0..dim {
                for &(b, cb) in &st[t] {
                    let kb = unknown_of[b];
                    if cb == 0.0 || kb == NO_UNKNOWN || ka < kb {
                        continue;
                    }
                    emit(ka, kb, s, t, ca * cb);
                }
            }
        }
    }
}

/// `u_new` for one backward Euler step from `u_prev` at level `level`, with
/// Dirichlet values taken from `g` at that level.
pub fn step_implicit(
    u_prev: &[f64],
    level: usize,
    scenario: &Scenario,
    epsilon: f64,
    f: &ScalarField,
    g: &ScalarField,
) -> Result<(Vec<f64>, StepStats)> {
    let space = scenario.grid.space();
    let stepper = Stepper::new(space, scenario.grid.tau(), scenario.newton)?;
    let params = scenario.params.with_epsilon(epsilon)?;
    let mut u = initial_guess(space, u_prev, g.slice(level));
    let stats = stepper.step(&mut u, u_prev, f.slice(level), &params, level)?;
    Ok((u, stats))
}

fn initial_guess(space: &SpatialGrid, interior: &[f64], boundary: &[f64]) -> Vec<f64> {
    (0..space.node_count())
        .map(|k| if space.is_boundary(k) { boundary[k] } else { interior[k] })
        .collect()
}

/// Weak-form residual over a battery of interior test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakResidual {
    /// Largest `|∫ ∂_t u φ + ⟨A(Du), Dφ⟩ − f φ|` over the battery.
    pub absolute: f64,
    /// The same, divided by the sum of the magnitudes of the three terms.
    pub relative: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub epsilon: f64,
    pub params: FluxParams,
    pub u: ScalarField,
    /// The datum actually used (mollified when the scenario asks for it).
    pub f_eps: ScalarField,
    pub steps: Vec<StepStats>,
    pub weak: WeakResidual,
    pub wall_time: f64,
}

impl SolveResult {
    /// Rebuilds a result from stored fields, e.g. after reloading a run.
    /// Step statistics are not recoverable and stay empty.
    pub fn from_fields(epsilon: f64, params: &FluxParams, u: ScalarField, f_eps: ScalarField) -> Result<Self> {
        if u.grid() != f_eps.grid() {
            return Err(Error::Grid("solution and datum live on different grids".into()));
        }
        let params = params.with_epsilon(epsilon)?;
        let weak = weak_residual(&u, &f_eps, &params);
        Ok(Self {
            epsilon,
            params,
            u,
            f_eps,
            steps: Vec::new(),
            weak,
            wall_time: 0.0,
        })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        self.u.grid()
    }

    pub fn max_residual(&self) -> f64 {
        self.steps.iter().fold(0.0, |a, s| a.max(s.residual))
    }

    pub fn total_iterations(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.newton_iterations + s.picard_iterations)
            .sum()
    }

    /// `‖u(·, T) − u(·, 0)‖_∞`.
    pub fn drift(&self) -> f64 {
        let last = self.grid().levels() - 1;
        self.u
            .slice(last)
            .iter()
            .zip(self.u.slice(0))
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }
}

pub fn solve_cauchy_dirichlet(scenario: &Scenario, epsilon: f64) -> Result<SolveResult> {
    solve_with_guess(scenario, epsilon, None)
}

fn solve_with_guess(
    scenario: &Scenario,
    epsilon: f64,
    guess: Option<&ScalarField>,
) -> Result<SolveResult> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must lie in (0, 1]"
        )));
    }
    let start = Instant::now();
    let grid = &scenario.grid;
    let params = scenario.params.with_epsilon(epsilon)?;
    let f = scenario.f.field(grid)?;
    let f_eps = if scenario.mollify { mollify(&f, epsilon)? } else { f };
    let g = scenario.g.field(grid)?;
    let space = grid.space();
    let stepper = Stepper::new(space, grid.tau(), scenario.newton)?;
    let mut u = ScalarField::zeros(grid.clone());
    u.slice_mut(0).copy_from_slice(g.slice(0));
    let mut steps = Vec::with_capacity(grid.steps());
    for level in 1..grid.levels() {
        let interior = match guess {
            Some(gu) => gu.slice(level).to_vec(),
            None => u.slice(level - 1).to_vec(),
        };
        let mut next = initial_guess(space, &interior, g.slice(level));
        let prev = u.slice(level - 1).to_vec();
        let stats = stepper.step(&mut next, &prev, f_eps.slice(level), &params, level)?;
        u.slice_mut(level).copy_from_slice(&next);
        steps.push(stats);
    }
    let weak = weak_residual(&u, &f_eps, &params);
    Ok(SolveResult {
        epsilon,
        params,
        u,
        f_eps,
        steps,
        weak,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Smooth test functions vanishing on the lateral boundary and at both ends
/// of the time interval.
fn test_functions(grid: &SpaceTimeGrid) -> Vec<ScalarField> {
    let space = grid.space();
    let dim = space.dim();
    let (t0, t1) = (grid.t0(), grid.t_end());
    let modes: [[f64; 3]; 4] = [[1.0, 1.0, 1.0], [2.0, 1.0, 1.0], [1.0, 3.0, 2.0], [3.0, 2.0, 1.0]];
    modes
        .iter()
        .map(|m| {
            ScalarField::from_fn(grid.clone(), |x, t| {
                let mut v = (std::f64::consts::PI * m[2] * (t - t0) / (t1 - t0)).sin().powi(2);
                for s in 0..dim {
                    let lo = space.origin()[s];
                    let len = space.upper(s) - lo;
                    v *= (std::f64::consts::PI * m[s] * (x[s] - lo) / len).sin().powi(2);
                }
                v
            })
            .expect("finite test function")
        })
        .collect()
}

/// `Σ_l τ [⟨(u^l − u^{l−1})/τ − f^l, φ^l⟩ + ⟨A(Du^l), Dφ^l⟩]`, the weak form
/// after summation by parts in time.
pub fn weak_residual(u: &ScalarField, f: &ScalarField, params: &FluxParams) -> WeakResidual {
    let grid = u.grid();
    let space = grid.space();
    let dim = space.dim();
    let n = space.node_count();
    let weights = node_weights(space);
    let tau = grid.tau();
    let mut grad_u = vec![0.0; n * dim];
    let mut grad_phi = vec![0.0; n * dim];
    let mut flux = vec![0.0; n * dim];
    let mut worst = WeakResidual {
        absolute: 0.0,
        relative: 0.0,
    };
    for phi in test_functions(grid) {
        let (mut total, mut scale) = (0.0, 0.0);
        for level in 1..grid.levels() {
            let (ul, up, fl, pl) = (u.slice(level), u.slice(level - 1), f.slice(level), phi.slice(level));
            gradient_into(space, ul, &mut grad_u);
            gradient_into(space, pl, &mut grad_phi);
            for (g, a) in grad_u.chunks(dim).zip(flux.chunks_mut(dim)) {
                regularized_flux_into(g, params, a);
            }
            let (mut dt, mut src, mut diff) = (0.0, 0.0, 0.0);
            for k in 0..n {
                dt += weights[k] * (ul[k] - up[k]) * pl[k];
                src += weights[k] * fl[k] * pl[k] * tau;
                let mut a = 0.0;
                for s in 0..dim {
                    a += flux[k * dim + s] * grad_phi[k * dim + s];
                }
                diff += weights[k] * a * tau;
            }
            total += dt - src + diff;
            scale += dt.abs() + src.abs() + diff.abs();
        }
        worst.absolute = worst.absolute.max(total.abs());
        if scale > 0.0 {
            worst.relative = worst.relative.max(total.abs() / scale);
        }
    }
    worst
}

/// Comparison quantities for two consecutive schedule entries, measured on
/// the whole of `Ω_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonPair {
    pub eps_coarse: f64,
    pub eps_fine: f64,
    /// `sup_t ‖u_{ε_k} − u_{ε_{k+1}}‖²_{L²}`.
    pub sup_l2_sq: f64,
    /// `∫ |H_{p/2}(Du_{ε_k}) − H_{p/2}(Du_{ε_{k+1}})|²`.
    pub h_energy: f64,
    /// `∫ ⟨H_{p−1}(Du_k) − H_{p−1}(Du_{k+1}), Du_k − Du_{k+1}⟩`, nonnegative by monotonicity.
    pub monotone_term: f64,
}

impl ComparisonPair {
    pub fn total(&self) -> f64 {
        self.sup_l2_sq + self.h_energy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub smallest_epsilon: f64,
    /// Least-squares slope of `log(total)` against `log ε_k`, when defined.
    pub slope: Option<f64>,
    /// `‖Du_{ε_k}‖_{L^p(Ω_T)}` along the schedule.
    pub du_lp: Vec<f64>,
    /// `(max − min)/median` of `du_lp`.
    pub du_spread: f64,
    pub sup_l2_nonincreasing: bool,
    pub h_energy_nonincreasing: bool,
    pub monotone_terms_nonnegative: bool,
}

#[derive(Debug, Clone)]
pub struct Continuation {
    pub results: Vec<SolveResult>,
    pub pairs: Vec<ComparisonPair>,
    pub limit: LimitReport,
}

impl Continuation {
    /// The operational solution of the degenerate problem.
    pub fn limit_solution(&self) -> &SolveResult {
        self.results.last().expect("non-empty schedule")
    }
}

/// Nodewise gradients of every level.
pub(crate) fn gradients(u: &ScalarField) -> Vec<Vec<f64>> {
    let space = u.grid().space();
    let mut out = Vec::with_capacity(u.grid().levels());
    for level in 0..u.grid().levels() {
        let mut g = vec![0.0; space.node_count() * space.dim()];
        gradient_into(space, u.slice(level), &mut g);
        out.push(g);
    }
    out
}

pub fn compare(a: &SolveResult, b: &SolveResult) -> ComparisonPair {
    let grid = a.grid();
    let space = grid.space();
    let dim = space.dim();
    let p = a.params.p;
    let nu = a.params.nu;
    let vol = space.cell_volume();
    let mut sup: f64 = 0.0;
    for level in 0..grid.levels() {
        let s: f64 = a
            .u
            .slice(level)
            .iter()
            .zip(b.u.slice(level))
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        sup = sup.max(s * vol);
    }
    let ga = gradients(&a.u);
    let gb = gradients(&b.u);
    let (mut energy, mut mono) = (0.0, 0.0);
    let mut ha = vec![0.0; dim];
    let mut hb = vec![0.0; dim];
    for level in 0..grid.levels() {
        for k in 0..space.node_count() {
            let xa = &ga[level][k * dim..(k + 1) * dim];
            let xb = &gb[level][k * dim..(k + 1) * dim];
            h_lambda_into(xa, p / 2.0, nu, &mut ha);
            h_lambda_into(xb, p / 2.0, nu, &mut hb);
            energy += (0..dim).map(|s| (ha[s] - hb[s]).powi(2)).sum::<f64>();
            h_lambda_into(xa, p - 1.0, nu, &mut ha);
            h_lambda_into(xb, p - 1.0, nu, &mut hb);
            mono += (0..dim).map(|s| (ha[s] - hb[s]) * (xa[s] - xb[s])).sum::<f64>();
        }
    }
    ComparisonPair {
        eps_coarse: a.epsilon,
        eps_fine: b.epsilon,
        sup_l2_sq: sup,
        h_energy: energy * grid.cell_measure(),
        monotone_term: mono * grid.cell_measure(),
    }
}

/// `‖Du‖_{L^p(Ω_T)}`.
pub fn gradient_lp(result: &SolveResult) -> f64 {
    let grid = result.grid();
    let dim = grid.dim();
    let p = result.params.p;
    let total: f64 = gradients(&result.u)
        .iter()
        .map(|g| g.chunks(dim).map(|x| crate::flux::norm(x).powf(p)).sum::<f64>())
        .sum();
    (total * grid.cell_measure()).powf(1.0 / p)
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

fn nonincreasing(v: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = v.collect();
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
}

/// Median of a non-empty slice.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn continuation_solve(scenario: &Scenario) -> Result<Continuation> {
    scenario.validate()?;
    let mut results: Vec<SolveResult> = Vec::with_capacity(scenario.epsilon_schedule.len());
    for &eps in &scenario.epsilon_schedule {
        let guess = results.last().map(|r| &r.u);
        results.push(solve_with_guess(scenario, eps, guess)?);
    }
    Ok(summarize(results))
}

/// Builds comparison pairs and the limit report from solves ordered along
/// the schedule.
pub fn summarize(results: Vec<SolveResult>) -> Continuation {
    let pairs: Vec<ComparisonPair> = results.windows(2).map(|w| compare(&w[0], &w[1])).collect();
    let du_lp: Vec<f64> = results.iter().map(gradient_lp).collect();
    let med = median(&du_lp);
    let (lo, hi) = du_lp
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let fit: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|c| c.total() > 0.0)
        .map(|c| (c.eps_coarse.ln(), c.total().ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
    let tail = pairs.iter().skip(1);
    let limit = LimitReport {
        smallest_epsilon: results.last().map(|r| r.epsilon).unwrap_or(f64::NAN),
        slope: fit_slope(&xs, &ys),
        du_spread: if med > 0.0 { (hi - lo) / med } else { 0.0 },
        du_lp,
        sup_l2_nonincreasing: nonincreasing(tail.clone().map(|c| c.sup_l2_sq)),
        h_energy_nonincreasing: nonincreasing(tail.map(|c| c.h_energy)),
        monotone_terms_nonnegative: pairs
            .iter()
            .all(|c| c.monotone_term >= -1e-12 * (1.0 + c.h_energy)),
    };
    Continuation {
        results,
        pairs,
        limit,
    }
}
