//! Both sides of the local a priori estimates, evaluated on discrete
//! solutions, with fitted constants and refinement-stability checks.
//!
//! Each report is computed over a family of concentric cylinders sharing the
//! vertex of an outer cylinder `Q_{R₀}`; the fitted constant is the largest
//! ratio `lhs/rhs` over the family. Every side is also split into named
//! terms that are individually homogeneous under `(u, ν, f) ↦ λ(u, ν, f)`,
//! which is what [`homogeneity_audit`] checks.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::calculus::{ball_integral, ball_nodes, divergence_into, gradient_into, node_weights, tau_shift};
use crate::error::{Error, Result};
use crate::flux::{h_lambda_into, norm, FluxParams};
use crate::grid::{CylinderNodes, ParabolicCylinder, ScalarField, SpatialGrid};
use crate::norms::interpolation_check;
use crate::solver::{fit_slope, SolveResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateId {
    Caccioppoli,
    HigherIntegrability,
    MainSobolev,
    TimeDerivative,
    Comparison,
    DiffQuotientLemma,
    InterpolationLemma,
    IterationLemma,
}

impl EstimateId {
    pub const ALL: [EstimateId; 8] = [
        Self::Caccioppoli,
        Self::HigherIntegrability,
        Self::MainSobolev,
        Self::TimeDerivative,
        Self::Comparison,
        Self::DiffQuotientLemma,
        Self::InterpolationLemma,
        Self::IterationLemma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Caccioppoli => "caccioppoli",
            Self::HigherIntegrability => "higher_integrability",
            Self::MainSobolev => "main_sobolev",
            Self::TimeDerivative => "time_derivative",
            Self::Comparison => "comparison",
            Self::DiffQuotientLemma => "diff_quotient_lemma",
            Self::InterpolationLemma => "interpolation_lemma",
            Self::IterationLemma => "iteration_lemma",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown estimate {name:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    VacuousPass,
    Violation,
}

/// One cylinder (or shift, or resolution) of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Member {
    /// Cylinder width; shift length for the difference-quotient lemma.
    pub scale: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs/rhs`; `None` for 0/0 and for `rhs = 0 < lhs`.
    pub constant: Option<f64>,
    pub status: Status,
    /// Named homogeneous pieces of both sides, keyed `lhs.*` and `rhs.*`.
    pub terms: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
}

impl Member {
    pub fn new(scale: f64, lhs: f64, rhs: f64) -> Self {
        let (constant, status) = judge(lhs, rhs);
        Self {
            scale,
            lhs,
            rhs,
            constant,
            status,
            terms: BTreeMap::new(),
            extras: BTreeMap::new(),
        }
    }

    fn with_terms(mut self, terms: &[(&str, f64)]) -> Self {
        for (k, v) in terms {
            self.terms.insert((*k).to_string(), *v);
        }
        self
    }
}

fn judge(lhs: f64, rhs: f64) -> (Option<f64>, Status) {
    if !(lhs.is_finite() && rhs.is_finite()) || lhs < 0.0 || rhs < 0.0 {
        return (None, Status::Violation);
    }
    if rhs > 0.0 {
        (Some(lhs / rhs), Status::Pass)
    } else if lhs == 0.0 {
        (None, Status::VacuousPass)
    } else {
        (None, Status::Violation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub id: EstimateId,
    /// The outer cylinder `Q_{R₀}`, when the estimate is local.
    pub outer: Option<ParabolicCylinder>,
    pub members: Vec<Member>,
    /// Sides of the member realizing the fitted constant.
    pub lhs: f64,
    pub rhs: f64,
    pub constant: Option<f64>,
    pub status: Status,
    pub pass: bool,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, String>,
}

impl EstimateReport {
    pub fn from_members(
        id: EstimateId,
        outer: Option<ParabolicCylinder>,
        members: Vec<Member>,
        metadata: BTreeMap<String, String>,
    ) -> Self {
        let violation = members.iter().any(|m| m.status == Status::Violation);
        let best = members
            .iter()
            .filter(|m| m.constant.is_some())
            .max_by(|a, b| a.constant.unwrap().total_cmp(&b.constant.unwrap()));
        let status = if violation {
            Status::Violation
        } else if best.is_some() {
            Status::Pass
        } else {
            Status::VacuousPass
        };
        let pick = members
            .iter()
            .find(|m| m.status == Status::Violation)
            .or(best)
            .or(members.first());
        let (lhs, rhs) = pick.map_or((0.0, 0.0), |m| (m.lhs, m.rhs));
        Self {
            id,
            outer,
            lhs,
            rhs,
            constant: if violation { None } else { best.and_then(|m| m.constant) },
            status,
            pass: status != Status::Violation,
            members,
            extras: BTreeMap::new(),
            metadata,
        }
    }

    pub fn constant_is_infinite(&self) -> bool {
        self.members
            .iter()
            .any(|m| m.status == Status::Violation && m.rhs == 0.0 && m.lhs > 0.0)
    }
}

/// Concentric cylinders `Q_ρ` sharing the vertex of `Q_{R₀}`, with `ρ`
/// evenly spaced in `[R₀/4, R₀/2]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderFamily {
    pub outer: ParabolicCylinder,
    pub radii: Vec<f64>,
}

impl CylinderFamily {
    pub fn new(outer: ParabolicCylinder, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("cylinder family must not be empty".into()));
        }
        let r0 = outer.rho;
        let radii = if count == 1 {
            vec![r0 / 2.0]
        } else {
            (0..count)
                .map(|i| r0 / 4.0 + (r0 / 4.0) * i as f64 / (count - 1) as f64)
                .collect()
        };
        Ok(Self { outer, radii })
    }

    pub fn standard(outer: ParabolicCylinder) -> Self {
        Self::new(outer, 5).expect("non-empty")
    }

    fn at(&self, rho: f64) -> ParabolicCylinder {
        ParabolicCylinder {
            x0: self.outer.x0.clone(),
            t0: self.outer.t0,
            rho,
        }
    }

    fn require(&self, inner: &ParabolicCylinder) -> Result<()> {
        if self.outer.contains_cylinder(inner) {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "cylinder of width {} is not contained in the outer cylinder of width {}",
                inner.rho, self.outer.rho
            )))
        }
    }
}

/// Gradient-derived nodal quantities of a solution, per level.
struct Kinematics {
    dim: usize,
    nodes: usize,
    /// `Du`, interleaved by node.
    grad: Vec<Vec<f64>>,
    /// `|Du|`.
    du: Vec<Vec<f64>>,
    /// `|D H_{p/2}(Du)|²`.
    dh2: Vec<Vec<f64>>,
}

/// Sum over components of `|D v_c|²` for an interleaved vector field `v`.
pub(crate) fn component_gradient_sq(space: &SpatialGrid, v: &[f64]) -> Vec<f64> {
    let dim = space.dim();
    let n = space.node_count();
    let mut out = vec![0.0; n];
    let mut comp = vec![0.0; n];
    let mut g = vec![0.0; n * dim];
    for c in 0..dim {
        for k in 0..n {
            comp[k] = v[k * dim + c];
        }
        gradient_into(space, &comp, &mut g);
        for k in 0..n {
            out[k] += g[k * dim..(k + 1) * dim].iter().map(|x| x * x).sum::<f64>();
        }
    }
    out
}

pub(crate) fn h_field(grad: &[f64], dim: usize, lambda: f64, nu: f64) -> Vec<f64> {
    let mut out = vec![0.0; grad.len()];
    for (x, o) in grad.chunks(dim).zip(out.chunks_mut(dim)) {
        h_lambda_into(x, lambda, nu, o);
    }
    out
}

impl Kinematics {
    fn new(u: &ScalarField, p: f64, nu: f64) -> Self {
        let grid = u.grid();
        let space = grid.space();
        let dim = space.dim();
        let nodes = space.node_count();
        let mut grad = Vec::with_capacity(grid.levels());
        let mut du = Vec::with_capacity(grid.levels());
        let mut dh2 = Vec::with_capacity(grid.levels());
        for level in 0..grid.levels() {
            let mut g = vec![0.0; nodes * dim];
            gradient_into(space, u.slice(level), &mut g);
            du.push(g.chunks(dim).map(norm).collect());
            dh2.push(component_gradient_sq(space, &h_field(&g, dim, p / 2.0, nu)));
            grad.push(g);
        }
        Self {
            dim,
            nodes,
            grad,
            du,
            dh2,
        }
    }

    fn at(&self, level: usize, node: usize) -> &[f64] {
        &self.grad[level][node * self.dim..(node + 1) * self.dim]
    }
}

/// `|Df|` per level.
fn datum_gradient_norms(f: &ScalarField) -> Vec<Vec<f64>> {
    let space = f.grid().space();
    let dim = space.dim();
    let mut g = vec![0.0; space.node_count() * dim];
    (0..f.grid().levels())
        .map(|level| {
            gradient_into(space, f.slice(level), &mut g);
            g.chunks(dim).map(norm).collect()
        })
        .collect()
}

fn lq(values: &[Vec<f64>], nodes: &CylinderNodes, q: f64) -> f64 {
    nodes.integrate(|l, k| values[l][k].abs().powf(q)).powf(1.0 / q)
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// Smallest admissible datum exponent `(np+4)/(np+4−n)`.
pub fn theta_min(p: f64, n: usize) -> f64 {
    let n = n as f64;
    (n * p + 4.0) / (n * p + 4.0 - n)
}

fn metadata(u: &ScalarField, params: &FluxParams) -> BTreeMap<String, String> {
    let grid = u.grid();
    let space = grid.space();
    let mut m = BTreeMap::new();
    m.insert("cells".into(), format!("{:?}", space.cells()));
    m.insert("dim".into(), space.dim().to_string());
    m.insert("h".into(), space.h().to_string());
    m.insert("tau".into(), grid.tau().to_string());
    m.insert("steps".into(), grid.steps().to_string());
    m.insert("p".into(), params.p.to_string());
    m.insert("nu".into(), params.nu.to_string());
    m.insert("epsilon".into(), params.epsilon.to_string());
    if space.dim() == 1 {
        m.insert("note".into(), "one-dimensional run".into());
    }
    m
}

/// Shared pieces of the energy-type right-hand side on `Q_{R₀}`.
struct EnergyBracket {
    datum: f64,
    energy: f64,
    measure: f64,
}

impl EnergyBracket {
    fn new(kin: &Kinematics, df: &[Vec<f64>], outer: &CylinderNodes, p: f64, rho: f64) -> Self {
        let df_norm = lq(df, outer, conjugate(p));
        let du_p = outer.integrate(|l, k| kin.du[l][k].powf(p));
        Self {
            datum: df_norm * du_p.powf(1.0 / p),
            energy: du_p / (rho * rho),
            measure: outer.measure() / (rho * rho),
        }
    }

    fn total(&self) -> f64 {
        self.datum + self.energy + self.measure
    }
}

/// Energy estimate for the regularized solution:
/// `sup_t ‖Du‖²_{L²(B_{ρ/2})} + ∫_{Q_{ρ/2}} |DH_{p/2}(Du)|²` against
/// `‖Df_ε‖_{L^{p′}(Q_{R₀})} ‖Du‖_{L^p(Q_{R₀})} + ρ^{−2} ∫_{Q_{R₀}} (|Du|^p + 1)`.
pub fn caccioppoli(
    u: &ScalarField,
    params: &FluxParams,
    f_eps: &ScalarField,
    family: &CylinderFamily,
) -> Result<EstimateReport> {
    let grid = u.grid();
    let p = params.p;
    let outer = family.outer.nodes(grid)?;
    let kin = Kinematics::new(u, p, params.nu);
    let df = datum_gradient_norms(f_eps);
    let mut members = Vec::new();
    for &rho in &family.radii {
        family.require(&family.at(rho))?;
        let half = family.at(rho / 2.0).nodes(grid)?;
        let sup = half.sup_slice(|l, k| kin.du[l][k].powi(2));
        let dh = half.integrate(|l, k| kin.dh2[l][k]);
        let b = EnergyBracket::new(&kin, &df, &outer, p, rho);
        members.push(Member::new(rho, sup + dh, b.total()).with_terms(&[
            ("lhs.sup_l2", sup),
            ("lhs.dh_energy", dh),
            ("rhs.datum", b.datum),
            ("rhs.energy", b.energy),
            ("rhs.measure", b.measure),
        ]));
    }
    Ok(EstimateReport::from_members(
        EstimateId::Caccioppoli,
        Some(family.outer.clone()),
        members,
        metadata(u, params),
    ))
}

/// `∫_{Q_{ρ/2}} (|Du|−ν)_+^{p+4/n}` against the energy bracket raised to
/// `1 + 2/n`. Each member also carries the product form on `Q_γ ⊂ Q_ρ`
/// with `γ = ρ/2`.
pub fn higher_integrability(
    u: &ScalarField,
    params: &FluxParams,
    f_eps: &ScalarField,
    family: &CylinderFamily,
) -> Result<EstimateReport> {
    let grid = u.grid();
    let (p, nu) = (params.p, params.nu);
    let n = grid.dim() as f64;
    let outer = family.outer.nodes(grid)?;
    let kin = Kinematics::new(u, p, nu);
    let df = datum_gradient_norms(f_eps);
    let mut members = Vec::new();
    for &rho in &family.radii {
        family.require(&family.at(2.0 * rho))?;
        let half = family.at(rho / 2.0).nodes(grid)?;
        let full = family.at(rho).nodes(grid)?;
        let excess = half.integrate(|l, k| (kin.du[l][k] - nu).max(0.0).powf(p + 4.0 / n));
        let b = EnergyBracket::new(&kin, &df, &outer, p, rho);
        let rhs = b.total().powf(1.0 + 2.0 / n);
        let gamma = rho / 2.0;
        let sup = full.sup_slice(|l, k| kin.du[l][k].powi(2));
        let energy = full.integrate(|l, k| kin.dh2[l][k]);
        let lower = full.integrate(|l, k| kin.du[l][k].powf(p)) / (rho - gamma).powi(2);
        let product = sup.powf(2.0 / n) * (energy + lower);
        let mut m = Member::new(rho, excess, rhs).with_terms(&[
            ("lhs.excess", excess),
            ("rhs.datum", b.datum),
            ("rhs.energy", b.energy),
            ("rhs.measure", b.measure),
        ]);
        m.extras.insert("product_rhs".into(), product);
        if product > 0.0 {
            m.extras.insert("product_constant".into(), excess / product);
        }
        members.push(m);
    }
    Ok(EstimateReport::from_members(
        EstimateId::HigherIntegrability,
        Some(family.outer.clone()),
        members,
        metadata(u, params),
    ))
}

fn check_theta(theta: f64, p: f64, n: usize) -> Result<()> {
    let lo = theta_min(p, n);
    if theta.is_finite() && theta >= lo * (1.0 - 1e-12) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "theta = {theta} is below the admissible range [{lo}, inf)"
        )))
    }
}

/// Exponent of `‖Df‖_{L^ϑ}` in the main estimate, `(np+4)/(np+2−n)`.
fn df_exponent(p: f64, n: f64) -> f64 {
    (n * p + 4.0) / (n * p + 2.0 - n)
}

/// `∫_{Q_{ρ/2}} |DH_{p/2}(Du)|²` against
/// `ν‖Df‖_ϑ + ‖Df‖_ϑ^{(np+4)/(np+2−n)} + R^{−2}(‖Du‖_p^p + ‖Du‖_p² + ν^p + ν²)`
/// with norms on `Q_{R₀}` and `R = 2ρ`.
pub fn main_sobolev(
    u: &ScalarField,
    params: &FluxParams,
    f: &ScalarField,
    family: &CylinderFamily,
    theta: f64,
) -> Result<EstimateReport> {
    let grid = u.grid();
    let (p, nu) = (params.p, params.nu);
    let n = grid.dim();
    check_theta(theta, p, n)?;
    let outer = family.outer.nodes(grid)?;
    let kin = Kinematics::new(u, p, nu);
    let df = lq(&datum_gradient_norms(f), &outer, theta);
    let du = lq(&kin.du, &outer, p);
    let mut members = Vec::new();
    for &rho in &family.radii {
        let r = 2.0 * rho;
        family.require(&family.at(r))?;
        let half = family.at(rho / 2.0).nodes(grid)?;
        let lhs = half.integrate(|l, k| kin.dh2[l][k]);
        let terms = [
            ("rhs.nu_df", nu * df),
            ("rhs.df_power", df.powf(df_exponent(p, n as f64))),
            ("rhs.du_p", du.powf(p) / (r * r)),
            ("rhs.du_2", du * du / (r * r)),
            ("rhs.nu_p", nu.powf(p) / (r * r)),
            ("rhs.nu_2", nu * nu / (r * r)),
        ];
        let rhs = terms.iter().map(|t| t.1).sum();
        let mut all = vec![("lhs.dh_energy", lhs)];
        all.extend_from_slice(&terms);
        members.push(Member::new(rho, lhs, rhs).with_terms(&all));
    }
    let mut report = EstimateReport::from_members(
        EstimateId::MainSobolev,
        Some(family.outer.clone()),
        members,
        metadata(u, params),
    );
    report.metadata.insert("theta".into(), theta.to_string());
    Ok(report)
}

/// `div H_{p−1}(Du) + f` at every node of one level.
fn expansion(space: &SpatialGrid, grad: &[f64], f: &[f64], p: f64, nu: f64, weights: &[f64]) -> Vec<f64> {
    let flux = h_field(grad, space.dim(), p - 1.0, nu);
    let mut out = vec![0.0; space.node_count()];
    divergence_into(space, &flux, weights, &mut out);
    for (o, v) in out.iter_mut().zip(f) {
        *o += v;
    }
    out
}

/// Backward differences `a^l = (u^l − u^{l−1})/τ` and the spatial expansion
/// `b^l = div H_{p−1}(Du^l) + f^l` on the levels of a cylinder (`l ≥ 1`).
///
/// `b` is returned averaged over the two ends of each step, which is the
/// value `a` approximates to second order in `τ`.
fn time_derivatives(
    u: &ScalarField,
    kin: &Kinematics,
    f: &ScalarField,
    params: &FluxParams,
    nodes: &CylinderNodes,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let grid = u.grid();
    let space = grid.space();
    let weights = node_weights(space);
    let levels = grid.levels();
    let mut a = vec![Vec::new(); levels];
    let mut b = vec![Vec::new(); levels];
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut expand = |l: usize| -> Vec<f64> {
        cache
            .entry(l)
            .or_insert_with(|| expansion(space, &kin.grad[l], f.slice(l), params.p, params.nu, &weights))
            .clone()
    };
    for &l in nodes.levels.iter().filter(|&&l| l >= 1) {
        a[l] = u
            .slice(l)
            .iter()
            .zip(u.slice(l - 1))
            .map(|(x, y)| (x - y) / grid.tau())
            .collect();
        let (bl, bm) = (expand(l), expand(l - 1));
        b[l] = bl.iter().zip(&bm).map(|(x, y)| 0.5 * (x + y)).collect();
    }
    (a, b)
}

fn lq_levels(values: &[Vec<f64>], nodes: &CylinderNodes, q: f64) -> f64 {
    nodes
        .integrate(|l, k| values[l].get(k).map_or(0.0, |v| v.abs().powf(q)))
        .powf(1.0 / q)
}

/// `L^q(Q)` norm of the gap between the backward difference in time and the
/// spatial expansion `div H_{p−1}(Du) + f`.
pub fn time_derivative_discrepancy(
    u: &ScalarField,
    params: &FluxParams,
    f: &ScalarField,
    cyl: &ParabolicCylinder,
    q: f64,
) -> Result<f64> {
    let nodes = cyl.nodes(u.grid())?;
    let kin = Kinematics::new(u, params.p, params.nu);
    let (a, b) = time_derivatives(u, &kin, f, params, &nodes);
    let gap: Vec<Vec<f64>> = a
        .iter()
        .zip(&b)
        .map(|(x, y)| x.iter().zip(y).map(|(s, t)| s - t).collect())
        .collect();
    Ok(lq_levels(&gap, &nodes, q))
}

/// `‖∂_t u‖_{L^κ(Q_{ρ/2})}`, `κ = min(ϑ, p′)`, against
/// `‖f‖_ϑ + ‖Du‖_p^{(p−2)/2}(ν‖Df‖_ϑ + ‖Df‖_ϑ^{(np+4)/(np+2−n)})^{1/2}
///  + R^{−1}(‖Du‖_p^{2p−2} + ‖Du‖_p^p + (ν^p+ν²)‖Du‖_p^{p−2})^{1/2}`
/// with norms on `Q_{R₀}` and `R = 2ρ`.
pub fn time_derivative(
    u: &ScalarField,
    params: &FluxParams,
    f: &ScalarField,
    family: &CylinderFamily,
    theta: f64,
) -> Result<EstimateReport> {
    let grid = u.grid();
    let (p, nu) = (params.p, params.nu);
    let n = grid.dim();
    check_theta(theta, p, n)?;
    let kappa = theta.min(conjugate(p));
    let outer = family.outer.nodes(grid)?;
    let kin = Kinematics::new(u, p, nu);
    let fvals: Vec<Vec<f64>> = (0..grid.levels()).map(|l| f.slice(l).to_vec()).collect();
    let f_norm = lq(&fvals, &outer, theta);
    let df = lq(&datum_gradient_norms(f), &outer, theta);
    let du = lq(&kin.du, &outer, p);
    let e = df_exponent(p, n as f64);
    let mut members = Vec::new();
    for &rho in &family.radii {
        let r = 2.0 * rho;
        family.require(&family.at(r))?;
        let half = family.at(rho / 2.0).nodes(grid)?;
        let (a, b) = time_derivatives(u, &kin, f, params, &half);
        let lhs = lq_levels(&a, &half, kappa);
        let chain = [
            ("rhs.chain_nu_df", du.powf(p - 2.0) * nu * df),
            ("rhs.chain_df", du.powf(p - 2.0) * df.powf(e)),
        ];
        let r2 = r * r;
        let lower = [
            ("rhs.r_du_2p2", du.powf(2.0 * p - 2.0) / r2),
            ("rhs.r_du_p", du.powf(p) / r2),
            ("rhs.r_nu_p", nu.powf(p) * du.powf(p - 2.0) / r2),
            ("rhs.r_nu_2", nu * nu * du.powf(p - 2.0) / r2),
        ];
        let rhs = f_norm
            + chain.iter().map(|t| t.1).sum::<f64>().sqrt()
            + lower.iter().map(|t| t.1).sum::<f64>().sqrt();
        let mut all = vec![("lhs.dt", lhs), ("rhs.f", f_norm)];
        all.extend_from_slice(&chain);
        all.extend_from_slice(&lower);
        let mut m = Member::new(rho, lhs, rhs).with_terms(&all);
        let gap: Vec<Vec<f64>> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| x.iter().zip(y).map(|(s, t)| s - t).collect())
            .collect();
        m.extras.insert("expansion_norm".into(), lq_levels(&b, &half, kappa));
        m.extras.insert("discrepancy".into(), lq_levels(&gap, &half, kappa));
        m.extras
            .insert("discrepancy_conjugate".into(), lq_levels(&gap, &half, conjugate(p)));
        if p > 2.0 {
            let (cl, cr) = chain_rule_sides(&kin, &half, p, nu, grid.space());
            m.extras.insert("chain_rule_lhs".into(), cl);
            m.extras.insert("chain_rule_rhs".into(), cr);
            if cr > 0.0 {
                m.extras.insert("chain_rule_constant".into(), cl / cr);
            }
        }
        members.push(m);
    }
    let mut report = EstimateReport::from_members(
        EstimateId::TimeDerivative,
        Some(family.outer.clone()),
        members,
        metadata(u, params),
    );
    report.metadata.insert("theta".into(), theta.to_string());
    report.metadata.insert("kappa".into(), kappa.to_string());
    Ok(report)
}

/// `‖DH_{p−1}(Du)‖_{L^{p′}(Q)}` against `‖Du‖_{L^p(Q)}^{(p−2)/2} ‖DH_{p/2}(Du)‖_{L²(Q)}`.
fn chain_rule_sides(kin: &Kinematics, q: &CylinderNodes, p: f64, nu: f64, space: &SpatialGrid) -> (f64, f64) {
    let mut dflux: Vec<Vec<f64>> = vec![Vec::new(); kin.grad.len()];
    for &l in &q.levels {
        let flux = h_field(&kin.grad[l], kin.dim, p - 1.0, nu);
        dflux[l] = component_gradient_sq(space, &flux).into_iter().map(f64::sqrt).collect();
    }
    let lhs = lq_levels(&dflux, q, conjugate(p));
    let du = lq(&kin.du, q, p);
    let dh = q.integrate(|l, k| kin.dh2[l][k]).sqrt();
    (lhs, du.powf((p - 2.0) / 2.0) * dh)
}

/// Exponent of the datum gap in the comparison estimate, `(np+2p)/(np+2p−n)`.
pub fn comparison_exponent(p: f64, n: usize) -> f64 {
    let n = n as f64;
    (n * p + 2.0 * p) / (n * p + 2.0 * p - n)
}

/// `(p + 4/n)′ ≥ (p + 2p/n)′`, which lets an `L^ϑ` datum control the
/// comparison term.
pub fn comparison_exponents_ordered(p: f64, n: usize) -> bool {
    theta_min(p, n) >= comparison_exponent(p, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub reports: Vec<EstimateReport>,
    /// Least-squares slope of `log lhs` against `log ε_k` over pairs with `lhs > 0`.
    pub slope: Option<f64>,
    pub exponents_ordered: bool,
}

/// Comparison quantities on `Q_{R₀}` for consecutive schedule entries.
pub fn comparison(results: &[SolveResult], outer: &ParabolicCylinder) -> Result<ComparisonSummary> {
    if results.len() < 2 {
        return Err(Error::InvalidParameter(
            "comparison needs at least two schedule entries".into(),
        ));
    }
    let grid = results[0].grid();
    let nodes = outer.nodes(grid)?;
    let p = results[0].params.p;
    let nu = results[0].params.nu;
    let n = grid.dim();
    let nn = n as f64;
    let s = comparison_exponent(p, n);
    let kins: Vec<Kinematics> = results.iter().map(|r| Kinematics::new(&r.u, p, nu)).collect();
    let mut reports = Vec::new();
    for (k, w) in results.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let (ka, kb) = (&kins[k], &kins[k + 1]);
        let nodes_n = ka.nodes;
        let (va, vb) = (a.u.values(), b.u.values());
        let sup = nodes.sup_slice(|l, j| (va[l * nodes_n + j] - vb[l * nodes_n + j]).powi(2));
        let mut ha = vec![0.0; ka.dim];
        let mut hb = vec![0.0; ka.dim];
        let energy = nodes.integrate(|l, j| {
            h_lambda_into(ka.at(l, j), p / 2.0, nu, &mut ha);
            h_lambda_into(kb.at(l, j), p / 2.0, nu, &mut hb);
            ha.iter().zip(&hb).map(|(x, y)| (x - y).powi(2)).sum()
        });
        let du_fine = nodes.integrate(|l, j| kb.du[l][j].powf(p));
        let ddu = nodes.integrate(|l, j| {
            let d: f64 = ka
                .at(l, j)
                .iter()
                .zip(kb.at(l, j))
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            d.sqrt().powf(p)
        });
        let (fa, fb) = (a.f_eps.values(), b.f_eps.values());
        let df = nodes
            .integrate(|l, j| (fa[l * nodes_n + j] - fb[l * nodes_n + j]).abs().powf(s))
            .powf(1.0 / s);
        let eps_term = a.epsilon * du_fine;
        let mixed = df * sup.powf(1.0 / (nn + 2.0)) * ddu.powf(nn / (nn * p + 2.0 * p));
        let mut meta = metadata(&a.u, &a.params);
        meta.insert("epsilon_fine".into(), b.epsilon.to_string());
        let member = Member::new(outer.rho, sup + energy, eps_term + mixed).with_terms(&[
            ("lhs.sup_l2", sup),
            ("lhs.h_energy", energy),
            ("rhs.epsilon", eps_term),
            ("rhs.mixed", mixed),
        ]);
        reports.push(EstimateReport::from_members(
            EstimateId::Comparison,
            Some(outer.clone()),
            vec![member],
            meta,
        ));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = reports
        .iter()
        .zip(results)
        .filter(|(r, _)| r.lhs > 0.0)
        .map(|(r, res)| (res.epsilon.ln(), r.lhs.ln()))
        .unzip();
    Ok(ComparisonSummary {
        reports,
        slope: fit_slope(&xs, &ys),
        exponents_ordered: comparison_exponents_ordered(p, n),
    })
}

/// The constant of the iteration lemma.
///
/// With `t_0 = r₀`, `t_{i+1} = t_i + (1−λ)λ^i(r₁−r₀)` and `θλ^{−α} < 1`,
/// iterating the hypothesis gives
/// `Ψ(r₀) ≤ (1−λ)^{−α} Σ_i (θλ^{−α})^i (A/(r₁−r₀)^α + B/(r₁−r₀)^β + C)`
/// (using `β ≤ α` and `λ < 1`). Choosing `λ^α = 2θ/(1+θ)` makes the ratio
/// `(1+θ)/2`, so `c(α, θ) = 2(1−λ)^{−α}/(1−θ)`.
pub fn iteration_constant(alpha: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("theta = {theta} must lie in (0, 1)")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must be > 0")));
    }
    let lambda = (2.0 * theta / (1.0 + theta)).powf(1.0 / alpha);
    Ok(2.0 * (1.0 - lambda).powf(-alpha) / (1.0 - theta))
}

/// Bracket `A/(r₁−r₀)^α + B/(r₁−r₀)^β + C` of the iteration lemma.
#[allow(clippy::too_many_arguments)]
fn iteration_bracket(a: f64, b: f64, c: f64, alpha: f64, beta: f64, r0: f64, r1: f64) -> Result<f64> {
    if !(r0 < r1) {
        return Err(Error::InvalidParameter(format!("need r0 < r1, got {r0} and {r1}")));
    }
    if !(beta > 0.0 && beta <= alpha) {
        return Err(Error::InvalidParameter(format!(
            "exponents must satisfy 0 < beta <= alpha, got alpha = {alpha}, beta = {beta}"
        )));
    }
    if [a, b, c].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("A, B, C must be nonnegative".into()));
    }
    let d = r1 - r0;
    Ok(a / d.powf(alpha) + b / d.powf(beta) + c)
}

#[allow(clippy::too_many_arguments)]
pub fn iteration_bound(
    a: f64,
    b: f64,
    c: f64,
    alpha: f64,
    beta: f64,
    theta: f64,
    r0: f64,
    r1: f64,
) -> Result<f64> {
    let k = iteration_constant(alpha, theta)?;
    Ok(k * iteration_bracket(a, b, c, alpha, beta, r0, r1)?)
}

/// Hypothesis data for the iteration lemma on `[r₀, r₁]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationHypothesis {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub r0: f64,
    pub r1: f64,
}

/// Checks the iteration lemma on a sampled `Ψ`: `C` is the smallest value
/// making the hypothesis hold on every pair of `samples + 1` equispaced
/// points, and the report compares `Ψ(r₀)` against the bracket. The report
/// passes when the fitted constant does not exceed `c(α, θ)`.
pub fn iteration_check(
    psi: impl Fn(f64) -> f64,
    hyp: &IterationHypothesis,
    samples: usize,
) -> Result<EstimateReport> {
    let k = iteration_constant(hyp.alpha, hyp.theta)?;
    if samples < 1 {
        return Err(Error::InvalidParameter("need at least one sample interval".into()));
    }
    let pts: Vec<f64> = (0..=samples)
        .map(|i| hyp.r0 + (hyp.r1 - hyp.r0) * i as f64 / samples as f64)
        .collect();
    let vals: Vec<f64> = pts.iter().map(|&s| psi(s)).collect();
    if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("psi must be finite and nonnegative".into()));
    }
    let mut c: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = pts[j] - pts[i];
            let excess = vals[i] - hyp.theta * vals[j] - hyp.a / d.powf(hyp.alpha) - hyp.b / d.powf(hyp.beta);
            c = c.max(excess);
        }
    }
    let bracket = iteration_bracket(hyp.a, hyp.b, c, hyp.alpha, hyp.beta, hyp.r0, hyp.r1)?;
    let mut m = Member::new(hyp.r1 - hyp.r0, vals[0], bracket).with_terms(&[("rhs.c", c)]);
    if m.constant.is_some_and(|v| v > k) {
        m.status = Status::Violation;
    }
    let mut report = EstimateReport::from_members(EstimateId::IterationLemma, None, vec![m], BTreeMap::new());
    report.extras.insert("lemma_constant".into(), k);
    report.extras.insert("bound".into(), k * bracket);
    Ok(report)
}

/// Difference-quotient lemma on one spatial slice: for each shift `h`,
/// `max_s ∫_{B_ρ} |τ_{s,h}F|^q` against `|h|^q ∫_{B_R} |DF|^q`.
pub fn diff_quotient_lemma(
    space: &SpatialGrid,
    f: &[f64],
    center: &[f64],
    rho: f64,
    big_r: f64,
    shifts: &[f64],
    q: f64,
) -> Result<EstimateReport> {
    if !(0.0 < rho && rho < big_r) {
        return Err(Error::InvalidParameter(format!("need 0 < rho < R, got {rho} and {big_r}")));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("q = {q} must lie in (1, inf)")));
    }
    let mut g = vec![0.0; space.node_count() * space.dim()];
    gradient_into(space, f, &mut g);
    let dnorm: Vec<f64> = g.chunks(space.dim()).map(norm).collect();
    let energy = ball_integral(space, &dnorm, center, big_r, q);
    let inner = ball_nodes(space, center, rho);
    let mut members = Vec::new();
    for &h in shifts {
        if !(h.abs() < (big_r - rho) / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "shift {h} must satisfy |h| < (R - rho)/2"
            )));
        }
        let mut lhs: f64 = 0.0;
        for s in 0..space.dim() {
            let t = tau_shift(space, f, s, h)?;
            if inner.iter().any(|&k| !t.inside[k]) {
                return Err(Error::Geometry(format!(
                    "ball of radius {rho} leaves the shrunk domain for shift {h}"
                )));
            }
            let v: f64 = inner.iter().map(|&k| t.values[k].abs().powf(q)).sum::<f64>() * space.cell_volume();
            lhs = lhs.max(v);
        }
        let rhs = h.abs().powf(q) * energy;
        members.push(Member::new(h, lhs, rhs));
    }
    let mut meta = BTreeMap::new();
    meta.insert("cells".into(), format!("{:?}", space.cells()));
    meta.insert("q".into(), q.to_string());
    meta.insert("rho".into(), rho.to_string());
    meta.insert("R".into(), big_r.to_string());
    Ok(EstimateReport::from_members(EstimateId::DiffQuotientLemma, None, members, meta))
}

/// Interpolation inequality on a cylinder, one member.
pub fn interpolation_lemma(v: &ScalarField, cyl: &ParabolicCylinder, p: f64, q: f64) -> Result<EstimateReport> {
    let sides = interpolation_check(v, cyl, p, q)?;
    let mut meta = BTreeMap::new();
    meta.insert("cells".into(), format!("{:?}", v.grid().space().cells()));
    meta.insert("p".into(), p.to_string());
    meta.insert("q".into(), q.to_string());
    let m = Member::new(cyl.rho, sides.lhs, sides.rhs);
    Ok(EstimateReport::from_members(
        EstimateId::InterpolationLemma,
        Some(cyl.clone()),
        vec![m],
        meta,
    ))
}

/// Degree in `λ` of each named term under `(u, ν, f) ↦ λ(u, ν, f)`.
pub fn term_degree(id: EstimateId, term: &str, p: f64, n: usize) -> Option<f64> {
    let nn = n as f64;
    let e = df_exponent(p, nn);
    Some(match (id, term) {
        (_, "lhs.sup_l2") => 2.0,
        (_, "lhs.dh_energy") | (_, "lhs.h_energy") => p,
        (EstimateId::Caccioppoli | EstimateId::HigherIntegrability, "rhs.datum") => 2.0,
        (EstimateId::Caccioppoli | EstimateId::HigherIntegrability, "rhs.energy") => p,
        (EstimateId::Caccioppoli | EstimateId::HigherIntegrability, "rhs.measure") => 0.0,
        (EstimateId::HigherIntegrability, "lhs.excess") => p + 4.0 / nn,
        (EstimateId::MainSobolev, "rhs.nu_df") => 2.0,
        (EstimateId::MainSobolev, "rhs.df_power") => e,
        (EstimateId::MainSobolev, "rhs.du_p" | "rhs.nu_p") => p,
        (EstimateId::MainSobolev, "rhs.du_2" | "rhs.nu_2") => 2.0,
        (EstimateId::TimeDerivative, "lhs.dt" | "rhs.f") => 1.0,
        (EstimateId::TimeDerivative, "rhs.chain_nu_df") => p,
        (EstimateId::TimeDerivative, "rhs.chain_df") => p - 2.0 + e,
        (EstimateId::TimeDerivative, "rhs.r_du_2p2" | "rhs.r_nu_p") => 2.0 * p - 2.0,
        (EstimateId::TimeDerivative, "rhs.r_du_p" | "rhs.r_nu_2") => p,
        (EstimateId::Comparison, "rhs.epsilon") => p,
        (EstimateId::Comparison, "rhs.mixed") => 2.0,
        _ => return None,
    })
}

/// Largest relative deviation of `scaled.term / base.term` from the
/// predicted `λ^degree`, over all members and terms with a nonzero base.
pub fn homogeneity_audit(base: &EstimateReport, scaled: &EstimateReport, lambda: f64, p: f64, n: usize) -> Result<f64> {
    if base.id != scaled.id || base.members.len() != scaled.members.len() {
        return Err(Error::InvalidParameter("reports are not comparable".into()));
    }
    let mut worst: f64 = 0.0;
    for (mb, ms) in base.members.iter().zip(&scaled.members) {
        for (name, &v) in &mb.terms {
            let deg = term_degree(base.id, name, p, n)
                .ok_or_else(|| Error::InvalidParameter(format!("no degree for term {name}")))?;
            let w = *ms
                .terms
                .get(name)
                .ok_or_else(|| Error::InvalidParameter(format!("missing term {name}")))?;
            let predicted = v * lambda.powf(deg);
            if v == 0.0 {
                if w != 0.0 {
                    worst = f64::INFINITY;
                }
                continue;
            }
            worst = worst.max((w - predicted).abs() / predicted.abs());
        }
    }
    Ok(worst)
}

/// Outcome of comparing a report's fitted constant across two resolutions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stability {
    pub id: EstimateId,
    pub coarse: Option<f64>,
    pub fine: Option<f64>,
    /// `coarse / fine`.
    pub ratio: Option<f64>,
    pub factor: f64,
    pub pass: bool,
}

/// Passes when both constants are finite with ratio in `[1/factor, factor]`,
/// when both are zero, or when both reports are vacuous.
pub fn stability(coarse: &EstimateReport, fine: &EstimateReport, factor: f64) -> Stability {
    let both_vacuous = coarse.status == Status::VacuousPass && fine.status == Status::VacuousPass;
    let (ratio, pass) = match (coarse.constant, fine.constant) {
        _ if !(coarse.pass && fine.pass) => (None, false),
        (Some(a), Some(b)) if a == 0.0 && b == 0.0 => (None, true),
        (Some(a), Some(b)) if b > 0.0 => {
            let r = a / b;
            (Some(r), r >= 1.0 / factor && r <= factor)
        }
        _ => (None, both_vacuous),
    };
    Stability {
        id: coarse.id,
        coarse: coarse.constant,
        fine: fine.constant,
        ratio,
        factor,
        pass,
    }
}

/// The local estimates that run on a single solution.
#[derive(Debug, Clone)]
pub struct LocalInputs<'a> {
    pub result: &'a SolveResult,
    /// The unmollified datum.
    pub f: &'a ScalarField,
    pub family: &'a CylinderFamily,
    pub theta: f64,
}

pub fn local_report(id: EstimateId, inputs: &LocalInputs<'_>) -> Result<EstimateReport> {
    let r = inputs.result;
    match id {
        EstimateId::Caccioppoli => caccioppoli(&r.u, &r.params, &r.f_eps, inputs.family),
        EstimateId::HigherIntegrability => higher_integrability(&r.u, &r.params, &r.f_eps, inputs.family),
        EstimateId::MainSobolev => main_sobolev(&r.u, &r.params, inputs.f, inputs.family, inputs.theta),
        EstimateId::TimeDerivative => time_derivative(&r.u, &r.params, inputs.f, inputs.family, inputs.theta),
        other => Err(Error::InvalidParameter(format!(
            "{} is not a single-solution estimate",
            other.name()
        ))),
    }
}

/// Largest
/// `|DH_{p/2}(Du)|²` over nodes whose whole gradient stencil has
/// `|Du| ≤ ν − slack`; zero on degenerate regions.
pub fn degenerate_region_dh(u: &ScalarField, params: &FluxParams, slack: f64) -> f64 {
    let kin = Kinematics::new(u, params.p, params.nu);
    let space = u.grid().space();
    let mut worst: f64 = 0.0;
    for l in 0..u.grid().levels() {
        for k in 0..kin.nodes {
            let st = crate::calculus::gradient_stencil(space, k);
            let quiet = st[..space.dim()]
                .iter()
                .flatten()
                .all(|&(j, _)| kin.du[l][j] <= params.nu - slack);
            if quiet {
                worst = worst.max(kin.dh2[l][k]);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpaceTimeGrid, SpatialGrid};
    use crate::scenario::{Datum, Scenario};
    use crate::solver::solve_cauchy_dirichlet;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(SpatialGrid::cube(2, 32, 0.0, 1.0).unwrap(), 0.25 / 8.0, 0.0, 8).unwrap()
    }

    fn field(f: impl Fn([f64; 2], f64) -> f64) -> ScalarField {
        ScalarField::from_fn(grid(), f).unwrap()
    }

    fn family() -> CylinderFamily {
        CylinderFamily::standard(ParabolicCylinder::new(vec![0.5, 0.5], 0.25, 0.4).unwrap())
    }

    fn params(p: f64, nu: f64) -> FluxParams {
        FluxParams::new(p, nu, 1e-3).unwrap()
    }

    fn smooth(x: [f64; 2], t: f64) -> f64 {
        (1.0 + t) * (2.0 * x[0] + x[1]).sin() + x[0] * x[0] * x[1]
    }

    #[test]
    fn family_spacing() {
        let expected = [0.1, 0.125, 0.15, 0.175, 0.2];
        for (r, e) in family().radii.iter().zip(expected) {
            assert!((r - e).abs() < 1e-15);
        }
        assert!(CylinderFamily::new(family().outer, 0).is_err());
    }

    #[test]
    fn zero_solution() {
        let zero = field(|_, _| 0.0);
        let r = caccioppoli(&zero, &params(2.0, 1.0), &zero, &family()).unwrap();
        let outer = family().outer.nodes(zero.grid()).unwrap().measure();
        for m in &r.members {
            assert_eq!(m.lhs, 0.0);
            assert_eq!(m.rhs, outer / (m.scale * m.scale));
            assert_eq!(m.constant, Some(0.0));
        }
        assert_eq!(r.constant, Some(0.0));
        assert!(r.pass);
    }

    #[test]
    fn affine_caccioppoli_has_no_dh_energy() {
        let u = field(|x, _| 3.0 * x[0] - x[1]);
        let zero = field(|_, _| 0.0);
        let r = caccioppoli(&u, &params(3.0, 1.0), &zero, &family()).unwrap();
        for m in &r.members {
            assert!(m.terms["lhs.dh_energy"] < 1e-20);
            assert!(m.terms["lhs.sup_l2"] > 0.0);
        }
        assert!(r.pass);
    }

    #[test]
    fn higher_integrability_on_affine_fields() {
        let zero = field(|_, _| 0.0);
        let (p, nu) = (3.0, 0.5);
        // |slope| = nu + 1, so the excess is exactly 1
        let u = field(|x, _| 0.9 * x[0] + 1.2 * x[1]);
        let fam = family();
        let r = higher_integrability(&u, &params(p, nu), &zero, &fam).unwrap();
        let outer = fam.outer.nodes(u.grid()).unwrap().measure();
        for m in &r.members {
            let inner = fam.at(m.scale / 2.0).nodes(u.grid()).unwrap().measure();
            assert!((m.lhs - inner).abs() <= 1e-12 * inner);
            let slope = 1.5f64;
            let bracket = (slope.powf(p) + 1.0) * outer / (m.scale * m.scale);
            let rhs = bracket.powf(2.0);
            assert!((m.rhs - rhs).abs() <= 1e-12 * rhs);
        }
        assert!(r.pass && r.constant.unwrap() > 0.0);
        // inside the degeneracy ball the left side vanishes
        let flat = field(|x, _| 0.3 * x[0] + 0.2 * x[1]);
        let r = higher_integrability(&flat, &params(p, nu), &zero, &fam).unwrap();
        assert!(r.members.iter().all(|m| m.lhs == 0.0));
        assert_eq!(r.constant, Some(0.0));
    }

    #[test]
    fn main_sobolev_basics() {
        let zero = field(|_, _| 0.0);
        let u = field(|x, _| 2.0 * x[0] + x[1]);
        let r = main_sobolev(&u, &params(2.0, 1.0), &zero, &family(), 2.0).unwrap();
        assert!(r.pass && r.constant.unwrap() < 1e-18);
        let u = field(smooth);
        let f = field(|x, t| x[0] * x[1] + t);
        let a = main_sobolev(&u, &params(3.0, 0.5), &f, &family(), 2.0).unwrap();
        let b = main_sobolev(&u, &params(3.0, 1.0), &f, &family(), 2.0).unwrap();
        for (ma, mb) in a.members.iter().zip(&b.members) {
            assert!(mb.rhs >= ma.rhs);
        }
    }

    #[test]
    fn theta_below_range_is_rejected() {
        let u = field(smooth);
        let lo = theta_min(2.0, 2);
        assert_eq!(lo, 8.0 / 6.0);
        let err = main_sobolev(&u, &params(2.0, 1.0), &u, &family(), lo - 0.01);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
        assert!(time_derivative(&u, &params(2.0, 1.0), &u, &family(), 1.0).is_err());
        assert!(main_sobolev(&u, &params(2.0, 1.0), &u, &family(), lo).is_ok());
    }

    #[test]
    fn steady_and_stagnant_time_derivatives() {
        let zero = field(|_, _| 0.0);
        let u = field(|x, _| 2.0 * x[0] + x[1]);
        let r = time_derivative(&u, &params(2.0, 1.0), &zero, &family(), 2.0).unwrap();
        assert!(r.members.iter().all(|m| m.lhs == 0.0));
        let u = field(|x, t| 0.2 * (3.0 * x[0]).sin() * x[1] + t * t);
        let r = time_derivative(&u, &params(3.0, 1.0), &zero, &family(), 2.0).unwrap();
        for m in &r.members {
            assert_eq!(m.extras["expansion_norm"], 0.0);
            assert!(m.lhs > 0.0);
        }
    }

    #[test]
    fn chain_rule_extras_only_above_two() {
        let u = field(smooth);
        let f = field(|x, _| x[0]);
        let r = time_derivative(&u, &params(3.0, 0.2), &f, &family(), 2.0).unwrap();
        assert!(r.members.iter().all(|m| m.extras.contains_key("chain_rule_constant")));
        let r = time_derivative(&u, &params(2.0, 0.2), &f, &family(), 2.0).unwrap();
        assert!(r.members.iter().all(|m| !m.extras.contains_key("chain_rule_lhs")));
    }

    #[test]
    fn outer_cylinder_must_fit() {
        let u = field(smooth);
        let bad = CylinderFamily::standard(ParabolicCylinder::new(vec![0.2, 0.5], 0.25, 0.4).unwrap());
        assert!(matches!(caccioppoli(&u, &params(2.0, 1.0), &u, &bad), Err(Error::Geometry(_))));
    }

    #[test]
    fn homogeneity_of_local_reports() {
        let (p, nu, lambda) = (3.0, 0.4, 2.7);
        let u = field(smooth);
        let f = field(|x, t| (x[0] - x[1]) * (1.0 + t));
        let us = u.map(|v| lambda * v);
        let fs = f.map(|v| lambda * v);
        let (pa, pb) = (params(p, nu), params(p, lambda * nu));
        for id in [
            EstimateId::Caccioppoli,
            EstimateId::HigherIntegrability,
            EstimateId::MainSobolev,
            EstimateId::TimeDerivative,
        ] {
            let base = match id {
                EstimateId::Caccioppoli => caccioppoli(&u, &pa, &f, &family()),
                EstimateId::HigherIntegrability => higher_integrability(&u, &pa, &f, &family()),
                EstimateId::MainSobolev => main_sobolev(&u, &pa, &f, &family(), 2.0),
                _ => time_derivative(&u, &pa, &f, &family(), 2.0),
            }
            .unwrap();
            let scaled = match id {
                EstimateId::Caccioppoli => caccioppoli(&us, &pb, &fs, &family()),
                EstimateId::HigherIntegrability => higher_integrability(&us, &pb, &fs, &family()),
                EstimateId::MainSobolev => main_sobolev(&us, &pb, &fs, &family(), 2.0),
                _ => time_derivative(&us, &pb, &fs, &family(), 2.0),
            }
            .unwrap();
            let worst = homogeneity_audit(&base, &scaled, lambda, p, 2).unwrap();
            assert!(worst <= 1e-8, "{id:?}: {worst}");
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let u = field(smooth);
        let f = field(|x, _| x[1]);
        let a = time_derivative(&u, &params(3.0, 0.5), &f, &family(), 2.0).unwrap();
        let b = time_derivative(&u, &params(3.0, 0.5), &f, &family(), 2.0).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn judging_members() {
        let m = Member::new(1.0, 2.0, 0.0);
        assert_eq!((m.constant, m.status), (None, Status::Violation));
        assert_eq!(Member::new(1.0, 0.0, 0.0).status, Status::VacuousPass);
        assert_eq!(Member::new(1.0, f64::NAN, 1.0).status, Status::Violation);
        let r = EstimateReport::from_members(EstimateId::Caccioppoli, None, vec![m], BTreeMap::new());
        assert!(!r.pass && r.constant_is_infinite());
        let r = EstimateReport::from_members(
            EstimateId::Caccioppoli,
            None,
            vec![Member::new(1.0, 1.0, 4.0), Member::new(2.0, 1.0, 2.0), Member::new(3.0, 0.0, 0.0)],
            BTreeMap::new(),
        );
        assert_eq!((r.constant, r.lhs, r.rhs), (Some(0.5), 1.0, 2.0));
    }

    #[test]
    fn stability_rules() {
        let rep = |c: f64| {
            EstimateReport::from_members(EstimateId::Caccioppoli, None, vec![Member::new(1.0, c, 1.0)], BTreeMap::new())
        };
        assert!(stability(&rep(1.0), &rep(1.9), 2.0).pass);
        assert!(!stability(&rep(1.0), &rep(2.1), 2.0).pass);
        assert!(stability(&rep(0.0), &rep(0.0), 2.0).pass);
        let vac = EstimateReport::from_members(EstimateId::Caccioppoli, None, vec![Member::new(1.0, 0.0, 0.0)], BTreeMap::new());
        assert!(stability(&vac, &vac, 2.0).pass);
        assert!(!stability(&vac, &rep(1.0), 2.0).pass);
    }

    #[test]
    fn exponent_ordering() {
        for p in [2.0, 3.0, 4.0, 5.0] {
            for n in [2, 3] {
                assert!(comparison_exponents_ordered(p, n), "p = {p}, n = {n}");
                assert!(theta_min(p, n) > 1.0);
            }
        }
    }

    #[test]
    fn duplicated_schedule_entry_gives_zero_gap() {
        let g = SpaceTimeGrid::new(SpatialGrid::cube(2, 12, 0.0, 1.0).unwrap(), 0.02, 0.0, 5).unwrap();
        let s = Scenario::new(
            g,
            FluxParams::new(2.0, 0.5, 0.0).unwrap(),
            Datum::expr("sin(pi*x1)").unwrap(),
            Datum::expr("x1*(1-x1)*x2").unwrap(),
            vec![0.05],
        )
        .unwrap();
        let r = solve_cauchy_dirichlet(&s, 0.05).unwrap();
        let outer = ParabolicCylinder::new(vec![0.5, 0.5], 0.1, 0.3).unwrap();
        let c = comparison(&[r.clone(), r.clone()], &outer).unwrap();
        assert_eq!(c.reports.len(), 1);
        assert_eq!(c.reports[0].lhs, 0.0);
        assert_eq!(c.slope, None);
        assert!(comparison(&[r], &outer).is_err());
    }

    #[test]
    fn iteration_examples() {
        let (alpha, theta) = (2.0, 0.5);
        let c = iteration_constant(alpha, theta).unwrap();
        assert_eq!(iteration_bound(0.0, 0.0, 5.0, alpha, 1.0, theta, 0.0, 1.0).unwrap(), 5.0 * c);
        assert!(iteration_constant(alpha, 1.0).is_err());
        assert!(iteration_constant(alpha, 0.0).is_err());
        assert!(iteration_bound(1.0, 1.0, 1.0, alpha, 3.0, theta, 0.0, 1.0).is_err());
        assert!(iteration_bound(1.0, 1.0, 1.0, alpha, 1.0, theta, 1.0, 1.0).is_err());
        // constant psi: the fitted C is (1 − θ)K
        let k = 3.0;
        let hyp = IterationHypothesis { a: 0.0, b: 0.0, alpha, beta: 1.0, theta, r0: 0.0, r1: 1.0 };
        let r = iteration_check(|_| k, &hyp, 16).unwrap();
        assert_eq!(r.members[0].terms["rhs.c"], (1.0 - theta) * k);
        assert!(r.pass && r.lhs <= r.extras["bound"]);
    }

    #[test]
    fn difference_quotients_of_an_affine_slice() {
        let space = SpatialGrid::cube(2, 32, 0.0, 1.0).unwrap();
        let f = space.sample(|x| 2.0 * x[0] - x[1]);
        let h = space.h();
        let r = diff_quotient_lemma(&space, &f, &[0.5, 0.5], 0.2, 0.4, &[h, 2.0 * h], 2.0).unwrap();
        // ∫|τF|² over B_ρ = (2h)²|B_ρ|, against h²·5·|B_R|
        let ratio = r.members[0].constant.unwrap();
        assert!((r.members[1].constant.unwrap() - ratio).abs() <= 1e-12);
        assert!(diff_quotient_lemma(&space, &f, &[0.5, 0.5], 0.2, 0.4, &[0.15], 2.0).is_err());
        assert!(diff_quotient_lemma(&space, &f, &[0.5, 0.5], 0.4, 0.2, &[h], 2.0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for id in EstimateId::ALL {
            assert_eq!(EstimateId::parse(id.name()).unwrap(), id);
        }
        assert!(EstimateId::parse("nope").is_err());
    }
}
