//! Seeded randomized sweeps over the structural inequalities and the
//! discrete lemmas.
//!
//! Every batch draws from its own ChaCha8 stream, keyed by the sweep, the
//! parameter combination and the batch index, so results do not depend on
//! how rayon schedules the work.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimates::{diff_quotient_lemma, interpolation_lemma, iteration_check, IterationHypothesis};
use crate::flux::{
    brasco_lipschitz_gap, brasco_monotonicity_gap, lind_gaps, norm, regularized_flux, regularized_flux_jacobian,
    FluxParams, GapPair,
};
use crate::grid::{ParabolicCylinder, ScalarField, SpaceTimeGrid, SpatialGrid};

/// Relative slack below which an inequality instance counts as violated.
pub const SLACK_TOLERANCE: f64 = 1e-9;
pub const JACOBIAN_TOLERANCE: f64 = 1e-6;
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Allowed relative drift of fitted lemma constants across resolutions.
pub const LEMMA_DRIFT: f64 = 0.3;

const BATCH: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropsConfig {
    /// Random pairs per `(p, ν, n)` combination.
    pub samples: u64,
    pub seed: u64,
    pub p: Vec<f64>,
    pub nu: Vec<f64>,
    pub dims: Vec<usize>,
}

impl Default for PropsConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 1,
            p: vec![2.0, 3.0, 4.0, 5.0],
            nu: vec![0.0, 0.5, 1.0],
            dims: vec![2, 3],
        }
    }
}

impl PropsConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.p.iter().find(|p| !(p.is_finite() && **p >= 2.0)) {
            return Err(Error::InvalidParameter(format!("p = {p} must be >= 2")));
        }
        if let Some(nu) = self.nu.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("nu = {nu} must be >= 0")));
        }
        if let Some(n) = self.dims.iter().find(|n| !(1..=3).contains(*n)) {
            return Err(Error::InvalidParameter(format!("dimension {n} must lie in 1..=3")));
        }
        Ok(())
    }
}

/// A sample realizing the smallest slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackStats {
    pub min_slack: f64,
    pub violations: u64,
    pub worst: Witness,
}

impl SlackStats {
    fn observe(slot: &mut Option<SlackStats>, slack: f64, xi: &[f64], eta: &[f64], pair: GapPair) {
        let bad = !(slack >= -SLACK_TOLERANCE);
        match slot {
            Some(s) => {
                s.violations += bad as u64;
                if slack < s.min_slack || slack.is_nan() {
                    s.min_slack = slack;
                    s.worst = Witness { xi: xi.to_vec(), eta: eta.to_vec(), lhs: pair.lhs, rhs: pair.rhs };
                }
            }
            None => {
                *slot = Some(SlackStats {
                    min_slack: slack,
                    violations: bad as u64,
                    worst: Witness { xi: xi.to_vec(), eta: eta.to_vec(), lhs: pair.lhs, rhs: pair.rhs },
                })
            }
        }
    }

    fn merge(a: Option<SlackStats>, b: Option<SlackStats>) -> Option<SlackStats> {
        match (a, b) {
            (Some(mut a), Some(b)) => {
                a.violations += b.violations;
                if b.min_slack < a.min_slack || b.min_slack.is_nan() {
                    a.min_slack = b.min_slack;
                    a.worst = b.worst;
                }
                Some(a)
            }
            (a, None) => a,
            (None, b) => b,
        }
    }
}

/// The four inequalities at one `(p, ν, n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalitySweep {
    pub p: f64,
    pub nu: f64,
    pub n: usize,
    pub samples: u64,
    /// Keys: `brasco_monotonicity`, `brasco_lipschitz`, `lind_monotonicity`,
    /// `lind_lipschitz`.
    pub inequalities: BTreeMap<String, SlackStats>,
}

impl InequalitySweep {
    pub fn violations(&self) -> u64 {
        self.inequalities.values().map(|s| s.violations).sum()
    }
}

fn rng_for(seed: u64, sweep: u64, combo: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((sweep << 56) ^ (combo << 32) ^ batch);
    rng
}

fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = norm(&v);
        if r > 1e-3 && r <= 1.0 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Radii concentrate near the degeneracy sphere, inside the ball and over
/// several decades outside it.
fn sample_radius(rng: &mut ChaCha8Rng, nu: f64) -> f64 {
    match rng.random_range(0..4u32) {
        0 if nu > 0.0 => nu * (1.0 + rng.random_range(-0.05..0.05)),
        1 if nu > 0.0 => nu * rng.random::<f64>(),
        _ => 10f64.powf(rng.random_range(-3.0..1.5)),
    }
}

fn sample_pair(rng: &mut ChaCha8Rng, n: usize, nu: f64) -> (Vec<f64>, Vec<f64>) {
    let r = sample_radius(rng, nu);
    let xi: Vec<f64> = unit_vector(rng, n).into_iter().map(|x| r * x).collect();
    let eta = match rng.random_range(0..8u32) {
        0 | 1 => {
            let d = 10f64.powf(rng.random_range(-6.0..-1.0)) * (1.0 + r);
            let e = unit_vector(rng, n);
            xi.iter().zip(e).map(|(x, e)| x + d * e).collect()
        }
        2 => {
            let s = rng.random_range(0.5..1.5);
            xi.iter().map(|x| s * x).collect()
        }
        _ => {
            let r2 = sample_radius(rng, nu);
            unit_vector(rng, n).into_iter().map(|x| r2 * x).collect()
        }
    };
    (xi, eta)
}

const INEQUALITIES: [&str; 4] = ["brasco_lipschitz", "brasco_monotonicity", "lind_lipschitz", "lind_monotonicity"];

fn inequality_batch(p: f64, nu: f64, n: usize, rng: &mut ChaCha8Rng, count: u64) -> Result<[Option<SlackStats>; 4]> {
    let mut stats: [Option<SlackStats>; 4] = Default::default();
    for _ in 0..count {
        let (xi, eta) = sample_pair(rng, n, nu);
        let bl = brasco_lipschitz_gap(&xi, &eta, p, nu)?;
        let bm = brasco_monotonicity_gap(&xi, &eta, p, nu)?;
        let lind = lind_gaps(&xi, &eta, p)?;
        SlackStats::observe(&mut stats[0], bl.slack_upper(), &xi, &eta, bl);
        SlackStats::observe(&mut stats[1], bm.slack_lower(), &xi, &eta, bm);
        SlackStats::observe(&mut stats[2], lind.lip.slack_upper(), &xi, &eta, lind.lip);
        SlackStats::observe(&mut stats[3], lind.mono.slack_upper(), &xi, &eta, lind.mono);
    }
    Ok(stats)
}

pub fn inequality_sweep(cfg: &PropsConfig) -> Result<Vec<InequalitySweep>> {
    cfg.validate()?;
    if cfg.samples == 0 {
        return Ok(Vec::new());
    }
    let mut combos = Vec::new();
    for &p in &cfg.p {
        for &nu in &cfg.nu {
            for &n in &cfg.dims {
                combos.push((p, nu, n));
            }
        }
    }
    let batches = cfg.samples.div_ceil(BATCH);
    let jobs: Vec<(usize, u64)> = (0..combos.len()).flat_map(|c| (0..batches).map(move |b| (c, b))).collect();
    let results: Vec<Result<[Option<SlackStats>; 4]>> = jobs
        .par_iter()
        .map(|&(c, b)| {
            let (p, nu, n) = combos[c];
            let count = BATCH.min(cfg.samples - b * BATCH);
            let mut rng = rng_for(cfg.seed, 1, c as u64, b);
            inequality_batch(p, nu, n, &mut rng, count)
        })
        .collect();
    let mut merged: Vec<[Option<SlackStats>; 4]> = vec![Default::default(); combos.len()];
    for ((c, _), r) in jobs.iter().zip(results) {
        let r = r?;
        for (slot, s) in merged[*c].iter_mut().zip(r) {
            *slot = SlackStats::merge(slot.take(), s);
        }
    }
    Ok(combos
        .into_iter()
        .zip(merged)
        .map(|((p, nu, n), stats)| InequalitySweep {
            p,
            nu,
            n,
            samples: cfg.samples,
            inequalities: INEQUALITIES
                .iter()
                .zip(stats)
                .map(|(name, s)| (name.to_string(), s.expect("samples > 0")))
                .collect(),
        })
        .collect())
}

/// Central-difference check of the analytic Jacobian at one `(ε, p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianSweep {
    pub epsilon: f64,
    pub p: f64,
    pub points: u64,
    /// Largest `max_ij |J − J_fd| / (1 + max_ij |J|)`.
    pub max_error: f64,
    pub violations: u64,
    pub worst_xi: Vec<f64>,
    pub worst_nu: f64,
}

/// Sample points avoid `|ξ| = ν` and the origin, where the flux has a kink.
const KINK_BAND: f64 = 1e-4;

fn jacobian_error(xi: &[f64], params: &FluxParams) -> Result<f64> {
    let n = xi.len();
    let jac = regularized_flux_jacobian(xi, params)?;
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut plus = xi.to_vec();
    let mut minus = xi.to_vec();
    for j in 0..n {
        plus[j] = xi[j] + JACOBIAN_STEP;
        minus[j] = xi[j] - JACOBIAN_STEP;
        let fp = regularized_flux(&plus, params)?;
        let fm = regularized_flux(&minus, params)?;
        plus[j] = xi[j];
        minus[j] = xi[j];
        for i in 0..n {
            let fd = (fp[i] - fm[i]) / (2.0 * JACOBIAN_STEP);
            err = err.max((jac[i * n + j] - fd).abs());
            scale = scale.max(jac[i * n + j].abs());
        }
    }
    Ok(err / (1.0 + scale))
}

pub fn jacobian_sweep(cfg: &PropsConfig) -> Result<Vec<JacobianSweep>> {
    let points = cfg.samples.min(10_000);
    if points == 0 {
        return Ok(Vec::new());
    }
    let mut combos = Vec::new();
    for &epsilon in &[0.01, 0.1, 1.0] {
        for &p in &[2.0, 3.0, 4.0] {
            combos.push((epsilon, p));
        }
    }
    combos
        .par_iter()
        .enumerate()
        .map(|(c, &(epsilon, p))| {
            let mut rng = rng_for(cfg.seed, 2, c as u64, 0);
            let mut sweep = JacobianSweep {
                epsilon,
                p,
                points,
                max_error: 0.0,
                violations: 0,
                worst_xi: Vec::new(),
                worst_nu: 0.0,
            };
            for _ in 0..points {
                let n = rng.random_range(2..=3usize);
                let nu = [0.0, 0.5, 1.0][rng.random_range(0..3usize)];
                let xi = loop {
                    let r = rng.random_range(0.0..3.0);
                    if r > KINK_BAND && (r - nu).abs() > KINK_BAND {
                        break unit_vector(&mut rng, n).into_iter().map(|x| r * x).collect::<Vec<_>>();
                    }
                };
                let params = FluxParams::new(p, nu, epsilon)?;
                let e = jacobian_error(&xi, &params)?;
                if !(e <= JACOBIAN_TOLERANCE) {
                    sweep.violations += 1;
                }
                if e > sweep.max_error || sweep.worst_xi.is_empty() {
                    sweep.max_error = e;
                    sweep.worst_xi = xi;
                    sweep.worst_nu = nu;
                }
            }
            Ok(sweep)
        })
        .collect()
}

/// Smooth random field: a short sum of plane waves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waves {
    pub amplitude: Vec<f64>,
    pub frequency: Vec<[f64; 2]>,
    pub phase: Vec<f64>,
}

impl Waves {
    fn random(rng: &mut ChaCha8Rng, terms: usize) -> Self {
        Self {
            amplitude: (0..terms).map(|_| rng.random_range(0.2..1.0)).collect(),
            frequency: (0..terms)
                .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                .collect(),
            phase: (0..terms).map(|_| rng.random_range(0.0..2.0 * PI)).collect(),
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.amplitude
            .iter()
            .zip(&self.frequency)
            .zip(&self.phase)
            .map(|((a, w), ph)| a * (2.0 * PI * (w[0] * x[0] + w[1] * x[1]) + ph).sin())
            .sum()
    }
}

/// Fitted constants of the difference-quotient lemma for one field, at
/// shifts `4h, 2h, h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffQuotientSample {
    pub shifts: Vec<f64>,
    pub constants: Vec<Option<f64>>,
    /// Ratios of constants at consecutive halvings.
    pub ratios: Vec<f64>,
    pub pass: bool,
}

pub const DQ_CELLS: usize = 64;

pub fn diff_quotient_sample(waves: &Waves) -> Result<DiffQuotientSample> {
    let space = SpatialGrid::cube(2, DQ_CELLS, 0.0, 1.0)?;
    let f = space.sample(|x| waves.eval(x));
    let h = space.h();
    let shifts = vec![4.0 * h, 2.0 * h, h];
    let report = diff_quotient_lemma(&space, &f, &[0.5, 0.5], 0.25, 0.45, &shifts, 2.0)?;
    let constants: Vec<Option<f64>> = report.members.iter().map(|m| m.constant).collect();
    let ratios: Vec<f64> = constants
        .windows(2)
        .filter_map(|w| Some(w[0]? / w[1]?))
        .collect();
    let pass = report.pass
        && ratios.len() == shifts.len() - 1
        && ratios.iter().all(|r| (r - 1.0).abs() <= LEMMA_DRIFT);
    Ok(DiffQuotientSample { shifts, constants, ratios, pass })
}

/// Bump `(r² − |x − x₀|²)₊²` modulated in space and time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub waves: Waves,
    pub omega: f64,
    pub p: f64,
}

impl Bump {
    fn random(rng: &mut ChaCha8Rng, p: f64) -> Self {
        Self {
            center: [rng.random_range(0.45..0.55), rng.random_range(0.45..0.55)],
            radius: rng.random_range(0.25..0.35),
            waves: Waves::random(rng, 2),
            omega: rng.random_range(0.0..20.0),
            p,
        }
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        let d2 = (x[0] - self.center[0]).powi(2) + (x[1] - self.center[1]).powi(2);
        let b = (self.radius * self.radius - d2).max(0.0);
        b * b * (1.0 + 0.4 * self.waves.eval(x).tanh() * (self.omega * t).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpolationSample {
    pub p: f64,
    pub q: f64,
    pub coarse: Option<f64>,
    pub fine: Option<f64>,
    pub ratio: Option<f64>,
    pub pass: bool,
}

const INTERP_T: f64 = 0.15;

pub fn interpolation_sample(bump: &Bump, cells: usize, steps: usize) -> Result<InterpolationSample> {
    let fit = |cells: usize, steps: usize| -> Result<Option<f64>> {
        let space = SpatialGrid::cube(2, cells, 0.0, 1.0)?;
        let grid = SpaceTimeGrid::new(space, INTERP_T / steps as f64, 0.0, steps)?;
        let v = ScalarField::from_fn(grid, |x, t| bump.eval(x, t))?;
        let cyl = ParabolicCylinder::new(bump.center.to_vec(), INTERP_T, bump.radius)?;
        Ok(interpolation_lemma(&v, &cyl, bump.p, 2.0)?.constant)
    };
    let coarse = fit(cells, steps)?;
    let fine = fit(2 * cells, 2 * steps)?;
    let ratio = coarse.zip(fine).map(|(a, b)| a / b);
    let pass = ratio.is_some_and(|r| (r - 1.0).abs() <= LEMMA_DRIFT);
    Ok(InterpolationSample { p: bump.p, q: 2.0, coarse, fine, ratio, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationSample {
    pub hypothesis: IterationHypothesis,
    pub psi_r0: f64,
    pub bound: f64,
    pub pass: bool,
}

/// A bounded positive `Ψ` on `[r₀, r₁]` drawn from a small family.
fn random_psi(rng: &mut ChaCha8Rng, r0: f64, r1: f64) -> impl Fn(f64) -> f64 {
    let k = 10f64.powf(rng.random_range(-2.0..2.0));
    let kind = rng.random_range(0..3u32);
    let a = rng.random_range(0.0..3.0);
    let w = rng.random_range(1.0..12.0);
    let ph = rng.random_range(0.0..2.0 * PI);
    move |s: f64| {
        let x = (s - r0) / (r1 - r0);
        k * match kind {
            0 => (-a * x).exp(),
            1 => 1.0 + 0.5 * (w * x + ph).sin(),
            _ => 1.0 / (1.0 + a * x * x),
        }
    }
}

pub fn iteration_sweep(cfg: &PropsConfig) -> Result<Vec<IterationSample>> {
    let count = cfg.samples.min(200);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, 5, 0, i);
            let alpha = rng.random_range(0.5..3.0);
            let r0 = rng.random_range(0.0..1.0);
            let hyp = IterationHypothesis {
                a: rng.random_range(0.0..1.0),
                b: rng.random_range(0.0..1.0),
                alpha,
                beta: rng.random_range(0.1..=alpha),
                theta: rng.random_range(0.05..0.95),
                r0,
                r1: r0 + rng.random_range(0.1..2.0),
            };
            let psi = random_psi(&mut rng, hyp.r0, hyp.r1);
            let report = iteration_check(&psi, &hyp, 64)?;
            Ok(IterationSample {
                hypothesis: hyp,
                psi_r0: report.lhs,
                bound: report.extras["bound"],
                pass: report.pass,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropsReport {
    pub config: PropsConfig,
    pub slack_tolerance: f64,
    pub jacobian_tolerance: f64,
    pub lemma_drift: f64,
    pub inequalities: Vec<InequalitySweep>,
    /// Smallest slack per inequality over all combinations.
    pub min_slack: BTreeMap<String, f64>,
    pub jacobian: Vec<JacobianSweep>,
    pub diff_quotient: Vec<DiffQuotientSample>,
    pub interpolation: Vec<InterpolationSample>,
    pub iteration: Vec<IterationSample>,
    pub violations: u64,
    pub pass: bool,
}

pub fn run(cfg: &PropsConfig) -> Result<PropsReport> {
    cfg.validate()?;
    let inequalities = inequality_sweep(cfg)?;
    let jacobian = jacobian_sweep(cfg)?;
    let fields = cfg.samples.min(20);
    let diff_quotient: Vec<DiffQuotientSample> = (0..fields)
        .into_par_iter()
        .map(|i| diff_quotient_sample(&Waves::random(&mut rng_for(cfg.seed, 3, 0, i), 4)))
        .collect::<Result<_>>()?;
    let interpolation: Vec<InterpolationSample> = (0..fields)
        .into_par_iter()
        .map(|i| {
            let p = if i % 2 == 0 { 2.0 } else { 3.0 };
            interpolation_sample(&Bump::random(&mut rng_for(cfg.seed, 4, 0, i), p), 32, 15)
        })
        .collect::<Result<_>>()?;
    let iteration = iteration_sweep(cfg)?;

    let mut min_slack = BTreeMap::new();
    for sweep in &inequalities {
        for (name, s) in &sweep.inequalities {
            let e = min_slack.entry(name.clone()).or_insert(f64::INFINITY);
            *e = e.min(s.min_slack);
        }
    }
    let violations = inequalities.iter().map(InequalitySweep::violations).sum::<u64>()
        + jacobian.iter().map(|j| j.violations).sum::<u64>()
        + diff_quotient.iter().filter(|d| !d.pass).count() as u64
        + interpolation.iter().filter(|d| !d.pass).count() as u64
        + iteration.iter().filter(|d| !d.pass).count() as u64;
    Ok(PropsReport {
        config: cfg.clone(),
        slack_tolerance: SLACK_TOLERANCE,
        jacobian_tolerance: JACOBIAN_TOLERANCE,
        lemma_drift: LEMMA_DRIFT,
        inequalities,
        min_slack,
        jacobian,
        diff_quotient,
        interpolation,
        iteration,
        violations,
        pass: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(samples: u64, seed: u64) -> PropsConfig {
        PropsConfig { samples, seed, ..PropsConfig::default() }
    }

    #[test]
    fn zero_samples_give_an_empty_passing_report() {
        let r = run(&small(0, 3)).unwrap();
        assert!(r.inequalities.is_empty() && r.jacobian.is_empty());
        assert!(r.diff_quotient.is_empty() && r.interpolation.is_empty() && r.iteration.is_empty());
        assert!(r.pass);
    }

    #[test]
    fn sweeps_are_reproducible() {
        let cfg = PropsConfig { samples: 40_000, ..small(0, 11) };
        let a = inequality_sweep(&cfg).unwrap();
        let b = inequality_sweep(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.len(), 24);
        assert!(a.iter().all(|s| s.violations() == 0), "{a:#?}");
        let other = inequality_sweep(&PropsConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for s in jacobian_sweep(&small(500, 5)).unwrap() {
            assert_eq!(s.violations, 0, "{s:?}");
        }
    }

    #[test]
    fn lemma_samples_are_stable() {
        let mut rng = rng_for(9, 3, 0, 0);
        let d = diff_quotient_sample(&Waves::random(&mut rng, 4)).unwrap();
        assert!(d.pass, "{d:?}");
        let b = Bump::random(&mut rng, 2.0);
        let s = interpolation_sample(&b, 32, 15).unwrap();
        assert!(s.pass, "{s:?}");
        assert!(iteration_sweep(&small(30, 2)).unwrap().iter().all(|s| s.pass));
    }

    #[test]
    fn rejects_out_of_range_grids() {
        assert!(run(&PropsConfig { p: vec![1.5], ..small(1, 1) }).is_err());
        assert!(run(&PropsConfig { nu: vec![-1.0], ..small(1, 1) }).is_err());
        assert!(run(&PropsConfig { dims: vec![4], ..small(1, 1) }).is_err());
    }
}
