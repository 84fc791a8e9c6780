//! `llab verify`: estimate reports on a finished solve, judged by the
//! stability of their fitted constants under one grid coarsening.

use llab_core::estimates::{
    comparison, diff_quotient_lemma, interpolation_lemma, local_report, stability, theta_min, ComparisonSummary,
    CylinderFamily, EstimateId, EstimateReport, LocalInputs, Stability,
};
use llab_core::grid::{ParabolicCylinder, ScalarField};
use llab_core::io::load_binary;
use llab_core::props::{iteration_sweep, IterationSample, PropsConfig};
use llab_core::report::{diagnostics, report_table, stability_table, svg_slice};
use llab_core::scenario::{Config, Scenario};
use llab_core::solver::{continuation_solve, SolveResult};
use llab_core::{Error, Result};
use serde::Serialize;

use crate::commands::{datum_path, load_config, solution_path, solve_into};
use crate::output::OutDir;
use crate::{Failure, VerifyArgs};

/// Allowed ratio of fitted constants between the two resolutions.
pub const STABILITY_FACTOR: f64 = 2.0;
/// The same for the two lemma checks.
pub const LEMMA_FACTOR: f64 = 1.3;
/// Sampled iteration-lemma hypotheses.
const ITERATION_SAMPLES: u64 = 20;
const LOCAL: [EstimateId; 4] = [
    EstimateId::Caccioppoli,
    EstimateId::HigherIntegrability,
    EstimateId::MainSobolev,
    EstimateId::TimeDerivative,
];

#[derive(Debug, Serialize)]
struct VerifyReport {
    outer: ParabolicCylinder,
    radii: Vec<f64>,
    thetas: Vec<f64>,
    selected: Vec<&'static str>,
    fine_cells: Vec<usize>,
    coarse_cells: Vec<usize>,
    reports: Vec<EstimateReport>,
    coarse_reports: Vec<EstimateReport>,
    stability: Vec<Stability>,
    comparison: Option<ComparisonSummary>,
    iteration: Vec<IterationSample>,
    pass: bool,
}

fn selection(names: &[String]) -> Result<Vec<EstimateId>> {
    if names.is_empty() {
        return Ok(EstimateId::ALL.to_vec());
    }
    let mut ids: Vec<EstimateId> = names.iter().map(|n| EstimateId::parse(n.trim())).collect::<Result<_>>()?;
    ids.sort();
    ids.dedup();
    Ok(ids)
}

fn load_results(out: &OutDir, scenario: &Scenario) -> Result<Vec<SolveResult>> {
    let mut results = Vec::new();
    for (k, &eps) in scenario.epsilon_schedule.iter().enumerate() {
        let load = |rel: String| -> Result<ScalarField> {
            let path = out.path(&rel);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "missing artifact {}; run `llab solve` first or pass --solve",
                    path.display()
                )));
            }
            let field = load_binary(&path)?;
            if field.grid() != &scenario.grid {
                return Err(Error::Config(format!("{} was written for a different grid", path.display())));
            }
            Ok(field)
        };
        let u = load(solution_path(k))?;
        let f = load(datum_path(k))?;
        results.push(SolveResult::from_fields(eps, &scenario.params, u, f)?);
    }
    Ok(results)
}

/// The same scenario with half the cells along every axis.
fn coarse_config(cfg: &Config) -> Result<Config> {
    if cfg.grid.cells % 2 != 0 || cfg.grid.cells < 8 {
        return Err(Error::Config(format!(
            "verify coarsens the grid by 2 and needs an even cell count >= 8, got {}",
            cfg.grid.cells
        )));
    }
    let mut c = cfg.clone();
    c.grid.cells /= 2;
    Ok(c)
}

fn nearest_level(scenario: &Scenario, t: f64) -> usize {
    let g = &scenario.grid;
    (((t - g.t0()) / g.tau()).round().max(0.0) as usize).min(g.steps())
}

/// Reports that live on one solution: the local estimates and the two
/// lemma checks.
struct Single {
    local: Vec<EstimateReport>,
    lemmas: Vec<EstimateReport>,
}

fn single(
    scenario: &Scenario,
    result: &SolveResult,
    family: &CylinderFamily,
    thetas: &[f64],
    shifts: &[f64],
    ids: &[EstimateId],
) -> Result<Single> {
    let f = scenario.f.field(&scenario.grid)?;
    let mut local = Vec::new();
    for &id in ids.iter().filter(|id| LOCAL.contains(id)) {
        let uses_theta = matches!(id, EstimateId::MainSobolev | EstimateId::TimeDerivative);
        for &theta in if uses_theta { thetas } else { &thetas[..1] } {
            let inputs = LocalInputs { result, f: &f, family, theta };
            local.push(local_report(id, &inputs)?);
        }
    }
    let outer = &family.outer;
    let space = scenario.grid.space();
    let mut lemmas = Vec::new();
    if ids.contains(&EstimateId::DiffQuotientLemma) {
        let level = nearest_level(scenario, outer.t0);
        lemmas.push(diff_quotient_lemma(
            space,
            result.u.slice(level),
            &outer.x0,
            outer.rho / 2.0,
            outer.rho,
            shifts,
            2.0,
        )?);
    }
    if ids.contains(&EstimateId::InterpolationLemma) {
        // cut off so the field vanishes on the lateral boundary of Q_R0
        let r2 = outer.rho * outer.rho;
        let mut v = result.u.clone();
        for level in 0..scenario.grid.levels() {
            for (k, x) in v.slice_mut(level).iter_mut().enumerate() {
                let c = space.coord(k);
                let d2: f64 = (0..space.dim()).map(|s| (c[s] - outer.x0[s]).powi(2)).sum();
                let eta = (1.0 - d2 / r2).max(0.0);
                *x *= eta * eta;
            }
        }
        lemmas.push(interpolation_lemma(&v, outer, result.params.p, 2.0)?);
    }
    Ok(Single { local, lemmas })
}

pub fn verify(args: &VerifyArgs) -> std::result::Result<(), Failure> {
    let run = &args.run;
    let (cfg, base) = load_config(run)?;
    let est = cfg
        .estimates
        .clone()
        .ok_or_else(|| Error::Config("configuration has no [estimates] block".into()))?;
    let ids = selection(&args.estimates)?;
    let scenario = cfg.scenario(&base)?;
    let grid = &scenario.grid;
    let c = &est.cylinder;
    let outer = ParabolicCylinder::new(c.x0.clone(), c.t0, c.r0)?;
    outer.check_inside(grid)?;
    let family = CylinderFamily::new(outer.clone(), args.family.unwrap_or(est.family))?;
    let n = grid.dim();
    let p = scenario.params.p;
    let thetas = est.theta.clone().unwrap_or_else(|| vec![theta_min(p, n)]);
    if thetas.is_empty() {
        return Err(Error::Config("estimates.theta must not be empty".into()).into());
    }

    let mut out = OutDir::create(&run.out)?;
    let results = if args.solve {
        solve_into(&cfg, &scenario, &mut out, run.plot)?.results
    } else {
        load_results(&out, &scenario)?
    };
    let fine_result = results.last().expect("non-empty schedule");

    let needs_coarse = ids
        .iter()
        .any(|id| LOCAL.contains(id) || matches!(id, EstimateId::DiffQuotientLemma | EstimateId::InterpolationLemma));
    // multiples of the coarse step, so both grids see the same shifts
    let hc = 2.0 * grid.h();
    let shifts: Vec<f64> = [2.0 * hc, hc].into_iter().filter(|h| *h < outer.rho / 4.0).collect();
    if shifts.is_empty() && ids.contains(&EstimateId::DiffQuotientLemma) {
        return Err(Error::Config("grid too coarse for difference quotients on this cylinder".into()).into());
    }
    eprintln!("estimates on {:?} cells", grid.space().cells());
    let fine = single(&scenario, fine_result, &family, &thetas, &shifts, &ids)?;
    let (coarse, coarse_cells) = if needs_coarse {
        let coarse_cfg = coarse_config(&cfg)?;
        let coarse_scenario = coarse_cfg.scenario(&base)?;
        eprintln!("coarse solve on {:?} cells", coarse_scenario.grid.space().cells());
        let cont = continuation_solve(&coarse_scenario)?;
        let s = single(&coarse_scenario, cont.limit_solution(), &family, &thetas, &shifts, &ids)?;
        (Some(s), coarse_scenario.grid.space().cells().to_vec())
    } else {
        (None, Vec::new())
    };

    let mut stab = Vec::new();
    if let Some(coarse) = &coarse {
        for (a, b) in coarse.local.iter().zip(&fine.local) {
            stab.push(stability(a, b, STABILITY_FACTOR));
        }
        for (a, b) in coarse.lemmas.iter().zip(&fine.lemmas) {
            stab.push(stability(a, b, LEMMA_FACTOR));
        }
    }
    let cmp = if ids.contains(&EstimateId::Comparison) && results.len() >= 2 {
        Some(comparison(&results, &outer)?)
    } else {
        None
    };
    let iteration = if ids.contains(&EstimateId::IterationLemma) {
        let pc = PropsConfig {
            samples: ITERATION_SAMPLES,
            seed: cfg.seed.unwrap_or(0),
            ..PropsConfig::default()
        };
        iteration_sweep(&pc)?
    } else {
        Vec::new()
    };

    let mut reports: Vec<EstimateReport> = fine.local.iter().chain(&fine.lemmas).cloned().collect();
    if let Some(cmp) = &cmp {
        reports.extend(cmp.reports.iter().cloned());
    }
    let coarse_reports: Vec<EstimateReport> = coarse
        .as_ref()
        .map(|c| c.local.iter().chain(&c.lemmas).cloned().collect())
        .unwrap_or_default();
    let pass = stab.iter().all(|s| s.pass)
        && reports.iter().all(|r| r.pass)
        && iteration.iter().all(|s| s.pass);

    let report = VerifyReport {
        outer: outer.clone(),
        radii: family.radii.clone(),
        thetas,
        selected: ids.iter().map(|id| id.name()).collect(),
        fine_cells: grid.space().cells().to_vec(),
        coarse_cells,
        reports,
        coarse_reports,
        stability: stab,
        comparison: cmp,
        iteration,
        pass,
    };
    out.json("reports.json", &report)?;
    let mut text = report_table(&report.reports);
    if !report.stability.is_empty() {
        text.push('\n');
        text.push_str(&stability_table(&report.stability));
    }
    if let Some(s) = report.comparison.as_ref().and_then(|c| c.slope) {
        text.push_str(&format!("\ncomparison slope {s:.4}\n"));
    }
    if !report.iteration.is_empty() {
        let ok = report.iteration.iter().filter(|s| s.pass).count();
        text.push_str(&format!("\niteration lemma {ok}/{} samples pass\n", report.iteration.len()));
    }
    out.bytes("reports.txt", text.as_bytes())?;

    let level = nearest_level(&scenario, outer.t0);
    let space = grid.space();
    let d = diagnostics(&fine_result.u, &fine_result.params, level);
    let t = grid.time(level);
    out.bytes("plots/grad_norm.svg", svg_slice(space, &d.grad_norm, &format!("|Du| at t = {t:.4}"))?.as_bytes())?;
    out.bytes("plots/excess.svg", svg_slice(space, &d.excess, &format!("(|Du| - nu)+ at t = {t:.4}"))?.as_bytes())?;
    out.bytes("plots/dh_norm.svg", svg_slice(space, &d.dh_norm, &format!("|DH(Du)| at t = {t:.4}"))?.as_bytes())?;
    out.finish("verify", Some(&run.config), cfg.seed, &cfg)?;

    print!("{text}");
    if pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .stability
            .iter()
            .filter(|s| !s.pass)
            .map(|s| s.id.name())
            .chain(report.reports.iter().filter(|r| !r.pass).map(|r| r.id.name()))
            .collect();
        Err(Failure::Check(format!("unstable or violated estimates: {}", failed.join(", "))))
    }
}
