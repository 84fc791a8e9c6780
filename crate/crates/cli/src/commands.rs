use std::path::{Path, PathBuf};

use llab_core::filtration::{self, FiltrationState};
use llab_core::grid::ScalarField;
use llab_core::io::load_binary;
use llab_core::props::{self, PropsConfig};
use llab_core::report::{diagnostics, svg_field, svg_slice};
use llab_core::scenario::{Config, Scenario};
use llab_core::solver::{continuation_solve, ComparisonPair, Continuation, LimitReport, StepStats, WeakResidual};
use llab_core::{Error, Result};
use serde::Serialize;

use crate::output::OutDir;
use crate::{Failure, FiltrationArgs, PlotArgs, PropsArgs, RunArgs, SolveArgs};

/// Config with the seed resolved, and the directory relative data files
/// are read from.
pub fn load_config(run: &RunArgs) -> Result<(Config, PathBuf)> {
    let mut cfg = Config::load(&run.config)?;
    if run.seed.is_some() {
        cfg.seed = run.seed;
    }
    cfg.seed.get_or_insert(0);
    let base = run.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

pub fn solution_path(k: usize) -> String {
    format!("solutions/u_{k}.llab")
}

pub fn datum_path(k: usize) -> String {
    format!("solutions/f_{k}.llab")
}

#[derive(Debug, Serialize)]
struct RunSummary {
    epsilon: f64,
    drift: f64,
    weak: WeakResidual,
    newton_iterations: usize,
    picard_iterations: usize,
    rejected_trials: usize,
    max_residual: f64,
    monotone: bool,
}

#[derive(Debug, Serialize)]
struct GridSummary {
    cells: Vec<usize>,
    h: f64,
    tau: f64,
    t0: f64,
    t_end: f64,
    steps: usize,
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    name: Option<&'a str>,
    grid: GridSummary,
    p: f64,
    nu: f64,
    mollify: bool,
    f: String,
    g: String,
    epsilon_schedule: &'a [f64],
    runs: Vec<RunSummary>,
    limit: &'a LimitReport,
}

#[derive(Debug, Serialize)]
struct ComparisonFile<'a> {
    pairs: &'a [ComparisonPair],
    slope: Option<f64>,
    du_lp: &'a [f64],
    du_spread: f64,
}

fn grid_summary(s: &Scenario) -> GridSummary {
    let g = &s.grid;
    GridSummary {
        cells: g.space().cells().to_vec(),
        h: g.h(),
        tau: g.tau(),
        t0: g.t0(),
        t_end: g.t_end(),
        steps: g.steps(),
    }
}

fn run_summary(steps: &[StepStats], epsilon: f64, drift: f64, weak: WeakResidual) -> RunSummary {
    RunSummary {
        epsilon,
        drift,
        weak,
        newton_iterations: steps.iter().map(|s| s.newton_iterations).sum(),
        picard_iterations: steps.iter().map(|s| s.picard_iterations).sum(),
        rejected_trials: steps.iter().map(|s| s.rejected_trials).sum(),
        max_residual: steps.iter().fold(0.0, |a, s| a.max(s.residual)),
        monotone: steps.iter().all(|s| s.monotone),
    }
}

pub fn plot_diagnostics(out: &mut OutDir, u: &ScalarField, params: &llab_core::flux::FluxParams, level: usize) -> Result<()> {
    let space = u.grid().space();
    let t = u.grid().time(level);
    let d = diagnostics(u, params, level);
    out.bytes("plots/u.svg", svg_field(u, level, &format!("u at t = {t:.4}"))?.as_bytes())?;
    out.bytes("plots/grad_norm.svg", svg_slice(space, &d.grad_norm, &format!("|Du| at t = {t:.4}"))?.as_bytes())?;
    out.bytes("plots/excess.svg", svg_slice(space, &d.excess, &format!("(|Du| - nu)+ at t = {t:.4}"))?.as_bytes())?;
    out.bytes("plots/dh_norm.svg", svg_slice(space, &d.dh_norm, &format!("|DH(Du)| at t = {t:.4}"))?.as_bytes())?;
    Ok(())
}

/// Runs the continuation and writes dumps, summary and comparison files.
pub fn solve_into(cfg: &Config, scenario: &Scenario, out: &mut OutDir, plot: bool) -> Result<Continuation> {
    eprintln!(
        "solving {:?} cells, {} steps, {} epsilon values",
        scenario.grid.space().cells(),
        scenario.grid.steps(),
        scenario.epsilon_schedule.len()
    );
    let cont = continuation_solve(scenario)?;
    for (k, r) in cont.results.iter().enumerate() {
        out.field(&solution_path(k), &r.u)?;
        out.field(&datum_path(k), &r.f_eps)?;
    }
    let limit = cont.limit_solution();
    out.csv("u.csv", &limit.u)?;
    let summary = SolveSummary {
        name: cfg.name.as_deref(),
        grid: grid_summary(scenario),
        p: scenario.params.p,
        nu: scenario.params.nu,
        mollify: scenario.mollify,
        f: scenario.f.describe(),
        g: scenario.g.describe(),
        epsilon_schedule: &scenario.epsilon_schedule,
        runs: cont
            .results
            .iter()
            .map(|r| run_summary(&r.steps, r.epsilon, r.drift(), r.weak))
            .collect(),
        limit: &cont.limit,
    };
    out.json("summary.json", &summary)?;
    out.json(
        "comparison.json",
        &ComparisonFile {
            pairs: &cont.pairs,
            slope: cont.limit.slope,
            du_lp: &cont.limit.du_lp,
            du_spread: cont.limit.du_spread,
        },
    )?;
    if plot {
        plot_diagnostics(out, &limit.u, &limit.params, scenario.grid.steps())?;
    }
    for r in &cont.results {
        eprintln!("  eps {:.3e}: drift {:.3e}, weak residual {:.3e}", r.epsilon, r.drift(), r.weak.relative);
    }
    Ok(cont)
}

pub fn solve(args: &SolveArgs) -> std::result::Result<(), Failure> {
    let run = &args.run;
    let (cfg, base) = load_config(run)?;
    let scenario = cfg.scenario(&base)?;
    let mut out = OutDir::create(&run.out)?;
    let cont = solve_into(&cfg, &scenario, &mut out, run.plot)?;
    out.finish("solve", Some(&run.config), cfg.seed, &cfg)?;
    println!(
        "solved {} epsilon values; smallest {:.3e}, drift {:.3e}",
        cont.results.len(),
        cont.limit.smallest_epsilon,
        cont.limit_solution().drift()
    );
    Ok(())
}

pub fn props(args: &PropsArgs) -> std::result::Result<(), Failure> {
    let defaults = PropsConfig::default();
    let pick = |v: &Vec<f64>, d: Vec<f64>| if v.is_empty() { d } else { v.clone() };
    let cfg = PropsConfig {
        samples: args.samples,
        seed: args.seed,
        p: pick(&args.p, defaults.p),
        nu: pick(&args.nu, defaults.nu),
        dims: if args.dims.is_empty() { defaults.dims } else { args.dims.clone() },
    };
    cfg.validate()?;
    eprintln!("property sweep: {} samples per combination, seed {}", cfg.samples, cfg.seed);
    let report = props::run(&cfg)?;
    let mut out = OutDir::create(&args.out)?;
    out.json("props.json", &report)?;
    out.finish("props", None, Some(cfg.seed), &cfg)?;
    for (name, slack) in &report.min_slack {
        println!("{name:<22} min slack {slack:.3e}");
    }
    println!("violations: {}", report.violations);
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} property violations", report.violations)))
    }
}

#[derive(Debug, Serialize)]
struct FiltrationFile<'a> {
    summary: &'a filtration::FiltrationSummary,
    limit: &'a LimitReport,
}

/// Tolerance for clipping tiny negative pressure squares.
const CLIP: f64 = 1e-8;

pub fn filtration(args: &FiltrationArgs) -> std::result::Result<(), Failure> {
    let run = &args.run;
    let (cfg, _) = load_config(run)?;
    let (scenario, phys, scaling) = filtration::scenario_from_config(&cfg)?;
    eprintln!(
        "filtration: G = {}, time scale {:.4e}, nu = {}",
        phys.g, scaling.time_scale, scaling.nu
    );
    let cont = continuation_solve(&scenario)?;
    let limit = cont.limit_solution();
    let state = FiltrationState::from_solution(&limit.u, &phys, &scaling, CLIP)?;
    let mut summary = filtration::summarize(&state, &phys, &scaling);
    summary.metadata = scenario.metadata.clone();

    let mut out = OutDir::create(&run.out)?;
    out.field("pressure.llab", &state.pressure)?;
    out.field("u.llab", &state.u)?;
    out.csv("pressure.csv", &state.pressure)?;
    out.json(
        "filtration.json",
        &FiltrationFile {
            summary: &summary,
            limit: &cont.limit,
        },
    )?;
    if run.plot {
        let last = scenario.grid.steps();
        let space = state.u.grid().space();
        out.bytes("plots/pressure.svg", svg_field(&state.pressure, last, "pressure")?.as_bytes())?;
        let mask: Vec<f64> = state.stagnant[last].iter().map(|&b| f64::from(u8::from(b))).collect();
        out.bytes("plots/stagnant.svg", svg_slice(space, &mask, "stagnant zone")?.as_bytes())?;
        let flux = filtration::mass_flux(&state, &phys, last).norms();
        out.bytes("plots/flux.svg", svg_slice(space, &flux, "|mass flux|")?.as_bytes())?;
    }
    out.finish("filtration", Some(&run.config), cfg.seed, &cfg)?;
    let trend = &summary.stagnant;
    println!(
        "stagnant area {:.4} -> {:.4}; nondecreasing: {} (observed, not asserted)",
        trend.area.first().copied().unwrap_or(0.0),
        trend.area.last().copied().unwrap_or(0.0),
        if trend.nondecreasing { "yes" } else { "no" }
    );
    println!(
        "pressure in [{:.4}, {:.4}], max deviation from P0 {:.3e}",
        summary.pressure_min, summary.pressure_max, summary.pressure_deviation
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct PlotConfig {
    input: String,
    level: usize,
    title: String,
}

pub fn plot(args: &PlotArgs) -> std::result::Result<(), Failure> {
    let field = load_binary(&args.input)?;
    let last = field.grid().steps();
    let level = args.level.unwrap_or(last);
    if level > last {
        return Err(Error::Config(format!("level {level} out of range 0..={last}")).into());
    }
    let stem = args
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("field")
        .to_string();
    let title = args
        .title
        .clone()
        .unwrap_or_else(|| format!("{stem} at t = {:.4}", field.grid().time(level)));
    let mut out = OutDir::create(&args.out)?;
    let name = format!("{stem}.svg");
    out.bytes(&name, svg_field(&field, level, &title)?.as_bytes())?;
    let echo = PlotConfig {
        input: args.input.display().to_string(),
        level,
        title,
    };
    out.finish("plot", None, None, &echo)?;
    println!("{}", out_display(&args.out, &name));
    Ok(())
}

fn out_display(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}
