//! Argument parsing and subcommand drivers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cavmold::fitting::{fit, residuals, AnticrossingData, FitOptions, FitResult, SimplexOptions};
use cavmold::lindblad::Trajectory;
use cavmold::spectra::DecayCurve;
use cavmold::Exec;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{fit_init, preset, HeatmapFormat, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{self, canonical_config, curve_label, OutputDir};
use crate::pipeline::{self, Calibration, DelayOutput, FilterOutput};
use crate::render::{render_csv, RenderOptions};
use crate::selftest::{self, SelftestOptions};

/// Process exit code of a fit that did not converge.
pub const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "cavmold", version, about = "Coupled-cavity QED simulator: emitter, target cavity and tunable FP cavity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupled-mode wavelengths, Q factors and decay time against FP detuning.
    StaticSweep(RunArgs),
    /// Master-equation run with PL map, filtered traces and burst metrics.
    Dynamic(RunArgs),
    /// Fit coupled-mode parameters to an anticrossing table.
    Fit(FitArgs),
    /// Plot a curve or map CSV.
    Render(RenderArgs),
    /// Run the embedded invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config JSON; overrides --scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub render: Option<OnOff>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Anticrossing CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Selects the multi-start lattice.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Curve or map CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub heatmap: HeatmapArg,
    #[arg(long)]
    pub log_scale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeatmapArg {
    Ppm,
    Svg,
    Both,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Flip the cavity-loss sign in the master equation (negative control).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

fn load(config: Option<&Path>, scenario: Option<&str>, fallback: &str) -> Result<RunConfig> {
    match (config, scenario) {
        (Some(p), _) => RunConfig::from_path(p),
        (None, Some(s)) => preset(s),
        (None, None) => preset(fallback),
    }
}

fn render_opts(cfg: &RunConfig) -> RenderOptions {
    RenderOptions { heatmap: cfg.render.heatmap, log_scale: cfg.render.log_scale }
}

/// Writes `csv` and, when enabled, its renderings next to it.
fn emit_csv(out: &mut OutputDir, name: &str, csv: &str, render: Option<&RenderOptions>) -> Result<()> {
    out.write(name, csv.as_bytes())?;
    if let Some(opts) = render {
        let stem = name.trim_end_matches(".csv");
        for r in render_csv(csv, name, opts)? {
            out.write(&format!("{stem}.{}", r.extension), &r.bytes)?;
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        // a second initialization (tests, embedding) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::StaticSweep(a) => {
            let mut cfg = load(a.config.as_deref(), a.scenario.as_deref(), "fig2-sweep")?;
            apply_render_flag(&mut cfg, a.render);
            static_sweep(&cfg, &a.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Dynamic(a) => {
            let mut cfg = load(a.config.as_deref(), a.scenario.as_deref(), "fig3-burst")?;
            apply_render_flag(&mut cfg, a.render);
            dynamic(&cfg, &a.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit(a) => {
            let mut cfg = load(a.config.as_deref(), a.scenario.as_deref(), "fig2-sweep")?;
            if let Some(s) = a.seed {
                cfg.fit.seed = s;
            }
            let result = fit_command(&cfg, &a.data, &a.out)?;
            println!(
                "fit {}: residual norm {:.6e}, {} evaluations",
                if result.converged { "converged" } else { "did NOT converge" },
                result.residual_norm,
                result.evaluations
            );
            Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(EXIT_NOT_CONVERGED) })
        }
        Command::Render(a) => {
            let heatmap = match a.heatmap {
                HeatmapArg::Ppm => HeatmapFormat::Ppm,
                HeatmapArg::Svg => HeatmapFormat::Svg,
                HeatmapArg::Both => HeatmapFormat::Both,
            };
            for p in render_file(&a.input, &a.out, &RenderOptions { heatmap, log_scale: a.log_scale })? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest(a) => {
            let results = selftest::run(&SelftestOptions { inject_fault: a.inject_fault });
            print!("{}", selftest::report(&results));
            Ok(if results.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn apply_render_flag(cfg: &mut RunConfig, flag: Option<OnOff>) {
    if let Some(f) = flag {
        cfg.render.enabled = f == OnOff::On;
    }
}

pub fn static_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let rows = pipeline::static_sweep(cfg, Exec::Parallel).map_err(|e| scenario_err(cfg, e))?;
    let table = pipeline::sweep_table(&rows)?;
    let mut buf = Vec::new();
    table.to_csv(&mut buf)?;
    let csv = String::from_utf8(buf).expect("CSV is UTF-8");
    let text = canonical_config(cfg);
    let mut out = OutputDir::create(out_dir)?;
    out.write("config.json", text.as_bytes())?;
    let ro = render_opts(cfg);
    emit_csv(&mut out, "sweep.csv", &csv, cfg.render.enabled.then_some(&ro))?;
    out.finish(&text, &cfg.scenario, start.elapsed())
}

#[derive(Debug, Serialize)]
struct Metrics<'a> {
    scenario: &'a str,
    calibration: Option<&'a Calibration>,
    /// Metrics of the single run; absent for a delay scan's reference run.
    filters: &'a [FilterOutput],
    delays: &'a [DelayOutput],
    max_trace_error: f64,
    min_eigenvalue: f64,
}

fn named(curves: impl IntoIterator<Item = (String, DecayCurve)>) -> Vec<(String, DecayCurve)> {
    curves.into_iter().collect()
}

fn borrowed(v: &[(String, DecayCurve)]) -> Vec<(String, &DecayCurve)> {
    v.iter().map(|(n, c)| (n.clone(), c)).collect()
}

fn trajectory_extremes(t: &Trajectory) -> (f64, f64) {
    let min_eig = t.min_eigenvalue.iter().copied().fold(f64::INFINITY, f64::min);
    (t.max_trace_error(), min_eig)
}

fn scenario_err(cfg: &RunConfig, e: CliError) -> CliError {
    match e {
        CliError::Core(source) => CliError::Scenario { scenario: cfg.scenario.clone(), source },
        other => other,
    }
}

pub fn dynamic(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let start = Instant::now();
    let res = pipeline::dynamic(cfg, Exec::Parallel).map_err(|e| scenario_err(cfg, e))?;
    let text = canonical_config(cfg);
    let mut out = OutputDir::create(out_dir)?;
    out.write("config.json", text.as_bytes())?;
    let ro = render_opts(cfg);
    let render = cfg.render.enabled.then_some(&ro);

    if cfg.spectra.write_map {
        emit_csv(&mut out, "map.csv", &output::map_csv(&res.run.map), render)?;
    }
    out.write("trajectory.csv", output::trajectory_csv(&res.run.trajectory)?.as_bytes())?;
    if !res.run.filters.is_empty() {
        let curves = named(res.run.filters.iter().map(|f| (curve_label(&f.curve, "arb."), f.curve.clone())));
        emit_csv(&mut out, "curves.csv", &output::curves_csv(&borrowed(&curves))?, render)?;
    }
    if !res.delays.is_empty() && !cfg.spectra.filters.is_empty() {
        let raw = named(res.delays.iter().flat_map(|d| {
            d.filters.iter().map(move |f| (format!("delay {} ps {}", d.delay_ps, curve_label(&f.curve, "arb.")), f.curve.clone()))
        }));
        emit_csv(&mut out, "delay_curves.csv", &output::curves_csv(&borrowed(&raw))?, render)?;
        let ratio = named(res.delays.iter().flat_map(|d| {
            d.filters.iter().map(move |f| {
                (format!("delay {} ps {}", d.delay_ps, curve_label(&f.analysed, "ratio to reference")), f.analysed.clone())
            })
        }));
        emit_csv(&mut out, "delay_ratio.csv", &output::curves_csv(&borrowed(&ratio))?, render)?;
    }

    let (max_trace_error, min_eigenvalue) = trajectory_extremes(&res.run.trajectory);
    let max_trace_error = res.delays.iter().map(|d| d.max_trace_error).fold(max_trace_error, f64::max);
    let single = if res.delays.is_empty() { &res.run.filters[..] } else { &[] };
    out.write_json(
        "metrics.json",
        &Metrics {
            scenario: &cfg.scenario,
            calibration: res.calibration.as_ref(),
            filters: single,
            delays: &res.delays,
            max_trace_error,
            min_eigenvalue,
        },
    )?;
    out.finish(&text, &cfg.scenario, start.elapsed())
}

#[derive(Debug, Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    result: &'a FitResult,
    power_calibration: Option<cavmold::fitting::PowerCalibration>,
}

pub fn fit_command(cfg: &RunConfig, data_path: &Path, out_dir: &Path) -> Result<FitResult> {
    let start = Instant::now();
    let data = AnticrossingData::from_path(data_path)?;
    let init = fit_init(cfg)?;
    let opts = FitOptions {
        n_starts: cfg.fit.n_starts,
        seed: cfg.fit.seed,
        uncertainty: cfg.fit.uncertainty,
        exec: Exec::Parallel,
        simplex: SimplexOptions { max_evals: cfg.fit.max_evaluations, ..Default::default() },
        ..Default::default()
    };
    let result = fit(&data, &init, &cfg.fit.bounds, &opts)?;
    let power_calibration = cavmold::fitting::calibrate_power(&data, &result).ok();

    let text = canonical_config(cfg);
    let mut out = OutputDir::create(out_dir)?;
    out.write("config.json", text.as_bytes())?;
    out.write_json("fit.json", &FitReport { result: &result, power_calibration })?;
    out.write("residuals.csv", residual_csv(&data, &result, cfg).as_bytes())?;
    out.finish(&text, &cfg.scenario, start.elapsed())?;
    Ok(result)
}

fn residual_csv(data: &AnticrossingData, result: &FitResult, cfg: &RunConfig) -> String {
    let r = residuals(&result.params, data, &cfg.fit.bounds, &cfg.fit.uncertainty);
    let mut names = vec!["lambda1", "lambda2"];
    if data.has_q() {
        names.extend(["q1", "q2"]);
    }
    if data.has_tau() {
        names.push("tau");
    }
    let mut s = format!("control [{}],observable [-],weighted residual [-]\n", data.control.unit());
    for (i, chunk) in r.chunks(names.len()).enumerate() {
        for (name, v) in names.iter().zip(chunk) {
            s.push_str(&format!("{},{name},{}\n", output::num(data.rows[i].control), output::num(*v)));
        }
    }
    s
}

pub fn render_file(input: &Path, out_dir: &Path, opts: &RenderOptions) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let rendered = render_csv(&text, &input.display().to_string(), opts)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    rendered
        .iter()
        .map(|r| {
            let p = out_dir.join(format!("{stem}.{}", r.extension));
            std::fs::write(&p, &r.bytes).map_err(|e| CliError::io(&p, e))?;
            Ok(p)
        })
        .collect()
}
