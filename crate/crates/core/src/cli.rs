//! Command-line front end: `simulate`, `compare`, `verify`, `design` and
//! `reproduce`.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::canonical::{build_transform, Matrix};
use crate::config::{Experiment, ExperimentConfig, Overrides, SignModeConfig, ToleranceProfile};
use crate::controllers::{Controller, InnerLaw};
use crate::error::{Error, Result};
use crate::presets;
use crate::runner::{self, Comparison, RunSummary};
use crate::svg::{self, Figure, Panel, Series};
use crate::timebase::TimeBaseGain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    SimulationFailure = 1,
    VerificationFailure = 2,
    ConfigError = 3,
}

#[derive(Debug, Parser)]
#[command(name = "tbgctl", version, about = "Prescribed-deadline controllers for perturbed integrator chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Maximum concurrent simulations (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub tolerance_profile: Option<ProfileArg>,
    /// Overrides the sign mode of every discontinuous term.
    #[arg(long, global = true, value_enum)]
    pub sign_mode: Option<SignModeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Strict,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignModeArg {
    BoundaryLayer,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Example {
    Ex1,
    Ex2,
    Ex3,
    Fig1,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate every initial condition of a config and write one CSV per run.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run two configs on the first one's initial conditions, side by side.
    Compare {
        /// Pass exactly twice.
        #[arg(long, required = true, num_args = 1)]
        config: Vec<PathBuf>,
    },
    /// Run the full check suite and write the report.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the canonical-form construction and gain figures of a design.
    Design {
        #[arg(long, conflicts_with_all = ["preset", "n"])]
        config: Option<PathBuf>,
        /// Built-in config name.
        #[arg(long, conflicts_with = "n")]
        preset: Option<String>,
        /// Chain order.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Deadline; prints gain figures together with `--t-f`.
        #[arg(long)]
        t_c: Option<f64>,
        /// Stretched-time settling bound; omit for `eta = 1`.
        #[arg(long)]
        t_f: Option<f64>,
    },
    /// Regenerate the data of a worked example or of the time-scaling figure.
    Reproduce {
        #[arg(value_enum)]
        example: Example,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::ConfigError as i32 } else { 0 };
        }
    };
    execute(&cli) as i32
}

pub fn execute(cli: &Cli) -> ExitStatus {
    let result = match &cli.command {
        Command::Simulate { config } => cmd_simulate(cli, config),
        Command::Compare { config } => cmd_compare(cli, config),
        Command::Verify { config } => cmd_verify(cli, config),
        Command::Design {
            config,
            preset,
            n,
            alpha,
            t_c,
            t_f,
        } => cmd_design(cli, config.as_deref(), preset.as_deref(), *n, *alpha, *t_c, *t_f),
        Command::Reproduce { example } => cmd_reproduce(cli, *example),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Mismatch(_) => ExitStatus::ConfigError,
            _ => ExitStatus::SimulationFailure,
        }
    })
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            tolerance: self.tolerance_profile.map(|p| match p {
                ProfileArg::Strict => ToleranceProfile::Strict,
                ProfileArg::Fast => ToleranceProfile::Fast,
            }),
            sign_mode: self.sign_mode.map(|m| match m {
                SignModeArg::BoundaryLayer => SignModeConfig::BoundaryLayer,
                SignModeArg::Strict => SignModeConfig::Strict,
            }),
        }
    }

    fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    fn load(&self, path: &Path) -> Result<Experiment> {
        ExperimentConfig::load(path)?.build(self.overrides())
    }

    fn load_preset(&self, name: &str) -> Result<Experiment> {
        presets::preset(name)?.build(self.overrides())
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<_> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

fn fmt_duration(d: Duration) -> String {
    format!("{:.3} s", d.as_secs_f64())
}

/// Outcome of simulating one experiment.
struct Batch {
    summaries: Vec<RunSummary>,
    failed: usize,
}

/// Simulates every initial condition, writing CSVs (and the SVG if
/// configured) from the collecting thread.
fn simulate_batch(exp: &Experiment, out: &Path, jobs: usize) -> Result<Batch> {
    let prefix = exp.outputs.csv.clone().unwrap_or_else(|| exp.name.clone());
    let m = exp.initial_conditions.len();
    let mut summaries: Vec<Option<RunSummary>> = vec![None; m];
    let mut lines = vec![String::new(); m];
    let mut series = vec![None; m];
    let mut io_error = None;
    exp.simulate_all(jobs, |o| {
        let i = o.index;
        summaries[i] = Some(RunSummary::from_result(&o.result));
        lines[i] = match &o.result {
            Ok(t) => {
                let path = out.join(format!("{prefix}_run{i}.csv"));
                if let Err(e) = create(&path).and_then(|mut w| {
                    t.write_csv(&mut w)?;
                    w.flush()?;
                    Ok(())
                }) {
                    io_error.get_or_insert(e);
                }
                if exp.outputs.svg.is_some() {
                    series[i] = Some(svg::trajectory_series(&format!("run{i}"), t));
                }
                let settle = t
                    .settled_at
                    .map_or_else(|| "not settled".to_string(), |s| format!("settled at {:.6}", s - t.t0));
                format!(
                    "run {i}: x0 = {}  {settle} (bound {})  steps {}  peak |u| {:.4e}  max kappa {:.6}  {}{}  -> {}",
                    fmt_vec(&o.x0),
                    exp.deadline,
                    t.accepted_steps,
                    t.peak_abs_control(),
                    t.max_kappa_observed,
                    fmt_duration(o.elapsed),
                    if t.guard_activated { "  [guard activated]" } else { "" },
                    path.display()
                )
            }
            Err(e) => format!("run {i}: x0 = {}  FAILED: {e}", fmt_vec(&o.x0)),
        };
    });
    if let Some(e) = io_error {
        return Err(e);
    }
    println!("{}: {} run(s)", exp.name, m);
    for l in &lines {
        println!("  {l}");
    }
    if let Some(name) = &exp.outputs.svg {
        let runs: Vec<_> = series.into_iter().flatten().collect();
        let fig = svg::trajectory_figure(&exp.name, runs, exp.outputs.svg_log_scale);
        let path = out.join(name);
        fs::write(&path, fig.render())?;
        println!("  plot -> {}", path.display());
    }
    let summaries: Vec<RunSummary> = summaries.into_iter().map(|s| s.expect("every run reports")).collect();
    let failed = summaries.iter().filter(|s| s.failure.is_some()).count();
    Ok(Batch { summaries, failed })
}

fn cmd_simulate(cli: &Cli, config: &Path) -> Result<ExitStatus> {
    let exp = cli.load(config)?;
    let batch = simulate_batch(&exp, cli.out_dir()?, cli.jobs())?;
    Ok(if batch.failed > 0 {
        ExitStatus::SimulationFailure
    } else {
        ExitStatus::Success
    })
}

fn write_comparison(c: &Comparison, out: &Path) -> Result<PathBuf> {
    let path = out.join(format!("compare_{}_vs_{}.csv", c.names[0], c.names[1]));
    let mut w = create(&path)?;
    c.write_csv(&mut w)?;
    w.flush()?;
    Ok(path)
}

fn cmd_compare(cli: &Cli, configs: &[PathBuf]) -> Result<ExitStatus> {
    let [a, b] = configs else {
        return Err(Error::Config(format!(
            "compare needs exactly two --config arguments, got {}",
            configs.len()
        )));
    };
    let (a, b) = (cli.load(a)?, cli.load(b)?);
    let c = runner::compare(&a, &b, cli.jobs())?;
    print!("{}", c.render_text());
    let path = write_comparison(&c, cli.out_dir()?)?;
    println!("comparison -> {}", path.display());
    let failed = c.rows.iter().flatten().any(|s| s.failure.is_some());
    Ok(if failed {
        ExitStatus::SimulationFailure
    } else {
        ExitStatus::Success
    })
}

fn verify_experiment(exp: &Experiment, out: &Path, jobs: usize) -> Result<ExitStatus> {
    let (report, failures) = exp.verify_all(jobs);
    println!("{}: verification", exp.name);
    print!("{}", report.render_text());
    for (i, e) in &failures {
        println!("run {i}: simulation failed: {e}");
    }
    let prefix = exp.outputs.report.clone().unwrap_or_else(|| format!("{}_report", exp.name));
    let mut text = report.render_text();
    for (i, e) in &failures {
        let _ = writeln!(text, "run {i}: simulation failed: {e}");
    }
    fs::write(out.join(format!("{prefix}.txt")), text)?;
    let mut w = create(&out.join(format!("{prefix}.csv")))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    println!("report -> {}", out.join(format!("{prefix}.{{txt,csv}}")).display());
    Ok(if !failures.is_empty() {
        ExitStatus::SimulationFailure
    } else if !report.all_passed() {
        ExitStatus::VerificationFailure
    } else {
        ExitStatus::Success
    })
}

fn cmd_verify(cli: &Cli, config: &Path) -> Result<ExitStatus> {
    let exp = cli.load(config)?;
    verify_experiment(&exp, cli.out_dir()?, cli.jobs())
}

fn fmt_matrix(m: &Matrix) -> String {
    let mut s = String::new();
    for row in m.to_rows() {
        let cells: Vec<_> = row.iter().map(|v| format!("{:>10.4}", v + 0.0)).collect();
        let _ = writeln!(s, "  [{}]", cells.join(" "));
    }
    s
}

/// Printable construction for order `n` and time-scaling rate `alpha`.
pub fn describe_transform(n: usize, alpha: f64) -> Result<String> {
    let t = build_transform(n, alpha)?;
    let mut s = String::new();
    let _ = writeln!(s, "n = {n}, alpha = {alpha}");
    let _ = writeln!(s, "a = {}", fmt_vec(&t.a));
    let _ = writeln!(s, "A =\n{}", fmt_matrix(&t.a_mat));
    let _ = writeln!(s, "Q =\n{}", fmt_matrix(&t.q));
    let _ = writeln!(s, "Qinv =\n{}", fmt_matrix(&t.q_inv));
    for i in 0..n {
        let terms: Vec<String> = t
            .q_inv
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > 1e-12)
            .map(|(j, c)| match *c {
                c if c == 1.0 => format!("y{}", j + 1),
                c if c == -1.0 => format!("-y{}", j + 1),
                c => format!("{c}*y{}", j + 1),
            })
            .collect();
        let rhs = if terms.is_empty() { "0".to_string() } else { terms.join(" + ").replace("+ -", "- ") };
        let _ = writeln!(s, "z{} = {rhs}", i + 1);
    }
    Ok(s)
}

pub fn describe_gain(g: &TimeBaseGain) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "t0 = {}, T_c = {}, alpha = {}", g.t0(), g.t_c(), g.alpha());
    let _ = writeln!(s, "eta = {:.17}", g.eta());
    let _ = writeln!(s, "kappa(t0) = {}", g.kappa(g.t0()).unwrap_or(f64::NAN));
    let _ = writeln!(s, "gain bound = {:.10}", g.gain_bound());
    s
}

pub fn describe_experiment(exp: &Experiment) -> Result<String> {
    let n = exp.plant.order();
    let mut s = format!("design {}\n", exp.name);
    let inner = match &exp.controller {
        Controller::Piecewise(c) => {
            s.push_str(&describe_transform(n, c.gain().alpha())?);
            s.push_str(&describe_gain(c.gain()));
            c.inner()
        }
        Controller::Autonomous { inner, .. } => {
            let _ = writeln!(s, "autonomous controller, claimed bound {}", exp.deadline);
            inner
        }
    };
    match inner {
        InnerLaw::Linear(l) => {
            let _ = writeln!(s, "linear gains {}", fmt_vec(l.gains()));
            let roots: Vec<_> = l.roots().iter().map(|r| format!("{:.6}{:+.6}i", r.re, r.im)).collect();
            let _ = writeln!(s, "closed-loop roots {}", roots.join(", "));
            if let Controller::Piecewise(c) = &exp.controller {
                let ok = l.satisfies_eigenvalue_condition(c.gain().alpha());
                let _ = writeln!(s, "eigenvalue condition min|Re|/alpha > n: {ok}");
            }
        }
        InnerLaw::Basin(b) => {
            let _ = writeln!(s, "basin gains {}", fmt_vec(b.gains()));
            let ex: Vec<_> = b.exponents().iter().map(|(lo, hi)| format!("({lo:.6}, {hi:.6})")).collect();
            let _ = writeln!(s, "exponents {}", ex.join(" "));
            let _ = writeln!(s, "stretched-time settling bound {}", b.settling_bound());
        }
        InnerLaw::Aldana(a) => {
            let g = a.gains();
            let _ = writeln!(s, "gamma1 = {:.12}", g.gamma1);
            let _ = writeln!(s, "gamma2 = {:.12}", g.gamma2);
            let _ = writeln!(s, "m_p = {:.12}", g.m_p);
            let _ = writeln!(s, "m_q = {:.12}", g.m_q);
            let _ = writeln!(s, "stretched-time settling bound {}", a.settling_bound());
        }
    }
    Ok(s)
}

fn cmd_design(
    cli: &Cli,
    config: Option<&Path>,
    preset: Option<&str>,
    n: Option<usize>,
    alpha: f64,
    t_c: Option<f64>,
    t_f: Option<f64>,
) -> Result<ExitStatus> {
    let text = match (config, preset, n) {
        (Some(p), _, _) => describe_experiment(&cli.load(p)?)?,
        (None, Some(name), _) => describe_experiment(&cli.load_preset(name)?)?,
        (None, None, Some(n)) => {
            let mut s = describe_transform(n, alpha)?;
            if let Some(t_c) = t_c {
                let g = TimeBaseGain::from_aux_bound(alpha, t_f.unwrap_or(f64::INFINITY), t_c, 0.0)?;
                s.push_str(&describe_gain(&g));
            }
            s
        }
        (None, None, None) => {
            return Err(Error::Config("design needs --config, --preset or --n".into()));
        }
    };
    print!("{text}");
    Ok(ExitStatus::Success)
}

fn worst(a: ExitStatus, b: ExitStatus) -> ExitStatus {
    let rank = |s: ExitStatus| match s {
        ExitStatus::Success => 0,
        ExitStatus::VerificationFailure => 1,
        ExitStatus::SimulationFailure => 2,
        ExitStatus::ConfigError => 3,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Simulates each preset; a run that misses its bound is a verification
/// failure.
fn reproduce_presets(cli: &Cli, names: &[&str]) -> Result<(ExitStatus, Vec<(Experiment, Batch)>)> {
    let out = cli.out_dir()?;
    let mut status = ExitStatus::Success;
    let mut done = Vec::new();
    for name in names {
        let exp = cli.load_preset(name)?;
        let batch = simulate_batch(&exp, out, cli.jobs())?;
        if batch.failed > 0 {
            status = worst(status, ExitStatus::SimulationFailure);
        }
        let missed = batch
            .summaries
            .iter()
            .filter(|s| s.failure.is_none() && !s.settling.is_some_and(|t| t <= exp.deadline))
            .count();
        if missed > 0 {
            println!("  {missed} run(s) did not settle within {}", exp.deadline);
            status = worst(status, ExitStatus::VerificationFailure);
        }
        done.push((exp, batch));
    }
    Ok((status, done))
}

fn cmd_reproduce(cli: &Cli, example: Example) -> Result<ExitStatus> {
    match example {
        Example::Fig1 => reproduce_fig1(cli.out_dir()?),
        Example::Ex1 => Ok(reproduce_presets(cli, &["ex1"])?.0),
        Example::Ex2 | Example::Ex3 => {
            let pair = if example == Example::Ex2 {
                ["ex2_autonomous", "ex2"]
            } else {
                ["ex3_autonomous", "ex3"]
            };
            let (status, done) = reproduce_presets(cli, &pair)?;
            let [(a, ba), (b, bb)] = <[_; 2]>::try_from(done).map_err(|_| Error::Mismatch("two presets".into()))?;
            // Shared initial conditions: the autonomous set is a prefix of the redesign's.
            let m = ba.summaries.len().min(bb.summaries.len());
            let c = Comparison {
                names: [a.name.clone(), b.name.clone()],
                bounds: [a.deadline, b.deadline],
                initial_conditions: a.initial_conditions[..m].to_vec(),
                rows: ba
                    .summaries
                    .into_iter()
                    .zip(bb.summaries)
                    .map(|(x, y)| [x, y])
                    .collect(),
            };
            print!("{}", c.render_text());
            let path = write_comparison(&c, cli.out_dir()?)?;
            println!("comparison -> {}", path.display());
            Ok(status)
        }
    }
}

/// `t = phi_inv(tau)` with `eta = 1` and `T_c = 10`.
pub const FIG1_ALPHAS: [f64; 3] = [1.0, 0.2, 0.1];

fn reproduce_fig1(out: &Path) -> Result<ExitStatus> {
    let t_c = 10.0;
    let curves = runner::time_scaling_curves(&FIG1_ALPHAS, t_c, 60.0, 601)?;
    let path = out.join("fig1.csv");
    let mut w = create(&path)?;
    let header: Vec<_> = FIG1_ALPHAS.iter().map(|a| format!("t_alpha_{a}")).collect();
    writeln!(w, "tau,{}", header.join(","))?;
    for (tau, ts) in &curves {
        let cells: Vec<_> = ts.iter().map(|t| format!("{t:.16e}")).collect();
        writeln!(w, "{tau:.16e},{}", cells.join(","))?;
    }
    w.flush()?;
    let series = FIG1_ALPHAS
        .iter()
        .enumerate()
        .map(|(k, a)| Series {
            label: format!("alpha = {a}"),
            points: curves.iter().map(|(tau, ts)| (*tau, ts[k])).collect(),
        })
        .collect();
    let fig = Figure {
        title: format!("time scaling, eta = 1, T_c = {t_c}"),
        x_label: "tau".into(),
        panels: vec![Panel {
            y_label: "t".into(),
            series,
            symlog: false,
        }],
    };
    fs::write(out.join("fig1.svg"), fig.render())?;
    println!("fig1 -> {}, {}", path.display(), out.join("fig1.svg").display());
    for (k, a) in FIG1_ALPHAS.iter().enumerate() {
        println!("  alpha = {a}: t(tau = 60) = {:.9}", curves.last().map_or(f64::NAN, |c| c.1[k]));
    }
    Ok(ExitStatus::Success)
}
