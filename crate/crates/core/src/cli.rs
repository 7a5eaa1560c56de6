//! Command-line front end: scenario ingestion, pipeline runs and artifact
//! emission. `main.rs` only forwards to [`run`].

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::duality::{dual_profile, verify_duality_claims, Contract};
use crate::equilibrium::{certify_unique_implementation, needs_robustness, EnumOptions};
use crate::error::{Error, Result};
use crate::numerics::ToleranceSet;
use crate::order::{csv_err, fmt, Setting};
use crate::outcome::optimize;
use crate::scenarios::{ScenarioConfig, ScenarioKind};
use crate::synthesis::{
    build_full_access_contract, build_optimal_contract, build_partial_contract, discretize_menu, SynthesisResult,
    TargetOutcome, DEFAULT_PLANS,
};

/// Env var capping the worker pool.
pub const THREADS_ENV: &str = "CONTRACT_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "contract-forge", version, about = "Robustly optimal contracts against a non-contractible outsider")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a menu for a target outcome and certify it with the equilibrium oracle.
    Contract(ContractArgs),
    /// Emit the data behind one response-curve panel.
    Figure(FigureArgs),
    /// Scan pure targets: robust vs partial values, attenuation, integrated game.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Builtin scenario (cournot, networked, boycott, custom-mixed) or a TOML/JSON config file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Action grid resolution.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Robust,
    Partial,
    FullAccess,
}

#[derive(Debug, Clone, Args)]
pub struct ContractArgs {
    #[command(flatten)]
    pub common: Common,
    /// Target action, or `a0` for the outside option.
    #[arg(long)]
    pub target: String,
    /// Second support action of a two-point target.
    #[arg(long)]
    pub target2: Option<f64>,
    /// Probability of `--target2` in a two-point target.
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Robust)]
    pub mode: ModeArg,
    /// Menu perturbation size.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Menu index: the perturbation shrinks as `eps / n`.
    #[arg(long, default_value_t = 1)]
    pub n: u32,
    /// Plans sampled from the offered set; spacing is refined further when
    /// the perturbation is too small to separate neighbouring plans.
    #[arg(long, default_value_t = DEFAULT_PLANS)]
    pub plans: usize,
    /// Largest mixed support searched by the equilibrium oracle.
    #[arg(long, default_value_t = 2)]
    pub support_cap: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FigureArgs {
    #[command(flatten)]
    pub common: Common,
    /// Panel a (cournot), b (custom-mixed) or c (networked).
    #[arg(long)]
    pub panel: String,
    /// Target action (defaults to the panel's reference target).
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: Common,
}

/// Everything a run wrote, plus what it was run with.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub scenario: String,
    pub config: ScenarioConfig,
    pub tolerances: ToleranceSet,
    pub threads: usize,
    pub wall_clock_s: f64,
    pub outputs: Vec<PathBuf>,
}

struct Run {
    out: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Self { out: out.to_path_buf(), outputs: Vec::new() })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.out.join(name);
        let f = File::create(&p)?;
        self.outputs.push(p);
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let w = self.file(name)?;
        serde_json::to_writer_pretty(w, value)?;
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        use std::io::Write;
        let mut w = self.file(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn finish(mut self, argv: &[String], spec: &str, cfg: &ScenarioConfig, started: Instant) -> Result<Vec<PathBuf>> {
        let manifest_path = self.out.join("manifest.json");
        self.outputs.push(manifest_path.clone());
        let manifest = RunManifest {
            tool: "contract-forge",
            version: env!("CARGO_PKG_VERSION"),
            command: argv.to_vec(),
            scenario: spec.to_string(),
            config: cfg.clone(),
            tolerances: cfg.tolerances(),
            threads: rayon::current_num_threads(),
            wall_clock_s: started.elapsed().as_secs_f64(),
            outputs: self.outputs.clone(),
        };
        let w = BufWriter::new(File::create(&manifest_path)?);
        serde_json::to_writer_pretty(w, &manifest)?;
        Ok(self.outputs)
    }
}

fn load(common: &Common, default: &str) -> Result<(String, ScenarioConfig, Setting)> {
    let spec = common.scenario.clone().unwrap_or_else(|| default.to_string());
    let mut cfg = ScenarioConfig::resolve(&spec)?;
    if let Some(n) = common.grid {
        cfg.grid.n_a = n;
    }
    let setting = Setting::from_config(&cfg)?;
    Ok((spec, cfg, setting))
}

fn parse_target(s: &Setting, text: &str) -> Result<f64> {
    if text.eq_ignore_ascii_case("a0") {
        return Ok(s.a0());
    }
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidTarget(format!("`{text}` is neither a number nor `a0`")))
}

fn target_outcome(s: &Setting, args: &ContractArgs) -> Result<TargetOutcome> {
    let a = parse_target(s, &args.target)?;
    match args.target2 {
        None => TargetOutcome::pure(s, a),
        Some(b) => TargetOutcome::new(s, &[(a, 1.0 - args.weight), (b, args.weight)]),
    }
}

#[derive(Serialize)]
struct Verdict {
    /// `unique`, `multiple`, `mismatch`, or `unverified` when the model
    /// assumptions failed.
    verdict: &'static str,
    count: usize,
    matches_target: bool,
    cell: f64,
    equilibria: serde_json::Value,
}

fn write_schedule(run: &mut Run, res: &SynthesisResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(run.file("schedule.csv")?);
    w.write_record(["a", "transfer", "marginal", "h_star", "member", "partial_transfer"]).map_err(csv_err)?;
    for k in &res.knots {
        w.write_record([
            fmt(k.a),
            fmt(k.transfer),
            fmt(k.marginal),
            fmt(k.h_star),
            u8::from(k.member).to_string(),
            fmt(k.partial_transfer),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `contract`: menu CSV, schedule, dual profile, JSON report with the verdict.
pub fn cmd_contract(args: &ContractArgs, argv: &[String]) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let (spec, cfg, s) = load(&args.common, "cournot")?;
    if !(args.eps.is_finite() && args.eps >= 0.0) {
        return Err(Error::param("eps", "must be finite and nonnegative"));
    }
    if args.n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if !(1..=3).contains(&args.support_cap) {
        return Err(Error::param("support_cap", "must be 1, 2 or 3"));
    }
    let target = target_outcome(&s, args)?;
    let plans = args.plans;
    let mut run = Run::new(&args.common.out)?;

    let (menu, synthesis): (Contract, Option<SynthesisResult>) = match args.mode {
        ModeArg::Partial => (build_partial_contract(&s, &target)?, None),
        ModeArg::Robust | ModeArg::FullAccess => {
            let res = if args.mode == ModeArg::Robust {
                build_optimal_contract(&s, &target)?
            } else {
                build_full_access_contract(&s, &target)?
            };
            (discretize_menu(&res, args.n, args.eps, plans)?, Some(res))
        }
    };
    menu.write_csv(run.file("menu.csv")?)?;
    if let Some(res) = &synthesis {
        write_schedule(&mut run, res)?;
    }

    let opts = EnumOptions { support_cap: args.support_cap, ..EnumOptions::default() };
    let cert = certify_unique_implementation(&s, &menu, &target, opts)?;
    let trusted = s.assumptions.passed();
    let verdict = Verdict {
        verdict: match (trusted, cert.unique, cert.count) {
            (false, _, _) => "unverified",
            (true, true, _) => "unique",
            (true, false, 1) => "mismatch",
            (true, false, _) => "multiple",
        },
        count: cert.count,
        matches_target: cert.matches_target,
        cell: cert.cell,
        equilibria: cert.enumeration.report(),
    };

    let grid = s.model.actions().grid(201);
    let profile = dual_profile(&s, &menu, &grid)?;
    profile.write_transfer_csv(run.file("dual_transfer.csv")?)?;
    let claims = verify_duality_claims(&s, &menu, &target, 201, 1e-5, cert.unique && trusted)?;

    let report = serde_json::json!({
        "command": "contract",
        "scenario": spec,
        "mode": args.mode,
        "target": target,
        "needs_robustness": needs_robustness(&s, &target)?,
        "assumptions": s.assumptions,
        "assumptions_passed": trusted,
        "synthesis": synthesis,
        "menu": { "plans": menu.len(), "n": args.n, "eps": args.eps, "generator": menu.generator },
        "certification": verdict,
        "claims": claims,
    });
    run.json("report.json", &report)?;
    run.finish(argv, &spec, &cfg, started)
}

/// Panel -> (scenario, reference target).
pub fn panel_defaults(panel: &str) -> Result<(ScenarioKind, f64)> {
    match panel.to_ascii_lowercase().as_str() {
        "a" => Ok((ScenarioKind::Cournot, 0.5)),
        "b" => Ok((ScenarioKind::Wave, 0.85)),
        "c" => Ok((ScenarioKind::Networked, 0.5)),
        other => Err(Error::UnknownPanel(other.to_string())),
    }
}

fn gnuplot_script(panel: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'a'\n\
         set ylabel 'h'\n\
         set title 'panel {panel}'\n\
         plot 'panel_{panel}.csv' using 1:2 with lines title 'h(r(a))', \\\n\
         \x20    '' using 1:3 with lines dashtype 2 title 'h(r_bar(a))', \\\n\
         \x20    '' using 1:($4 > 0 ? $2 : 1/0) with points pt 7 ps 0.3 title 'offered'\n"
    )
}

/// `figure`: CSV `(a, h_r, h_rbar, member)` plus a gnuplot script.
pub fn cmd_figure(args: &FigureArgs, argv: &[String]) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let panel = args.panel.to_ascii_lowercase();
    let (kind, default_target) = panel_defaults(&panel)?;
    let default_spec = match kind {
        ScenarioKind::Cournot => "cournot",
        ScenarioKind::Wave => "custom-mixed",
        ScenarioKind::Networked => "networked",
        ScenarioKind::Boycott => "boycott",
    };
    let (spec, cfg, s) = load(&args.common, default_spec)?;
    let a = match &args.target {
        Some(t) => parse_target(&s, t)?,
        None => default_target,
    };
    let target = TargetOutcome::pure(&s, a)?;
    let res = build_optimal_contract(&s, &target)?;
    let mut run = Run::new(&args.common.out)?;

    let c = &s.curve;
    let cell = c.a[1] - c.a[0];
    let name = format!("panel_{panel}.csv");
    let mut w = csv::Writer::from_writer(run.file(&name)?);
    w.write_record(["a", "h_r", "h_rbar", "member"]).map_err(csv_err)?;
    for i in 0..c.len() {
        let member = c.a[i] <= target.a_hi() && res.offered(c.a[i], 0.0);
        w.write_record([fmt(c.a[i]), fmt(c.h[i]), fmt(c.bar_h(i)), u8::from(member).to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    drop(w);
    run.text(&format!("panel_{panel}.gp"), &gnuplot_script(&panel))?;

    let report = serde_json::json!({
        "command": "figure",
        "panel": panel,
        "scenario": spec,
        "target": target,
        "cell": cell,
        "monotone": c.monotone(s.tol.eq),
        "segments": res.segments,
        "isolated": res.isolated,
        "crossings": res.crossings,
        "twins": res.twins,
        "assumptions": s.assumptions,
        "assumptions_passed": s.assumptions.passed(),
    });
    run.json(&format!("panel_{panel}.json"), &report)?;
    run.finish(argv, &spec, &cfg, started)
}

/// `optimize`: scan CSV and the attenuation / integrated-game / privacy report.
pub fn cmd_optimize(args: &OptimizeArgs, argv: &[String]) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let (spec, cfg, s) = load(&args.common, "cournot")?;
    let (scan, report) = optimize(&s, cfg.grid.n_a)?;
    let mut run = Run::new(&args.common.out)?;
    scan.write_csv(run.file("scan.csv")?)?;
    run.json("optimize.json", &report)?;
    run.finish(argv, &spec, &cfg, started)
}

/// Sizes the global pool from [`THREADS_ENV`] if set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::param("CONTRACT_FORGE_THREADS", format!("expected a positive integer, got `{v}`")))?;
    // A second initialization (tests, embedding) keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Machine-readable error document printed on stderr.
pub fn error_document(e: &Error) -> serde_json::Value {
    serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() })
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = init_threads().and_then(|_| match &cli.command {
        Command::Contract(a) => cmd_contract(a, &argv),
        Command::Figure(a) => cmd_figure(a, &argv),
        Command::Optimize(a) => cmd_optimize(a, &argv),
    });
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", error_document(&e));
            e.exit_code()
        }
    }
}
