use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irsloc::bqp::{dinkelbach_solve, quad_binary_max, RatioProblem};
use irsloc::harness::{
    chanest_csv, chanest_trials_csv, convergence_csv, first_cycle_belief, initial_point, localization_curve_csv,
    localization_summary_csv, localization_trials_csv, manifest_footer, prepare_trial, run_arm, run_chanest_campaign,
    run_localization_campaign, write_outputs, ExperimentSpec,
};
use irsloc::localize::write_cycle_csv;
use irsloc::waveopt::{optimize_observed, write_trace_csv, DistanceContext};
use irsloc::{CMat, Error};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const PIPELINE_CONFIG: &str = include_str!("../../../configs/pipeline.json");

#[derive(Parser)]
#[command(name = "irsloc", version, about = "IRS-aided NLOS localization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel-estimation campaign over SNR, M, N and Mt.
    Chanest(CampaignArgs),
    /// Sequential localization campaign over P_b, M, N and waveform arms.
    Localize(CampaignArgs),
    /// The waveform/IRS optimization that follows the first cycle of trial 0.
    WaveoptTrace(CampaignArgs),
    /// Exact solve of a binary quadratic or ratio problem read from JSON.
    BqpSolve(BqpArgs),
    /// Every campaign the config defines (the bundled pipeline config by default).
    FullPipeline(CampaignArgs),
}

#[derive(Args)]
struct CampaignArgs {
    /// Experiment JSON; defaults to the bundled pipeline config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the trial count (applied after --desk-scale).
    #[arg(long)]
    trials: Option<usize>,
    /// Applies the config's reduced-size preset.
    #[arg(long)]
    desk_scale: bool,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct BqpArgs {
    /// Problem JSON: `{"r": M}` or `{"xi1": M, "xi2": M}`, each `M` a list of
    /// rows of `[re, im]` pairs.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

type Rows = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BqpProblem {
    #[serde(default)]
    r: Option<Rows>,
    #[serde(default)]
    xi1: Option<Rows>,
    #[serde(default)]
    xi2: Option<Rows>,
}

/// A failure tagged with the module it came from.
struct Failure {
    module: &'static str,
    error: Error,
}

trait Tag<T> {
    fn tag(self, module: &'static str) -> Result<T, Failure>;
}

impl<T> Tag<T> for irsloc::Result<T> {
    fn tag(self, module: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure { module, error })
    }
}

fn load_spec(args: &CampaignArgs) -> Result<ExperimentSpec, Failure> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::load(path),
        None => ExperimentSpec::from_json(PIPELINE_CONFIG),
    }
    .tag("config")?;
    if args.desk_scale {
        if spec.desk_scale.is_none() {
            return Err(Failure { module: "config", error: Error::Config("config has no desk_scale preset".into()) });
        }
        spec.apply_desk_scale();
    }
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    spec.validate().tag("config")?;
    Ok(spec)
}

fn finish(
    out: &Path,
    command: &str,
    seed: Option<u64>,
    input: &impl Serialize,
    files: &[(&str, String)],
) -> Result<(), Failure> {
    for path in write_outputs(out, command, seed, input, files).tag("cli")? {
        println!("{}", path.display());
    }
    Ok(())
}

fn chanest_files(spec: &ExperimentSpec, verbose: u8) -> Result<Vec<(&'static str, String)>, Failure> {
    let points = run_chanest_campaign(spec).tag("chanest")?;
    if verbose > 0 {
        for p in &points {
            eprintln!(
                "chanest M={} N={} Mt={} SNR={} dB: NE {:.4e} +- {:.1e}, {:.1} sweeps",
                p.m, p.n, p.mt, p.snr_db, p.ne_mean, p.ne_std, p.sweeps_mean
            );
        }
    }
    let mut files = vec![("chanest.csv", chanest_csv(&points)), ("chanest_trials.csv", chanest_trials_csv(&points))];
    if spec.chanest.as_ref().is_some_and(|c| c.record_convergence) {
        files.push(("convergence.csv", convergence_csv(&points)));
    }
    Ok(files)
}

fn localization_files(spec: &ExperimentSpec, verbose: u8) -> Result<Vec<(&'static str, String)>, Failure> {
    let points = run_localization_campaign(spec).tag("localize")?;
    if verbose > 0 {
        for p in &points {
            eprintln!(
                "localize M={} N={} P_b={} W {}: median {} cycles, decided correct {:.2}",
                p.m,
                p.n,
                p.pb_w,
                p.arm.name(),
                p.median_cycles,
                p.decided_correct_fraction
            );
        }
    }
    let loc = spec.localization.as_ref().expect("campaign ran");
    let setup = prepare_trial(spec, loc.m[0], loc.ny[0], 0).tag("localize")?;
    let mut rows = Vec::new();
    run_arm(spec, &setup, loc.arms[0], loc.pb_w[0], Some(&mut rows)).tag("localize")?;
    let mut cycles = Vec::new();
    write_cycle_csv(&mut cycles, &rows, true).map_err(Error::from).tag("cli")?;
    let cycles = String::from_utf8(cycles).expect("ascii csv") + &manifest_footer();
    Ok(vec![
        ("localization_curve.csv", localization_curve_csv(&points)),
        ("localization_summary.csv", localization_summary_csv(&points)),
        ("localization_trials.csv", localization_trials_csv(&points)),
        ("localization_cycles.csv", cycles),
    ])
}

fn waveopt_trace(args: &CampaignArgs) -> Result<(), Failure> {
    let spec = load_spec(args)?;
    let loc = spec.localization.as_ref().ok_or_else(|| Failure {
        module: "config",
        error: Error::Config("config has no localization section".into()),
    })?;
    let setup = prepare_trial(&spec, loc.m[0], loc.ny[0], 0).tag("localize")?;
    let pb = loc.pb_w[0];
    let belief = first_cycle_belief(&spec, &setup, pb).tag("localize")?;
    let ctx =
        DistanceContext::from_belief(&setup.grid, &setup.g_hat, &belief, loc.snapshots, setup.scene.noise_power())
            .tag("waveopt")?;
    let (x0, theta0) = initial_point(&setup, pb);
    let mut updates = 0usize;
    let res =
        optimize_observed(&ctx, &x0, &theta0, &spec.optimizer.params(pb), &mut |_, _| updates += 1).tag("waveopt")?;
    if args.verbose > 0 {
        eprintln!(
            "waveopt: distance {:.6e} -> {:.6e}, xi {:.2e}, {} outer, {updates} block updates{}",
            res.initial_distance,
            res.distance,
            res.xi,
            res.trace.len(),
            if res.kept_initial { ", kept initial point" } else { "" }
        );
    }
    let mut body = Vec::new();
    write_trace_csv(&mut body, &res.trace).map_err(Error::from).tag("cli")?;
    let body = String::from_utf8(body).expect("ascii csv") + &manifest_footer();
    finish(&args.out, "waveopt-trace", Some(spec.master_seed), &spec, &[("waveopt_trace.csv", body)])
}

fn matrix(rows: &Rows, name: &str) -> irsloc::Result<CMat> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{name} must be square")));
    }
    Ok(CMat::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

fn signs(delta: &[i8]) -> String {
    delta.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect()
}

fn bqp_solve(args: &BqpArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))
        .tag("config")?;
    let problem: BqpProblem = serde_json::from_str(&text).map_err(Error::from).tag("config")?;
    let row = match (&problem.r, &problem.xi1, &problem.xi2) {
        (Some(r), None, None) => {
            let r = matrix(r, "r").tag("config")?;
            let (delta, value) = quad_binary_max(&r).tag("bqp")?;
            format!("branch_and_bound,{},{value},0,{}\n", delta.len(), signs(&delta))
        }
        (None, Some(a), Some(b)) => {
            let prob =
                RatioProblem::new(matrix(a, "xi1").tag("config")?, matrix(b, "xi2").tag("config")?).tag("bqp")?;
            let res = dinkelbach_solve(&prob, None, 1e-12, 100).tag("bqp")?;
            format!("dinkelbach,{},{},{},{}\n", res.delta.len(), res.ratio, res.y_trace.len() - 1, signs(&res.delta))
        }
        _ => {
            return Err(Failure {
                module: "config",
                error: Error::Config("problem needs either `r` or both `xi1` and `xi2`".into()),
            })
        }
    };
    if args.verbose > 0 {
        eprint!("{row}");
    }
    let body = String::from("solver,n,value,iterations,delta\n") + &row + &manifest_footer();
    finish(&args.out, "bqp-solve", None, &problem, &[("bqp.csv", body)])
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Chanest(args) => {
            let spec = load_spec(&args)?;
            let files = chanest_files(&spec, args.verbose)?;
            finish(&args.out, "chanest", Some(spec.master_seed), &spec, &files)
        }
        Command::Localize(args) => {
            let spec = load_spec(&args)?;
            let files = localization_files(&spec, args.verbose)?;
            finish(&args.out, "localize", Some(spec.master_seed), &spec, &files)
        }
        Command::WaveoptTrace(args) => waveopt_trace(&args),
        Command::BqpSolve(args) => bqp_solve(&args),
        Command::FullPipeline(args) => {
            let spec = load_spec(&args)?;
            let mut files = Vec::new();
            if spec.chanest.is_some() {
                files.extend(chanest_files(&spec, args.verbose)?);
            }
            if spec.localization.is_some() {
                files.extend(localization_files(&spec, args.verbose)?);
            }
            finish(&args.out, "full-pipeline", Some(spec.master_seed), &spec, &files)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { module, error }) => {
            eprintln!("error[{module}/{}]: {error}", error.kind());
            ExitCode::from(if error.is_usage() { 2 } else { 1 })
        }
    }
}
