//! Command-line front end: loads a model and a property, runs branch-and-bound
//! and reports the verdict as a single JSON object.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use clipverify_core::bab::{verify, BabConfig, BranchMode, ClipMode, Verdict, VerificationOutcome};
use clipverify_core::crown::AlphaPolicy;
use clipverify_core::network::{canonicalize, load_model, load_property, CanonicalProblem};
use clipverify_core::oracle::exact_verify;
use serde::{Deserialize, Serialize};

pub const EXIT_VERIFIED: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_USAGE: i32 = 3;
pub const EXIT_ORACLE_MISMATCH: i32 = 4;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CLIPVERIFY_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "clipverify",
    version,
    about = "Branch-and-bound verifier for ReLU networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that every specification row is non-negative over the input box.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Input,
    Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClipArg {
    None,
    Relaxed,
    Complete,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AlphaArg(AlphaPolicy);

impl FromStr for AlphaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "adaptive" {
            return Ok(AlphaArg(AlphaPolicy::Adaptive));
        }
        let v = s
            .strip_prefix("fixed:")
            .ok_or_else(|| format!("expected fixed:V or adaptive, got {s:?}"))?;
        let v: f64 = v.parse().map_err(|e| format!("bad slope {v:?}: {e}"))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("slope must lie in [0, 1], got {v}"));
        }
        Ok(AlphaArg(AlphaPolicy::Fixed(v)))
    }
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    /// Network JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Property JSON file.
    #[arg(long)]
    property: PathBuf,
    #[arg(long, value_enum, default_value = "input")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "both")]
    clip: ClipArg,
    /// Apply relaxed clipping one constraint at a time.
    #[arg(long)]
    seq_clip: bool,
    /// Order constraints by distance to the box center (implies --seq-clip).
    #[arg(long)]
    reorder_constraints: bool,
    /// Neurons per layer refined by complete clipping.
    #[arg(long, default_value_t = 20)]
    topk: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Coordinate ascent sweeps.
    #[arg(long, default_value_t = 1)]
    passes: usize,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Lower ReLU slope: fixed:V with V in [0,1], or adaptive.
    #[arg(long, default_value = "fixed:1")]
    alpha: AlphaArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-check the verdict against exhaustive enumeration when the instance is small enough.
    #[arg(long)]
    oracle_check: bool,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Options echoed back in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub model: String,
    pub property: String,
    pub mode: BranchMode,
    pub clip: ClipMode,
    pub seq_clip: bool,
    pub reorder_constraints: bool,
    pub topk: usize,
    pub batch: usize,
    pub passes: usize,
    pub timeout: f64,
    pub alpha: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// "verified", "falsified" or "skipped".
    pub status: String,
    pub min_value: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub agrees: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// "verified", "falsified" or "unknown".
    pub status: String,
    /// Global lower bound on the smallest margin; `null` when infinite.
    pub bound: Option<f64>,
    pub counterexample: Option<Vec<f64>>,
    pub counterexample_value: Option<f64>,
    pub domains_visited: usize,
    pub max_depth: usize,
    pub time_s: f64,
    pub config: ConfigEcho,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.oracle.as_ref().and_then(|o| o.agrees) == Some(false) {
            return EXIT_ORACLE_MISMATCH;
        }
        match self.status.as_str() {
            "verified" => EXIT_VERIFIED,
            "falsified" => EXIT_FALSIFIED,
            _ => EXIT_UNKNOWN,
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn alpha_label(a: AlphaPolicy) -> String {
    match a {
        AlphaPolicy::Fixed(v) => format!("fixed:{v}"),
        AlphaPolicy::Adaptive => "adaptive".into(),
    }
}

pub fn build_report(outcome: &VerificationOutcome, config: ConfigEcho) -> RunReport {
    let (status, counterexample, counterexample_value) = match &outcome.status {
        Verdict::Verified => ("verified", None, None),
        Verdict::Falsified {
            counterexample,
            value,
        } => ("falsified", Some(counterexample.clone()), Some(*value)),
        Verdict::Unknown => ("unknown", None, None),
    };
    RunReport {
        status: status.into(),
        bound: finite(outcome.bound),
        counterexample,
        counterexample_value,
        domains_visited: outcome.stats.domains_visited,
        max_depth: outcome.stats.max_depth,
        time_s: outcome.stats.wall_time.as_secs_f64(),
        config,
        oracle: None,
    }
}

/// JSON text of a report, fields in declaration order.
pub fn emit_report(report: &RunReport) -> String {
    serde_json::to_string(report).expect("report serialization cannot fail")
}

fn bab_config(args: &VerifyArgs) -> Result<BabConfig, String> {
    if args.batch == 0 {
        return Err("--batch must be at least 1".into());
    }
    if args.passes == 0 {
        return Err("--passes must be at least 1".into());
    }
    if !args.timeout.is_finite() || args.timeout < 0.0 {
        return Err("--timeout must be a non-negative number of seconds".into());
    }
    let clip = match args.clip {
        ClipArg::None => ClipMode::None,
        ClipArg::Relaxed => ClipMode::Relaxed,
        ClipArg::Complete => ClipMode::Complete,
        ClipArg::Both => ClipMode::Both,
    };
    if (args.seq_clip || args.reorder_constraints) && !clip.relaxed() {
        return Err("--seq-clip and --reorder-constraints need --clip relaxed or both".into());
    }
    Ok(BabConfig {
        mode: match args.mode {
            ModeArg::Input => BranchMode::Input,
            ModeArg::Activation => BranchMode::Activation,
        },
        clip,
        topk: args.topk,
        batch: args.batch,
        timeout: args.timeout,
        sequential_clip: args.seq_clip || args.reorder_constraints,
        reorder: args.reorder_constraints,
        passes: args.passes,
        alpha: args.alpha.0,
        seed: args.seed,
    })
}

fn load_problem(args: &VerifyArgs) -> Result<CanonicalProblem, String> {
    let open = |p: &PathBuf| {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| format!("{}: {e}", p.display()))
    };
    let model =
        load_model(open(&args.model)?).map_err(|e| format!("{}: {e}", args.model.display()))?;
    let prop = load_property(open(&args.property)?)
        .map_err(|e| format!("{}: {e}", args.property.display()))?;
    canonicalize(&model, &prop).map_err(|e| format!("model and property do not fit together: {e}"))
}

fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| e.to_string())
}

fn oracle_check(problem: &CanonicalProblem, report: &RunReport) -> OracleReport {
    match exact_verify(problem, &problem.input_box, &[]) {
        Ok(r) => {
            let oracle_status = if r.holds() { "verified" } else { "falsified" };
            let agrees = match report.status.as_str() {
                "unknown" => None,
                s => Some(s == oracle_status),
            };
            OracleReport {
                status: oracle_status.into(),
                min_value: finite(r.min_value),
                witness: r.witness,
                agrees,
                note: None,
            }
        }
        Err(e) => OracleReport {
            status: "skipped".into(),
            min_value: None,
            witness: None,
            agrees: None,
            note: Some(e.to_string()),
        },
    }
}

/// Runs the command line `argv` (program name first). Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // --help and --version land here too and are not errors.
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_VERIFIED;
        }
    };
    let Command::Verify(args) = cli.command;
    let usage = |stderr: &mut dyn Write, msg: String| {
        let _ = writeln!(stderr, "error: {msg}");
        EXIT_USAGE
    };
    let cfg = match bab_config(&args) {
        Ok(c) => c,
        Err(m) => return usage(stderr, m),
    };
    let problem = match load_problem(&args) {
        Ok(p) => p,
        Err(m) => return usage(stderr, m),
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(m) => return usage(stderr, m),
    };
    let outcome = match pool.install(|| verify(&problem, &cfg)) {
        Ok(o) => o,
        Err(e) => return usage(stderr, e.to_string()),
    };
    let echo = ConfigEcho {
        model: args.model.display().to_string(),
        property: args.property.display().to_string(),
        mode: cfg.mode,
        clip: cfg.clip,
        seq_clip: cfg.sequential_clip,
        reorder_constraints: cfg.reorder,
        topk: cfg.topk,
        batch: cfg.batch,
        passes: cfg.passes,
        timeout: cfg.timeout,
        alpha: alpha_label(cfg.alpha),
        seed: cfg.seed,
    };
    let mut report = build_report(&outcome, echo);
    if args.oracle_check {
        report.oracle = Some(oracle_check(&problem, &report));
    }
    let text = emit_report(&report);
    match &args.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, format!("{text}\n")) {
                return usage(stderr, format!("{}: {e}", path.display()));
            }
        }
        None => {
            let _ = writeln!(stdout, "{text}");
        }
    }
    report.exit_code()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_parsing() {
        assert_eq!(
            "adaptive".parse::<AlphaArg>().unwrap().0,
            AlphaPolicy::Adaptive
        );
        assert_eq!(
            "fixed:0.25".parse::<AlphaArg>().unwrap().0,
            AlphaPolicy::Fixed(0.25)
        );
        assert!("fixed:2".parse::<AlphaArg>().is_err());
        assert!("fixed".parse::<AlphaArg>().is_err());
        assert!("1".parse::<AlphaArg>().is_err());
    }

    #[test]
    fn exit_code_follows_status() {
        let outcome = VerificationOutcome {
            status: Verdict::Unknown,
            bound: f64::NEG_INFINITY,
            stats: Default::default(),
        };
        let echo = ConfigEcho {
            model: "m".into(),
            property: "p".into(),
            mode: BranchMode::Input,
            clip: ClipMode::Both,
            seq_clip: false,
            reorder_constraints: false,
            topk: 20,
            batch: 8,
            passes: 1,
            timeout: 60.0,
            alpha: "fixed:1".into(),
            seed: 0,
        };
        let mut r = build_report(&outcome, echo);
        assert_eq!((r.exit_code(), r.bound), (EXIT_UNKNOWN, None));
        r.status = "verified".into();
        assert_eq!(r.exit_code(), EXIT_VERIFIED);
        r.status = "falsified".into();
        assert_eq!(r.exit_code(), EXIT_FALSIFIED);
        r.oracle = Some(OracleReport {
            status: "verified".into(),
            min_value: Some(0.5),
            witness: None,
            agrees: Some(false),
            note: None,
        });
        assert_eq!(r.exit_code(), EXIT_ORACLE_MISMATCH);
        let back: RunReport = serde_json::from_str(&emit_report(&r)).unwrap();
        assert_eq!(back, r);
    }
}
