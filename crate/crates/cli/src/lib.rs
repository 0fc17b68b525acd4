//! Command-line front end. [`run`] takes the argument list and two writers
//! and returns the process exit status, so tests drive it in-process.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fixbn::bnfold;
use fixbn::convert::{self, ConvertError, FixedAffine, QuantRange, SolveMode};
use fixbn::model::{self, FoldedModel, ModelFile};
use fixbn::oracle;
use fixbn::rational::{self, Rational};
use fixbn::scale_search::{self, ScaleSearchConfig, SearchError, DEFAULT_BUDGET, DEFAULT_WINDOW};
use fixbn::seqgen;
use fixbn::Exec;
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NO_SOLUTION: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Parser)]
#[command(
    name = "fixbn",
    version,
    about = "Fold BN layers into exact fixed-point affine operators"
)]
struct Cli {
    /// Machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for parallel stages
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Run every stage on the calling thread
    #[arg(long, global = true)]
    sequential: bool,
    /// No progress on stderr
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smallest scale K that works for every operator of width n
    SearchKn(SearchArgs),
    /// Every satisfied scale up to a maximum
    ListK {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        max: i64,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
    },
    /// Proven bounds on K_n
    Bounds {
        #[arg(long)]
        n: usize,
    },
    /// Integer (T, B) for an exact (t, b)
    Convert {
        #[command(flatten)]
        op: OperatorArgs,
        /// Scale; defaults to the recommended scale for the width
        #[arg(long)]
        k: Option<i64>,
        /// Every valid pair instead of the nearest
        #[arg(long)]
        all: bool,
    },
    /// Check a candidate (T, B) against (t, b) input by input
    Verify {
        #[command(flatten)]
        op: OperatorArgs,
        #[arg(long = "T", allow_negative_numbers = true)]
        slope: i64,
        #[arg(long = "B", allow_negative_numbers = true)]
        offset: i64,
        #[arg(long)]
        k: i64,
        #[arg(long, default_value_t = oracle::DEFAULT_MARGIN)]
        margin: i64,
    },
    /// Fold every BN layer of a model file
    Fold {
        #[arg(long)]
        model: PathBuf,
        /// Shared scale; defaults per layer width
        #[arg(long)]
        k: Option<i64>,
        /// Output path; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare unfolded, folded and fixed-point evaluation per layer
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        folded: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump every realizable threshold sequence of length n
    Sequences {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    n: usize,
    /// Search every width from n to this one
    #[arg(long)]
    to: Option<usize>,
    /// Starting scale; defaults to the proven lower bound
    #[arg(long)]
    start: Option<i64>,
    /// Sequences per batch
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
}

#[derive(Debug, Args)]
struct OperatorArgs {
    /// Slope as a decimal or p/q
    #[arg(long, allow_hyphen_values = true)]
    t: String,
    /// Offset as a decimal or p/q
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    ymin: i64,
    #[arg(long, allow_negative_numbers = true)]
    ymax: i64,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::new(EXIT_IO, e.to_string())
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        let code = match e {
            SearchError::BudgetExceeded { .. } => EXIT_BUDGET,
            SearchError::InvalidConfig(_) => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

struct Ctx<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    json: bool,
    quiet: bool,
    exec: Exec,
}

impl Ctx<'_> {
    fn emit(&mut self, value: &serde_json::Value) -> io::Result<()> {
        writeln!(
            self.out,
            "{}",
            serde_json::to_string_pretty(value).expect("json values serialize")
        )
    }
}

/// Parses `args` (program name first) and executes the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            let _ = writeln!(err, "error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        fixbn::exec::set_threads(threads);
    }
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let mut ctx = Ctx {
        out,
        err,
        json: cli.json,
        quiet: cli.quiet,
        exec,
    };
    match dispatch(cli.command, &mut ctx) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(ctx.err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, ctx: &mut Ctx) -> Outcome {
    match cmd {
        Command::SearchKn(a) => search_kn(a, ctx),
        Command::ListK { n, max, budget } => list_k(n, max, budget, ctx),
        Command::Bounds { n } => bounds(n, ctx),
        Command::Convert { op, k, all } => convert_cmd(op, k, all, ctx),
        Command::Verify {
            op,
            slope,
            offset,
            k,
            margin,
        } => verify(op, slope, offset, k, margin, ctx),
        Command::Fold { model, k, out } => fold(model, k, out, ctx),
        Command::Compare {
            model,
            folded,
            samples,
            seed,
        } => compare(model, folded, samples, seed, ctx),
        Command::Sequences { n, out } => sequences(n, out, ctx),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::new(EXIT_USAGE, msg)
}

fn search_kn(a: SearchArgs, ctx: &mut Ctx) -> Outcome {
    let last = a.to.unwrap_or(a.n);
    if a.n == 0 || last < a.n {
        return Err(usage(format!("need 1 <= n <= to, got n={}, to={last}", a.n)));
    }
    let mut results = Vec::new();
    for n in a.n..=last {
        let mut cfg = ScaleSearchConfig::new(n)
            .with_window(a.window)
            .with_budget(a.budget)
            .with_exec(ctx.exec);
        if let Some(k0) = a.start {
            cfg = cfg.with_start(k0);
        }
        let quiet = ctx.quiet;
        let err = &mut *ctx.err;
        let r = scale_search::search_kn_with_progress(&cfg, |p| {
            if !quiet {
                let _ = writeln!(
                    err,
                    "n={n} pass {} window {}: {} sequences, K={}",
                    p.pass, p.windows, p.sequences, p.k
                );
            }
        })?;
        if !ctx.json {
            let note = if r.minimal_certified {
                "minimal"
            } else {
                "not certified minimal"
            };
            writeln!(
                ctx.out,
                "K_{n} = {}  ({note}; bounds [{}, {}]; {} sequences; {} passes; {:.3}s)",
                r.kn,
                r.bounds.lower,
                r.bounds.upper,
                r.sequence_count,
                r.passes,
                r.elapsed.as_secs_f64()
            )?;
        }
        results.push(r);
    }
    if ctx.json {
        let v = if results.len() == 1 {
            serde_json::to_value(&results[0])
        } else {
            serde_json::to_value(&results)
        };
        ctx.emit(&v.expect("results serialize"))?;
    }
    Ok(EXIT_OK)
}

fn list_k(n: usize, max: i64, budget: u64, ctx: &mut Ctx) -> Outcome {
    let ks = scale_search::list_satisfied_k_with(n, max, budget, ctx.exec)?;
    if ctx.json {
        ctx.emit(&json!({ "n": n, "max": max, "satisfied": ks }))?;
    } else {
        let line: Vec<String> = ks.iter().map(i64::to_string).collect();
        writeln!(ctx.out, "{}", line.join(" "))?;
    }
    Ok(EXIT_OK)
}

fn bounds(n: usize, ctx: &mut Ctx) -> Outcome {
    if n == 0 {
        return Err(usage("n must be at least 1"));
    }
    let b = scale_search::kn_bounds(n);
    let blanket = scale_search::blanket_threshold(n);
    if ctx.json {
        ctx.emit(&json!({ "n": n, "lower": b.lower, "upper": b.upper, "blanket_threshold": blanket }))?;
    } else {
        writeln!(ctx.out, "{} <= K_{n} <= {}", b.lower, b.upper)?;
        writeln!(ctx.out, "every K > {blanket} is satisfied")?;
    }
    Ok(EXIT_OK)
}

fn parse_num(name: &str, text: &str) -> Result<Rational, Failure> {
    rational::parse_rational(text).map_err(|e| usage(format!("--{name}: {e}")))
}

fn operator(op: &OperatorArgs) -> Result<(Rational, Rational, QuantRange), Failure> {
    let t = parse_num("t", &op.t)?;
    let b = parse_num("b", &op.b)?;
    let range = QuantRange::new(op.ymin, op.ymax).map_err(|e| usage(e.to_string()))?;
    Ok((t, b, range))
}

fn convert_cmd(op: OperatorArgs, k: Option<i64>, all: bool, ctx: &mut Ctx) -> Outcome {
    let (t, b, range) = operator(&op)?;
    let k = k.unwrap_or_else(|| scale_search::default_scale(range.width() as usize));
    let mode = if all { SolveMode::All } else { SolveMode::First };
    let affine = json!({ "t": rational::to_string(&t), "b": rational::to_string(&b) });
    match convert::solve_tb(&t, &b, k, range, mode) {
        Ok(v) => {
            if ctx.json {
                ctx.emit(&json!({ "affine": affine, "range": range, "K": k, "solutions": v }))?;
            } else {
                for fa in &v {
                    writeln!(ctx.out, "T={} B={} K={}", fa.slope, fa.offset, fa.scale)?;
                }
            }
            Ok(EXIT_OK)
        }
        Err(ConvertError::DegenerateSign { threshold }) => {
            if ctx.json {
                ctx.emit(&json!({ "affine": affine, "range": range, "K": k, "sign": threshold }))?;
            } else {
                let dir = if threshold.descending { "N <= n0" } else { "N > n0" };
                writeln!(
                    ctx.out,
                    "sign n0={} ({} when {dir}, else {})",
                    threshold.n0,
                    range.y_max(),
                    range.y_min()
                )?;
            }
            Ok(EXIT_OK)
        }
        Err(ConvertError::NoSolution { k, witness }) => {
            let suggested = if range.width() <= 63 {
                scale_search::next_satisfied_k(range.width() as usize, k + 1, DEFAULT_BUDGET, ctx.exec).ok()
            } else {
                None
            };
            if ctx.json {
                ctx.emit(&json!({ "error": { "kind": "no_solution", "k": k, "witness": witness, "suggested_k": suggested } }))?;
            }
            let seq = seqgen::CeilSequence::new(witness)
                .map(|s| s.to_string())
                .unwrap_or_default();
            let hint = suggested
                .map(|s| format!("; next satisfied K is {s}"))
                .unwrap_or_default();
            writeln!(ctx.err, "no (T, B) at K={k}; threshold sequence {seq}{hint}")?;
            Ok(EXIT_NO_SOLUTION)
        }
        Err(e @ (ConvertError::ZeroSlope | ConvertError::InvalidScale(_) | ConvertError::InvalidRange { .. })) => {
            Err(usage(e.to_string()))
        }
        Err(e) => Err(Failure::new(EXIT_CHECK_FAILED, e.to_string())),
    }
}

fn verify(op: OperatorArgs, slope: i64, offset: i64, k: i64, margin: i64, ctx: &mut Ctx) -> Outcome {
    let (t, b, range) = operator(&op)?;
    if slope == 0 || k < 1 || margin < 0 {
        return Err(usage("need T != 0, K >= 1 and margin >= 0"));
    }
    let fa = FixedAffine {
        slope,
        offset,
        scale: k,
        range,
    };
    let report = oracle::verify_equivalence(&t, &b, &fa, margin);
    if ctx.json {
        ctx.emit(&serde_json::to_value(&report).expect("report serializes"))?;
    } else if report.certified() {
        writeln!(
            ctx.out,
            "certified: {} inputs checked over [{}, {}] plus sentinels",
            report.checked_count, report.window.0, report.window.1
        )?;
    } else {
        let m = report.mismatches[0];
        writeln!(
            ctx.out,
            "mismatch at N={}: float side {}, fixed side {} ({} mismatching inputs)",
            m.input, m.float_side, m.fixed_side, report.mismatch_count
        )?;
    }
    Ok(if report.certified() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_SCHEMA, format!("{}: {e}", path.display())))
}

fn fold(model_path: PathBuf, k: Option<i64>, out: Option<PathBuf>, ctx: &mut Ctx) -> Outcome {
    if k.is_some_and(|k| k < 1) {
        return Err(usage("--k must be at least 1"));
    }
    let model: ModelFile = read_json(&model_path)?;
    let folded = bnfold::fold_model(&model, k, ctx.exec).map_err(|e| Failure::new(EXIT_SCHEMA, e.to_string()))?;
    let text = model::to_json(&folded);
    match &out {
        Some(path) => fs::write(path, &text).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?,
        None => ctx.out.write_all(text.as_bytes())?,
    }
    for layer in &folded.layers {
        if let Some(e) = &layer.error {
            writeln!(ctx.err, "layer `{}`: {}", layer.name, e.message)?;
        }
    }
    if out.is_some() {
        let summary = json!({ "layers": folded.layers.len(), "failures": folded.failures() });
        if ctx.json {
            ctx.emit(&summary)?;
        } else {
            writeln!(
                ctx.out,
                "folded {} layers, {} certified, {} failed",
                folded.layers.len(),
                folded.layers.len() - folded.failures(),
                folded.failures()
            )?;
        }
    }
    Ok(if folded.failures() == 0 {
        EXIT_OK
    } else {
        EXIT_NO_SOLUTION
    })
}

fn compare(model_path: PathBuf, folded_path: PathBuf, samples: u64, seed: u64, ctx: &mut Ctx) -> Outcome {
    let model: ModelFile = read_json(&model_path)?;
    let folded: FoldedModel = read_json(&folded_path)?;
    let report = bnfold::simulate_compare(&model, &folded, samples, seed)
        .map_err(|e| Failure::new(EXIT_SCHEMA, e.to_string()))?;
    if ctx.json {
        ctx.emit(&serde_json::to_value(&report).expect("report serializes"))?;
    } else {
        for l in &report.layers {
            let pct = |x: u64| 100.0 * x as f64 / l.checked.max(1) as f64;
            write!(
                ctx.out,
                "{}: {} inputs, float=bt {:.2}%, bt=BT {:.2}%",
                l.name,
                l.checked,
                pct(l.float_bt_agree),
                pct(l.bt_fixed_agree)
            )?;
            match l.first_disagreement {
                Some(n) if l.replaced => writeln!(ctx.out, ", first disagreement at N={n}")?,
                Some(_) => writeln!(ctx.out, ", not replaced")?,
                None => writeln!(ctx.out)?,
            }
        }
        let ok = report.layers.iter().filter(|l| l.agrees()).count();
        writeln!(ctx.out, "{ok}/{} layers agree everywhere", report.layers.len())?;
    }
    Ok(if report.all_agree() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn sequences(n: usize, out: Option<PathBuf>, ctx: &mut Ctx) -> Outcome {
    if n == 0 {
        return Err(usage("n must be at least 1"));
    }
    let seqs = seqgen::enumerate(n);
    match out {
        Some(path) => {
            let file =
                fs::File::create(&path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
            seqgen::write_dump(io::BufWriter::new(file), &seqs)?;
            writeln!(ctx.err, "{} sequences written to {}", seqs.len(), path.display())?;
        }
        None => seqgen::write_dump(&mut *ctx.out, &seqs)?,
    }
    Ok(EXIT_OK)
}
