use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};

use phasecluster::applied::{
    baseline_kmeans, ifpca_pipeline, LabelSource, LabeledMatrix, PipelineOptions, QMode, ScreenForm,
};
use phasecluster::error::Error;
use phasecluster::harness::{
    run_sweep_with, run_trial, write_sweep_csv, Execution, MethodSpec, SweepSpec, TrialRecord, TrialSpec,
};
use phasecluster::model::{gen_dataset, ArwParams, Strength};
use phasecluster::phase::{self, BoundKind, PhaseQuery, Problem, Variant};

const EXIT_INVALID: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "phasecluster", version, about = "Rare/weak clustering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial from flags or a JSON trial spec.
    Simulate(SimulateArgs),
    /// Run a phase-plane sweep from a JSON sweep spec.
    Sweep(SweepArgs),
    /// Tabulate a phase boundary over β.
    Boundary(BoundaryArgs),
    /// Run IF-PCA on a labeled data matrix.
    IfpcaRun(IfpcaArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON trial spec; replaces the model flags.
    #[arg(long, conflicts_with_all = ["p", "theta", "beta", "alpha", "r", "tau"])]
    spec: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, group = "strength")]
    alpha: Option<f64>,
    #[arg(long, group = "strength")]
    r: Option<f64>,
    #[arg(long, group = "strength")]
    tau: Option<f64>,
    /// Fraction of negative signal entries.
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    /// Screening level for the IF methods; defaults to q*.
    #[arg(long)]
    q: Option<f64>,
    /// Subset size for the aggregation methods; defaults to ⌈pε⌉.
    #[arg(long = "N")]
    n_select: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated method ids.
    #[arg(long, value_delimiter = ',', default_value = "simple_agg,classical_pca,if_pca")]
    methods: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Also write the generated matrix to `<stem>.csv` and its truth to `<stem>.json`.
    #[arg(long)]
    data_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep spec.
    spec: PathBuf,
    /// Output stem; writes `<stem>.json` and `<stem>.csv`. Defaults to the
    /// spec's `output`, else JSON on stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run trials one at a time.
    #[arg(long)]
    serial: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Clustering,
    Recovery,
    Testing,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Statistical,
    Ctub,
}

#[derive(Args)]
struct BoundaryArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long, value_enum, default_value_t = KindArg::Statistical)]
    kind: KindArg,
    #[arg(long)]
    signed: bool,
    #[arg(long)]
    theta: f64,
    /// Interior grid points on (0, 1).
    #[arg(long, default_value_t = 99)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct IfpcaArgs {
    /// CSV with samples in rows and a header of feature names.
    #[arg(long)]
    data: PathBuf,
    /// Label file, or the name of a column of the data file.
    #[arg(long)]
    labels: String,
    #[arg(long, group = "mode")]
    q: Option<f64>,
    #[arg(long, group = "mode")]
    fdr: Option<f64>,
    /// `from:to:step`.
    #[arg(long, group = "mode")]
    sweep: Option<String>,
    /// Keep the k highest-scoring features.
    #[arg(long, group = "mode")]
    top_k: Option<usize>,
    /// No feature selection.
    #[arg(long, group = "mode")]
    all: bool,
    /// Divide the screening statistic by 2n instead of √(2n).
    #[arg(long)]
    literal_screen: bool,
    #[arg(long)]
    no_normalize: bool,
    /// Also report Lloyd 2-means with this many restarts.
    #[arg(long)]
    kmeans_restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Outcome {
    Clean,
    Partial,
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse {
            path: path.into(),
            line: e.line(),
            field: format!("column {}", e.column()),
            message: e.to_string(),
        }
        .into()
    })
}

fn trial_spec(args: &SimulateArgs) -> anyhow::Result<TrialSpec> {
    if let Some(path) = &args.spec {
        return read_json(path);
    }
    let (Some(p), Some(theta), Some(beta)) = (args.p, args.theta, args.beta) else {
        return Err(Error::InvalidArgument("give --spec, or all of --p, --theta and --beta".into()).into());
    };
    let strength = match (args.alpha, args.r, args.tau) {
        (Some(alpha), None, None) => Strength::Alpha { alpha },
        (None, Some(r), None) => Strength::LogAdjusted { r },
        (None, None, Some(tau)) => Strength::Fixed { tau },
        _ => return Err(Error::InvalidArgument("give exactly one of --alpha, --r, --tau".into()).into()),
    };
    let methods = args
        .methods
        .iter()
        .map(|id| MethodSpec::from_id(id.trim(), args.q, args.n_select))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrialSpec {
        params: ArwParams::new(p, theta, beta, strength).with_sign_mix(args.a),
        noise: Default::default(),
        methods,
        seed: args.seed,
        recovery_norm: Default::default(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn record_csv(rec: &TrialRecord) -> String {
    let mut s = String::from(
        "method,clustering_hamming,recovery_hamming,signed_recovery_hamming,cosine,null_reject,alt_reject,selected,fallback_used,error\n",
    );
    for o in &rec.outcomes {
        let l = &o.losses;
        let (null, alt) = o
            .tests
            .map_or((String::new(), String::new()), |t| (t.null.reject.to_string(), t.alt.reject.to_string()));
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            o.label,
            opt(l.clustering_hamming),
            opt(l.recovery_hamming),
            opt(l.signed_recovery_hamming),
            opt(l.cosine),
            null,
            alt,
            o.diagnostics.selected.map_or_else(String::new, |v| v.to_string()),
            o.diagnostics.fallback_used,
            o.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    s
}

fn simulate(args: SimulateArgs) -> anyhow::Result<Outcome> {
    let spec = trial_spec(&args)?;
    let rec = run_trial(&spec)?;
    if let Some(stem) = &args.data_out {
        let ds = gen_dataset(&spec.params, &spec.noise, spec.seed)?;
        ds.write_csv(&stem.with_extension("csv"))?;
        ds.write_sidecar(&stem.with_extension("json"))?;
    }
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&rec)? + "\n",
        Format::Csv => record_csv(&rec),
    };
    emit(args.out.as_deref(), &text)?;
    Ok(if rec.has_failures() { Outcome::Partial } else { Outcome::Clean })
}

fn sweep(args: SweepArgs) -> anyhow::Result<Outcome> {
    let mut spec: SweepSpec = read_json(&args.spec)?;
    if let Some(reps) = args.reps {
        spec.reps = reps;
    }
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if args.out.is_some() {
        spec.output = args.out.clone();
    }
    let exec = if args.serial { Execution::Serial } else { Execution::Parallel };
    let out = run_sweep_with(&spec, exec)?;
    match &spec.output {
        Some(stem) => {
            let json = stem.with_extension("json");
            phasecluster::harness::write_sweep_json(&json, &out)?;
            write_sweep_csv(&stem.with_extension("csv"), &out.results)?;
            eprintln!("wrote {} and {}", json.display(), stem.with_extension("csv").display());
        }
        None => emit(None, &(serde_json::to_string_pretty(&out)? + "\n"))?,
    }
    Ok(if out.results.has_failures() { Outcome::Partial } else { Outcome::Clean })
}

fn boundary(args: BoundaryArgs) -> anyhow::Result<Outcome> {
    if args.points == 0 {
        return Err(Error::InvalidArgument("--points must be positive".into()).into());
    }
    let problem = match args.problem {
        ProblemArg::Clustering => Problem::Clustering,
        ProblemArg::Recovery => Problem::SignalRecovery,
        ProblemArg::Testing => Problem::HypothesisTesting,
    };
    let bound_kind = match args.kind {
        KindArg::Statistical => BoundKind::Statistical,
        KindArg::Ctub => BoundKind::Ctub,
    };
    let variant = if args.signed { Variant::Signed } else { Variant::OneSided };
    let mut rows = Vec::with_capacity(args.points);
    for i in 1..=args.points {
        let beta = i as f64 / (args.points + 1) as f64;
        let ans = phase::boundary(&PhaseQuery {
            problem,
            bound_kind,
            variant,
            theta: args.theta,
            beta,
        })?;
        rows.push((beta, ans));
    }
    let text = match args.format {
        Format::Csv => {
            let mut s = String::from("beta,alpha_boundary,segment\n");
            for (beta, ans) in &rows {
                s.push_str(&format!("{beta},{},{}\n", ans.alpha_boundary, ans.segment));
            }
            s
        }
        Format::Json => {
            let v: Vec<serde_json::Value> = rows
                .iter()
                .map(|(beta, ans)| serde_json::json!({"beta": beta, "alpha_boundary": ans.alpha_boundary, "segment": ans.segment, "formula": ans.formula}))
                .collect();
            serde_json::to_string_pretty(&v)? + "\n"
        }
    };
    emit(args.out.as_deref(), &text)?;
    Ok(Outcome::Clean)
}

fn parse_sweep(s: &str) -> anyhow::Result<QMode> {
    let parts: Vec<&str> = s.split(':').collect();
    let [from, to, step] = parts[..] else {
        bail!(Error::InvalidArgument(format!("--sweep expects from:to:step, got {s:?}")));
    };
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("not a number in --sweep: {v:?}")))
    };
    Ok(QMode::Sweep {
        from: num(from)?,
        to: num(to)?,
        step: num(step)?,
    })
}

fn ifpca(args: IfpcaArgs) -> anyhow::Result<Outcome> {
    let mode = match (args.q, args.fdr, &args.sweep, args.top_k, args.all) {
        (Some(q), ..) => QMode::Fixed { q },
        (_, Some(level), ..) => QMode::Fdr { level },
        (_, _, Some(s), ..) => parse_sweep(s)?,
        (_, _, _, Some(k), _) => QMode::TopK { k },
        (.., true) => QMode::All,
        _ => return Err(Error::InvalidArgument("give one of --q, --fdr, --sweep, --top-k, --all".into()).into()),
    };
    let source = if Path::new(&args.labels).is_file() {
        LabelSource::File(PathBuf::from(&args.labels))
    } else {
        LabelSource::Column(args.labels.clone())
    };
    let data = LabeledMatrix::read(&args.data, &source)?;
    let opts = PipelineOptions {
        mode,
        screen: if args.literal_screen { ScreenForm::Literal } else { ScreenForm::TwoSided },
        normalize: !args.no_normalize,
    };
    let report = ifpca_pipeline(&data, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let baseline = args
        .kmeans_restarts
        .map(|r| baseline_kmeans(&data, r, args.seed))
        .transpose()?;
    let doc = serde_json::json!({ "report": report, "kmeans_baseline": baseline });
    emit(args.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    Ok(Outcome::Clean)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::BudgetExceeded { .. }
            | Error::Parse { .. }
            | Error::Json(_),
        ) => EXIT_INVALID,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Boundary(a) => boundary(a),
        Command::IfpcaRun(a) => ifpca(a),
    };
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            eprintln!("some methods or trials failed; see the error fields of the output");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
