//! `cfeval` command-line front end.
//!
//! Exit codes: 0 success, 1 validation or domain error, 2 file error, 3 usage error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use cfeval::data::DataError;
use cfeval::io::{self, IoError, ReportFormat, TensorFormat};
use cfeval::metrics::{JsLogBase, MetricConfig, MetricError, OracleMode, ValidityPolicy};
use cfeval::stats::{
    evaluate_bundle, normalization_audit, rank_methods, EvaluationRequest, MetricKind,
    MetricReport, MetricSelection, StatsError,
};
use cfeval::synth::{build_bundle, gen_world, make_fakemnist, CfMethod, SynthError, SyntheticSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_FILE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

/// Worker cap; 0 or unset means one per core.
pub const THREADS_ENV: &str = "CFEVAL_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    File(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::File(_) => EXIT_FILE,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::ValidationFailed(_)
            | IoError::MissingRole(_)
            | IoError::MalformedManifest(_)
            | IoError::EmptyReportSet
            | IoError::UnknownFormat(_)
            | IoError::Data(_) => CliError::Domain(e.to_string()),
            _ => CliError::File(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn write_file(path: &Path, content: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::File(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, content).map_err(|e| CliError::File(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::File(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(
    name = "cfeval",
    version,
    about = "Evaluate visual counterfactual explanations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score bundle directories and print a comparison table
    Evaluate(EvaluateArgs),
    /// Check that method rankings survive a change of normalization range
    Audit(AuditArgs),
    /// Generate synthetic bundles for the tiny, mid and prototype simulators
    Synth(SynthArgs),
    /// Paint class labels into images
    Fakemnist(FakemnistArgs),
    /// Render saved JSON reports
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValidityArg {
    ClassChange,
    TargetMatch,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JsBaseArg {
    Nat,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleArg {
    Agreement,
    TargetBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Md,
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Md => ReportFormat::Markdown,
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Bundle directory (repeatable)
    #[arg(long = "bundle", required = true)]
    pub bundles: Vec<PathBuf>,
    /// Comma-separated metrics, e.g. `en,tcv,im1,lvs:smile` (default: all available)
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "auto")]
    pub validity: ValidityArg,
    /// Score valid counterfactuals only (TCV always uses every sample)
    #[arg(long, overrides_with = "no_valid_only")]
    pub valid_only: bool,
    #[arg(long, overrides_with = "valid_only")]
    pub no_valid_only: bool,
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "nat")]
    pub js_base: JsBaseArg,
    #[arg(long, value_enum, default_value = "target-both")]
    pub oracle_mode: OracleArg,
    /// Directory for per-bundle reports (plus a combined table and ranking)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// JSON reports computed under the first normalization
    #[arg(long, num_args = 1.., required = true)]
    pub reports_a: Vec<PathBuf>,
    /// JSON reports of the same methods under the second normalization
    #[arg(long, num_args = 1.., required = true)]
    pub reports_b: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluation samples per bundle
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub markers: usize,
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, value_delimiter = ',', default_value = "tiny,mid,prototype")]
    pub methods: Vec<String>,
    /// Value range to express the bundles in, as LO,HI
    #[arg(long, default_value = "0,1", allow_hyphen_values = true, value_parser = parse_range)]
    pub range: (f64, f64),
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FakemnistArgs {
    /// Image tensor (NPY or CSV), one image per sample
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pixel range as LO,HI
    #[arg(long, default_value = "0,1", allow_hyphen_values = true, value_parser = parse_range)]
    pub range: (f64, f64),
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report files
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// List the K best and K worst samples of every per-sample metric
    #[arg(long)]
    pub per_sample_extremes: Option<usize>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad range low `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad range high `{hi}`"))?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(format!("range low must be below high, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Domain(format!("{THREADS_ENV} must be a count, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Domain(e.to_string()))
}

fn metric_config(args: &EvaluateArgs) -> MetricConfig {
    MetricConfig {
        epsilon: args.epsilon,
        js_log_base: match args.js_base {
            JsBaseArg::Nat => JsLogBase::Natural,
            JsBaseArg::Two => JsLogBase::Base2,
        },
        validity_mode: match args.validity {
            ValidityArg::Auto => ValidityPolicy::Auto,
            ValidityArg::ClassChange => ValidityPolicy::ClassChange,
            ValidityArg::TargetMatch => ValidityPolicy::TargetMatch,
        },
        oracle_mode: match args.oracle_mode {
            OracleArg::Agreement => OracleMode::Agreement,
            OracleArg::TargetBoth => OracleMode::TargetBoth,
        },
        ..MetricConfig::default()
    }
}

fn file_stem_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String, CliError> {
    let cfg = metric_config(args);
    let metrics = match &args.metrics {
        None => MetricSelection::Available,
        Some(list) if list.iter().any(|m| m.eq_ignore_ascii_case("all")) => {
            MetricSelection::Available
        }
        Some(list) => MetricSelection::Only(
            list.iter()
                .map(|m| MetricKind::parse(m))
                .collect::<Result<_, _>>()?,
        ),
    };
    let req = EvaluationRequest {
        metrics,
        valid_only: !args.no_valid_only,
        keep_per_sample: true,
    };

    let pool = thread_pool()?;
    let reports: Vec<MetricReport> = pool.install(|| {
        args.bundles
            .par_iter()
            .map(|dir| -> Result<MetricReport, CliError> {
                let loaded = io::load_bundle_with_warnings(dir)?;
                for w in &loaded.warnings {
                    log::warn!("{}: {w}", dir.display());
                }
                evaluate_bundle(&loaded.bundle, &cfg, &req)
                    .map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    if reports.windows(2).any(|w| w[0].config != w[1].config) {
        return Err(CliError::Domain(
            "bundles were scored under different metric configurations".into(),
        ));
    }
    let format: ReportFormat = args.format.into();
    if let Some(out) = &args.out {
        let mut seen = std::collections::BTreeSet::new();
        for r in &reports {
            let stem = file_stem_safe(&r.method_name);
            if !seen.insert(stem.clone()) {
                return Err(CliError::Domain(format!(
                    "two bundles share the method name `{}`",
                    r.method_name
                )));
            }
            let rendered = io::render_report(std::slice::from_ref(r), format)?;
            write_file(
                &out.join(format!("{stem}.{}", format.extension())),
                rendered.content.as_bytes(),
            )?;
        }
        if reports.len() >= 2 {
            let combined = io::render_report(&reports, format)?;
            write_file(
                &out.join(format!("combined.{}", format.extension())),
                combined.content.as_bytes(),
            )?;
            match rank_methods(&reports) {
                Ok(table) => {
                    let text = serde_json::to_string_pretty(&table)
                        .map_err(|e| CliError::Domain(e.to_string()))?
                        + "\n";
                    write_file(&out.join("ranking.json"), text.as_bytes())?;
                }
                Err(e) => log::warn!("no ranking written: {e}"),
            }
        }
    }
    Ok(io::render_report(&reports, format)?.content)
}

fn load_report_files(paths: &[PathBuf]) -> Result<Vec<MetricReport>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        let text = read_text(p)?;
        out.extend(
            io::parse_reports(&text)
                .map_err(|e| CliError::File(format!("{}: {e}", p.display())))?,
        );
    }
    Ok(out)
}

/// Returns the rendered diff and whether the audit passed.
pub fn cmd_audit(args: &AuditArgs) -> Result<(String, bool), CliError> {
    let a = load_report_files(&args.reports_a)?;
    let b = load_report_files(&args.reports_b)?;
    let audit = normalization_audit(&a, &b)?;
    Ok((audit.rendering.clone(), audit.passed()))
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String, CliError> {
    let spec = SyntheticSpec {
        n_per_class: args.n_per_class,
        dim: args.dim,
        classes: args.classes,
        marker_dims: args.markers,
        class_separation: args.separation,
        noise_sd: args.noise,
        seed: args.seed,
    };
    let methods: Vec<CfMethod> = args
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_, _>>()?;
    let world = gen_world(&spec)?;
    let pool = thread_pool()?;
    let bundles = pool.install(|| {
        methods
            .par_iter()
            .map(|&m| {
                build_bundle(&world, m, args.n, args.seed).map(|b| b.renormalized(args.range))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut summary = String::new();
    for b in &bundles {
        let dir = args.out.join(&b.method_name);
        io::save_bundle(b, &dir)?;
        summary.push_str(&format!("{}\n", dir.display()));
    }
    let provenance = serde_json::json!({
        "spec": spec,
        "n_eval": args.n,
        "methods": methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "normalization_range": [args.range.0, args.range.1],
    });
    let text = serde_json::to_string_pretty(&provenance)
        .map_err(|e| CliError::Domain(e.to_string()))?
        + "\n";
    write_file(&args.out.join("provenance.json"), text.as_bytes())?;
    Ok(summary)
}

pub fn cmd_fakemnist(args: &FakemnistArgs) -> Result<String, CliError> {
    let images = io::read_tensor(&args.images)?;
    let out = make_fakemnist(
        &images,
        args.height,
        args.width,
        args.classes,
        args.range,
        args.seed,
    )?;
    for w in &out.warnings {
        log::warn!("{w}");
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::File(format!("{}: {e}", args.out.display())))?;
    let images_path = args.out.join("images.npy");
    let labels_path = args.out.join("labels.csv");
    io::write_tensor(&out.images, &images_path, TensorFormat::Npy)?;
    io::write_labels(&out.labels, &labels_path, TensorFormat::Csv)?;
    Ok(format!(
        "{}\n{}\n",
        images_path.display(),
        labels_path.display()
    ))
}

pub fn cmd_report(args: &ReportArgs) -> Result<String, CliError> {
    let reports = load_report_files(&args.inputs)?;
    let mut content = io::render_report(&reports, args.format.into())?.content;
    if let Some(k) = args.per_sample_extremes {
        if args.format == FormatArg::Md {
            content.push('\n');
            content.push_str(&io::render_extremes(&reports, k));
        } else {
            log::warn!("--per-sample-extremes is only rendered in markdown output");
        }
    }
    if let Some(out) = &args.out {
        write_file(out, content.as_bytes())?;
        return Ok(String::new());
    }
    Ok(content)
}

/// Parses `argv` and runs one command; returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = e.print();
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Evaluate(a) => cmd_evaluate(a).map(|s| (s, true)),
        Command::Audit(a) => cmd_audit(a),
        Command::Synth(a) => cmd_synth(a).map(|s| (s, true)),
        Command::Fakemnist(a) => cmd_fakemnist(a).map(|s| (s, true)),
        Command::Report(a) => cmd_report(a).map(|s| (s, true)),
    };
    match result {
        Ok((text, ok)) => {
            if stdout.write_all(text.as_bytes()).is_err() {
                return EXIT_FILE;
            }
            if ok {
                EXIT_OK
            } else {
                EXIT_DOMAIN
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
