//! `idde`: batch front end for the correlation-integral pipeline.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 I/O error.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use idde::report::DatasetSummary;
use idde::{
    AnalyzeOptions, CorrelationCurve64, CsvOptions, Dataset64, Generator, InversionMode,
    MultiscaleOptions, PairOptions, ScaleRange, WindowConfig, DEFAULT_PAIR_BUDGET,
};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "idde", version, about = "Intrinsic dimension and entropy from coincidence counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as headerless CSV.
    Generate(GenerateArgs),
    /// Compute the log-log coincidence curve of a dataset.
    Curve(CurveArgs),
    /// Fit a line to a curve over a scale range, optionally compensating the bias.
    Fit(FitArgs),
    /// Print predicted apparent IDs for a range of true IDs.
    BiasTable(BiasTableArgs),
    /// Slide a window along a curve and report slope plateaus.
    Scan(ScanArgs),
    /// Run the whole pipeline on a dataset and print a report.
    Analyze(AnalyzeArgs),
    /// Run the HTTP/JSON analysis service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Circle,
    Sinusoid,
    Hypercube,
    Segment,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Intrinsic dimension (hypercube).
    #[arg(long, short = 'd', default_value_t = 1)]
    dim: usize,
    /// Ambient dimension (hypercube); defaults to the intrinsic dimension.
    #[arg(long = "ambient", short = 'D')]
    ambient: Option<usize>,
    /// Apply a random rotation (hypercube).
    #[arg(long)]
    rotate: bool,
    /// Comma-separated direction vector (segment).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    direction: Option<Vec<f64>>,
    /// Uniform noise amplitude (segment).
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Output path; stdout when absent.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV, one observation per row (`-` for stdin).
    input: PathBuf,
    /// Embed a one-column series into windows of this width.
    #[arg(long)]
    window: Option<usize>,
    /// Sliding-window stride; disjoint windows when absent.
    #[arg(long, requires = "window")]
    stride: Option<usize>,
    /// The first row is a header.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Comma-separated zero-based columns to keep.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<usize>>,
    /// Largest number of pairs computed exactly.
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pair_budget: usize,
    /// Seed for the pair subsample used beyond the pair budget.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Resample to this many log-uniform points.
    #[arg(long)]
    resample: Option<usize>,
    /// Write the curve here and print its metadata to stdout.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    /// Emit `log2_r,log2_C` CSV instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Curve file written by `idde curve` (CSV or JSON).
    curve: PathBuf,
    /// Scale range `LO:HI` in log2 r.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    range: ScaleRange<f64>,
    /// Fix the slope and fit only the offset.
    #[arg(long)]
    d_override: Option<f64>,
    /// Observation count; read from a JSON curve when absent.
    #[arg(long)]
    n: Option<u64>,
    /// Invert the apparent ID and subtract the predicted DE bias.
    #[arg(long)]
    compensate: bool,
    #[arg(long, value_enum, default_value_t = Mode::Integer)]
    mode: Mode,
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct BiasTableArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    d_min: u32,
    #[arg(long)]
    d_max: u32,
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct MultiscaleArgs {
    /// Ignore curve points backed by fewer coincidences.
    #[arg(long)]
    min_pairs: Option<usize>,
    /// Points to resample the floored curve to before scanning (0 keeps it raw).
    #[arg(long)]
    resample: Option<usize>,
    /// Window width as a fraction of the curve span.
    #[arg(long)]
    window_fraction: Option<f64>,
    /// Stride as a fraction of the window width.
    #[arg(long)]
    stride_fraction: Option<f64>,
    /// Relative slope spread allowed within a plateau.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    min_windows: Option<usize>,
}

impl MultiscaleArgs {
    fn options(&self) -> MultiscaleOptions<f64> {
        let mut o = MultiscaleOptions::default();
        if let Some(v) = self.min_pairs {
            o.min_pairs = v;
        }
        if let Some(v) = self.resample {
            o.resample = (v > 0).then_some(v);
        }
        if let Some(v) = self.window_fraction {
            o.window_fraction = v;
        }
        if let Some(v) = self.stride_fraction {
            o.stride_fraction = v;
        }
        if let Some(v) = self.tolerance {
            o.plateau.tolerance = v;
        }
        if let Some(v) = self.min_windows {
            o.plateau.min_windows = v;
        }
        o
    }
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Curve file written by `idde curve` (CSV or JSON).
    curve: PathBuf,
    #[command(flatten)]
    multiscale: MultiscaleArgs,
    /// Emit the per-window fits as CSV.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fit range `LO:HI`; repeatable. Plateaus are detected when absent.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    range: Vec<ScaleRange<f64>>,
    #[arg(long)]
    d_override: Option<f64>,
    /// Sample count for compensation; defaults to the dataset size.
    #[arg(long)]
    n: Option<u64>,
    /// Skip bias compensation.
    #[arg(long)]
    no_compensate: bool,
    #[arg(long, value_enum, default_value_t = Mode::Integer)]
    mode: Mode,
    #[command(flatten)]
    multiscale: MultiscaleArgs,
    /// Also write the raw curve CSV here.
    #[arg(long)]
    curve_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Persist uploads as CSV here and reload them on startup.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Serve static UI assets from this directory.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pair_budget: usize,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Integer,
    Continuous,
}

impl From<Mode> for InversionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Integer => InversionMode::Integer,
            Mode::Continuous => InversionMode::Continuous,
        }
    }
}

fn parse_range(s: &str) -> Result<ScaleRange<f64>, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound {hi:?}"))?;
    ScaleRange::new(lo, hi).map_err(|e| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Io(String),
    /// Downstream reader went away, e.g. `| head`.
    Pipe,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Io(_) => 4,
            Failure::Pipe => 0,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Io(m) => f.write_str(m),
            Failure::Pipe => f.write_str("broken pipe"),
        }
    }
}

impl From<idde::Error> for Failure {
    fn from(e: idde::Error) -> Self {
        match e {
            idde::Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            idde::Error::Io(e) => e.into(),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure::Pipe;
        }
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            io::Error::from(e).into()
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Pipe) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Generate(a) => cmd_generate(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Fit(a) => cmd_fit(a),
        Command::BiasTable(a) => cmd_bias_table(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

fn open_input(path: &Path) -> CliResult<Box<dyn Read>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin().lock()));
    }
    File::open(path)
        .map(|f| Box::new(io::BufReader::new(f)) as Box<dyn Read>)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> CliResult {
    let g = match a.kind {
        Kind::Circle => Generator::Circle { n: a.n, seed: a.seed },
        Kind::Sinusoid => Generator::Sinusoid { n: a.n, seed: a.seed },
        Kind::Hypercube => Generator::Hypercube {
            n: a.n,
            d: a.dim,
            ambient: a.ambient.unwrap_or(a.dim),
            seed: a.seed,
            rotate: a.rotate,
        },
        Kind::Segment => Generator::Segment {
            n: a.n,
            seed: a.seed,
            direction: a
                .direction
                .unwrap_or_else(|| idde::EXAMPLE_SEGMENT_DIRECTION.to_vec()),
            noise: a.noise,
        },
    };
    let ds: Dataset64 = g.generate()?;
    let mut out = open_output(a.out.as_deref())?;
    ds.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

impl DataArgs {
    fn csv_options(&self) -> CliResult<CsvOptions> {
        if !self.delimiter.is_ascii() {
            return Err(Failure::Usage(format!("delimiter {:?} is not ASCII", self.delimiter)));
        }
        Ok(CsvOptions {
            delimiter: self.delimiter as u8,
            has_header: self.header,
            columns: self.columns.clone(),
        })
    }

    fn load(&self) -> CliResult<Dataset64> {
        let opts = self.csv_options()?;
        let input = open_input(&self.input)?;
        match self.window {
            None => Ok(idde::load_csv(input, &opts)?),
            Some(w) => {
                let series = idde::load_series::<f64, _>(input, &opts)?;
                let cfg = match self.stride {
                    Some(s) => WindowConfig::sliding(w, s),
                    None => WindowConfig::disjoint(w),
                };
                Ok(idde::window_series(&series, &cfg)?)
            }
        }
    }

    fn pair_options(&self) -> PairOptions {
        PairOptions {
            threads: self.threads,
            pair_budget: self.pair_budget,
            subsample_seed: self.seed,
        }
    }

    fn source(&self) -> String {
        match self.window {
            Some(w) => format!("{} (window {w})", self.input.display()),
            None => self.input.display().to_string(),
        }
    }
}

fn cmd_curve(a: CurveArgs) -> CliResult {
    let ds = a.data.load()?;
    let profile = idde::pairwise_radii_with(&ds, &a.data.pair_options())?;
    let curve = idde::curve(&profile, a.resample)?;
    let meta = json!({
        "n": curve.n,
        "d_ambient": ds.dim(),
        "lr": curve.lr,
        "duplicate_pairs": curve.zero_pairs,
        "subsampled": profile.is_subsampled(),
        "points": curve.len(),
    });
    let mut out = open_output(a.out.as_deref())?;
    if a.csv {
        curve.write_csv(&mut out)?;
    } else {
        out.write_all(curve.to_json()?.as_bytes())?;
        writeln!(out)?;
    }
    out.flush()?;
    drop(out);
    if a.out.is_some() {
        print_json(&meta)?;
    } else {
        eprintln!("{meta}");
    }
    Ok(())
}

/// Reads a curve file as JSON when it starts with `{`, otherwise as CSV.
fn read_curve(path: &Path, n: Option<u64>) -> CliResult<CorrelationCurve64> {
    let mut text = String::new();
    open_input(path)?.read_to_string(&mut text)?;
    if text.trim_start().starts_with('{') {
        Ok(CorrelationCurve64::from_json(&text)?)
    } else {
        let n = n.unwrap_or(0) as usize;
        let lr = if n >= 2 { idde::pair_count(n) } else { 0 };
        Ok(CorrelationCurve64::read_csv(text.as_bytes(), n, lr)?)
    }
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let curve = read_curve(&a.curve, a.n)?;
    let fit = idde::fit_segment(&curve, &a.range, a.d_override)?;
    let mut compensation = None;
    let mut table = None;
    if a.compensate {
        let n = a
            .n
            .or((curve.n >= 2).then_some(curve.n as u64))
            .ok_or_else(|| Failure::Usage("--compensate needs --n for a CSV curve".into()))?;
        let c = idde::compensate_estimate(n, fit.d_hat, fit.h_hat, a.mode.into())?;
        let centre = c.d_bar.round().max(1.0) as u32;
        table = Some(idde::bias_table::<f64>(n, centre.saturating_sub(2).max(1), centre + 2)?);
        compensation = Some(c);
    }
    if a.csv {
        let mut out = io::stdout().lock();
        writeln!(out, "log2_r_min,log2_r_max,n_points,d_hat,h_hat,rms_residual,d_bar,delta_h,h_bar")?;
        let (d_bar, delta_h, h_bar) = match &compensation {
            Some(c) => (c.d_bar.to_string(), c.delta_h.to_string(), c.h_bar.to_string()),
            None => Default::default(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{d_bar},{delta_h},{h_bar}",
            fit.range.log2_r_min, fit.range.log2_r_max, fit.n_points, fit.d_hat, fit.h_hat, fit.rms_residual
        )?;
        return Ok(());
    }
    print_json(&json!({
        "fit": fit,
        "compensation": compensation,
        "table": table,
    }))
}

fn cmd_bias_table(a: BiasTableArgs) -> CliResult {
    let t = idde::bias_table::<f64>(a.n, a.d_min, a.d_max)?;
    if a.csv {
        let mut out = io::stdout().lock();
        t.write_csv(&mut out)?;
        Ok(())
    } else {
        print_json(&t)
    }
}

fn cmd_scan(a: ScanArgs) -> CliResult {
    let curve = read_curve(&a.curve, None)?;
    let ms = idde::analyze_multiscale(&curve, &a.multiscale.options())?;
    if a.csv {
        let mut out = io::stdout().lock();
        writeln!(out, "log2_r_min,log2_r_max,n_points,d_hat,h_hat,rms_residual")?;
        for f in &ms.scan {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                f.range.log2_r_min, f.range.log2_r_max, f.n_points, f.d_hat, f.h_hat, f.rms_residual
            )?;
        }
        return Ok(());
    }
    print_json(&json!({
        "window_width": ms.window_width,
        "stride": ms.stride,
        "scan": ms.scan,
        "plateaus": ms.plateaus,
        "fine": ms.fine(),
        "coarse": ms.coarse(),
    }))
}

fn cmd_analyze(a: AnalyzeArgs) -> CliResult {
    let ds = a.data.load()?;
    let profile = idde::pairwise_radii_with(&ds, &a.data.pair_options())?;
    let curve = idde::curve(&profile, None)?;
    if let Some(path) = &a.curve_out {
        let mut out = open_output(Some(path))?;
        curve.write_csv(&mut out)?;
        out.flush()?;
    }
    let opts = AnalyzeOptions {
        ranges: a.range.clone(),
        d_override: a.d_override,
        compensate: !a.no_compensate,
        mode: a.mode.into(),
        n: a.n,
        multiscale: a.multiscale.options(),
    };
    let summary = DatasetSummary {
        n: ds.n(),
        d_ambient: ds.dim(),
        source: a.data.source(),
    };
    let mut report = idde::analyze(&curve, summary, &opts)?;
    report.curve.subsampled = profile.is_subsampled();
    report.curve.path = a.curve_out.as_ref().map(|p| p.display().to_string());
    print_json(&report)
}

fn cmd_serve(a: ServeArgs) -> CliResult {
    let config = idde_service::ServiceConfig {
        pair_budget: a.pair_budget,
        threads: a.threads,
        data_dir: a.data_dir,
        static_dir: a.static_dir,
        ..Default::default()
    };
    let addr: std::net::SocketAddr = a
        .bind
        .parse()
        .map_err(|e| Failure::Usage(format!("invalid bind address {:?}: {e}", a.bind)))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::Io(format!("cannot bind {addr}: {e}")))?;
        let state = idde_service::AppState::new(config);
        let loaded = state.load_data_dir().map_err(|e| Failure::Io(e.to_string()))?;
        eprintln!("listening on http://{} ({loaded} datasets loaded)", listener.local_addr()?);
        idde_service::serve_on(listener, state)
            .await
            .map_err(|e| Failure::Io(e.to_string()))
    })
}
