use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sdrkit::data::{load_csv, ResponseColumn};
use sdrkit::error::{Error, Result};
use sdrkit::estimate::{fit_directions, Method};
use sdrkit::harness::report::{cell, write_report, CsvTable};
use sdrkit::harness::{run_proxy_scan, run_rate_experiment, run_realdata_benchmark, synth_dataset, BenchConfig, Link, ProxyScanConfig, RateConfig, SyntheticSpec};
use sdrkit::metrics::{projection_error, rmse};
use sdrkit::numkit::{matrix_from_rows, matrix_to_rows, projector_from_basis, EigenDecomposition, SymMatrix, DEFAULT_RTOL};
use sdrkit::proxy::proxy_scan;
use sdrkit::rcls::suggest_dim;
use sdrkit::regress::{KnnDocument, KnnModel, PiecewiseDocument, PiecewisePolyModel, Truncation};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "sdrkit", version, about = "Index-space estimation and link regression for multi-index models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic data set and write it with its true basis.
    Synth(SynthArgs),
    /// Fit one estimator on a CSV and write the model document.
    Estimate(EstimateArgs),
    /// Scan the error proxy over J, on a CSV or as a seeded experiment.
    Proxy(ProxyArgs),
    /// Run a rate experiment from a JSON config.
    Rates(ConfigArgs),
    /// Run the cross-validated benchmark from a JSON config.
    Bench(ConfigArgs),
    /// Fit or apply a link regressor.
    #[command(subcommand)]
    Regress(RegressCommand),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    link: String,
    #[arg(long = "ambient-dim", short = 'D', default_value_t = 20)]
    ambient_dim: usize,
    #[arg(long, short = 'n')]
    samples: usize,
    #[arg(long, default_value_t = 0.01)]
    noise_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `<out>` with extension `basis.json`.
    #[arg(long)]
    basis_out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Response column: a name or a signed index (`-1` is the last column).
    #[arg(long, default_value = "-1", allow_hyphen_values = true)]
    response: ResponseColumn,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "rcls")]
    method: Method,
    #[arg(long = "levels", short = 'J', default_value_t = 10)]
    levels: usize,
    /// Chosen from the largest spectral gap when omitted.
    #[arg(long)]
    d_tilde: Option<usize>,
    /// JSON with a `basis` field, as written by `synth`.
    #[arg(long)]
    true_basis: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RTOL)]
    rtol: f64,
    /// Written to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProxyArgs {
    /// Experiment config; excludes the CSV options.
    #[arg(long, conflicts_with_all = ["data", "levels", "d_tilde", "out"])]
    config: Option<PathBuf>,
    #[arg(long, requires = "config")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "-1", allow_hyphen_values = true)]
    response: ResponseColumn,
    /// Grid such as `2..40` or `2,4,8`.
    #[arg(long = "levels", short = 'J', default_value = "2..40")]
    levels: String,
    #[arg(long)]
    d_tilde: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RTOL)]
    rtol: f64,
    /// Written to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegressorKind {
    Knn,
    Piecewise,
}

#[derive(Subcommand)]
enum RegressCommand {
    /// Fit kNN or a piecewise polynomial on projected predictors.
    Fit(RegressFitArgs),
    /// Predict a CSV with a fitted regressor and report the RMSE.
    Predict(RegressPredictArgs),
}

#[derive(Args)]
struct RegressFitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    kind: RegressorKind,
    /// JSON with a `basis` field (model document or synth basis); identity
    /// for kNN when omitted.
    #[arg(long)]
    basis: Option<PathBuf>,
    #[arg(long, short = 'k', default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    level: u32,
    #[arg(long, default_value_t = 1)]
    degree: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Truncation bounds; `[min Y, max Y]` of the training data by default.
    #[arg(long, allow_hyphen_values = true)]
    trunc_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    trunc_hi: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RegressPredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RegressDocument {
    Knn {
        response: ResponseColumn,
        #[serde(flatten)]
        model: KnnDocument,
    },
    Piecewise(PiecewiseDocument),
}

#[derive(Serialize)]
struct BasisDocument<'a> {
    link: &'a str,
    d: usize,
    #[serde(rename = "D")]
    ambient_dim: usize,
    basis: Vec<Vec<f64>>,
}

/// `a..b` (inclusive) and comma-separated values, combined freely.
fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidInput(format!("cannot parse grid `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_basis(path: &Path) -> Result<nalgebra::DMatrix<f64>> {
    #[derive(Deserialize)]
    struct WithBasis {
        basis: Vec<Vec<f64>>,
    }
    matrix_from_rows(&read_json::<WithBasis>(path)?.basis)
}

fn write_or_print(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

fn resolve_relative(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let link: Link = a.link.parse()?;
    let spec = SyntheticSpec::new(link, a.ambient_dim, a.samples, a.noise_ratio, a.seed)?;
    let (ds, basis) = synth_dataset(&spec)?;
    ds.save_csv(&a.out)?;
    let basis_out = a.basis_out.unwrap_or_else(|| a.out.with_extension("basis.json"));
    let doc = BasisDocument {
        link: link.id(),
        d: spec.d,
        ambient_dim: spec.ambient_dim,
        basis: matrix_to_rows(&basis),
    };
    fs::write(&basis_out, serde_json::to_string_pretty(&doc)?)?;
    eprintln!("wrote {} and {}", a.out.display(), basis_out.display());
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let ds = load_csv(&a.data.data, &a.data.response)?;
    let dirs = fit_directions(&ds, a.method, a.levels, a.rtol)?;
    let d_tilde = match a.d_tilde {
        Some(d) => d,
        None => {
            let mut mags: Vec<f64> = dirs.eigenvalues.iter().map(|v| v.abs()).collect();
            mags.sort_by(|x, y| y.total_cmp(x));
            let spectrum = EigenDecomposition {
                eigenvalues: nalgebra::DVector::from_vec(mags),
                eigenvectors: dirs.vectors.clone(),
            };
            suggest_dim(&spectrum).max(1)
        }
    };
    let est = dirs.estimate(d_tilde)?;
    let mut doc = est.to_document();
    if let Some(path) = &a.true_basis {
        let truth = projector_from_basis(&read_basis(path)?)?;
        doc.error = Some(projection_error(&est.projector, &truth)?);
    }
    for w in &doc.warnings {
        eprintln!("warning: {w}");
    }
    write_or_print(a.out.as_deref(), serde_json::to_string_pretty(&doc)?.as_bytes())
}

const PROXY_CSV_COLUMNS: [&str; 5] = ["J", "proxy", "proxy_logfactor", "gamma_hat", "n_included_levels"];

fn cmd_proxy(a: ProxyArgs) -> Result<()> {
    if let Some(config) = &a.config {
        let cfg: ProxyScanConfig = read_json(config)?;
        let out_dir = a.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        let report = run_proxy_scan(&cfg)?;
        let (scan, rho) = (report.table(), report.spearman_table());
        write_report(&out_dir, "proxy", &cfg, &[("proxy_scan", &scan), ("proxy_spearman", &rho)])?;
        eprintln!("spearman proxy = {:.4}, logfactor = {:.4}", report.spearman_proxy, report.spearman_proxy_logfactor);
        return Ok(());
    }
    let data = a.data.as_ref().ok_or_else(|| Error::InvalidInput("either --config or --data is required".into()))?;
    let ds = load_csv(data, &a.response)?;
    let grid = parse_grid(&a.levels)?;
    let d_tilde = a.d_tilde.ok_or_else(|| Error::InvalidInput("--d-tilde is required with --data".into()))?;
    let reports = proxy_scan(&ds, &grid, d_tilde, a.rtol)?;
    let mut t = CsvTable::new(&PROXY_CSV_COLUMNS);
    for r in &reports {
        t.push(vec![
            r.levels.to_string(),
            cell(r.proxy_value),
            cell(r.proxy_value_logfactor),
            cell(r.gamma_hat),
            r.n_included().to_string(),
        ]);
    }
    write_or_print(a.out.as_deref(), &t.to_bytes()?)
}

fn cmd_rates(a: ConfigArgs) -> Result<()> {
    let cfg: RateConfig = read_json(&a.config)?;
    let report = run_rate_experiment(&cfg)?;
    let (t, raw) = (report.table(), report.raw_table());
    write_report(&a.out_dir, "rates", &cfg, &[("rates", &t), ("rates_raw", &raw)])?;
    for ((m, link), s) in &report.slopes {
        eprintln!("{m} on {link}: slope {s:.3}");
    }
    Ok(())
}

fn cmd_bench(a: ConfigArgs) -> Result<()> {
    let mut cfg: BenchConfig = read_json(&a.config)?;
    cfg.data = resolve_relative(&a.config, &cfg.data);
    let report = run_realdata_benchmark(&cfg)?;
    let (t, raw) = (report.table(), report.raw_table());
    write_report(&a.out_dir, "bench", &cfg, &[("bench", &t), ("bench_raw", &raw)])?;
    for r in &report.rows {
        eprintln!("{:>8}: rmse {:.4} ± {:.4}", r.estimator, r.rmse_mean, r.rmse_std);
    }
    Ok(())
}

fn cmd_regress_fit(a: RegressFitArgs) -> Result<()> {
    let ds = load_csv(&a.data.data, &a.data.response)?;
    let basis = a.basis.as_deref().map(read_basis).transpose()?;
    let doc = match a.kind {
        RegressorKind::Knn => {
            let projector = match &basis {
                Some(b) => projector_from_basis(b)?,
                None => SymMatrix::identity(ds.dim()),
            };
            let model = KnnModel::new(&ds, projector, a.k)?;
            let train_path = fs::canonicalize(&a.data.data)?.display().to_string();
            RegressDocument::Knn {
                response: a.data.response.clone(),
                model: model.to_document(Some(train_path)),
            }
        }
        RegressorKind::Piecewise => {
            let basis = basis.ok_or_else(|| Error::InvalidInput("piecewise regression needs --basis".into()))?;
            let default = Truncation::from_responses(ds.y());
            let truncation = Truncation::new(a.trunc_lo.unwrap_or(default.lo), a.trunc_hi.unwrap_or(default.hi))?;
            let model = PiecewisePolyModel::fit(&ds, &basis, a.level, a.degree, a.radius, truncation)?;
            eprintln!("{} occupied cells", model.num_cells());
            RegressDocument::Piecewise(model.to_document())
        }
    };
    fs::write(&a.out, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn cmd_regress_predict(a: RegressPredictArgs) -> Result<()> {
    let ds = load_csv(&a.data.data, &a.data.response)?;
    let preds = match read_json::<RegressDocument>(&a.model)? {
        RegressDocument::Knn { response, model } => {
            let path = model.train_path.clone().ok_or_else(|| Error::Config("kNN model has no training data path".into()))?;
            let train = load_csv(&path, &response)?;
            let projector = SymMatrix::new(matrix_from_rows(&model.projector)?)?;
            KnnModel::new(&train, projector, model.k)?.predict_batch(ds.x())
        }
        RegressDocument::Piecewise(doc) => PiecewisePolyModel::from_document(&doc)?.predict_batch(ds.x()),
    };
    let truth: Vec<f64> = ds.y().iter().copied().collect();
    eprintln!("rmse {}", rmse(&preds, &truth)?);
    let mut t = CsvTable::new(&["row", "prediction"]);
    for (i, p) in preds.iter().enumerate() {
        t.push(vec![i.to_string(), cell(*p)]);
    }
    write_or_print(a.out.as_deref(), &t.to_bytes()?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Proxy(a) => cmd_proxy(a),
        Command::Rates(a) => cmd_rates(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Regress(RegressCommand::Fit(a)) => cmd_regress_fit(a),
        Command::Regress(RegressCommand::Predict(a)) => cmd_regress_predict(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = run(cli);
    eprintln!("elapsed {:.2?}", start.elapsed());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!(parse_grid("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_grid("1, 3,7").unwrap(), vec![1, 3, 7]);
        assert_eq!(parse_grid("1..2,10").unwrap(), vec![1, 2, 10]);
        assert!(parse_grid("5..2").is_err());
        assert!(parse_grid("").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
