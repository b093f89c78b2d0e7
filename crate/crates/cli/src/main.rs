//! Command-line front end: `analyze`, `simulate` and `moments`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ellipform::elliptical::{sample_independent_columns, sample_matrix_elliptical, MatrixEllipticalSpec};
use ellipform::linalg::{from_rows, to_rows};
use ellipform::moments::{moments_b, Dependence, ModelMoments};
use ellipform::pipeline::{
    emit_report_to, load_dataset, run_analysis, to_csv, to_json, AnalysisConfig, DataFormat, LandmarkSample,
};
use ellipform::{EllipticalModel, Error, ErrorCategory, Mat};

/// Environment variable that overrides the configured output directory.
const OUT_DIR_ENV: &str = "ELLIPFORM_OUT_DIR";

#[derive(Parser)]
#[command(name = "ellipform", version, about = "Moment-based landmark form analysis under elliptical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full analysis on a dataset and write the report.
    Analyze {
        /// Dataset, `.json` or `.csv`.
        #[arg(long)]
        data: PathBuf,
        /// Analysis config, `.json` or `.toml`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides the config and the environment.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root seed; overrides `bootstrap.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Include per-entry diagnostics and iteration traces.
        #[arg(long)]
        verbose: bool,
    },
    /// Draw a sample of landmark matrices and write it as a dataset.
    Simulate {
        /// Model, e.g. `gaussian`, `kotz:N=2,r=0.5,s=1`, `t:m=8`.
        #[arg(long)]
        model: EllipticalModel,
        /// Mean, `K x D` JSON array of rows.
        #[arg(long)]
        mu: PathBuf,
        /// Row covariance, `K x K` JSON array of rows.
        #[arg(long = "sigmaK", alias = "sigma-k")]
        sigma_k: PathBuf,
        /// Column covariance, `D x D` JSON array of rows (identity if absent).
        #[arg(long = "sigmaD", alias = "sigma-d")]
        sigma_d: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset, `.json` or `.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "simulated")]
        group: String,
        /// Draw independent elliptical columns (diagonal column covariance).
        #[arg(long)]
        independent: bool,
    },
    /// Print the analytic mean and covariance of the Gram matrix as JSON.
    Moments {
        #[arg(long)]
        model: EllipticalModel,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long = "sigmaK", alias = "sigma-k")]
        sigma_k: PathBuf,
        #[arg(long = "sigmaD", alias = "sigma-d")]
        sigma_d: PathBuf,
        /// Independent elliptical columns instead of one matrix law.
        #[arg(long)]
        independent: bool,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_for(e.category()),
            message: e.to_string(),
        }
    }
}

fn code_for(c: ErrorCategory) -> u8 {
    match c {
        ErrorCategory::Usage => 1,
        ErrorCategory::Data => 2,
        ErrorCategory::Numeric => 3,
    }
}

fn read_matrix(path: &Path) -> Result<Mat, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: expected a JSON array of rows: {e}", path.display())))?;
    Ok(from_rows(&rows, 0).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?)
}

fn analyze(
    data: &Path,
    config: Option<&Path>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    verbose: bool,
) -> Result<u8, Failure> {
    let mut cfg = match config {
        Some(p) => AnalysisConfig::load(p)?,
        None => AnalysisConfig::default(),
    };
    if let Some(s) = seed {
        cfg.bootstrap.seed = s;
    }
    cfg.verbose |= verbose;
    if let Some(dir) = out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)) {
        cfg.output.dir = dir;
    }
    let groups = load_dataset(data, DataFormat::from_path(data))?;
    let report = run_analysis(&groups, &cfg);
    let written = emit_report_to(&report, &cfg, &cfg.output.dir)?;

    for g in &report.groups {
        let ff = g
            .flipflop
            .as_ref()
            .map(|f| format!(", flip-flop {} iterations", f.iterations))
            .unwrap_or_default();
        println!("group {}: n = {}{}", g.name, g.n, ff);
    }
    for c in &report.comparisons {
        println!(
            "{} vs {}: T = {:.6}, p = {:.4} ({} replicates, {} failed)",
            c.x, c.y, c.result.t_obs, c.result.p_value, c.result.boot_size, c.result.n_failed
        );
    }
    if let Some(sel) = &report.selection {
        if let Some(best) = sel.best_model() {
            println!("smallest CV: {best}");
        }
    }
    println!("wrote {} files to {}", written.len(), cfg.output.dir.display());
    for e in &report.errors {
        eprintln!("stage {} failed ({:?}): {}", e.stage, e.category, e.message);
    }
    Ok(report.worst_category().map_or(0, code_for))
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    model: EllipticalModel,
    mu: &Path,
    sigma_k: &Path,
    sigma_d: Option<&Path>,
    n: usize,
    seed: u64,
    out: &Path,
    group: String,
    independent: bool,
) -> Result<u8, Failure> {
    let mu = read_matrix(mu)?;
    let sigma_k = read_matrix(sigma_k)?;
    let sigma_d = match sigma_d {
        Some(p) => read_matrix(p)?,
        None => Mat::identity(mu.ncols(), mu.ncols()),
    };
    let spec = MatrixEllipticalSpec::new(mu, sigma_k, sigma_d, model);
    let specimens = if independent {
        sample_independent_columns(&spec, n, seed)?
    } else {
        sample_matrix_elliptical(&spec, n, seed)?
    };
    let groups = [LandmarkSample { name: group, specimens }];
    let text = match DataFormat::from_path(out) {
        DataFormat::Json => to_json(&groups),
        DataFormat::Csv => to_csv(&groups)?,
    };
    std::fs::write(out, text).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    Ok(0)
}

fn moments(model: EllipticalModel, mu: &Path, sigma_k: &Path, sigma_d: &Path, independent: bool) -> Result<u8, Failure> {
    let spec = MatrixEllipticalSpec::new(read_matrix(mu)?, read_matrix(sigma_k)?, read_matrix(sigma_d)?, model);
    let (constants, dep) = if independent {
        (spec.column_moment_constants()?, Dependence::Independent)
    } else {
        (spec.moment_constants()?, Dependence::Dependent)
    };
    let m = ModelMoments::new(spec.mu.clone(), spec.sigma_k.clone(), spec.sigma_d.clone(), constants)?;
    let pair = moments_b(&m, dep)?;
    let json = serde_json::json!({
        "model": model,
        "c0": constants.c0,
        "kappa0": constants.kappa0,
        "expected_b": to_rows(&pair.expected_b),
        "cov_vec_b": to_rows(&pair.cov_vec_b),
    });
    // a closed pipe (e.g. `| head`) is not an error worth a panic
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&json).expect("plain JSON"));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Analyze {
            data,
            config,
            out,
            seed,
            verbose,
        } => analyze(&data, config.as_deref(), out, seed, verbose),
        Command::Simulate {
            model,
            mu,
            sigma_k,
            sigma_d,
            n,
            seed,
            out,
            group,
            independent,
        } => simulate(model, &mu, &sigma_k, sigma_d.as_deref(), n, seed, &out, group, independent),
        Command::Moments {
            model,
            mu,
            sigma_k,
            sigma_d,
            independent,
        } => moments(model, &mu, &sigma_k, &sigma_d, independent),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
