//! Experiment driver: problem generation, preconditioned solves, bound
//! computation, estimator replays, and table/plot-data emission.

use crate::bounds::{BoundReport, Spectrum};
use crate::error::{Error, Result};
use crate::estimator::{final_report, EstimatorConfig, EstimatorState};
use crate::krylov::{
    pcg, ritz_values, write_trace_csv, CGTrace, Preconditioner, StopMode, StopRule,
};
use crate::linalg::{
    dense_sym_eigen, dense_sym_eigenvalues, read_spectrum, write_matrix_market, write_spectrum,
    write_vector, SparseMatrix, DEFAULT_ORACLE_CAP,
};
use crate::partition::bound_report;
use crate::problem::{
    assemble, build_coefficient_field, CoefficientField, DiscreteProblem, GridSpec,
    InclusionPattern, ProblemData,
};
use crate::schwarz::{decompose, CoarseKind, SchwarzPreconditioner};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Largest n for which the A-norm-error stop mode will compute a direct
/// reference solution.
pub const DIRECT_SOLVE_CAP: usize = 4500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    #[default]
    Residual,
    Anorm,
}

impl ModeArg {
    pub fn stop_mode(self) -> StopMode {
        match self {
            ModeArg::Residual => StopMode::Residual,
            ModeArg::Anorm => StopMode::ANormError,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSettings {
    pub eta: usize,
    pub tau: f64,
    pub i_max: usize,
    pub run_fraction: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self { eta: 5, tau: 0.1, i_max: 300, run_fraction: 0.5 }
    }
}

/// One experiment cell: problem + preconditioner + solver settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subdomains_per_side: usize,
    pub elements_per_subdomain: usize,
    #[serde(default = "default_background")]
    pub background: f64,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default)]
    pub pattern: Option<InclusionPattern>,
    #[serde(default = "default_delta")]
    pub delta_layers: usize,
    #[serde(default = "default_coarse")]
    pub coarse: CoarseKind,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub mode: ModeArg,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default = "default_oracle_cap")]
    pub oracle_cap: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_background() -> f64 {
    1.0
}
fn default_contrast() -> f64 {
    1e8
}
fn default_delta() -> usize {
    2
}
fn default_coarse() -> CoarseKind {
    CoarseKind::Gdsw
}
fn default_eps() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    50_000
}
fn default_oracle_cap() -> usize {
    DEFAULT_ORACLE_CAP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub cells: Vec<ExperimentConfig>,
}

/// One table row per (H, coarse space) cell. Wall time lives only in the
/// JSON artifact so that CSV outputs are byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub h: String,
    pub coarse: String,
    pub n: usize,
    pub converged: bool,
    pub m: usize,
    pub m1: usize,
    pub ms_convergence: usize,
    pub ms_early: Option<usize>,
    pub i_early: Option<usize>,
    pub kappa: f64,
    pub kappa_source: String,
    pub s: usize,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl ResultRow {
    pub const CSV_HEADER: &'static str =
        "h,coarse,n,converged,m,m1,ms_convergence,ms_early,i_early,kappa,kappa_source,s,error";

    pub fn csv_line(&self) -> String {
        let opt = |v: &Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{:.6e},{},{},{}",
            self.h,
            self.coarse,
            self.n,
            self.converged,
            self.m,
            self.m1,
            self.ms_convergence,
            opt(&self.ms_early),
            opt(&self.i_early),
            self.kappa,
            self.kappa_source,
            self.s,
            self.error.clone().unwrap_or_default()
        )
    }
}

/// Writes through a temp file in the same directory, then renames.
pub fn atomic_write<F>(path: &Path, write_fn: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    write_fn(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, |p| {
        let file = File::create(p)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn matmul_at_b(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    // c = a^T b for row-major square a, b
    let mut c = vec![0.0; n * n];
    for l in 0..n {
        for i in 0..n {
            let ali = a[l * n + i];
            if ali == 0.0 {
                continue;
            }
            let (brow, crow) = (&b[l * n..(l + 1) * n], &mut c[i * n..(i + 1) * n]);
            for j in 0..n {
                crow[j] += ali * brow[j];
            }
        }
    }
    c
}

/// Exact spectrum of the preconditioned operator at desk scale: dense
/// M^{-1} column by column, symmetrized with an asymmetry guard, split as
/// M^{-1} = K K^T with K = Q Lambda^{1/2}, then a symmetric eigensolve of
/// K^T A K (similar to M^{-1} A).
pub fn oracle_spectrum(
    a: &SparseMatrix,
    m: &dyn Preconditioner,
    cap: usize,
) -> Result<Spectrum> {
    let n = a.n_rows();
    if n > cap {
        return Err(Error::OracleCapExceeded { n, cap });
    }
    let mut minv = vec![0.0; n * n];
    for j in 0..n {
        let mut ej = vec![0.0; n];
        ej[j] = 1.0;
        let col = m.apply(&ej);
        for i in 0..n {
            minv[i * n + j] = col[i];
        }
    }
    let scale = minv.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((minv[i * n + j] - minv[j * n + i]).abs());
        }
    }
    if asym > 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "preconditioner apply is not symmetric: max asymmetry {asym:.3e}"
        )));
    }
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (minv[i * n + j] + minv[j * n + i]);
            minv[i * n + j] = avg;
            minv[j * n + i] = avg;
        }
    }
    let (mv, mq) = dense_sym_eigen(n, &minv, cap)?;
    if mv[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite { row: 0, pivot: mv[0] });
    }
    let mut k = vec![0.0; n * n];
    for j in 0..n {
        let s = mv[j].sqrt();
        for i in 0..n {
            k[i * n + j] = mq[i * n + j] * s;
        }
    }
    // ak = A * K, column by column through spmv
    let mut ak = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        for i in 0..n {
            col[i] = k[i * n + j];
        }
        let y = a.spmv(&col)?;
        for i in 0..n {
            ak[i * n + j] = y[i];
        }
    }
    let kak = matmul_at_b(n, &k, &ak);
    let vals = dense_sym_eigenvalues(n, &kak, cap)?;
    if vals[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite { row: 0, pivot: vals[0] });
    }
    Spectrum::new(vals)
}

fn build_field(cfg: &ExperimentConfig, grid: GridSpec) -> Result<CoefficientField> {
    if cfg.contrast == cfg.background {
        Ok(CoefficientField::constant(grid, cfg.background))
    } else {
        build_coefficient_field(
            grid,
            cfg.pattern.unwrap_or_default(),
            cfg.background,
            cfg.contrast,
        )
    }
}

fn assemble_problem(cfg: &ExperimentConfig) -> Result<DiscreteProblem> {
    let grid = GridSpec::new(cfg.subdomains_per_side, cfg.elements_per_subdomain)?;
    let field = build_field(cfg, grid)?;
    assemble(grid, &field, ProblemData::default())
}

/// Everything `solve` produces, for in-process callers (tests, sweep).
pub struct SolveOutcome {
    pub row: ResultRow,
    pub report: BoundReport,
    pub trace: CGTrace,
    pub spectrum_used: Spectrum,
    pub oracle: Option<Spectrum>,
}

/// Runs the full pipeline for one cell and writes its artifacts into
/// `out_dir` (created if needed).
pub fn run_solve(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SolveOutcome> {
    std::fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("config.json"), cfg)?;

    let start = Instant::now();
    let grid = GridSpec::new(cfg.subdomains_per_side, cfg.elements_per_subdomain)?;
    let problem = assemble_problem(cfg)?;
    atomic_write(&out_dir.join("field.csv"), |p| problem.field.write_csv(p))?;

    let dd = decompose(grid, cfg.delta_layers)?;
    let precon = SchwarzPreconditioner::assemble(&problem.a, &dd, cfg.coarse)?;

    let n = problem.a.n_rows();
    let reference = match cfg.mode {
        ModeArg::Residual => None,
        ModeArg::Anorm => {
            if n > DIRECT_SOLVE_CAP {
                return Err(Error::InvalidArgument(format!(
                    "A-norm stop mode needs a direct reference solve; n = {n} exceeds {DIRECT_SOLVE_CAP}"
                )));
            }
            Some(problem.direct_solve()?)
        }
    };
    let stop = StopRule::new(cfg.mode.stop_mode(), cfg.eps, cfg.max_iters)?;
    let x0 = vec![0.0; n];
    let (x, trace) = pcg(
        &problem.a,
        &problem.b,
        &precon,
        &stop,
        &x0,
        reference.as_deref(),
        None,
    )?;
    let m = trace.iterations();

    atomic_write(&out_dir.join("trace.csv"), |p| write_trace_csv(p, &trace))?;
    atomic_write(&out_dir.join("solution.txt"), |p| write_vector(p, &x))?;

    let ritz = ritz_values(&trace)?;
    atomic_write(&out_dir.join("ritz_spectrum.txt"), |p| write_spectrum(p, ritz.values()))?;

    let oracle = if n <= cfg.oracle_cap {
        let spec = oracle_spectrum(&problem.a, &precon, cfg.oracle_cap)?;
        atomic_write(&out_dir.join("oracle_spectrum.txt"), |p| {
            write_spectrum(p, spec.values())
        })?;
        atomic_write(&out_dir.join("a.mtx"), |p| write_matrix_market(p, &problem.a))?;
        Some(spec)
    } else {
        None
    };
    let (spectrum_used, kappa_source) = match &oracle {
        Some(spec) => (spec.clone(), "oracle"),
        None => (ritz.clone(), "ritz"),
    };
    let report = bound_report(&spectrum_used, cfg.eps)?;
    write_json(&out_dir.join("bound_report.json"), &report)?;

    // estimator replay over the recorded trace, with the run length known
    let est_cfg = EstimatorConfig::new(
        cfg.estimator.eta,
        cfg.estimator.tau,
        cfg.estimator.i_max,
        cfg.estimator.run_fraction,
        cfg.eps,
    )?
    .with_known_m(m.max(1));
    let mut est = EstimatorState::new(est_cfg);
    for i in 1..=m {
        if !est.on_iteration(i, &trace) {
            break;
        }
    }
    atomic_write(&out_dir.join("estimator_events.jsonl"), |p| est.write_events_jsonl(p))?;
    let final_rep = final_report(&est, &trace)?;
    write_json(&out_dir.join("estimator_report.json"), &final_rep)?;

    let row = ResultRow {
        h: format!("1/{}", cfg.subdomains_per_side),
        coarse: cfg.coarse.to_string(),
        n,
        converged: trace.converged,
        m,
        m1: report.m1,
        ms_convergence: final_rep.ms_convergence,
        ms_early: final_rep.ms_early,
        i_early: final_rep.i_early,
        kappa: report.kappa,
        kappa_source: kappa_source.to_string(),
        s: report.s,
        wall_time_s: start.elapsed().as_secs_f64(),
        error: if trace.converged { None } else { Some("did not converge".into()) },
    };
    write_json(&out_dir.join("result_row.json"), &row)?;
    Ok(SolveOutcome { row, report, trace, spectrum_used, oracle })
}

fn failed_row(cfg: &ExperimentConfig, err: &Error) -> ResultRow {
    ResultRow {
        h: format!("1/{}", cfg.subdomains_per_side),
        coarse: cfg.coarse.to_string(),
        n: 0,
        converged: false,
        m: 0,
        m1: 0,
        ms_convergence: 0,
        ms_early: None,
        i_early: None,
        kappa: f64::NAN,
        kappa_source: "none".to_string(),
        s: 0,
        wall_time_s: 0.0,
        error: Some(err.to_string()),
    }
}

fn write_table_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    atomic_write(path, |p| {
        let file = File::create(p)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", ResultRow::CSV_HEADER)?;
        for row in rows {
            writeln!(w, "{}", row.csv_line())?;
        }
        Ok(())
    })
}

fn write_plot_data(path: &Path, rows: &[ResultRow]) -> Result<()> {
    atomic_write(path, |p| {
        let file = File::create(p)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "h,coarse,quantity,value")?;
        for row in rows {
            if row.error.is_some() && row.m == 0 {
                continue;
            }
            for (q, v) in
                [("m", row.m), ("m1", row.m1), ("ms", row.ms_convergence)]
            {
                writeln!(w, "{},{},{q},{v}", row.h, row.coarse)?;
            }
        }
        Ok(())
    })
}

/// Runs every cell (in parallel up to `jobs`), always completing the sweep;
/// per-cell failures become error rows. Returns the rows and the failure
/// count.
pub fn run_sweep(cfg: &SweepConfig, out_dir: &Path, jobs: Option<usize>) -> Result<(Vec<ResultRow>, usize)> {
    std::fs::create_dir_all(out_dir)?;
    let run_cell = |(i, cell): (usize, &ExperimentConfig)| -> ResultRow {
        let cell_dir = out_dir.join(format!(
            "cell_{i:02}_{}_H{}",
            cell.coarse, cell.subdomains_per_side
        ));
        match run_solve(cell, &cell_dir) {
            Ok(outcome) => outcome.row,
            Err(e) => failed_row(cell, &e),
        }
    };
    let rows: Vec<ResultRow> = match jobs {
        Some(j) if j >= 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| {
                use rayon::prelude::*;
                cfg.cells.par_iter().enumerate().map(run_cell).collect()
            })
        }
        _ => cfg.cells.iter().enumerate().map(run_cell).collect(),
    };
    write_table_csv(&out_dir.join("table.csv"), &rows)?;
    write_plot_data(&out_dir.join("plot_data.csv"), &rows)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    Ok((rows, failures))
}

/// Computes a bound report for a spectrum file.
pub fn run_bound(spectrum_path: &Path, eps: f64) -> Result<BoundReport> {
    let vals = read_spectrum(spectrum_path)?;
    let spec = Spectrum::new(vals)?;
    bound_report(&spec, eps)
}

/// Writes the exact preconditioned spectrum of a configured problem.
pub fn run_spectrum(cfg: &ExperimentConfig, out_path: &Path) -> Result<Spectrum> {
    let grid = GridSpec::new(cfg.subdomains_per_side, cfg.elements_per_subdomain)?;
    let problem = assemble_problem(cfg)?;
    let n = problem.a.n_rows();
    if n > cfg.oracle_cap {
        return Err(Error::InvalidArgument(format!(
            "n = {n} exceeds the oracle cap {}; use the Ritz spectrum from a solve instead",
            cfg.oracle_cap
        )));
    }
    let dd = decompose(grid, cfg.delta_layers)?;
    let precon = SchwarzPreconditioner::assemble(&problem.a, &dd, cfg.coarse)?;
    let spec = oracle_spectrum(&problem.a, &precon, cfg.oracle_cap)?;
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    atomic_write(out_path, |p| write_spectrum(p, spec.values()))?;
    Ok(spec)
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthCase {
    pub file: String,
    pub n: usize,
    pub clusters: usize,
    pub kappa: f64,
}

/// Generates seeded clustered spectra (ascending positive, gap-separated
/// clusters) as plain-text files plus a manifest.
pub fn run_synth(
    out_dir: &Path,
    seed: u64,
    count: usize,
    clusters: Option<usize>,
    n_max: usize,
) -> Result<Vec<SynthCase>> {
    if n_max < 8 {
        return Err(Error::InvalidArgument("n_max must be at least 8".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    for case in 0..count {
        let s = clusters.unwrap_or_else(|| rng.gen_range(1..=4));
        let vals = synth_clustered_spectrum(&mut rng, s, n_max);
        let file = format!("spectrum_{case:03}.txt");
        atomic_write(&out_dir.join(&file), |p| write_spectrum(p, &vals))?;
        cases.push(SynthCase {
            file,
            n: vals.len(),
            clusters: s,
            kappa: vals[vals.len() - 1] / vals[0],
        });
    }
    write_json(&out_dir.join("manifest.json"), &cases)?;
    Ok(cases)
}

/// One clustered spectrum: `s` clusters of moderate internal spread,
/// separated by gaps of 10^2..10^4, total condition number up to ~1e10.
pub fn synth_clustered_spectrum(rng: &mut ChaCha8Rng, s: usize, n_max: usize) -> Vec<f64> {
    let per_cluster_max = (n_max / s.max(1)).max(2);
    let mut vals = Vec::new();
    let mut lo = 10f64.powf(rng.gen_range(-2.0..2.0));
    for _ in 0..s {
        let n_i = rng.gen_range(2..=per_cluster_max.min(120));
        let kappa_i = rng.gen_range(1.05..8.0);
        let hi = lo * kappa_i;
        for j in 0..n_i {
            let t = j as f64 / (n_i - 1) as f64;
            vals.push(lo * (hi / lo).powf(t));
        }
        // inter-cluster gap
        lo = hi * 10f64.powf(rng.gen_range(2.0..4.0));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

#[derive(Parser, Debug)]
#[command(name = "cgbound", version, about = "Clustered-spectrum PCG iteration bounds and Schwarz experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one experiment cell: assemble, precondition, solve, bound.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        oracle_cap: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Run every cell of a sweep config and emit table + plot data.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        oracle_cap: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Compute a bound report from an ascending spectrum file.
    Bound {
        /// plain-text spectrum, one eigenvalue per line, ascending
        spectrum: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the exact preconditioned spectrum of a configured problem.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        oracle_cap: Option<usize>,
    },
    /// Generate seeded synthetic clustered spectrum files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// fixed cluster count; random 1..=4 when omitted
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long, default_value_t = 400)]
        n_max: usize,
    },
}

fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    eps: Option<f64>,
    oracle_cap: Option<usize>,
    mode: Option<ModeArg>,
) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = eps {
        cfg.eps = e;
    }
    if let Some(c) = oracle_cap {
        cfg.oracle_cap = c;
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
}

/// Process exit status of a command run.
pub enum RunStatus {
    Success,
    /// some cells failed but the run completed
    PartialFailure,
}

impl Cli {
    /// Executes the parsed command. `Err` from config loading should exit
    /// with code 2, other `Err`s and `PartialFailure` with 1.
    pub fn run(self) -> std::result::Result<RunStatus, (i32, Error)> {
        match self.command {
            Command::Solve { config, out, seed, eps, oracle_cap, mode } => {
                let mut cfg: ExperimentConfig =
                    load_config(&config).map_err(|e| (2, e))?;
                apply_overrides(&mut cfg, seed, eps, oracle_cap, mode);
                let outcome = run_solve(&cfg, &out).map_err(|e| (1, e))?;
                println!("{}", ResultRow::CSV_HEADER);
                println!("{}", outcome.row.csv_line());
                if outcome.row.error.is_some() {
                    Ok(RunStatus::PartialFailure)
                } else {
                    Ok(RunStatus::Success)
                }
            }
            Command::Sweep { config, out, jobs, seed, eps, oracle_cap, mode } => {
                let mut cfg: SweepConfig = load_config(&config).map_err(|e| (2, e))?;
                for cell in &mut cfg.cells {
                    apply_overrides(cell, seed, eps, oracle_cap, mode);
                }
                let (rows, failures) = run_sweep(&cfg, &out, jobs).map_err(|e| (1, e))?;
                println!("{}", ResultRow::CSV_HEADER);
                for row in &rows {
                    println!("{}", row.csv_line());
                }
                if failures > 0 {
                    eprintln!("{failures} cell(s) failed");
                    Ok(RunStatus::PartialFailure)
                } else {
                    Ok(RunStatus::Success)
                }
            }
            Command::Bound { spectrum, eps, out } => {
                let report = run_bound(&spectrum, eps).map_err(|e| {
                    if matches!(e, Error::Parse { .. } | Error::Io(_)) {
                        (2, e)
                    } else {
                        (1, e)
                    }
                })?;
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| (1, Error::Json(e)))?;
                println!("{json}");
                if let Some(path) = out {
                    std::fs::create_dir_all(&path).map_err(|e| (1, Error::Io(e)))?;
                    write_json(&path.join("bound_report.json"), &report)
                        .map_err(|e| (1, e))?;
                }
                Ok(RunStatus::Success)
            }
            Command::Spectrum { config, out, oracle_cap } => {
                let mut cfg: ExperimentConfig =
                    load_config(&config).map_err(|e| (2, e))?;
                apply_overrides(&mut cfg, None, None, oracle_cap, None);
                let spec = run_spectrum(&cfg, &out).map_err(|e| (1, e))?;
                println!(
                    "wrote {} eigenvalues to {} (kappa = {:.6e})",
                    spec.len(),
                    out.display(),
                    spec.kappa()
                );
                Ok(RunStatus::Success)
            }
            Command::Synth { out, seed, count, clusters, n_max } => {
                let cases =
                    run_synth(&out, seed, count, clusters, n_max).map_err(|e| (1, e))?;
                println!("wrote {} spectra to {}", cases.len(), out.display());
                Ok(RunStatus::Success)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::IdentityPreconditioner;
    use crate::problem::CoefficientField;

    fn tiny_config() -> ExperimentConfig {
        serde_json::from_str(
            r#"{
                "subdomains_per_side": 2,
                "elements_per_subdomain": 4,
                "contrast": 1.0,
                "background": 1.0,
                "delta_layers": 1,
                "coarse": "gdsw",
                "eps": 1e-8,
                "mode": "anorm"
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"subdomains_per_side": 4, "elements_per_subdomain": 16}"#,
        )
        .unwrap();
        assert_eq!(cfg.contrast, 1e8);
        assert_eq!(cfg.delta_layers, 2);
        assert_eq!(cfg.coarse, CoarseKind::Gdsw);
        assert_eq!(cfg.estimator.eta, 5);
        let bad = serde_json::from_str::<ExperimentConfig>(
            r#"{"subdomains_per_side": 4, "elements_per_subdomain": 16, "zzz": 1}"#,
        );
        assert!(bad.is_err(), "unknown keys must be rejected");
    }

    #[test]
    fn oracle_identity_preconditioner_matches_matrix_spectrum() {
        let grid = GridSpec::new(2, 2).unwrap();
        let field = CoefficientField::constant(grid, 1.0);
        let p = assemble(grid, &field, ProblemData::default()).unwrap();
        let n = p.a.n_rows();
        let spec = oracle_spectrum(&p.a, &IdentityPreconditioner, 2500).unwrap();
        let direct = dense_sym_eigenvalues(n, &p.a.to_dense(), 2500).unwrap();
        for (s, d) in spec.values().iter().zip(&direct) {
            assert!((s - d).abs() <= 1e-9 * d.abs().max(1.0), "{s} vs {d}");
        }
    }

    #[test]
    fn oracle_cap_refused() {
        let grid = GridSpec::new(2, 4).unwrap();
        let field = CoefficientField::constant(grid, 1.0);
        let p = assemble(grid, &field, ProblemData::default()).unwrap();
        assert!(matches!(
            oracle_spectrum(&p.a, &IdentityPreconditioner, 10),
            Err(Error::OracleCapExceeded { .. })
        ));
    }

    #[test]
    fn two_level_lambda_min_beats_one_level() {
        let grid = GridSpec::new(3, 4).unwrap();
        let field = CoefficientField::constant(grid, 1.0);
        let p = assemble(grid, &field, ProblemData::default()).unwrap();
        let dd = decompose(grid, 1).unwrap();
        let lambda_min = |kind: CoarseKind| {
            let m = SchwarzPreconditioner::assemble(&p.a, &dd, kind).unwrap();
            oracle_spectrum(&p.a, &m, 2500).unwrap().lambda_min()
        };
        let one = lambda_min(CoarseKind::None);
        let two = lambda_min(CoarseKind::Gdsw);
        assert!(one < 1.0, "one-level lambda_min {one} should reflect the missing coarse space");
        assert!(two > one, "GDSW lambda_min {two} vs one-level {one}");
    }

    #[test]
    fn solve_writes_artifacts_and_converges() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let outcome = run_solve(&cfg, dir.path()).unwrap();
        assert!(outcome.row.converged);
        assert!(outcome.row.m >= 1);
        assert!(outcome.oracle.is_some());
        for f in [
            "config.json",
            "field.csv",
            "trace.csv",
            "solution.txt",
            "ritz_spectrum.txt",
            "oracle_spectrum.txt",
            "bound_report.json",
            "estimator_events.jsonl",
            "estimator_report.json",
            "result_row.json",
        ] {
            assert!(dir.path().join(f).exists(), "missing artifact {f}");
        }
    }

    #[test]
    fn solve_bound_consistency_with_bound_command() {
        // cmd_bound on the written oracle spectrum reproduces the embedded
        // bound report exactly
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let outcome = run_solve(&cfg, dir.path()).unwrap();
        let rb = run_bound(&dir.path().join("oracle_spectrum.txt"), cfg.eps).unwrap();
        assert_eq!(rb.m1, outcome.report.m1);
        assert_eq!(rb.ms, outcome.report.ms);
        assert_eq!(rb.s, outcome.report.s);
        assert_eq!(rb.partition_indices, outcome.report.partition_indices);
        assert_eq!(rb.degrees, outcome.report.degrees);
    }

    #[test]
    fn uniform_coefficient_gives_single_cluster() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let outcome = run_solve(&cfg, dir.path()).unwrap();
        assert_eq!(outcome.report.s, 1);
        // s = 1: ms is the single-cluster Chebyshev degree, within 1 of m1
        let diff = outcome.report.ms as i64 - outcome.report.m1 as i64;
        assert!(diff.abs() <= 1, "ms {} vs m1 {}", outcome.report.ms, outcome.report.m1);
    }

    #[test]
    fn sweep_empty_and_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let empty = SweepConfig { cells: vec![] };
        let (rows, failures) = run_sweep(&empty, dir.path(), None).unwrap();
        assert!(rows.is_empty());
        assert_eq!(failures, 0);
        let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
        assert_eq!(table.trim(), ResultRow::CSV_HEADER);

        let cfg = SweepConfig { cells: vec![tiny_config(), tiny_config()] };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_sweep(&cfg, d1.path(), Some(2)).unwrap();
        run_sweep(&cfg, d2.path(), None).unwrap();
        let t1 = std::fs::read_to_string(d1.path().join("table.csv")).unwrap();
        let t2 = std::fs::read_to_string(d2.path().join("table.csv")).unwrap();
        assert_eq!(t1, t2, "sweep CSV must be byte-identical across runs");
    }

    #[test]
    fn sweep_records_per_cell_failure_and_continues() {
        let mut bad = tiny_config();
        bad.delta_layers = 100; // refused by decompose
        let cfg = SweepConfig { cells: vec![bad, tiny_config()] };
        let dir = tempfile::tempdir().unwrap();
        let (rows, failures) = run_sweep(&cfg, dir.path(), None).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(failures, 1);
        assert!(rows[0].error.is_some());
        assert!(rows[1].error.is_none());
    }

    #[test]
    fn synth_is_seed_deterministic_and_valid() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let c1 = run_synth(d1.path(), 7, 5, Some(2), 200).unwrap();
        let c2 = run_synth(d2.path(), 7, 5, Some(2), 200).unwrap();
        assert_eq!(c1.len(), 5);
        for (a, b) in c1.iter().zip(&c2) {
            assert_eq!(a.n, b.n);
            assert_eq!(a.kappa, b.kappa);
        }
        for case in &c1 {
            let vals = read_spectrum(&d1.path().join(&case.file)).unwrap();
            let spec = Spectrum::new(vals).unwrap();
            assert_eq!(spec.len(), case.n);
            // a 2-cluster synthetic spectrum must be split by the greedy rule
            let part = crate::partition::greedy_partition(&spec, 1e-8).unwrap();
            assert!(part.s() >= 2);
        }
    }

    #[test]
    fn bound_command_rejects_malformed_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "1.0\n0.5\n2.0\n").unwrap();
        let err = run_bound(&path, 1e-8).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') || msg.to_lowercase().contains("ascend"), "{msg}");
    }

    #[test]
    fn single_value_spectrum_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.txt");
        std::fs::write(&path, "2.5\n").unwrap();
        let report = run_bound(&path, 1e-8).unwrap();
        assert_eq!(report.ms, 1);
        assert_eq!(report.s, 1);
        assert_eq!(report.m1, crate::bounds::m1(1.0, 1e-8));
    }

    #[test]
    fn atomic_write_leaves_no_temp_on_success() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        atomic_write(&path, |p| {
            std::fs::write(p, "hello")?;
            Ok(())
        })
        .unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "hello");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
