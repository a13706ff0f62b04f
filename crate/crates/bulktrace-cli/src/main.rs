//! Command-line front end: single solves with VTK output and convergence
//! studies with CSV reports.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bulktrace::analysis::{energy_error, run_convergence_study, run_single, ErrorReport, StudyOptions};
use bulktrace::bench::{case, Provenance, CUPOLA_OVERKILL_RECIPE};
use bulktrace::mesh::vtk::{write_vtk, VtkField};
use bulktrace::mesh::BenchmarkId;
use bulktrace::solve::nodal_values;
use bulktrace::BtError;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "bulktrace", version, about = "Bulk Trace FEM for families of Kirchhoff beams and Kirchhoff-Love shells")]
struct Cli {
    /// Worker threads; overrides `workers` in the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every (p, n) of the config and write one VTK file per run.
    Solve(ConfigArg),
    /// Run a convergence study and write the error report as CSV.
    Converge {
        #[command(flatten)]
        config: ConfigArg,
        /// CSV output path; overrides `output.csv` in the config.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Regenerate the overkill reference energy and measure against it.
        #[arg(long)]
        overkill: bool,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, msg: msg.into() }
    }

    fn config(msg: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, msg: msg.into() }
    }
}

impl From<BtError> for Failure {
    fn from(e: BtError) -> Self {
        let code = match e {
            BtError::UnsupportedCase(_)
            | BtError::UnsupportedOrder { .. }
            | BtError::InconsistentBc(_)
            | BtError::MissingExact(_)
            | BtError::Io(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn load_config(path: &Path, workers: Option<usize>) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::config(format!("cannot start {workers} workers: {e}")))
}

fn cmd_solve(cfg: &RunConfig) -> Result<(), Failure> {
    let id = cfg.case_id().map_err(Failure::config)?;
    let quantities = cfg.quantities().map_err(Failure::config)?;
    std::fs::create_dir_all(&cfg.output.vtk_dir)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", cfg.output.vtk_dir.display())))?;
    let opts = StudyOptions { assembly: cfg.assembly(), workers: 1, skip_l2: true };
    let pool = pool(cfg.workers)?;
    pool.install(|| {
        for &p in &cfg.p {
            for &n in &cfg.n {
                let (rec, pb, sol) = run_single(id, p, n, None, &opts)?;
                let mut fields = Vec::with_capacity(quantities.len());
                for &q in &quantities {
                    let (ncomp, values) = nodal_values(&pb, &sol, q)?;
                    fields.push(VtkField { name: q.name().to_string(), ncomp, values });
                }
                let path = cfg.output.vtk_dir.join(format!("{}_p{p}_n{n}.vtk", id.name()));
                write_vtk(&path, &pb.mesh, &format!("{} p={p} n={n}", id.name()), &fields)?;
                let eps = rec.eps_energy.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
                println!(
                    "{} p={p} n={n} n_dof={} energy={:.12e} eps_energy={eps} rel_residual={:.1e} time={:.2}s -> {}",
                    id.name(),
                    rec.n_dof,
                    rec.energy,
                    rec.rel_residual,
                    rec.seconds,
                    path.display()
                );
            }
        }
        Ok(())
    })
}

/// Recomputes the overkill reference of `id` and returns it.
fn regenerate_overkill(id: BenchmarkId, opts: &StudyOptions) -> Result<Option<f64>, Failure> {
    let c = case(id);
    if c.e_ref.provenance != Provenance::Overkill {
        eprintln!("{} has a published reference energy; --overkill ignored", id.name());
        return Ok(None);
    }
    let (p, n) = CUPOLA_OVERKILL_RECIPE;
    let (rec, _, _) = run_single(id, p, n, None, &StudyOptions { skip_l2: true, ..*opts })?;
    println!(
        "overkill {} p={p} n={n} energy={:.16e} (pinned {:.16e}, relative change {:.3e})",
        id.name(),
        rec.energy,
        c.e_ref.value,
        energy_error(rec.energy, c.e_ref.value)
    );
    Ok(Some(rec.energy))
}

fn cmd_converge(cfg: &RunConfig, csv: &Path, overkill: bool) -> Result<(), Failure> {
    let id = cfg.case_id().map_err(Failure::config)?;
    let opts = StudyOptions { assembly: cfg.assembly(), workers: cfg.workers, skip_l2: false };
    let e_ref = if overkill { regenerate_overkill(id, &opts)? } else { None };
    let mut report: ErrorReport = run_convergence_study(id, &cfg.p, &cfg.n, &opts)?;
    if let Some(e) = e_ref {
        for r in &mut report.rows {
            r.eps_energy = Some(energy_error(r.energy, e));
        }
    }
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(csv, report.to_csv()).map_err(|e| Failure::config(format!("cannot write {}: {e}", csv.display())))?;
    print!("{}", report.slope_table());
    println!("wrote {} rows to {}", report.rows.len(), csv.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve(c) => cmd_solve(&load_config(&c.config, cli.workers)?),
        Command::Converge { config, csv, overkill } => {
            let cfg = load_config(&config.config, cli.workers)?;
            let csv = csv
                .or_else(|| cfg.output.csv.clone())
                .ok_or_else(|| Failure::usage("converge needs --csv or output.csv in the config"))?;
            cmd_converge(&cfg, &csv, overkill)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
