mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nminus1::analysis::{self, ModelEntry, ReportTables};
use nminus1::dataset::{read_dataset, write_dataset, ScenarioRecord};
use nminus1::grid::{apply_line_cut, GridCase};
use nminus1::matpower::read_matpower_case;
use nminus1::par::Execution;
use nminus1::powerflow::{newton_raphson_solve, SolverOptions};
use nminus1::scenario::{generate_dataset, SamplingConfig};
use nminus1::surrogate::{checkpoint, train, TrainConfig, Variant};

/// N-1 robustness harness for AC power flow surrogates.
#[derive(Debug, Parser)]
#[command(name = "nminus1", version)]
struct Cli {
    /// TOML file with one table per command; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the AC power flow of a case, optionally with branches cut.
    Solve(SolveArgs),
    /// Generate an oracle-labeled scenario dataset.
    Generate(GenerateArgs),
    /// Train a surrogate on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on one or two datasets.
    Evaluate(EvaluateArgs),
    /// Evaluate a set of checkpoints and write table1/2/3 CSVs.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// Convergence tolerance on the max-norm power mismatch (pu).
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
}

impl SolverFlags {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.tol,
            max_iterations: self.max_iter,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// MATPOWER case file.
    #[arg(long)]
    case: PathBuf,
    /// Branch index (0-based, file order) to take out of service; repeatable.
    #[arg(long = "cut", value_name = "BRANCH")]
    cuts: Vec<usize>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Write the solved state and currents here as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    case: PathBuf,
    /// Number of instances.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Probability of cutting one line per instance.
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Standard deviation of the load and voltage perturbation (pu).
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Dirichlet concentration of the generation split.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, env = "NMINUS1_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads: 1 runs sequentially, 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output dataset (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training dataset (JSON lines).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "small")]
    variant: Variant,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    scheduler_step: usize,
    #[arg(long, default_value_t = 0.5)]
    scheduler_gamma: f64,
    #[arg(long, env = "NMINUS1_SEED", default_value_t = 0)]
    seed: u64,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation dataset; scored as the N set when --n1-data is given.
    #[arg(long)]
    data: PathBuf,
    /// Optional N-1 dataset; adds the N-1 score and the gap ratio.
    #[arg(long)]
    n1_data: Option<PathBuf>,
    /// Append a CSV row (model, dataset, records, mse) per dataset to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    case: Option<PathBuf>,
    /// N evaluation dataset.
    #[arg(long)]
    n_data: Option<PathBuf>,
    /// N-1 evaluation dataset; every record must carry a cut branch.
    #[arg(long)]
    n1_data: Option<PathBuf>,
    /// Trained model as NAME:P:CHECKPOINT, where P is its training cut
    /// probability; repeatable.
    #[arg(long = "model", value_name = "NAME:P:PATH")]
    models: Vec<String>,
    /// Dataset label for table1.csv; defaults to the case file stem.
    #[arg(long)]
    dataset: Option<String>,
    /// Output directory for the CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file not found: {}", path.display());
    }
    Ok(())
}

fn prepare_output(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn load_case(path: &Path) -> Result<GridCase> {
    require_file(path)?;
    read_matpower_case(path).with_context(|| format!("reading case {}", path.display()))
}

fn load_records(path: &Path) -> Result<Vec<ScenarioRecord>> {
    require_file(path)?;
    read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

#[derive(Serialize)]
struct BusOut {
    id: usize,
    source_id: u64,
    vm: f64,
    va: f64,
    p: f64,
    q: f64,
    inj_current: f64,
}

#[derive(Serialize)]
struct BranchOut {
    id: usize,
    from_bus: usize,
    to_bus: usize,
    in_service: bool,
    i_or: f64,
    i_ex: f64,
}

#[derive(Serialize)]
struct SolveOut {
    case: String,
    cuts: Vec<usize>,
    iterations: usize,
    max_mismatch: f64,
    buses: Vec<BusOut>,
    branches: Vec<BranchOut>,
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    if let Some(out) = &a.out {
        prepare_output(out)?;
    }
    let mut topo = case.full_topology();
    for &b in &a.cuts {
        topo = apply_line_cut(&topo, b)?;
    }
    let sol = newton_raphson_solve(&case, &topo, &a.solver.options())?;
    println!(
        "{}: converged in {} iterations, max mismatch {:.3e} pu",
        case.name, sol.iterations, sol.max_mismatch
    );
    if let Some(out) = &a.out {
        let report = SolveOut {
            case: case.name.clone(),
            cuts: a.cuts.clone(),
            iterations: sol.iterations,
            max_mismatch: sol.max_mismatch,
            buses: case
                .buses
                .iter()
                .map(|b| BusOut {
                    id: b.id,
                    source_id: b.source_id,
                    vm: sol.state.vm[b.id],
                    va: sol.state.va[b.id],
                    p: sol.p[b.id],
                    q: sol.q[b.id],
                    inj_current: sol.currents.inj[b.id],
                })
                .collect(),
            branches: case
                .branches
                .iter()
                .map(|br| BranchOut {
                    id: br.id,
                    from_bus: br.from_bus,
                    to_bus: br.to_bus,
                    in_service: topo.in_service[br.id],
                    i_or: sol.currents.br_or[br.id],
                    i_ex: sol.currents.br_ex[br.id],
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let cfg = SamplingConfig {
        load_sigma: a.sigma,
        cut_probability: a.p,
        seed: a.seed,
        n_instances: a.n,
        dirichlet_alpha: a.alpha,
        solver: a.solver.options(),
    };
    cfg.validate()?;
    let case = load_case(&a.case)?;
    prepare_output(&a.out)?;
    let data = generate_dataset(&case, &cfg, Execution::from_jobs(a.jobs))?;
    write_dataset(&data.records, &a.out)?;
    let r = &data.report;
    let cut = data
        .records
        .iter()
        .filter(|r| r.cut_branch.is_some())
        .count();
    println!(
        "wrote {} records ({} with a cut line) to {}",
        data.records.len(),
        cut,
        a.out.display()
    );
    println!(
        "attempts {}, discarded {} ({:.2}%), islanding cuts excluded {:?}",
        r.attempts,
        r.discarded,
        100.0 * r.discard_rate(),
        r.excluded_islanding_cuts
    );
    if r.no_admissible_cut > 0 {
        println!("{} instances had no admissible cut", r.no_admissible_cut);
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        scheduler_step: a.scheduler_step,
        scheduler_gamma: a.scheduler_gamma,
        seed: a.seed,
    };
    cfg.validate()?;
    let records = load_records(&a.data)?;
    prepare_output(&a.out)?;
    let outcome = train(&records, a.variant, &cfg)?;
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.6}", epoch + 1);
    }
    checkpoint::save(&outcome.model, &a.out)?;
    println!(
        "saved {} model ({} parameters) to {}",
        a.variant.name(),
        outcome.model.params.n_params(),
        a.out.display()
    );
    Ok(())
}

fn label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn append_csv_rows(path: &Path, rows: &[(String, String, usize, f64)]) -> Result<()> {
    prepare_output(path)?;
    let fresh = !path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(["model", "dataset", "records", "mse"])?;
    }
    for (model, dataset, n, mse) in rows {
        w.write_record([
            model.clone(),
            dataset.clone(),
            n.to_string(),
            mse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    let model = checkpoint::load(&a.checkpoint)?;
    let mut sets = vec![(a.data.clone(), load_records(&a.data)?)];
    if let Some(n1) = &a.n1_data {
        sets.push((n1.clone(), load_records(n1)?));
    }
    let model_name = label(&a.checkpoint);
    let mut rows = Vec::new();
    for (path, records) in &sets {
        let b = analysis::evaluate_breakdown(&model, records, Execution::Sequential)
            .with_context(|| format!("evaluating on {}", path.display()))?;
        println!(
            "{}: {} records, mse {:.6e} (origin {:.3e}, extremity {:.3e}, injection {:.3e})",
            path.display(),
            b.records,
            b.total,
            b.branch_or,
            b.branch_ex,
            b.injection
        );
        rows.push((model_name.clone(), label(path), b.records, b.total));
    }
    if rows.len() == 2 {
        println!("gap ratio {:.4}", analysis::gap_ratio(rows[0].3, rows[1].3));
    }
    if let Some(csv_path) = &a.csv {
        append_csv_rows(csv_path, &rows)?;
    }
    Ok(())
}

fn parse_model_spec(spec: &str) -> Result<(String, f64, PathBuf)> {
    let mut parts = spec.splitn(3, ':');
    let (Some(name), Some(p), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
        bail!("--model {spec:?} is not NAME:P:PATH");
    };
    let p: f64 = p
        .parse()
        .map_err(|_| anyhow!("--model {spec:?}: {p:?} is not a probability"))?;
    if name.is_empty() || !(0.0..=1.0).contains(&p) {
        bail!("--model {spec:?} needs a name and a probability in [0, 1]");
    }
    Ok((name.to_string(), p, PathBuf::from(path)))
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let mut missing = Vec::new();
    let mut check = |flag: &str, path: &Option<PathBuf>| match path {
        None => missing.push(format!("{flag} (not given)")),
        Some(p) if !p.is_file() => missing.push(format!("{flag} {}", p.display())),
        Some(_) => {}
    };
    check("--case", &a.case);
    check("--n-data", &a.n_data);
    check("--n1-data", &a.n1_data);
    let specs = a
        .models
        .iter()
        .map(|s| parse_model_spec(s))
        .collect::<Result<Vec<_>>>()?;
    if specs.is_empty() {
        missing.push("--model (not given)".into());
    }
    for (name, _, path) in &specs {
        if !path.is_file() {
            missing.push(format!("--model {name}: {}", path.display()));
        }
    }
    if a.out.is_none() {
        missing.push("--out (not given)".into());
    }
    if !missing.is_empty() {
        bail!("missing inputs:\n  {}", missing.join("\n  "));
    }
    let (case_path, out) = (a.case.as_ref().unwrap(), a.out.as_ref().unwrap());
    let case = load_case(case_path)?;
    let n_records = load_records(a.n_data.as_ref().unwrap())?;
    let n1_records = load_records(a.n1_data.as_ref().unwrap())?;
    let models = specs
        .into_iter()
        .map(|(name, p, path)| {
            let model =
                checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            Ok(ModelEntry { name, p, model })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = a.dataset.clone().unwrap_or_else(|| label(case_path));
    let reports = analysis::robustness_report(
        &case,
        &dataset,
        &models,
        &n_records,
        &n1_records,
        Execution::Sequential,
    )?;
    for r in &reports {
        println!(
            "{} on {}: N mse {:.6e}, N-1 mse {:.6e}, gap ratio {:.3}",
            r.model, r.dataset, r.n_mse, r.n1_mse, r.gap_ratio
        );
        for (p, mse) in &r.mix_table {
            println!("  trained with p = {p}: N-1 mse {mse:.6e}");
        }
    }
    if let Some(first) = reports.first() {
        for c in &first.clusters {
            println!(
                "  {} node degree {}: {} records, mse {:.6e}",
                c.role.as_str(),
                c.degree,
                c.count,
                c.mse
            );
        }
    }
    analysis::write_tables(&ReportTables::from_reports(&reports), out)?;
    println!(
        "wrote {} tables to {}",
        analysis::TABLE_FILES.len(),
        out.display()
    );
    Ok(())
}

/// 2 for numeric failures, 3 for infeasible input, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use nminus1::Error as E;
    match err.chain().find_map(|e| e.downcast_ref::<E>()) {
        Some(E::NonConvergence { .. } | E::SingularJacobian { .. } | E::NonFiniteLoss { .. })
        | Some(E::DiscardRateExceeded { .. }) => 2,
        Some(E::IslandedGrid { .. }) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Analyze(a) => cmd_analyze(a),
    }
}

fn main() -> ExitCode {
    let mut args: Vec<OsString> = std::env::args_os().collect();
    if let Some(path) = config::find_config(&args) {
        match config::merge(args, Path::new(&path)) {
            Ok(merged) => args = merged,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
        }
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
