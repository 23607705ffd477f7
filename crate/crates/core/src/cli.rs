//! Command-line surface: `fit`, `simulate`, `replicate`, `diagnose`,
//! `compare` and `classify`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::diagnose;
use crate::error::{Error, Result};
use crate::eval::{cpo_report, evaluate, CpoKernel};
use crate::io::{
    load_chain, load_dataset_with, parse_config, persist_chain, render_config, write_atomic, write_classification,
    write_comparison, write_dataset, write_geweke_table, write_replication_report, write_roc, write_summary_table,
    LoadOptions,
};
use crate::model::{ErrorModel, Individual, JointModel};
use crate::sampler::{run_chain, FitConfig, Schedule};
use crate::simulator::{parse_design, run_replication_study, simulate_dataset, SimDesign, Variant, BUNDLED_DESIGN_SEED};

#[derive(Debug, Parser)]
#[command(name = "joint-nlme", version, about = "Joint NLME and binary-outcome models by Metropolis-within-Gibbs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model; writes the chain files and a posterior summary.
    Fit(FitArgs),
    /// Simulate a dataset from a design.
    Simulate(SimulateArgs),
    /// Simulate and fit many datasets; writes the bias/coverage report.
    Replicate(ReplicateArgs),
    /// Geweke diagnostics for a stored chain.
    Diagnose(DiagnoseArgs),
    /// CPO and LPML for two or more stored chains on the same data.
    Compare(CompareArgs),
    /// In-sample classification and ROC points for a stored chain.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Longitudinal file with columns id,time,y.
    #[arg(long)]
    long: PathBuf,
    /// Outcome file with columns id,d and optional covariates.
    #[arg(long)]
    outcomes: PathBuf,
    /// Drop malformed rows (each one reported) instead of failing.
    #[arg(long)]
    skip_bad_rows: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the error model in the configuration.
    #[arg(long)]
    error_model: Option<ErrorModel>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Design table; the bundled 173-individual design when omitted.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = BUNDLED_DESIGN_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[arg(long)]
    design: Option<PathBuf>,
    /// One fitting configuration per model, named by file stem. Without any,
    /// the correlated and independent-error models are compared on a
    /// 50 000-iteration schedule.
    #[arg(long)]
    config: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Root seed for the simulated datasets.
    #[arg(long, default_value_t = BUNDLED_DESIGN_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, num_args = 1, required = true)]
    chain: Vec<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    chain: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.5)]
    cutoff: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit status: 0 on success, 1 on a runtime error, 2 on a usage
/// error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Replicate(a) => replicate(a),
        Command::Diagnose(a) => diagnose_cmd(a),
        Command::Compare(a) => compare(a),
        Command::Classify(a) => classify(a),
    }
}

fn load(args: &DataArgs) -> Result<Vec<Individual>> {
    let loaded = load_dataset_with(
        &args.long,
        &args.outcomes,
        &LoadOptions {
            skip_bad_rows: args.skip_bad_rows,
        },
    )?;
    for s in &loaded.skipped {
        eprintln!("skipped {}:{}: {}", s.file, s.line, s.reason);
    }
    Ok(loaded.individuals)
}

fn out_dir(dir: &Path) -> Result<&Path> {
    std::fs::create_dir_all(dir)?;
    Ok(dir)
}

fn echo(path: &Path) -> Result<()> {
    print!("{}", std::fs::read_to_string(path)?);
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => parse_config(p)?,
        None => FitConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(em) = a.error_model {
        cfg.error_model = em;
    }
    let data = load(&a.data)?;
    let dir = out_dir(&a.out_dir)?;
    let store = run_chain(&data, &cfg)?;
    write_atomic(&dir.join("config.txt"), |w| Ok(w.write_all(render_config(&cfg).as_bytes())?))?;
    persist_chain(&store, &dir.join("chain.csv"))?;
    let summary = dir.join("summary.csv");
    write_summary_table(&summary, &diagnose(&store)?)?;
    for (name, t) in store.meta.tallies.blocks() {
        if t.proposed > 0 {
            eprintln!("acceptance {name}: {:.3}", t.rate());
        }
    }
    echo(&summary)
}

fn design(path: &Option<PathBuf>, seed: u64) -> Result<SimDesign> {
    let mut d = SimDesign::bundled(seed);
    if let Some(p) = path {
        d.rows = parse_design(&std::fs::read_to_string(p)?)?;
    }
    Ok(d)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let d = design(&a.design, a.seed)?;
    let data = simulate_dataset(&d)?;
    let dir = out_dir(&a.out_dir)?;
    write_dataset(&data, &dir.join("long.csv"), &dir.join("outcomes.csv"))?;
    println!("{} individuals written to {}", data.len(), dir.display());
    Ok(())
}

fn default_variants() -> Vec<Variant> {
    [("car1", ErrorModel::Car1), ("independent", ErrorModel::Independent)]
        .into_iter()
        .map(|(name, em)| {
            let mut config = FitConfig::default();
            config.schedule = Schedule::new(50_000, 5_000, 10);
            config.error_model = em;
            Variant {
                name: name.to_string(),
                config,
            }
        })
        .collect()
}

fn replicate(a: ReplicateArgs) -> Result<()> {
    let d = design(&a.design, a.seed)?;
    let variants = if a.config.is_empty() {
        default_variants()
    } else {
        a.config
            .iter()
            .map(|p| {
                Ok(Variant {
                    name: p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
                    config: parse_config(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    let reports = run_replication_study(&d, a.reps, &variants)?;
    let dir = out_dir(&a.out_dir)?;
    let path = dir.join("replication.csv");
    write_replication_report(&path, Some(&dir.join("replicates.csv")), &reports)?;
    echo(&path)
}

fn diagnose_cmd(a: DiagnoseArgs) -> Result<()> {
    let store = load_chain(&a.chain)?;
    let dir = out_dir(&a.out_dir)?;
    let path = dir.join("geweke.csv");
    write_geweke_table(&path, &diagnose(&store)?)?;
    echo(&path)
}

fn check_ids(store_ids: &[String], data: &[Individual], chain: &Path) -> Result<()> {
    if store_ids.len() != data.len() || store_ids.iter().zip(data).any(|(a, b)| *a != b.id) {
        return Err(Error::Data(format!(
            "chain {} was not fitted to these individuals",
            chain.display()
        )));
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    if a.chain.len() < 2 {
        return Err(Error::config("chain", "compare needs at least two chains"));
    }
    let data = load(&a.data)?;
    let mut models = Vec::new();
    for (k, path) in a.chain.iter().enumerate() {
        let store = load_chain(path)?;
        check_ids(&store.meta.ids, &data, path)?;
        let model = JointModel::new(store.meta.family, store.meta.error_model);
        let report = cpo_report(&model, &data, &store, CpoKernel::Conditional)?;
        let name = store.meta.error_model.to_string();
        models.push((name, k + 1, report));
    }
    let named: Vec<_> = models
        .iter()
        .map(|(name, k, r)| {
            let unique = models.iter().filter(|(n, _, _)| n == name).count() == 1;
            (if unique { name.clone() } else { format!("{name}_{k}") }, r.clone())
        })
        .collect();
    let ids: Vec<String> = data.iter().map(|d| d.id.clone()).collect();
    let dir = out_dir(&a.out_dir)?;
    let path = dir.join("lpml.csv");
    write_comparison(&path, Some(&dir.join("cpo.csv")), &ids, &named)?;
    echo(&path)
}

fn classify(a: ClassifyArgs) -> Result<()> {
    if !(a.cutoff > 0.0 && a.cutoff < 1.0) {
        return Err(Error::config("cutoff", "must lie strictly between 0 and 1"));
    }
    let data = load(&a.data)?;
    let store = load_chain(&a.chain)?;
    check_ids(&store.meta.ids, &data, &a.chain)?;
    let model = JointModel::new(store.meta.family, store.meta.error_model);
    let (report, roc, probs) = evaluate(&model, &data, &store, a.cutoff)?;
    let dir = out_dir(&a.out_dir)?;
    let path = dir.join("classification.csv");
    write_classification(&path, &report, a.cutoff)?;
    write_roc(&dir.join("roc.csv"), &roc)?;
    write_atomic(&dir.join("predictions.csv"), |w| {
        writeln!(w, "id,d,probability")?;
        for (ind, p) in data.iter().zip(&probs) {
            writeln!(w, "{},{},{p:.6}", ind.id, ind.outcome)?;
        }
        Ok(())
    })?;
    echo(&path)
}
