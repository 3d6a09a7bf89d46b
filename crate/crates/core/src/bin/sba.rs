//! `sba`: subgroup bias audits from the command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sba_core::classifiers::ClassifierKind;
use sba_core::dataset::Gender;
use sba_core::embedding::{read_index, LayerId};
use sba_core::error::{Error, Result};
use sba_core::harness::{bias_analysis, layer_sweep, run_experiment, ExperimentConfig, Task, Condition};
use sba_core::metrics::tables::{check_tables, BIAS_FIXTURE, METRIC_FIXTURE};
use sba_core::metrics::{Dimension, DEFAULT_BINS};
use sba_core::report::{
    extract_mfcc40, input_digests, load_cohort, load_features, load_run_config, read_run_dir, write_bias_report,
    write_run_dir, write_sweep, RunConfigFile, SweepSection, DATA_ROOT_ENV,
};
use sba_core::synthetic::{shift_for_auc, write_cohort, write_layer_archives, LayerShift, SyntheticSpec};

#[derive(Parser)]
#[command(name = "sba", version, about = "Subgroup bias audits for speech-based cognitive-impairment classifiers")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract 40-dim mean MFCCs for every utterance of a manifest.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment configuration over all its seeds.
    Run(RunArgs),
    /// Run the configured experiment once per embedding layer and classifier.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated layers, e.g. hidden-1,hidden-9,latent-1.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<String>>,
    },
    /// Subgroup metrics, disparities and score distributions of a run.
    BiasReport {
        /// Run directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        /// Report directory (default: `<run>/bias`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        dimensions: Option<Vec<String>>,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Check derived columns of published result tables.
    CheckTables {
        /// Metric table CSV (default: the shipped fixture).
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Bias table CSV (default: the shipped fixture).
        #[arg(long)]
        bias: Option<PathBuf>,
        /// Also write the checks as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic cohort with a quick-start config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated split seeds (overrides the config).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Subjects per class in each gender × age × depression group.
    #[arg(long, default_value_t = 25)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Analytic CI-vs-NCI AUC.
    #[arg(long, default_value_t = 0.85)]
    auc: f64,
    /// Male AUC minus female AUC.
    #[arg(long, default_value_t = 0.0)]
    gender_gap: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write EMB1 archives for hidden layers 1..12 (peak at layer 9).
    #[arg(long)]
    embeddings: bool,
    #[arg(long, default_value = "svm")]
    classifier: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = configure_threads(cli.jobs).and_then(|()| dispatch(cli.command));
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::ExtractFeatures { manifest, out } => extract(&manifest, &out),
        Command::Run(args) => run(&args).map(|()| ExitCode::SUCCESS),
        Command::Sweep { run, layers } => sweep(&run, layers).map(|()| ExitCode::SUCCESS),
        Command::BiasReport {
            run,
            out,
            dimensions,
            bins,
        } => bias_report(&run, out.as_deref(), dimensions, bins).map(|()| ExitCode::SUCCESS),
        Command::CheckTables { metrics, bias, out } => tables(metrics, bias, out),
        Command::Synth(args) => synth(&args).map(|()| ExitCode::SUCCESS),
    }
}

fn data_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}

fn extract(manifest: &Path, out: &Path) -> Result<ExitCode> {
    if !manifest.is_file() {
        return Err(Error::Config(format!("manifest '{}' does not exist", manifest.display())));
    }
    let report = extract_mfcc40(manifest, data_root().as_deref(), out)?;
    println!("wrote {} rows to {}", report.written, report.features.display());
    if report.failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for (id, e) in &report.failures {
        eprintln!("failed: {id}: {e}");
    }
    eprintln!("{} utterance(s) failed, listed in failures.csv", report.failures.len());
    Ok(ExitCode::from(2))
}

fn out_dir(args: &RunArgs, configured: Option<&Path>) -> Result<PathBuf> {
    args.out
        .clone()
        .or_else(|| configured.map(Path::to_path_buf))
        .ok_or_else(|| Error::Config("no output directory: pass --out or set 'out' in the config".into()))
}

fn with_seeds(mut config: ExperimentConfig, seeds: &Option<Vec<u64>>) -> Result<ExperimentConfig> {
    if let Some(s) = seeds {
        config.seeds = s.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(args: &RunArgs) -> Result<()> {
    let resolved = load_run_config(&args.config)?;
    let out = out_dir(args, resolved.out.as_deref())?;
    let config = with_seeds(resolved.file.experiment.clone(), &args.seeds)?;
    let cohort = load_cohort(&resolved.manifest)?;
    let features = load_features(&resolved, &config.feature)?;
    let inputs = input_digests(&resolved)?;
    log::info!("running {} {} {} {}", config.task, config.condition, config.feature, config.classifier);
    let result = run_experiment(&config, &cohort, &features)?;
    let records: Vec<_> = cohort.members().iter().map(|m| m.record.clone()).collect();
    write_run_dir(&out, &resolved.file, inputs, &records, &result)?;
    println!(
        "{} seeds, UAR {:.4} ± {:.4}, written to {}",
        result.runs.len(),
        result.mean.uar,
        result.std.uar,
        out.display()
    );
    Ok(())
}

fn sweep(args: &RunArgs, layers: Option<Vec<String>>) -> Result<()> {
    let resolved = load_run_config(&args.config)?;
    let out = out_dir(args, resolved.out.as_deref())?;
    let template = with_seeds(resolved.file.experiment.clone(), &args.seeds)?;
    let index_path = resolved
        .embedding_index
        .as_ref()
        .ok_or_else(|| Error::Config("a sweep needs 'embedding_index' in the config".into()))?;
    let index = read_index(index_path)?;
    let section = resolved.file.sweep.clone().unwrap_or_default();
    let names = layers.unwrap_or(section.layers);
    let layers: Vec<LayerId> = if names.is_empty() {
        sba_core::embedding::index_layers(&index)?
    } else {
        names
            .iter()
            .map(|l| l.parse().map_err(|e: Error| Error::Config(e.to_string())))
            .collect::<Result<_>>()?
    };
    let classifiers = if section.classifiers.is_empty() {
        vec![template.classifier]
    } else {
        section.classifiers
    };
    let cohort = load_cohort(&resolved.manifest)?;
    let rows = layer_sweep(&template, &cohort, &index, &layers, &classifiers)?;
    write_sweep(&out, &template, &input_digests(&resolved)?, &rows)?;
    for r in &rows {
        println!("{} {} UAR {:.4} ± {:.4}", r.layer, r.classifier, r.result.mean.uar, r.result.std.uar);
    }
    Ok(())
}

fn bias_report(run: &Path, out: Option<&Path>, dimensions: Option<Vec<String>>, bins: usize) -> Result<()> {
    let dimensions: Vec<Dimension> = match dimensions {
        Some(d) => d.iter().map(|s| s.parse()).collect::<Result<_>>()?,
        None => Dimension::ALL.to_vec(),
    };
    if bins == 0 {
        return Err(Error::Config("--bins must be positive".into()));
    }
    let (result, cohort) = read_run_dir(run)?;
    let analysis = bias_analysis(&result, &cohort, &dimensions, bins)?;
    let seeds: Vec<u64> = result.runs.iter().map(|r| r.seed).collect();
    let out = out.map_or_else(|| run.join("bias"), Path::to_path_buf);
    write_bias_report(&out, &analysis, &seeds)?;
    for d in &analysis.dimensions {
        let r = &d.disparity;
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{:+.3}", x));
        println!(
            "{} {} vs {}: ΔSe {} ΔSp {}{}",
            r.dimension,
            r.group_a,
            r.group_b,
            fmt(r.delta_sens),
            fmt(r.delta_spec),
            if r.significant() { " *" } else { "" }
        );
    }
    Ok(())
}

fn read_text(path: &Option<PathBuf>, fallback: &'static str) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => Ok(fallback.to_string()),
    }
}

fn tables(metrics: Option<PathBuf>, bias: Option<PathBuf>, out: Option<PathBuf>) -> Result<ExitCode> {
    let checks = check_tables(&read_text(&metrics, METRIC_FIXTURE)?, &read_text(&bias, BIAS_FIXTURE)?)?;
    let mut csv = String::from("row,passed,detail\n");
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.label, c.detail);
        csv.push_str(&format!("\"{}\",{},\"{}\"\n", c.label.replace('"', "\"\""), c.passed, c.detail.replace('"', "\"\"")));
    }
    if let Some(dir) = out {
        fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
        let path = dir.join("table_checks.csv");
        fs::write(&path, csv).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} rows consistent", checks.len() - failed, checks.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn synth(args: &SynthArgs) -> Result<()> {
    let classifier: ClassifierKind = args.classifier.parse()?;
    let half = args.gender_gap / 2.0;
    for auc in [args.auc - half, args.auc + half] {
        if !(0.5..1.0).contains(&auc) {
            return Err(Error::Config(format!("subgroup AUC {auc} outside [0.5, 1)")));
        }
    }
    let mut spec = SyntheticSpec::uniform(args.n, args.dim, 0.0, 1.0, args.seed);
    for g in &mut spec.groups {
        let auc = if g.gender == Gender::M { args.auc + half } else { args.auc - half };
        g.shift = shift_for_auc(auc, 1.0);
    }
    let files = write_cohort(&spec, &args.out)?;
    let mut experiment = ExperimentConfig::new(Task::CiVsNci, Condition::Imb, spec.feature_set(), classifier);
    let mut config = RunConfigFile {
        manifest: file_name(&files.manifest),
        features: Some(file_name(&files.features)),
        embedding_index: None,
        out: Some("run".into()),
        experiment: experiment.clone(),
        sweep: None,
    };
    if args.embeddings {
        let layers = (1..=12)
            .map(|i| {
                // separation rises to hidden layer 9, then falls off
                let scale = 1.0 - (f64::from(i) - 9.0).abs() / 10.0;
                Ok(LayerShift {
                    layer: LayerId::hidden(i)?,
                    scale,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_layer_archives(&spec, &layers, 4, &args.out)?;
        config.embedding_index = Some("index.csv".into());
        experiment.feature = sba_core::features::FeatureSetId::W2v2(LayerId::hidden(9)?);
        config.experiment = experiment;
        config.features = None;
        config.sweep = Some(SweepSection {
            layers: layers.iter().map(|l| l.layer.to_string()).collect(),
            classifiers: vec![classifier],
        });
    }
    let path = args.out.join("config.toml");
    fs::write(&path, config.to_toml()?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    println!("{} subjects written to {}", spec.n_subjects(), args.out.display());
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
