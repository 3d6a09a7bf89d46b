//! Run configuration files, self-describing run directories and the CSV
//! reports the command-line tool emits.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml          experiment echo (paths as written in the config file)
//! run_manifest.json    inputs with sha256, per-seed metrics and hashes
//! cohort.csv           the subject manifest the run used
//! metrics.csv          per-seed metrics, then mean and std rows
//! scores/seed_<s>.csv  per-sample test scores
//! models/seed_<s>.json fitted-model summaries
//! ```
//!
//! Nothing in it depends on the output location, the clock or the thread
//! count, so two executions of one config produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::ClassifierKind;
use crate::dataset::{read_manifest, write_manifest, Cohort, CohortTag, SubjectRecord};
use crate::embedding::{read_index, LayerId};
use crate::error::{Error, Result};
use crate::features::{csv_field, ingest_feature_csv, write_feature_csv, FeatureSetId, FeatureTable, FeatureVector};
use crate::harness::{AggregateResult, BiasAnalysis, ExperimentConfig, GroupSummary, MetricStats, ScoredSample, SeedRun, SweepRow};
use crate::metrics::{MetricReport, TTest};
use crate::signal::{mfcc40_of_file, Mfcc, MfccConfig};

pub const RUN_FORMAT: &str = "sba-run/1";
pub const DATA_ROOT_ENV: &str = "SBA_DATA_ROOT";

/// Optional layer-sweep section of a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub layers: Vec<String>,
    pub classifiers: Vec<ClassifierKind>,
}

/// TOML run configuration. Relative paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub manifest: String,
    /// Feature CSV for non-embedding feature sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    /// Embedding index CSV for `w2v2-*` feature sets and sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_index: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// A config file with every path resolved and checked.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub file: RunConfigFile,
    pub manifest: PathBuf,
    pub features: Option<PathBuf>,
    pub embedding_index: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn existing(base: &Path, rel: &str, what: &str) -> Result<PathBuf> {
    let p = base.join(rel);
    if !p.is_file() {
        return Err(Error::Config(format!("{what} '{}' does not exist", p.display())));
    }
    Ok(p)
}

/// Reads and validates a config file; every input path must exist.
pub fn load_run_config(path: &Path) -> Result<ResolvedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let file: RunConfigFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    file.experiment.validate()?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let manifest = existing(base, &file.manifest, "manifest")?;
    let features = file.features.as_deref().map(|f| existing(base, f, "feature file")).transpose()?;
    let embedding_index = file
        .embedding_index
        .as_deref()
        .map(|f| existing(base, f, "embedding index"))
        .transpose()?;
    if let Some(sweep) = &file.sweep {
        for l in &sweep.layers {
            l.parse::<LayerId>().map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    let out = file.out.as_deref().map(|o| base.join(o));
    Ok(ResolvedConfig {
        file,
        manifest,
        features,
        embedding_index,
        out,
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn load_cohort(manifest: &Path) -> Result<Cohort> {
    Cohort::new(read_manifest(manifest)?, CohortTag::Imbalanced)
}

/// Resolves a manifest audio path: absolute paths as is, relative ones
/// against `data_root` when given, else against the manifest's directory.
pub fn resolve_audio(wav_path: &str, manifest: &Path, data_root: Option<&Path>) -> PathBuf {
    let p = Path::new(wav_path);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match data_root {
        Some(root) => root.join(p),
        None => manifest.parent().unwrap_or_else(|| Path::new(".")).join(p),
    }
}

fn csv_width(path: &Path) -> Result<usize> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let n = reader.headers().map_err(|e| Error::csv(path, e))?.len();
    if n < 2 {
        return Err(Error::csv(path, "no feature columns"));
    }
    Ok(n - 1)
}

/// Feature table for `set`: pooled embeddings from the index for `w2v2-*`,
/// the feature CSV otherwise (dimension inferred for custom sets).
pub fn load_features(resolved: &ResolvedConfig, set: &FeatureSetId) -> Result<FeatureTable> {
    let vectors = match set {
        FeatureSetId::W2v2(layer) => {
            let index = resolved
                .embedding_index
                .as_ref()
                .ok_or_else(|| Error::Config(format!("feature set {set} needs 'embedding_index'")))?;
            crate::embedding::load_layer(&read_index(index)?, *layer)?
        }
        _ => {
            let path = resolved
                .features
                .as_ref()
                .ok_or_else(|| Error::Config(format!("feature set {set} needs 'features'")))?;
            let dim = match set.declared_dim() {
                Some(d) => d,
                None => csv_width(path)?,
            };
            ingest_feature_csv(path, dim, set.clone())?
        }
    };
    FeatureTable::from_vectors(set.clone(), vectors)
}

/// One input file as recorded in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub metrics: MetricReport,
    pub n_train: usize,
    pub n_test: usize,
    pub train_ids_hash: String,
    pub test_ids_hash: String,
    pub normalizer_fit_hash: String,
    pub threshold: f64,
    /// Relative to the run directory.
    pub scores: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub config: ExperimentConfig,
    pub inputs: Vec<InputDigest>,
    pub seeds: Vec<SeedEntry>,
    pub mean: MetricStats,
    pub std: MetricStats,
}

/// Digests of the inputs a config names, paths as written in the file.
pub fn input_digests(resolved: &ResolvedConfig) -> Result<Vec<InputDigest>> {
    let mut out = vec![InputDigest {
        role: "manifest".into(),
        path: resolved.file.manifest.clone(),
        sha256: sha256_file(&resolved.manifest)?,
    }];
    if let (Some(rel), Some(p)) = (&resolved.file.features, &resolved.features) {
        out.push(InputDigest {
            role: "features".into(),
            path: rel.clone(),
            sha256: sha256_file(p)?,
        });
    }
    if let (Some(rel), Some(p)) = (&resolved.file.embedding_index, &resolved.embedding_index) {
        out.push(InputDigest {
            role: "embedding_index".into(),
            path: rel.clone(),
            sha256: sha256_file(p)?,
        });
    }
    Ok(out)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidData(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn scores_csv(run: &SeedRun) -> String {
    let mut s = String::from("subject_id,utterance_id,label,score,prediction,seed\n");
    for x in &run.scores {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            csv_field(&x.subject_id),
            csv_field(&x.utterance_id),
            bit(x.label),
            x.score,
            bit(x.prediction),
            run.seed
        );
    }
    s
}

pub fn metrics_csv(result: &AggregateResult) -> String {
    let mut s = String::from("seed,accuracy,uar,sensitivity,specificity,n_train,n_test\n");
    for r in &result.runs {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6},{},{}",
            r.seed, m.accuracy, m.uar, m.sensitivity, m.specificity, r.n_train, r.n_test
        );
    }
    for (name, st) in [("mean", &result.mean), ("std", &result.std)] {
        let _ = writeln!(
            s,
            "{name},{:.6},{:.6},{:.6},{:.6},,",
            st.accuracy, st.uar, st.sensitivity, st.specificity
        );
    }
    s
}

/// Writes a complete run directory. `out` is created if needed; files of a
/// previous run at the same place are overwritten.
pub fn write_run_dir(
    out: &Path,
    file: &RunConfigFile,
    inputs: Vec<InputDigest>,
    cohort: &[SubjectRecord],
    result: &AggregateResult,
) -> Result<RunManifest> {
    let mut echo = file.clone();
    echo.out = None;
    echo.experiment = result.config.clone();
    write(&out.join("config.toml"), echo.to_toml()?)?;
    write_manifest_at(&out.join("cohort.csv"), cohort)?;
    write(&out.join("metrics.csv"), metrics_csv(result))?;
    let mut seeds = Vec::with_capacity(result.runs.len());
    for run in &result.runs {
        let scores = format!("scores/seed_{}.csv", run.seed);
        let model = format!("models/seed_{}.json", run.seed);
        write(&out.join(&scores), scores_csv(run))?;
        write(&out.join(&model), json(&run.model)?)?;
        seeds.push(SeedEntry {
            seed: run.seed,
            metrics: run.metrics.clone(),
            n_train: run.n_train,
            n_test: run.n_test,
            train_ids_hash: run.train_ids_hash.clone(),
            test_ids_hash: run.test_ids_hash.clone(),
            normalizer_fit_hash: run.normalizer_fit_hash.clone(),
            threshold: run.threshold,
            scores,
            model,
        });
    }
    let manifest = RunManifest {
        format: RUN_FORMAT.into(),
        config: result.config.clone(),
        inputs,
        seeds,
        mean: result.mean,
        std: result.std,
    };
    write(&out.join("run_manifest.json"), json(&manifest)?)?;
    Ok(manifest)
}

fn write_manifest_at(path: &Path, records: &[SubjectRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_manifest(path, records)
}

#[derive(Deserialize)]
struct ScoreRow {
    subject_id: String,
    utterance_id: String,
    label: u8,
    score: f64,
    prediction: u8,
}

fn read_scores(path: &Path) -> Result<Vec<ScoredSample>> {
    if !path.is_file() {
        return Err(Error::InvalidData(format!(
            "{}: run has no persisted scores; bias analysis needs scores",
            path.display()
        )));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    reader
        .deserialize::<ScoreRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::csv(path, e))?;
            Ok(ScoredSample {
                subject_id: row.subject_id,
                utterance_id: row.utterance_id,
                label: row.label == 1,
                score: row.score,
                prediction: row.prediction == 1,
            })
        })
        .collect()
}

/// Reloads a run directory: the aggregate with its scores, and the cohort.
pub fn read_run_dir(dir: &Path) -> Result<(AggregateResult, Cohort)> {
    let path = dir.join("run_manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::csv(&path, e))?;
    if manifest.format != RUN_FORMAT {
        return Err(Error::InvalidData(format!(
            "{}: unknown run format '{}'",
            path.display(),
            manifest.format
        )));
    }
    let runs = manifest
        .seeds
        .iter()
        .map(|e| {
            let model_path = dir.join(&e.model);
            let model = match fs::read_to_string(&model_path) {
                Ok(t) => serde_json::from_str(&t).map_err(|err| Error::csv(&model_path, err))?,
                Err(_) => serde_json::Value::Null,
            };
            Ok(SeedRun {
                seed: e.seed,
                metrics: e.metrics.clone(),
                n_train: e.n_train,
                n_test: e.n_test,
                train_ids_hash: e.train_ids_hash.clone(),
                test_ids_hash: e.test_ids_hash.clone(),
                normalizer_fit_hash: e.normalizer_fit_hash.clone(),
                threshold: e.threshold,
                model,
                scores: read_scores(&dir.join(&e.scores))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cohort = load_cohort(&dir.join("cohort.csv"))?;
    Ok((
        AggregateResult {
            config: manifest.config,
            runs,
            mean: manifest.mean,
            std: manifest.std,
        },
        cohort,
    ))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

fn test_cells(t: &Option<TTest>) -> (String, String) {
    match t {
        Some(TTest::Test { t, p, .. }) => (format!("{t:.6}"), format!("{p:.6}")),
        Some(TTest::Degenerate { .. }) => ("degenerate".into(), "undefined".into()),
        None => ("undefined".into(), "undefined".into()),
    }
}

fn group_row(s: &mut String, g: &GroupSummary) {
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{},{}",
        g.dimension,
        csv_field(&g.group),
        g.n_pos,
        g.n_neg,
        opt(g.sensitivity),
        opt(g.specificity),
        opt(g.delta),
        opt(g.auc),
        opt(g.overlap)
    );
}

/// `bias.csv`: one row per subgroup.
pub fn bias_csv(analysis: &BiasAnalysis) -> String {
    let mut s = String::from("dimension,group,n_ci,n_nci,sensitivity,specificity,delta,auc,overlap\n");
    for d in &analysis.dimensions {
        group_row(&mut s, &d.group_a);
        group_row(&mut s, &d.group_b);
    }
    s
}

/// `disparity.csv`: Δ of group A relative to group B with paired t-tests.
pub fn disparity_csv(analysis: &BiasAnalysis) -> String {
    let mut s = String::from("dimension,group_a,group_b,delta_sens,delta_spec,t_sens,p_sens,t_spec,p_spec,significant\n");
    for d in &analysis.dimensions {
        let r = &d.disparity;
        let (ts, ps) = test_cells(&r.sens_test);
        let (tp, pp) = test_cells(&r.spec_test);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{ts},{ps},{tp},{pp},{}",
            r.dimension,
            csv_field(&r.group_a),
            csv_field(&r.group_b),
            opt(r.delta_sens),
            opt(r.delta_spec),
            r.significant()
        );
    }
    s
}

/// `bias_per_seed.csv`: subgroup metrics of every seed.
pub fn per_seed_csv(analysis: &BiasAnalysis, seeds: &[u64]) -> String {
    let mut s = String::from("dimension,group,seed,n_ci,n_nci,sensitivity,specificity,delta,auc\n");
    for d in &analysis.dimensions {
        for g in [&d.group_a, &d.group_b] {
            for ((r, a), seed) in g.per_seed.iter().zip(&g.per_seed_auc).zip(seeds) {
                let _ = writeln!(
                    s,
                    "{},{},{seed},{},{},{},{},{},{}",
                    g.dimension,
                    csv_field(&g.group),
                    r.n_pos,
                    r.n_neg,
                    opt(r.sensitivity),
                    opt(r.specificity),
                    opt(r.delta),
                    opt(*a)
                );
            }
        }
    }
    s
}

/// `distributions.csv`: pooled score histograms, plot-ready.
pub fn distributions_csv(analysis: &BiasAnalysis) -> String {
    let mut s = String::from("dimension,group,bin,lower,upper,ci_mass,nci_mass\n");
    for d in &analysis.dimensions {
        for g in [&d.group_a, &d.group_b] {
            let Some(dist) = &g.distribution else { continue };
            for (b, (p, n)) in dist.positive_mass.iter().zip(&dist.negative_mass).enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{b},{:.6},{:.6},{:.6},{:.6}",
                    g.dimension,
                    csv_field(&g.group),
                    dist.edges[b],
                    dist.edges[b + 1],
                    p,
                    n
                );
            }
        }
    }
    s
}

/// Writes the bias report files into `out`.
pub fn write_bias_report(out: &Path, analysis: &BiasAnalysis, seeds: &[u64]) -> Result<()> {
    write(&out.join("bias.csv"), bias_csv(analysis))?;
    write(&out.join("disparity.csv"), disparity_csv(analysis))?;
    write(&out.join("bias_per_seed.csv"), per_seed_csv(analysis, seeds))?;
    write(&out.join("distributions.csv"), distributions_csv(analysis))?;
    write(&out.join("bias.json"), json(analysis)?)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "layer,classifier,accuracy_mean,accuracy_std,uar_mean,uar_std,sensitivity_mean,sensitivity_std,specificity_mean,specificity_std\n",
    );
    for r in rows {
        let (m, sd) = (r.result.mean.values(), r.result.std.values());
        let _ = write!(s, "{},{}", r.layer, r.classifier);
        for k in 0..4 {
            let _ = write!(s, ",{:.6},{:.6}", m[k], sd[k]);
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    format: &'a str,
    config: &'a ExperimentConfig,
    inputs: &'a [InputDigest],
    rows: Vec<BTreeMap<&'static str, serde_json::Value>>,
}

/// Writes `sweep.csv` and `sweep_manifest.json` (per-seed metrics per row).
pub fn write_sweep(out: &Path, template: &ExperimentConfig, inputs: &[InputDigest], rows: &[SweepRow]) -> Result<()> {
    write(&out.join("sweep.csv"), sweep_csv(rows))?;
    let rows = rows
        .iter()
        .map(|r| {
            BTreeMap::from([
                ("layer", serde_json::json!(r.layer.to_string())),
                ("classifier", serde_json::json!(r.classifier)),
                (
                    "seeds",
                    serde_json::json!(r
                        .result
                        .runs
                        .iter()
                        .map(|x| serde_json::json!({"seed": x.seed, "metrics": x.metrics}))
                        .collect::<Vec<_>>()),
                ),
                ("mean", serde_json::json!(r.result.mean)),
                ("std", serde_json::json!(r.result.std)),
            ])
        })
        .collect();
    let manifest = SweepManifest {
        format: RUN_FORMAT,
        config: template,
        inputs,
        rows,
    };
    write(&out.join("sweep_manifest.json"), json(&manifest)?)
}

/// Utterances that could not be processed, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionReport {
    pub written: usize,
    pub failures: Vec<(String, String)>,
    pub features: PathBuf,
}

/// 40-dim mean MFCCs for every manifest utterance into `out/mfcc40.csv`.
///
/// Failures do not stop the batch: successful rows are written in manifest
/// order, failures go to `out/failures.csv`.
pub fn extract_mfcc40(manifest: &Path, data_root: Option<&Path>, out: &Path) -> Result<ExtractionReport> {
    let records = read_manifest(manifest)?;
    let extractor = Mfcc::new(MfccConfig::default())?;
    let results: Vec<Result<FeatureVector>> = records
        .par_iter()
        .map(|r| {
            let path = resolve_audio(&r.wav_path, manifest, data_root);
            mfcc40_of_file(&extractor, &path, &r.utterance_id)
        })
        .collect();
    let mut vectors = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(v) => vectors.push(v),
            Err(e) => failures.push((r.utterance_id.clone(), e.to_string())),
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let features = out.join("mfcc40.csv");
    write_feature_csv(&features, &vectors, 40)?;
    let fail_path = out.join("failures.csv");
    if failures.is_empty() {
        if fail_path.exists() {
            fs::remove_file(&fail_path).map_err(|e| Error::io(&fail_path, e))?;
        }
    } else {
        let mut s = String::from("utterance_id,error\n");
        for (id, e) in &failures {
            let _ = writeln!(s, "{},{}", csv_field(id), csv_field(e));
        }
        write(&fail_path, s)?;
    }
    Ok(ExtractionReport {
        written: vectors.len(),
        failures,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        let text = r#"
manifest = "m.csv"
colour = "blue"
[experiment]
task = "ci_vs_nci"
condition = "IMB"
feature = "mfcc40"
classifier = "svm"
"#;
        let err = RunConfigFile::parse(text).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn config_rejects_bad_classifier() {
        let text = r#"
manifest = "m.csv"
[experiment]
task = "ci_vs_nci"
condition = "IMB"
feature = "mfcc40"
classifier = "knn"
"#;
        assert_eq!(RunConfigFile::parse(text).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn config_roundtrips() {
        let text = r#"
manifest = "m.csv"
features = "f.csv"
[experiment]
task = "dci_vs_ndci"
condition = "CIGB"
feature = "w2v2-hidden-9"
classifier = "rf"
seeds = [1, 2]
"#;
        let c = RunConfigFile::parse(text).unwrap();
        assert_eq!(c.experiment.seeds, vec![1, 2]);
        assert_eq!(RunConfigFile::parse(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn audio_paths_resolve() {
        let m = Path::new("/data/set/manifest.csv");
        assert_eq!(resolve_audio("a.wav", m, None), PathBuf::from("/data/set/a.wav"));
        assert_eq!(resolve_audio("a.wav", m, Some(Path::new("/root"))), PathBuf::from("/root/a.wav"));
        assert_eq!(resolve_audio("/x/a.wav", m, Some(Path::new("/root"))), PathBuf::from("/x/a.wav"));
    }

    #[test]
    fn undefined_cells_are_spelled_out() {
        assert_eq!(opt(None), "undefined");
        assert_eq!(opt(Some(0.5)), "0.500000");
    }
}
