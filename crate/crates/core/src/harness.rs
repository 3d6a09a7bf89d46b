//! Experiment orchestration: conditions, splits, seeds, aggregation, layer
//! sweeps, cross-task transfer and subgroup bias analysis.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::{ClassifierKind, Normalizer, TrainOptions, TrainedModel};
use crate::dataset::{
    balance_ci, balance_ci_gender, remaining_after_balance, stratified_split, Cohort, CohortTag, LabelKind,
    Member,
};
use crate::embedding::{load_layer, IndexEntry, LayerId};
use crate::error::{Error, Result};
use crate::features::{FeatureSetId, FeatureTable};
use crate::metrics::{
    auc, core_metrics, paired_ttest, score_distribution, ConfusionCounts, Dimension, DisparityReport, GroupKey,
    MetricReport, ScoreDistribution, SubgroupReport, TTest,
};
use crate::rng;

pub const DEFAULT_SEEDS: [u64; 5] = [0, 50, 100, 150, 200];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CiVsNci,
    DciVsNdci,
    CrossTrainCiTestD,
    CrossTrainDTestCi,
}

impl Task {
    pub fn train_label(self) -> LabelKind {
        match self {
            Task::CiVsNci | Task::CrossTrainCiTestD => LabelKind::Ci,
            Task::DciVsNdci | Task::CrossTrainDTestCi => LabelKind::Depression,
        }
    }

    pub fn test_label(self) -> LabelKind {
        match self {
            Task::CiVsNci | Task::CrossTrainDTestCi => LabelKind::Ci,
            Task::DciVsNdci | Task::CrossTrainCiTestD => LabelKind::Depression,
        }
    }

    pub fn is_cross(self) -> bool {
        matches!(self, Task::CrossTrainCiTestD | Task::CrossTrainDTestCi)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::CiVsNci => "ci_vs_nci",
            Task::DciVsNdci => "dci_vs_ndci",
            Task::CrossTrainCiTestD => "cross_train_ci_test_d",
            Task::CrossTrainDTestCi => "cross_train_d_test_ci",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ci_vs_nci" => Ok(Task::CiVsNci),
            "dci_vs_ndci" => Ok(Task::DciVsNdci),
            "cross_train_ci_test_d" => Ok(Task::CrossTrainCiTestD),
            "cross_train_d_test_ci" => Ok(Task::CrossTrainDTestCi),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "IMB")]
    Imb,
    #[serde(rename = "CIB")]
    Cib,
    #[serde(rename = "CIGB")]
    Cigb,
    /// Train on a CI-gender-balanced draw, test on everyone left over.
    #[serde(rename = "train_bal_test_rem")]
    TrainBalTestRem,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Imb => "IMB",
            Condition::Cib => "CIB",
            Condition::Cigb => "CIGB",
            Condition::TrainBalTestRem => "train_bal_test_rem",
        })
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IMB" | "imb" => Ok(Condition::Imb),
            "CIB" | "cib" => Ok(Condition::Cib),
            "CIGB" | "cigb" => Ok(Condition::Cigb),
            "train_bal_test_rem" => Ok(Condition::TrainBalTestRem),
            other => Err(Error::Config(format!("unknown condition '{other}'"))),
        }
    }
}

/// One fully specified experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub condition: Condition,
    pub feature: FeatureSetId,
    pub classifier: ClassifierKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub balance_seed: u64,
    #[serde(default)]
    pub train: TrainOptions,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

impl ExperimentConfig {
    pub fn new(task: Task, condition: Condition, feature: FeatureSetId, classifier: ClassifierKind) -> Self {
        Self {
            task,
            condition,
            feature,
            classifier,
            seeds: default_seeds(),
            balance_seed: 0,
            train: TrainOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.task.is_cross() && self.condition != Condition::Cigb {
            return Err(Error::Config(format!(
                "task {} runs on the CIGB condition, not {}",
                self.task, self.condition
            )));
        }
        Ok(())
    }
}

/// SHA-256 of the ids joined by newlines, hex encoded.
pub fn ids_hash<S: AsRef<str>>(ids: &[S]) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_ref().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// One test-set prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub subject_id: String,
    pub utterance_id: String,
    pub label: bool,
    pub score: f64,
    pub prediction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: MetricReport,
    pub n_train: usize,
    pub n_test: usize,
    pub train_ids_hash: String,
    pub test_ids_hash: String,
    pub normalizer_fit_hash: String,
    pub threshold: f64,
    pub model: serde_json::Value,
    pub scores: Vec<ScoredSample>,
}

/// Per-metric statistics across seeds, in [`MetricReport::NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub accuracy: f64,
    pub uar: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

impl MetricStats {
    fn from_values(v: [f64; 4]) -> Self {
        Self {
            accuracy: v[0],
            uar: v[1],
            sensitivity: v[2],
            specificity: v[3],
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.uar, self.sensitivity, self.specificity]
    }
}

/// Mean and population standard deviation, summed in seed order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(runs: &[SeedRun]) -> (MetricStats, MetricStats) {
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for k in 0..4 {
        let column: Vec<f64> = runs.iter().map(|r| r.metrics.values()[k]).collect();
        (mean[k], std[k]) = mean_std(&column);
    }
    (MetricStats::from_values(mean), MetricStats::from_values(std))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub mean: MetricStats,
    pub std: MetricStats,
}

fn feature_matrix(members: &[Member], features: &FeatureTable) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((members.len(), features.dim));
    for (i, m) in members.iter().enumerate() {
        let row = features
            .get(&m.record.utterance_id)
            .ok_or_else(|| Error::MissingFeatures(m.record.utterance_id.clone()))?;
        x.row_mut(i).assign(&ndarray::ArrayView1::from(row));
    }
    Ok(x)
}

/// Checks every member has a feature row before any training starts.
pub fn check_features(cohort: &Cohort, features: &FeatureTable) -> Result<()> {
    match cohort
        .members()
        .iter()
        .find(|m| features.get(&m.record.utterance_id).is_none())
    {
        Some(m) => Err(Error::MissingFeatures(m.record.utterance_id.clone())),
        None => Ok(()),
    }
}

fn restrict(cohort: Cohort, task: Task) -> Cohort {
    if task == Task::DciVsNdci {
        let tag = cohort.tag();
        cohort.filter(tag, |m| m.labels.ci)
    } else {
        cohort
    }
}

/// The cohort a fixed-cohort condition partitions, already restricted for
/// the task. `None` for train-balanced/test-remaining, which redraws per seed.
pub fn condition_cohort(full: &Cohort, config: &ExperimentConfig) -> Result<Option<Cohort>> {
    let c = match config.condition {
        Condition::Imb => full.filter(CohortTag::Imbalanced, |_| true),
        Condition::Cib => balance_ci(full, config.balance_seed)?,
        Condition::Cigb => balance_ci_gender(full, config.balance_seed)?,
        Condition::TrainBalTestRem => return Ok(None),
    };
    Ok(Some(restrict(c, config.task)))
}

fn train_test(full: &Cohort, fixed: Option<&Cohort>, config: &ExperimentConfig, seed: u64) -> Result<(Cohort, Cohort)> {
    match fixed {
        Some(c) => {
            let plan = stratified_split(c, config.task.train_label(), seed)?;
            Ok((
                c.subset(&plan.train_ids, CohortTag::Custom),
                c.subset(&plan.test_ids, CohortTag::Custom),
            ))
        }
        None => {
            let balanced = balance_ci_gender(full, rng::derive_seed(config.balance_seed, seed))?;
            let rest = restrict(remaining_after_balance(full, &balanced)?, config.task);
            if rest.is_empty() {
                return Err(Error::EmptyClass(
                    "no subjects remain after balancing to form a test set".into(),
                ));
            }
            Ok((restrict(balanced, config.task), rest))
        }
    }
}

fn run_seed(
    full: &Cohort,
    fixed: Option<&Cohort>,
    features: &FeatureTable,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<SeedRun> {
    let (train, test) = train_test(full, fixed, config, seed)?;
    let train_label = config.task.train_label();
    let test_label = config.task.test_label();
    let train_ids: Vec<&str> = train.members().iter().map(|m| m.record.utterance_id.as_str()).collect();
    let test_ids: Vec<&str> = test.members().iter().map(|m| m.record.utterance_id.as_str()).collect();

    let x_train = feature_matrix(train.members(), features)?;
    let x_test = feature_matrix(test.members(), features)?;
    let y_train: Vec<bool> = train.members().iter().map(|m| m.labels.get(train_label)).collect();
    let y_test: Vec<bool> = test.members().iter().map(|m| m.labels.get(test_label)).collect();

    let normalizer = Normalizer::fit(&x_train, ids_hash(&train_ids))?;
    let x_train = normalizer.apply(&x_train)?;
    let x_test = normalizer.apply(&x_test)?;

    let mut opts = config.train.clone();
    opts.cv_seed = seed;
    if config.condition == Condition::TrainBalTestRem {
        // no split to vary, so the classifiers' own seeds follow the run seed
        opts.rf.seed = rng::derive_seed(config.train.rf.seed, seed);
        opts.mlp.seed = rng::derive_seed(config.train.mlp.seed, seed);
    }
    let model = TrainedModel::train(config.classifier, &x_train, &y_train, &opts)?;
    let scored = model.score(&x_test)?;
    let counts = ConfusionCounts::from_pairs(y_test.iter().copied().zip(scored.predictions.iter().copied()));
    let metrics = core_metrics(&counts)?;

    let scores = test
        .members()
        .iter()
        .zip(&y_test)
        .zip(scored.scores.iter().zip(&scored.predictions))
        .map(|((m, &label), (&score, &prediction))| ScoredSample {
            subject_id: m.record.subject_id.clone(),
            utterance_id: m.record.utterance_id.clone(),
            label,
            score,
            prediction,
        })
        .collect();
    Ok(SeedRun {
        seed,
        metrics,
        n_train: train.len(),
        n_test: test.len(),
        train_ids_hash: ids_hash(&train_ids),
        test_ids_hash: ids_hash(&test_ids),
        normalizer_fit_hash: normalizer.fit_set_hash,
        threshold: scored.threshold,
        model: model.summary(),
        scores,
    })
}

/// Runs every seed of `config` on `full`, the complete census.
///
/// Seeds run in parallel; results are collected in seed order so the output
/// does not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig, full: &Cohort, features: &FeatureTable) -> Result<AggregateResult> {
    config.validate()?;
    if features.feature_set != config.feature {
        return Err(Error::Config(format!(
            "config asks for {} but the feature table holds {}",
            config.feature, features.feature_set
        )));
    }
    let fixed = condition_cohort(full, config)?;
    check_features(fixed.as_ref().unwrap_or(full), features)?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(full, fixed.as_ref(), features, config, seed))
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = aggregate(&runs);
    Ok(AggregateResult {
        config: config.clone(),
        runs,
        mean,
        std,
    })
}

/// Train on one label set, score against the other.
pub fn cross_task_eval(config: &ExperimentConfig, full: &Cohort, features: &FeatureTable) -> Result<AggregateResult> {
    if !config.task.is_cross() {
        return Err(Error::Config(format!("{} is not a cross-task", config.task)));
    }
    run_experiment(config, full, features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub layer: LayerId,
    pub classifier: ClassifierKind,
    pub result: AggregateResult,
}

/// One aggregate per (layer, classifier), layers in the given order.
pub fn layer_sweep(
    template: &ExperimentConfig,
    full: &Cohort,
    index: &[IndexEntry],
    layers: &[LayerId],
    classifiers: &[ClassifierKind],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &layer in layers {
        let vectors = load_layer(index, layer)?;
        if vectors.is_empty() {
            return Err(Error::InvalidData(format!("no archives for layer {layer}")));
        }
        let table = FeatureTable::from_vectors(FeatureSetId::W2v2(layer), vectors)?;
        for &classifier in classifiers {
            let mut config = template.clone();
            config.feature = FeatureSetId::W2v2(layer);
            config.classifier = classifier;
            let result = run_experiment(&config, full, &table)?;
            rows.push(SweepRow {
                layer,
                classifier,
                result,
            });
        }
    }
    Ok(rows)
}

/// One subgroup summarized over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub dimension: Dimension,
    pub group: String,
    /// Positive and negative test samples pooled over seeds.
    pub n_pos: usize,
    pub n_neg: usize,
    /// Means over the seeds where the metric is defined.
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// `specificity − sensitivity` of the two fields above.
    pub delta: Option<f64>,
    pub auc: Option<f64>,
    /// Overlap of the pooled per-class score histograms.
    pub overlap: Option<f64>,
    pub per_seed: Vec<SubgroupReport>,
    pub per_seed_auc: Vec<Option<f64>>,
    pub distribution: Option<ScoreDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionAnalysis {
    pub dimension: Dimension,
    pub group_a: GroupSummary,
    pub group_b: GroupSummary,
    pub disparity: DisparityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAnalysis {
    pub dimensions: Vec<DimensionAnalysis>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn summarize_group(
    dimension: Dimension,
    group: usize,
    result: &AggregateResult,
    cohort: &Cohort,
    n_bins: usize,
) -> Result<GroupSummary> {
    let name = dimension.groups()[group].to_string();
    let member_of: std::collections::HashMap<&str, &Member> = cohort
        .members()
        .iter()
        .map(|m| (m.record.subject_id.as_str(), m))
        .collect();
    let mut per_seed = Vec::with_capacity(result.runs.len());
    let mut per_seed_auc = Vec::with_capacity(result.runs.len());
    let (mut pooled_pos, mut pooled_neg) = (Vec::new(), Vec::new());
    for run in &result.runs {
        let mut pairs = Vec::new();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for s in &run.scores {
            let m = member_of
                .get(s.subject_id.as_str())
                .ok_or_else(|| Error::InvalidData(format!("scored subject '{}' is not in the cohort", s.subject_id)))?;
            if dimension.group_index(m) != group {
                continue;
            }
            pairs.push((s.label, s.prediction));
            if s.label {
                pos.push(s.score);
            } else {
                neg.push(s.score);
            }
        }
        let key = GroupKey {
            dimension,
            group: name.clone(),
        };
        per_seed.push(SubgroupReport::from_counts(key, &ConfusionCounts::from_pairs(pairs)));
        per_seed_auc.push(if pos.is_empty() || neg.is_empty() {
            None
        } else {
            Some(auc(&pos, &neg)?.auc)
        });
        pooled_pos.extend(pos);
        pooled_neg.extend(neg);
    }
    let sensitivity = mean_defined(per_seed.iter().map(|r| r.sensitivity));
    let specificity = mean_defined(per_seed.iter().map(|r| r.specificity));
    let distribution = if pooled_pos.is_empty() || pooled_neg.is_empty() {
        None
    } else {
        Some(score_distribution(&pooled_pos, &pooled_neg, n_bins)?)
    };
    Ok(GroupSummary {
        dimension,
        group: name,
        n_pos: pooled_pos.len(),
        n_neg: pooled_neg.len(),
        sensitivity,
        specificity,
        delta: specificity.zip(sensitivity).map(|(sp, se)| sp - se),
        auc: mean_defined(per_seed_auc.iter().copied()),
        overlap: distribution.as_ref().map(|d| d.overlap),
        per_seed,
        per_seed_auc,
        distribution,
    })
}

/// Paired test over the seeds where both groups define the metric.
fn seed_test(a: &[SubgroupReport], b: &[SubgroupReport], metric: fn(&SubgroupReport) -> Option<f64>) -> Result<Option<TTest>> {
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(metric(x)? - metric(y)?))
        .collect();
    if diffs.len() < 2 {
        return Ok(None);
    }
    paired_ttest(&diffs).map(Some)
}

/// Subgroup metrics, disparities with per-seed paired t-tests, subgroup AUC
/// and score distributions. `cohort` must contain every scored subject.
pub fn bias_analysis(
    result: &AggregateResult,
    cohort: &Cohort,
    dimensions: &[Dimension],
    n_bins: usize,
) -> Result<BiasAnalysis> {
    if result.runs.iter().any(|r| r.scores.is_empty()) {
        return Err(Error::InvalidData("bias analysis needs per-sample scores for every seed".into()));
    }
    let dimensions = dimensions
        .iter()
        .map(|&dimension| {
            let group_a = summarize_group(dimension, 0, result, cohort, n_bins)?;
            let group_b = summarize_group(dimension, 1, result, cohort, n_bins)?;
            let disparity = DisparityReport {
                dimension,
                group_a: group_a.group.clone(),
                group_b: group_b.group.clone(),
                delta_sens: group_a.sensitivity.zip(group_b.sensitivity).map(|(x, y)| x - y),
                delta_spec: group_a.specificity.zip(group_b.specificity).map(|(x, y)| x - y),
                sens_test: seed_test(&group_a.per_seed, &group_b.per_seed, |r| r.sensitivity)?,
                spec_test: seed_test(&group_a.per_seed, &group_b.per_seed, |r| r.specificity)?,
            };
            Ok(DimensionAnalysis {
                dimension,
                group_a,
                group_b,
                disparity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BiasAnalysis { dimensions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gen_cohort, SyntheticSpec};

    fn setup(n: usize, shift: f64) -> (Cohort, FeatureTable) {
        let spec = SyntheticSpec::uniform(n, 3, shift, 1.0, 5);
        let c = gen_cohort(&spec).unwrap();
        let cohort = Cohort::new(c.records, CohortTag::Imbalanced).unwrap();
        let table = FeatureTable::from_vectors(spec.feature_set(), c.features).unwrap();
        (cohort, table)
    }

    fn quick(task: Task, condition: Condition, classifier: ClassifierKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(task, condition, FeatureSetId::Custom("synthetic".into()), classifier);
        c.train.rf.n_trees = 10;
        c
    }

    #[test]
    fn single_seed_has_zero_std() {
        let (cohort, table) = setup(6, 3.0);
        let mut config = quick(Task::CiVsNci, Condition::Imb, ClassifierKind::Rf);
        config.seeds = vec![7];
        let r = run_experiment(&config, &cohort, &table).unwrap();
        assert_eq!(r.std.values(), [0.0; 4]);
        assert_eq!(r.mean, MetricStats::from_values(r.runs[0].metrics.values()));
    }

    #[test]
    fn aggregate_is_recomputable() {
        let (cohort, table) = setup(6, 1.0);
        let r = run_experiment(&quick(Task::CiVsNci, Condition::Cib, ClassifierKind::Rf), &cohort, &table).unwrap();
        let uars: Vec<f64> = r.runs.iter().map(|s| s.metrics.uar).collect();
        assert_eq!(mean_std(&uars), (r.mean.uar, r.std.uar));
        for run in &r.runs {
            assert_eq!(run.normalizer_fit_hash, run.train_ids_hash);
            assert_eq!(run.n_test, run.scores.len());
        }
    }

    #[test]
    fn dci_keeps_only_ci_subjects() {
        let (cohort, table) = setup(6, 1.0);
        let r = run_experiment(&quick(Task::DciVsNdci, Condition::Imb, ClassifierKind::Rf), &cohort, &table).unwrap();
        let ci: std::collections::HashSet<&str> = cohort
            .members()
            .iter()
            .filter(|m| m.labels.ci)
            .map(|m| m.record.subject_id.as_str())
            .collect();
        assert!(r.runs.iter().flat_map(|s| &s.scores).all(|s| ci.contains(s.subject_id.as_str())));
        assert_eq!(r.runs[0].n_train + r.runs[0].n_test, ci.len());
    }

    #[test]
    fn train_bal_test_rem_is_disjoint() {
        let (cohort, table) = setup(6, 2.0);
        // shrink one NCI cell so both classes remain after balancing
        let cohort = cohort.filter(CohortTag::Imbalanced, |m| {
            m.labels.ci || m.record.gender == crate::dataset::Gender::F || m.record.subject_id.ends_with(['0', '2', '4', '6'])
        });
        let r = run_experiment(
            &quick(Task::CiVsNci, Condition::TrainBalTestRem, ClassifierKind::Rf),
            &cohort,
            &table,
        )
        .unwrap();
        for run in &r.runs {
            assert_eq!(run.n_train + run.n_test, cohort.len());
        }
    }

    #[test]
    fn cross_task_requires_cigb() {
        let (cohort, table) = setup(4, 1.0);
        let config = quick(Task::CrossTrainCiTestD, Condition::Imb, ClassifierKind::Rf);
        assert_eq!(run_experiment(&config, &cohort, &table).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn missing_features_are_reported() {
        let (cohort, table) = setup(4, 1.0);
        let spec = SyntheticSpec::uniform(3, 3, 1.0, 1.0, 5);
        let small = gen_cohort(&spec).unwrap();
        let partial = FeatureTable::from_vectors(table.feature_set.clone(), small.features).unwrap();
        let err = run_experiment(&quick(Task::CiVsNci, Condition::Imb, ClassifierKind::Rf), &cohort, &partial)
            .unwrap_err();
        assert!(matches!(err, Error::MissingFeatures(_)), "{err}");
    }

    #[test]
    fn bias_identities_hold() {
        let (cohort, table) = setup(8, 1.5);
        let r = run_experiment(&quick(Task::CiVsNci, Condition::Imb, ClassifierKind::Rf), &cohort, &table).unwrap();
        let b = bias_analysis(&r, &cohort, &Dimension::ALL, 30).unwrap();
        assert_eq!(b.dimensions.len(), 3);
        for d in &b.dimensions {
            for g in [&d.group_a, &d.group_b] {
                assert_eq!(g.delta, Some(g.specificity.unwrap() - g.sensitivity.unwrap()));
            }
            assert_eq!(
                d.disparity.delta_spec,
                Some(d.group_a.specificity.unwrap() - d.group_b.specificity.unwrap())
            );
        }
    }
}
