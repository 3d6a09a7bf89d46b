//! Subjects, clinical labels, balancing and split plans.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::csv_field;
use crate::rng;

/// MMSE strictly below this value labels cognitive impairment.
pub const MMSE_CI_CUTOFF: u8 = 24;
/// HAM-D at or above this value labels depression.
pub const HAMD_DEPRESSION_CUTOFF: u32 = 8;
/// Oldest age (years) in age group 1.
pub const AGE_GROUP1_MAX: u32 = 65;
/// Share of each stratum assigned to training, as a fraction of ten.
const TRAIN_TENTHS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::F => "F",
            Gender::M => "M",
        })
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "F" | "f" => Ok(Gender::F),
            "M" | "m" => Ok(Gender::M),
            other => Err(Error::InvalidData(format!("unknown gender '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    /// 0–65 years.
    Group1,
    /// 66 years and older.
    Group2,
}

impl AgeGroup {
    pub fn number(self) -> u8 {
        match self {
            AgeGroup::Group1 => 1,
            AgeGroup::Group2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub utterance_id: String,
    pub gender: Gender,
    pub age: u32,
    pub mmse: u8,
    pub hamd: u32,
    /// Audio path as written in the manifest; empty for feature-only cohorts.
    #[serde(default)]
    pub wav_path: String,
}

impl SubjectRecord {
    pub fn validate(&self) -> Result<()> {
        if self.mmse > 30 {
            return Err(Error::InvalidData(format!(
                "subject '{}': MMSE {} outside 0..=30",
                self.subject_id, self.mmse
            )));
        }
        if self.subject_id.is_empty() || self.utterance_id.is_empty() {
            return Err(Error::InvalidData("empty subject_id or utterance_id".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    pub ci: bool,
    pub depressed: bool,
    pub age_group: AgeGroup,
}

impl LabelSet {
    pub fn get(&self, kind: LabelKind) -> bool {
        match kind {
            LabelKind::Ci => self.ci,
            LabelKind::Depression => self.depressed,
        }
    }
}

/// Derives the binary clinical labels and age group of a subject.
///
/// MMSE exactly 24 sits between the "below 24" and "above 24" rules; it is
/// labelled NCI and logged so audits can exclude such subjects.
pub fn derive_labels(record: &SubjectRecord) -> LabelSet {
    if record.mmse == MMSE_CI_CUTOFF {
        log::warn!(
            "subject '{}' has MMSE {}: labelled NCI (boundary)",
            record.subject_id,
            record.mmse
        );
    }
    LabelSet {
        ci: record.mmse < MMSE_CI_CUTOFF,
        depressed: record.hamd >= HAMD_DEPRESSION_CUTOFF,
        age_group: if record.age <= AGE_GROUP1_MAX {
            AgeGroup::Group1
        } else {
            AgeGroup::Group2
        },
    }
}

/// The binary target a task predicts or a split stratifies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Ci,
    Depression,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelKind::Ci => "ci",
            LabelKind::Depression => "depression",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CohortTag {
    #[serde(rename = "IMB")]
    Imbalanced,
    #[serde(rename = "CIB")]
    CiBalanced,
    #[serde(rename = "CIGB")]
    CiGenderBalanced,
    #[serde(rename = "REM")]
    Remaining,
    #[serde(rename = "custom")]
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub record: SubjectRecord,
    pub labels: LabelSet,
}

/// An immutable set of subjects with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    members: Vec<Member>,
    tag: CohortTag,
}

impl Cohort {
    pub fn new(records: Vec<SubjectRecord>, tag: CohortTag) -> Result<Self> {
        let members = records
            .into_iter()
            .map(|record| {
                record.validate()?;
                let labels = derive_labels(&record);
                Ok(Member { record, labels })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members, tag)
    }

    fn from_members(members: Vec<Member>, tag: CohortTag) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut utterances = HashSet::new();
        for m in &members {
            if !seen.insert(m.record.subject_id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate subject_id '{}'",
                    m.record.subject_id
                )));
            }
            if !utterances.insert(m.record.utterance_id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate utterance_id '{}'",
                    m.record.utterance_id
                )));
            }
        }
        Ok(Self { members, tag })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn tag(&self) -> CohortTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.members
            .iter()
            .map(|m| m.record.subject_id.as_str())
            .collect()
    }

    pub fn contains(&self, subject_id: &str) -> bool {
        self.members.iter().any(|m| m.record.subject_id == subject_id)
    }

    /// Members satisfying `pred`, keeping order.
    pub fn filter(&self, tag: CohortTag, pred: impl Fn(&Member) -> bool) -> Cohort {
        Cohort {
            members: self.members.iter().filter(|m| pred(m)).cloned().collect(),
            tag,
        }
    }

    /// Members whose subject ids are in `ids`, keeping cohort order.
    pub fn subset(&self, ids: &[String], tag: CohortTag) -> Cohort {
        let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
        self.filter(tag, |m| keep.contains(m.record.subject_id.as_str()))
    }

    pub fn count(&self, pred: impl Fn(&Member) -> bool) -> usize {
        self.members.iter().filter(|m| pred(m)).count()
    }
}

/// Keeps a uniformly drawn `keep` of `group` (member indices), preserving order.
fn sample_indices(group: &[usize], keep: usize, rng: &mut rng::Rng) -> Vec<usize> {
    if keep >= group.len() {
        return group.to_vec();
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, group.len(), keep)
        .into_iter()
        .map(|i| group[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn rebuild(cohort: &Cohort, mut keep: Vec<usize>, tag: CohortTag) -> Cohort {
    keep.sort_unstable();
    Cohort {
        members: keep.into_iter().map(|i| cohort.members[i].clone()).collect(),
        tag,
    }
}

/// Subsamples the majority CI class down to the minority count.
pub fn balance_ci(cohort: &Cohort, seed: u64) -> Result<Cohort> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..cohort.len()).partition(|&i| cohort.members[i].labels.ci);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyClass(format!(
            "balance_ci needs both classes (CI {}, NCI {})",
            pos.len(),
            neg.len()
        )));
    }
    let m = pos.len().min(neg.len());
    let mut rng = rng::seeded(seed);
    let mut keep = sample_indices(&pos, m, &mut rng);
    keep.extend(sample_indices(&neg, m, &mut rng));
    Ok(rebuild(cohort, keep, CohortTag::CiBalanced))
}

/// Subsamples each (CI status × gender) cell down to the smallest cell.
pub fn balance_ci_gender(cohort: &Cohort, seed: u64) -> Result<Cohort> {
    let mut cells: BTreeMap<(bool, Gender), Vec<usize>> = BTreeMap::new();
    for ci in [true, false] {
        for g in [Gender::F, Gender::M] {
            cells.insert((ci, g), Vec::new());
        }
    }
    for (i, m) in cohort.members.iter().enumerate() {
        cells
            .get_mut(&(m.labels.ci, m.record.gender))
            .expect("all cells present")
            .push(i);
    }
    if let Some(((ci, g), _)) = cells.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::EmptyClass(format!(
            "balance_ci_gender: cell {} {g} is empty",
            if *ci { "CI" } else { "NCI" }
        )));
    }
    let m = cells.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = rng::seeded(seed);
    let mut keep = Vec::new();
    // CI before NCI, F before M
    for ci in [true, false] {
        for g in [Gender::F, Gender::M] {
            keep.extend(sample_indices(&cells[&(ci, g)], m, &mut rng));
        }
    }
    Ok(rebuild(cohort, keep, CohortTag::CiGenderBalanced))
}

/// Members of `full` that are not in `balanced`.
pub fn remaining_after_balance(full: &Cohort, balanced: &Cohort) -> Result<Cohort> {
    let full_ids: HashSet<&str> = full.ids().into_iter().collect();
    if let Some(foreign) = balanced.ids().into_iter().find(|id| !full_ids.contains(id)) {
        return Err(Error::InvalidData(format!(
            "balanced cohort contains '{foreign}', which is not in the full cohort"
        )));
    }
    let used: HashSet<&str> = balanced.ids().into_iter().collect();
    Ok(full.filter(CohortTag::Remaining, |m| {
        !used.contains(m.record.subject_id.as_str())
    }))
}

/// A 70/30 train/test partition of a cohort, stratified on one label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub stratify_on: LabelKind,
}

/// Splits each stratum so that `floor(0.7 n)` members train and the rest
/// test. Id lists follow cohort order.
pub fn stratified_split(cohort: &Cohort, stratify_on: LabelKind, seed: u64) -> Result<SplitPlan> {
    let mut rng = rng::seeded(seed);
    let mut train = HashSet::new();
    for positive in [true, false] {
        let mut stratum: Vec<&str> = cohort
            .members
            .iter()
            .filter(|m| m.labels.get(stratify_on) == positive)
            .map(|m| m.record.subject_id.as_str())
            .collect();
        if stratum.len() < 2 {
            return Err(Error::StratumTooSmall {
                stratum: format!("{stratify_on}={positive}"),
                size: stratum.len(),
            });
        }
        stratum.shuffle(&mut rng);
        let n_train = stratum.len() * TRAIN_TENTHS / 10;
        train.extend(stratum.into_iter().take(n_train));
    }
    let (train_ids, test_ids): (Vec<String>, Vec<String>) = cohort
        .ids()
        .into_iter()
        .map(str::to_string)
        .partition(|id| train.contains(id.as_str()));
    Ok(SplitPlan {
        train_ids,
        test_ids,
        seed,
        stratify_on,
    })
}

/// Reads the subject manifest CSV
/// (`subject_id, utterance_id, gender, age, mmse, hamd, wav_path`).
pub fn read_manifest(path: &Path) -> Result<Vec<SubjectRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<SubjectRecord>().enumerate() {
        let rec = row.map_err(|e| Error::csv(path, format!("row {}: {e}", i + 2)))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[SubjectRecord]) -> Result<()> {
    let mut s = String::from("subject_id,utterance_id,gender,age,mmse,hamd,wav_path\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&r.subject_id),
            csv_field(&r.utterance_id),
            r.gender,
            r.age,
            r.mmse,
            r.hamd,
            csv_field(&r.wav_path)
        ));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn record(id: &str, gender: Gender, ci: bool, depressed: bool, age: u32) -> SubjectRecord {
        SubjectRecord {
            subject_id: id.to_string(),
            utterance_id: format!("utt-{id}"),
            gender,
            age,
            mmse: if ci { 18 } else { 29 },
            hamd: if depressed { 10 } else { 3 },
            wav_path: String::new(),
        }
    }

    /// Cohort with the given (CI-F, CI-M, NCI-F, NCI-M) cell sizes.
    pub(crate) fn census(ci_f: usize, ci_m: usize, nci_f: usize, nci_m: usize) -> Cohort {
        let mut recs = Vec::new();
        for (ci, g, n) in [
            (true, Gender::F, ci_f),
            (true, Gender::M, ci_m),
            (false, Gender::F, nci_f),
            (false, Gender::M, nci_m),
        ] {
            for i in 0..n {
                let id = format!("{}{}{i}", if ci { "ci" } else { "nc" }, g);
                recs.push(record(&id, g, ci, i % 3 == 0, 60 + (i as u32 % 20)));
            }
        }
        Cohort::new(recs, CohortTag::Imbalanced).unwrap()
    }

    fn cell(c: &Cohort, ci: bool, g: Gender) -> usize {
        c.count(|m| m.labels.ci == ci && m.record.gender == g)
    }

    #[test]
    fn label_thresholds() {
        let mut r = record("a", Gender::F, true, false, 70);
        r.mmse = 23;
        assert!(derive_labels(&r).ci);
        r.mmse = 24;
        assert!(!derive_labels(&r).ci);
        r.hamd = 8;
        assert!(derive_labels(&r).depressed);
        r.hamd = 7;
        assert!(!derive_labels(&r).depressed);
        r.age = 65;
        assert_eq!(derive_labels(&r).age_group, AgeGroup::Group1);
        r.age = 66;
        assert_eq!(derive_labels(&r).age_group, AgeGroup::Group2);
    }

    #[test]
    fn mmse_out_of_range_rejected() {
        let mut r = record("a", Gender::F, true, false, 70);
        r.mmse = 31;
        assert!(Cohort::new(vec![r], CohortTag::Custom).is_err());
    }

    #[test]
    fn table_census_balance_ci() {
        let full = census(97, 42, 51, 39);
        let b = balance_ci(&full, 1).unwrap();
        assert_eq!(b.count(|m| m.labels.ci), 90);
        assert_eq!(b.count(|m| !m.labels.ci), 90);
        // minority untouched
        assert_eq!(cell(&b, false, Gender::F), 51);
        assert_eq!(cell(&b, false, Gender::M), 39);
    }

    #[test]
    fn table_census_balance_ci_gender() {
        let full = census(97, 42, 51, 39);
        let b = balance_ci_gender(&full, 1).unwrap();
        for ci in [true, false] {
            for g in [Gender::F, Gender::M] {
                assert_eq!(cell(&b, ci, g), 39);
            }
        }
        let rem = remaining_after_balance(&full, &b).unwrap();
        assert_eq!(cell(&rem, true, Gender::F), 58);
        assert_eq!(cell(&rem, true, Gender::M), 3);
        assert_eq!(cell(&rem, false, Gender::F), 12);
        assert_eq!(cell(&rem, false, Gender::M), 0);
    }

    #[test]
    fn balance_is_noop_when_balanced() {
        let c = census(5, 5, 5, 5);
        assert_eq!(balance_ci(&c, 3).unwrap().members(), c.members());
        assert_eq!(balance_ci_gender(&c, 3).unwrap().members(), c.members());
    }

    #[test]
    fn small_balance_is_repeatable() {
        let c = census(5, 0, 3, 0);
        let a = balance_ci(&c, 11).unwrap();
        let b = balance_ci(&c, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count(|m| m.labels.ci), 3);
        assert_eq!(a.count(|m| !m.labels.ci), 3);
        let cg = balance_ci_gender(&census(4, 2, 3, 2), 0).unwrap();
        assert_eq!(cg.len(), 8);
    }

    #[test]
    fn balance_errors_on_empty() {
        assert!(balance_ci(&census(3, 0, 0, 0), 0).is_err());
        assert!(balance_ci_gender(&census(3, 3, 3, 0), 0).is_err());
    }

    #[test]
    fn split_counts() {
        let c = census(5, 5, 5, 5);
        let p = stratified_split(&c, LabelKind::Ci, 0).unwrap();
        let train = c.subset(&p.train_ids, CohortTag::Custom);
        assert_eq!(train.count(|m| m.labels.ci), 7);
        assert_eq!(train.count(|m| !m.labels.ci), 7);
        assert_eq!(p.test_ids.len(), 6);
        assert_eq!(p, stratified_split(&c, LabelKind::Ci, 0).unwrap());
        assert_ne!(p, stratified_split(&c, LabelKind::Ci, 50).unwrap());

        let c = census(45, 45, 45, 45);
        let p = stratified_split(&c, LabelKind::Ci, 100).unwrap();
        let train = c.subset(&p.train_ids, CohortTag::Custom);
        assert_eq!(train.count(|m| m.labels.ci), 63);
        assert_eq!(train.count(|m| !m.labels.ci), 63);
        assert_eq!(p.test_ids.len(), 54);
    }

    #[test]
    fn split_rejects_tiny_stratum() {
        let c = census(1, 0, 3, 0);
        assert!(matches!(
            stratified_split(&c, LabelKind::Ci, 0),
            Err(Error::StratumTooSmall { .. })
        ));
    }

    #[test]
    fn remaining_errors_on_foreign() {
        let full = census(2, 2, 2, 2);
        assert!(remaining_after_balance(&full, &full).unwrap().is_empty());
        let other = Cohort::new(
            vec![record("zz", Gender::F, true, false, 70)],
            CohortTag::Custom,
        )
        .unwrap();
        assert!(remaining_after_balance(&full, &other).is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mut recs: Vec<_> = census(2, 1, 1, 1)
            .members()
            .iter()
            .map(|m| m.record.clone())
            .collect();
        recs[0].wav_path = "audio/a, b.wav".into();
        write_manifest(&p, &recs).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), recs);
    }
}
