use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ConfusionCounts, TTest};
use crate::dataset::{AgeGroup, Gender, Member};
use crate::error::{Error, Result};

/// A demographic or clinical axis along which subgroups are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    AgeGroup,
    Gender,
    Depression,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::AgeGroup, Dimension::Gender, Dimension::Depression];

    /// The ordered pair (A, B) used for Δ = metric_A − metric_B.
    pub fn groups(self) -> [&'static str; 2] {
        match self {
            Dimension::AgeGroup => ["group1", "group2"],
            Dimension::Gender => ["male", "female"],
            Dimension::Depression => ["non_depressed", "depressed"],
        }
    }

    /// 0 for group A, 1 for group B.
    pub fn group_index(self, member: &Member) -> usize {
        match self {
            Dimension::AgeGroup => match member.labels.age_group {
                AgeGroup::Group1 => 0,
                AgeGroup::Group2 => 1,
            },
            Dimension::Gender => match member.record.gender {
                Gender::M => 0,
                Gender::F => 1,
            },
            Dimension::Depression => usize::from(member.labels.depressed),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::AgeGroup => "age_group",
            Dimension::Gender => "gender",
            Dimension::Depression => "depression",
        })
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "age_group" | "age" => Ok(Dimension::AgeGroup),
            "gender" => Ok(Dimension::Gender),
            "depression" => Ok(Dimension::Depression),
            other => Err(Error::Config(format!("unknown dimension '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub dimension: Dimension,
    pub group: String,
}

/// Sensitivity and specificity within one subgroup. A metric whose class is
/// absent from the subgroup is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub key: GroupKey,
    pub n_pos: usize,
    pub n_neg: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// Specificity − sensitivity: positive leans NCI, negative leans CI.
    pub delta: Option<f64>,
}

impl SubgroupReport {
    pub fn from_counts(key: GroupKey, counts: &ConfusionCounts) -> Self {
        let sensitivity = counts.sensitivity();
        let specificity = counts.specificity();
        Self {
            key,
            n_pos: counts.positives(),
            n_neg: counts.negatives(),
            sensitivity,
            specificity,
            delta: specificity.zip(sensitivity).map(|(sp, se)| sp - se),
        }
    }
}

/// Subgroup sensitivity, specificity and δ from `(label, prediction)` pairs
/// of the subgroup's members.
pub fn subgroup_metrics(key: GroupKey, pairs: &[(bool, bool)]) -> Result<SubgroupReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyClass(format!(
            "subgroup {}={} is empty",
            key.dimension, key.group
        )));
    }
    let counts = ConfusionCounts::from_pairs(pairs.iter().copied());
    Ok(SubgroupReport::from_counts(key, &counts))
}

/// Inter-group disparity of one ordered pair of subgroups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub dimension: Dimension,
    pub group_a: String,
    pub group_b: String,
    pub delta_sens: Option<f64>,
    pub delta_spec: Option<f64>,
    pub sens_test: Option<TTest>,
    pub spec_test: Option<TTest>,
}

impl DisparityReport {
    /// Differences of whichever metrics both reports define.
    pub fn between(a: &SubgroupReport, b: &SubgroupReport) -> Self {
        Self {
            dimension: a.key.dimension,
            group_a: a.key.group.clone(),
            group_b: b.key.group.clone(),
            delta_sens: a.sensitivity.zip(b.sensitivity).map(|(x, y)| x - y),
            delta_spec: a.specificity.zip(b.specificity).map(|(x, y)| x - y),
            sens_test: None,
            spec_test: None,
        }
    }

    pub fn sens_significant(&self) -> bool {
        self.sens_test.is_some_and(|t| t.significant(0.05))
    }

    pub fn spec_significant(&self) -> bool {
        self.spec_test.is_some_and(|t| t.significant(0.05))
    }

    pub fn significant(&self) -> bool {
        self.sens_significant() || self.spec_significant()
    }
}

/// Δ_sens and Δ_spec of A relative to B; errors when either report leaves a
/// metric undefined.
pub fn disparity(a: &SubgroupReport, b: &SubgroupReport) -> Result<DisparityReport> {
    if a.key.dimension != b.key.dimension {
        return Err(Error::InvalidData(format!(
            "cannot compare {} with {}",
            a.key.dimension, b.key.dimension
        )));
    }
    let report = DisparityReport::between(a, b);
    if report.delta_sens.is_none() || report.delta_spec.is_none() {
        return Err(Error::EmptyClass(format!(
            "disparity {}: {} vs {} has an undefined metric",
            a.key.dimension, a.key.group, b.key.group
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(g: &str) -> GroupKey {
        GroupKey {
            dimension: Dimension::Gender,
            group: g.into(),
        }
    }

    fn report(g: &str, se: f64, sp: f64) -> SubgroupReport {
        SubgroupReport {
            key: key(g),
            n_pos: 1,
            n_neg: 1,
            sensitivity: Some(se),
            specificity: Some(sp),
            delta: Some(sp - se),
        }
    }

    #[test]
    fn subgroup_arithmetic() {
        // 2 CI (1 correct), 4 NCI (3 correct)
        let pairs = [
            (true, true),
            (true, false),
            (false, false),
            (false, false),
            (false, false),
            (false, true),
        ];
        let r = subgroup_metrics(key("male"), &pairs).unwrap();
        assert_eq!(r.sensitivity, Some(0.5));
        assert_eq!(r.specificity, Some(0.75));
        assert_eq!(r.delta, Some(0.25));
        assert_eq!((r.n_pos, r.n_neg), (2, 4));
    }

    #[test]
    fn perfect_subgroup_has_zero_delta() {
        let r = subgroup_metrics(key("f"), &[(true, true), (false, false)]).unwrap();
        assert_eq!(r.delta, Some(0.0));
    }

    #[test]
    fn table_values() {
        let male = report("male", 0.76, 0.86);
        assert!((male.delta.unwrap() - 0.10).abs() < 1e-12);
        let female = report("female", 0.83, 0.68);
        let d = disparity(&male, &female).unwrap();
        assert!((d.delta_spec.unwrap() - 0.18).abs() < 1e-12);
        let g1 = report("group1", 0.78, 0.84);
        let g2 = report("group2", 0.75, 0.69);
        assert!((disparity(&g1, &g2).unwrap().delta_spec.unwrap() - 0.15).abs() < 1e-12);
        let same = disparity(&male, &male).unwrap();
        assert_eq!((same.delta_sens, same.delta_spec), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn undefined_metrics() {
        let r = subgroup_metrics(key("depressed"), &[(true, true), (true, false)]).unwrap();
        assert_eq!(r.specificity, None);
        assert_eq!(r.delta, None);
        assert!(disparity(&report("a", 0.5, 0.5), &r).is_err());
        assert!(subgroup_metrics(key("x"), &[]).is_err());
    }
}
