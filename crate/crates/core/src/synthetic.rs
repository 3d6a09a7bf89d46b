//! Synthetic cohorts and audio with known properties.
//!
//! Every subject gets a feature vector `s·Δμ/2·u + σ·z` where `s` is +1 for
//! CI and −1 for NCI, `u` is the all-ones direction scaled to unit length and
//! `z` is standard normal. Within a group the CI-vs-NCI AUC of the projection
//! on `u` is therefore `Φ(Δμ / (σ√2))`.

use std::f64::consts::{PI, SQRT_2};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{write_manifest, AgeGroup, Gender, SubjectRecord};
use crate::embedding::{write_embedding_file, write_index, EmbeddingArchive, IndexEntry, LayerId};
use crate::error::{Error, Result};
use crate::features::{write_feature_csv, FeatureSetId, FeatureVector};
use crate::rng;
use crate::signal::{write_wav_pcm16, SAMPLE_RATE};

/// Subjects sharing gender, age group and depression status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub gender: Gender,
    pub age_group: AgeGroup,
    pub depressed: bool,
    pub n_ci: usize,
    pub n_nci: usize,
    /// Distance between the CI and NCI means along `u`.
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub groups: Vec<GroupSpec>,
    pub dim: usize,
    pub sigma: f64,
    pub seed: u64,
    #[serde(default = "default_feature_name")]
    pub feature_name: String,
}

fn default_feature_name() -> String {
    "synthetic".into()
}

impl SyntheticSpec {
    /// All eight (gender × age group × depression) groups with `n` subjects
    /// per class and the same shift.
    pub fn uniform(n: usize, dim: usize, shift: f64, sigma: f64, seed: u64) -> Self {
        let mut groups = Vec::new();
        for gender in [Gender::F, Gender::M] {
            for age_group in [AgeGroup::Group1, AgeGroup::Group2] {
                for depressed in [false, true] {
                    groups.push(GroupSpec {
                        gender,
                        age_group,
                        depressed,
                        n_ci: n,
                        n_nci: n,
                        shift,
                    });
                }
            }
        }
        Self {
            groups,
            dim,
            sigma,
            seed,
            feature_name: default_feature_name(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.dim == 0 {
            return Err(Error::Config("feature dim must be at least 1".into()));
        }
        if let Some(g) = self.groups.iter().find(|g| !g.shift.is_finite()) {
            return Err(Error::Config(format!("non-finite shift {}", g.shift)));
        }
        Ok(())
    }

    pub fn n_subjects(&self) -> usize {
        self.groups.iter().map(|g| g.n_ci + g.n_nci).sum()
    }

    pub fn feature_set(&self) -> FeatureSetId {
        FeatureSetId::Custom(self.feature_name.clone())
    }
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

/// `Φ(Δμ / (σ√2))`.
pub fn analytic_auc(shift: f64, sigma: f64) -> f64 {
    phi(shift / (sigma * SQRT_2))
}

/// The shift giving a target analytic AUC.
pub fn shift_for_auc(auc: f64, sigma: f64) -> f64 {
    sigma * SQRT_2 * Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(auc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub records: Vec<SubjectRecord>,
    pub features: Vec<FeatureVector>,
    /// Index into `spec.groups` for each subject.
    pub group_of: Vec<usize>,
}

fn subject_id(index: usize) -> String {
    format!("S{index:05}")
}

fn utterance_id(index: usize) -> String {
    format!("S{index:05}-u1")
}

/// Clinical scores consistent with the intended labels.
fn clinical_record(index: usize, group: &GroupSpec, ci: bool, rng: &mut rng::Rng) -> SubjectRecord {
    let mmse = if ci { rng.gen_range(10..=23) } else { rng.gen_range(25..=30) };
    let hamd = if group.depressed { rng.gen_range(8..=20) } else { rng.gen_range(0..=7) };
    let age = match group.age_group {
        AgeGroup::Group1 => rng.gen_range(50..=65),
        AgeGroup::Group2 => rng.gen_range(66..=85),
    };
    SubjectRecord {
        subject_id: subject_id(index),
        utterance_id: utterance_id(index),
        gender: group.gender,
        age,
        mmse,
        hamd,
        wav_path: String::new(),
    }
}

fn gaussian_vector(dim: usize, centre: f64, sigma: f64, rng: &mut rng::Rng) -> Vec<f64> {
    let unit = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            centre * unit + sigma * z
        })
        .collect()
}

/// Draws the cohort. Each group uses its own derived stream, so editing one
/// group leaves the others unchanged.
pub fn gen_cohort(spec: &SyntheticSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let feature_set = spec.feature_set();
    let mut records = Vec::with_capacity(spec.n_subjects());
    let mut features = Vec::with_capacity(spec.n_subjects());
    let mut group_of = Vec::with_capacity(spec.n_subjects());
    for (gi, group) in spec.groups.iter().enumerate() {
        let mut rng = rng::seeded(rng::derive_seed(spec.seed, gi as u64));
        for (ci, n) in [(true, group.n_ci), (false, group.n_nci)] {
            let centre = if ci { group.shift / 2.0 } else { -group.shift / 2.0 };
            for _ in 0..n {
                let index = records.len();
                let record = clinical_record(index, group, ci, &mut rng);
                let values = gaussian_vector(spec.dim, centre, spec.sigma, &mut rng);
                features.push(FeatureVector::new(record.utterance_id.clone(), feature_set.clone(), values)?);
                records.push(record);
                group_of.push(gi);
            }
        }
    }
    Ok(SyntheticCohort {
        records,
        features,
        group_of,
    })
}

/// Paths written by [`write_cohort`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortFiles {
    pub manifest: PathBuf,
    pub features: PathBuf,
}

/// Writes `manifest.csv` and `features.csv` into `dir`.
pub fn write_cohort(spec: &SyntheticSpec, dir: &Path) -> Result<CohortFiles> {
    let cohort = gen_cohort(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = CohortFiles {
        manifest: dir.join("manifest.csv"),
        features: dir.join("features.csv"),
    };
    write_manifest(&files.manifest, &cohort.records)?;
    write_feature_csv(&files.features, &cohort.features, spec.dim)?;
    Ok(files)
}

/// `A·sin(2π f k / 16000)` for `k = 0..round(duration·16000)`.
pub fn tone_samples(freq: f64, duration: f64, amplitude: f64) -> Result<Vec<f64>> {
    let nyquist = f64::from(SAMPLE_RATE) / 2.0;
    if !(0.0..nyquist).contains(&freq) {
        return Err(Error::Config(format!(
            "tone frequency {freq} Hz must be in [0, {nyquist})"
        )));
    }
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(Error::Config(format!("amplitude {amplitude} outside [0, 1]")));
    }
    if !(duration > 0.0) {
        return Err(Error::Config(format!("duration {duration} must be positive")));
    }
    let n = (duration * f64::from(SAMPLE_RATE)).round() as usize;
    let sr = f64::from(SAMPLE_RATE);
    Ok((0..n)
        .map(|k| amplitude * (2.0 * PI * freq * k as f64 / sr).sin())
        .collect())
}

/// Writes a 16 kHz mono 16-bit tone and returns the unquantized samples.
pub fn gen_tone_wav(path: &Path, freq: f64, duration: f64, amplitude: f64) -> Result<Vec<f64>> {
    let samples = tone_samples(freq, duration, amplitude)?;
    write_wav_pcm16(path, &samples)?;
    Ok(samples)
}

/// A manifest of tone recordings, one subject per frequency, for exercising
/// feature extraction. Returns the manifest path.
pub fn write_tone_manifest(dir: &Path, freqs: &[f64], duration: f64) -> Result<PathBuf> {
    let audio = dir.join("audio");
    fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    let mut records = Vec::with_capacity(freqs.len());
    for (i, &f) in freqs.iter().enumerate() {
        let name = format!("{}.wav", utterance_id(i));
        gen_tone_wav(&audio.join(&name), f, duration, 0.5)?;
        records.push(SubjectRecord {
            subject_id: subject_id(i),
            utterance_id: utterance_id(i),
            gender: if i % 2 == 0 { Gender::F } else { Gender::M },
            age: 60 + i as u32 % 20,
            mmse: if i % 2 == 0 { 20 } else { 28 },
            hamd: 3,
            wav_path: format!("audio/{name}"),
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}

/// Per-layer scaling of every group's shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerShift {
    pub layer: LayerId,
    pub scale: f64,
}

/// Writes one EMB1 archive per (subject, layer) plus `index.csv`.
///
/// Each layer is drawn as its own cohort with shifts multiplied by the
/// layer's scale. Frames come in ± pairs around the subject vector, so
/// mean pooling recovers it up to f32 rounding.
pub fn write_layer_archives(
    spec: &SyntheticSpec,
    layers: &[LayerShift],
    n_frames: usize,
    dir: &Path,
) -> Result<Vec<IndexEntry>> {
    if n_frames == 0 || n_frames % 2 != 0 {
        return Err(Error::Config(format!("n_frames must be even and positive, got {n_frames}")));
    }
    let emb = dir.join("emb");
    fs::create_dir_all(&emb).map_err(|e| Error::io(&emb, e))?;
    let mut entries = Vec::new();
    for (li, ls) in layers.iter().enumerate() {
        let mut layer_spec = spec.clone();
        layer_spec.seed = rng::derive_seed(spec.seed, 1000 + li as u64);
        for g in &mut layer_spec.groups {
            g.shift *= ls.scale;
        }
        let cohort = gen_cohort(&layer_spec)?;
        let mut frame_rng = rng::seeded(rng::derive_seed(layer_spec.seed, 7));
        for fv in &cohort.features {
            let mut frames = Array2::zeros((n_frames, spec.dim));
            for pair in 0..n_frames / 2 {
                for j in 0..spec.dim {
                    let e: f64 = frame_rng.sample(StandardNormal);
                    frames[[2 * pair, j]] = fv.values[j] + e;
                    frames[[2 * pair + 1, j]] = fv.values[j] - e;
                }
            }
            let file = format!("{}_{}-{}.emb", fv.utterance_id, ls.layer.kind(), ls.layer.index());
            let archive = EmbeddingArchive::new(fv.utterance_id.clone(), ls.layer, frames)?;
            write_embedding_file(&emb.join(&file), &archive)?;
            entries.push(IndexEntry {
                utterance_id: fv.utterance_id.clone(),
                layer_kind: ls.layer.kind(),
                layer_index: ls.layer.index(),
                path: PathBuf::from("emb").join(&file),
            });
        }
    }
    write_index(&dir.join("index.csv"), &entries)?;
    Ok(entries)
}
