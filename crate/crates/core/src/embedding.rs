//! EMB1 embedding archives and their index CSV.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EMB1" | u8 kind (0 latent, 1 hidden) | u32 layer | u32 n_frames | u32 dim
//!        | n_frames * dim f32, row-major
//! ```
//!
//! Values are stored as f32 and widened to f64 on read.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{column_means, csv_field, FeatureSetId, FeatureVector};

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Latent,
    Hidden,
}

impl LayerKind {
    fn code(self) -> u8 {
        match self {
            LayerKind::Latent => 0,
            LayerKind::Hidden => 1,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Latent => "latent",
            LayerKind::Hidden => "hidden",
        })
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "latent" | "0" => Ok(LayerKind::Latent),
            "hidden" | "1" => Ok(LayerKind::Hidden),
            other => Err(Error::InvalidData(format!("unknown layer kind '{other}'"))),
        }
    }
}

/// A wav2vec 2.0 layer: hidden layers are numbered 1..=12, latent layers are
/// numbered by the exporter starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerId {
    kind: LayerKind,
    index: u32,
}

impl LayerId {
    pub fn new(kind: LayerKind, index: u32) -> Result<Self> {
        let ok = match kind {
            LayerKind::Hidden => (1..=12).contains(&index),
            LayerKind::Latent => index >= 1,
        };
        if !ok {
            return Err(Error::InvalidData(format!(
                "invalid {kind} layer index {index}"
            )));
        }
        Ok(Self { kind, index })
    }

    pub fn hidden(index: u32) -> Result<Self> {
        Self::new(LayerKind::Hidden, index)
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn index(&self) -> u32 {
        self.index
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind, self.index)
    }
}

impl FromStr for LayerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, index) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidData(format!("invalid layer '{s}'")))?;
        let index = index
            .parse()
            .map_err(|_| Error::InvalidData(format!("invalid layer index in '{s}'")))?;
        LayerId::new(kind.parse()?, index)
    }
}

/// Frame-level embeddings of one utterance at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingArchive {
    pub utterance_id: String,
    pub layer: LayerId,
    pub frames: Array2<f64>,
}

impl EmbeddingArchive {
    pub fn new(utterance_id: impl Into<String>, layer: LayerId, frames: Array2<f64>) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(Error::InvalidData(format!(
                "archive for '{utterance_id}' has shape {:?}",
                frames.dim()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of '{utterance_id}'")));
        }
        Ok(Self {
            utterance_id,
            layer,
            frames,
        })
    }
}

/// Serializes frames as EMB1 bytes. Values are narrowed to f32.
pub fn encode_emb1(layer: LayerId, frames: &Array2<f64>) -> Vec<u8> {
    let (n, d) = frames.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d);
    out.extend_from_slice(MAGIC);
    out.push(layer.kind.code());
    out.extend_from_slice(&layer.index.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in frames.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn write_embedding_file(path: &Path, archive: &EmbeddingArchive) -> Result<()> {
    fs::write(path, encode_emb1(archive.layer, &archive.frames)).map_err(|e| Error::io(path, e))
}

/// Parses EMB1 bytes. `path` is only used in error messages.
pub fn decode_emb1(bytes: &[u8], path: &Path, utterance_id: &str) -> Result<EmbeddingArchive> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let kind = match bytes[4] {
        0 => LayerKind::Latent,
        1 => LayerKind::Hidden,
        k => {
            return Err(Error::InvalidData(format!(
                "{}: unknown layer kind byte {k}",
                path.display()
            )))
        }
    };
    let layer = LayerId::new(kind, u32_at(5))?;
    let n = u32_at(9) as usize;
    let d = u32_at(13) as usize;
    if n == 0 || d == 0 {
        return Err(Error::InvalidData(format!(
            "{}: archive declares {n} frames of dimension {d}",
            path.display()
        )));
    }
    let expected = HEADER_LEN + 4 * n * d;
    if bytes.len() != expected {
        if bytes.len() < expected {
            return Err(Error::TruncatedPayload {
                path: path.to_path_buf(),
                expected,
                found: bytes.len(),
            });
        }
        return Err(Error::InvalidData(format!(
            "{}: {} trailing bytes after payload",
            path.display(),
            bytes.len() - expected
        )));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let frames = Array2::from_shape_vec((n, d), values).expect("length checked above");
    EmbeddingArchive::new(utterance_id, layer, frames).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFinite(format!("payload of {}", path.display())),
        other => other,
    })
}

/// Reads one archive. The utterance id is taken from the file stem; index
/// loading overrides it with the id bound in the index CSV.
pub fn read_embedding_file(path: &Path) -> Result<EmbeddingArchive> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_emb1(&bytes, path, &id)
}

/// Column-mean pooling to one vector tagged with the archive's layer.
pub fn pool_embedding(archive: &EmbeddingArchive) -> Result<FeatureVector> {
    FeatureVector::new(
        archive.utterance_id.clone(),
        FeatureSetId::W2v2(archive.layer),
        column_means(&archive.frames)?,
    )
}

/// One row of the embedding index CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub utterance_id: String,
    pub layer_kind: LayerKind,
    pub layer_index: u32,
    pub path: PathBuf,
}

impl IndexEntry {
    pub fn layer(&self) -> Result<LayerId> {
        LayerId::new(self.layer_kind, self.layer_index)
    }
}

/// Reads `utterance_id, layer_kind, layer_index, path`. Relative paths are
/// resolved against the index file's directory.
pub fn read_index(path: &Path) -> Result<Vec<IndexEntry>> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<IndexEntry>() {
        let mut entry = row.map_err(|e| Error::csv(path, e))?;
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        entry.layer()?;
        out.push(entry);
    }
    Ok(out)
}

pub fn write_index(path: &Path, entries: &[IndexEntry]) -> Result<()> {
    let mut s = String::from("utterance_id,layer_kind,layer_index,path\n");
    for e in entries {
        s.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&e.utterance_id),
            e.layer_kind,
            e.layer_index,
            csv_field(&e.path.to_string_lossy())
        ));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Layers present in an index, sorted.
pub fn index_layers(entries: &[IndexEntry]) -> Result<Vec<LayerId>> {
    let mut layers = entries
        .iter()
        .map(IndexEntry::layer)
        .collect::<Result<Vec<_>>>()?;
    layers.sort();
    layers.dedup();
    Ok(layers)
}

/// Loads and pools every archive the index lists for `layer`.
///
/// Either every listed archive loads or the call fails; no partial cohort is
/// ever returned.
pub fn load_layer(entries: &[IndexEntry], layer: LayerId) -> Result<Vec<FeatureVector>> {
    use rayon::prelude::*;
    entries
        .par_iter()
        .filter(|e| e.layer_kind == layer.kind && e.layer_index == layer.index)
        .map(|e| {
            let bytes = fs::read(&e.path).map_err(|err| Error::io(&e.path, err))?;
            let archive = decode_emb1(&bytes, &e.path, &e.utterance_id)?;
            if archive.layer != layer {
                return Err(Error::InvalidData(format!(
                    "{}: header says layer {} but the index says {}",
                    e.path.display(),
                    archive.layer,
                    layer
                )));
            }
            pool_embedding(&archive)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn layer9() -> LayerId {
        LayerId::hidden(9).unwrap()
    }

    #[test]
    fn roundtrip_3x4() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u1.emb");
        let frames = arr2(&[
            [0.5, -1.25, 3.0, 0.0],
            [1e-3, 2.0, -0.75, 8.5],
            [0.125, 0.25, 0.375, -4.0],
        ]);
        let a = EmbeddingArchive::new("u1", layer9(), frames).unwrap();
        write_embedding_file(&p, &a).unwrap();
        let b = read_embedding_file(&p).unwrap();
        // 1e-3 is not representable in f32, so compare against the narrowed value.
        let narrowed = a.frames.mapv(|v| f64::from(v as f32));
        assert_eq!(b.frames, narrowed);
        assert_eq!(b.layer, layer9());
        assert_eq!(b.utterance_id, "u1");
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.emb");
        let mut bytes = encode_emb1(layer9(), &arr2(&[[1.0]]));
        bytes[0] = b'X';
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_embedding_file(&p), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.emb");
        let frames = Array2::from_elem((10, 3), 1.0);
        let bytes = encode_emb1(layer9(), &frames);
        fs::write(&p, &bytes[..bytes.len() - 12]).unwrap();
        let err = read_embedding_file(&p).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { .. }));
        assert!(err.to_string().contains("truncated payload"));
    }

    #[test]
    fn zero_frames_and_nan_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.emb");
        let mut bytes = encode_emb1(layer9(), &arr2(&[[1.0, 2.0]]));
        bytes[9..13].copy_from_slice(&0u32.to_le_bytes());
        bytes.truncate(HEADER_LEN);
        fs::write(&p, &bytes).unwrap();
        assert!(read_embedding_file(&p).is_err());

        let bytes = encode_emb1(layer9(), &arr2(&[[1.0, f64::NAN]]));
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_embedding_file(&p), Err(Error::NonFinite(_))));
    }

    #[test]
    fn pooling_examples() {
        let one = EmbeddingArchive::new("u", layer9(), arr2(&[[1.5, -2.0, 3.0]])).unwrap();
        assert_eq!(pool_embedding(&one).unwrap().values, vec![1.5, -2.0, 3.0]);
        let two = EmbeddingArchive::new("u", layer9(), arr2(&[[0.0, 0.0], [2.0, 4.0]])).unwrap();
        let v = pool_embedding(&two).unwrap();
        assert_eq!(v.values, vec![1.0, 2.0]);
        assert_eq!(v.feature_set.to_string(), "w2v2-hidden-9");
    }

    #[test]
    fn layer_ids() {
        assert!(LayerId::hidden(0).is_err());
        assert!(LayerId::hidden(13).is_err());
        assert!(LayerId::new(LayerKind::Latent, 7).is_ok());
        assert_eq!("latent-3".parse::<LayerId>().unwrap().to_string(), "latent-3");
    }

    #[test]
    fn index_load_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = Vec::new();
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            let p = dir.path().join(format!("{id}.emb"));
            let a = EmbeddingArchive::new(*id, layer9(), arr2(&[[i as f64, 1.0]])).unwrap();
            write_embedding_file(&p, &a).unwrap();
            entries.push(IndexEntry {
                utterance_id: id.to_string(),
                layer_kind: LayerKind::Hidden,
                layer_index: 9,
                path: PathBuf::from(format!("{id}.emb")),
            });
        }
        let idx = dir.path().join("index.csv");
        write_index(&idx, &entries).unwrap();
        let read = read_index(&idx).unwrap();
        assert_eq!(read.len(), 3);
        let pooled = load_layer(&read, layer9()).unwrap();
        assert_eq!(pooled.len(), 3);
        assert_eq!(pooled[2].values, vec![2.0, 1.0]);
        assert!(load_layer(&read, LayerId::hidden(3).unwrap()).unwrap().is_empty());

        fs::remove_file(dir.path().join("b.emb")).unwrap();
        assert!(load_layer(&read, layer9()).is_err());
    }
}
