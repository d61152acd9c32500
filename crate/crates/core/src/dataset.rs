//! Binary dataset files.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CSIF"
//!      4     4  format version (u32)
//!      8     4  kind: 0 channel, 1 eigen_single, 2 eigen_multi
//!     12    16  nt, nr, ns, n_rb (u32 each)
//!     28     8  sample count (u64)
//!     36     8  seed (u64)
//!     44    32  scene digest
//!     76     .  payload
//! ```
//!
//! All integers little-endian. The payload is `f32` pairs (re, im). A channel
//! sample is its `n_rb` matrices in order, each `nr x nt` column-major; an
//! eigen sample is the `nt x ns` matrix column-major.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::channel::{synth_channel, ChannelSample, SceneConfig};
use crate::eigen::{extract_target, EigenMode, EigenTarget};
use crate::error::{ensure, Error, Result};
use crate::linalg::{CMatrix, C64};

pub const MAGIC: &[u8; 4] = b"CSIF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 76;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Channel,
    EigenSingle,
    EigenMulti,
}

impl DatasetKind {
    fn code(self) -> u32 {
        match self {
            DatasetKind::Channel => 0,
            DatasetKind::EigenSingle => 1,
            DatasetKind::EigenMulti => 2,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        Ok(match c {
            0 => DatasetKind::Channel,
            1 => DatasetKind::EigenSingle,
            2 => DatasetKind::EigenMulti,
            _ => return Err(Error::Format(format!("unknown dataset kind {c}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Channel => "channel",
            DatasetKind::EigenSingle => "eigen_single",
            DatasetKind::EigenMulti => "eigen_multi",
        }
    }

    /// Eigen kind produced by a scene.
    pub fn eigen_for(scene: &SceneConfig) -> Self {
        if scene.is_single_rb() {
            DatasetKind::EigenSingle
        } else {
            DatasetKind::EigenMulti
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub kind: DatasetKind,
    pub nt: u32,
    pub nr: u32,
    pub ns: u32,
    pub n_rb: u32,
    pub count: u64,
    pub seed: u64,
    pub scene_digest: [u8; 32],
}

impl DatasetHeader {
    pub fn for_scene(scene: &SceneConfig, kind: DatasetKind, count: usize) -> Self {
        Self {
            kind,
            nt: scene.array.nt() as u32,
            nr: scene.array.nr as u32,
            ns: scene.n_subbands as u32,
            n_rb: scene.n_rb as u32,
            count: count as u64,
            seed: scene.seed,
            scene_digest: scene.digest(),
        }
    }

    /// Complex entries per sample.
    pub fn sample_len(&self) -> usize {
        let (nt, nr, ns, n_rb) = (self.nt as usize, self.nr as usize, self.ns as usize, self.n_rb as usize);
        match self.kind {
            DatasetKind::Channel => n_rb * nr * nt,
            DatasetKind::EigenSingle | DatasetKind::EigenMulti => nt * ns,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        for x in [self.nt, self.nr, self.ns, self.n_rb] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.scene_digest);
    }

    fn read(bytes: &[u8]) -> Result<Self> {
        ensure!(bytes.len() >= HEADER_LEN, Format, "dataset shorter than its header");
        ensure!(&bytes[..4] == MAGIC, Format, "not a dataset file (bad magic)");
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let version = u32_at(4);
        ensure!(version == VERSION, Format, "unsupported dataset version {version}");
        Ok(Self {
            kind: DatasetKind::from_code(u32_at(8))?,
            nt: u32_at(12),
            nr: u32_at(16),
            ns: u32_at(20),
            n_rb: u32_at(24),
            count: u64_at(28),
            seed: u64_at(36),
            scene_digest: bytes[44..76].try_into().unwrap(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    /// `count * sample_len` complex entries.
    pub payload: Vec<C64>,
}

fn push_c(out: &mut Vec<u8>, x: C64) {
    out.extend_from_slice(&(x.re as f32).to_le_bytes());
    out.extend_from_slice(&(x.im as f32).to_le_bytes());
}

impl DatasetFile {
    pub fn from_targets(scene: &SceneConfig, targets: &[EigenTarget]) -> Result<Self> {
        let header = DatasetHeader::for_scene(scene, DatasetKind::eigen_for(scene), targets.len());
        let mut payload = Vec::with_capacity(targets.len() * header.sample_len());
        for t in targets {
            ensure!(
                t.nt() == header.nt as usize && t.n_subbands() == header.ns as usize,
                Contract,
                "target is {}x{}, the scene expects {}x{}",
                t.nt(),
                t.n_subbands(),
                header.nt,
                header.ns
            );
            payload.extend(t.v.to_column_major());
        }
        Ok(Self { header, payload })
    }

    pub fn from_channels(scene: &SceneConfig, samples: &[ChannelSample]) -> Result<Self> {
        let header = DatasetHeader::for_scene(scene, DatasetKind::Channel, samples.len());
        let mut payload = Vec::with_capacity(samples.len() * header.sample_len());
        for s in samples {
            ensure!(s.n_rb() == scene.n_rb, Contract, "sample has {} RBs, scene {}", s.n_rb(), scene.n_rb);
            for h in &s.h {
                ensure!(
                    h.rows() == header.nr as usize && h.cols() == header.nt as usize,
                    Contract,
                    "RB matrix is {}x{}, the scene expects {}x{}",
                    h.rows(),
                    h.cols(),
                    header.nr,
                    header.nt
                );
                payload.extend(h.to_column_major());
            }
        }
        Ok(Self { header, payload })
    }

    pub fn len(&self) -> usize {
        self.header.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.header.count == 0
    }

    /// Eigen samples. The source seed is not persisted and reads back as 0.
    pub fn targets(&self) -> Result<Vec<EigenTarget>> {
        let h = &self.header;
        let mode = match h.kind {
            DatasetKind::EigenSingle => EigenMode::SingleRb,
            DatasetKind::EigenMulti => EigenMode::MultiRb,
            DatasetKind::Channel => return Err(Error::Config("expected an eigen dataset, found channel".into())),
        };
        let (nt, ns) = (h.nt as usize, h.ns as usize);
        self.payload
            .chunks_exact(h.sample_len().max(1))
            .map(|c| {
                let v = CMatrix::from_column_major(nt, ns, c)?;
                Ok(EigenTarget { mode, v, source_seed: 0 })
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.payload.len());
        self.header.write(&mut out);
        for &x in &self.payload {
            push_c(&mut out, x);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = DatasetHeader::read(bytes)?;
        let n = (header.count as usize)
            .checked_mul(header.sample_len())
            .ok_or_else(|| Error::Format("dataset size overflows".into()))?;
        let body = &bytes[HEADER_LEN..];
        ensure!(
            body.len() == 8 * n,
            Format,
            "payload holds {} bytes, header promises {} samples of {} entries ({} bytes)",
            body.len(),
            header.count,
            header.sample_len(),
            8 * n
        );
        let payload = body
            .chunks_exact(8)
            .map(|c| {
                C64::new(
                    f32::from_le_bytes(c[..4].try_into().unwrap()) as f64,
                    f32::from_le_bytes(c[4..].try_into().unwrap()) as f64,
                )
            })
            .collect();
        Ok(Self { header, payload })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails unless the file was generated from `scene`.
    pub fn check_scene(&self, scene: &SceneConfig) -> Result<()> {
        let want = DatasetHeader::for_scene(scene, DatasetKind::eigen_for(scene), self.len());
        let h = &self.header;
        ensure!(
            h.kind == want.kind && h.nt == want.nt && h.ns == want.ns,
            Config,
            "dataset is {} with nt={}, ns={}; the scene needs {} with nt={}, ns={}",
            h.kind.name(),
            h.nt,
            h.ns,
            want.kind.name(),
            want.nt,
            want.ns
        );
        ensure!(
            h.scene_digest == want.scene_digest,
            Config,
            "dataset was generated from scene {} (seed {}), not from this scene (seed {})",
            &hex::encode(h.scene_digest)[..12],
            h.seed,
            scene.seed
        );
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Sizes of the train, validation and test splits: validation and test get
/// `floor(n / 10)` each, training the remainder.
pub fn split_sizes(n: usize) -> [usize; 3] {
    let tenth = n / 10;
    [n - 2 * tenth, tenth, tenth]
}

/// Ground-truth targets for drops `0..count` of a scene, in drop order.
pub fn synth_targets(scene: &SceneConfig, count: usize) -> Result<Vec<EigenTarget>> {
    scene.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| extract_target(&synth_channel(scene, i)?, scene.n_subbands))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrittenSplit {
    pub split: &'static str,
    pub path: PathBuf,
    pub count: usize,
    pub sha256: String,
}

pub fn split_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.csif"))
}

/// Synthesizes `count` drops and writes `train.csif`, `val.csif` and
/// `test.csif` under `dir`. Drops are assigned in order: training first.
pub fn generate(scene: &SceneConfig, count: usize, dir: &Path) -> Result<Vec<WrittenSplit>> {
    let targets = synth_targets(scene, count)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let mut start = 0;
    for (split, n) in SPLITS.into_iter().zip(split_sizes(count)) {
        let file = DatasetFile::from_targets(scene, &targets[start..start + n])?;
        start += n;
        let bytes = file.to_bytes();
        let path = split_path(dir, split);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        out.push(WrittenSplit {
            split,
            path,
            count: n,
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(out)
}

/// Reads one split and checks it against `scene`.
pub fn load_split(dir: &Path, split: &str, scene: &SceneConfig) -> Result<Vec<EigenTarget>> {
    let file = DatasetFile::read(&split_path(dir, split))?;
    file.check_scene(scene)?;
    file.targets()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beams::ArrayConfig;
    use crate::channel::synth_channels;

    fn scene(ns: usize) -> SceneConfig {
        SceneConfig::new(ArrayConfig::new(2, 1, 4, 1, 2).unwrap(), 2 * ns, ns, 5)
    }

    #[test]
    fn header_is_76_bytes_with_fixed_offsets() {
        let s = scene(1);
        let f = DatasetFile::from_targets(&s, &[]).unwrap();
        let b = f.to_bytes();
        assert_eq!(b.len(), HEADER_LEN);
        assert_eq!(&b[..4], b"CSIF");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 4);
        assert_eq!(u64::from_le_bytes(b[36..44].try_into().unwrap()), 5);
        assert_eq!(&b[44..76], &s.digest());
    }

    #[test]
    fn eigen_round_trip_is_byte_identical() {
        let s = scene(3);
        let t = synth_targets(&s, 4).unwrap();
        let f = DatasetFile::from_targets(&s, &t).unwrap();
        let b = f.to_bytes();
        assert_eq!(b.len(), HEADER_LEN + 4 * 4 * 3 * 8);
        let back = DatasetFile::from_bytes(&b).unwrap();
        assert_eq!(back.to_bytes(), b);
        let tb = back.targets().unwrap();
        assert_eq!(tb[2].v.cols(), 3);
        // f32 storage
        assert!((tb[2].v[(1, 2)] - t[2].v[(1, 2)]).norm() < 1e-6);
        back.check_scene(&s).unwrap();
        let mut other = s.clone();
        other.seed = 6;
        assert_eq!(back.check_scene(&other).unwrap_err().class(), "config");
    }

    #[test]
    fn channel_payload_is_column_major_per_rb() {
        let s = scene(1);
        let ch = synth_channels(&s, 2).unwrap();
        let f = DatasetFile::from_channels(&s, &ch).unwrap();
        assert_eq!(f.header.sample_len(), 2 * 2 * 4);
        // second sample, second RB, entry (row 1, col 2)
        let idx = 16 + 8 + 2 * 2 + 1;
        assert_eq!(f.payload[idx], ch[1].h[1][(1, 2)]);
        let back = DatasetFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), f.to_bytes());
        assert_eq!(back.targets().unwrap_err().class(), "config");
    }

    #[test]
    fn malformed_files_are_rejected() {
        let s = scene(1);
        let b = DatasetFile::from_targets(&s, &synth_targets(&s, 2).unwrap()).unwrap().to_bytes();
        assert_eq!(DatasetFile::from_bytes(&b[..b.len() - 8]).unwrap_err().class(), "format");
        assert_eq!(DatasetFile::from_bytes(&b[..40]).unwrap_err().class(), "format");
        let mut bad = b.clone();
        bad[8] = 9;
        assert_eq!(DatasetFile::from_bytes(&bad).unwrap_err().class(), "format");
        let mut bad = b;
        bad[4] = 2;
        assert_eq!(DatasetFile::from_bytes(&bad).unwrap_err().class(), "format");
    }

    #[test]
    fn split_rounding() {
        assert_eq!(split_sizes(1000), [800, 100, 100]);
        assert_eq!(split_sizes(1), [1, 0, 0]);
        assert_eq!(split_sizes(19), [17, 1, 1]);
        assert_eq!(split_sizes(0), [0, 0, 0]);
    }

    #[test]
    fn generate_writes_three_reproducible_splits() {
        let s = scene(1);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let wa = generate(&s, 20, a.path()).unwrap();
        let wb = generate(&s, 20, b.path()).unwrap();
        assert_eq!(wa.iter().map(|w| w.count).collect::<Vec<_>>(), vec![16, 2, 2]);
        for (x, y) in wa.iter().zip(&wb) {
            assert_eq!(x.sha256, y.sha256);
            assert_eq!(std::fs::read(&x.path).unwrap(), std::fs::read(&y.path).unwrap());
        }
        let test = load_split(a.path(), "test", &s).unwrap();
        let direct = synth_targets(&s, 20).unwrap();
        assert!((test[1].v[(0, 0)] - direct[19].v[(0, 0)]).norm() < 1e-6);
    }
}
