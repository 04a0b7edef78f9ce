//! Binary checkpoints.
//!
//! Layout: magic `NSEGCKPT`, format version (u32 LE), header length (u64 LE),
//! JSON header, six parameter arrays each as a u64 LE length followed by f64
//! LE values, and a SHA-256 digest of every preceding byte. Files are written
//! to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::train::{BestCheckpoint, LogRecord, Validation};
use crate::error::{Error, Result};
use crate::nets::{SegNet, TrainableFunction, WeightNet};
use crate::reweighting::ScheduleState;

pub const MAGIC: &[u8; 8] = b"NSEGCKPT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Completed training iterations.
    pub iter: u64,
    pub schedule: ScheduleState,
    pub fingerprint: String,
    pub config: RunConfig,
    pub log: Vec<LogRecord>,
    pub validations: Vec<Validation>,
    pub best: Option<BestCheckpoint>,
}

/// Full training state: enough to evaluate, or to resume bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub seg_params: Vec<f64>,
    pub weight_params: Vec<f64>,
    pub seg_velocity: Vec<f64>,
    pub weight_velocity: Vec<f64>,
    /// Parameters of the best checkpoint so far.
    pub best_seg_params: Vec<f64>,
    pub best_weight_params: Vec<f64>,
}

impl Checkpoint {
    fn arrays(&self) -> [&Vec<f64>; 6] {
        [
            &self.seg_params,
            &self.weight_params,
            &self.seg_velocity,
            &self.weight_velocity,
            &self.best_seg_params,
            &self.best_weight_params,
        ]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let n_values: usize = self.arrays().iter().map(|a| a.len()).sum();
        let mut buf =
            Vec::with_capacity(8 + 4 + 8 + header.len() + 6 * 8 + 8 * n_values + DIGEST_LEN);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for a in self.arrays() {
            buf.extend_from_slice(&(a.len() as u64).to_le_bytes());
            for v in a {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    /// Parses and verifies a checkpoint. `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < MAGIC.len() + 12 + DIGEST_LEN {
            return Err(fail("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(fail("checksum mismatch (truncated or corrupted file)"));
        }
        let mut r = Reader {
            bytes: body,
            pos: 0,
        };
        if r.take(8).ok_or_else(|| fail("truncated magic"))? != MAGIC {
            return Err(fail("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(
            r.take(4)
                .ok_or_else(|| fail("truncated version"))?
                .try_into()
                .unwrap(),
        );
        if version != FORMAT_VERSION {
            return Err(fail(&format!("unsupported format version {version}")));
        }
        let header_len = r.u64().ok_or_else(|| fail("truncated header length"))? as usize;
        let header_bytes = r.take(header_len).ok_or_else(|| fail("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(header_bytes).map_err(|e| fail(&format!("bad header: {e}")))?;
        let mut arrays = Vec::with_capacity(6);
        for _ in 0..6 {
            let n = r.u64().ok_or_else(|| fail("truncated array length"))? as usize;
            let raw = r
                .take(n.checked_mul(8).ok_or_else(|| fail("bad array length"))?)
                .ok_or_else(|| fail("truncated array"))?;
            arrays.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect::<Vec<_>>(),
            );
        }
        if r.pos != body.len() {
            return Err(fail("trailing bytes"));
        }
        let expected = header.config.fingerprint();
        if header.fingerprint != expected {
            return Err(Error::Fingerprint {
                expected,
                found: header.fingerprint,
            });
        }
        let mut it = arrays.into_iter();
        let mut next = || it.next().unwrap();
        let ckpt = Checkpoint {
            header,
            seg_params: next(),
            weight_params: next(),
            seg_velocity: next(),
            weight_velocity: next(),
            best_seg_params: next(),
            best_weight_params: next(),
        };
        ckpt.check_sizes().map_err(|e| fail(&e.to_string()))?;
        Ok(ckpt)
    }

    fn check_sizes(&self) -> Result<()> {
        let seg = SegNet::new(self.header.config.seg_net.clone())?.num_parameters();
        let weight = WeightNet::new(self.header.config.weight_net.clone())?.num_parameters();
        for (name, a, n) in [
            ("segmentation parameters", &self.seg_params, seg),
            ("weighting parameters", &self.weight_params, weight),
            ("segmentation velocity", &self.seg_velocity, seg),
            ("weighting velocity", &self.weight_velocity, weight),
            ("best segmentation parameters", &self.best_seg_params, seg),
            (
                "best weighting parameters",
                &self.best_weight_params,
                weight,
            ),
        ] {
            if a.len() != n {
                return Err(Error::shape(name, n, a.len()));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = tmp_path(path);
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Segmentation network holding this checkpoint's current parameters.
    pub fn seg_net(&self) -> Result<SegNet> {
        let mut net = SegNet::new(self.header.config.seg_net.clone())?;
        net.set_parameters(&self.seg_params)?;
        Ok(net)
    }

    pub fn weight_net(&self) -> Result<WeightNet> {
        let mut net = WeightNet::new(self.header.config.weight_net.clone())?;
        net.set_parameters(&self.weight_params)?;
        Ok(net)
    }

    /// Errors unless `cfg` describes the same model as this checkpoint.
    pub fn check_fingerprint(&self, cfg: &RunConfig) -> Result<()> {
        let expected = cfg.fingerprint();
        if expected != self.header.fingerprint {
            return Err(Error::Fingerprint {
                expected,
                found: self.header.fingerprint.clone(),
            });
        }
        Ok(())
    }
}

pub fn checkpoint_file_name(iter: u64) -> String {
    format!("ckpt_{iter:06}.bin")
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = RunConfig {
            seg_net: crate::nets::SegNetConfig {
                channels: vec![2],
                ..Default::default()
            },
            weight_net: crate::nets::WeightNetConfig {
                channels: vec![2],
                ..Default::default()
            },
            ..RunConfig::default()
        };
        let seg = SegNet::new(config.seg_net.clone()).unwrap();
        let weight = WeightNet::new(config.weight_net.clone()).unwrap();
        let s = seg.parameters().to_vec();
        let w = weight.parameters().to_vec();
        Checkpoint {
            header: CheckpointHeader {
                iter: 3,
                schedule: ScheduleState::at_iteration(3, config.step_iters),
                fingerprint: config.fingerprint(),
                config,
                log: Vec::new(),
                validations: Vec::new(),
                best: None,
            },
            seg_velocity: s.iter().map(|v| v * 0.1).collect(),
            weight_velocity: vec![0.0; w.len()],
            best_seg_params: s.clone(),
            best_weight_params: w.clone(),
            seg_params: s,
            weight_params: w,
        }
    }

    #[test]
    fn bytes_roundtrip_exactly() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap(), Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn any_flipped_byte_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        for pos in [0, 9, 30, bytes.len() / 2, bytes.len() - 40, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x10;
            assert!(matches!(
                Checkpoint::from_bytes(&bad, Path::new("x")),
                Err(Error::Checkpoint { .. })
            ));
        }
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 7], Path::new("x")).is_err());
        assert!(Checkpoint::from_bytes(&[], Path::new("x")).is_err());
    }

    #[test]
    fn fingerprint_check() {
        let c = sample();
        assert!(c.check_fingerprint(&c.header.config).is_ok());
        let mut other = c.header.config.clone();
        other.ablation.use_gafl = false;
        assert!(matches!(
            c.check_fingerprint(&other),
            Err(Error::Fingerprint { .. })
        ));
    }

    #[test]
    fn save_is_atomic_and_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join(checkpoint_file_name(3));
        sample().save(&path).unwrap();
        assert!(!tmp_path(&path).exists());
        assert_eq!(Checkpoint::load(&path).unwrap(), sample());
    }
}
