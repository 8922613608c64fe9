//! On-disk policy format: an 8-byte little-endian header length, a JSON
//! header, then every parameter as a little-endian `f64` in
//! [`PolicySet::flat_params`] order.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{input_dim, Dense, FeatureScaling, Mlp, PolicySet};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "chiller-dpc-policy/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub num_chillers: usize,
    pub horizon: usize,
    pub input_dim: usize,
    /// Layer widths per head, input first, in ṁ, T_e, δ̃ order.
    pub layer_sizes: Vec<Vec<usize>>,
    pub normalization: FeatureScaling,
    pub plant_hash: String,
    pub seed: u64,
    pub param_count: usize,
}

fn fail(path: &Path, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

impl PolicySet {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            num_chillers: self.num_chillers,
            horizon: self.horizon,
            input_dim: self.input_dim(),
            layer_sizes: self.heads().iter().map(|h| h.sizes()).collect(),
            normalization: self.scaling.clone(),
            plant_hash: self.plant_hash.clone(),
            seed: self.seed,
            param_count: self.param_count(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let params = self.flat_params();
        let mut out = Vec::with_capacity(8 + header.len() + 8 * params.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(fail(path, "file shorter than its length prefix"));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8usize.saturating_add(hlen))
            .ok_or_else(|| fail(path, "header length exceeds file size"))?;
        let h: CheckpointHeader = serde_json::from_slice(body).map_err(|e| fail(path, format!("bad header: {e}")))?;
        if h.format != CHECKPOINT_FORMAT {
            return Err(fail(path, format!("unknown format {:?}", h.format)));
        }
        if h.num_chillers < 2 || h.horizon == 0 || h.input_dim != input_dim(h.num_chillers, h.horizon) {
            return Err(fail(path, "inconsistent dimensions in header"));
        }
        if h.layer_sizes.len() != 3 || h.normalization.len() != h.input_dim || h.normalization.hi.len() != h.input_dim {
            return Err(fail(
                path,
                "header does not describe three heads over the declared input",
            ));
        }
        let heads_out = [h.num_chillers, h.num_chillers, h.num_chillers - 1];
        for (sizes, out) in h.layer_sizes.iter().zip(heads_out) {
            if sizes.len() < 2 || sizes[0] != h.input_dim || *sizes.last().unwrap() != out {
                return Err(fail(path, "layer sizes do not match the declared dimensions"));
            }
        }
        let expected: usize = h
            .layer_sizes
            .iter()
            .flat_map(|s| s.windows(2).map(|w| w[0] * w[1] + w[1]))
            .sum();
        if expected != h.param_count {
            return Err(fail(path, "parameter count disagrees with layer sizes"));
        }
        let blob = &bytes[8 + hlen..];
        if blob.len() != 8 * expected {
            return Err(fail(
                path,
                format!("weight blob holds {} bytes, expected {}", blob.len(), 8 * expected),
            ));
        }
        let mut values = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| values.by_ref().take(n).collect::<Vec<_>>();
        let mut heads = h.layer_sizes.iter().map(|sizes| Mlp {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    weight: Array2::from_shape_vec((w[1], w[0]), take(w[0] * w[1])).unwrap(),
                    bias: Array1::from(take(w[1])),
                })
                .collect(),
        });
        let (mdot, t_e, relaxed) = (heads.next().unwrap(), heads.next().unwrap(), heads.next().unwrap());
        Ok(Self {
            num_chillers: h.num_chillers,
            horizon: h.horizon,
            mdot,
            t_e,
            relaxed,
            scaling: h.normalization,
            plant_hash: h.plant_hash,
            seed: h.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| fail(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| fail(path, e.to_string()))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantParams;
    use crate::policy::FeatureVector;

    #[test]
    fn roundtrip_is_bit_exact() {
        let pol = PolicySet::new(&PlantParams::reference(3), 5, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        pol.save(&path).unwrap();
        let back = PolicySet::load(&path).unwrap();
        assert_eq!(back, pol);
        let f = FeatureVector((0..10).map(|i| i as f64 / 10.0).collect());
        let (a, b) = (pol.forward(&f).unwrap(), back.forward(&f).unwrap());
        for (x, y) in a
            .mdot
            .iter()
            .chain(&a.t_e)
            .chain(&a.relaxed)
            .zip(b.mdot.iter().chain(&b.t_e).chain(&b.relaxed))
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn layout_is_little_endian_row_major() {
        let pol = PolicySet::new(&PlantParams::reference(2), 5, 1).unwrap();
        let bytes = pol.to_bytes();
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + hlen]).unwrap();
        assert_eq!(header["input_dim"], 9);
        assert_eq!(header["layer_sizes"][2], serde_json::json!([9, 200, 200, 200, 1]));
        assert_eq!(header["param_count"], 248_205);
        let first = f64::from_le_bytes(bytes[8 + hlen..16 + hlen].try_into().unwrap());
        assert_eq!(first, pol.mdot.layers[0].weight[[0, 0]]);
        let second = f64::from_le_bytes(bytes[16 + hlen..24 + hlen].try_into().unwrap());
        assert_eq!(second, pol.mdot.layers[0].weight[[0, 1]]);
        assert_eq!(bytes.len(), 8 + hlen + 8 * 248_205);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let pol = PolicySet::new(&PlantParams::reference(2), 5, 1).unwrap();
        let bytes = pol.to_bytes();
        let p = Path::new("x");
        assert!(matches!(
            PolicySet::from_bytes(&bytes[..4], p),
            Err(Error::Checkpoint { .. })
        ));
        assert!(PolicySet::from_bytes(&bytes[..bytes.len() - 8], p).is_err());
        let mut bad = bytes.clone();
        bad[8] = b'#';
        assert!(PolicySet::from_bytes(&bad, p).is_err());
        assert!(PolicySet::load(Path::new("/nonexistent/p.ckpt")).is_err());
    }
}
