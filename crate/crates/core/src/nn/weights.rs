//! Binary weights files.
//!
//! Layout: the 6-byte magic `IFODW1`, a little-endian `u32` record count, then
//! per tensor: `u32` name length, UTF-8 name, `u32` rank, `rank` x `u32`
//! dims, and the values as little-endian `f32`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Network, Tensor};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 6] = b"IFODW1";

#[derive(Debug, Clone, PartialEq)]
pub struct WeightRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// What a non-strict load did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    pub skipped: Vec<String>,
}

pub fn encode_records(records: &[WeightRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        buf.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(r.name.as_bytes());
        buf.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &r.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_records(bytes: &[u8], path: &Path) -> Result<Vec<WeightRecord>> {
    let fail = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()) != Some(&MAGIC[..]) {
        return Err(fail("bad magic or version"));
    }
    let count = r.u32().ok_or_else(|| fail("truncated header"))?;
    let mut records = Vec::new();
    for i in 0..count {
        let trunc = || fail(&format!("truncated in record {i}"));
        let name_len = r.u32().ok_or_else(trunc)? as usize;
        let name = std::str::from_utf8(r.take(name_len).ok_or_else(trunc)?)
            .map_err(|_| fail(&format!("record {i}: name is not UTF-8")))?
            .to_string();
        let rank = r.u32().ok_or_else(trunc)? as usize;
        if rank > 8 {
            return Err(fail(&format!("record {name}: implausible rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(trunc)?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(trunc)?;
        let payload = r.take(len.checked_mul(4).ok_or_else(trunc)?).ok_or_else(trunc)?;
        let values = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.push(WeightRecord { name, shape, values });
    }
    if r.pos != bytes.len() {
        return Err(fail("trailing bytes after last record"));
    }
    Ok(records)
}

pub fn save_weights<T: Scalar>(network: &Network<T>, path: &Path) -> Result<()> {
    let records: Vec<WeightRecord> = network
        .named_tensors()
        .into_iter()
        .map(|(name, t)| WeightRecord {
            name,
            shape: t.shape().to_vec(),
            values: t.data().iter().map(|v| v.to_f64_lossy() as f32).collect(),
        })
        .collect();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_records(&records)).map_err(|e| Error::io(path, e))
}

/// Loads tensors by name. The file is fully parsed and checked before any
/// tensor is touched, so a failed load leaves the network unchanged.
///
/// With `strict`, every tensor in the file must exist in the network with the
/// same shape. Without it, mismatching or unknown tensors are skipped with a
/// warning, which allows importing a backbone into a freshly built network.
pub fn load_weights<T: Scalar>(network: &mut Network<T>, path: &Path, strict: bool) -> Result<LoadReport> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let records = decode_records(&bytes, path)?;
    let shapes: HashMap<String, Vec<usize>> = network
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let mut report = LoadReport::default();
    let mut accepted = HashMap::new();
    for rec in records {
        match shapes.get(&rec.name) {
            Some(shape) if *shape == rec.shape => {
                report.loaded.push(rec.name.clone());
                accepted.insert(rec.name.clone(), rec);
            }
            found => {
                let why = match found {
                    Some(shape) => format!("tensor {} has shape {:?} in file but {:?} in network", rec.name, rec.shape, shape),
                    None => format!("tensor {} does not exist in the network", rec.name),
                };
                if strict {
                    return Err(Error::Config(why));
                }
                log::warn!("skipping {why}");
                report.skipped.push(rec.name);
            }
        }
    }
    for (name, tensor) in network.named_tensors_mut() {
        if let Some(rec) = accepted.remove(&name) {
            let values: Vec<T> = rec.values.iter().map(|&v| T::from_f64_lossy(v as f64)).collect();
            tensor.data_mut().copy_from_slice(&values);
        }
    }
    Ok(report)
}

/// Writes an arbitrary set of named tensors, e.g. a backbone subset.
pub fn save_tensors<T: Scalar>(tensors: &[(String, &Tensor<T>)], path: &Path) -> Result<()> {
    let records: Vec<WeightRecord> = tensors
        .iter()
        .map(|(name, t)| WeightRecord {
            name: name.clone(),
            shape: t.shape().to_vec(),
            values: t.data().iter().map(|v| v.to_f64_lossy() as f32).collect(),
        })
        .collect();
    fs::write(path, encode_records(&records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerTable, WeightInit};
    use rand::SeedableRng;

    fn net(seed: u64) -> Network<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Network::build(&LayerTable::desk(), WeightInit::He, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ifodw");
        let a = net(1);
        save_weights(&a, &path).unwrap();
        let mut b = net(2);
        let report = load_weights(&mut b, &path, true).unwrap();
        assert!(report.skipped.is_empty());
        for ((na, ta), (nb, tb)) in a.named_tensors().iter().zip(b.named_tensors()) {
            assert_eq!(*na, nb);
            let bits_a: Vec<u32> = ta.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = tb.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "{na}");
        }
    }

    #[test]
    fn backbone_only_transfer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backbone.ifodw");
        let donor = net(1);
        let subset: Vec<(String, &Tensor<f32>)> = donor
            .named_tensors()
            .into_iter()
            .filter(|(n, _)| n.starts_with("conv"))
            .collect();
        save_tensors(&subset, &path).unwrap();
        let mut target = net(2);
        let heads_before = target.named_tensors().iter().find(|(n, _)| n == "cls.weight").unwrap().1.clone();
        let report = load_weights(&mut target, &path, false).unwrap();
        assert_eq!(report.loaded.len(), 10);
        let heads_after = target.named_tensors().iter().find(|(n, _)| n == "cls.weight").unwrap().1.clone();
        assert_eq!(heads_before, heads_after);
    }

    #[test]
    fn truncated_file_leaves_network_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ifodw");
        save_weights(&net(1), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let mut b = net(2);
        let before = b.clone();
        assert!(matches!(load_weights(&mut b, &path, false), Err(Error::Format { .. })));
        assert_eq!(format!("{:?}", before.named_tensors()), format!("{:?}", b.named_tensors()));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ifodw");
        fs::write(&path, b"IFODW2\0\0\0\0").unwrap();
        assert!(matches!(load_weights(&mut net(1), &path, true), Err(Error::Format { .. })));
    }

    #[test]
    fn strict_shape_mismatch_names_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ifodw");
        let bad = Tensor::<f32>::zeros(&[3, 3]);
        save_tensors(&[("fc7.weight".to_string(), &bad)], &path).unwrap();
        let err = load_weights(&mut net(1), &path, true).unwrap_err();
        assert!(err.to_string().contains("fc7.weight"));
        let report = load_weights(&mut net(1), &path, false).unwrap();
        assert_eq!(report.skipped, vec!["fc7.weight".to_string()]);
    }
}
