//! Binary parameter checkpoints.
//!
//! Layout: the magic bytes `PMCK1`, then one record per tensor in
//! `ParamSet` order: name length (u64 LE), UTF-8 name, rank (u64 LE),
//! dims (u64 LE each), payload (f64 LE each). Records run to EOF.

use std::io::{Read, Write};

use crate::param::ParamSet;
use crate::{Result, TensorError};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"PMCK1";

/// Writes every parameter (trainable or not) in insertion order.
pub fn save_checkpoint<W: Write>(mut w: W, params: &ParamSet) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for p in params.iter() {
        w.write_all(&(p.name.len() as u64).to_le_bytes())?;
        w.write_all(p.name.as_bytes())?;
        w.write_all(&(p.shape.len() as u64).to_le_bytes())?;
        for d in &p.shape {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &p.value {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<Option<u64>> {
    let mut buf = [0u8; 8];
    match r.read_exact(&mut buf) {
        Ok(()) => Ok(Some(u64::from_le_bytes(buf))),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Reads all tensor records as (name, shape, values).
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let mut out = Vec::new();
    while let Some(name_len) = read_u64(&mut r)? {
        let mut name_bytes = vec![0u8; name_len as usize];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| TensorError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read_u64(&mut r)?
            .ok_or_else(|| TensorError::Checkpoint(format!("truncated record `{name}`")))?;
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let d = read_u64(&mut r)?
                .ok_or_else(|| TensorError::Checkpoint(format!("truncated dims of `{name}`")))?;
            shape.push(d as usize);
        }
        let numel: usize = shape.iter().product();
        let mut payload = vec![0u8; numel * 8];
        r.read_exact(&mut payload)
            .map_err(|_| TensorError::Checkpoint(format!("truncated payload of `{name}`")))?;
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, shape, values));
    }
    Ok(out)
}

/// Loads checkpoint values into an existing parameter set.
///
/// Strict: every stored tensor must match a registered parameter by name
/// and shape, and every parameter must be present in the checkpoint.
pub fn load_checkpoint_into<R: Read>(r: R, params: &mut ParamSet) -> Result<()> {
    let records = read_checkpoint(r)?;
    if records.len() != params.len() {
        return Err(TensorError::Checkpoint(format!(
            "checkpoint has {} tensors, model has {}",
            records.len(),
            params.len()
        )));
    }
    for (name, shape, values) in records {
        let p = params
            .by_name_mut(&name)
            .ok_or_else(|| TensorError::Checkpoint(format!("unknown tensor `{name}`")))?;
        if p.shape != shape {
            return Err(TensorError::Checkpoint(format!(
                "tensor `{name}` has shape {shape:?}, model expects {:?}",
                p.shape
            )));
        }
        p.value = values;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_params() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("layer.w", vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-9, -7.25], true);
        ps.add("layer.b", vec![1, 3], vec![0.5, 0.25, -0.125], true);
        ps.add("bn.running_var", vec![1, 3], vec![1.0, 2.0, 3.0], false);
        ps
    }

    #[test]
    fn round_trip_is_exact() {
        let params = sample_params();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params).unwrap();
        assert_eq!(&buf[..5], CHECKPOINT_MAGIC);

        let mut restored = sample_params();
        for p in restored.iter_mut() {
            p.value.fill(9.9);
        }
        load_checkpoint_into(buf.as_slice(), &mut restored).unwrap();
        for (a, b) in params.iter().zip(restored.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let params = sample_params();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &params).unwrap();
        let mut other = ParamSet::new();
        other.add("layer.w", vec![3, 2], vec![0.0; 6], true);
        other.add("layer.b", vec![1, 3], vec![0.0; 3], true);
        other.add("bn.running_var", vec![1, 3], vec![0.0; 3], false);
        assert!(load_checkpoint_into(buf.as_slice(), &mut other).is_err());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"NOTCK".to_vec();
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
