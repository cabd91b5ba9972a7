//! Checkpoint file format.
//!
//! Layout: magic "SRACKPT1"; architecture descriptor as u64-LE length plus
//! UTF-8 bytes; parameter count as u64 LE; parameters as f32 LE; optimizer
//! momentum buffer appended in the same count-plus-f32 layout.

use crate::error::{Error, Result};
use crate::model::{Architecture, Model};

const MAGIC: &[u8; 8] = b"SRACKPT1";

pub fn write_checkpoint(model: &Model, velocity: &[f64]) -> Vec<u8> {
    let desc = model.arch.descriptor();
    let mut out = Vec::with_capacity(
        8 + 8 + desc.len() + 2 * (8 + 4 * model.params.len()),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(desc.len() as u64).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    write_f32_block(&mut out, &model.params);
    write_f32_block(&mut out, velocity);
    out
}

fn write_f32_block(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(Model, Vec<f64>)> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::MalformedInput("truncated checkpoint".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != MAGIC {
        return Err(Error::MalformedInput("bad checkpoint magic".into()));
    }
    let desc_len = read_u64(take(&mut pos, 8)?) as usize;
    let desc = std::str::from_utf8(take(&mut pos, desc_len)?)
        .map_err(|_| Error::MalformedInput("descriptor is not UTF-8".into()))?
        .to_owned();
    let arch = Architecture::from_descriptor(&desc)?;
    let params = read_f32_block(bytes, &mut pos)?;
    if params.len() != arch.param_count() {
        return Err(Error::MalformedInput(format!(
            "parameter count {} does not match architecture ({})",
            params.len(),
            arch.param_count()
        )));
    }
    let velocity = read_f32_block(bytes, &mut pos)?;
    if velocity.len() != params.len() {
        return Err(Error::MalformedInput("optimizer state length mismatch".into()));
    }
    Ok((Model { arch, params }, velocity))
}

fn read_u64(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(bytes.try_into().unwrap())
}

fn read_f32_block(bytes: &[u8], pos: &mut usize) -> Result<Vec<f64>> {
    if *pos + 8 > bytes.len() {
        return Err(Error::MalformedInput("truncated checkpoint".into()));
    }
    let count = read_u64(&bytes[*pos..*pos + 8]) as usize;
    *pos += 8;
    if *pos + 4 * count > bytes.len() {
        return Err(Error::MalformedInput("truncated checkpoint payload".into()));
    }
    let vals = bytes[*pos..*pos + 4 * count]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    *pos += 4 * count;
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, Purpose};

    #[test]
    fn round_trip_preserves_f32_values() {
        let mut rng = derive_stream(1, 0, 0, 0, Purpose::ModelInit);
        let model = Model::init(Architecture::tiny(4), &mut rng);
        let velocity: Vec<f64> = model.params.iter().map(|p| p * 0.1).collect();
        let bytes = write_checkpoint(&model, &velocity);
        let (loaded, v2) = read_checkpoint(&bytes).unwrap();
        assert_eq!(loaded.arch, model.arch);
        for (a, b) in loaded.params.iter().zip(&model.params) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(v2.len(), velocity.len());
    }

    #[test]
    fn magic_is_checked() {
        assert!(read_checkpoint(b"NOTACKPT").is_err());
        assert!(read_checkpoint(b"SRACKPT1").is_err()); // truncated after magic
    }

    #[test]
    fn header_layout_is_stable() {
        let mut rng = derive_stream(2, 0, 0, 0, Purpose::ModelInit);
        let model = Model::init(Architecture::tiny(2), &mut rng);
        let bytes = write_checkpoint(&model, &vec![0.0; model.params.len()]);
        assert_eq!(&bytes[0..8], b"SRACKPT1");
        let desc = model.arch.descriptor();
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), desc.len() as u64);
        assert_eq!(&bytes[16..16 + desc.len()], desc.as_bytes());
        let off = 16 + desc.len();
        assert_eq!(
            u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()),
            model.params.len() as u64
        );
    }
}
