//! Parameter checkpoint file: a versioned container with the network spec
//! and flat little-endian 64-bit float arrays per layer.

use std::io::{Read, Write};

use super::{Activation, DenseNetSpec, ParameterSet};
use crate::{Error, Result};

/// Header magic string.
pub const PARAM_MAGIC: &[u8; 8] = b"FSLNETP1";
/// Format version integer.
pub const PARAM_FORMAT_VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::checkpoint("truncated parameter file"))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::checkpoint("truncated parameter file"))?;
    Ok(u64::from_le_bytes(buf))
}

fn write_f64_array<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    write_u64(w, values.len() as u64)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_array<R: Read>(r: &mut R, expected_len: usize) -> Result<Vec<f64>> {
    let len = read_u64(r)? as usize;
    if len != expected_len {
        return Err(Error::checkpoint(format!(
            "layer array length {len} does not match spec ({expected_len})"
        )));
    }
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)
            .map_err(|_| Error::checkpoint("truncated parameter file"))?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

/// Serialize a spec and its parameters. Bit-exact round-trip with
/// [`read_parameters`].
pub fn write_parameters<W: Write>(
    w: &mut W,
    spec: &DenseNetSpec,
    params: &ParameterSet,
) -> Result<()> {
    w.write_all(PARAM_MAGIC)?;
    write_u32(w, PARAM_FORMAT_VERSION)?;
    write_u32(w, spec.input_width as u32)?;
    write_u32(w, spec.hidden_widths.len() as u32)?;
    for &h in &spec.hidden_widths {
        write_u32(w, h as u32)?;
    }
    write_u32(w, spec.output_width as u32)?;
    w.write_all(&[match spec.activation {
        Activation::Mish => 0u8,
        Activation::Identity => 1u8,
    }])?;
    for l in 0..params.layer_count() {
        write_f64_array(w, params.weights(l))?;
        write_f64_array(w, params.biases(l))?;
    }
    Ok(())
}

/// Parse a parameter file produced by [`write_parameters`].
pub fn read_parameters<R: Read>(r: &mut R) -> Result<(DenseNetSpec, ParameterSet)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::checkpoint("truncated parameter file"))?;
    if &magic != PARAM_MAGIC {
        return Err(Error::checkpoint("bad magic in parameter file"));
    }
    let version = read_u32(r)?;
    if version != PARAM_FORMAT_VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported parameter format version {version}"
        )));
    }
    let input_width = read_u32(r)? as usize;
    let hidden_count = read_u32(r)? as usize;
    let mut hidden_widths = Vec::with_capacity(hidden_count);
    for _ in 0..hidden_count {
        hidden_widths.push(read_u32(r)? as usize);
    }
    let output_width = read_u32(r)? as usize;
    let mut act = [0u8; 1];
    r.read_exact(&mut act)
        .map_err(|_| Error::checkpoint("truncated parameter file"))?;
    let activation = match act[0] {
        0 => Activation::Mish,
        1 => Activation::Identity,
        other => {
            return Err(Error::checkpoint(format!(
                "unknown activation tag {other}"
            )))
        }
    };
    let spec = DenseNetSpec::new(input_width, hidden_widths, output_width, activation)
        .map_err(|e| Error::checkpoint(format!("invalid spec in parameter file: {e}")))?;
    let mut params = ParameterSet::zeros(&spec);
    for l in 0..params.layer_count() {
        let (nin, nout) = params.layer_dims(l);
        let w = read_f64_array(r, nin * nout)?;
        let b = read_f64_array(r, nout)?;
        params.weights_mut(l).copy_from_slice(&w);
        params.biases_mut(l).copy_from_slice(&b);
    }
    Ok((spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = DenseNetSpec::new(3, vec![5, 4], 2, Activation::Mish).unwrap();
        let mut rng = derive(21, Stream::NetInit, 0);
        let params = ParameterSet::xavier(&spec, &mut rng);
        let mut buf = Vec::new();
        write_parameters(&mut buf, &spec, &params).unwrap();
        let (spec2, params2) = read_parameters(&mut buf.as_slice()).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(params, params2);

        // Re-serializing the loaded copy yields identical bytes.
        let mut buf2 = Vec::new();
        write_parameters(&mut buf2, &spec2, &params2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = b"NOTMAGIC".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        assert!(matches!(
            read_parameters(&mut bytes.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let spec = DenseNetSpec::new(2, vec![2], 1, Activation::Identity).unwrap();
        let params = ParameterSet::zeros(&spec);
        let mut buf = Vec::new();
        write_parameters(&mut buf, &spec, &params).unwrap();
        buf.truncate(buf.len() - 7);
        assert!(matches!(
            read_parameters(&mut buf.as_slice()),
            Err(Error::Checkpoint(_))
        ));
    }
}
