//! Flat binary checkpoint for an encoder and its projection head.
//!
//! All integers and floats are little-endian:
//!
//! | field                     | type          |
//! |---------------------------|---------------|
//! | magic `APTLABCK`          | 8 bytes       |
//! | version (= 1)             | u32           |
//! | encoder input width       | u32           |
//! | hidden layer count `H`    | u32           |
//! | hidden widths             | `H` × u32     |
//! | latent width              | u32           |
//! | projection hidden width   | u32           |
//! | projection output width   | u32           |
//! | encoder parameter count   | u64           |
//! | projection parameter count| u64           |
//! | encoder parameters        | f64 each      |
//! | projection parameters     | f64 each      |
//!
//! Parameters follow layer order; a dense layer stores its `output × input`
//! weights row-major, then its bias; layer normalization stores gain, then
//! bias.

use std::path::Path;

use super::encoder::{EncoderArch, EncoderParams, ProjectionArch, ProjectionParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"APTLABCK";
pub const VERSION: u32 = 1;

pub fn to_bytes(encoder: &EncoderParams, projection: &ProjectionParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, encoder.arch.input_dim);
    put_u32(&mut out, encoder.arch.hidden.len());
    for &h in &encoder.arch.hidden {
        put_u32(&mut out, h);
    }
    put_u32(&mut out, encoder.arch.latent_dim);
    put_u32(&mut out, projection.arch.hidden);
    put_u32(&mut out, projection.arch.output);
    out.extend_from_slice(&(encoder.net.num_params() as u64).to_le_bytes());
    out.extend_from_slice(&(projection.net.num_params() as u64).to_le_bytes());
    for p in encoder.net.params().iter().chain(projection.net.params()) {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
            .map_err(|_| Error::Checkpoint("parameter count overflows".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(EncoderParams, ProjectionParams)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_dim = r.u32()?;
    let n_hidden = r.u32()?;
    let hidden = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let latent_dim = r.u32()?;
    let proj_hidden = r.u32()?;
    let proj_out = r.u32()?;
    let n_enc = r.u64()?;
    let n_proj = r.u64()?;
    let enc_params = r.f64s(n_enc)?;
    let proj_params = r.f64s(n_proj)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if enc_params.iter().chain(&proj_params).any(|p| !p.is_finite()) {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    let encoder = EncoderParams::from_params(
        EncoderArch {
            input_dim,
            hidden,
            latent_dim,
        },
        enc_params,
    )?;
    let projection = ProjectionParams::from_params(
        ProjectionArch {
            input_dim: latent_dim,
            hidden: proj_hidden,
            output: proj_out,
        },
        proj_params,
    )?;
    Ok((encoder, projection))
}

pub fn save(path: &Path, encoder: &EncoderParams, projection: &ProjectionParams) -> Result<()> {
    std::fs::write(path, to_bytes(encoder, projection)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(EncoderParams, ProjectionParams)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
