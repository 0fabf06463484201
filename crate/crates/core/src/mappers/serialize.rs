//! Binary model files.
//!
//! ```text
//! magic    b"TLDM"
//! version  u16 (= 1)
//! method   u8  (0 none, 1 lca, 2 lcc, 3 nca)
//! none     k u32
//! lca      k u32, n_basis u32, basis_x, basis_y          (k × n_basis f64 each)
//! lcc      k u32, m u32, mean_x, mean_y (k f64), enc_x, enc_y (m × k f64),
//!          singular values (m f64)
//! nca      k u32, h u32, then W1 (h × k), b1 (h), W2 (k × h), b2 (k) for
//!          net_xy followed by net_yx
//! ```
//!
//! All numbers are little-endian; matrices are row-major.

use std::fs;
use std::path::Path;

use super::{LcaModel, LccModel, MapperError, MapperModel, Method, NcaModel, Result, Side};
use crate::linalg::DenseMatrix;
use crate::nn::FeedForwardNet;

pub const MODEL_MAGIC: &[u8; 4] = b"TLDM";
pub const MODEL_VERSION: u16 = 1;

pub fn encode_model(model: &MapperModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(model.method().code());
    put_u32(&mut out, model.input_dim());
    match model {
        MapperModel::None { .. } => {}
        MapperModel::Lca(m) => {
            put_u32(&mut out, m.n_basis());
            put_f64s(&mut out, m.basis(Side::Source).as_slice());
            put_f64s(&mut out, m.basis(Side::Target).as_slice());
        }
        MapperModel::Lcc(m) => {
            put_u32(&mut out, m.shared_dim());
            put_f64s(&mut out, m.mean(Side::Source));
            put_f64s(&mut out, m.mean(Side::Target));
            put_f64s(&mut out, m.encoder(Side::Source).as_slice());
            put_f64s(&mut out, m.encoder(Side::Target).as_slice());
            put_f64s(&mut out, m.singular_values());
        }
        MapperModel::Nca(m) => {
            put_u32(&mut out, m.net_xy().hidden_dim());
            for net in [m.net_xy(), m.net_yx()] {
                put_f64s(&mut out, net.w1().as_slice());
                put_f64s(&mut out, net.b1());
                put_f64s(&mut out, net.w2().as_slice());
                put_f64s(&mut out, net.b2());
            }
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<MapperModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if &magic != MODEL_MAGIC {
        return Err(MapperError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != MODEL_VERSION {
        return Err(MapperError::UnsupportedVersion(version));
    }
    let code = r.take(1, "method")?[0];
    let method = Method::ALL
        .into_iter()
        .find(|m| m.code() == code)
        .ok_or(MapperError::UnknownMethod(code))?;
    let k = r.u32("input dimension")?;

    let model = match method {
        Method::None => MapperModel::None { input_dim: k },
        Method::Lca => {
            let nb = r.u32("basis size")?;
            let bx = r.matrix(k, nb, "basis_x")?;
            let by = r.matrix(k, nb, "basis_y")?;
            MapperModel::Lca(LcaModel::from_bases(bx, by)?)
        }
        Method::Lcc => {
            let m = r.u32("shared dimension")?;
            let mean_x = r.f64s(k, "mean_x")?;
            let mean_y = r.f64s(k, "mean_y")?;
            let enc_x = r.matrix(m, k, "enc_x")?;
            let enc_y = r.matrix(m, k, "enc_y")?;
            let sv = r.f64s(m, "singular values")?;
            MapperModel::Lcc(LccModel::from_parts(mean_x, mean_y, enc_x, enc_y, sv)?)
        }
        Method::Nca => {
            let h = r.u32("hidden units")?;
            let mut nets = Vec::with_capacity(2);
            for _ in 0..2 {
                let w1 = r.matrix(h, k, "W1")?;
                let b1 = r.f64s(h, "b1")?;
                let w2 = r.matrix(k, h, "W2")?;
                let b2 = r.f64s(k, "b2")?;
                nets.push(FeedForwardNet::new(w1, b1, w2, b2)?);
            }
            let yx = nets.pop().expect("two nets");
            let xy = nets.pop().expect("two nets");
            MapperModel::Nca(NcaModel::from_nets(xy, yx)?)
        }
    };
    if r.pos != bytes.len() {
        return Err(MapperError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(model)
}

pub fn write_model(model: &MapperModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<MapperModel> {
    decode_model(&fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("model dimension exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(MapperError::Truncated(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or(MapperError::Truncated(what))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &'static str) -> Result<DenseMatrix> {
        let n = rows.checked_mul(cols).ok_or(MapperError::Truncated(what))?;
        Ok(DenseMatrix::new(rows, cols, self.f64s(n, what)?)?)
    }
}
