//! Binary model file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "EELM"
//! version      u32
//! seed         u64
//! input_dim    u32
//! hidden_size  u32
//! n_links      u32
//! activation   u8      0 sigmoid, 1 tanh, 2 relu
//! std mode     u8      0 shared, 1 per-unit, 2 none
//! output scale u8      0 input norm, 1 raw
//! reserved     u8
//! ridge        f64
//! W            f64 x hidden_size*input_dim, row-major
//! b            f64 x hidden_size
//! per link:
//!   std_scale  f64 x hidden_size
//!   beta       f64 x input_dim*hidden_size, row-major
//! ```

use std::io::{Read, Write};

use super::elm::{Activation, ElmConfig, ElmNetwork, LinkHead, OutputScaling, Standardization};
use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

pub const MODEL_MAGIC: &[u8; 4] = b"EELM";
pub const MODEL_VERSION: u32 = 1;

fn fmt_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

fn put_matrix<W: Write>(w: &mut W, m: &RealMatrix) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn put_slice<W: Write>(w: &mut W, v: &[f64]) -> std::io::Result<()> {
    v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))
}

pub fn write_model<W: Write>(mut w: W, net: &ElmNetwork) -> Result<()> {
    if !net.is_trained() {
        return Err(Error::NotReady("refusing to write an untrained network".into()));
    }
    let cfg = net.config();
    let dims = [net.input_dim(), net.hidden_size(), net.heads().len()];
    let mut body = || -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&cfg.seed.to_le_bytes())?;
        for d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&[
            cfg.activation.id(),
            cfg.standardization.id(),
            cfg.output_scaling.id(),
            0,
        ])?;
        w.write_all(&cfg.ridge.to_le_bytes())?;
        put_matrix(&mut w, net.input_weights())?;
        put_slice(&mut w, net.bias())?;
        for head in net.heads() {
            put_slice(&mut w, &head.std_scale)?;
            put_matrix(&mut w, &head.output_weights)?;
        }
        w.flush()
    };
    body().map_err(fmt_err)
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut buf = [0u8; K];
        self.inner.read_exact(&mut buf).map_err(fmt_err)?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn vec(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<RealMatrix> {
        let v = self.vec(rows * cols)?;
        Ok(RealMatrix::from_fn(rows, cols, |i, j| v[i * cols + j]))
    }
}

pub fn read_model<R: Read>(r: R) -> Result<ElmNetwork> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>()? != MODEL_MAGIC {
        return Err(Error::Format("not an EELM model file".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let seed = u64::from_le_bytes(r.bytes()?);
    let input_dim = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let n_links = r.u32()? as usize;
    let [act, std_mode, scaling, _] = r.bytes::<4>()?;
    let bad = |what: &str, id: u8| Error::Format(format!("unknown {what} id {id}"));
    let config = ElmConfig {
        hidden_size: hidden,
        activation: Activation::from_id(act).ok_or_else(|| bad("activation", act))?,
        standardization: Standardization::from_id(std_mode)
            .ok_or_else(|| bad("standardization", std_mode))?,
        output_scaling: OutputScaling::from_id(scaling).ok_or_else(|| bad("output scaling", scaling))?,
        ridge: r.f64()?,
        seed,
    };
    let input_weights = r.matrix(hidden, input_dim)?;
    let bias = r.vec(hidden)?;
    let heads = (0..n_links)
        .map(|_| {
            Ok(LinkHead {
                std_scale: r.vec(hidden)?,
                output_weights: r.matrix(input_dim, hidden)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ElmNetwork::from_parts(config, input_weights, bias, heads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::TrainingSet;
    use crate::numerics::{complex_gaussian, SeededRng};
    use faer::Mat;

    fn trained() -> ElmNetwork {
        let mut rng = SeededRng::new(2);
        let mut set = TrainingSet::new(4, 2);
        for _ in 0..20 {
            let v = complex_gaussian(&mut rng, 16, 1.0).unwrap();
            set.push(
                Mat::from_fn(4, 2, |i, j| v[j * 4 + i]),
                Mat::from_fn(4, 2, |i, j| v[8 + j * 4 + i]),
                5.0,
            )
            .unwrap();
        }
        let config = ElmConfig {
            hidden_size: 6,
            seed: 11,
            standardization: Standardization::PerUnit,
            ..Default::default()
        };
        ElmNetwork::new(config, 8).unwrap().train(&set).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let net = trained();
        let mut buf = Vec::new();
        write_model(&mut buf, &net).unwrap();
        assert_eq!(&buf[..4], b"EELM");
        let expected = 4 + 4 + 8 + 12 + 4 + 8 + 8 * (6 * 8 + 6 + 2 * (6 + 8 * 6));
        assert_eq!(buf.len(), expected);
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back.config(), net.config());
        assert_eq!(back.input_weights(), net.input_weights());
        assert_eq!(back.bias(), net.bias());
        assert_eq!(back.heads(), net.heads());
        let mut again = Vec::new();
        write_model(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_bad_headers() {
        let mut buf = Vec::new();
        write_model(&mut buf, &trained()).unwrap();
        let mut wrong_magic = buf.clone();
        wrong_magic[0] = b'X';
        assert!(matches!(read_model(wrong_magic.as_slice()), Err(Error::Format(_))));
        let mut wrong_version = buf.clone();
        wrong_version[4] = 9;
        assert!(matches!(read_model(wrong_version.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_model(&buf[..buf.len() - 3]), Err(Error::Format(_))));
    }
}
