//! Binary parameter checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "SRGNCKPT"
//! version    u32      1
//! dtype      u8       bytes per float (4 = f32, 8 = f64)
//! n_specs    u32
//! specs      n_specs × spec
//! n_params   u32
//! params     n_params × (n u32, c u32, h u32, w u32, n·c·h·w floats)
//! n_buffers  u32
//! buffers    n_buffers × (len u32, len floats)
//! has_adam   u8       0 or 1
//! adam       beta1 f64, beta2 f64, eps f64, step u64, skipped u64,
//!            n u32, n × (len u32, len floats of m, len floats of v)
//! ```
//!
//! A spec is a one-byte tag followed by its fields as u32 (the leaky slope is
//! an f64):
//!
//! | tag | kind            | fields                                     |
//! |-----|-----------------|--------------------------------------------|
//! | 1   | conv            | in, out, kernel, stride, padding           |
//! | 2   | batchnorm       | channels                                   |
//! | 3   | relu            |                                            |
//! | 4   | leaky_relu      | slope (f64)                                |
//! | 5   | sigmoid         |                                            |
//! | 6   | dense           | in, out                                    |
//! | 7   | pixel_shuffle   | factor                                     |
//! | 8   | residual_block  | channels, kernel                           |
//! | 9   | elementwise_add | n_body u32, then n_body nested specs       |

use std::fs;
use std::path::Path;

use super::adam::{AdamConfig, AdamState};
use super::layers::LayerSpec;
use super::network::Network;
use super::tensor::{Scalar, Shape4};
use super::NnError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SRGNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A network with its optional optimizer state, as stored on disk.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub network: Network<T>,
    pub adam: Option<AdamState<T>>,
}

pub fn encode_checkpoint<T: Scalar>(net: &Network<T>, adam: Option<&AdamState<T>>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    out.push(T::BYTES as u8);
    put_u32(&mut out, net.specs().len() as u32);
    for s in net.specs() {
        put_spec(&mut out, s);
    }
    let params = net.params();
    put_u32(&mut out, params.len() as u32);
    for p in params {
        let s = p.shape();
        for d in [s.n, s.c, s.h, s.w] {
            put_u32(&mut out, d as u32);
        }
        p.data().iter().for_each(|v| v.write_le(&mut out));
    }
    let buffers = net.buffers();
    put_u32(&mut out, buffers.len() as u32);
    for b in buffers {
        put_u32(&mut out, b.len() as u32);
        b.iter().for_each(|v| v.write_le(&mut out));
    }
    match adam {
        None => out.push(0),
        Some(a) => {
            out.push(1);
            for f in [a.config.beta1, a.config.beta2, a.config.eps] {
                out.extend_from_slice(&f.to_le_bytes());
            }
            out.extend_from_slice(&a.step.to_le_bytes());
            out.extend_from_slice(&a.skipped.to_le_bytes());
            put_u32(&mut out, a.m.len() as u32);
            for (m, v) in a.m.iter().zip(&a.v) {
                put_u32(&mut out, m.len() as u32);
                m.iter().for_each(|x| x.write_le(&mut out));
                v.iter().for_each(|x| x.write_le(&mut out));
            }
        }
    }
    out
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let dtype = r.u8()? as usize;
    if dtype != T::BYTES {
        return Err(corrupt(format!("stored floats are {dtype} bytes, expected {}", T::BYTES)));
    }
    let n_specs = r.u32()? as usize;
    let mut specs = Vec::with_capacity(n_specs.min(1024));
    for _ in 0..n_specs {
        specs.push(r.spec(0)?);
    }
    let mut net = Network::<T>::new(specs).map_err(|e| corrupt(format!("invalid layer table: {e}")))?;

    let n_params = r.u32()? as usize;
    if n_params != net.params().len() {
        return Err(corrupt(format!("{n_params} parameter tensors for a table needing {}", net.params().len())));
    }
    for (i, p) in net.params_mut().into_iter().enumerate() {
        let shape = Shape4::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        if shape != p.shape() {
            return Err(corrupt(format!("parameter {i} has shape {shape}, layer table needs {}", p.shape())));
        }
        r.floats_into(p.data_mut())?;
    }
    let n_buffers = r.u32()? as usize;
    if n_buffers != net.buffers().len() {
        return Err(corrupt(format!("{n_buffers} buffers for a table needing {}", net.buffers().len())));
    }
    for (i, b) in net.buffers_mut().into_iter().enumerate() {
        let len = r.u32()? as usize;
        if len != b.len() {
            return Err(corrupt(format!("buffer {i} has {len} values, expected {}", b.len())));
        }
        r.floats_into(b)?;
    }

    let adam = match r.u8()? {
        0 => None,
        1 => {
            let config = AdamConfig { beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
            let step = r.u64()?;
            let skipped = r.u64()?;
            let n = r.u32()? as usize;
            let lens: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
            if n != lens.len() {
                return Err(corrupt(format!("optimizer state for {n} tensors, network has {}", lens.len())));
            }
            let mut state = AdamState::for_network(config, &net);
            state.step = step;
            state.skipped = skipped;
            for i in 0..n {
                let len = r.u32()? as usize;
                if len != lens[i] {
                    return Err(corrupt(format!("optimizer tensor {i} has {len} values, expected {}", lens[i])));
                }
                r.floats_into(&mut state.m[i])?;
                r.floats_into(&mut state.v[i])?;
            }
            Some(state)
        }
        t => return Err(corrupt(format!("bad optimizer flag {t}"))),
    };
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { network: net, adam })
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    net: &Network<T>,
    adam: Option<&AdamState<T>>,
) -> Result<(), NnError> {
    fs::write(path, encode_checkpoint(net, adam)).map_err(|source| NnError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, NnError> {
    let bytes = fs::read(path).map_err(|source| NnError::Io { path: path.to_path_buf(), source })?;
    decode_checkpoint(&bytes)
}

fn corrupt(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_spec(out: &mut Vec<u8>, s: &LayerSpec) {
    let u = |out: &mut Vec<u8>, v: usize| put_u32(out, v as u32);
    match s {
        LayerSpec::Conv { in_channels, out_channels, kernel, stride, padding } => {
            out.push(1);
            for v in [*in_channels, *out_channels, *kernel, *stride, *padding] {
                u(out, v);
            }
        }
        LayerSpec::BatchNorm { channels } => {
            out.push(2);
            u(out, *channels);
        }
        LayerSpec::Relu => out.push(3),
        LayerSpec::LeakyRelu { slope } => {
            out.push(4);
            out.extend_from_slice(&slope.to_le_bytes());
        }
        LayerSpec::Sigmoid => out.push(5),
        LayerSpec::Dense { in_features, out_features } => {
            out.push(6);
            u(out, *in_features);
            u(out, *out_features);
        }
        LayerSpec::PixelShuffle { factor } => {
            out.push(7);
            u(out, *factor);
        }
        LayerSpec::ResidualBlock { channels, kernel } => {
            out.push(8);
            u(out, *channels);
            u(out, *kernel);
        }
        LayerSpec::ElementwiseAdd { body } => {
            out.push(9);
            u(out, body.len());
            for b in body {
                put_spec(out, b);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats_into<T: Scalar>(&mut self, dst: &mut [T]) -> Result<(), NnError> {
        let raw = self.take(dst.len() * T::BYTES)?;
        for (d, chunk) in dst.iter_mut().zip(raw.chunks_exact(T::BYTES)) {
            *d = T::read_le(chunk);
        }
        Ok(())
    }

    fn spec(&mut self, depth: usize) -> Result<LayerSpec, NnError> {
        if depth > 16 {
            return Err(corrupt("layer table nested too deeply"));
        }
        let u = |r: &mut Self| r.u32().map(|v| v as usize);
        Ok(match self.u8()? {
            1 => LayerSpec::Conv {
                in_channels: u(self)?,
                out_channels: u(self)?,
                kernel: u(self)?,
                stride: u(self)?,
                padding: u(self)?,
            },
            2 => LayerSpec::BatchNorm { channels: u(self)? },
            3 => LayerSpec::Relu,
            4 => LayerSpec::LeakyRelu { slope: self.f64()? },
            5 => LayerSpec::Sigmoid,
            6 => LayerSpec::Dense { in_features: u(self)?, out_features: u(self)? },
            7 => LayerSpec::PixelShuffle { factor: u(self)? },
            8 => LayerSpec::ResidualBlock { channels: u(self)?, kernel: u(self)? },
            9 => {
                let n = u(self)?;
                let mut body = Vec::with_capacity(n.min(64));
                for _ in 0..n {
                    body.push(self.spec(depth + 1)?);
                }
                LayerSpec::ElementwiseAdd { body }
            }
            t => return Err(corrupt(format!("unknown layer tag {t}"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_net() -> Network<f32> {
        let mut net = Network::new(vec![
            LayerSpec::conv3(1, 4, 1),
            LayerSpec::BatchNorm { channels: 4 },
            LayerSpec::leaky(),
            LayerSpec::ElementwiseAdd { body: vec![LayerSpec::ResidualBlock { channels: 4, kernel: 3 }] },
            LayerSpec::PixelShuffle { factor: 2 },
            LayerSpec::Dense { in_features: 16, out_features: 2 },
            LayerSpec::Relu,
            LayerSpec::Sigmoid,
        ])
        .unwrap();
        net.init_params(9);
        net
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = sample_net();
        let bytes = encode_checkpoint(&net, None);
        let back = decode_checkpoint::<f32>(&bytes).unwrap();
        assert!(back.adam.is_none());
        assert_eq!(back.network.specs(), net.specs());
        assert_eq!(encode_checkpoint(&back.network, None), bytes);
    }

    #[test]
    fn adam_state_round_trips() {
        let mut net = sample_net();
        let mut st = AdamState::for_network(AdamConfig::default(), &net);
        for p in net.params_mut() {
            p.grad_mut().unwrap().iter_mut().enumerate().for_each(|(i, g)| *g = i as f32 * 0.01 - 0.3);
        }
        st.step(&mut net.params_mut(), 1e-3).unwrap();
        let bytes = encode_checkpoint(&net, Some(&st));
        let back = decode_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(back.adam.as_ref(), Some(&st));
        assert_eq!(encode_checkpoint(&back.network, back.adam.as_ref()), bytes);
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode_checkpoint(&sample_net(), None);
        assert!(matches!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 1]), Err(NnError::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f32>(&bad).is_err());
        assert!(decode_checkpoint::<f64>(&bytes).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_checkpoint::<f32>(&long).is_err());
    }
}
