//! Self-describing binary checkpoints for network parameters and optimizer
//! state.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "IVRLCKPT" | u32 version | u64 step | str tag | u32 network count
//! per network: str name | u32 layer count
//!              per layer: u64 in | u64 out | u8 activation
//!              u64 parameter count | f64 parameters
//! u8 optimizer present
//!   u64 step | f64 lr, beta1, beta2, epsilon | u8 clip present | f64 clip
//!   u64 length | f64 first moments | f64 second moments
//! u64 FNV-1a hash of every preceding byte
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes.

use std::fs;
use std::path::Path;

use crate::approximator::{Activation, LayerSpec, OptimizerState, ParameterVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"IVRLCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    /// Environment steps trained when the checkpoint was taken.
    pub step: u64,
    /// Free-form description, e.g. algorithm and profile.
    pub tag: String,
    pub networks: Vec<(String, ParameterVector<S>)>,
    pub optimizer: Option<OptimizerState<S>>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn floats<S: Scalar>(&mut self, values: &[S]) {
        for v in values {
            self.f64(v.as_f64());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(what.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(corrupt(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        // Each counted item occupies at least one byte.
        if n > (self.bytes.len() - self.pos) as u64 {
            return Err(corrupt(format!("length {n} exceeds file size")));
        }
        Ok(n as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("string is not UTF-8"))
    }
    fn floats<S: Scalar>(&mut self, n: usize) -> Result<Vec<S>> {
        if n.checked_mul(8).is_none_or(|b| b > self.bytes.len() - self.pos) {
            return Err(corrupt(format!("truncated at byte {}", self.pos)));
        }
        (0..n).map(|_| self.f64().map(S::lit)).collect()
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(corrupt(format!("bad flag byte {b}"))),
        }
    }
}

impl<S: Scalar> Checkpoint<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u64(self.step);
        w.str(&self.tag);
        w.u32(self.networks.len() as u32);
        for (name, params) in &self.networks {
            w.str(name);
            w.u32(params.layers().len() as u32);
            for layer in params.layers() {
                w.u64(layer.input_width as u64);
                w.u64(layer.output_width as u64);
                w.u8(layer.activation.code());
            }
            w.u64(params.len() as u64);
            w.floats(params.values());
        }
        match &self.optimizer {
            None => w.u8(0),
            Some(opt) => {
                w.u8(1);
                w.u64(opt.step);
                for v in [opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon] {
                    w.f64(v.as_f64());
                }
                match opt.clip_norm {
                    None => {
                        w.u8(0);
                        w.f64(0.0);
                    }
                    Some(c) => {
                        w.u8(1);
                        w.f64(c.as_f64());
                    }
                }
                w.u64(opt.len() as u64);
                w.floats(&opt.first_moment);
                w.floats(&opt.second_moment);
            }
        }
        let hash = fnv1a(&w.0);
        w.u64(hash);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(corrupt("missing checkpoint header"));
        }
        let mut r = Reader {
            bytes,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let body_end = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
        if fnv1a(&bytes[..body_end]) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader {
            bytes: &bytes[..body_end],
            pos: r.pos,
        };
        let step = r.u64()?;
        let tag = r.str()?;
        let n_networks = r.u32()?;
        let mut networks = Vec::new();
        for _ in 0..n_networks {
            let name = r.str()?;
            let n_layers = r.u32()?;
            let mut layers = Vec::new();
            for _ in 0..n_layers {
                let input = r.u64()? as usize;
                let output = r.u64()? as usize;
                let code = r.u8()?;
                let activation = Activation::from_code(code)
                    .ok_or_else(|| corrupt(format!("unknown activation code {code}")))?;
                layers.push(LayerSpec::new(input, output, activation));
            }
            let n = r.len()?;
            let values = r.floats(n)?;
            let params = ParameterVector::from_values(layers, values)
                .map_err(|e| corrupt(format!("network `{name}`: {e}")))?;
            networks.push((name, params));
        }
        let optimizer = if r.bool()? {
            let opt_step = r.u64()?;
            let learning_rate = S::lit(r.f64()?);
            let beta1 = S::lit(r.f64()?);
            let beta2 = S::lit(r.f64()?);
            let epsilon = S::lit(r.f64()?);
            let has_clip = r.bool()?;
            let clip = S::lit(r.f64()?);
            let n = r.len()?;
            let first_moment = r.floats(n)?;
            let second_moment = r.floats(n)?;
            Some(OptimizerState {
                first_moment,
                second_moment,
                step: opt_step,
                learning_rate,
                beta1,
                beta2,
                epsilon,
                clip_norm: has_clip.then_some(clip),
            })
        } else {
            None
        };
        if r.pos != r.bytes.len() {
            return Err(corrupt("trailing bytes after checkpoint body"));
        }
        Ok(Self {
            step,
            tag,
            networks,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
