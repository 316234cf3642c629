//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "WALNETCK"
//! version      u32      1
//! config       u32 length + UTF-8 TOML model config
//! tensors      u32 count, then per tensor:
//!                u32 name length + UTF-8 name, u32 rank, rank x u32 dims
//! weights      every tensor's values as f32, in manifest order
//! adam         u8 present; if 1: u64 step, f32 lr, beta1, beta2, eps,
//!                then per tensor: first moment f32s, second moment f32s
//! norms        u32 count, then per layer:
//!                u32 name length + UTF-8 name, u32 channels, u8 initialized,
//!                f32 momentum, f32 eps, channels x f32 mean,
//!                channels x f32 var
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Model, ModelConfig, Param};
use crate::autodiff::{AdamState, BatchNormState, Tensor};
use crate::error::{Error, IoContext, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WALNETCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A model together with the optimizer state it was saved with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub adam: Option<AdamState<f32>>,
}

pub fn save_checkpoint(path: &Path, model: &Model<f32>, adam: Option<&AdamState<f32>>) -> Result<()> {
    let bytes = encode(model, adam)?;
    let file = File::create(path).ctx(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .ctx(|| format!("writing {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).ctx(|| format!("opening {}", path.display()))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .ctx(|| format!("reading {}", path.display()))?;
    decode(&bytes)
}

fn write_str(out: &mut Vec<u8>, s: &str) -> std::io::Result<()> {
    out.write_u32::<LE>(s.len() as u32)?;
    out.write_all(s.as_bytes())
}

pub(crate) fn encode(model: &Model<f32>, adam: Option<&AdamState<f32>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let config = model.config().to_toml()?;
    let res: std::io::Result<()> = (|| {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_u32::<LE>(CHECKPOINT_VERSION)?;
        write_str(&mut out, &config)?;
        out.write_u32::<LE>(model.params().len() as u32)?;
        for p in model.params() {
            write_str(&mut out, &p.name)?;
            out.write_u32::<LE>(p.value.shape().len() as u32)?;
            for &d in p.value.shape() {
                out.write_u32::<LE>(d as u32)?;
            }
        }
        for p in model.params() {
            for &v in p.value.data() {
                out.write_f32::<LE>(v)?;
            }
        }
        match adam {
            None => out.write_u8(0)?,
            Some(a) => {
                out.write_u8(1)?;
                out.write_u64::<LE>(a.step_count)?;
                for v in [a.lr, a.beta1, a.beta2, a.eps] {
                    out.write_f32::<LE>(v)?;
                }
                for (m, v) in a.first_moment.iter().zip(&a.second_moment) {
                    for &x in m.iter().chain(v) {
                        out.write_f32::<LE>(x)?;
                    }
                }
            }
        }
        out.write_u32::<LE>(model.norms().len() as u32)?;
        for n in model.norms() {
            write_str(&mut out, &n.name)?;
            out.write_u32::<LE>(n.channels() as u32)?;
            out.write_u8(u8::from(n.initialized))?;
            out.write_f32::<LE>(n.momentum)?;
            out.write_f32::<LE>(n.eps)?;
            for &x in n.running_mean.iter().chain(&n.running_var) {
                out.write_f32::<LE>(x)?;
            }
        }
        Ok(())
    })();
    res.map_err(|e| Error::io("encoding checkpoint", e))?;
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok((&mut self.take(4)?).read_u32::<LE>().expect("4 bytes"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok((&mut self.take(8)?).read_u64::<LE>().expect("8 bytes"))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok((&mut self.take(4)?).read_f32::<LE>().expect("4 bytes"))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = ModelConfig::from_toml(&r.string()?)?;
    let count = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        manifest.push((name, dims));
    }
    let mut params = Vec::with_capacity(count);
    for (name, dims) in manifest {
        let n = dims.iter().product();
        params.push(Param {
            name,
            value: Tensor::new(dims, r.f32s(n)?)?,
        });
    }
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let step_count = r.u64()?;
            let (lr, beta1, beta2, eps) = (r.f32()?, r.f32()?, r.f32()?, r.f32()?);
            let mut first_moment = Vec::with_capacity(count);
            let mut second_moment = Vec::with_capacity(count);
            for p in &params {
                first_moment.push(r.f32s(p.value.len())?);
                second_moment.push(r.f32s(p.value.len())?);
            }
            Some(AdamState {
                lr,
                beta1,
                beta2,
                eps,
                step_count,
                first_moment,
                second_moment,
            })
        }
        other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
    };
    let n_norms = r.u32()? as usize;
    let mut norms = Vec::with_capacity(n_norms);
    for _ in 0..n_norms {
        let name = r.string()?;
        let channels = r.u32()? as usize;
        let initialized = r.u8()? != 0;
        let momentum = r.f32()?;
        let eps = r.f32()?;
        let running_mean = r.f32s(channels)?;
        let running_var = r.f32s(channels)?;
        norms.push(BatchNormState {
            name,
            running_mean,
            running_var,
            momentum,
            eps,
            initialized,
        });
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.buf.len())));
    }
    let mut model = Model::build(config, 0)?;
    model.load_state(params, norms)?;
    Ok(Checkpoint { model, adam })
}
