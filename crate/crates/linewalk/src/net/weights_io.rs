//! On-disk weights bundle format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "LWNETWTS"
//! version  u32      currently 1
//! divisor  u32      width divisor of the architecture
//! seed     u64      RNG seed used at initialization
//! count    u32      number of tensors
//! tensor   repeated: name_len u16, name bytes,
//!                    ndim u8, dims u32 x ndim,
//!                    payload f32 x prod(dims)
//! ```
//!
//! Tensors appear in a fixed order (conv1..conv5, each kernel / bias /
//! bn_scale / bn_shift / bn_mean / bn_var, then fc.weight, fc.bias); the
//! loader verifies names and shapes and names the offending tensor on
//! mismatch.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::arch::{CnnArchitecture, WeightsBundle};

const MAGIC: &[u8; 8] = b"LWNETWTS";
const VERSION: u32 = 1;

struct TensorSpec {
    name: String,
    dims: Vec<u32>,
}

fn tensor_layout(arch: CnnArchitecture) -> Vec<TensorSpec> {
    let in_ch = arch.in_channels();
    let out_ch = arch.channels();
    let mut specs = Vec::new();
    for b in 0..5 {
        let base = format!("conv{}", b + 1);
        specs.push(TensorSpec {
            name: format!("{base}.kernel"),
            dims: vec![out_ch[b] as u32, in_ch[b] as u32, 3, 3],
        });
        for field in ["bias", "bn_scale", "bn_shift", "bn_mean", "bn_var"] {
            specs.push(TensorSpec {
                name: format!("{base}.{field}"),
                dims: vec![out_ch[b] as u32],
            });
        }
    }
    specs.push(TensorSpec {
        name: "fc.weight".into(),
        dims: vec![arch.fc_inputs() as u32],
    });
    specs.push(TensorSpec {
        name: "fc.bias".into(),
        dims: vec![1],
    });
    specs
}

fn tensors_of(weights: &WeightsBundle) -> Vec<&[f32]> {
    let mut t: Vec<&[f32]> = Vec::new();
    for block in &weights.conv {
        t.push(&block.kernel);
        t.push(&block.bias);
        t.push(&block.bn_scale);
        t.push(&block.bn_shift);
        t.push(&block.bn_mean);
        t.push(&block.bn_var);
    }
    t.push(&weights.fc_weight);
    t.push(std::slice::from_ref(&weights.fc_bias));
    t
}

pub fn save_weights(weights: &WeightsBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    weights.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(weights.arch.divisor() as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&weights.init_seed.to_le_bytes()).map_err(io_err)?;

    let specs = tensor_layout(weights.arch);
    let tensors = tensors_of(weights);
    w.write_all(&(specs.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (spec, data) in specs.iter().zip(&tensors) {
        w.write_all(&(spec.name.len() as u16).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(spec.name.as_bytes()).map_err(io_err)?;
        w.write_all(&[spec.dims.len() as u8]).map_err(io_err)?;
        for d in &spec.dims {
            w.write_all(&d.to_le_bytes()).map_err(io_err)?;
        }
        for v in *data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated weights file while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightsBundle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a weights bundle".into()));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported weights version {version}, expected {VERSION}"
        )));
    }
    let divisor = read_u32(&mut r, "divisor")? as usize;
    let arch = CnnArchitecture::reduced(divisor)
        .map_err(|_| Error::Format(format!("invalid width divisor {divisor}")))?;
    let mut seed_bytes = [0u8; 8];
    read_exact(&mut r, &mut seed_bytes, "seed")?;
    let init_seed = u64::from_le_bytes(seed_bytes);

    let specs = tensor_layout(arch);
    let count = read_u32(&mut r, "tensor count")? as usize;
    if count != specs.len() {
        return Err(Error::Format(format!(
            "expected {} tensors, file declares {count}",
            specs.len()
        )));
    }

    let mut data: Vec<Vec<f32>> = Vec::with_capacity(specs.len());
    for spec in &specs {
        let mut len_bytes = [0u8; 2];
        read_exact(&mut r, &mut len_bytes, &spec.name)?;
        let name_len = u16::from_le_bytes(len_bytes) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact(&mut r, &mut name_bytes, &spec.name)?;
        let name = String::from_utf8_lossy(&name_bytes);
        if name != spec.name {
            return Err(Error::Format(format!(
                "tensor name mismatch: expected {}, found {name}",
                spec.name
            )));
        }
        let mut ndim = [0u8; 1];
        read_exact(&mut r, &mut ndim, &spec.name)?;
        if ndim[0] as usize != spec.dims.len() {
            return Err(Error::Format(format!("tensor {} has wrong rank", spec.name)));
        }
        for expected in &spec.dims {
            let d = read_u32(&mut r, &spec.name)?;
            if d != *expected {
                return Err(Error::Format(format!(
                    "tensor {} has wrong shape: dim {d} != {expected}",
                    spec.name
                )));
            }
        }
        let n: usize = spec.dims.iter().product::<u32>() as usize;
        let mut payload = vec![0u8; n * 4];
        read_exact(&mut r, &mut payload, &spec.name)?;
        data.push(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        );
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }

    let mut weights = WeightsBundle::zeros(arch);
    weights.init_seed = init_seed;
    let mut it = data.into_iter();
    for block in &mut weights.conv {
        block.kernel = it.next().unwrap();
        block.bias = it.next().unwrap();
        block.bn_scale = it.next().unwrap();
        block.bn_shift = it.next().unwrap();
        block.bn_mean = it.next().unwrap();
        block.bn_var = it.next().unwrap();
    }
    weights.fc_weight = it.next().unwrap();
    weights.fc_bias = it.next().unwrap()[0];
    weights.validate()?;
    Ok(weights)
}
