//! Weight archives: one binary file holding every parameter and
//! normalization buffer of a backbone, keyed by layer index and a short
//! state name. Integers are little-endian; data is raw f64. Layout:
//!
//! ```text
//! magic "FCDDW001"
//! u32   entry count
//! entry: u32 layer index
//!        u8  name length, ASCII name (weight | bias | gamma | beta |
//!            running_mean | running_var)
//!        u8  ndim, then ndim x u64 dimensions
//!        f64 x product(dimensions) data
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Backbone, Layer};
use crate::{CoreError, Result};

const MAGIC: &[u8; 8] = b"FCDDW001";

/// How much of the backbone an archive must cover when loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    /// Every state tensor must be present: snapshots round-trip exactly.
    Full,
    /// Every frozen-prefix tensor must be present; trainable layers keep
    /// their current values when absent.
    FrozenPrefix,
}

struct StateRef<'a> {
    layer: usize,
    name: &'static str,
    data: &'a mut [f64],
    dims: Vec<usize>,
}

fn state_refs(backbone: &mut Backbone) -> Vec<StateRef<'_>> {
    let mut refs = Vec::new();
    for (i, layer) in backbone.layers.iter_mut().enumerate() {
        match layer {
            Layer::Conv(l) => {
                let dims = l.weight.shape().to_vec();
                refs.push(StateRef {
                    layer: i,
                    name: "weight",
                    data: l.weight.as_slice_mut().expect("contiguous"),
                    dims,
                });
                let dims = l.bias.shape().to_vec();
                refs.push(StateRef {
                    layer: i,
                    name: "bias",
                    data: l.bias.as_slice_mut().expect("contiguous"),
                    dims,
                });
            }
            Layer::Norm(l) => {
                for (name, arr) in [
                    ("gamma", &mut l.gamma),
                    ("beta", &mut l.beta),
                    ("running_mean", &mut l.running_mean),
                    ("running_var", &mut l.running_var),
                ] {
                    let dims = arr.shape().to_vec();
                    refs.push(StateRef {
                        layer: i,
                        name,
                        data: arr.as_slice_mut().expect("contiguous"),
                        dims,
                    });
                }
            }
            _ => {}
        }
    }
    refs
}

/// Write every parameter and buffer of the backbone to one archive file.
pub fn save_weights(backbone: &Backbone, path: &Path) -> Result<()> {
    let mut cloned = backbone.clone();
    let refs = state_refs(&mut cloned);
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(refs.len() as u32)?;
    for r in &refs {
        out.write_u32::<LittleEndian>(r.layer as u32)?;
        out.write_u8(r.name.len() as u8)?;
        out.write_all(r.name.as_bytes())?;
        out.write_u8(r.dims.len() as u8)?;
        for &d in &r.dims {
            out.write_u64::<LittleEndian>(d as u64)?;
        }
        for &v in r.data.iter() {
            out.write_f64::<LittleEndian>(v)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Load an archive into the backbone. Entry shapes must match exactly;
/// entries that match no state slot are an error (wrong architecture).
pub fn load_weights(backbone: &mut Backbone, path: &Path, coverage: Coverage) -> Result<()> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| {
        CoreError::WeightArchive(format!("{}: file too short for header", path.display()))
    })?;
    if &magic != MAGIC {
        return Err(CoreError::WeightArchive(format!(
            "{}: not a weight archive (bad magic)",
            path.display()
        )));
    }
    let count = input.read_u32::<LittleEndian>()?;
    let mut entries: HashMap<(usize, String), Vec<f64>> = HashMap::new();
    let mut entry_dims: HashMap<(usize, String), Vec<usize>> = HashMap::new();
    for _ in 0..count {
        let layer = input.read_u32::<LittleEndian>()? as usize;
        let name_len = input.read_u8()? as usize;
        let mut name_buf = vec![0u8; name_len];
        input.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf).map_err(|_| {
            CoreError::WeightArchive(format!("{}: non-ASCII entry name", path.display()))
        })?;
        let ndim = input.read_u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(input.read_u64::<LittleEndian>()? as usize);
        }
        let len: usize = dims.iter().product();
        let mut data = vec![0.0f64; len];
        for v in &mut data {
            *v = input.read_f64::<LittleEndian>().map_err(|_| {
                CoreError::WeightArchive(format!("{}: truncated data section", path.display()))
            })?;
        }
        let key = (layer, name);
        if entries.contains_key(&key) {
            return Err(CoreError::WeightArchive(format!(
                "{}: duplicate entry for layer {} '{}'",
                path.display(),
                key.0,
                key.1
            )));
        }
        entry_dims.insert(key.clone(), dims);
        entries.insert(key, data);
    }

    let frozen_prefix = backbone.frozen_prefix;
    let mut refs = state_refs(backbone);
    for r in &mut refs {
        let key = (r.layer, r.name.to_string());
        match entries.remove(&key) {
            Some(data) => {
                let dims = &entry_dims[&key];
                if *dims != r.dims {
                    return Err(CoreError::WeightArchive(format!(
                        "{}: layer {} '{}' has shape {:?}, backbone expects {:?}",
                        path.display(),
                        r.layer,
                        r.name,
                        dims,
                        r.dims
                    )));
                }
                r.data.copy_from_slice(&data);
            }
            None => {
                let required = coverage == Coverage::Full || r.layer < frozen_prefix;
                if required {
                    return Err(CoreError::WeightArchive(format!(
                        "{}: missing entry for layer {} '{}'",
                        path.display(),
                        r.layer,
                        r.name
                    )));
                }
            }
        }
    }
    if let Some(((layer, name), _)) = entries.into_iter().next() {
        return Err(CoreError::WeightArchive(format!(
            "{}: entry for layer {layer} '{name}' matches no state in this architecture",
            path.display()
        )));
    }
    Ok(())
}
