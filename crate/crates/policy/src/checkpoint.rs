//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "SDPOCKPT" | u32 version | u32 n | n bytes of JSON ModelConfig
//! u64 count | count × f32 parameters
//! u32 views | per view: u16 name_len, name bytes, u64 offset, u64 len
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::config::ModelConfig;
use crate::error::{PolicyError, Result};
use crate::model::PolicyModel;

const MAGIC: &[u8; 8] = b"SDPOCKPT";
pub const FORMAT_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PolicyError + '_ {
    move |source| PolicyError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn bad(path: &Path, message: impl Into<String>) -> PolicyError {
    PolicyError::Checkpoint {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn save_checkpoint(model: &PolicyModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = io_err(path);
    let mut w = BufWriter::new(File::create(path).map_err(&io)?);
    let config = serde_json::to_vec(model.config()).map_err(|e| bad(path, e.to_string()))?;
    w.write_all(MAGIC).map_err(&io)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(&io)?;
    w.write_u32::<LittleEndian>(config.len() as u32).map_err(&io)?;
    w.write_all(&config).map_err(&io)?;
    w.write_u64::<LittleEndian>(model.num_params() as u64).map_err(&io)?;
    for &p in model.params() {
        w.write_f32::<LittleEndian>(p as f32).map_err(&io)?;
    }
    let views = model.layout().views();
    w.write_u32::<LittleEndian>(views.len() as u32).map_err(&io)?;
    for v in views {
        w.write_u16::<LittleEndian>(v.name.len() as u16).map_err(&io)?;
        w.write_all(v.name.as_bytes()).map_err(&io)?;
        w.write_u64::<LittleEndian>(v.offset as u64).map_err(&io)?;
        w.write_u64::<LittleEndian>(v.len() as u64).map_err(&io)?;
    }
    w.flush().map_err(&io)
}

/// Reads a checkpoint. With `expected`, the stored config must match it.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<PolicyModel> {
    let path = path.as_ref();
    let io = io_err(path);
    let mut r = BufReader::new(File::open(path).map_err(&io)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(&io)?;
    if &magic != MAGIC {
        return Err(bad(path, "not a policy checkpoint"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(&io)?;
    if version != FORMAT_VERSION {
        return Err(bad(path, format!("unsupported format version {version}")));
    }
    let n = r.read_u32::<LittleEndian>().map_err(&io)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(&io)?;
    let config: ModelConfig =
        serde_json::from_slice(&buf).map_err(|e| bad(path, format!("config header: {e}")))?;
    if let Some(exp) = expected {
        if exp != &config {
            return Err(bad(
                path,
                format!("config mismatch: checkpoint has {config:?}, expected {exp:?}"),
            ));
        }
    }
    let count = r.read_u64::<LittleEndian>().map_err(&io)? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(r.read_f32::<LittleEndian>().map_err(&io)? as f64);
    }
    let model = PolicyModel::from_parts(config, params).map_err(|e| bad(path, e.to_string()))?;
    let nviews = r.read_u32::<LittleEndian>().map_err(&io)? as usize;
    let views = model.layout().views();
    if nviews != views.len() {
        return Err(bad(path, format!("{nviews} named views, layout has {}", views.len())));
    }
    for v in views {
        let len = r.read_u16::<LittleEndian>().map_err(&io)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(&io)?;
        let offset = r.read_u64::<LittleEndian>().map_err(&io)? as usize;
        let size = r.read_u64::<LittleEndian>().map_err(&io)? as usize;
        if name != v.name.as_bytes() || offset != v.offset || size != v.len() {
            return Err(bad(
                path,
                format!(
                    "view table entry {:?}@{offset}+{size} does not match {}@{}+{}",
                    String::from_utf8_lossy(&name),
                    v.name,
                    v.offset,
                    v.len()
                ),
            ));
        }
    }
    if let Some(i) = model.params().iter().position(|p| !p.is_finite()) {
        return Err(bad(path, format!("parameter {i} is not finite")));
    }
    Ok(model)
}
