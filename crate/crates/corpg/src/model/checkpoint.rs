//! Checkpoint container: magic bytes, a text header holding every model
//! configuration field, then one binary record per parameter tensor.
//! Round-trips are bit-exact.
//!
//! Layout:
//! ```text
//! "CORPG1\n"
//! key=value\n ... (header, blank-line terminated)
//! repeated: [name_len u32 LE][name utf-8][rank u8][dims u32 LE x rank][f64 LE x prod(dims)]
//! ```

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{GraphModule, ModelConfig, ParamSet};
use crate::text::atomic_write;

pub const MAGIC: &[u8; 7] = b"CORPG1\n";

const MAX_NAME_LEN: u32 = 4096;
const MAX_TENSOR_VALUES: u64 = 1 << 28;

fn header_fields(cfg: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("vocab_size", cfg.vocab_size.to_string()),
        ("d_model", cfg.d_model.to_string()),
        ("heads", cfg.heads.to_string()),
        ("l_enc", cfg.l_enc.to_string()),
        ("l_dec", cfg.l_dec.to_string()),
        ("d_ff", cfg.d_ff.to_string()),
        ("dropout", cfg.dropout.to_string()),
        ("n_max", cfg.n_max.to_string()),
        ("max_sentences", cfg.max_sentences.to_string()),
        ("graph_module", cfg.graph_module.to_string()),
        ("sentence_position", cfg.sentence_position.to_string()),
        ("copy", cfg.copy.to_string()),
    ]
}

pub fn write_checkpoint<W: Write>(w: &mut W, cfg: &ModelConfig, params: &ParamSet) -> Result<()> {
    w.write_all(MAGIC)?;
    for (k, v) in header_fields(cfg) {
        writeln!(w, "{k}={v}")?;
    }
    writeln!(w)?;
    for e in params.entries() {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[e.shape.len() as u8])?;
        for &d in &e.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &e.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, params: &ParamSet) -> Result<()> {
    atomic_write(path, |w| write_checkpoint(w, cfg, params))
}

fn parse_header(lines: &HashMap<String, String>) -> Result<ModelConfig> {
    let get = |k: &str| -> Result<&String> {
        lines.get(k).ok_or_else(|| Error::data(format!("checkpoint header missing {k:?}")))
    };
    let usize_of = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::data(format!("bad {k} in checkpoint header")))
    };
    let bool_of = |k: &str| -> Result<bool> {
        match get(k)?.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(Error::data(format!("bad {k}={other:?} in checkpoint header"))),
        }
    };
    Ok(ModelConfig {
        vocab_size: usize_of("vocab_size")?,
        d_model: usize_of("d_model")?,
        heads: usize_of("heads")?,
        l_enc: usize_of("l_enc")?,
        l_dec: usize_of("l_dec")?,
        d_ff: usize_of("d_ff")?,
        dropout: get("dropout")?
            .parse()
            .map_err(|_| Error::data("bad dropout in checkpoint header".to_string()))?,
        n_max: usize_of("n_max")?,
        max_sentences: usize_of("max_sentences")?,
        graph_module: get("graph_module")?.parse::<GraphModule>()?,
        sentence_position: bool_of("sentence_position")?,
        copy: bool_of("copy")?,
    })
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(Error::data("truncated checkpoint record".to_string()));
        }
        filled += n;
    }
    Ok(true)
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(ModelConfig, ParamSet)> {
    let mut magic = [0u8; 7];
    if !read_exact_or_eof(r, &mut magic)? || &magic != MAGIC {
        return Err(Error::data("not a checkpoint file (bad magic)".to_string()));
    }

    // header: key=value lines until a blank line
    let mut lines = HashMap::new();
    loop {
        let mut line = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            if !read_exact_or_eof(r, &mut byte)? {
                return Err(Error::data("checkpoint header not terminated".to_string()));
            }
            if byte[0] == b'\n' {
                break;
            }
            line.push(byte[0]);
            if line.len() > 1024 {
                return Err(Error::data("checkpoint header line too long".to_string()));
            }
        }
        if line.is_empty() {
            break;
        }
        let text = String::from_utf8(line)
            .map_err(|_| Error::data("checkpoint header is not utf-8".to_string()))?;
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::data(format!("bad checkpoint header line {text:?}")))?;
        lines.insert(k.to_string(), v.to_string());
    }
    let cfg = parse_header(&lines)?;
    cfg.validate()
        .map_err(|e| Error::data(format!("invalid checkpoint configuration: {e}")))?;

    let mut params = ParamSet::new();
    loop {
        let mut len_buf = [0u8; 4];
        if !read_exact_or_eof(r, &mut len_buf)? {
            break;
        }
        let name_len = u32::from_le_bytes(len_buf);
        if name_len == 0 || name_len > MAX_NAME_LEN {
            return Err(Error::data(format!("unreasonable parameter name length {name_len}")));
        }
        let mut name_buf = vec![0u8; name_len as usize];
        if !read_exact_or_eof(r, &mut name_buf)? {
            return Err(Error::data("truncated parameter name".to_string()));
        }
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::data("parameter name is not utf-8".to_string()))?;

        let mut rank_buf = [0u8; 1];
        if !read_exact_or_eof(r, &mut rank_buf)? {
            return Err(Error::data(format!("truncated record for {name:?}")));
        }
        let rank = rank_buf[0] as usize;
        if !(1..=3).contains(&rank) {
            return Err(Error::data(format!("parameter {name:?} has rank {rank}, expected 1..=3")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let mut dim_buf = [0u8; 4];
            if !read_exact_or_eof(r, &mut dim_buf)? {
                return Err(Error::data(format!("truncated dims for {name:?}")));
            }
            let dim = u32::from_le_bytes(dim_buf) as u64;
            numel = numel.saturating_mul(dim.max(1)) * if dim == 0 { 0 } else { 1 };
            shape.push(dim as usize);
        }
        if numel > MAX_TENSOR_VALUES {
            return Err(Error::data(format!("parameter {name:?} is unreasonably large")));
        }
        let mut data = Vec::with_capacity(numel as usize);
        let mut val_buf = [0u8; 8];
        for _ in 0..numel {
            if !read_exact_or_eof(r, &mut val_buf)? {
                return Err(Error::data(format!("truncated data for {name:?}")));
            }
            data.push(f64::from_le_bytes(val_buf));
        }
        params.insert(&name, shape, data)?;
    }
    Ok((cfg, params))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ParamSet)> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(&mut BufReader::new(file))
}

/// Serialize to bytes, mostly for byte-identity checks.
pub fn checkpoint_bytes(cfg: &ModelConfig, params: &ParamSet) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = BufWriter::new(&mut buf);
        write_checkpoint(&mut w, cfg, params)?;
        w.flush()?;
    }
    Ok(buf)
}
