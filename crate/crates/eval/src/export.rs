//! Embedding table: a text header followed by raw little-endian f64 rows.
//!
//! ```text
//! CVVNET-EMBEDDINGS 1
//! parts=<P>
//! dim=<D>
//! count=<N>
//! kind=<free-form tag>
//! record sequence=<id> identity=<u64> view_group=<Low|Mid|High|-> condition=<NM|BG|CL|->
//! ...
//! end
//! <N * P * D little-endian f64, records in header order>
//! ```

use std::fs;
use std::path::Path;

use cvvnet_core::{Condition, ViewGroup};

use crate::error::{EvalError, Result};
use crate::record::EvalRecord;

const MAGIC: &str = "CVVNET-EMBEDDINGS 1";

/// Serializes records that share one `(parts, dim)` shape.
pub fn encode_embeddings(records: &[EvalRecord], kind: &str) -> std::result::Result<Vec<u8>, String> {
    let (parts, dim) = records.first().map_or((0, 0), EvalRecord::shape);
    if kind.contains(char::is_whitespace) {
        return Err(format!("kind tag {kind:?} contains whitespace"));
    }
    let mut head = format!("{MAGIC}\nparts={parts}\ndim={dim}\ncount={}\nkind={kind}\n", records.len());
    for r in records {
        if r.shape() != (parts, dim) {
            return Err(format!("record {} has shape {:?}, expected {:?}", r.sequence_id, r.shape(), (parts, dim)));
        }
        if r.sequence_id.is_empty() || r.sequence_id.contains(char::is_whitespace) {
            return Err(format!("sequence id {:?} is empty or contains whitespace", r.sequence_id));
        }
        let view = r.view_group.map_or("-".to_string(), |v| v.to_string());
        let cond = r.condition.map_or("-".to_string(), |c| c.to_string());
        head.push_str(&format!(
            "record sequence={} identity={} view_group={view} condition={cond}\n",
            r.sequence_id, r.identity
        ));
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    for r in records {
        for v in &r.embedding {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, records: &[EvalRecord], kind: &str) -> Result<()> {
    let bytes = encode_embeddings(records, kind).map_err(|message| EvalError::Format { path: path.into(), message })?;
    fs::write(path, bytes).map_err(|source| EvalError::Io { path: path.into(), source })
}

/// Parsed table: records plus the `kind` tag.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub kind: String,
    pub records: Vec<EvalRecord>,
}

pub fn decode_embeddings(bytes: &[u8]) -> std::result::Result<EmbeddingTable, String> {
    let mut pos = 0;
    let mut next_line = || -> std::result::Result<&str, String> {
        let rest = &bytes[pos..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or("truncated header")?;
        pos += nl + 1;
        std::str::from_utf8(&rest[..nl]).map_err(|_| "header is not UTF-8".to_string())
    };
    if next_line()? != MAGIC {
        return Err("bad magic line".into());
    }
    let mut field = |key: &str| -> std::result::Result<String, String> {
        let line = next_line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| format!("expected {key}=..., got {line:?}"))
    };
    let num = |s: String, key: &str| s.parse::<usize>().map_err(|_| format!("bad {key} {s:?}"));
    let parts = num(field("parts")?, "parts")?;
    let dim = num(field("dim")?, "dim")?;
    let count = num(field("count")?, "count")?;
    let kind = field("kind")?;
    let mut headers = Vec::with_capacity(count);
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        let rest = line.strip_prefix("record ").ok_or_else(|| format!("unexpected header line {line:?}"))?;
        let (mut seq, mut id, mut view, mut cond) = (None, None, None, None);
        for f in rest.split_whitespace() {
            let (k, v) = f.split_once('=').ok_or_else(|| format!("bad field {f:?}"))?;
            match k {
                "sequence" => seq = Some(v.to_string()),
                "identity" => id = Some(v.parse::<u64>().map_err(|_| format!("bad identity {v:?}"))?),
                "view_group" => view = Some(if v == "-" { None } else { Some(v.parse::<ViewGroup>()?) }),
                "condition" => cond = Some(if v == "-" { None } else { Some(v.parse::<Condition>()?) }),
                _ => return Err(format!("unknown record field {k:?}")),
            }
        }
        match (seq, id, view, cond) {
            (Some(s), Some(i), Some(v), Some(c)) => headers.push((s, i, v, c)),
            _ => return Err(format!("incomplete record line {line:?}")),
        }
    }
    if headers.len() != count {
        return Err(format!("header declares {count} records but lists {}", headers.len()));
    }
    let payload = &bytes[pos..];
    let row = parts * dim * 8;
    if payload.len() != count * row {
        return Err(format!("payload has {} bytes, expected {}", payload.len(), count * row));
    }
    let records = headers
        .into_iter()
        .enumerate()
        .map(|(n, (s, i, v, c))| {
            let emb = payload[n * row..(n + 1) * row]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            EvalRecord::new(emb, parts, dim, i, v, c, s)
        })
        .collect();
    Ok(EmbeddingTable { kind, records })
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(|source| EvalError::Io { path: path.into(), source })?;
    decode_embeddings(&bytes).map_err(|message| EvalError::Format { path: path.into(), message })
}
