//! Named parameter storage and the flat tensor archive format.
//!
//! Archive layout (all integers and floats little-endian):
//!
//! ```text
//! CVVNET-TENSORS 1
//! byte_order=little
//! dtype=f64
//! count=<n>
//! tensor name=<name> kind=<weight|nodecay|buffer> shape=<d0,d1,..> offset=<byte offset>
//! ...
//! end
//! <raw f64 payload, tensors back to back in declaration order>
//! ```

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::tensor::{numel, Tensor};

const MAGIC: &str = "CVVNET-TENSORS 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// How the optimizer should treat a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Trainable, subject to weight decay.
    Weight,
    /// Trainable, excluded from weight decay (biases, normalization scales).
    NoDecay,
    /// Not trainable (running statistics).
    Buffer,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::Buffer)
    }

    fn tag(self) -> &'static str {
        match self {
            ParamKind::Weight => "weight",
            ParamKind::NoDecay => "nodecay",
            ParamKind::Buffer => "buffer",
        }
    }

    fn from_tag(s: &str) -> Option<Self> {
        match s {
            "weight" => Some(ParamKind::Weight),
            "nodecay" => Some(ParamKind::NoDecay),
            "buffer" => Some(ParamKind::Buffer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed archive: {0}")]
    Format(String),
    #[error("archive has no tensor named {0:?}")]
    Missing(String),
    #[error("tensor {name:?} has shape {found:?}, expected {expected:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter name {name:?}");
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id);
        self.entries.push(ParamEntry { name, kind, value });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) {
        let e = &mut self.entries[id.0];
        assert_eq!(e.value.shape(), value.shape(), "shape change for {}", e.name);
        e.value = value;
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let id = self.id(name)?;
        Some(self.get_mut(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter().filter(|(_, e)| e.kind.trainable()).map(|(id, _)| id).collect()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|e| e.kind.trainable()).map(|e| e.value.numel()).sum()
    }

    pub fn write_archive<W: Write>(&self, w: &mut W) -> Result<(), ArchiveError> {
        let tensors: Vec<(&str, ParamKind, &Tensor)> =
            self.entries.iter().map(|e| (e.name.as_str(), e.kind, &e.value)).collect();
        write_archive(w, &tensors)
    }

    /// Reads an archive into a fresh store, preserving declaration order.
    pub fn read_archive<R: BufRead>(r: &mut R) -> Result<Self, ArchiveError> {
        let mut store = ParamStore::new();
        for (name, kind, t) in read_archive(r)? {
            store.add(name, kind, t);
        }
        Ok(store)
    }

    /// Overwrites every tensor of `self` from `other` by name, checking shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<(), ArchiveError> {
        for e in &mut self.entries {
            let src = other.id(&e.name).ok_or_else(|| ArchiveError::Missing(e.name.clone()))?;
            let src = other.get(src);
            if src.shape() != e.value.shape() {
                return Err(ArchiveError::Shape {
                    name: e.name.clone(),
                    expected: e.value.shape().to_vec(),
                    found: src.shape().to_vec(),
                });
            }
            e.value = src.clone();
        }
        Ok(())
    }
}

pub fn write_archive<W: Write>(
    w: &mut W,
    tensors: &[(&str, ParamKind, &Tensor)],
) -> Result<(), ArchiveError> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "byte_order=little")?;
    writeln!(w, "dtype=f64")?;
    writeln!(w, "count={}", tensors.len())?;
    let mut offset = 0usize;
    for (name, kind, t) in tensors {
        if name.contains(char::is_whitespace) {
            return Err(ArchiveError::Format(format!("tensor name {name:?} contains whitespace")));
        }
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(w, "tensor name={name} kind={} shape={} offset={offset}", kind.tag(), shape.join(","))?;
        offset += t.numel() * 8;
    }
    writeln!(w, "end")?;
    let mut buf = Vec::with_capacity(offset);
    for (_, _, t) in tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_archive<R: BufRead>(r: &mut R) -> Result<Vec<(String, ParamKind, Tensor)>, ArchiveError> {
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String, ArchiveError> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(ArchiveError::Format("unexpected end of header".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next_line(r)? != MAGIC {
        return Err(ArchiveError::Format("bad magic".into()));
    }
    let mut count = None;
    let mut decls: Vec<(String, ParamKind, Vec<usize>, usize)> = Vec::new();
    loop {
        let l = next_line(r)?;
        if l == "end" {
            break;
        }
        if let Some(rest) = l.strip_prefix("tensor ") {
            let mut name = None;
            let mut kind = None;
            let mut shape = None;
            let mut offset = None;
            for field in rest.split_whitespace() {
                let (k, v) = field
                    .split_once('=')
                    .ok_or_else(|| ArchiveError::Format(format!("bad field {field:?}")))?;
                match k {
                    "name" => name = Some(v.to_string()),
                    "kind" => kind = ParamKind::from_tag(v),
                    "shape" => {
                        let dims: Result<Vec<usize>, _> = if v.is_empty() {
                            Ok(Vec::new())
                        } else {
                            v.split(',').map(str::parse).collect()
                        };
                        shape = Some(dims.map_err(|_| ArchiveError::Format(format!("bad shape {v:?}")))?);
                    }
                    "offset" => {
                        offset = Some(v.parse().map_err(|_| ArchiveError::Format(format!("bad offset {v:?}")))?)
                    }
                    _ => return Err(ArchiveError::Format(format!("unknown field {k:?}"))),
                }
            }
            match (name, kind, shape, offset) {
                (Some(n), Some(k), Some(s), Some(o)) => decls.push((n, k, s, o)),
                _ => return Err(ArchiveError::Format(format!("incomplete tensor line {l:?}"))),
            }
        } else if let Some((k, v)) = l.split_once('=') {
            match k {
                "byte_order" if v != "little" => {
                    return Err(ArchiveError::Format(format!("unsupported byte order {v}")))
                }
                "dtype" if v != "f64" => return Err(ArchiveError::Format(format!("unsupported dtype {v}"))),
                "count" => {
                    count = Some(v.parse::<usize>().map_err(|_| ArchiveError::Format("bad count".into()))?)
                }
                _ => {}
            }
        } else {
            return Err(ArchiveError::Format(format!("unexpected header line {l:?}")));
        }
    }
    if count != Some(decls.len()) {
        return Err(ArchiveError::Format("tensor count does not match declarations".into()));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let mut out = Vec::with_capacity(decls.len());
    for (name, kind, shape, offset) in decls {
        let n = numel(&shape);
        let end = offset + n * 8;
        if end > payload.len() {
            return Err(ArchiveError::Format(format!("payload too short for {name}")));
        }
        let data = payload[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((name, kind, Tensor::new(&shape, data)));
    }
    Ok(out)
}
