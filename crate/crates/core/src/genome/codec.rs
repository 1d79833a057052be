//! Versioned binary genome format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            4 bytes  "RNNG"
//! version          u16      currently 1
//! generation_id    u64
//! island_of_origin u32
//! fitness tag      u8       0 = unevaluated, 1 = evaluated (followed by f64)
//! node count       u32
//!   id u32 | kind u8 | cell u8 | flags u8 (bit 0 enabled, bit 1 fresh)
//!   depth f64 | param count u8 | params f64 * count
//! edge count       u32
//!   id u32 | source u32 | target u32 | enabled u8 | weight f64
//! recurrent count  u32
//!   id u32 | source u32 | target u32 | time_skip u32 | enabled u8 | weight f64
//! ```
//!
//! Trailing bytes after the last record are rejected.

use std::fmt;

use super::{CellParams, CellType, EdgeGene, Fitness, NodeGene, NodeKind, RecurrentEdgeGene, RnnGenome};

pub const MAGIC: [u8; 4] = *b"RNNG";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeErrorKind {
    UnexpectedEof,
    BadMagic,
    UnsupportedVersion(u16),
    BadTag(u8),
    BadParamCount { cell: CellType, count: u8 },
    TrailingBytes,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "genome decode error at byte {}: ", self.offset)?;
        match &self.kind {
            DecodeErrorKind::UnexpectedEof => write!(f, "unexpected end of input"),
            DecodeErrorKind::BadMagic => write!(f, "not a genome file"),
            DecodeErrorKind::UnsupportedVersion(v) => write!(f, "unsupported version {v}"),
            DecodeErrorKind::BadTag(t) => write!(f, "invalid tag {t}"),
            DecodeErrorKind::BadParamCount { cell, count } => {
                write!(f, "{cell} node with {count} parameters")
            }
            DecodeErrorKind::TrailingBytes => write!(f, "trailing bytes"),
        }
    }
}

pub fn serialize(genome: &RnnGenome) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + genome.weight_count() * 8 + genome.nodes.len() * 16);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&genome.generation_id.to_le_bytes());
    out.extend_from_slice(&genome.island_of_origin.to_le_bytes());
    match genome.fitness {
        Fitness::Unevaluated => out.push(0),
        Fitness::Evaluated(v) => {
            out.push(1);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    out.extend_from_slice(&(genome.nodes.len() as u32).to_le_bytes());
    for n in &genome.nodes {
        out.extend_from_slice(&n.innovation_id.to_le_bytes());
        out.push(n.kind.code());
        out.push(n.cell_type().code());
        out.push(u8::from(n.enabled) | (u8::from(n.fresh) << 1));
        out.extend_from_slice(&n.depth.to_le_bytes());
        out.push(n.params.len() as u8);
        for v in n.params.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    out.extend_from_slice(&(genome.edges.len() as u32).to_le_bytes());
    for e in &genome.edges {
        out.extend_from_slice(&e.innovation_id.to_le_bytes());
        out.extend_from_slice(&e.source.to_le_bytes());
        out.extend_from_slice(&e.target.to_le_bytes());
        out.push(u8::from(e.enabled));
        out.extend_from_slice(&e.weight.to_le_bytes());
    }

    out.extend_from_slice(&(genome.recurrent_edges.len() as u32).to_le_bytes());
    for e in &genome.recurrent_edges {
        out.extend_from_slice(&e.innovation_id.to_le_bytes());
        out.extend_from_slice(&e.source.to_le_bytes());
        out.extend_from_slice(&e.target.to_le_bytes());
        out.extend_from_slice(&e.time_skip.to_le_bytes());
        out.push(u8::from(e.enabled));
        out.extend_from_slice(&e.weight.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError { offset: self.pos, kind }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| self.err(DecodeErrorKind::UnexpectedEof))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn flag(&mut self) -> Result<bool, DecodeError> {
        let at = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            t => Err(DecodeError { offset: at, kind: DecodeErrorKind::BadTag(t) }),
        }
    }

    /// Element count, bounded by the bytes left so a corrupt count cannot
    /// trigger a huge allocation.
    fn count(&mut self, min_record: usize) -> Result<usize, DecodeError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        if n.saturating_mul(min_record) > self.bytes.len() - self.pos {
            return Err(DecodeError { offset: at, kind: DecodeErrorKind::UnexpectedEof });
        }
        Ok(n)
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<RnnGenome, DecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take::<4>()? != MAGIC {
        return Err(DecodeError { offset: 0, kind: DecodeErrorKind::BadMagic });
    }
    let at = r.pos;
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(DecodeError { offset: at, kind: DecodeErrorKind::UnsupportedVersion(version) });
    }
    let generation_id = r.u64()?;
    let island_of_origin = r.u32()?;
    let at = r.pos;
    let fitness = match r.u8()? {
        0 => Fitness::Unevaluated,
        1 => Fitness::Evaluated(r.f64()?),
        t => return Err(DecodeError { offset: at, kind: DecodeErrorKind::BadTag(t) }),
    };

    let n_nodes = r.count(16)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let innovation_id = r.u32()?;
        let at = r.pos;
        let kind_code = r.u8()?;
        let kind = NodeKind::from_code(kind_code)
            .ok_or(DecodeError { offset: at, kind: DecodeErrorKind::BadTag(kind_code) })?;
        let at = r.pos;
        let cell_code = r.u8()?;
        let cell = CellType::from_code(cell_code)
            .ok_or(DecodeError { offset: at, kind: DecodeErrorKind::BadTag(cell_code) })?;
        let at = r.pos;
        let flags = r.u8()?;
        if flags > 0b11 {
            return Err(DecodeError { offset: at, kind: DecodeErrorKind::BadTag(flags) });
        }
        let depth = r.f64()?;
        let at = r.pos;
        let count = r.u8()?;
        if count as usize != cell.param_count() {
            return Err(DecodeError { offset: at, kind: DecodeErrorKind::BadParamCount { cell, count } });
        }
        let mut params = CellParams::zeros(cell);
        for v in params.as_mut_slice() {
            *v = r.f64()?;
        }
        nodes.push(NodeGene { innovation_id, kind, depth, enabled: flags & 1 != 0, params, fresh: flags & 2 != 0 });
    }

    let n_edges = r.count(21)?;
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let innovation_id = r.u32()?;
        let source = r.u32()?;
        let target = r.u32()?;
        let enabled = r.flag()?;
        let weight = r.f64()?;
        edges.push(EdgeGene { innovation_id, source, target, weight, enabled });
    }

    let n_recurrent = r.count(25)?;
    let mut recurrent_edges = Vec::with_capacity(n_recurrent);
    for _ in 0..n_recurrent {
        let innovation_id = r.u32()?;
        let source = r.u32()?;
        let target = r.u32()?;
        let time_skip = r.u32()?;
        let enabled = r.flag()?;
        let weight = r.f64()?;
        recurrent_edges.push(RecurrentEdgeGene { innovation_id, source, target, time_skip, weight, enabled });
    }

    if r.pos != bytes.len() {
        return Err(r.err(DecodeErrorKind::TrailingBytes));
    }

    Ok(RnnGenome { nodes, edges, recurrent_edges, fitness, generation_id, island_of_origin })
}
