//! Graph file format (little-endian).
//!
//! ```text
//! header   "MLGR", u32 version = 1, u32 node count, u32 flags
//!          (bit 0: label section present, bit 1: 15-value edge layout)
//! nodes    node count × (u32 id, 41 × f32)
//! edges    u32 edge count, then edge count × (u32 src, u32 dst, 11 or 15 × f32, u8 mask)
//! labels   node count × u8 (label index, 255 = unlabeled), if flagged
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Edge, EdgeLayout, RelationGraph, NODE_DIM};
use crate::binio::{count_u32, read_f32s, read_header, write_f32s, write_header, Header};
use crate::error::{Error, Result};
use crate::mesh::PartLabel;

const MAGIC: &[u8; 4] = b"MLGR";
const VERSION: u32 = 1;
const FLAG_LABELS: u32 = 1;
const FLAG_SYMMETRIC: u32 = 2;

pub fn write_graph(w: &mut impl Write, g: &RelationGraph) -> Result<()> {
    let has_labels = g.labels.iter().any(Option::is_some);
    let mut flags = if has_labels { FLAG_LABELS } else { 0 };
    if g.layout() == EdgeLayout::Symmetric {
        flags |= FLAG_SYMMETRIC;
    }
    write_header(w, MAGIC, Header { version: VERSION, count: count_u32(g.nodes.len())?, flags })?;
    for (i, row) in g.nodes.iter().enumerate() {
        w.write_u32::<LittleEndian>(count_u32(i)?)?;
        write_f32s(w, row.iter().copied())?;
    }
    w.write_u32::<LittleEndian>(count_u32(g.edges.len())?)?;
    for e in &g.edges {
        w.write_u32::<LittleEndian>(count_u32(e.src)?)?;
        w.write_u32::<LittleEndian>(count_u32(e.dst)?)?;
        write_f32s(w, e.features.iter().copied())?;
        w.write_u8(e.mask)?;
    }
    if has_labels {
        for l in &g.labels {
            w.write_u8(PartLabel::to_byte(*l))?;
        }
    }
    Ok(())
}

pub fn read_graph(r: &mut impl Read) -> Result<RelationGraph> {
    let h = read_header(r, MAGIC, VERSION)?;
    let n = h.count as usize;
    let layout = if h.flags & FLAG_SYMMETRIC != 0 { EdgeLayout::Symmetric } else { EdgeLayout::Directed };
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let id = r.read_u32::<LittleEndian>()? as usize;
        if id != i {
            return Err(Error::Format(format!("node {i} stored with id {id}")));
        }
        nodes.push(read_f32s(r, NODE_DIM)?);
    }
    let m = r.read_u32::<LittleEndian>()? as usize;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let src = r.read_u32::<LittleEndian>()? as usize;
        let dst = r.read_u32::<LittleEndian>()? as usize;
        if src >= n || dst >= n {
            return Err(Error::Format(format!("edge ({src}, {dst}) out of range")));
        }
        let features = read_f32s(r, layout.dim())?;
        let mask = r.read_u8()?;
        edges.push(Edge { src, dst, features, mask });
    }
    let labels = if h.flags & FLAG_LABELS != 0 {
        (0..n).map(|_| PartLabel::from_byte(r.read_u8()?)).collect::<Result<_>>()?
    } else {
        vec![None; n]
    };
    Ok(RelationGraph {
        nodes,
        edges,
        edge_dim: layout.dim(),
        labels,
    })
}

pub fn save_graph(path: impl AsRef<Path>, g: &RelationGraph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graph(&mut w, g)?;
    w.flush()?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<RelationGraph> {
    read_graph(&mut BufReader::new(File::open(path)?))
}
