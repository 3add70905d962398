//! Near-uniform surface sampling and the point set file format.
//!
//! Candidates are drawn area-proportionally (4× the budget), then thinned
//! greedily so that accepted points keep a minimum spacing of
//! `0.7 · sqrt(A / (π · budget))`.
//!
//! Point set files are little-endian: a 16-byte header (`MLPS`, version,
//! count, flags with bit 0 = color present) followed by one record per point:
//! position (3 × f32), normal (3 × f32), color (3 × f32, only if flagged),
//! source triangle (u32), source subgroup (u32).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{count_u32, read_f32s, read_header, write_f32s, write_header, Header};
use crate::error::{Error, Result};
use crate::mesh::{Building, Vec3};
use crate::spatial::geom::DEGENERATE_AREA;

const MAGIC: &[u8; 4] = b"MLPS";
const VERSION: u32 = 1;
const FLAG_COLOR: u32 = 1;

pub const DEFAULT_BUDGET: usize = 100_000;
pub const OVERSAMPLE: usize = 4;
pub const RELAXATION: f64 = 0.7;

/// Surface samples with their provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub colors: Option<Vec<Vec3>>,
    pub triangles: Vec<usize>,
    pub subgroups: Vec<usize>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Point indices grouped by source subgroup.
    pub fn by_subgroup(&self, num_subgroups: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); num_subgroups];
        for (i, &g) in self.subgroups.iter().enumerate() {
            out[g].push(i);
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let flags = if self.colors.is_some() { FLAG_COLOR } else { 0 };
        write_header(w, MAGIC, Header { version: VERSION, count: count_u32(self.len())?, flags })?;
        for i in 0..self.len() {
            write_f32s(w, self.positions[i].iter().copied())?;
            write_f32s(w, self.normals[i].iter().copied())?;
            if let Some(c) = &self.colors {
                write_f32s(w, c[i].iter().copied())?;
            }
            w.write_u32::<LittleEndian>(count_u32(self.triangles[i])?)?;
            w.write_u32::<LittleEndian>(count_u32(self.subgroups[i])?)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<PointSet> {
        let h = read_header(r, MAGIC, VERSION)?;
        let has_color = h.flags & FLAG_COLOR != 0;
        let n = h.count as usize;
        let mut ps = PointSet {
            colors: has_color.then(Vec::new),
            ..Default::default()
        };
        for _ in 0..n {
            let p = read_f32s(r, 3)?;
            let q = read_f32s(r, 3)?;
            ps.positions.push(Vec3::new(p[0], p[1], p[2]));
            ps.normals.push(Vec3::new(q[0], q[1], q[2]));
            if let Some(cs) = &mut ps.colors {
                let c = read_f32s(r, 3)?;
                cs.push(Vec3::new(c[0], c[1], c[2]));
            }
            ps.triangles.push(r.read_u32::<LittleEndian>()? as usize);
            ps.subgroups.push(r.read_u32::<LittleEndian>()? as usize);
        }
        Ok(ps)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PointSet> {
        PointSet::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Checks provenance against `building`.
    pub fn validate(&self, building: &Building) -> Result<()> {
        let owners = building.triangle_owners();
        for i in 0..self.len() {
            let t = self.triangles[i];
            if t >= owners.len() || owners[t] != self.subgroups[i] {
                return Err(Error::Validation(format!("point {i} has inconsistent provenance")));
            }
        }
        Ok(())
    }
}

/// Minimum spacing targeted by the thinning pass.
pub fn thinning_radius(total_area: f64, budget: usize) -> f64 {
    RELAXATION * (total_area / (std::f64::consts::PI * budget as f64)).sqrt()
}

struct Candidate {
    position: Vec3,
    triangle: usize,
    bary: [f64; 3],
}

/// Samples exactly `budget` points from the non-degenerate triangles of `building`.
pub fn sample_points(building: &Building, budget: usize, seed: u64) -> Result<PointSet> {
    if budget == 0 {
        return Ok(PointSet {
            colors: building.colors.as_ref().map(|_| Vec::new()),
            ..Default::default()
        });
    }
    let mut cdf = Vec::new();
    let mut tris = Vec::new();
    let mut total = 0.0;
    for t in 0..building.triangles.len() {
        let a = building.triangle_area(t);
        if a > DEGENERATE_AREA {
            total += a;
            cdf.push(total);
            tris.push(t);
        }
    }
    if total <= 0.0 {
        return Err(Error::Degenerate("building has zero surface area".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = budget * OVERSAMPLE;
    let candidates: Vec<Candidate> = (0..pool)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let k = cdf.partition_point(|&c| c <= u).min(tris.len() - 1);
            let t = tris[k];
            let r1: f64 = rng.gen::<f64>().sqrt();
            let r2: f64 = rng.gen();
            let bary = [1.0 - r1, r1 * (1.0 - r2), r1 * r2];
            let [a, b, c] = building.triangle(t);
            Candidate {
                position: a * bary[0] + b * bary[1] + c * bary[2],
                triangle: t,
                bary,
            }
        })
        .collect();

    let radius = thinning_radius(total, budget);
    let mut accepted = Vec::with_capacity(budget);
    let mut rejected = Vec::new();
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let cell = |p: &Vec3| -> [i64; 3] {
        [
            (p.x / radius).floor() as i64,
            (p.y / radius).floor() as i64,
            (p.z / radius).floor() as i64,
        ]
    };
    let r2 = radius * radius;
    for (i, cand) in candidates.iter().enumerate() {
        if accepted.len() == budget {
            break;
        }
        let c = cell(&cand.position);
        let mut clear = true;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if ids
                            .iter()
                            .any(|&j| (candidates[j].position - cand.position).norm_squared() < r2)
                        {
                            clear = false;
                            break 'search;
                        }
                    }
                }
            }
        }
        if clear {
            grid.entry(c).or_default().push(i);
            accepted.push(i);
        } else {
            rejected.push(i);
        }
    }
    if accepted.len() < budget {
        log::warn!(
            "thinning kept {} of {budget} points; topping up with plain area-weighted samples",
            accepted.len()
        );
        let missing = budget - accepted.len();
        accepted.extend(rejected.into_iter().take(missing));
    }

    let owners = building.triangle_owners();
    let mut ps = PointSet {
        colors: building.colors.as_ref().map(|_| Vec::with_capacity(budget)),
        ..Default::default()
    };
    for &i in &accepted {
        let cand = &candidates[i];
        ps.positions.push(cand.position);
        ps.normals.push(building.triangle_normal(cand.triangle));
        ps.triangles.push(cand.triangle);
        ps.subgroups.push(owners[cand.triangle]);
        if let (Some(out), Some(vc)) = (&mut ps.colors, &building.colors) {
            let [a, b, c] = building.triangles[cand.triangle];
            out.push(vc[a] * cand.bary[0] + vc[b] * cand.bary[1] + vc[c] * cand.bary[2]);
        }
    }
    Ok(ps)
}
