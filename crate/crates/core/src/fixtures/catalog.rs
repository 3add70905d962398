//! Procedural labeled buildings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shapes::{cube_mesh, map_part, Assembler, Part};
use crate::error::{Error, Result};
use crate::mesh::{rotate_upright, Building, PartLabel, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    StackedBoxes,
    RowHouses,
    TowerWithWindows,
    DuplicateStress,
    InteriorStress,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 5] = [
        FixtureKind::StackedBoxes,
        FixtureKind::RowHouses,
        FixtureKind::TowerWithWindows,
        FixtureKind::DuplicateStress,
        FixtureKind::InteriorStress,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::StackedBoxes => "stacked-boxes",
            FixtureKind::RowHouses => "row-houses",
            FixtureKind::TowerWithWindows => "tower-with-windows",
            FixtureKind::DuplicateStress => "duplicate-stress",
            FixtureKind::InteriorStress => "interior-stress",
        }
    }
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fixture kind `{s}`")))
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Wall box with a thinner roof box resting on it.
pub fn stacked_boxes(seed: u64) -> Building {
    let mut r = rng(seed);
    let w = r.gen_range(2.0..4.0);
    let d = r.gen_range(2.0..4.0);
    let h = r.gen_range(2.0..5.0);
    let mut a = Assembler::new();
    a.add("wall", cube_mesh(Vec3::zeros(), Vec3::new(w, h, d)), Some(PartLabel::Wall));
    let t = r.gen_range(0.2..0.5);
    a.add("roof", cube_mesh(Vec3::new(0.0, h, 0.0), Vec3::new(w, t, d)), Some(PartLabel::Roof));
    a.finish()
}

/// Triangular prism spanning `[x0, x0 + w] × [z0, z0 + d]`, ridge along x at height `y0 + rise`.
fn gable_roof(x0: f64, y0: f64, z0: f64, w: f64, d: f64, rise: f64) -> Part {
    let v = vec![
        Vec3::new(x0, y0, z0),
        Vec3::new(x0 + w, y0, z0),
        Vec3::new(x0 + w, y0, z0 + d),
        Vec3::new(x0, y0, z0 + d),
        Vec3::new(x0, y0 + rise, z0 + 0.5 * d),
        Vec3::new(x0 + w, y0 + rise, z0 + 0.5 * d),
    ];
    let t = vec![
        [0, 4, 5],
        [0, 5, 1],
        [3, 2, 5],
        [3, 5, 4],
        [0, 3, 4],
        [1, 5, 2],
        [0, 1, 2],
        [0, 2, 3],
    ];
    (v, t)
}

/// Three to five adjoining houses with gable roofs, doors, windows and chimneys.
pub fn row_houses(seed: u64) -> Building {
    let mut r = rng(seed);
    let count = r.gen_range(3..=5);
    let d = r.gen_range(4.0..6.0);
    let mut a = Assembler::new();
    let mut x = 0.0;
    for k in 0..count {
        let w = r.gen_range(3.0..5.0);
        let h = r.gen_range(3.0..6.0);
        a.add(format!("wall{k}"), cube_mesh(Vec3::new(x, 0.0, 0.0), Vec3::new(w, h, d)), Some(PartLabel::Wall));
        let rise = r.gen_range(1.0..2.0);
        a.add(format!("roof{k}"), gable_roof(x, h, 0.0, w, d, rise), Some(PartLabel::Roof));
        let door_x = x + r.gen_range(0.3..w - 1.3);
        a.add(
            format!("door{k}"),
            cube_mesh(Vec3::new(door_x, 0.0, -0.1), Vec3::new(1.0, 2.0, 0.1)),
            Some(PartLabel::Door),
        );
        for (j, wx) in [x + 0.3, x + w - 1.1].into_iter().enumerate() {
            if (wx - door_x).abs() < 1.1 {
                continue;
            }
            a.add(
                format!("window{k}_{j}"),
                cube_mesh(Vec3::new(wx, h * 0.55, -0.05), Vec3::new(0.8, 0.9, 0.05)),
                Some(PartLabel::Window),
            );
        }
        if r.gen_bool(0.6) {
            a.add(
                format!("chimney{k}"),
                cube_mesh(Vec3::new(x + 0.5, h + 0.3, 0.6 * d), Vec3::new(0.5, rise + 0.6, 0.5)),
                Some(PartLabel::Chimney),
            );
        }
        x += w;
    }
    a.finish()
}

/// Square tower with `windows` identical windows spread over its four faces and a roof slab.
pub fn tower_with_windows(seed: u64, windows: usize) -> Building {
    let mut r = rng(seed);
    let s = r.gen_range(4.0..6.0);
    let floors = windows.div_ceil(4).max(1);
    let h = 3.0 * floors as f64 + 1.0;
    let mut a = Assembler::new();
    a.add("tower", cube_mesh(Vec3::zeros(), Vec3::new(s, h, s)), Some(PartLabel::Wall));
    a.add("roof", cube_mesh(Vec3::new(-0.2, h, -0.2), Vec3::new(s + 0.4, 0.4, s + 0.4)), Some(PartLabel::Roof));
    let (ww, wh, wd) = (1.0, 1.4, 0.08);
    // Window outline in its own frame: facing -z, lower-left corner at the origin.
    let base = map_part(cube_mesh(Vec3::new(0.0, 0.0, -wd), Vec3::new(ww, wh, wd)), |p| *p);
    let center = Vec3::new(0.5 * s, 0.0, 0.5 * s);
    for k in 0..windows {
        let face = k % 4;
        let floor = k / 4;
        let offset = 0.5 * s - 0.5 * ww + r.gen_range(-0.5..0.5);
        let y = 1.0 + 3.0 * floor as f64;
        let angle = -(face as f64) * std::f64::consts::FRAC_PI_2;
        let part = map_part(base.clone(), |p| {
            let local = Vec3::new(p.x + offset - 0.5 * s, p.y + y, p.z - 0.5 * s);
            rotate_upright(&local, angle) + center
        });
        a.add(format!("window{k}"), part, Some(PartLabel::Window));
    }
    a.finish()
}

/// Closed outer box with a box inside it and a roof slab outside.
/// Returns the building and the indices of the enclosed subgroups.
pub fn interior_stress(seed: u64) -> (Building, Vec<usize>) {
    let mut r = rng(seed);
    let s = r.gen_range(4.0..6.0);
    let mut a = Assembler::new();
    a.add("shell", cube_mesh(Vec3::zeros(), Vec3::repeat(s)), Some(PartLabel::Wall));
    a.add("roof", cube_mesh(Vec3::new(0.0, s, 0.0), Vec3::new(s, 0.3, s)), Some(PartLabel::Roof));
    let inner_size = r.gen_range(0.5..1.5);
    let inner_min = Vec3::new(r.gen_range(0.5..s - 2.0), 0.5, r.gen_range(0.5..s - 2.0));
    let inner = a.add("furniture", cube_mesh(inner_min, Vec3::repeat(inner_size)), Some(PartLabel::Furniture));
    (a.finish(), vec![inner])
}

/// One randomly sized and rotated box: convex, nothing to remove.
pub fn convex_single(seed: u64) -> Building {
    let mut r = rng(seed);
    let size = Vec3::new(r.gen_range(1.0..4.0), r.gen_range(1.0..4.0), r.gen_range(1.0..4.0));
    let angle = r.gen_range(0.0..std::f64::consts::TAU);
    let mut a = Assembler::new();
    a.add("box", map_part(cube_mesh(Vec3::zeros(), size), |p| rotate_upright(p, angle)), Some(PartLabel::Wall));
    a.finish()
}

/// A planted duplicate: `b` is `a` rotated by `rotation_deg` about +Y around
/// its vertex barycenter, then translated.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPair {
    pub a: usize,
    pub b: usize,
    pub rotation_deg: f64,
}

#[derive(Debug, Clone)]
pub struct DuplicateStress {
    pub building: Building,
    /// Subgroups of each family; the first is the original.
    pub families: Vec<Vec<usize>>,
    pub planted: Vec<PlantedPair>,
    /// Subgroups that must not match anything.
    pub decoys: Vec<usize>,
}

fn centroid(v: &[Vec3]) -> Vec3 {
    v.iter().sum::<Vec3>() / v.len() as f64
}

fn rotate_about_barycenter(part: &Part, angle: f64) -> Part {
    let c = centroid(&part.0);
    map_part(part.clone(), |p| rotate_upright(&(p - c), angle) + c)
}

/// Box with every corner jittered, so it has no rotational symmetry.
fn asymmetric_base(r: &mut ChaCha8Rng) -> Part {
    let size = Vec3::new(r.gen_range(0.8..2.0), r.gen_range(0.8..2.0), r.gen_range(0.8..2.0));
    let (v, t) = cube_mesh(Vec3::zeros(), size);
    let v = v
        .into_iter()
        .map(|p| p + Vec3::new(r.gen_range(-0.25..0.25), r.gen_range(-0.25..0.25), r.gen_range(-0.25..0.25)))
        .collect();
    (v, t)
}

/// Flips the diagonal of quad `q` (triangles `2q` and `2q + 1` of a box).
fn retriangulated(part: &Part, q: usize) -> Part {
    let (v, mut t) = part.clone();
    let [a, b, c] = t[2 * q];
    let d = t[2 * q + 1][2];
    t[2 * q] = [a, b, d];
    t[2 * q + 1] = [b, c, d];
    (v, t)
}

/// `families` asymmetric shapes with 1–3 rotated and translated copies each,
/// plus 25 near-miss decoys per family: mirrored, re-triangulated, tilted
/// about X, perturbed with a vertical component and scaled.
pub fn duplicate_stress(seed: u64, families: usize) -> DuplicateStress {
    let mut r = rng(seed);
    let mut a = Assembler::new();
    let mut fams = Vec::new();
    let mut planted = Vec::new();
    let mut decoys = Vec::new();
    let mut slot = 0usize;
    let mut place = |part: Part, r: &mut ChaCha8Rng| {
        let cell = Vec3::new((slot % 40) as f64 * 5.0, 0.0, (slot / 40) as f64 * 5.0);
        slot += 1;
        let jitter = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(0.0..1.0), r.gen_range(-1.0..1.0));
        map_part(part, |p| p + cell + jitter)
    };
    for f in 0..families {
        let base = asymmetric_base(&mut r);
        let original = a.add(format!("f{f}"), place(base.clone(), &mut r), None);
        let mut members = vec![original];
        for c in 0..r.gen_range(1..=3) {
            let angle = r.gen_range(0.0..360.0f64);
            let copy = place(rotate_about_barycenter(&base, angle.to_radians()), &mut r);
            let id = a.add(format!("f{f}_copy{c}"), copy, None);
            members.push(id);
            planted.push(PlantedPair {
                a: original,
                b: id,
                rotation_deg: angle,
            });
        }
        fams.push(members);

        let mut add_decoy = |name: String, part: Part, r: &mut ChaCha8Rng| {
            let angle = r.gen_range(0.0..std::f64::consts::TAU);
            let part = place(rotate_about_barycenter(&part, angle), r);
            decoys.push(a.add(name, part, None));
        };
        let mirrored = map_part(base.clone(), |p| Vec3::new(-p.x, p.y, p.z));
        let mirrored = (mirrored.0, mirrored.1.iter().map(|t| [t[0], t[2], t[1]]).collect());
        add_decoy(format!("f{f}_mirror"), mirrored, &mut r);
        for q in 0..6 {
            add_decoy(format!("f{f}_split{q}"), retriangulated(&base, q), &mut r);
        }
        for k in 0..6 {
            let tilt: f64 = r.gen_range(10.0..80.0f64).to_radians();
            let c = centroid(&base.0);
            let tilted = map_part(base.clone(), |p| {
                let q = p - c;
                Vec3::new(q.x, q.y * tilt.cos() - q.z * tilt.sin(), q.y * tilt.sin() + q.z * tilt.cos()) + c
            });
            add_decoy(format!("f{f}_tilt{k}"), tilted, &mut r);
        }
        for k in 0..6 {
            let mut part = base.clone();
            let v = r.gen_range(0..part.0.len());
            part.0[v] += Vec3::new(r.gen_range(-0.05..0.05), r.gen_range(0.02..0.08), r.gen_range(-0.05..0.05));
            add_decoy(format!("f{f}_bump{k}"), part, &mut r);
        }
        for k in 0..6 {
            let s = 1.05 + 0.08 * k as f64 + r.gen_range(0.0..0.05);
            let c = centroid(&base.0);
            add_decoy(format!("f{f}_scale{k}"), map_part(base.clone(), |p| (p - c) * s + c), &mut r);
        }
    }
    DuplicateStress {
        building: a.finish(),
        families: fams,
        planted,
        decoys,
    }
}

/// Building of one catalog kind. Duplicate stress uses four families.
pub fn generate(kind: FixtureKind, seed: u64) -> Building {
    match kind {
        FixtureKind::StackedBoxes => stacked_boxes(seed),
        FixtureKind::RowHouses => row_houses(seed),
        FixtureKind::TowerWithWindows => tower_with_windows(seed, 8),
        FixtureKind::DuplicateStress => duplicate_stress(seed, 4).building,
        FixtureKind::InteriorStress => interior_stress(seed).0,
    }
}

/// `count` labeled buildings cycling through stacked boxes, row houses,
/// towers and interior stress.
pub fn catalog_corpus(count: usize, seed: u64) -> Vec<(String, Building)> {
    let kinds = [
        FixtureKind::StackedBoxes,
        FixtureKind::RowHouses,
        FixtureKind::TowerWithWindows,
        FixtureKind::InteriorStress,
    ];
    (0..count)
        .map(|i| {
            let kind = kinds[i % kinds.len()];
            let s = seed.wrapping_mul(1000).wrapping_add(i as u64);
            let b = match kind {
                FixtureKind::TowerWithWindows => tower_with_windows(s, 4 + (i % 3) * 2),
                k => generate(k, s),
            };
            (format!("{}-{i:03}", kind.name()), b)
        })
        .collect()
}

/// Buildings whose roof and balcony slabs share one size distribution and
/// overlapping heights: a roof rests on a wall block, a balcony hangs off a
/// wall side. The support relation is what tells them apart.
pub fn support_ablation_building(seed: u64) -> Building {
    let mut r = rng(seed);
    let mut a = Assembler::new();
    let blocks = r.gen_range(2..=3);
    let mut x = 0.0;
    for k in 0..blocks {
        let (w, d) = (r.gen_range(3.0..5.0), r.gen_range(3.0..5.0));
        let h = r.gen_range(3.0..7.0);
        let z = r.gen_range(-3.0..3.0);
        a.add(format!("wall{k}"), cube_mesh(Vec3::new(x, 0.0, z), Vec3::new(w, h, d)), Some(PartLabel::Wall));
        let slab = |r: &mut ChaCha8Rng| Vec3::new(r.gen_range(1.0..2.0), r.gen_range(0.2..0.4), r.gen_range(1.0..2.0));
        let roof = slab(&mut r);
        let roof_min = Vec3::new(x + r.gen_range(0.0..w - roof.x), h, z + r.gen_range(0.0..d - roof.z));
        a.add(format!("roof{k}"), cube_mesh(roof_min, roof), Some(PartLabel::Roof));
        let bal = slab(&mut r);
        let y = r.gen_range(2.0..(h - bal.y - 0.3).max(2.1));
        // Attached to one of the four sides, flush with the wall face.
        let bal_min = match r.gen_range(0..4) {
            0 => Vec3::new(x + r.gen_range(0.0..w - bal.x), y, z - bal.z),
            1 => Vec3::new(x + r.gen_range(0.0..w - bal.x), y, z + d),
            2 => Vec3::new(x - bal.x, y, z + r.gen_range(0.0..d - bal.z)),
            _ => Vec3::new(x + w, y, z + r.gen_range(0.0..d - bal.z)),
        };
        a.add(format!("balcony{k}"), cube_mesh(bal_min, bal), Some(PartLabel::Balcony));
        x += w + r.gen_range(2.5..4.0);
    }
    a.finish()
}

pub fn support_ablation_corpus(count: usize, seed: u64) -> Vec<(String, Building)> {
    (0..count)
        .map(|i| (format!("ablation-{i:03}"), support_ablation_building(seed.wrapping_mul(7919).wrapping_add(i as u64))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ObbMode;
    use crate::preprocess::{detect_duplicates, DedupConfig};

    #[test]
    fn kinds_parse() {
        for k in FixtureKind::ALL {
            assert_eq!(k.name().parse::<FixtureKind>().unwrap(), k);
        }
        assert!("castle".parse::<FixtureKind>().is_err());
    }

    #[test]
    fn buildings_are_valid_and_labeled() {
        for k in FixtureKind::ALL {
            let b = generate(k, 3);
            b.validate().unwrap();
            if k != FixtureKind::DuplicateStress {
                assert!(b.labels.iter().all(Option::is_some), "{}", k.name());
            }
        }
        assert_eq!(stacked_boxes(1).labels, vec![Some(PartLabel::Wall), Some(PartLabel::Roof)]);
        for (_, b) in catalog_corpus(8, 2).iter().chain(&support_ablation_corpus(4, 1)) {
            b.validate().unwrap();
        }
    }

    #[test]
    fn small_duplicate_stress_is_recovered() {
        let ds = duplicate_stress(5, 3);
        let summaries = ds.building.summarize_all(ObbMode::default()).unwrap();
        let sets = detect_duplicates(&ds.building, &summaries, &DedupConfig::default());
        for p in &ds.planted {
            assert!(sets.are_duplicates(p.a, p.b));
        }
        for &d in &ds.decoys {
            assert!(sets.classes.iter().any(|c| c == &vec![d]), "decoy {} matched", ds.building.subgroups[d].name);
        }
    }
}
