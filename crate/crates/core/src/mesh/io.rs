//! Text mesh format.
//!
//! The mesh file is a line-oriented subset of Wavefront OBJ:
//!
//! ```text
//! # comment
//! v <x> <y> <z>          vertex position (64-bit floats, +Y up)
//! g <name>               start (or resume) the subgroup called <name>
//! f <i> <j> <k> [...]    face with 1-based vertex indices; polygons are fan-triangulated
//! ```
//!
//! Face tokens may carry OBJ texture/normal suffixes (`3/1/2`); only the vertex
//! index is used. Faces that appear before any `g` line go to a subgroup named
//! `default`. Other OBJ statements (`vn`, `vt`, `o`, `s`, `usemtl`, `mtllib`)
//! are ignored.
//!
//! A JSON sidecar next to the mesh (`house.obj` → `house.labels.json`) holds:
//!
//! ```json
//! {
//!   "labels":    { "<subgroup>": "<part label or 'unlabeled'>" },
//!   "hierarchy": { "<child group>": "<parent group>" },
//!   "colors":    [[r, g, b], ...]
//! }
//! ```
//!
//! All keys are optional; `colors` must have one RGB triple in `[0, 1]` per vertex.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Building, PartLabel, Subgroup, Vec3};
use crate::error::{Error, Result};

/// Label/hierarchy/color document stored beside a mesh file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub hierarchy: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<[f64; 3]>>,
}

/// `dir/name.obj` → `dir/name.labels.json`.
pub fn sidecar_path(mesh_path: &Path) -> PathBuf {
    mesh_path.with_extension("labels.json")
}

pub fn load_building(path: impl AsRef<Path>) -> Result<Building> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let (vertices, triangles, subgroups) = parse_mesh(path, &text)?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() {
        serde_json::from_str::<Sidecar>(&fs::read_to_string(&side)?)?
    } else {
        log::warn!("no sidecar at {}; labels absent", side.display());
        Sidecar::default()
    };
    let mut labels = vec![None; subgroups.len()];
    let index: HashMap<&str, usize> = subgroups
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i))
        .collect();
    for (name, label) in &sidecar.labels {
        match index.get(name.as_str()) {
            Some(&g) => labels[g] = PartLabel::parse_optional(label)?,
            None => log::warn!("sidecar labels unknown subgroup `{name}`"),
        }
    }
    let colors = sidecar
        .colors
        .map(|cs| cs.into_iter().map(|c| Vec3::new(c[0], c[1], c[2])).collect());
    Building::new(vertices, triangles, colors, subgroups, sidecar.hierarchy, labels)
}

/// Writes the mesh and its sidecar. Floats use the shortest representation
/// that parses back to the same `f64`, so `load(save(b)) == b`.
pub fn save_building(building: &Building, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for v in &building.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for sg in &building.subgroups {
        writeln!(out, "g {}", sg.name).unwrap();
        for &t in &sg.triangles {
            let [a, b, c] = building.triangles[t];
            writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1).unwrap();
        }
    }
    fs::write(path, out)?;
    let sidecar = Sidecar {
        labels: building
            .subgroups
            .iter()
            .zip(&building.labels)
            .filter_map(|(s, l)| l.map(|l| (s.name.clone(), l.name().to_string())))
            .collect(),
        hierarchy: building.hierarchy.clone(),
        colors: building
            .colors
            .as_ref()
            .map(|cs| cs.iter().map(|c| [c.x, c.y, c.z]).collect()),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

type Parsed = (Vec<Vec3>, Vec<[usize; 3]>, Vec<Subgroup>);

fn parse_mesh(path: &Path, text: &str) -> Result<Parsed> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut subgroups: Vec<Subgroup> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    let mut current: Option<usize> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap();
        match keyword {
            "v" => {
                let coords: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() < 3 {
                    return Err(err(lineno, format!("vertex needs 3 coordinates, got {}", coords.len())));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "g" => {
                let name = tokens.collect::<Vec<_>>().join(" ");
                if name.is_empty() {
                    return Err(err(lineno, "group without a name".into()));
                }
                let g = *by_name.entry(name.clone()).or_insert_with(|| {
                    subgroups.push(Subgroup {
                        name,
                        triangles: Vec::new(),
                    });
                    subgroups.len() - 1
                });
                current = Some(g);
            }
            "f" => {
                let idx: Vec<usize> = tokens
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        match first.parse::<i64>() {
                            Ok(k) if k >= 1 => Ok((k - 1) as usize),
                            Ok(k) => Err(err(lineno, format!("unsupported vertex index {k}"))),
                            Err(e) => Err(err(lineno, format!("bad face index `{t}`: {e}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(err(lineno, format!("face needs at least 3 vertices, got {}", idx.len())));
                }
                let g = match current {
                    Some(g) => g,
                    None => {
                        let g = *by_name.entry("default".into()).or_insert_with(|| {
                            subgroups.push(Subgroup {
                                name: "default".into(),
                                triangles: Vec::new(),
                            });
                            subgroups.len() - 1
                        });
                        current = Some(g);
                        g
                    }
                };
                for k in 1..idx.len() - 1 {
                    subgroups[g].triangles.push(triangles.len());
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            "vn" | "vt" | "o" | "s" | "usemtl" | "mtllib" | "l" | "p" => {}
            other => return Err(err(lineno, format!("unknown statement `{other}`"))),
        }
    }
    Ok((vertices, triangles, subgroups))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tri.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\ng only\nf 1 2 3\n").unwrap();
        let b = load_building(&p).unwrap();
        assert_eq!(b.subgroups.len(), 1);
        assert_eq!(b.triangles.len(), 1);
        assert_eq!(b.labels, vec![None]);
    }

    #[test]
    fn dangling_index_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\ng a\nf 1 2 99\n").unwrap();
        assert!(matches!(load_building(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_lines_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        fs::write(&p, "v 0 0\n").unwrap();
        assert!(matches!(load_building(&p), Err(Error::Parse { line: 1, .. })));
        fs::write(&p, "v 0 0 0\nwat\n").unwrap();
        assert!(matches!(load_building(&p), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "v 0 0 0\nf 1 x 1\n").unwrap();
        assert!(matches!(load_building(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn groups_resume_and_polygons_fan() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.obj");
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\ng a\nf 1/1 2/2 3/3 4/4\ng b\nf 1 3 4\ng a\nf 1 2 4\n";
        fs::write(&p, text).unwrap();
        let b = load_building(&p).unwrap();
        let names: Vec<&str> = b.subgroups.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["default", "a", "b"]);
        assert_eq!(b.subgroups[1].triangles, vec![1, 2, 4]);
        assert_eq!(b.triangles[2], [0, 2, 3]);
    }

    #[test]
    fn sidecar_labels_and_colors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\ng wall_0\nf 1 2 3\n").unwrap();
        fs::write(
            sidecar_path(&p),
            r#"{"labels":{"wall_0":"Wall"},"hierarchy":{"wall_0":"facade"},"colors":[[1,0,0],[0,1,0],[0,0,1]]}"#,
        )
        .unwrap();
        let b = load_building(&p).unwrap();
        assert_eq!(b.labels, vec![Some(PartLabel::Wall)]);
        assert_eq!(b.hierarchy["wall_0"], "facade");
        assert_eq!(b.colors.as_ref().unwrap()[1], Vec3::y());
    }
}
