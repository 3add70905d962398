use meshlabel::fixtures::catalog::{interior_stress, row_houses, stacked_boxes, tower_with_windows};
use meshlabel::fixtures::shapes::cube_mesh;
use meshlabel::gnn::{GnnModel, LabelWeights, ModelConfig};
use meshlabel::graph::{build_graph, Edge, GraphConfig, RelationGraph, ZeroBackbone, NODE_DIM};
use meshlabel::mesh::{load_building, rotate_upright, save_building, ObbMode, Subgroup};
use meshlabel::spatial::Aabb;
use meshlabel::preprocess::interior::exterior_subgroups;
use meshlabel::preprocess::{build_point_triangle_map, detect_duplicates, sample_points, DedupConfig, InteriorConfig, PointSet};
use meshlabel::{Building, PartLabel, Vec3};
use nalgebra::{Rotation3, Unit};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NUM_LABELS: usize = 31;

fn fixture(kind: u8, seed: u64) -> Building {
    match kind % 3 {
        0 => stacked_boxes(seed),
        1 => row_houses(seed),
        _ => tower_with_windows(seed, 4),
    }
}

fn rigid(axis: [f64; 3], angle: f64, shift: [f64; 3]) -> impl Fn(&Vec3) -> Vec3 {
    let axis = Vec3::from(axis);
    let axis = if axis.norm() < 1e-3 { Vec3::y() } else { axis };
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
    let t = Vec3::from(shift);
    move |p: &Vec3| r * p + t
}

fn moved_points(points: &PointSet, f: impl Fn(&Vec3) -> Vec3) -> PointSet {
    let origin = f(&Vec3::zeros());
    PointSet {
        positions: points.positions.iter().map(&f).collect(),
        normals: points.normals.iter().map(|n| f(n) - origin).collect(),
        ..points.clone()
    }
}

fn arb_axis() -> impl Strategy<Value = [f64; 3]> {
    [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0]
}

fn arb_shift() -> impl Strategy<Value = [f64; 3]> {
    [-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0]
}

fn random_graph(seed: u64, n: usize) -> RelationGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n).map(|_| (0..NODE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.5) {
                for (src, dst) in [(a, b), (b, a)] {
                    edges.push(Edge {
                        src,
                        dst,
                        features: (0..11).map(|_| rng.gen_range(0.0..1.0)).collect(),
                        mask: 1,
                    });
                }
            }
        }
    }
    edges.sort_by_key(|e| (e.src, e.dst));
    let labels = (0..n).map(|_| PartLabel::from_index(rng.gen_range(0..NUM_LABELS + 3))).collect();
    RelationGraph {
        nodes,
        edges,
        edge_dim: 11,
        labels,
    }
}

fn random_model(seed: u64) -> GnnModel {
    let mut m = GnnModel::new(ModelConfig::tiny(11), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for t in &mut m.params.tensors {
        for v in &mut t.data {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    m
}

fn with_shell(b: &Building) -> Building {
    let bb = b.aabb();
    let pad = Vec3::repeat(0.5 * b.scene_diagonal());
    let (vs, ts) = cube_mesh(bb.min - pad, bb.max - bb.min + 2.0 * pad);
    let offset = b.vertices.len();
    let first = b.triangles.len();
    let mut vertices = b.vertices.clone();
    vertices.extend(vs);
    let mut triangles = b.triangles.clone();
    triangles.extend(ts.iter().map(|t| t.map(|i| i + offset)));
    let mut subgroups = b.subgroups.clone();
    subgroups.push(Subgroup {
        name: "shell".into(),
        triangles: (first..triangles.len()).collect(),
    });
    let mut labels = b.labels.clone();
    labels.push(None);
    Building::new(vertices, triangles, None, subgroups, b.hierarchy.clone(), labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn area_and_barycenter_follow_rigid_motion(kind in 0u8..3, seed in 0u64..50, axis in arb_axis(), angle in 0.0f64..6.3, shift in arb_shift()) {
        let b = fixture(kind, seed);
        let f = rigid(axis, angle, shift);
        let moved = b.transformed(&f);
        for g in 0..b.subgroups.len() {
            let s0 = b.summarize(g, ObbMode::Free).unwrap();
            let s1 = moved.summarize(g, ObbMode::Free).unwrap();
            prop_assert!((s0.area - s1.area).abs() <= 1e-6 * s0.area.max(1e-12));
            let scale = s0.barycenter.norm().max(f(&s0.barycenter).norm()).max(1.0);
            prop_assert!((f(&s0.barycenter) - s1.barycenter).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn obb_is_no_larger_than_aabb(kind in 0u8..3, seed in 0u64..50, axis in arb_axis(), angle in 0.0f64..6.3) {
        let b = fixture(kind, seed).transformed(rigid(axis, angle, [0.0; 3]));
        for g in 0..b.subgroups.len() {
            let s = b.summarize(g, ObbMode::Free).unwrap();
            let vs: Vec<Vec3> = b.subgroup_vertices(g).into_iter().map(|i| b.vertices[i]).collect();
            let bb = Aabb::from_points(&vs);
            let e = bb.max - bb.min;
            prop_assert!(s.obb.volume() <= e.x * e.y * e.z * (1.0 + 1e-6) + 1e-12, "subgroup {g}");
        }
    }

    #[test]
    fn save_load_round_trip(kind in 0u8..3, seed in 0u64..50) {
        let b = fixture(kind, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.obj");
        save_building(&b, &path).unwrap();
        let c = load_building(&path).unwrap();
        prop_assert_eq!(&b.triangles, &c.triangles);
        prop_assert_eq!(&b.subgroups, &c.subgroups);
        prop_assert_eq!(&b.labels, &c.labels);
        prop_assert_eq!(&b.hierarchy, &c.hierarchy);
        prop_assert_eq!(b.vertices.len(), c.vertices.len());
        for (p, q) in b.vertices.iter().zip(&c.vertices) {
            prop_assert!((p - q).norm() <= 1e-9 * p.norm().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn duplicates_survive_rigid_motion(seed in 0u64..50, axis in arb_axis(), angle in 0.0f64..6.3, shift in arb_shift()) {
        let b = row_houses(seed);
        let moved = b.transformed(rigid(axis, angle, shift));
        let classes = |b: &Building| {
            let s = b.summarize_all(ObbMode::Free).unwrap();
            detect_duplicates(b, &s, &DedupConfig::default()).classes
        };
        let c0 = classes(&b);
        prop_assert!(c0.len() < b.subgroups.len());
        prop_assert_eq!(c0, classes(&moved));
    }

    #[test]
    fn enclosing_shell_keeps_interior_hidden(seed in 0u64..20) {
        let (b, _) = interior_stress(seed);
        let config = InteriorConfig::default();
        let before = exterior_subgroups(&b, &config);
        let after = exterior_subgroups(&with_shell(&b), &config);
        for (g, (&was, &now)) in before.iter().zip(&after).enumerate() {
            prop_assert!(was || !now, "subgroup {g} became exterior");
        }
        prop_assert!(after[b.subgroups.len()]);
    }

    #[test]
    fn sampling_and_mapping_invariants(kind in 0u8..3, seed in 0u64..50, budget in 50usize..1500) {
        let b = fixture(kind, seed);
        let points = sample_points(&b, budget, seed).unwrap();
        prop_assert_eq!(points.len(), budget);
        prop_assert_eq!(&points, &sample_points(&b, budget, seed).unwrap());
        let owners = b.triangle_owners();
        for i in 0..points.len() {
            prop_assert_eq!(owners[points.triangles[i]], points.subgroups[i]);
            prop_assert!((points.normals[i].norm() - 1.0).abs() <= 1e-6);
        }
        let map = build_point_triangle_map(&b, &points).unwrap();
        prop_assert_eq!(map.assignments.len(), b.triangles.len());
        prop_assert!(map.assignments.iter().all(|a| !a.is_empty()));
        let mut seen = vec![false; points.len()];
        for &p in map.assignments.iter().flatten() {
            seen[p] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn edge_features_are_bounded_and_consistent(kind in 0u8..3, seed in 0u64..50) {
        let b = fixture(kind, seed);
        let points = sample_points(&b, 800, seed).unwrap();
        let g = build_graph(&b, &points, &ZeroBackbone, &GraphConfig::default()).unwrap();
        for e in &g.edges {
            prop_assert!(e.src != e.dst);
            prop_assert!(g.edge(e.dst, e.src).is_some());
            prop_assert!(e.features.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(e.features[..4].windows(2).all(|w| w[0] <= w[1]));
        }
        for row in &g.nodes {
            prop_assert_eq!(row.len(), NODE_DIM);
            prop_assert!(row.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn edge_features_follow_rigid_motion(seed in 0u64..50, angle in 0.0f64..6.3, shift in arb_shift()) {
        let b = stacked_boxes(seed);
        let points = sample_points(&b, 800, seed).unwrap();
        let config = GraphConfig::default();
        let g0 = build_graph(&b, &points, &ZeroBackbone, &config).unwrap();

        let t = Vec3::from(shift);
        let shifted = |p: &Vec3| p + t;
        let g1 = build_graph(&b.transformed(shifted), &moved_points(&points, shifted), &ZeroBackbone, &config).unwrap();
        prop_assert_eq!(g0.edges.len(), g1.edges.len());
        for (a, c) in g0.edges.iter().zip(&g1.edges) {
            prop_assert_eq!((a.src, a.dst, a.mask), (c.src, c.dst, c.mask));
            for (x, y) in a.features.iter().zip(&c.features) {
                prop_assert!((x - y).abs() <= 1e-4);
            }
        }

        let turned = |p: &Vec3| rotate_upright(p, angle);
        let g2 = build_graph(&b.transformed(turned), &moved_points(&points, turned), &ZeroBackbone, &config).unwrap();
        for a in &g0.edges {
            let c = g2.edge(a.src, a.dst);
            prop_assert!(c.is_some());
            let c = c.unwrap();
            for k in (0..4).chain(8..11) {
                prop_assert!((a.features[k] - c.features[k]).abs() <= 1e-4, "edge ({}, {}) slot {k}", a.src, a.dst);
            }
        }
    }

    #[test]
    fn broad_phase_matches_all_pairs(kind in 0u8..3, seed in 0u64..50) {
        let b = fixture(kind, seed);
        let points = sample_points(&b, 600, seed).unwrap();
        let fast = build_graph(&b, &points, &ZeroBackbone, &GraphConfig::default()).unwrap();
        let slow = build_graph(&b, &points, &ZeroBackbone, &GraphConfig { broad_phase: false, ..Default::default() }).unwrap();
        prop_assert_eq!(fast, slow);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn outputs_are_distributions(seed in 0u64..10_000, n in 1usize..8) {
        let p = random_model(seed).forward(&random_graph(seed, n)).unwrap();
        for row in p.rows() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn node_permutation_permutes_outputs(seed in 0u64..10_000, n in 2usize..8) {
        let m = random_model(seed);
        let g = random_graph(seed, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut h = g.clone();
        for (i, &p) in perm.iter().enumerate() {
            h.nodes[p] = g.nodes[i].clone();
            h.labels[p] = g.labels[i];
        }
        for e in &mut h.edges {
            e.src = perm[e.src];
            e.dst = perm[e.dst];
        }
        h.edges.sort_by_key(|e| (e.src, e.dst));
        let a = m.forward(&g).unwrap();
        let b = m.forward(&h).unwrap();
        for i in 0..n {
            for l in 0..a.ncols() {
                prop_assert!((a[[i, l]] - b[[perm[i], l]]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn edge_order_does_not_matter(seed in 0u64..10_000, n in 2usize..8) {
        let m = random_model(seed);
        let g = random_graph(seed, n);
        let mut h = g.clone();
        h.edges.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
        let a = m.forward(&g).unwrap();
        let b = m.forward(&h).unwrap();
        prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-6));
    }

    #[test]
    fn label_weight_scaling_scales_loss_and_gradients(seed in 0u64..10_000, n in 1usize..6, k in 0.01f64..100.0) {
        let m = random_model(seed);
        let g = random_graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..NUM_LABELS).map(|_| rng.gen_range(0.1..2.0)).collect();
        let (l0, g0) = m.loss_and_gradients(&g, &LabelWeights(w.clone())).unwrap();
        let (l1, g1) = m.loss_and_gradients(&g, &LabelWeights(w.iter().map(|v| v * k).collect())).unwrap();
        prop_assert!((l1 - k * l0).abs() <= 1e-9 * (k * l0).abs().max(1.0));
        for (t0, t1) in g0.0.iter().zip(&g1.0) {
            let scale = k * t0.iter().fold(1e-12, |m: f64, v| m.max(v.abs()));
            for (a, b) in t0.iter().zip(t1) {
                prop_assert!((b - k * a).abs() <= 1e-9 * scale);
            }
        }
    }
}
