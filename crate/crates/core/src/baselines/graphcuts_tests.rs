use super::*;
use crate::fixtures::shapes::{cube_mesh, quad_mesh, Assembler};
use crate::mesh::{Subgroup, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn exhaustive_min(unary: &Array2<f64>, graph: &FaceGraph, lambda: f64) -> (f64, Vec<usize>) {
    let (n, l) = unary.dim();
    let mut labels = vec![0; n];
    let mut best = (f64::INFINITY, labels.clone());
    loop {
        let e = energy(unary, graph, lambda, &labels);
        if e < best.0 {
            best = (e, labels.clone());
        }
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            labels[k] += 1;
            if labels[k] < l {
                break;
            }
            labels[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn cube_adjacency() {
    let mut a = Assembler::new();
    a.add("c", cube_mesh(Vec3::zeros(), Vec3::repeat(1.0)), None);
    let g = face_adjacency(&a.finish(), 1.0);
    assert_eq!(g.num_faces, 12);
    assert_eq!(g.edges.len(), 18);
    let coplanar = g.edges.iter().filter(|e| (e.2 - 90f64.ln()).abs() < 1e-9).count();
    assert_eq!(coplanar, 6);
    assert_eq!(g.edges.iter().filter(|e| e.2.abs() < 1e-9).count(), 12);
}

#[test]
fn zero_normal_counts_as_right_angle() {
    assert_eq!(angle_weight(&Vec3::zeros(), &Vec3::x(), 1.0), 0.0);
    assert!((angle_weight(&Vec3::x(), &Vec3::x(), 1.0) - 90f64.ln()).abs() < 1e-12);
    assert!((angle_weight(&Vec3::x(), &Vec3::new(1.0, 1.0, 0.0).normalize(), 1.0) - 2f64.ln()).abs() < 1e-9);
}

fn random_probs(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Array2::from_shape_fn((n, 31), |_| rng.gen_range(0.0..1.0));
    for mut row in p.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

#[test]
fn zero_lambda_is_unary_argmax() {
    let mut a = Assembler::new();
    a.add("c", cube_mesh(Vec3::zeros(), Vec3::repeat(1.0)), None);
    let b = a.finish();
    let p = random_probs(12, 1);
    let r = graph_cuts(&b, &p, &GraphCutsConfig { lambda: 0.0, ..Default::default() }).unwrap();
    let argmax = crate::gnn::argmax_labels(&p);
    assert_eq!(r.labels, argmax.iter().map(|l| l.index()).collect::<Vec<_>>());
    assert_eq!(r.energy_trace.len(), 1);
}

#[test]
fn coplanar_pair_takes_stronger_label() {
    let mut a = Assembler::new();
    a.add("q", quad_mesh(Vec3::zeros(), Vec3::x(), Vec3::z()), None);
    let b = a.finish();
    let mut p = Array2::from_elem((2, 31), 0.1 / 29.0);
    p[[0, 3]] = 0.6;
    p[[0, 5]] = 0.3;
    p[[1, 3]] = 0.35;
    p[[1, 5]] = 0.55;
    let cfg = GraphCutsConfig { lambda: 10.0, ..Default::default() };
    let r = graph_cuts(&b, &p, &cfg).unwrap();
    let graph = face_adjacency(&b, 1.0);
    assert_eq!(graph.edges.len(), 1);
    let (emin, best) = exhaustive_min(&unary_costs(&p), &graph, 10.0);
    assert_eq!(best, vec![3, 3]);
    assert_eq!(r.labels, best);
    assert!((r.final_energy - emin).abs() < 1e-12);
}

#[test]
fn energy_never_increases() {
    let mut a = Assembler::new();
    for k in 0..3 {
        a.add(format!("c{k}"), cube_mesh(Vec3::new(k as f64, 0.0, 0.0), Vec3::repeat(1.0)), None);
    }
    let b = a.finish();
    let p = random_probs(b.triangles.len(), 2);
    for method in [Method::AlphaExpansion, Method::Icm] {
        let r = graph_cuts(&b, &p, &GraphCutsConfig { lambda: 0.5, method, ..Default::default() }).unwrap();
        assert!(r.final_energy <= r.initial_energy);
        assert!(r.energy_trace.windows(2).all(|w| w[1] < w[0]));
        let g = face_adjacency(&b, 1.0);
        assert!((energy(&unary_costs(&p), &g, 0.5, &r.labels) - r.final_energy).abs() < 1e-9);
    }
}

#[test]
fn min_cut_of_textbook_network() {
    let edges = [(0, 1, 16.0), (0, 2, 13.0), (1, 3, 12.0), (2, 1, 4.0), (2, 4, 14.0), (3, 2, 9.0), (3, 5, 20.0), (4, 3, 7.0), (4, 5, 4.0)];
    let mut fg = FlowGraph::new(6);
    for &(a, b, c) in &edges {
        fg.add_edge(a, b, c);
    }
    let side = fg.min_cut_source_side(0, 5);
    let cut: f64 = edges.iter().filter(|e| side[e.0] && !side[e.1]).map(|e| e.2).sum();
    assert_eq!(cut, 23.0);
}

/// Flat `size × size` grid; cells inside `door` are labeled door, the rest wall.
fn wall_with_door(size: usize, door: (std::ops::Range<usize>, std::ops::Range<usize>)) -> Building {
    let mut vertices = Vec::new();
    for i in 0..=size {
        for j in 0..=size {
            vertices.push(Vec3::new(i as f64, j as f64, 0.0));
        }
    }
    let id = |i: usize, j: usize| i * (size + 1) + j;
    let mut triangles = Vec::new();
    let (mut wall, mut door_tris) = (Vec::new(), Vec::new());
    for i in 0..size {
        for j in 0..size {
            let target = if door.0.contains(&i) && door.1.contains(&j) { &mut door_tris } else { &mut wall };
            target.push(triangles.len());
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            target.push(triangles.len());
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Building::new(
        vertices,
        triangles,
        None,
        vec![Subgroup { name: "wall".into(), triangles: wall }, Subgroup { name: "door".into(), triangles: door_tris }],
        BTreeMap::new(),
        vec![Some(PartLabel::Wall), Some(PartLabel::Door)],
    )
    .unwrap()
}

fn noisy_probs(b: &Building, flip: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = b.triangle_labels();
    let mut p = Array2::zeros((truth.len(), 31));
    for (t, l) in truth.iter().enumerate() {
        let l = l.unwrap();
        let other = if l == PartLabel::Wall { PartLabel::Door } else { PartLabel::Wall };
        let (hi, lo) = if rng.gen_bool(flip) { (other, l) } else { (l, other) };
        p[[t, hi.index()]] = 0.7;
        p[[t, lo.index()]] = 0.3;
    }
    p
}

#[test]
fn grid_search_prefers_interior_lambda() {
    let buildings: Vec<Building> = (0..3).map(|_| wall_with_door(12, (4..8, 3..9))).collect();
    let probs: Vec<Array2<f64>> = buildings.iter().enumerate().map(|(k, b)| noisy_probs(b, 0.25, k as u64)).collect();
    let val: Vec<_> = buildings.iter().zip(&probs).collect();
    let r = grid_search_lambda(&val, &[100.0, 0.0, 0.15], &GraphCutsConfig::default()).unwrap();
    assert_eq!(r.best_lambda, 0.15, "{:?}", r.scores);
    assert!(r.scores[1].1 > r.scores[0].1 && r.scores[1].1 > r.scores[2].1);
}

#[test]
fn grid_search_edge_cases() {
    let b = wall_with_door(4, (1..2, 1..3));
    let p = noisy_probs(&b, 0.0, 0);
    let val = [(&b, &p)];
    let single = grid_search_lambda(&val, &[0.7], &GraphCutsConfig::default()).unwrap();
    assert_eq!(single.best_lambda, 0.7);
    // Clean unaries: every small λ scores a perfect 1.
    let tie = grid_search_lambda(&val, &[0.02, 0.01], &GraphCutsConfig::default()).unwrap();
    assert_eq!(tie.scores[0].1, tie.scores[1].1);
    assert_eq!(tie.best_lambda, 0.01);
    assert!(grid_search_lambda(&val, &[], &GraphCutsConfig::default()).is_err());
}

#[test]
fn invalid_configuration() {
    assert!(GraphCutsConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
    assert!(GraphCutsConfig { angle_clamp_deg: 0.0, ..Default::default() }.validate().is_err());
    assert!(GraphCutsConfig { angle_clamp_deg: 90.0, ..Default::default() }.validate().is_err());
}

fn arb_problem() -> impl Strategy<Value = (Array2<f64>, FaceGraph, f64)> {
    (2usize..=8, any::<u64>(), 0.0f64..3.0).prop_map(|(n, seed, lambda)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unary = Array2::from_shape_fn((n, 3), |_| rng.gen_range(0.0..3.0));
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.4) {
                    edges.push((i, j, rng.gen_range(0.0..90f64.ln())));
                }
            }
        }
        (unary, FaceGraph { num_faces: n, edges }, lambda)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn expansion_is_near_global_minimum((unary, graph, lambda) in arb_problem()) {
        let r = solve(&unary, &graph, &GraphCutsConfig { lambda, ..Default::default() }).unwrap();
        let (emin, _) = exhaustive_min(&unary, &graph, lambda);
        prop_assert!(r.final_energy <= 1.05 * emin + 1e-12, "{} vs {}", r.final_energy, emin);
        prop_assert!(r.energy_trace.windows(2).all(|w| w[1] < w[0]));
    }
}
