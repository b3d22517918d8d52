//! Triangular disc meshes with boundary electrodes, and the constant P1
//! quantities (areas, basis gradients, electrode edge lengths) derived from
//! them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Euclid;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Angular tolerance used to break ties when zipping two rings together.
const ANGLE_TOL: f64 = 1e-9;

/// A 2D triangle mesh of a disc whose boundary carries electrodes.
///
/// Triangles are stored counter-clockwise. Each electrode is a list of
/// boundary edges; electrodes never share nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    electrode_edges: Vec<Vec<[usize; 2]>>,
    radius: f64,
}

impl Mesh2D {
    /// Validates and normalizes a mesh. Clockwise triangles are flipped.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        electrode_edges: Vec<Vec<[usize; 2]>>,
        radius: f64,
    ) -> Result<Self> {
        let n = nodes.len();
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Geometry(format!("triangle {t} references a node out of range")));
            }
            let area2 = signed_area2(&nodes, *tri);
            if area2 == 0.0 || !area2.is_finite() {
                return Err(Error::Geometry(format!("triangle {t} is degenerate")));
            }
            if area2 < 0.0 {
                tri.swap(1, 2);
            }
        }

        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }

        let mut owner: Vec<Option<usize>> = vec![None; n];
        for (k, edges) in electrode_edges.iter().enumerate() {
            if edges.is_empty() {
                return Err(Error::Geometry(format!("electrode {k} has no edges")));
            }
            for &[a, b] in edges {
                if a >= n || b >= n {
                    return Err(Error::Geometry(format!("electrode {k} references a node out of range")));
                }
                if edge_count.get(&(a.min(b), a.max(b))) != Some(&1) {
                    return Err(Error::Geometry(format!("electrode {k} edge ({a}, {b}) is not a boundary edge")));
                }
                for v in [a, b] {
                    match owner[v] {
                        Some(other) if other != k => {
                            return Err(Error::Geometry(format!("electrodes {other} and {k} share node {v}")));
                        }
                        _ => owner[v] = Some(k),
                    }
                }
            }
        }

        if !(radius > 0.0) {
            return Err(Error::Geometry(format!("radius must be positive, got {radius}")));
        }

        Ok(Self { nodes, triangles, electrode_edges, radius })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn electrode_edges(&self) -> &[Vec<[usize; 2]>] {
        &self.electrode_edges
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_electrodes(&self) -> usize {
        self.electrode_edges.len()
    }

    /// Sorted, deduplicated node indices touched by electrode `k`.
    pub fn electrode_nodes(&self, k: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.electrode_edges[k].iter().flat_map(|e| [e[0], e[1]]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Edges that belong to exactly one triangle.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        count.into_iter().filter(|&(_, c)| c == 1).map(|((a, b), _)| [a, b]).collect()
    }

    /// Sum of triangle areas.
    pub fn total_area(&self) -> f64 {
        self.triangles.iter().map(|&t| 0.5 * signed_area2(&self.nodes, t)).sum()
    }
}

fn signed_area2(nodes: &[[f64; 2]], [a, b, c]: [usize; 3]) -> f64 {
    let (p, q, r) = (nodes[a], nodes[b], nodes[c]);
    (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])
}

/// Structured polar mesh of a disc of `radius` with `n_electrodes` evenly
/// spaced electrodes, each spanning `electrode_arc` radians. Electrode `k`
/// is centred at angle `2πk/n_electrodes`.
///
/// Nodes are laid out on concentric rings. Every ring carries a multiple of
/// `n_electrodes` nodes, so the mesh is invariant under rotation by one
/// electrode pitch. Electrode endpoints are always boundary nodes.
pub fn build_disc_mesh(radius: f64, n_electrodes: usize, electrode_arc: f64, target_h: f64) -> Result<Mesh2D> {
    if !(radius > 0.0) || !(target_h > 0.0) || !(electrode_arc > 0.0) {
        return Err(Error::Config(format!(
            "radius, electrode arc and target size must be positive (radius={radius}, arc={electrode_arc}, h={target_h})"
        )));
    }
    if n_electrodes < 2 {
        return Err(Error::Config(format!("need at least 2 electrodes, got {n_electrodes}")));
    }
    let pitch = 2.0 * PI / n_electrodes as f64;
    let gap = pitch - electrode_arc;
    if gap * radius < 1e-12 * radius || gap <= 0.0 {
        return Err(Error::Config(format!(
            "{n_electrodes} electrodes of arc {electrode_arc} overlap (total exceeds 2π)"
        )));
    }

    let n_rings = ((radius / target_h).ceil() as usize).max(2);
    let mut nodes: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    // (first node index, angles in [0, 2π))
    let mut rings: Vec<(usize, Vec<f64>)> = Vec::with_capacity(n_rings);

    for j in 1..n_rings {
        let r = radius * j as f64 / n_rings as f64;
        let per_sector = ((2.0 * PI * r / (target_h * n_electrodes as f64)).round() as usize).max(1);
        let m = per_sector * n_electrodes;
        let step = 2.0 * PI / m as f64;
        let offset = if j % 2 == 1 { 0.5 * step } else { 0.0 };
        let angles: Vec<f64> = (0..m).map(|i| offset + step * i as f64).collect();
        rings.push((nodes.len(), angles.clone()));
        nodes.extend(angles.iter().map(|&a| [r * a.cos(), r * a.sin()]));
    }

    // Boundary ring: per electrode sector, n_e electrode edges then n_g gap edges.
    let n_e = ((electrode_arc * radius / target_h).ceil() as usize).max(1);
    let n_g = ((gap * radius / target_h).ceil() as usize).max(1);
    let per_sector = n_e + n_g;
    let mut boundary_angles = Vec::with_capacity(per_sector * n_electrodes);
    for k in 0..n_electrodes {
        let start = pitch * k as f64 - 0.5 * electrode_arc;
        for i in 0..n_e {
            boundary_angles.push(start + electrode_arc * i as f64 / n_e as f64);
        }
        for i in 0..n_g {
            boundary_angles.push(start + electrode_arc + gap * i as f64 / n_g as f64);
        }
    }
    let boundary_first = nodes.len();
    nodes.extend(boundary_angles.iter().map(|&a| [radius * a.cos(), radius * a.sin()]));
    let electrode_edges: Vec<Vec<[usize; 2]>> = (0..n_electrodes)
        .map(|k| {
            (0..n_e)
                .map(|i| {
                    let a = boundary_first + k * per_sector + i;
                    let b = boundary_first + (k * per_sector + i + 1) % boundary_angles.len();
                    [a, b]
                })
                .collect()
        })
        .collect();
    let boundary_norm: Vec<f64> = boundary_angles.iter().map(|&a| Euclid::rem_euclid(&a, &(2.0 * PI))).collect();
    rings.push((boundary_first, boundary_norm));

    let mut triangles = Vec::new();
    let (first, ring1) = &rings[0];
    for i in 0..ring1.len() {
        triangles.push([0, first + i, first + (i + 1) % ring1.len()]);
    }
    for w in rings.windows(2) {
        zip_rings(&w[0], &w[1], &mut triangles);
    }

    Mesh2D::new(nodes, triangles, electrode_edges, radius)
}

/// Triangulates the annulus between two rings by merging their nodes in
/// angular order. Ties go to the outer ring.
fn zip_rings(inner: &(usize, Vec<f64>), outer: &(usize, Vec<f64>), out: &mut Vec<[usize; 3]>) {
    let two_pi = 2.0 * PI;
    let order = |angles: &[f64]| {
        let mut idx: Vec<usize> = (0..angles.len()).collect();
        idx.sort_by(|&a, &b| angles[a].partial_cmp(&angles[b]).unwrap());
        idx
    };
    let ia = order(&inner.1);
    let ib = order(&outer.1);
    let (m1, m2) = (ia.len(), ib.len());

    let a0 = inner.1[ia[0]];
    // Outer node that immediately precedes (or ties with) the first inner node.
    let (s, shift) = match ib.iter().rposition(|&j| outer.1[j] <= a0 + ANGLE_TOL) {
        Some(s) => (s, 0.0),
        None => (m2 - 1, -two_pi),
    };
    let oa: Vec<f64> = (0..=m1).map(|i| inner.1[ia[i % m1]] + if i == m1 { two_pi } else { 0.0 }).collect();
    let ob: Vec<f64> = (0..=m2)
        .map(|k| {
            let wraps = if s + k >= m2 { two_pi } else { 0.0 };
            outer.1[ib[(s + k) % m2]] + shift + wraps
        })
        .collect();
    let inner_id = |i: usize| inner.0 + ia[i % m1];
    let outer_id = |k: usize| outer.0 + ib[(s + k) % m2];

    let (mut i, mut k) = (0, 0);
    while i < m1 || k < m2 {
        let take_outer = k < m2 && (i == m1 || ob[k + 1] <= oa[i + 1] + ANGLE_TOL);
        if take_outer {
            out.push([inner_id(i), outer_id(k), outer_id(k + 1)]);
            k += 1;
        } else {
            out.push([inner_id(i), inner_id(i + 1), outer_id(k)]);
            i += 1;
        }
    }
}

/// Per-element constant P1 quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    /// Element areas (m²).
    pub areas: Vec<f64>,
    /// `gradients[e][j]` is ∇φ_j on element `e` for its local node `j` (1/m).
    pub gradients: Vec<[[f64; 2]; 3]>,
    /// Edge lengths per electrode, in the order of [`Mesh2D::electrode_edges`].
    pub electrode_edge_lengths: Vec<Vec<f64>>,
}

impl ElementGeometry {
    /// Total length |e_k| of electrode `k`.
    pub fn electrode_length(&self, k: usize) -> f64 {
        self.electrode_edge_lengths[k].iter().sum()
    }

    /// Gradient of the P1 interpolant of `field` on element `e`.
    pub fn field_gradient(&self, mesh: &Mesh2D, e: usize, field: &[f64]) -> [f64; 2] {
        let tri = mesh.triangles[e];
        let g = &self.gradients[e];
        let mut out = [0.0; 2];
        for j in 0..3 {
            out[0] += field[tri[j]] * g[j][0];
            out[1] += field[tri[j]] * g[j][1];
        }
        out
    }
}

pub fn element_geometry(mesh: &Mesh2D) -> Result<ElementGeometry> {
    let mut areas = Vec::with_capacity(mesh.n_elements());
    let mut gradients = Vec::with_capacity(mesh.n_elements());
    for (e, &tri) in mesh.triangles.iter().enumerate() {
        let area2 = signed_area2(&mesh.nodes, tri);
        if !(area2.abs() > 0.0) {
            return Err(Error::Geometry(format!("element {e} has zero area")));
        }
        let p = tri.map(|i| mesh.nodes[i]);
        let mut g = [[0.0; 2]; 3];
        for j in 0..3 {
            let (b, c) = (p[(j + 1) % 3], p[(j + 2) % 3]);
            g[j] = [(b[1] - c[1]) / area2, (c[0] - b[0]) / area2];
        }
        areas.push(0.5 * area2.abs());
        gradients.push(g);
    }
    let electrode_edge_lengths = mesh
        .electrode_edges
        .iter()
        .map(|edges| {
            edges
                .iter()
                .map(|&[a, b]| {
                    let (p, q) = (mesh.nodes[a], mesh.nodes[b]);
                    ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
                })
                .collect()
        })
        .collect();
    Ok(ElementGeometry { areas, gradients, electrode_edge_lengths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn desk_mesh() -> Mesh2D {
        build_disc_mesh(0.12, 16, 0.025 / 0.12, 0.02).unwrap()
    }

    #[test]
    fn sixteen_electrode_groups() {
        let mesh = desk_mesh();
        assert_eq!(mesh.n_electrodes(), 16);
        let boundary = mesh.boundary_edges();
        for k in 0..16 {
            for e in &mesh.electrode_edges()[k] {
                let key = [e[0].min(e[1]), e[0].max(e[1])];
                assert!(boundary.contains(&key));
            }
        }
    }

    #[test]
    fn overlapping_arcs_rejected() {
        assert!(matches!(build_disc_mesh(1.0, 2, PI, 0.1), Err(Error::Config(_))));
        assert!(matches!(build_disc_mesh(1.0, 1, 0.1, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn refinement_node_ratio() {
        let coarse = build_disc_mesh(1.0, 4, PI / 8.0, 0.1).unwrap();
        let fine = build_disc_mesh(1.0, 4, PI / 8.0, 0.05).unwrap();
        let ratio = fine.n_nodes() as f64 / coarse.n_nodes() as f64;
        assert!((2.0..=8.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn refinement_keeps_electrode_coverage() {
        let arc = 0.025 / 0.12;
        for h in [0.02, 0.01] {
            let mesh = build_disc_mesh(0.12, 16, arc, h).unwrap();
            let geo = element_geometry(&mesh).unwrap();
            for k in 0..16 {
                let chord_sum = geo.electrode_length(k);
                // Polygonal approximation of an arc of length 0.025 m.
                assert!((chord_sum - 0.025).abs() < 1e-4, "electrode {k}: {chord_sum}");
            }
        }
    }

    #[test]
    fn unit_right_triangle() {
        let mesh = Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![], 1.0).unwrap();
        let geo = element_geometry(&mesh).unwrap();
        assert_eq!(geo.areas[0], 0.5);
        assert_eq!(geo.gradients[0], [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn clockwise_triangles_are_flipped() {
        let mesh = Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 2, 1]], vec![], 1.0).unwrap();
        assert!(mesh.total_area() > 0.0);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let r = Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]], vec![], 1.0);
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn interior_edge_cannot_be_electrode() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let tris = vec![[0, 1, 2], [1, 3, 2]];
        let r = Mesh2D::new(nodes, tris, vec![vec![[1, 2]]], 1.0);
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn gradients_partition_of_unity_and_area_sum() {
        let mesh = desk_mesh();
        let geo = element_geometry(&mesh).unwrap();
        for g in &geo.gradients {
            let s = [g[0][0] + g[1][0] + g[2][0], g[0][1] + g[1][1] + g[2][1]];
            let scale = g.iter().map(|v| v[0].abs() + v[1].abs()).fold(0.0, f64::max);
            assert!(s[0].abs() <= 1e-12 * scale && s[1].abs() <= 1e-12 * scale);
        }
        let sum: f64 = geo.areas.iter().sum();
        assert!((sum - mesh.total_area()).abs() < 1e-14);
        // Polygon inscribed in the disc.
        assert!(sum < PI * 0.12 * 0.12 && sum > 0.97 * PI * 0.12 * 0.12);
    }

    #[test]
    fn affine_field_gradient_exact() {
        let mesh = build_disc_mesh(1.0, 8, 0.2, 0.15).unwrap();
        let geo = element_geometry(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Jitter interior nodes to get a generic mesh.
        let mut nodes = mesh.nodes().to_vec();
        let boundary: Vec<usize> = mesh.boundary_edges().iter().flat_map(|e| [e[0], e[1]]).collect();
        for (i, p) in nodes.iter_mut().enumerate() {
            if !boundary.contains(&i) {
                p[0] += 0.01 * (rng.random::<f64>() - 0.5);
                p[1] += 0.01 * (rng.random::<f64>() - 0.5);
            }
        }
        let jittered =
            Mesh2D::new(nodes, mesh.triangles().to_vec(), mesh.electrode_edges().to_vec(), 1.0).unwrap();
        let geo_j = element_geometry(&jittered).unwrap();
        for (m, g) in [(&mesh, &geo), (&jittered, &geo_j)] {
            let field: Vec<f64> = m.nodes().iter().map(|p| 3.0 * p[0] - 2.0 * p[1]).collect();
            for e in 0..m.n_elements() {
                let d = g.field_gradient(m, e, &field);
                assert!((d[0] - 3.0).abs() < 1e-12 * 3.0, "{d:?}");
                assert!((d[1] + 2.0).abs() < 1e-12 * 3.0, "{d:?}");
            }
        }
    }

    #[test]
    fn rotational_symmetry_of_layout() {
        let mesh = build_disc_mesh(1.0, 8, 0.3, 0.2).unwrap();
        let rot = 2.0 * PI / 8.0;
        let (c, s) = (rot.cos(), rot.sin());
        // Every node rotated by one pitch lands on a node.
        for p in mesh.nodes() {
            let q = [c * p[0] - s * p[1], s * p[0] + c * p[1]];
            let hit = mesh.nodes().iter().any(|r| (r[0] - q[0]).abs() < 1e-12 && (r[1] - q[1]).abs() < 1e-12);
            assert!(hit);
        }
        assert_eq!(mesh.n_elements() % 8, 0);
    }
}
