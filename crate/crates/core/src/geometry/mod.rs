//! Miura-ori crease pattern and its rigidly folded bar-and-hinge mesh.
//!
//! Sheet frame: `x` runs along a row (columns), `y` runs up the sheet
//! (rows), `z` is out of plane. Columns are straight in the flat pattern and
//! rows zigzag. When folded, odd rows lift to height `H` while the row
//! zigzag stays in its plane.

mod dihedral;

pub use dihedral::{dihedral_angle, dihedral_angle_and_gradient, Vec3};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MountainValley {
    Mountain,
    Valley,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreaseEdge {
    pub nodes: [usize; 2],
    pub kind: MountainValley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreasePattern {
    pub rows: usize,
    pub cols: usize,
    pub panel_a: f64,
    pub panel_b: f64,
    pub gamma: f64,
    /// Flat coordinates in mm, row-major (`row * cols + col`).
    pub vertices: Vec<[f64; 2]>,
    pub crease_edges: Vec<CreaseEdge>,
    /// Counter-clockwise: `(r,c) (r,c+1) (r+1,c+1) (r+1,c)`.
    pub facet_quads: Vec<[usize; 4]>,
}

impl CreasePattern {
    pub fn node(&self, row: usize, col: usize) -> usize {
        node_index(self.cols, row, col)
    }
}

#[inline]
pub fn node_index(cols: usize, row: usize, col: usize) -> usize {
    row * cols + col
}

/// Label of a grid edge in the Miura scheme, viewed from `+z`.
///
/// Row zigzags are all-mountain on odd rows and all-valley on even rows;
/// column segments alternate along the column and between columns.
fn crease_kind(r0: usize, c0: usize, r1: usize, c1: usize) -> MountainValley {
    if r0 == r1 {
        if r0 % 2 == 1 {
            MountainValley::Mountain
        } else {
            MountainValley::Valley
        }
    } else {
        debug_assert_eq!(c0, c1);
        let r = r0.min(r1);
        if (r + c0) % 2 == 0 {
            MountainValley::Mountain
        } else {
            MountainValley::Valley
        }
    }
}

pub fn build_miura_pattern(
    rows: usize,
    cols: usize,
    panel_a: f64,
    panel_b: f64,
    gamma: f64,
) -> Result<CreasePattern> {
    if rows < 2 || cols < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "grid must be at least 2x2, got {rows}x{cols}"
        )));
    }
    if !(panel_a > 0.0 && panel_b > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "panel sides must be positive (a = {panel_a}, b = {panel_b})"
        )));
    }
    if !(gamma > 0.0 && gamma < 90.0) {
        return Err(Error::DegenerateGeometry(format!(
            "sector angle must lie in (0, 90) degrees, got {gamma}"
        )));
    }
    let g = gamma.to_radians();
    let mut vertices = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let shift = if c % 2 == 1 { panel_b * g.cos() } else { 0.0 };
            vertices.push([c as f64 * panel_b * g.sin(), r as f64 * panel_a + shift]);
        }
    }

    let mut crease_edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols - 1 {
            crease_edges.push(CreaseEdge {
                nodes: [node_index(cols, r, c), node_index(cols, r, c + 1)],
                kind: crease_kind(r, c, r, c + 1),
            });
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols {
            crease_edges.push(CreaseEdge {
                nodes: [node_index(cols, r, c), node_index(cols, r + 1, c)],
                kind: crease_kind(r, c, r + 1, c),
            });
        }
    }

    let mut facet_quads = Vec::with_capacity((rows - 1) * (cols - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            facet_quads.push([
                node_index(cols, r, c),
                node_index(cols, r, c + 1),
                node_index(cols, r + 1, c + 1),
                node_index(cols, r + 1, c),
            ]);
        }
    }

    Ok(CreasePattern {
        rows,
        cols,
        panel_a,
        panel_b,
        gamma,
        vertices,
        crease_edges,
        facet_quads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarKind {
    Crease,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HingeKind {
    Crease,
    Facet,
}

/// Rotational spring about the axis `axis[0] -> axis[1]`, between the
/// triangles closed by `wings[0]` and `wings[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub axis: [usize; 2],
    pub wings: [usize; 2],
    /// Rest dihedral angle in radians.
    pub rest_angle: f64,
    pub kind: HingeKind,
}

impl Hinge {
    /// Nodes in `(i, j, k, l)` order for [`dihedral_angle`].
    pub fn nodes(&self) -> [usize; 4] {
        [self.wings[0], self.axis[0], self.axis[1], self.wings[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedMesh {
    pub rows: usize,
    pub cols: usize,
    /// Folded coordinates in mm.
    pub node_positions: Vec<[f64; 3]>,
    pub bars: Vec<[usize; 2]>,
    pub bar_kinds: Vec<BarKind>,
    pub hinges: Vec<Hinge>,
    /// Facet inclination against the flat reference plane, degrees.
    pub fold_angle: f64,
    pub facet_quads: Vec<[usize; 4]>,
}

impl FoldedMesh {
    pub fn node_count(&self) -> usize {
        self.node_positions.len()
    }

    pub fn node(&self, row: usize, col: usize) -> usize {
        node_index(self.cols, row, col)
    }

    pub fn position(&self, n: usize) -> Vec3 {
        let p = self.node_positions[n];
        Vec3::new(p[0], p[1], p[2])
    }

    pub fn bar_length(&self, b: usize) -> f64 {
        let [i, j] = self.bars[b];
        (self.position(j) - self.position(i)).norm()
    }

    /// Largest distance of a facet corner from the plane of the other three.
    pub fn planarity_residual(&self, quad: &[usize; 4]) -> f64 {
        let p: Vec<Vec3> = quad.iter().map(|&n| self.position(n)).collect();
        (0..4)
            .map(|skip| {
                let o: Vec<&Vec3> = (0..4).filter(|&i| i != skip).map(|i| &p[i]).collect();
                let n = (o[1] - o[0]).cross(&(o[2] - o[0]));
                let nn = n.norm();
                if nn == 0.0 {
                    0.0
                } else {
                    ((p[skip] - o[0]).dot(&n) / nn).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn export(&self) -> MeshExport {
        MeshExport {
            nodes: self.node_positions.clone(),
            bars: self.bars.clone(),
            hinges: self
                .hinges
                .iter()
                .map(|h| {
                    [
                        h.axis[0] as f64,
                        h.axis[1] as f64,
                        h.wings[0] as f64,
                        h.wings[1] as f64,
                        h.rest_angle.to_degrees(),
                    ]
                })
                .collect(),
            clamped: clamped_nodes(self),
        }
    }
}

/// JSON layout of an exported mesh. Hinge rows are
/// `[axis_a, axis_b, left_wing, right_wing, rest_angle_deg]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshExport {
    pub nodes: Vec<[f64; 3]>,
    pub bars: Vec<[usize; 2]>,
    pub hinges: Vec<[f64; 5]>,
    pub clamped: Vec<usize>,
}

/// Closed-form rigid-folding dimensions of a Miura unit strip.
#[derive(Debug, Clone, Copy)]
struct MiuraCell {
    /// Rise of the odd rows out of plane.
    height: f64,
    /// Column pitch along `x`.
    pitch: f64,
    /// Row pitch along `y`.
    row_pitch: f64,
    /// `y` offset of the odd columns.
    shift: f64,
}

fn miura_cell(a: f64, b: f64, gamma: f64, theta: f64) -> MiuraCell {
    let (sg, cg) = gamma.sin_cos();
    let tg = sg / cg;
    let (st, ct) = theta.sin_cos();
    let denom = (1.0 + ct * ct * tg * tg).sqrt();
    MiuraCell {
        height: a * st * sg,
        pitch: b * ct.abs() * tg / denom,
        row_pitch: a * (1.0 - st * st * sg * sg).sqrt(),
        shift: b / denom,
    }
}

/// Shorter diagonal of a quad as an index pair into the quad.
fn shorter_diagonal(flat: &[[f64; 2]], quad: &[usize; 4]) -> (usize, usize) {
    let d = |p: usize, q: usize| {
        let a = flat[quad[p]];
        let b = flat[quad[q]];
        (a[0] - b[0]).hypot(a[1] - b[1])
    };
    if d(1, 3) < d(0, 2) - 1e-12 {
        (1, 3)
    } else {
        (0, 2)
    }
}

pub fn fold_miura(pattern: &CreasePattern, fold_angle: f64) -> Result<FoldedMesh> {
    if !(fold_angle.abs() < 90.0) {
        return Err(Error::DegenerateGeometry(format!(
            "fold angle {fold_angle} degrees collapses the unit cell (must lie in (-90, 90))"
        )));
    }
    let cell = miura_cell(
        pattern.panel_a,
        pattern.panel_b,
        pattern.gamma.to_radians(),
        fold_angle.to_radians(),
    );
    if cell.pitch <= 0.0 || cell.row_pitch <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "folded unit cell has zero footprint".into(),
        ));
    }
    let (rows, cols) = (pattern.rows, pattern.cols);
    let mut node_positions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let z = if r % 2 == 1 { cell.height } else { 0.0 };
            let y = r as f64 * cell.row_pitch + if c % 2 == 1 { cell.shift } else { 0.0 };
            node_positions.push([c as f64 * cell.pitch, y, z]);
        }
    }

    let mut bars: Vec<[usize; 2]> = pattern.crease_edges.iter().map(|e| e.nodes).collect();
    let mut bar_kinds = vec![BarKind::Crease; bars.len()];
    let mut diagonals = Vec::with_capacity(pattern.facet_quads.len());
    for quad in &pattern.facet_quads {
        let (p, q) = shorter_diagonal(&pattern.vertices, quad);
        diagonals.push((p, q));
        bars.push([quad[p], quad[q]]);
        bar_kinds.push(BarKind::Diagonal);
    }

    let mut mesh = FoldedMesh {
        rows,
        cols,
        node_positions,
        bars,
        bar_kinds,
        hinges: Vec::new(),
        fold_angle,
        facet_quads: pattern.facet_quads.clone(),
    };

    // Each quad edge lies in exactly one triangle of its quad; the wing is
    // the diagonal endpoint that is not on the edge.
    let mut edge_wings: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
        Default::default();
    for (quad, &(p, q)) in pattern.facet_quads.iter().zip(&diagonals) {
        for s in 0..4 {
            let (u, v) = (quad[s], quad[(s + 1) % 4]);
            let wing = if u == quad[p] || v == quad[p] {
                quad[q]
            } else {
                quad[p]
            };
            edge_wings.entry((u.min(v), u.max(v))).or_default().push(wing);
        }
    }

    let mut hinges = Vec::new();
    for edge in &pattern.crease_edges {
        let [u, v] = edge.nodes;
        if let Some(w) = edge_wings.get(&(u.min(v), u.max(v))) {
            if w.len() == 2 {
                hinges.push(make_hinge(&mesh, [u, v], [w[0], w[1]], HingeKind::Crease));
            }
        }
    }
    for (quad, &(p, q)) in pattern.facet_quads.iter().zip(&diagonals) {
        let others: Vec<usize> = (0..4).filter(|&s| s != p && s != q).map(|s| quad[s]).collect();
        let mut h = make_hinge(&mesh, [quad[p], quad[q]], [others[0], others[1]], HingeKind::Facet);
        h.rest_angle = PI;
        hinges.push(h);
    }
    mesh.hinges = hinges;
    Ok(mesh)
}

fn make_hinge(mesh: &FoldedMesh, axis: [usize; 2], wings: [usize; 2], kind: HingeKind) -> Hinge {
    let rest_angle = dihedral_angle(
        &mesh.position(wings[0]),
        &mesh.position(axis[0]),
        &mesh.position(axis[1]),
        &mesh.position(wings[1]),
    );
    Hinge {
        axis,
        wings,
        rest_angle,
        kind,
    }
}

/// Nodes glued to the moving base: the corner triangle at row 0, column 0.
///
/// Two pinned nodes alone leave a free rotation about the line joining
/// them, so the row-1 corner node is clamped as well.
pub fn clamped_nodes(mesh: &FoldedMesh) -> Vec<usize> {
    vec![mesh.node(0, 0), mesh.node(0, 1), mesh.node(1, 0)]
}

/// Node ids of the bottom row closest to the clamped corner.
pub fn bottom_nodes(mesh: &FoldedMesh, count: usize) -> Vec<usize> {
    (0..count.min(mesh.cols)).map(|c| mesh.node(0, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_pattern() -> CreasePattern {
        build_miura_pattern(4, 7, 20.0, 20.0, 60.0).unwrap()
    }

    #[test]
    fn paper_grid_counts() {
        let p = default_pattern();
        assert_eq!(p.vertices.len(), 28);
        assert_eq!(p.facet_quads.len(), 18);
        assert_eq!(p.crease_edges.len(), 45);
        let m = fold_miura(&p, 50.0).unwrap();
        assert_eq!(m.bars.len(), 63);
    }

    #[test]
    fn single_panel() {
        let p = build_miura_pattern(2, 2, 10.0, 12.0, 45.0).unwrap();
        assert_eq!(p.vertices.len(), 4);
        assert_eq!(p.facet_quads.len(), 1);
        assert_eq!(p.crease_edges.len(), 4);
        let m = fold_miura(&p, 30.0).unwrap();
        assert_eq!(m.bars.len(), 5);
        // only the facet diagonal is an interior edge
        assert_eq!(m.hinges.len(), 1);
        assert_eq!(m.hinges[0].kind, HingeKind::Facet);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(
            build_miura_pattern(4, 7, 20.0, 20.0, 90.0),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            build_miura_pattern(4, 7, 0.0, 20.0, 60.0),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            build_miura_pattern(1, 7, 20.0, 20.0, 60.0),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            fold_miura(&default_pattern(), 90.0),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn flat_fold_has_zero_heights() {
        let m = fold_miura(&default_pattern(), 0.0).unwrap();
        assert!(m.node_positions.iter().all(|p| p[2] == 0.0));
        for h in &m.hinges {
            assert!((h.rest_angle - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn facets_stay_planar() {
        let p = default_pattern();
        for angle in [0.0, 10.0, 45.0, 50.0, 60.0, 85.0] {
            let m = fold_miura(&p, angle).unwrap();
            for q in &m.facet_quads {
                assert!(m.planarity_residual(q) < 1e-9, "angle {angle}");
            }
        }
    }

    /// Checks labels against the folded shape: at a mountain fold the
    /// neighbouring facet drops below the plane of the first one.
    #[test]
    fn mountain_valley_labels_match_folded_shape() {
        let p = default_pattern();
        let m = fold_miura(&p, 40.0).unwrap();
        let centroid = |q: &[usize; 4]| -> Vec3 { q.iter().map(|&n| m.position(n)).sum::<Vec3>() / 4.0 };
        let normal_up = |q: &[usize; 4]| -> Vec3 {
            let a = m.position(q[0]);
            let n = (m.position(q[1]) - a).cross(&(m.position(q[3]) - a));
            if n.z < 0.0 { -n } else { n }
        };
        let mut checked = 0;
        for e in &p.crease_edges {
            let [u, v] = e.nodes;
            let faces: Vec<&[usize; 4]> =
                p.facet_quads.iter().filter(|q| q.contains(&u) && q.contains(&v)).collect();
            if faces.len() != 2 {
                continue;
            }
            let d2 = centroid(faces[1]) - m.position(u);
            let mountain = normal_up(faces[0]).dot(&d2) < 0.0;
            let expected = if mountain { MountainValley::Mountain } else { MountainValley::Valley };
            assert_eq!(e.kind, expected, "edge {u}-{v}");
            checked += 1;
        }
        assert_eq!(checked, 27);
    }

    #[test]
    fn interior_vertices_satisfy_maekawa() {
        let p = build_miura_pattern(5, 6, 20.0, 15.0, 55.0).unwrap();
        for r in 1..p.rows - 1 {
            for c in 1..p.cols - 1 {
                let n = p.node(r, c);
                let (mut mtn, mut val) = (0i32, 0i32);
                for e in p.crease_edges.iter().filter(|e| e.nodes.contains(&n)) {
                    match e.kind {
                        MountainValley::Mountain => mtn += 1,
                        MountainValley::Valley => val += 1,
                    }
                }
                assert_eq!((mtn - val).abs(), 2, "vertex ({r},{c})");
            }
        }
    }

    #[test]
    fn clamp_is_the_corner_triangle() {
        let m = fold_miura(&default_pattern(), 50.0).unwrap();
        assert_eq!(clamped_nodes(&m), vec![0, 1, 7]);
        let small = fold_miura(&build_miura_pattern(2, 2, 20.0, 20.0, 60.0).unwrap(), 50.0).unwrap();
        assert_eq!(clamped_nodes(&small), vec![0, 1, 2]);
        assert_eq!(bottom_nodes(&m, 4), vec![0, 1, 2, 3]);
    }

    #[test]
    fn export_json_layout() {
        let m = fold_miura(&default_pattern(), 50.0).unwrap();
        let v = serde_json::to_value(m.export()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 28);
        assert_eq!(v["bars"].as_array().unwrap().len(), 63);
        assert_eq!(v["hinges"].as_array().unwrap().len(), 27 + 18);
        assert_eq!(v["hinges"][0].as_array().unwrap().len(), 5);
        assert_eq!(v["clamped"], serde_json::json!([0, 1, 7]));
    }

    proptest! {
        #[test]
        fn bar_count_identity(rows in 2usize..=10, cols in 2usize..=10) {
            let p = build_miura_pattern(rows, cols, 20.0, 20.0, 60.0).unwrap();
            let m = fold_miura(&p, 50.0).unwrap();
            // enumerate grid adjacencies directly
            let mut edges = 0;
            for a in 0..rows * cols {
                for b in a + 1..rows * cols {
                    let (ra, ca, rb, cb) = (a / cols, a % cols, b / cols, b % cols);
                    if ra.abs_diff(rb) + ca.abs_diff(cb) == 1 {
                        edges += 1;
                    }
                }
            }
            prop_assert_eq!(p.crease_edges.len(), edges);
            prop_assert_eq!(m.bars.len(), edges + (rows - 1) * (cols - 1));
        }

        #[test]
        fn folding_is_isometric(angle in -89.0f64..89.0, gamma in 20.0f64..80.0,
                                a in 5.0f64..40.0, b in 5.0f64..40.0) {
            let p = build_miura_pattern(4, 7, a, b, gamma).unwrap();
            let flat = fold_miura(&p, 0.0).unwrap();
            let m = fold_miura(&p, angle).unwrap();
            for bar in 0..m.bars.len() {
                prop_assert!((m.bar_length(bar) - flat.bar_length(bar)).abs() < 1e-9);
            }
        }

        #[test]
        fn apex_height_increases_with_fold(t0 in 0.5f64..88.0, dt in 0.1f64..1.0) {
            let p = default_pattern();
            let lo = fold_miura(&p, t0).unwrap();
            let hi = fold_miura(&p, t0 + dt).unwrap();
            for r in (1..4).step_by(2) {
                for c in 0..7 {
                    let n = p.node(r, c);
                    prop_assert!(hi.node_positions[n][2] > lo.node_positions[n][2]);
                }
            }
        }

        #[test]
        fn flipping_fold_mirrors_through_plane(angle in 0.0f64..89.0) {
            let p = default_pattern();
            let up = fold_miura(&p, angle).unwrap();
            let down = fold_miura(&p, -angle).unwrap();
            for (u, d) in up.node_positions.iter().zip(&down.node_positions) {
                prop_assert!((u[0] - d[0]).abs() < 1e-12);
                prop_assert!((u[1] - d[1]).abs() < 1e-12);
                prop_assert!((u[2] + d[2]).abs() < 1e-12);
            }
        }
    }
}
