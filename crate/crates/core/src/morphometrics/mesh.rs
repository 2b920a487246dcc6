//! Marching-cubes isosurface of a binary grid at level 0.5.
//!
//! With binary corner values every crossing sits at an edge midpoint, so the
//! surface is built on a doubled integer lattice and all orientation tests
//! are exact. Each cube face is contoured from its own four corners only
//! (diagonal configurations keep the inside corners apart), which makes
//! neighbouring cubes agree on shared faces and the mesh watertight. The
//! closed edge loops found inside each cube are triangulated as a fan around
//! their centroid; triangles wind outward.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::volume::VoxelMask;

/// Triangle mesh in physical mm, expressed in the voxel-axis frame with the
/// foreground bounding-box corner voxel at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    /// Vertices `0..lattice_vertices` are edge crossings; the rest are loop
    /// centroids added by the triangulation (they never extend the hull).
    lattice_vertices: usize,
}

impl SurfaceMesh {
    /// The edge-crossing vertices only.
    pub fn lattice_vertices(&self) -> &[[f64; 3]] {
        &self.vertices[..self.lattice_vertices]
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                0.5 * norm(cross(sub(b, a), sub(c, a)))
            })
            .sum()
    }

    /// Enclosed volume from the signed tetrahedron sum.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                dot(a, cross(b, c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Euler characteristic V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// True when every undirected edge is shared by exactly two triangles
    /// traversing it in opposite directions.
    pub fn is_closed_and_oriented(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    fn corners(&self, t: &[u32; 3]) -> [[f64; 3]; 3] {
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }
}

/// Builds the isosurface of `mask`. The grid is implicitly padded with
/// background so masks touching the border still close.
pub fn build_mesh(mask: &VoxelMask) -> Result<SurfaceMesh> {
    let Some((lo, hi)) = mask.bounding_box() else {
        return Err(Error::Degenerate("cannot mesh an empty mask".into()));
    };
    let spacing = mask.spacing();
    let lo = lo.map(|v| v as isize);
    let hi = hi.map(|v| v as isize);

    let mut builder = Builder::default();
    for k in lo[2] - 1..=hi[2] {
        for j in lo[1] - 1..=hi[1] {
            for i in lo[0] - 1..=hi[0] {
                let mut corners = 0u8;
                for c in 0..8u8 {
                    let (di, dj, dk) = ((c & 1) as isize, ((c >> 1) & 1) as isize, ((c >> 2) & 1) as isize);
                    if mask.get_signed(i + di, j + dj, k + dk) {
                        corners |= 1 << c;
                    }
                }
                if corners != 0 && corners != 0xff {
                    // doubled coordinates relative to the bounding-box corner
                    let base = [2 * (i - lo[0]) as i64, 2 * (j - lo[1]) as i64, 2 * (k - lo[2]) as i64];
                    builder.cube(base, corners);
                }
            }
        }
    }
    Ok(builder.finish(spacing))
}

#[derive(Default)]
struct Builder {
    lattice: HashMap<[i64; 3], u32>,
    lattice_pos: Vec<[i64; 3]>,
    centroids: Vec<[f64; 3]>,
    // centroid references are stored as u32::MAX - index until `finish`
    triangles: Vec<[u32; 3]>,
}

const CENTROID_TAG: u32 = u32::MAX;

impl Builder {
    fn vertex(&mut self, p: [i64; 3]) -> u32 {
        if let Some(&id) = self.lattice.get(&p) {
            return id;
        }
        let id = self.lattice_pos.len() as u32;
        self.lattice.insert(p, id);
        self.lattice_pos.push(p);
        id
    }

    fn cube(&mut self, base: [i64; 3], corners: u8) {
        let inside = |c: u8| corners & (1 << c) != 0;
        let corner_pos = |c: u8| {
            [
                base[0] + 2 * (c & 1) as i64,
                base[1] + 2 * ((c >> 1) & 1) as i64,
                base[2] + 2 * ((c >> 2) & 1) as i64,
            ]
        };

        // Directed segments (start, end) in doubled coordinates.
        let mut segments: Vec<([i64; 3], [i64; 3])> = Vec::with_capacity(12);
        for axis in 0..3 {
            let (u, v) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for side in 0..2u8 {
                let mut normal = [0i64; 3];
                normal[axis] = if side == 1 { 1 } else { -1 };
                // face corners in cyclic order over (u, v)
                let ring: [u8; 4] = [(0, 0), (1, 0), (1, 1), (0, 1)].map(|(a, b): (u8, u8)| {
                    (side << axis) | (a << u) | (b << v)
                });
                // crossings on the four ring edges: (midpoint, inside corner)
                let mut cross: [Option<([i64; 3], u8)>; 4] = [None; 4];
                for e in 0..4 {
                    let (c0, c1) = (ring[e], ring[(e + 1) % 4]);
                    if inside(c0) != inside(c1) {
                        let (p0, p1) = (corner_pos(c0), corner_pos(c1));
                        let mid = [(p0[0] + p1[0]) / 2, (p0[1] + p1[1]) / 2, (p0[2] + p1[2]) / 2];
                        cross[e] = Some((mid, if inside(c0) { c0 } else { c1 }));
                    }
                }
                let hits: Vec<usize> = (0..4).filter(|&e| cross[e].is_some()).collect();
                let pairs: Vec<(usize, usize)> = match hits.len() {
                    0 => vec![],
                    2 => vec![(hits[0], hits[1])],
                    4 => {
                        // Separate the two inside corners: each inside corner
                        // ring[e] joins its incoming edge e-1 and outgoing edge e.
                        (0..4)
                            .filter(|&e| inside(ring[e]))
                            .map(|e| ((e + 3) % 4, e))
                            .collect()
                    }
                    _ => unreachable!("a face has an even number of crossings"),
                };
                for (ea, eb) in pairs {
                    let (pa, in_a) = cross[ea].unwrap();
                    let (pb, _) = cross[eb].unwrap();
                    let d = sub_i(pb, pa);
                    let nxd = cross_i(normal, d);
                    let towards_inside = sub_i(corner_pos(in_a), pa);
                    if dot_i(nxd, towards_inside) < 0 {
                        segments.push((pa, pb));
                    } else {
                        segments.push((pb, pa));
                    }
                }
            }
        }

        // Chain segments into loops.
        let mut next: HashMap<[i64; 3], [i64; 3]> = HashMap::with_capacity(segments.len());
        let mut order: Vec<[i64; 3]> = Vec::with_capacity(segments.len());
        for (a, b) in &segments {
            let prev = next.insert(*a, *b);
            debug_assert!(prev.is_none(), "vertex starts two segments");
            order.push(*a);
        }
        let mut used: std::collections::HashSet<[i64; 3]> = std::collections::HashSet::new();
        for start in order {
            if used.contains(&start) {
                continue;
            }
            let mut ring = vec![start];
            used.insert(start);
            let mut cur = next[&start];
            while cur != start {
                used.insert(cur);
                ring.push(cur);
                cur = next[&cur];
            }
            self.emit_loop(&ring);
        }
    }

    fn emit_loop(&mut self, ring: &[[i64; 3]]) {
        let ids: Vec<u32> = ring.iter().map(|&p| self.vertex(p)).collect();
        if ids.len() == 3 {
            self.triangles.push([ids[0], ids[1], ids[2]]);
            return;
        }
        let n = ring.len() as f64;
        let mut c = [0.0; 3];
        for p in ring {
            for a in 0..3 {
                c[a] += p[a] as f64;
            }
        }
        let c = c.map(|v| v / n);
        let cid = CENTROID_TAG - self.centroids.len() as u32;
        self.centroids.push(c);
        for w in 0..ids.len() {
            self.triangles.push([cid, ids[w], ids[(w + 1) % ids.len()]]);
        }
    }

    fn finish(self, spacing: [f64; 3]) -> SurfaceMesh {
        let n_lattice = self.lattice_pos.len();
        let mut vertices: Vec<[f64; 3]> = Vec::with_capacity(n_lattice + self.centroids.len());
        for p in &self.lattice_pos {
            vertices.push([
                p[0] as f64 * 0.5 * spacing[0],
                p[1] as f64 * 0.5 * spacing[1],
                p[2] as f64 * 0.5 * spacing[2],
            ]);
        }
        for c in &self.centroids {
            vertices.push([
                c[0] * 0.5 * spacing[0],
                c[1] * 0.5 * spacing[1],
                c[2] * 0.5 * spacing[2],
            ]);
        }
        let remap = |id: u32| -> u32 {
            if (id as usize) < n_lattice {
                id
            } else {
                (n_lattice + (CENTROID_TAG - id) as usize) as u32
            }
        };
        let triangles = self
            .triangles
            .into_iter()
            .map(|t| [remap(t[0]), remap(t[1]), remap(t[2])])
            .collect();
        SurfaceMesh {
            vertices,
            triangles,
            lattice_vertices: n_lattice,
        }
    }
}

fn sub_i(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross_i(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot_i(a: [i64; 3], b: [i64; 3]) -> i64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Geometry, Orientation};

    fn grid(dims: [usize; 3], s: f64) -> Geometry {
        Geometry::new(dims, [s; 3], Orientation::LAS, [0.0; 3]).unwrap()
    }

    #[test]
    fn single_voxel_gives_octahedron() {
        // Crossings sit half a voxel from the center along each axis: a
        // regular octahedron with circumradius 0.5.
        let mut m = VoxelMask::empty(grid([3, 3, 3], 1.0));
        m.set(1, 1, 1, true);
        let mesh = build_mesh(&m).unwrap();
        assert_eq!(mesh.vertices.len(), 6);
        assert_eq!(mesh.triangles.len(), 8);
        assert!((mesh.volume() - 1.0 / 6.0).abs() < 1e-12);
        assert!((mesh.area() - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(mesh.is_closed_and_oriented());
    }

    #[test]
    fn border_voxel_still_closes() {
        let mut m = VoxelMask::empty(grid([2, 2, 2], 2.0));
        m.set(0, 0, 0, true);
        let mesh = build_mesh(&m).unwrap();
        assert!(mesh.is_closed_and_oriented());
        assert!((mesh.volume() - 8.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn full_block_volume_and_area() {
        // 10^3 block: faces at the block boundary, edges and corners chamfered.
        let m = VoxelMask::from_fn(grid([12, 12, 12], 1.0), |i, j, k| {
            (1..11).contains(&i) && (1..11).contains(&j) && (1..11).contains(&k)
        });
        let mesh = build_mesh(&m).unwrap();
        assert!(mesh.is_closed_and_oriented());
        assert_eq!(mesh.euler_characteristic(), 2);
        // chamfer loses 12 edges * 9 * 0.125 plus 8 corner pieces
        let v = mesh.volume();
        assert!(v < 1000.0 && v > 1000.0 - 12.0 * 10.0 * 0.125 - 1.0, "{v}");
    }

    #[test]
    fn diagonal_voxels_stay_separate_surfaces() {
        let mut m = VoxelMask::empty(grid([4, 4, 4], 1.0));
        m.set(1, 1, 1, true);
        m.set(2, 2, 1, true);
        let mesh = build_mesh(&m).unwrap();
        assert!(mesh.is_closed_and_oriented());
        assert_eq!(mesh.euler_characteristic(), 4);
        assert!((mesh.volume() - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let m = VoxelMask::empty(grid([3, 3, 3], 1.0));
        assert!(build_mesh(&m).is_err());
    }
}
