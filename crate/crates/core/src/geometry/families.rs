//! Mesh generators for the three families used in the experiments:
//! randomly distorted quadrilateral meshes (RDQM), Voronoi meshes (VM), and
//! hanging-node triangle meshes (HTM). All are deterministic in the seed.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use super::mesh::Mesh;
use super::{Point2, Polygon};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdqmParams {
    /// Base grid is n×n cells on the unit square.
    pub n: usize,
    /// Max vertex offset as a fraction of the cell size; must stay below 0.5
    /// so neighboring vertices cannot swap.
    pub distortion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmParams {
    pub seeds: usize,
    pub lloyd_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtmParams {
    /// Base grid is n×n cells, each split into two triangles.
    pub n: usize,
    /// Probability that an edge receives hanging nodes.
    pub edge_probability: f64,
    /// Hanging-node count per selected edge is uniform in 1..=max_hanging.
    pub max_hanging: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshFamily {
    Rdqm(RdqmParams),
    Vm(VmParams),
    Htm(HtmParams),
}

pub fn generate_mesh(family: &MeshFamily, seed: u64) -> Result<Mesh> {
    match *family {
        MeshFamily::Rdqm(p) => rdqm(p, seed),
        MeshFamily::Vm(p) => vm(p, seed),
        MeshFamily::Htm(p) => htm(p, seed),
    }
}

/// Distorted quad mesh: Cartesian grid with interior vertices shifted by
/// uniform offsets in [-d·h, d·h]², re-drawn per vertex until the four
/// incident quads stay strictly convex.
pub fn rdqm(params: RdqmParams, seed: u64) -> Result<Mesh> {
    let RdqmParams { n, distortion } = params;
    if n == 0 {
        return Err(Error::MeshGeneration("rdqm needs n >= 1".into()));
    }
    if !(0.0..0.5).contains(&distortion) {
        return Err(Error::MeshGeneration(format!(
            "distortion {distortion} outside [0, 0.5)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = n + 1;
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * np + i;
    let mut vertices: Vec<Point2> = (0..np)
        .flat_map(|j| (0..np).map(move |i| Point2::new(i as f64 * h, j as f64 * h)))
        .collect();

    let quad_convex = |v: &[Point2], i: usize, j: usize| -> bool {
        let q = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
        (0..4).all(|k| {
            let a = v[q[(k + 1) % 4]] - v[q[k]];
            let b = v[q[(k + 2) % 4]] - v[q[(k + 1) % 4]];
            a.x * b.y - a.y * b.x > 1e-3 * h * h
        })
    };

    for j in 1..n {
        for i in 1..n {
            let base = vertices[idx(i, j)];
            let mut placed = distortion == 0.0;
            for _ in 0..200 {
                if placed {
                    break;
                }
                let dx = rng.random_range(-distortion..=distortion) * h;
                let dy = rng.random_range(-distortion..=distortion) * h;
                vertices[idx(i, j)] = base + Vector2::new(dx, dy);
                placed = (j.saturating_sub(1)..=j.min(n - 1))
                    .all(|b| (i.saturating_sub(1)..=i.min(n - 1)).all(|a| quad_convex(&vertices, a, b)));
            }
            if !placed {
                return Err(Error::MeshGeneration(format!(
                    "no convex placement for vertex ({i}, {j}) at distortion {distortion}"
                )));
            }
        }
    }

    let elements = (0..n)
        .flat_map(|j| {
            (0..n).map(move |i| vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)])
        })
        .collect();
    let boundary = (0..np)
        .flat_map(|j| (0..np).map(move |i| i == 0 || i == n || j == 0 || j == n))
        .collect();
    let hanging = vec![false; np * np];
    Mesh::new(vertices, elements, boundary, hanging)
}

/// Voronoi mesh of uniform random seed points in the unit square, clipped by
/// half-plane intersection, with optional Lloyd smoothing. Nearly coincident
/// cell corners are welded before assembly; degenerate draws are retried.
pub fn vm(params: VmParams, seed: u64) -> Result<Mesh> {
    if params.seeds < 2 {
        return Err(Error::MeshGeneration("vm needs at least 2 seeds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..20 {
        let mut sites: Vec<Point2> = (0..params.seeds)
            .map(|_| Point2::new(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        match voronoi_mesh(&mut sites, params.lloyd_iterations) {
            Ok(mesh) => return Ok(mesh),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::MeshGeneration(format!(
        "no valid voronoi mesh after 20 attempts: {}",
        last.expect("at least one attempt")
    )))
}

fn voronoi_mesh(sites: &mut [Point2], lloyd_iterations: usize) -> Result<Mesh> {
    for _ in 0..lloyd_iterations {
        let cells = voronoi_cells(sites)?;
        for (s, cell) in sites.iter_mut().zip(&cells) {
            *s = points_centroid(cell);
        }
    }
    let cells = voronoi_cells(sites)?;

    let flat: Vec<Point2> = cells.iter().flatten().copied().collect();
    let (vertices, rep_of) = weld_points(&flat, 1e-9);
    let mut elements = Vec::with_capacity(cells.len());
    let mut offset = 0;
    for cell in &cells {
        let mut cycle: Vec<usize> = cell.iter().enumerate().map(|(k, _)| rep_of[offset + k]).collect();
        offset += cell.len();
        cycle.dedup();
        while cycle.len() > 1 && cycle[0] == *cycle.last().unwrap() {
            cycle.pop();
        }
        if cycle.len() < 3 {
            return Err(Error::MeshGeneration("cell collapsed under welding".into()));
        }
        elements.push(cycle);
    }

    let on_border = |p: Point2| {
        p.x.abs() < 1e-9 || (p.x - 1.0).abs() < 1e-9 || p.y.abs() < 1e-9 || (p.y - 1.0).abs() < 1e-9
    };
    let boundary: Vec<bool> = vertices.iter().map(|&p| on_border(p)).collect();
    let hanging = vec![false; vertices.len()];
    Mesh::new(vertices, elements, boundary, hanging)
}

/// Voronoi cell of each site: the unit square cut by the bisector half-plane
/// against every other site.
fn voronoi_cells(sites: &[Point2]) -> Result<Vec<Vec<Point2>>> {
    let square = vec![
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ];
    sites
        .iter()
        .map(|&s| {
            let mut cell = square.clone();
            for &t in sites {
                let dir = s - t;
                if dir.norm_squared() < 1e-24 {
                    if s == t {
                        continue;
                    }
                    return Err(Error::MeshGeneration("coincident seed points".into()));
                }
                let mid = Point2::from(0.5 * (s.coords + t.coords));
                cell = clip_halfplane(&cell, mid, dir);
                if cell.len() < 3 {
                    return Err(Error::MeshGeneration("empty voronoi cell".into()));
                }
            }
            Ok(cell)
        })
        .collect()
}

/// Sutherland–Hodgman step: keep the region (x - p0)·normal >= 0.
fn clip_halfplane(poly: &[Point2], p0: Point2, normal: Vector2<f64>) -> Vec<Point2> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let da = (a - p0).dot(&normal);
        let db = (b - p0).dot(&normal);
        if da >= 0.0 {
            out.push(a);
            if db < 0.0 {
                out.push(a + (b - a) * (da / (da - db)));
            }
        } else if db >= 0.0 {
            out.push(a + (b - a) * (da / (da - db)));
        }
    }
    out.dedup_by(|a, b| (*a - *b).norm() < 1e-13);
    while out.len() > 1 && (out[0] - *out.last().unwrap()).norm() < 1e-13 {
        out.pop();
    }
    out
}

fn points_centroid(pts: &[Point2]) -> Point2 {
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..pts.len() {
        let a = pts[k];
        let b = pts[(k + 1) % pts.len()];
        let w = a.x * b.y - b.x * a.y;
        area2 += w;
        cx += (a.x + b.x) * w;
        cy += (a.y + b.y) * w;
    }
    Point2::new(cx / (3.0 * area2), cy / (3.0 * area2))
}

/// Merges points closer than `tol`; returns representatives (in x-then-y
/// sorted order) and the representative index of every input point.
fn weld_points(points: &[Point2], tol: f64) -> (Vec<Point2>, Vec<usize>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .x
            .total_cmp(&points[b].x)
            .then(points[a].y.total_cmp(&points[b].y))
    });
    let mut reps: Vec<Point2> = Vec::new();
    let mut rep_of = vec![usize::MAX; points.len()];
    for &oi in &order {
        let p = points[oi];
        let mut found = None;
        for (r, q) in reps.iter().enumerate().rev() {
            if p.x - q.x > tol {
                break;
            }
            if (p - q).norm() <= tol {
                found = Some(r);
                break;
            }
        }
        rep_of[oi] = found.unwrap_or_else(|| {
            reps.push(p);
            reps.len() - 1
        });
    }
    (reps, rep_of)
}

/// Triangle mesh with hanging nodes: structured triangulation of the unit
/// square where a random subset of edges receives 1..=max_hanging equispaced
/// hanging nodes, inserted into the cycles of both adjacent elements.
pub fn htm(params: HtmParams, seed: u64) -> Result<Mesh> {
    let HtmParams {
        n,
        edge_probability,
        max_hanging,
    } = params;
    if n == 0 {
        return Err(Error::MeshGeneration("htm needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&edge_probability) {
        return Err(Error::MeshGeneration(format!(
            "edge probability {edge_probability} outside [0, 1]"
        )));
    }
    if !(1..=10).contains(&max_hanging) {
        return Err(Error::MeshGeneration(format!(
            "max hanging {max_hanging} outside 1..=10"
        )));
    }
    let np = n + 1;
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * np + i;
    let mut vertices: Vec<Point2> = (0..np)
        .flat_map(|j| (0..np).map(move |i| Point2::new(i as f64 * h, j as f64 * h)))
        .collect();
    let mut hanging = vec![false; vertices.len()];

    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    // Hanging nodes per undirected edge, ordered from the lower-index
    // endpoint. BTreeMap keeps the RNG consumption order stable.
    let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default();
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ((a, b), nodes) in edges.iter_mut() {
        if rng.random::<f64>() >= edge_probability {
            continue;
        }
        let count = rng.random_range(1..=max_hanging);
        let (pa, pb) = (vertices[*a], vertices[*b]);
        for m in 1..=count {
            let t = m as f64 / (count + 1) as f64;
            vertices.push(pa + (pb - pa) * t);
            hanging.push(true);
            nodes.push(vertices.len() - 1);
        }
    }

    let elements = triangles
        .iter()
        .map(|t| {
            let mut cycle = Vec::with_capacity(3 + 3 * max_hanging);
            for k in 0..3 {
                let (u, v) = (t[k], t[(k + 1) % 3]);
                cycle.push(u);
                let nodes = &edges[&(u.min(v), u.max(v))];
                if u < v {
                    cycle.extend(nodes.iter().copied());
                } else {
                    cycle.extend(nodes.iter().rev().copied());
                }
            }
            cycle
        })
        .collect();

    let on_border = |p: Point2| {
        p.x.abs() < 1e-12 || (p.x - 1.0).abs() < 1e-12 || p.y.abs() < 1e-12 || (p.y - 1.0).abs() < 1e-12
    };
    let boundary = vertices.iter().map(|&p| on_border(p)).collect();
    Mesh::new(vertices, elements, boundary, hanging)
}

/// CCW convex quadrilateral through four points in convex position (sorted
/// around their mean), or None if any corner is degenerate or reflex.
pub fn convex_hull_quad(pts: &[Point2]) -> Option<Polygon> {
    if pts.len() != 4 {
        return None;
    }
    let c = Point2::from(pts.iter().map(|p| p.coords).sum::<Vector2<f64>>() / 4.0);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| {
        let pa = pts[a] - c;
        let pb = pts[b] - c;
        pa.y.atan2(pa.x).total_cmp(&pb.y.atan2(pb.x))
    });
    let q: Vec<Point2> = order.iter().map(|&k| pts[k]).collect();
    let scale: f64 = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .map(|(i, j)| (q[i] - q[j]).norm_squared())
        .fold(0.0, f64::max);
    let convex = (0..4).all(|k| {
        let a = q[(k + 1) % 4] - q[k];
        let b = q[(k + 2) % 4] - q[(k + 1) % 4];
        a.x * b.y - a.y * b.x > 1e-9 * scale
    });
    if !convex {
        return None;
    }
    Polygon::new(q).ok()
}
