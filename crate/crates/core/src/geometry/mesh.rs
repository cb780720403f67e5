//! Conforming polygonal meshes: vertex coordinates, CCW element cycles,
//! boundary and hanging-node flags.
//!
//! A hanging node is stored as an ordinary mesh vertex; the elements on both
//! sides of the host edge carry it in their cycles, so every interior
//! (sub-)edge is shared by exactly two elements and the usual conformity
//! bookkeeping applies unchanged.

use std::collections::HashMap;

use super::{
    inertial_map, polygon_metrics, reference_triangle, AffineMap, Point2, Polygon,
    PolygonMetrics,
};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point2>,
    elements: Vec<Vec<usize>>,
    boundary: Vec<bool>,
    hanging: Vec<bool>,
    h: f64,
}

impl Mesh {
    /// Validates the full set of mesh invariants:
    /// - every element is a valid polygon (CCW, simple, distinct vertices),
    /// - every directed edge appears at most once, every undirected edge in
    ///   at most two elements,
    /// - a vertex is flagged boundary exactly when it touches an edge owned
    ///   by a single element,
    /// - every vertex is referenced by some element.
    pub fn new(
        vertices: Vec<Point2>,
        elements: Vec<Vec<usize>>,
        boundary: Vec<bool>,
        hanging: Vec<bool>,
    ) -> Result<Self> {
        let nv = vertices.len();
        if boundary.len() != nv || hanging.len() != nv {
            return Err(Error::InvalidMesh(format!(
                "flag arrays ({}, {}) do not match {} vertices",
                boundary.len(),
                hanging.len(),
                nv
            )));
        }
        let mut referenced = vec![false; nv];
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut h = 0.0f64;
        for (e, cycle) in elements.iter().enumerate() {
            for &i in cycle {
                if i >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} references vertex {i} of {nv}"
                    )));
                }
                referenced[i] = true;
            }
            let poly = element_polygon_raw(&vertices, &hanging, cycle)
                .map_err(|err| Error::InvalidMesh(format!("element {e}: {err}")))?;
            h = h.max(poly.diameter());
            for k in 0..cycle.len() {
                let a = cycle[k];
                let b = cycle[(k + 1) % cycle.len()];
                if directed.insert((a, b), e).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "directed edge {a}->{b} appears twice (element {e})"
                    )));
                }
            }
        }
        if let Some(i) = referenced.iter().position(|&r| !r) {
            return Err(Error::InvalidMesh(format!("vertex {i} is unreferenced")));
        }
        let mut on_boundary = vec![false; nv];
        for (&(a, b), _) in directed.iter() {
            match directed.get(&(b, a)) {
                Some(_) => {}
                None => {
                    on_boundary[a] = true;
                    on_boundary[b] = true;
                }
            }
        }
        for i in 0..nv {
            if boundary[i] != on_boundary[i] {
                return Err(Error::InvalidMesh(format!(
                    "vertex {i}: boundary flag {} but adjacency says {}",
                    boundary[i], on_boundary[i]
                )));
            }
        }
        Ok(Mesh {
            vertices,
            elements,
            boundary,
            hanging,
            h,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertex(&self, i: usize) -> Point2 {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e]
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn is_hanging(&self, i: usize) -> bool {
        self.hanging[i]
    }

    /// Max element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn element_polygon(&self, e: usize) -> Polygon {
        element_polygon_raw(&self.vertices, &self.hanging, &self.elements[e])
            .expect("validated at construction")
    }

    pub fn statistics(&self) -> Result<MeshStatistics> {
        let mut nv = (usize::MAX, 0);
        let mut raw = MetricRanges::empty();
        let mut mapped = MetricRanges::empty();
        for e in 0..self.n_elements() {
            let poly = self.element_polygon(e);
            nv.0 = nv.0.min(poly.nv());
            nv.1 = nv.1.max(poly.nv());
            raw.absorb(&polygon_metrics(&poly)?);
            mapped.absorb(&reference_frame_metrics(&poly)?);
        }
        Ok(MeshStatistics {
            elements: self.n_elements(),
            nv,
            raw,
            mapped,
        })
    }
}

fn element_polygon_raw(
    vertices: &[Point2],
    hanging: &[bool],
    cycle: &[usize],
) -> Result<Polygon> {
    Polygon::with_hanging(
        cycle.iter().map(|&i| vertices[i]).collect(),
        cycle.iter().map(|&i| hanging[i]).collect(),
    )
}

/// Element metrics in the frame the predictors see the element in: triangles
/// (after stripping hanging nodes) are mapped onto the reference equilateral
/// triangle, everything else through its inertial map. Triangle rows of a
/// statistics table therefore show constant area/diameter 1.30/1.73, general
/// rows constant diameter 1.00.
pub fn reference_frame_metrics(p: &Polygon) -> Result<PolygonMetrics> {
    let corners: Vec<Point2> = (0..p.nv())
        .filter(|&i| !p.is_hanging(i))
        .map(|i| p.vertex(i))
        .collect();
    let map = if corners.len() == 3 {
        AffineMap::from_triangles(
            &[corners[0], corners[1], corners[2]],
            &reference_triangle(),
        )?
    } else {
        inertial_map(p)?
    };
    polygon_metrics(&map.map_polygon(p)?)
}

#[derive(Debug, Clone, Copy)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MetricRanges {
    pub area: Range,
    pub diameter: Range,
    pub anisotropic_ratio: Range,
    pub edge_ratio: Range,
}

impl MetricRanges {
    fn empty() -> Self {
        let r = Range {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        MetricRanges {
            area: r,
            diameter: r,
            anisotropic_ratio: r,
            edge_ratio: r,
        }
    }

    fn absorb(&mut self, m: &PolygonMetrics) {
        let take = |r: &mut Range, v: f64| {
            r.min = r.min.min(v);
            r.max = r.max.max(v);
        };
        take(&mut self.area, m.area);
        take(&mut self.diameter, m.diameter);
        take(&mut self.anisotropic_ratio, m.anisotropic_ratio);
        take(&mut self.edge_ratio, m.edge_ratio);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MeshStatistics {
    pub elements: usize,
    pub nv: (usize, usize),
    pub raw: MetricRanges,
    pub mapped: MetricRanges,
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two unit squares sharing one edge.
    fn two_quads() -> (Vec<Point2>, Vec<Vec<usize>>, Vec<bool>, Vec<bool>) {
        let vertices = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 1.0),
        ];
        let elements = vec![vec![0, 1, 4, 3], vec![1, 2, 5, 4]];
        let boundary = vec![true; 6];
        let hanging = vec![false; 6];
        (vertices, elements, boundary, hanging)
    }

    #[test]
    fn accepts_conforming_mesh() {
        let (v, e, b, hg) = two_quads();
        let mesh = Mesh::new(v, e, b, hg).unwrap();
        assert_eq!(mesh.n_elements(), 2);
        assert!((mesh.h() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mesh.element_polygon(1).nv(), 4);
    }

    #[test]
    fn rejects_orientation_and_flag_defects() {
        let (v, mut e, b, hg) = two_quads();
        e[1].reverse();
        assert!(matches!(
            Mesh::new(v, e, b, hg),
            Err(Error::InvalidMesh(_))
        ));

        let (v, e, mut b, hg) = two_quads();
        b[4] = false;
        assert!(matches!(
            Mesh::new(v, e, b, hg),
            Err(Error::InvalidMesh(_))
        ));

        // A T-junction without a matching hanging vertex in the neighbor
        // leaves a once-counted edge with an interior endpoint.
        let vertices = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 0.5),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
        ];
        let elements = vec![vec![0, 1, 2, 3, 4], vec![1, 5, 6, 3]];
        let boundary = vec![true, true, false, true, true, true, true];
        let hanging = vec![false; 7];
        assert!(matches!(
            Mesh::new(vertices, elements, boundary, hanging),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn reference_frame_is_equilateral_for_stripped_triangles() {
        // Scalene triangle with one hanging node 60% along its first edge:
        // mapped metrics must be the reference equilateral constants, the
        // edge ratio is seen on the sub-edges (√3 over 0.4·√3).
        let c0 = Point2::new(0.0, 0.0);
        let c1 = Point2::new(2.6, 0.4);
        let c2 = Point2::new(0.7, 2.2);
        let p = Polygon::with_hanging(
            vec![c0, c0 + 0.6 * (c1 - c0), c1, c2],
            vec![false, true, false, false],
        )
        .unwrap();
        let m = reference_frame_metrics(&p).unwrap();
        assert!((m.area - 3.0 * 3f64.sqrt() / 4.0).abs() < 1e-12);
        assert!((m.diameter - 3f64.sqrt()).abs() < 1e-12);
        assert!((m.anisotropic_ratio - 1.0).abs() < 1e-10);
        assert!((m.edge_ratio - 2.5).abs() < 1e-12);
    }
}
