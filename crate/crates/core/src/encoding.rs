//! The ENCODE stage: polygon classification and the frame-invariant inputs
//! fed to the coefficient networks.
//!
//! General elements are normalized by the inertial map followed by vertex
//! alignment, leaving the 2(N_v - 1) coordinates of the non-aligned vertices
//! as the input. Triangle-shaped elements with hanging nodes take a cheaper
//! route: hanging nodes not adjacent to the target vertex are dropped, the
//! remaining element is mapped onto a reference equilateral triangle, and
//! only the curvilinear coordinates of the kept hanging nodes survive.

use nalgebra::Vector2;

use crate::geometry::{
    inertial_map, reference_triangle, vertex_alignment_map, AffineMap, Point2, Polygon,
};
use crate::{Error, Result};

/// Minimum curvilinear gap between consecutive boundary nodes used when
/// sampling training elements; closer pairs are flagged at encode time as
/// out-of-distribution.
pub const TRAINING_SPACING_FLOOR: f64 = 1e-2;

/// Relative tolerance (times the diameter) for a flagged vertex to count as
/// lying on the segment between its neighbouring corners.
pub const COLLINEARITY_TOL: f64 = 1e-9;

/// Classes with distinct coefficient networks.
///
/// The class of a hanging-node triangle depends on the target vertex, so the
/// same element can dispatch to different networks for different `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolygonClass {
    /// Triangle without hanging nodes: exact barycentric hats, no network.
    PlainTriangle,
    /// Triangle-shaped element with hanging nodes. The payload is the row
    /// 1..=6 of the corner/hanging pattern of (v_{j-1}, v_j, v_{j+1}) after
    /// reflection normalization; row 6 is served in closed form.
    HangingTriangle(u8),
    /// General element with n >= 4 vertices, hanging nodes included.
    NvClass(usize),
}

impl PolygonClass {
    /// Length of `x0_coef` for this class, `None` when no network is used.
    pub fn input_dim(&self) -> Option<usize> {
        match *self {
            PolygonClass::PlainTriangle | PolygonClass::HangingTriangle(6) => None,
            PolygonClass::HangingTriangle(c) => Some(match c {
                1 | 2 => 1,
                3 | 5 => 2,
                _ => 3,
            }),
            PolygonClass::NvClass(n) => Some(2 * (n - 1)),
        }
    }

    /// Short stable tag used in model registries and file names.
    pub fn label(&self) -> String {
        match *self {
            PolygonClass::PlainTriangle => "T".into(),
            PolygonClass::HangingTriangle(c) => format!("H{c}"),
            PolygonClass::NvClass(n) => format!("N{n}"),
        }
    }
}

/// Network-frame description of a pair (element, target vertex).
#[derive(Debug, Clone)]
pub struct EncodedInput {
    /// Frame-invariant coordinates: 2(N_v - 1) vertex coordinates for a
    /// general element, 1 to 3 curvilinear coordinates for a hanging-node
    /// triangle, empty on the closed-form paths.
    pub x0_coef: Vec<f64>,
    /// Physical element to network frame.
    pub frame: AffineMap,
    /// True when the frame mirrors the element so the hanging-node pattern
    /// matches its canonical table row.
    pub reflection_applied: bool,
    /// Hanging nodes closer than [`TRAINING_SPACING_FLOOR`]: the networks
    /// never saw such inputs, so predictions may degrade.
    pub out_of_distribution: bool,
}

/// A hanging-node triangle after input reduction: among the hanging nodes
/// only `v_{j-1}`, `v_j`, `v_{j+1}` survive, so the element has at most six
/// vertices.
#[derive(Debug, Clone)]
pub struct ReducedTriangle {
    pub element: Polygon,
    /// Index of the target vertex within `element`.
    pub j: usize,
    /// Configuration row 1..=6.
    pub config: u8,
    /// Whether matching the canonical row requires mirroring the element.
    pub reflection: bool,
}

/// Class of the pair `(e, j)`.
pub fn classify(e: &Polygon, j: usize) -> Result<PolygonClass> {
    let corners = (0..e.nv()).filter(|&i| !e.is_hanging(i)).count();
    if corners < 3 {
        return Err(Error::InconsistentHangingFlags(format!(
            "only {corners} corners remain after stripping hanging nodes"
        )));
    }
    validate_hanging_flags(e)?;
    if e.nv() == 3 {
        return Ok(PolygonClass::PlainTriangle);
    }
    if corners == 3 {
        let (config, _) = configuration(pattern(e, j));
        return Ok(PolygonClass::HangingTriangle(config));
    }
    Ok(PolygonClass::NvClass(e.nv()))
}

/// Classify and encode in one step. Plain triangles produce an identity
/// frame and an empty input (their hats are evaluated in closed form on the
/// physical element).
pub fn encode(e: &Polygon, j: usize) -> Result<(PolygonClass, EncodedInput)> {
    let class = classify(e, j)?;
    let input = match class {
        PolygonClass::PlainTriangle => EncodedInput {
            x0_coef: Vec::new(),
            frame: AffineMap::identity(),
            reflection_applied: false,
            out_of_distribution: false,
        },
        PolygonClass::HangingTriangle(_) => {
            let red = reduce_hanging_triangle(e, j)?;
            encode_hanging_triangle(&red.element, red.j, red.config)?
        }
        PolygonClass::NvClass(_) => encode_general(e, j)?,
    };
    Ok((class, input))
}

/// Inertial + alignment encoding for general elements. The frame sends the
/// element to its normalized pose with `v_j` at (1, 0); the input lists the
/// coordinates of the remaining vertices in cyclic order from `v_{j+1}`,
/// the aligned vertex itself being fixed and therefore omitted.
pub fn encode_general(e: &Polygon, j: usize) -> Result<EncodedInput> {
    let inertial = inertial_map(e)?;
    let aligned = vertex_alignment_map(&inertial.map_polygon(e)?, j)?;
    let frame = aligned.compose(&inertial);
    let n = e.nv();
    let mut x0 = Vec::with_capacity(2 * (n - 1));
    for k in 1..n {
        let q = frame.apply(e.vertex((j + k) % n));
        x0.push(q.x);
        x0.push(q.y);
    }
    Ok(EncodedInput {
        x0_coef: x0,
        frame,
        reflection_applied: false,
        out_of_distribution: false,
    })
}

/// Drop every hanging node except `v_{j-1}`, `v_j`, `v_{j+1}`. The target
/// basis function solves the same Laplace problem on the reduced element,
/// so the dropped nodes carry no information about its shape.
pub fn reduce_hanging_triangle(e: &Polygon, j: usize) -> Result<ReducedTriangle> {
    match classify(e, j)? {
        PolygonClass::HangingTriangle(_) => {}
        c => {
            return Err(Error::Mismatch(format!(
                "input reduction needs a hanging-node triangle, got class {}",
                c.label()
            )))
        }
    }
    let prev = e.prev_idx(j);
    let next = e.next_idx(j);
    let mut verts = Vec::new();
    let mut flags = Vec::new();
    let mut jp = usize::MAX;
    for i in 0..e.nv() {
        if e.is_hanging(i) && i != j && i != prev && i != next {
            continue;
        }
        if i == j {
            jp = verts.len();
        }
        verts.push(e.vertex(i));
        flags.push(e.is_hanging(i));
    }
    let element = Polygon::with_hanging(verts, flags)?;
    let (config, reflection) = configuration(pattern(&element, jp));
    Ok(ReducedTriangle {
        element,
        j: jp,
        config,
        reflection,
    })
}

/// Map a reduced element onto the reference equilateral triangle and read
/// off the curvilinear coordinates of its hanging nodes.
///
/// Rows 1 to 4 put every hanging node on the vertical edge, traversed bottom
/// to top; row 5 puts `v_j` at the bottom vertex with one hanging node on
/// each incident edge (the one before `v_j` first); row 6 maps `v_j` to
/// (-1, 0) and encodes nothing.
pub fn encode_hanging_triangle(ep: &Polygon, j: usize, config: u8) -> Result<EncodedInput> {
    let corners = (0..ep.nv()).filter(|&i| !ep.is_hanging(i)).count();
    if corners != 3 {
        return Err(Error::Mismatch(format!(
            "expected a reduced triangle with 3 corners, found {corners}"
        )));
    }
    let (derived, reflection) = configuration(pattern(ep, j));
    if derived != config {
        return Err(Error::Mismatch(format!(
            "configuration {config} requested but the element matches row {derived}"
        )));
    }
    if config == 6 && ep.nv() != 3 {
        return Err(Error::Mismatch(
            "row 6 needs the reduced plain triangle; reduce first".into(),
        ));
    }
    let [a0, bot, top] = reference_triangle();
    let prev = ep.prev_idx(j);
    let next = ep.next_idx(j);
    // Corner images in the order ((-1, 0), bottom, top). The assignment pins
    // every kept hanging node onto its reference edge.
    let from = match (config, reflection) {
        (1, false) => [prev, j, corner_from(ep, next, false)],
        (1, true) => [next, j, corner_from(ep, prev, true)],
        (2, false) => [third_corner(ep, prev, next)?, prev, next],
        (3, false) => {
            let c = corner_from(ep, next, false);
            [third_corner(ep, prev, c)?, prev, c]
        }
        (3, true) => {
            let a = corner_from(ep, prev, true);
            [third_corner(ep, next, a)?, next, a]
        }
        (4, false) => {
            let a = corner_from(ep, prev, true);
            let c = corner_from(ep, next, false);
            [third_corner(ep, a, c)?, a, c]
        }
        (5, false) => [corner_from(ep, prev, true), j, corner_from(ep, next, false)],
        (6, false) => [j, next, prev],
        _ => unreachable!("configuration table is exhaustive"),
    };
    let frame = AffineMap::from_triangles(
        &[ep.vertex(from[0]), ep.vertex(from[1]), ep.vertex(from[2])],
        &[a0, bot, top],
    )?;
    let vertical = |i: usize| edge_param(frame.apply(ep.vertex(i)), bot, top);
    let leading = |i: usize| edge_param(frame.apply(ep.vertex(i)), a0, bot);
    let x0_coef = match (config, reflection) {
        (1, false) => vec![vertical(next)?],
        (1, true) => vec![vertical(prev)?],
        (2, false) => vec![vertical(j)?],
        (3, false) => vec![vertical(j)?, vertical(next)?],
        (3, true) => vec![vertical(j)?, vertical(prev)?],
        (4, false) => vec![vertical(prev)?, vertical(j)?, vertical(next)?],
        (5, false) => vec![leading(prev)?, vertical(next)?],
        _ => Vec::new(),
    };
    if matches!(config, 3 | 4) && x0_coef.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InconsistentHangingFlags(
            "hanging nodes out of order along their edge".into(),
        ));
    }
    // Row 5 places its two nodes on different edges, so only the distance
    // to the endpoints counts; elsewhere inter-node gaps count too.
    let out_of_distribution = if config == 5 {
        x0_coef
            .iter()
            .any(|&t| t < TRAINING_SPACING_FLOOR || 1.0 - t < TRAINING_SPACING_FLOOR)
    } else {
        !x0_coef.is_empty() && gaps_below_floor(&x0_coef)
    };
    Ok(EncodedInput {
        x0_coef,
        frame,
        reflection_applied: reflection,
        out_of_distribution,
    })
}

/// Rebuild the reference element a coefficient vector describes, together
/// with the index of the target vertex in it. This is the element the
/// networks are trained on and the one the solver evaluates predictions on.
pub fn reference_element(config: u8, x0_coef: &[f64]) -> Result<(Polygon, usize)> {
    let expected = match config {
        1 | 2 => 1,
        3 | 5 => 2,
        4 => 3,
        6 => 0,
        _ => {
            return Err(Error::Mismatch(format!(
                "no configuration row {config}"
            )))
        }
    };
    if x0_coef.len() != expected {
        return Err(Error::Mismatch(format!(
            "row {config} takes {expected} coordinates, got {}",
            x0_coef.len()
        )));
    }
    if x0_coef.iter().any(|&t| t <= 0.0 || t >= 1.0) {
        return Err(Error::Mismatch(
            "curvilinear coordinates must lie strictly inside (0, 1)".into(),
        ));
    }
    if matches!(config, 3 | 4) && x0_coef.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Mismatch(
            "coordinates on a shared edge must increase strictly".into(),
        ));
    }
    let [a0, bot, top] = reference_triangle();
    let vt = |t: f64| bot + (top - bot) * t;
    let (verts, flags, j) = match config {
        1 => (
            vec![a0, bot, vt(x0_coef[0]), top],
            vec![false, false, true, false],
            1,
        ),
        2 => (
            vec![a0, bot, vt(x0_coef[0]), top],
            vec![false, false, true, false],
            2,
        ),
        3 => (
            vec![a0, bot, vt(x0_coef[0]), vt(x0_coef[1]), top],
            vec![false, false, true, true, false],
            2,
        ),
        4 => (
            vec![a0, bot, vt(x0_coef[0]), vt(x0_coef[1]), vt(x0_coef[2]), top],
            vec![false, false, true, true, true, false],
            3,
        ),
        5 => (
            vec![a0, a0 + (bot - a0) * x0_coef[0], bot, vt(x0_coef[1]), top],
            vec![false, true, false, true, false],
            2,
        ),
        _ => (vec![a0, bot, top], vec![false, false, false], 0),
    };
    Ok((Polygon::with_hanging(verts, flags)?, j))
}

/// The three affine hat functions of the reference equilateral triangle,
/// associated with (-1, 0), (0.5, -sqrt(3)/2), (0.5, sqrt(3)/2) in order.
pub fn config6_basis(p: Point2) -> [f64; 3] {
    let s3 = 3f64.sqrt();
    [
        (1.0 - 2.0 * p.x) / 3.0,
        (p.x - s3 * p.y + 1.0) / 3.0,
        (p.x + s3 * p.y + 1.0) / 3.0,
    ]
}

/// Constant gradients of [`config6_basis`].
pub fn config6_gradients() -> [Vector2<f64>; 3] {
    let s3 = 3f64.sqrt();
    [
        Vector2::new(-2.0 / 3.0, 0.0),
        Vector2::new(1.0 / 3.0, -s3 / 3.0),
        Vector2::new(1.0 / 3.0, s3 / 3.0),
    ]
}

/// Hanging pattern of (v_{j-1}, v_j, v_{j+1}).
fn pattern(e: &Polygon, j: usize) -> (bool, bool, bool) {
    (
        e.is_hanging(e.prev_idx(j)),
        e.is_hanging(j),
        e.is_hanging(e.next_idx(j)),
    )
}

/// Table row and reflection flag for a hanging pattern. Asymmetric patterns
/// fold onto rows 1 and 3 by mirroring; the mirrored twin of a palindromic
/// pattern is again of its own row, so those never reflect.
fn configuration(pat: (bool, bool, bool)) -> (u8, bool) {
    match pat {
        (false, false, false) => (6, false),
        (false, false, true) => (1, false),
        (true, false, false) => (1, true),
        (false, true, false) => (2, false),
        (false, true, true) => (3, false),
        (true, true, false) => (3, true),
        (true, true, true) => (4, false),
        (true, false, true) => (5, false),
    }
}

/// First non-hanging index scanning from `start` inclusive.
fn corner_from(e: &Polygon, start: usize, backward: bool) -> usize {
    let n = e.nv();
    let mut i = start;
    for _ in 0..n {
        if !e.is_hanging(i) {
            return i;
        }
        i = if backward { (i + n - 1) % n } else { (i + 1) % n };
    }
    unreachable!("callers guarantee at least one corner");
}

/// The corner index distinct from both arguments.
fn third_corner(e: &Polygon, i1: usize, i2: usize) -> Result<usize> {
    (0..e.nv())
        .find(|&i| !e.is_hanging(i) && i != i1 && i != i2)
        .ok_or_else(|| Error::InconsistentHangingFlags("no third corner found".into()))
}

/// Parameter of `p` along the segment `a -> b`, rejecting points that are
/// off the segment or outside it. The 1e-6 slack absorbs the frame map
/// applied to the collinearity tolerance.
fn edge_param(p: Point2, a: Point2, b: Point2) -> Result<f64> {
    let ab = b - a;
    let t = (p - a).dot(&ab) / ab.norm_squared();
    let off = (p - (a + ab * t)).norm();
    if off > 1e-6 || t <= 0.0 || t >= 1.0 {
        return Err(Error::InconsistentHangingFlags(format!(
            "mapped hanging node misses its reference edge (offset {off:.3e}, t = {t:.3})"
        )));
    }
    Ok(t)
}

/// True when consecutive nodes along one edge, endpoints included, are
/// closer than the training floor. Input sorted ascending.
fn gaps_below_floor(ts: &[f64]) -> bool {
    let mut last = 0.0;
    for &t in ts {
        if t - last < TRAINING_SPACING_FLOOR {
            return true;
        }
        last = t;
    }
    1.0 - last < TRAINING_SPACING_FLOOR
}

/// Flagged vertices must sit strictly between their neighbouring corners,
/// within [`COLLINEARITY_TOL`] times the diameter.
fn validate_hanging_flags(e: &Polygon) -> Result<()> {
    let tol = COLLINEARITY_TOL * e.diameter();
    for i in 0..e.nv() {
        if !e.is_hanging(i) {
            continue;
        }
        let a = e.vertex(corner_from(e, e.prev_idx(i), true));
        let b = e.vertex(corner_from(e, e.next_idx(i), false));
        let ab = b - a;
        let t = (e.vertex(i) - a).dot(&ab) / ab.norm_squared();
        let off = (e.vertex(i) - (a + ab * t)).norm();
        if off > tol || t <= 0.0 || t >= 1.0 {
            return Err(Error::InconsistentHangingFlags(format!(
                "vertex {i} sits {off:.3e} off the segment between its corners"
            )));
        }
    }
    Ok(())
}
