use std::fmt;

/// Crate-wide error type. Construction sites attach enough context to act on
/// (which artifact is missing, which polygon is degenerate, ...).
#[derive(Debug)]
pub enum Error {
    /// Polygon violates a structural invariant (too few vertices, CW order,
    /// self-intersection, duplicate vertices, near-zero area).
    DegeneratePolygon(String),
    /// Interior quadrature requested on a polygon that is not star-shaped
    /// with respect to its centroid.
    NotStarShaped(String),
    /// Affine map with |det| <= 1e-14.
    SingularMap(String),
    /// Vertex alignment requested for a vertex at the origin.
    VertexAtOrigin,
    /// Mesh connectivity or flag invariant failed validation.
    InvalidMesh(String),
    /// Mesh generator could not satisfy its constraints (retries exhausted).
    MeshGeneration(String),
    /// Orthonormalization or least-squares ran into rank deficiency.
    RankDeficient(String),
    /// The Phi boundary fit residual exceeded the rescue threshold.
    PhiFit { residual: f64 },
    /// Mapped-Phi containment check failed after scale escalation.
    Containment(String),
    /// Evaluation point coincides with a pole of a mapped Phi member.
    PoleProximity,
    /// Hanging flags disagree with the geometry (flagged vertex off its edge).
    InconsistentHangingFlags(String),
    /// A model, class, or shape does not match what the operation needs.
    Mismatch(String),
    /// No trained model available for a polygon class present in the mesh.
    MissingModel(String),
    /// Training diverged (non-finite loss).
    TrainingDiverged(String),
    /// Requested training variant is declared but not implemented.
    UnsupportedVariant(&'static str),
    /// Linear system singular or solve failed.
    SingularSystem(String),
    /// Newton iteration exhausted its budget; residual history attached.
    NewtonDidNotConverge { iterations: usize, history: Vec<f64> },
    /// Text artifact malformed or wrong version.
    Format(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegeneratePolygon(s) => write!(f, "degenerate polygon: {s}"),
            Error::NotStarShaped(s) => write!(f, "not star-shaped w.r.t. centroid: {s}"),
            Error::SingularMap(s) => write!(f, "singular affine map: {s}"),
            Error::VertexAtOrigin => write!(f, "cannot align a vertex located at the origin"),
            Error::InvalidMesh(s) => write!(f, "invalid mesh: {s}"),
            Error::MeshGeneration(s) => write!(f, "mesh generation failed: {s}"),
            Error::RankDeficient(s) => write!(f, "rank-deficient system: {s}"),
            Error::PhiFit { residual } => {
                write!(f, "Phi boundary fit residual {residual:.3e} exceeds tolerance")
            }
            Error::Containment(s) => write!(f, "element not contained in mapped Phi square: {s}"),
            Error::PoleProximity => write!(f, "evaluation point within 1e-12 of a Phi pole"),
            Error::InconsistentHangingFlags(s) => write!(f, "inconsistent hanging flags: {s}"),
            Error::Mismatch(s) => write!(f, "mismatch: {s}"),
            Error::MissingModel(s) => write!(f, "missing model for class {s}"),
            Error::TrainingDiverged(s) => write!(f, "training diverged: {s}"),
            Error::UnsupportedVariant(s) => write!(f, "training variant not implemented: {s}"),
            Error::SingularSystem(s) => write!(f, "singular linear system: {s}"),
            Error::NewtonDidNotConverge { iterations, .. } => {
                write!(f, "Newton did not converge within {iterations} iterations")
            }
            Error::Format(s) => write!(f, "format error: {s}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
