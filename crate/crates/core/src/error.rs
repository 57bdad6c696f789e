use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported spatial dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("unsupported polynomial degree {0} (expected 1 or 2)")]
    UnsupportedDegree(usize),
    #[error("no quadrature rule of order {0} (supported up to 8)")]
    UnsupportedQuadratureOrder(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("element index {0} out of range")]
    ElementOutOfRange(usize),
    #[error("boundary facet {0:?} does not lie on the space-time box boundary")]
    NonBoxBoundary(Vec<usize>),
    #[error("facet {0:?} shared by {1} elements")]
    NonConforming(Vec<usize>, usize),
    #[error("refinement closure did not terminate after {0} bisections")]
    ClosureDiverged(usize),
    #[error("region of interest is not resolved by the mesh (element {0} is cut)")]
    RegionNotAligned(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular matrix in direct solve: {0}")]
    Singular(String),
    #[error("GMRES breakdown at iteration {0}")]
    Breakdown(usize),
    #[error("too few records for a rate fit: {0} (need at least 3)")]
    TooFewRecords(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
