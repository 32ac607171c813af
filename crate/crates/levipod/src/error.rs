use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("mesh generation failed: {0}")]
    MeshGenFailure(String),
    #[error("plate position {y} m outside deform box [{min}, {max}] m")]
    OutOfBounds { y: f64, min: f64, max: f64 },
    #[error("degenerate element {element}: signed area {area} below floor {floor}")]
    DegenerateElement {
        element: usize,
        area: f64,
        floor: f64,
    },
    #[error("mesh file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum FemError {
    #[error("degenerate element {element}: signed area {area}")]
    DegenerateElement { element: usize, area: f64 },
    #[error("solutions live on different dof layouts ({a} vs {b} dofs)")]
    MeshMismatch { a: usize, b: usize },
}

#[derive(Debug, Error)]
pub enum MorError {
    #[error("empty snapshot window")]
    EmptyWindow,
    #[error("inconsistent snapshot lengths ({expected} vs {got})")]
    InconsistentLength { expected: usize, got: usize },
    #[error("snapshot matrix has zero Frobenius norm")]
    ZeroSnapshot,
    #[error("truncation tolerance {0} outside (0, 1)")]
    InvalidTolerance(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("reduced system is singular")]
    SingularReducedSystem,
    #[error("target node {node} at ({r}, {z}) not located in source mesh")]
    PointNotLocated { node: usize, r: f64, z: f64 },
    #[error("snapshot file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("linear solver failed at step {step}: {reason}")]
    SolverFailure { step: usize, reason: String },
    #[error("at step {step}: {source}")]
    Mesh {
        step: usize,
        #[source]
        source: MeshError,
    },
    #[error("at step {step}: {source}")]
    Fem {
        step: usize,
        #[source]
        source: FemError,
    },
    #[error("at step {step}: {source}")]
    Mor {
        step: usize,
        #[source]
        source: MorError,
    },
    #[error("trajectories on different time grids")]
    GridMismatch,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
