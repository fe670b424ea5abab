use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not a single-file NIfTI-1 stream (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("unsupported dimensionality dim[0] = {0}")]
    UnsupportedDim(i16),
    #[error("stream truncated: needed {needed} bytes, found {found}")]
    TruncatedStream { needed: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("voxel index {index} out of bounds for {len} voxels")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("mask contains no voxels")]
    EmptyMask,
    #[error("voxel {voxel} (value {value}) is below threshold {threshold}")]
    VoxelBelowThreshold {
        voxel: usize,
        value: f64,
        threshold: f64,
    },

    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid enhancement parameters: {0}")]
    InvalidParams(String),
    #[error("height weight has no antiderivative")]
    MissingAntiderivative,

    #[error("degenerate residuals: {0}")]
    DegenerateResiduals(String),
    #[error("Euler characteristic approximation undefined at h = {0} (requires h > 1)")]
    InvalidRegime(f64),
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("threshold {tau} outside prior support [{lo}, {hi}]")]
    InvalidSupport { tau: f64, lo: f64, hi: f64 },
    #[error("map maximum must be positive, got {0}")]
    NonPositiveMax(f64),
    #[error("map has no positive in-mask values")]
    NonPositiveMap,
    #[error("lookup table cache corrupt: {0}")]
    CacheCorrupt(String),

    #[error("at least 2 subjects are required, got {0}")]
    TooFewSubjects(usize),
    #[error("correlation undefined for constant input")]
    ConstantInput,
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
