use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian: max asymmetry {asymmetry:e}")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:e}")]
    Indefinite { eigenvalue: f64 },

    #[error("matrix is singular: min eigenvalue {min_eigenvalue:e} after ridge")]
    Singular { min_eigenvalue: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("angle ({theta}, {phi}) rad outside [0, pi/2] x [0, pi]")]
    AngleOutOfDomain { theta: f64, phi: f64 },

    #[error("node at {position:?} lies behind the IRS facade")]
    BehindSurface { position: [f64; 3] },

    #[error("node at {position:?} lies above the IRS")]
    AboveSurface { position: [f64; 3] },

    #[error("empty sample grid")]
    EmptyGrid,

    #[error("inconsistent power/slack pair: zeta = {zeta}")]
    InconsistentSlack { zeta: f64 },

    #[error("degenerate Charnes-Cooper point: r = {r:e}")]
    DegenerateScale { r: f64 },

    #[error("SDP {status:?} at {context}")]
    Solver {
        status: crate::sdp::SdpStatus,
        context: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
