use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("emitters {0} and {1} coincide; the dipole-dipole shift diverges")]
    CoincidentEmitters(usize, usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix in {context}; closest eigenvalue {eigenvalue}")]
    Singular { context: String, eigenvalue: String },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("emitter amplitude |beta| = {0} exceeds 1; outside weak-excitation validity")]
    WeakExcitation(f64),

    #[error("drift matrix is unstable (spectral abscissa {0:e}); no steady state")]
    Unstable(f64),

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("no rising zero crossing of the effective detuning in [{lo}, {hi}]; widen the scan")]
    NoBracket { lo: f64, hi: f64 },

    #[error("frequency window too narrow: need at least {required} rad/s, got {given}")]
    WindowTooNarrow { required: f64, given: f64 },

    #[error("negative detected photon number {0:e}")]
    NegativePhotonNumber(f64),

    #[error("Fock cutoff {n_max} too small: top-level population {population:e}; raise n_max")]
    FockCutoff { n_max: usize, population: f64 },

    #[error("Hilbert space dimension {0} exceeds the dense limit")]
    TooLarge(usize),

    #[error("operating point leaves the weak-drive regime: max |beta|^2 = {0}")]
    PopulationGuard(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
