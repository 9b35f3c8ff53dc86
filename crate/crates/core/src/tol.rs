//! Numerical tolerances.
//!
//! All geometry in this crate is double precision, so every comparison needs
//! an explicit band. The defaults below are the values the test suite pins;
//! each one can be overridden per run (the CLI exposes them as config keys).

#[derive(Debug, Clone)]
pub struct Tolerances {
    /// Unimodularity |det − (±1)| for representation matrices.
    pub det: f64,
    /// Eigenvalue residuals, relative to matrix scale.
    pub eig: f64,
    /// Projective point equality on unit representatives.
    pub pt: f64,
    /// Point-line incidence.
    pub inc: f64,
    /// Conic membership residual.
    pub conic: f64,
    /// Dead band for conic side classification.
    pub side: f64,
    /// Cross-ratio comparisons.
    pub cr: f64,
    /// Group relation residuals for built representations.
    pub rel: f64,
    /// Circle angle comparisons.
    pub angle: f64,
    /// Flag incidence for converged limit-curve samples.
    pub flag: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            det: 1e-9,
            eig: 1e-8,
            pt: 1e-9,
            inc: 1e-9,
            conic: 1e-8,
            side: 1e-10,
            cr: 1e-8,
            rel: 1e-7,
            angle: 1e-12,
            flag: 1e-6,
        }
    }
}
