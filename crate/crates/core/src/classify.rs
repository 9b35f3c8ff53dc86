//! Trace computations and the Anosov classification.
//!
//! Everything here is driven by five numbers: the three pair traces
//! t_k = tr ρ(s_i s_j) and the Coxeter traces x = tr ρ(s1s2s3),
//! y = tr ρ(s3s2s1). The sign of the discriminant δ(x,y) resolves the
//! eigenvalue regime of the Coxeter element; the critical parameter t_crit
//! and the reducible landmark t_red bound the non-Anosov interval inside the
//! Barbot component.

use thiserror::Error;

use crate::cartan::{CartanError, CartanMatrix, RepType, TriangleSignature};
use crate::projlin::{eig3, Mat3};
use crate::tol::Tolerances;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("operation requires all p_k odd")]
    EvenSignature,
    #[error("operation requires the Barbot type")]
    NotBarbotType,
    #[error("sample range dips below u = -3/2 where the regime curves are undefined")]
    DomainError,
    #[error("failed to bracket the critical parameter")]
    BracketingFailed,
    #[error(transparent)]
    Cartan(#[from] CartanError),
}

// ── Traces ──────────────────────────────────────────────────────────────────

/// Pair and Coxeter traces, plus the symmetrized coordinates (u, v).
#[derive(Debug, Clone, Copy)]
pub struct TraceData {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

/// Traces from Cartan entries:
/// t_k = a_ij a_ji − 1, x and y from the 3-cyclic products.
pub fn traces(c: &CartanMatrix) -> TraceData {
    let a = c.matrix();
    let t1 = a[(1, 2)] * a[(2, 1)] - 1.0;
    let t2 = a[(2, 0)] * a[(0, 2)] - 1.0;
    let t3 = a[(0, 1)] * a[(1, 0)] - 1.0;
    let s2 = a[(0, 1)] * a[(1, 0)] + a[(1, 2)] * a[(2, 1)] + a[(2, 0)] * a[(0, 2)];
    let x = a[(0, 1)] * a[(1, 2)] * a[(2, 0)] - s2 + 3.0;
    let y = a[(1, 0)] * a[(2, 1)] * a[(0, 2)] - s2 + 3.0;
    TraceData {
        t1,
        t2,
        t3,
        x,
        y,
        u: (x + y) / 2.0,
        v: (x - y) / 2.0,
    }
}

/// δ(x,y) = x²y² − 4(x³+y³) + 18xy − 27.
///
/// For a unimodular 3×3 matrix with trace x and inverse-trace y this is the
/// discriminant of the characteristic polynomial: positive iff the
/// eigenvalues are real and distinct, negative iff there is a complex pair.
pub fn discriminant(x: f64, y: f64) -> f64 {
    x * x * y * y - 4.0 * (x * x * x + y * y * y) + 18.0 * x * y - 27.0
}

/// Coxeter traces along the Barbot normal-form family.
/// x(t) = −t·c1c2c3 − Σc_k² + 3 and y(t) = x(1/t).
pub fn barbot_traces(sig: &TriangleSignature, t: f64) -> (f64, f64) {
    let c = sig.barbot_type().cosines(sig);
    let p = c[0] * c[1] * c[2];
    let s: f64 = c.iter().map(|x| x * x).sum();
    (-t * p - s + 3.0, -p / t - s + 3.0)
}

// ── Regime curves ───────────────────────────────────────────────────────────

/// One sampled row of the (u, v²) regime curves.
#[derive(Debug, Clone, Copy)]
pub struct GoldmanSample {
    pub u: f64,
    pub f: f64,
    pub g_plus: f64,
    pub g_minus: f64,
}

/// Sampled curves f(u) and g±(u) with the roots u± of f.
#[derive(Debug, Clone)]
pub struct GoldmanCurves {
    pub u_minus: f64,
    pub u_plus: f64,
    pub samples: Vec<GoldmanSample>,
}

/// Sample v² = f(u) (trace constraint) and v² = g±(u) (discriminant zero
/// locus) over [u_min, u_max]. Requires the Barbot type of an odd signature
/// and 2u+3 ≥ 0 over the whole range.
pub fn goldman_curves(
    sig: &TriangleSignature,
    rtype: RepType,
    u_min: f64,
    u_max: f64,
    n: usize,
) -> Result<GoldmanCurves, ClassifyError> {
    if !sig.all_odd() {
        return Err(ClassifyError::EvenSignature);
    }
    if rtype != sig.barbot_type() {
        return Err(ClassifyError::NotBarbotType);
    }
    if u_min < -1.5 {
        return Err(ClassifyError::DomainError);
    }
    let c = rtype.cosines(sig);
    let p = c[0] * c[1] * c[2];
    let s: f64 = c.iter().map(|x| x * x).sum();
    let f = |u: f64| (u - 3.0 + s).powi(2) - p * p;
    let g = |u: f64, sign: f64| u * u + 12.0 * u + 9.0 + sign * 2.0 * (2.0 * u + 3.0).powf(1.5);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let u = if n == 1 {
            u_min
        } else {
            u_min + (u_max - u_min) * i as f64 / (n - 1) as f64
        };
        samples.push(GoldmanSample {
            u,
            f: f(u),
            g_plus: g(u, 1.0),
            g_minus: g(u, -1.0),
        });
    }
    Ok(GoldmanCurves {
        u_minus: 3.0 - s - p,
        u_plus: 3.0 - s + p,
        samples,
    })
}

// ── Critical parameters ─────────────────────────────────────────────────────

/// The reducible parameter: the larger root of
/// c1c2c3 (t + 1/t) = 8 − 2(c1²+c2²+c3²), equivalently the unique t > 1
/// where the Cartan determinant x(t) + y(t) + 2 vanishes. Found by bisecting
/// the determinant so the closed-form quadratic stays an independent oracle.
pub fn t_red(sig: &TriangleSignature) -> Result<f64, ClassifyError> {
    if !sig.all_odd() {
        return Err(ClassifyError::EvenSignature);
    }
    let r = |t: f64| {
        let (x, y) = barbot_traces(sig, t);
        x + y + 2.0
    };
    // r(1) = 2 − 2·c1c2c3 > 0 and r is decreasing for t > 1
    let mut hi = 2.0;
    while r(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(ClassifyError::BracketingFailed);
        }
    }
    let mut lo = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if r(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The unique parameter t > 1 where the Coxeter element's discriminant
/// vanishes, bisected on (1, t_red].
pub fn t_crit(sig: &TriangleSignature) -> Result<f64, ClassifyError> {
    let tr = t_red(sig)?;
    let d = |t: f64| {
        let (x, y) = barbot_traces(sig, t);
        discriminant(x, y)
    };
    let mut lo = 1.0 + 1e-9;
    let mut hi = tr;
    if !(d(lo) < 0.0 && d(hi) > 0.0) {
        return Err(ClassifyError::BracketingFailed);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if d(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ── Verdict ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Hitchin,
    Barbot,
    Other,
    NonCoxeter,
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Component::Hitchin => "hitchin",
            Component::Barbot => "barbot",
            Component::Other => "other",
            Component::NonCoxeter => "non-coxeter",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenRegime {
    RealDistinct,
    DoubleNondiagonalizable,
    ComplexPair,
}

impl std::fmt::Display for EigenRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EigenRegime::RealDistinct => "real_distinct",
            EigenRegime::DoubleNondiagonalizable => "double_nondiagonalizable",
            EigenRegime::ComplexPair => "complex_pair",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub component: Component,
    pub eigen_regime: EigenRegime,
    pub anosov: bool,
    pub t_crit: Option<f64>,
    pub t_red: Option<f64>,
    pub traces: TraceData,
}

/// Eigenvalue regime from the discriminant sign, with a dead band treated as
/// the degenerate double-eigenvalue case.
pub fn regime_from_discriminant(delta: f64, band: f64) -> EigenRegime {
    if delta > band {
        EigenRegime::RealDistinct
    } else if delta < -band {
        EigenRegime::ComplexPair
    } else {
        EigenRegime::DoubleNondiagonalizable
    }
}

/// Classification of a Cartan matrix: component membership, eigenvalue
/// regime of the Coxeter element, and the Anosov verdict.
pub fn classify(sig: &TriangleSignature, c: &CartanMatrix, tol: &Tolerances) -> Verdict {
    let tr = traces(c);
    let delta = discriminant(tr.x, tr.y);
    let t = c.t();

    let positive_t = match t {
        Some(t) => t > 0.0,
        // single-point types coincide with their duals; treat as positive
        None => true,
    };
    let component = if c.rep_type() == sig.hitchin_type() && positive_t {
        Component::Hitchin
    } else if sig.all_odd() && c.rep_type() == sig.barbot_type() && positive_t {
        Component::Barbot
    } else {
        Component::Other
    };

    let eigen_regime = regime_from_discriminant(delta, tol.eig);

    let anosov = match component {
        Component::Hitchin => true,
        Component::Barbot => delta > tol.eig,
        _ => false,
    };

    let (tc, trd) = if component == Component::Barbot {
        (t_crit(sig).ok(), t_red(sig).ok())
    } else {
        (None, None)
    };

    Verdict {
        component,
        eigen_regime,
        anosov,
        t_crit: tc,
        t_red: trd,
        traces: tr,
    }
}

/// Classification from traces alone (p1 ≥ 3). Mirrors `classify` exactly:
/// the component is recognized from the pair-trace pattern and the sign of
/// τ = x + t1 + t2 + t3, which is opposite to the sign of the parameter t.
pub fn classify_traces(sig: &TriangleSignature, tr: &TraceData, tol: &Tolerances) -> Verdict {
    let delta = discriminant(tr.x, tr.y);
    let eigen_regime = regime_from_discriminant(delta, tol.eig);
    let p = sig.p();
    assert!(p[0] >= 3, "trace-only classification requires p1 >= 3");

    // a non-Coxeter representation has some pair trace in {−1, 3}
    let non_coxeter = [tr.t1, tr.t2, tr.t3]
        .iter()
        .any(|&t| (t + 1.0).abs() < 1e-9 || (t - 3.0).abs() < 1e-9);

    let tau = tr.x + tr.t1 + tr.t2 + tr.t3;
    let eps = 1e-9;
    let matches = |pattern: [f64; 3]| {
        (tr.t1 - pattern[0]).abs() < eps
            && (tr.t2 - pattern[1]).abs() < eps
            && (tr.t3 - pattern[2]).abs() < eps
    };
    let ck = |k: usize| 2.0 * (std::f64::consts::PI / p[k] as f64).cos();
    let hitchin_pattern = [
        ck(0) * ck(0) - 1.0,
        ck(1) * ck(1) - 1.0,
        ck(2) * ck(2) - 1.0,
    ];
    let barbot_pattern = [1.0 - ck(0), 1.0 - ck(1), 1.0 - ck(2)];

    let component = if non_coxeter {
        Component::NonCoxeter
    } else if matches(hitchin_pattern) && tau < 0.0 {
        Component::Hitchin
    } else if sig.all_odd() && matches(barbot_pattern) && tau < 0.0 {
        Component::Barbot
    } else {
        Component::Other
    };

    let anosov = match component {
        Component::Hitchin => true,
        Component::Barbot => delta > tol.eig,
        _ => false,
    };
    let (tc, trd) = if component == Component::Barbot {
        (t_crit(sig).ok(), t_red(sig).ok())
    } else {
        (None, None)
    };
    Verdict {
        component,
        eigen_regime,
        anosov,
        t_crit: tc,
        t_red: trd,
        traces: *tr,
    }
}

/// Eigenvalue regime of a concrete unimodular matrix, for cross-checks
/// against the discriminant route.
///
/// A double root is only determined to about sqrt(machine epsilon) by any
/// algorithm, so the near-double band is sqrt(eig tolerance) relative.
pub fn regime_from_matrix(m: &Mat3, tol: &Tolerances) -> EigenRegime {
    let e = eig3(m, tol);
    if e.has_complex_pair() {
        EigenRegime::ComplexPair
    } else {
        let v = e.real_values().unwrap();
        let scale = 1.0 + v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let band = tol.eig.sqrt() * scale;
        let close01 = (v[0] - v[1]).abs() < band;
        let close12 = (v[1] - v[2]).abs() < band;
        if close01 || close12 {
            EigenRegime::DoubleNondiagonalizable
        } else {
            EigenRegime::RealDistinct
        }
    }
}
