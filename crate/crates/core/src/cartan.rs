//! Cartan-matrix parametrization of Coxeter characters.
//!
//! A representation sending the three generators of Γ(p1,p2,p3) to distinct
//! involutions in SL(3,ℝ) is encoded, up to conjugacy, by its Cartan matrix
//! (α_i(b_j)). After fixing the type (q1,q2,q3) the matrix has a unique
//! normal form carrying a single real parameter t, and the concrete
//! representation is rebuilt as ρ(s_i) = e_i ⊗ γ_i − 1 with γ_i the i-th row.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::Vector3;
use thiserror::Error;

use crate::projlin::{invariant_symmetric_form, Mat3, Vec3};
use crate::tol::Tolerances;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CartanError {
    #[error("signature must satisfy p_k >= 2 and 1/p1 + 1/p2 + 1/p3 < 1")]
    BadSignature,
    #[error("signature must be ordered p1 <= p2 <= p3")]
    UnsortedSignature,
    #[error("type out of range: need 1 <= q_k <= p_k/2")]
    TypeOutOfRange,
    #[error("parameter t must be nonzero")]
    ZeroParameter,
    #[error("parameter t is not defined for this matrix (single-point type)")]
    NoParameter,
    #[error("matrix is not a valid Cartan matrix: {0}")]
    NotCartan(String),
    #[error("generator relations violated, worst residual {residual:e}")]
    RelationViolation { residual: f64 },
}

// ── Signature and type ──────────────────────────────────────────────────────

/// Triple (p1,p2,p3) of reflection orders with π/p_k angles.
///
/// `new` enforces the ordered form p1 ≤ p2 ≤ p3 used at every public entry
/// point; `new_frame` admits cyclically shifted or swapped triples, which
/// appear internally when the generator labelling is rotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TriangleSignature {
    p: [u32; 3],
}

impl TriangleSignature {
    pub fn new(p1: u32, p2: u32, p3: u32) -> Result<Self, CartanError> {
        if !(p1 <= p2 && p2 <= p3) {
            return Err(CartanError::UnsortedSignature);
        }
        Self::new_frame(p1, p2, p3)
    }

    /// Relaxed constructor: any hyperbolic triple, order-free.
    pub fn new_frame(p1: u32, p2: u32, p3: u32) -> Result<Self, CartanError> {
        let p = [p1, p2, p3];
        if p.iter().any(|&x| x < 2) {
            return Err(CartanError::BadSignature);
        }
        let s: f64 = p.iter().map(|&x| 1.0 / x as f64).sum();
        if s >= 1.0 {
            return Err(CartanError::BadSignature);
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> [u32; 3] {
        self.p
    }

    /// The order p_k attached to generator pair {i,j}, {i,j,k} = {1,2,3}.
    pub fn pair_order(&self, i: usize, j: usize) -> u32 {
        self.p[3 - i - j]
    }

    /// Cyclic relabelling by k steps: (p1,p2,p3) → (p2,p3,p1) for k = 1.
    pub fn shifted(&self, k: usize) -> Self {
        let p = self.p;
        Self {
            p: [p[k % 3], p[(k + 1) % 3], p[(k + 2) % 3]],
        }
    }

    /// Swap the roles of the second and third generators.
    pub fn swapped23(&self) -> Self {
        Self {
            p: [self.p[0], self.p[2], self.p[1]],
        }
    }

    pub fn all_odd(&self) -> bool {
        self.p.iter().all(|&x| x % 2 == 1)
    }

    pub fn hitchin_type(&self) -> RepType {
        RepType { q: [1, 1, 1] }
    }

    /// Type ((p1−1)/2, (p2−1)/2, (p3−1)/2); only meaningful when all odd.
    pub fn barbot_type(&self) -> RepType {
        RepType {
            q: [
                (self.p[0] - 1) / 2,
                (self.p[1] - 1) / 2,
                (self.p[2] - 1) / 2,
            ],
        }
    }
}

impl std::fmt::Display for TriangleSignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p[0], self.p[1], self.p[2])
    }
}

/// Type triple (q1,q2,q3) with c_k = 2cos(q_k π / p_k).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RepType {
    q: [u32; 3],
}

impl RepType {
    pub fn new(sig: &TriangleSignature, q1: u32, q2: u32, q3: u32) -> Result<Self, CartanError> {
        let q = [q1, q2, q3];
        for k in 0..3 {
            if q[k] < 1 || 2 * q[k] > sig.p[k] {
                return Err(CartanError::TypeOutOfRange);
            }
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> [u32; 3] {
        self.q
    }

    /// c_k = 2 cos(q_k π / p_k), with the q_k = p_k/2 case pinned to zero.
    pub fn cosines(&self, sig: &TriangleSignature) -> [f64; 3] {
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = if 2 * self.q[k] == sig.p[k] {
                0.0
            } else {
                2.0 * (self.q[k] as f64 * std::f64::consts::PI / sig.p[k] as f64).cos()
            };
        }
        c
    }

    /// Whether some q_k = p_k/2, collapsing the type to a single character.
    pub fn is_single_point(&self, sig: &TriangleSignature) -> bool {
        (0..3).any(|k| 2 * self.q[k] == sig.p[k])
    }

    pub fn shifted(&self, k: usize) -> Self {
        let q = self.q;
        Self {
            q: [q[k % 3], q[(k + 1) % 3], q[(k + 2) % 3]],
        }
    }

    pub fn swapped23(&self) -> Self {
        Self {
            q: [self.q[0], self.q[2], self.q[1]],
        }
    }
}

impl std::fmt::Display for RepType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.q[0], self.q[1], self.q[2])
    }
}

// ── Cartan matrices ─────────────────────────────────────────────────────────

/// A Cartan matrix together with its signature, type, and parameter.
///
/// The parameter is `None` exactly when the type is a single point (some
/// q_k = p_k/2); all t-dependent operations reject such matrices.
#[derive(Debug, Clone)]
pub struct CartanMatrix {
    a: Mat3,
    sig: TriangleSignature,
    rtype: RepType,
    t: Option<f64>,
}

impl CartanMatrix {
    pub fn matrix(&self) -> Mat3 {
        self.a
    }

    pub fn signature(&self) -> TriangleSignature {
        self.sig
    }

    pub fn rep_type(&self) -> RepType {
        self.rtype
    }

    pub fn t(&self) -> Option<f64> {
        self.t
    }

    pub fn t_required(&self) -> Result<f64, CartanError> {
        self.t.ok_or(CartanError::NoParameter)
    }

    /// Accept an arbitrary matrix, inferring type and parameter. Used to
    /// round-trip conjugated matrices and to validate raw generator data.
    pub fn from_matrix(a: Mat3, sig: TriangleSignature) -> Result<Self, CartanError> {
        for i in 0..3 {
            if (a[(i, i)] - 2.0).abs() > 1e-9 {
                return Err(CartanError::NotCartan("diagonal must be 2".into()));
            }
        }
        let mut q = [0u32; 3];
        let mut c = [0.0f64; 3];
        for (i, j, k) in [(0usize, 1usize, 2usize), (0, 2, 1), (1, 2, 0)] {
            let prod = a[(i, j)] * a[(j, i)];
            if (a[(i, j)].abs() < 1e-14) != (a[(j, i)].abs() < 1e-14) {
                return Err(CartanError::NotCartan("one-sided zero entry".into()));
            }
            if prod < -1e-12 {
                return Err(CartanError::NotCartan("negative 2-cyclic product".into()));
            }
            let p = sig.p[k] as f64;
            // prod = 4 cos²(qπ/p) determines q within the admissible range
            let cos = (prod.max(0.0).sqrt() / 2.0).min(1.0);
            let qf = cos.acos() * p / std::f64::consts::PI;
            let qr = qf.round();
            if (qf - qr).abs() > 1e-6 * p || qr < 1.0 - 1e-9 || 2.0 * qr > p + 1e-9 {
                return Err(CartanError::NotCartan(format!(
                    "2-cyclic product {prod} matches no admissible type"
                )));
            }
            q[k] = qr as u32;
            c[k] = 2.0 * (qr * std::f64::consts::PI / p).cos();
        }
        let rtype = RepType { q };
        let t = if rtype.is_single_point(&sig) {
            None
        } else {
            let denom = c[0] * c[1] * c[2];
            Some(-(a[(0, 1)] * a[(1, 2)] * a[(2, 0)]) / denom)
        };
        Ok(Self { a, sig, rtype, t })
    }
}

/// The unique normal-form Cartan matrix of the given type and parameter:
/// symmetric −c entries off the (2,3) pair, which carries −t·c1 and −t⁻¹·c1.
pub fn normal_form(
    sig: TriangleSignature,
    rtype: RepType,
    t: f64,
) -> Result<CartanMatrix, CartanError> {
    // revalidate the type against this signature
    let rtype = RepType::new(&sig, rtype.q[0], rtype.q[1], rtype.q[2])?;
    let [c1, c2, c3] = rtype.cosines(&sig);
    if rtype.is_single_point(&sig) {
        let a = Mat3::new(2.0, -c3, -c2, -c3, 2.0, -c1, -c2, -c1, 2.0);
        return Ok(CartanMatrix {
            a,
            sig,
            rtype,
            t: None,
        });
    }
    if t == 0.0 || !t.is_finite() {
        return Err(CartanError::ZeroParameter);
    }
    let a = Mat3::new(2.0, -c3, -c2, -c3, 2.0, -t * c1, -c2, -c1 / t, 2.0);
    Ok(CartanMatrix {
        a,
        sig,
        rtype,
        t: Some(t),
    })
}

/// The transposed matrix: same type, parameter 1/t. Building it yields the
/// inverse-transpose representation up to conjugation.
pub fn dual_representation(c: &CartanMatrix) -> CartanMatrix {
    CartanMatrix {
        a: c.a.transpose(),
        sig: c.sig,
        rtype: c.rtype,
        t: c.t.map(|t| 1.0 / t),
    }
}

/// Conjugate by the permutation exchanging the last two generators. The
/// result is a Cartan matrix for (p1,p3,p2) with parameter 1/t.
pub fn swap_p2_p3(c: &CartanMatrix) -> CartanMatrix {
    let p = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
    CartanMatrix {
        a: p * c.a * p,
        sig: c.sig.swapped23(),
        rtype: c.rtype.swapped23(),
        t: c.t.map(|t| 1.0 / t),
    }
}

// ── Representations ─────────────────────────────────────────────────────────

/// Identifier used to key evaluation caches per representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RepId(u64);

static NEXT_REP_ID: AtomicU64 = AtomicU64::new(1);

impl RepId {
    pub fn fresh() -> Self {
        Self(NEXT_REP_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Concrete Coxeter representation: three involutions σ_i = b_i ⊗ α_i − 1.
#[derive(Debug, Clone)]
pub struct CoxeterRep {
    pub s: [Mat3; 3],
    pub b: [Vec3; 3],
    pub alpha: [Vec3; 3],
    pub sig: TriangleSignature,
    pub id: RepId,
}

impl CoxeterRep {
    /// Image of the Coxeter element s1 s2 s3.
    pub fn coxeter_element(&self) -> Mat3 {
        self.s[0] * self.s[1] * self.s[2]
    }

    /// A symmetric bilinear form preserved by all generators, when one
    /// exists (up to scale).
    pub fn invariant_form(&self) -> Option<Mat3> {
        invariant_symmetric_form(&self.s)
    }
}

/// Build the line-irreducible representative ρ(s_i) = e_i ⊗ γ_i − 1 from a
/// Cartan matrix and check the Coxeter relations numerically.
pub fn build_representation(
    c: &CartanMatrix,
    tol: &Tolerances,
) -> Result<CoxeterRep, CartanError> {
    let a = c.a;
    let mut s = [Mat3::zeros(); 3];
    let mut b = [Vec3::zeros(); 3];
    let mut alpha = [Vec3::zeros(); 3];
    for i in 0..3 {
        let row = Vector3::new(a[(i, 0)], a[(i, 1)], a[(i, 2)]);
        let e = Vec3::from_fn(|r, _| if r == i { 1.0 } else { 0.0 });
        s[i] = e * row.transpose() - Mat3::identity();
        b[i] = e;
        alpha[i] = row;
    }
    let residual = relation_residual(&s, &c.sig);
    if residual > tol.rel {
        return Err(CartanError::RelationViolation { residual });
    }
    Ok(CoxeterRep {
        s,
        b,
        alpha,
        sig: c.sig,
        id: RepId::fresh(),
    })
}

/// Worst residual over s_i² = 1, det s_i = 1, and (s_i s_j)^{p_k} = 1.
pub fn relation_residual(s: &[Mat3; 3], sig: &TriangleSignature) -> f64 {
    let id = Mat3::identity();
    let mut worst: f64 = 0.0;
    for m in s.iter() {
        worst = worst.max((m * m - id).norm());
        worst = worst.max((m.determinant() - 1.0).abs());
    }
    for (i, j, k) in [(1usize, 2usize, 0usize), (2, 0, 1), (0, 1, 2)] {
        let rot = s[i] * s[j];
        let mut pw = id;
        for _ in 0..sig.p[k] {
            pw *= rot;
        }
        worst = worst.max((pw - id).norm());
    }
    worst
}

/// Recover (b_i, α_i) pairs from raw involution matrices via the rank-one
/// factorization σ + 1 = b ⊗ α, then assemble the Cartan matrix α_i(b_j).
pub fn cartan_from_involutions(
    s: &[Mat3; 3],
    sig: TriangleSignature,
) -> Result<CartanMatrix, CartanError> {
    let mut b = [Vec3::zeros(); 3];
    let mut alpha = [Vec3::zeros(); 3];
    for i in 0..3 {
        let r = s[i] + Mat3::identity();
        // best column as b, best row as α, rescaled so α(b) = 2
        let mut bc = 0;
        for cidx in 1..3 {
            if r.column(cidx).norm() > r.column(bc).norm() {
                bc = cidx;
            }
        }
        let bv: Vec3 = r.column(bc).into();
        if bv.norm() < 1e-12 {
            return Err(CartanError::NotCartan(
                "generator image is not a reflection".into(),
            ));
        }
        let mut br = 0;
        for ridx in 1..3 {
            if r.row(ridx).norm() > r.row(br).norm() {
                br = ridx;
            }
        }
        let av: Vec3 = r.row(br).transpose().into();
        let pairing = av.dot(&bv);
        if pairing.abs() < 1e-12 {
            return Err(CartanError::NotCartan("degenerate rank-one factor".into()));
        }
        let scale = 2.0 / pairing;
        b[i] = bv;
        alpha[i] = av * scale;
    }
    let mut a = Mat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            a[(i, j)] = alpha[i].dot(&b[j]);
        }
    }
    CartanMatrix::from_matrix(a, sig)
}
