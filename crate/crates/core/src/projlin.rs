//! Dense 3×3 / 2×2 real linear algebra and projective-plane primitives.
//!
//! Everything downstream (representations, conics, boxes, limit curves) runs
//! on the types in this module: projective points and lines with tolerance
//! based equality, conics with a pinned normalization, convex hulls taken in
//! an explicit affine chart, the cross ratio, and a deterministic closed-form
//! 3×3 eigenvalue solver.

use nalgebra::{DMatrix, Matrix3, Vector3};
use thiserror::Error;

use crate::tol::Tolerances;

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjError {
    #[error("zero or non-finite vector cannot represent a projective object")]
    ZeroVector,
    #[error("fitted conic is degenerate (rank < 3 or definite)")]
    DegenerateConic,
    #[error("input point lies on the chart line")]
    PointOnChartLine,
    #[error("coincident points in cross ratio")]
    CoincidentPoints,
    #[error("cross-ratio input points are not collinear")]
    NotCollinear,
}

// ── Points and lines ────────────────────────────────────────────────────────

/// Point of ℝP², stored as a unit representative (sign is not canonical).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjPoint {
    rep: Vec3,
}

impl ProjPoint {
    pub fn new(v: Vec3) -> Result<Self, ProjError> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(ProjError::ZeroVector);
        }
        Ok(Self { rep: v / n })
    }

    pub fn from_coords(x: f64, y: f64, z: f64) -> Result<Self, ProjError> {
        Self::new(Vec3::new(x, y, z))
    }

    /// Unit representative.
    pub fn rep(&self) -> Vec3 {
        self.rep
    }

    /// Representative with the largest-magnitude coordinate positive.
    pub fn canonical_rep(&self) -> Vec3 {
        let v = self.rep;
        let mut k = 0;
        for i in 1..3 {
            if v[i].abs() > v[k].abs() {
                k = i;
            }
        }
        if v[k] < 0.0 {
            -v
        } else {
            v
        }
    }

    /// Apply a projective transformation.
    pub fn apply(&self, m: &Mat3) -> Result<Self, ProjError> {
        Self::new(m * self.rep)
    }

    pub fn approx_eq(&self, other: &Self, eps: f64) -> bool {
        (1.0 - self.rep.dot(&other.rep).abs()) < eps
    }

    /// Chordal distance: sine of the angle between the two lines in ℝ³.
    pub fn distance(&self, other: &Self) -> f64 {
        self.rep.cross(&other.rep).norm()
    }
}

/// Line of ℝP², stored as a unit covector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjLine {
    cov: Vec3,
}

impl ProjLine {
    pub fn new(c: Vec3) -> Result<Self, ProjError> {
        let n = c.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(ProjError::ZeroVector);
        }
        Ok(Self { cov: c / n })
    }

    pub fn cov(&self) -> Vec3 {
        self.cov
    }

    pub fn canonical_cov(&self) -> Vec3 {
        ProjPoint { rep: self.cov }.canonical_rep()
    }

    /// Line through two distinct points.
    pub fn through(a: &ProjPoint, b: &ProjPoint) -> Result<Self, ProjError> {
        Self::new(a.rep.cross(&b.rep))
    }

    /// Intersection point of two lines.
    pub fn meet(&self, other: &Self) -> Result<ProjPoint, ProjError> {
        ProjPoint::new(self.cov.cross(&other.cov))
    }

    /// ⟨ℓ̂, x̂⟩ on unit representatives.
    pub fn eval(&self, p: &ProjPoint) -> f64 {
        self.cov.dot(&p.rep)
    }

    /// Push a line forward by `m`: the image line has covector ℓ ∘ m⁻¹.
    pub fn apply(&self, m_inv: &Mat3) -> Result<Self, ProjError> {
        Self::new(m_inv.transpose() * self.cov)
    }

    pub fn approx_eq(&self, other: &Self, eps: f64) -> bool {
        (1.0 - self.cov.dot(&other.cov).abs()) < eps
    }
}

pub fn incident(p: &ProjPoint, l: &ProjLine, eps: f64) -> bool {
    l.eval(p).abs() < eps
}

// ── Eigenvalues ─────────────────────────────────────────────────────────────

/// Eigenvalue data of a real 3×3 matrix, from the closed-form cubic.
///
/// Values are (re, im) pairs sorted by descending modulus; complex pairs are
/// adjacent with the +im member first. `vectors[i]` is a unit eigenvector for
/// real eigenvalues (for a diagonalizable double eigenvalue, two independent
/// vectors are returned on the two slots).
#[derive(Debug, Clone)]
pub struct Eig3 {
    pub values: [(f64, f64); 3],
    pub vectors: [Option<Vec3>; 3],
    pub diagonalizable: bool,
    pub max_residual: f64,
}

impl Eig3 {
    pub fn real_values(&self) -> Option<[f64; 3]> {
        if self.values.iter().all(|v| v.1 == 0.0) {
            Some([self.values[0].0, self.values[1].0, self.values[2].0])
        } else {
            None
        }
    }

    pub fn moduli(&self) -> [f64; 3] {
        let m = |v: (f64, f64)| (v.0 * v.0 + v.1 * v.1).sqrt();
        [m(self.values[0]), m(self.values[1]), m(self.values[2])]
    }

    pub fn has_complex_pair(&self) -> bool {
        self.values.iter().any(|v| v.1 != 0.0)
    }
}

/// All real roots of x³ + a x² + b x + c, via the depressed cubic.
/// Returns 1 or 3 roots (with multiplicity collapsed to the root list).
fn cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let disc = -4.0 * p * p * p - 27.0 * q * q;

    let mut roots = if disc >= 0.0 {
        // three real roots, trigonometric form
        let r = (-p / 3.0).max(0.0).sqrt();
        if r < 1e-300 {
            vec![shift, shift, shift]
        } else {
            let cos_arg = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0);
            let theta = cos_arg.acos();
            (0..3)
                .map(|k| {
                    2.0 * r * ((theta + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift
                })
                .collect()
        }
    } else {
        // one real root, Cardano
        let sq = (q * q / 4.0 + p * p * p / 27.0).sqrt();
        let u = (-q / 2.0 + sq).cbrt();
        let v = (-q / 2.0 - sq).cbrt();
        vec![u + v + shift]
    };

    // a couple of Newton steps tighten clustered roots
    for x in roots.iter_mut() {
        for _ in 0..2 {
            let f = ((*x + a) * *x + b) * *x + c;
            let df = (3.0 * *x + 2.0 * a) * *x + b;
            if df.abs() > 1e-300 {
                let step = f / df;
                if step.is_finite() {
                    *x -= step;
                }
            }
        }
    }
    roots
}

/// Unit null vector of a near-singular matrix, from the largest cross
/// product of row pairs. Returns `None` when the rows span everything.
fn null_vector(m: &Mat3, scale: f64, eps: f64) -> Option<Vec3> {
    let r = [
        Vec3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]),
        Vec3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]),
        Vec3::new(m[(2, 0)], m[(2, 1)], m[(2, 2)]),
    ];
    let mut best: Option<Vec3> = None;
    let mut best_norm = 0.0;
    for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let c = r[i].cross(&r[j]);
        let n = c.norm();
        if n > best_norm {
            best_norm = n;
            best = Some(c / n);
        }
    }
    if best_norm < eps * scale * scale {
        None
    } else {
        best
    }
}

/// Closed-form eigenvalue decomposition of a 3×3 real matrix.
///
/// Deterministic by construction: the characteristic cubic is solved in
/// closed form (trigonometric / Cardano) with Newton polish, eigenvectors
/// come from adjugate cross products, and a repeated eigenvalue with a
/// deficient eigenspace is reported as non-diagonalizable.
pub fn eig3(m: &Mat3, tol: &Tolerances) -> Eig3 {
    let scale = 1.0 + m.norm();
    let tr = m.trace();
    let minor_sum = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let det = m.determinant();

    // char poly λ³ − tr λ² + minor_sum λ − det
    let real = cubic_roots(-tr, minor_sum, -det);

    let mut values: Vec<(f64, f64)> = Vec::with_capacity(3);
    if real.len() == 3 {
        for &x in &real {
            values.push((x, 0.0));
        }
    } else {
        // deflate by the single real root; quadratic factor gives the pair
        let r = real[0];
        let b2 = -tr + r;
        let c2 = minor_sum + r * b2;
        let disc = b2 * b2 - 4.0 * c2;
        if disc >= 0.0 {
            // borderline: a nearly-double real pair that Cardano missed
            let s = disc.sqrt();
            values.push((r, 0.0));
            values.push(((-b2 + s) / 2.0, 0.0));
            values.push(((-b2 - s) / 2.0, 0.0));
        } else {
            let im = (-disc).sqrt() / 2.0;
            values.push((r, 0.0));
            values.push((-b2 / 2.0, im));
            values.push((-b2 / 2.0, -im));
        }
    }

    // sort by descending modulus, then re desc, then im desc (+im first)
    values.sort_by(|a, b| {
        let ma = (a.0 * a.0 + a.1 * a.1).sqrt();
        let mb = (b.0 * b.0 + b.1 * b.1).sqrt();
        mb.partial_cmp(&ma)
            .unwrap()
            .then(b.0.partial_cmp(&a.0).unwrap())
            .then(b.1.partial_cmp(&a.1).unwrap())
    });
    let values: [(f64, f64); 3] = [values[0], values[1], values[2]];

    let residual = |v: (f64, f64)| -> f64 {
        // |p(λ)| for complex λ, p = λ³ − tr λ² + m2 λ − det
        let (re, im) = v;
        // powers of λ
        let re2 = re * re - im * im;
        let im2 = 2.0 * re * im;
        let re3 = re2 * re - im2 * im;
        let im3 = re2 * im + im2 * re;
        let pr = re3 - tr * re2 + minor_sum * re - det;
        let pi = im3 - tr * im2 + minor_sum * im;
        (pr * pr + pi * pi).sqrt()
    };
    let max_residual = values.iter().map(|&v| residual(v)).fold(0.0, f64::max);

    // eigenvectors for real eigenvalues + diagonalizability
    let mut vectors: [Option<Vec3>; 3] = [None, None, None];
    let mut diagonalizable = true;
    let eps_cluster = tol.eig * scale;

    let mut i = 0;
    while i < 3 {
        let (re, im) = values[i];
        if im != 0.0 {
            i += 1;
            continue;
        }
        // multiplicity of this real eigenvalue (within tolerance)
        let mut j = i + 1;
        while j < 3 && values[j].1 == 0.0 && (values[j].0 - re).abs() <= eps_cluster {
            j += 1;
        }
        let mult = j - i;
        let shifted = m - Mat3::identity() * re;
        match mult {
            1 => {
                vectors[i] = null_vector(&shifted, scale, tol.eig);
                if vectors[i].is_none() {
                    diagonalizable = false;
                }
            }
            2 => {
                // rank of (m − λI) decides the eigenspace dimension
                if let Some(v) = null_vector(&shifted, scale, tol.eig) {
                    // rank 2 means a single eigenvector: deficient
                    vectors[i] = Some(v);
                    diagonalizable = false;
                } else {
                    // rank ≤ 1: two-dimensional eigenspace
                    let rows = [
                        Vec3::new(shifted[(0, 0)], shifted[(0, 1)], shifted[(0, 2)]),
                        Vec3::new(shifted[(1, 0)], shifted[(1, 1)], shifted[(1, 2)]),
                        Vec3::new(shifted[(2, 0)], shifted[(2, 1)], shifted[(2, 2)]),
                    ];
                    let r = rows
                        .iter()
                        .cloned()
                        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
                        .unwrap();
                    if r.norm() < tol.eig * scale {
                        // the whole plane is fixed only for scalar matrices
                        vectors[i] = Some(Vec3::x());
                        vectors[i + 1] = Some(Vec3::y());
                    } else {
                        let n = r / r.norm();
                        let a = pick_orthogonal(&n);
                        vectors[i] = Some(a);
                        vectors[i + 1] = Some(n.cross(&a));
                    }
                }
            }
            _ => {
                // triple eigenvalue
                let rows_norm = shifted.norm();
                if rows_norm < tol.eig * scale {
                    vectors[i] = Some(Vec3::x());
                    vectors[i + 1] = Some(Vec3::y());
                    vectors[i + 2] = Some(Vec3::z());
                } else {
                    vectors[i] = null_vector(&shifted, scale, tol.eig);
                    diagonalizable = false;
                }
            }
        }
        i = j;
    }

    if values[0].1 != 0.0 || values[1].1 != 0.0 || values[2].1 != 0.0 {
        // a complex pair is always diagonalizable over ℂ; find the real vector
        for (k, v) in values.iter().enumerate() {
            if v.1 == 0.0 && vectors[k].is_none() {
                let shifted = m - Mat3::identity() * v.0;
                vectors[k] = null_vector(&shifted, scale, tol.eig);
            }
        }
    }

    Eig3 {
        values,
        vectors,
        diagonalizable,
        max_residual,
    }
}

fn pick_orthogonal(n: &Vec3) -> Vec3 {
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let c = n.cross(&axis);
    c / c.norm()
}

// ── Conics ──────────────────────────────────────────────────────────────────

/// Conic of ℝP², stored as a symmetric form with signature (2,1) normalized
/// so the two positive eigenvalues have product 1. The Möbius strip side of
/// the complement is where the form is positive.
#[derive(Debug, Clone, Copy)]
pub struct Conic {
    form: Mat3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicSide {
    InsideDisk,
    OnConic,
    MobiusStrip,
}

impl Conic {
    /// Normalize an arbitrary symmetric form; errors unless the signature is
    /// indefinite and non-degenerate.
    pub fn new(q: Mat3, tol: &Tolerances) -> Result<Self, ProjError> {
        let sym = (q + q.transpose()) * 0.5;
        let scale = sym.norm();
        if scale < 1e-300 {
            return Err(ProjError::ZeroVector);
        }
        let se = nalgebra::SymmetricEigen::new(sym / scale);
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for &d in se.eigenvalues.iter() {
            if d > tol.eig {
                pos.push(d);
            } else if d < -tol.eig {
                neg.push(d);
            }
        }
        let (flip, pp) = match (pos.len(), neg.len()) {
            (2, 1) => (1.0, pos[0] * pos[1]),
            (1, 2) => (-1.0, neg[0] * neg[1]),
            _ => return Err(ProjError::DegenerateConic),
        };
        let form = sym / scale * flip / pp.sqrt();
        Ok(Self { form })
    }

    pub fn form(&self) -> Mat3 {
        self.form
    }

    /// Quadratic form on the unit representative.
    pub fn eval(&self, p: &ProjPoint) -> f64 {
        p.rep.dot(&(self.form * p.rep))
    }

    pub fn side(&self, p: &ProjPoint, tol: &Tolerances) -> ConicSide {
        let q = self.eval(p);
        if q > tol.side {
            ConicSide::MobiusStrip
        } else if q < -tol.side {
            ConicSide::InsideDisk
        } else {
            ConicSide::OnConic
        }
    }

    /// Pull back by m: the image conic of C under x ↦ m x is m⁻ᵀ C m⁻¹.
    pub fn transform(&self, m_inv: &Mat3, tol: &Tolerances) -> Result<Self, ProjError> {
        Conic::new(m_inv.transpose() * self.form * m_inv, tol)
    }

    /// Second intersection of a line with the conic, given one intersection
    /// point `w` already on it. `None` when the line is tangent within tol.
    pub fn second_intersection(
        &self,
        line: &ProjLine,
        w: &ProjPoint,
        tol: &Tolerances,
    ) -> Option<ProjPoint> {
        // parametrize the line as w + s q with q in the line and ⊥ w
        let q = line.cov().cross(&w.rep());
        let qn = q.norm();
        if qn < 1e-12 {
            return None;
        }
        let q = q / qn;
        let a = q.dot(&(self.form * q));
        let b = w.rep().dot(&(self.form * q));
        // Q(w + s q) = Q(w) + 2 s B(w,q) + s² Q(q); Q(w) ≈ 0 by assumption,
        // so the second root is s = −2 B(w,q) / Q(q)
        if a.abs() < 1e-14 {
            return None;
        }
        let s = -2.0 * b / a;
        if s.abs() < tol.conic {
            return None; // tangency: both intersections coincide
        }
        ProjPoint::new(w.rep() + q * s).ok()
    }
}

/// Fit result: the conic plus the largest membership residual of the inputs.
#[derive(Debug, Clone)]
pub struct ConicFit {
    pub conic: Conic,
    pub max_residual: f64,
}

/// Conic through five or more points (least squares beyond five).
pub fn conic_through(points: &[ProjPoint], tol: &Tolerances) -> Result<ConicFit, ProjError> {
    assert!(points.len() >= 5, "need at least 5 points to fit a conic");
    let mut d = DMatrix::<f64>::zeros(points.len(), 6);
    for (i, p) in points.iter().enumerate() {
        let v = p.rep();
        d[(i, 0)] = v.x * v.x;
        d[(i, 1)] = 2.0 * v.x * v.y;
        d[(i, 2)] = v.y * v.y;
        d[(i, 3)] = 2.0 * v.x * v.z;
        d[(i, 4)] = 2.0 * v.y * v.z;
        d[(i, 5)] = v.z * v.z;
    }
    // smallest eigenvector of the 6×6 normal matrix spans the nullspace
    // (a thin SVD of an n×6 design with n < 6 rows would not expose it)
    let normal = d.transpose() * &d;
    let se = nalgebra::SymmetricEigen::new(normal);
    let mut k = 0;
    for i in 1..6 {
        if se.eigenvalues[i] < se.eigenvalues[k] {
            k = i;
        }
    }
    let q = se.eigenvectors.column(k);
    let form = Mat3::new(q[0], q[1], q[3], q[1], q[2], q[4], q[3], q[4], q[5]);
    let conic = Conic::new(form, tol)?;
    let max_residual = points
        .iter()
        .map(|p| conic.eval(p).abs())
        .fold(0.0, f64::max);
    Ok(ConicFit {
        conic,
        max_residual,
    })
}

/// Side classification relative to a conic.
pub fn mobius_side(c: &Conic, x: &ProjPoint, tol: &Tolerances) -> ConicSide {
    c.side(x, tol)
}

// ── Chart hulls ─────────────────────────────────────────────────────────────

/// Convex hull of points taken in the affine chart complementary to a line.
///
/// The chart is realized by a rotation sending the chart covector to e₃, so
/// affine coordinates are (y₁/y₃, y₂/y₃). Hull vertices are stored in
/// counterclockwise order; membership queries return a signed margin
/// (minimum distance to the edges, negative outside).
#[derive(Debug, Clone)]
pub struct ChartHull {
    chart: ProjLine,
    rot: Mat3,
    verts2: Vec<(f64, f64)>,
    vert_ids: Vec<usize>,
}

impl ChartHull {
    pub fn chart(&self) -> &ProjLine {
        &self.chart
    }

    /// Indices (into the input list) of the hull vertices, ccw.
    pub fn vertex_indices(&self) -> &[usize] {
        &self.vert_ids
    }

    pub fn vertices2(&self) -> &[(f64, f64)] {
        &self.verts2
    }

    /// Affine chart coordinates of an arbitrary point; `None` on the chart line.
    pub fn chart_coords(&self, p: &ProjPoint) -> Option<(f64, f64)> {
        let y = self.rot * p.rep();
        if y.z.abs() < 1e-13 {
            return None;
        }
        Some((y.x / y.z, y.y / y.z))
    }

    /// Signed membership margin: minimum distance to the boundary, negative
    /// outside the hull, `-inf` for points on the chart line.
    pub fn margin(&self, p: &ProjPoint) -> f64 {
        match self.chart_coords(p) {
            Some(q) => self.margin2(q),
            None => f64::NEG_INFINITY,
        }
    }

    pub fn margin2(&self, q: (f64, f64)) -> f64 {
        let n = self.verts2.len();
        match n {
            0 => f64::NEG_INFINITY,
            1 => {
                let d = ((q.0 - self.verts2[0].0).powi(2) + (q.1 - self.verts2[0].1).powi(2)).sqrt();
                -d
            }
            2 => -segment_distance(self.verts2[0], self.verts2[1], q),
            _ => {
                let mut m = f64::INFINITY;
                for i in 0..n {
                    let a = self.verts2[i];
                    let b = self.verts2[(i + 1) % n];
                    let ex = b.0 - a.0;
                    let ey = b.1 - a.1;
                    let len = (ex * ex + ey * ey).sqrt();
                    if len < 1e-300 {
                        continue;
                    }
                    // positive on the interior side for a ccw polygon
                    let s = (ex * (q.1 - a.1) - ey * (q.0 - a.0)) / len;
                    m = m.min(s);
                }
                m
            }
        }
    }

    /// Polygon area (shoelace); zero for degenerate hulls.
    pub fn area(&self) -> f64 {
        let n = self.verts2.len();
        if n < 3 {
            return 0.0;
        }
        let mut a = 0.0;
        for i in 0..n {
            let p = self.verts2[i];
            let q = self.verts2[(i + 1) % n];
            a += p.0 * q.1 - q.0 * p.1;
        }
        a / 2.0
    }
}

fn segment_distance(a: (f64, f64), b: (f64, f64), q: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let aq = (q.0 - a.0, q.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    let t = if len2 < 1e-300 {
        0.0
    } else {
        ((aq.0 * ab.0 + aq.1 * ab.1) / len2).clamp(0.0, 1.0)
    };
    let c = (a.0 + t * ab.0, a.1 + t * ab.1);
    ((q.0 - c.0).powi(2) + (q.1 - c.1).powi(2)).sqrt()
}

/// Rotation taking the (unit) chart covector to e₃.
pub fn chart_rotation(chart: &ProjLine) -> Mat3 {
    let n = chart.cov();
    let q1 = pick_orthogonal(&n);
    let q2 = n.cross(&q1);
    Mat3::from_rows(&[q1.transpose(), q2.transpose(), n.transpose()])
}

/// Convex hull of `pts` in the affine chart complementary to `chart`.
pub fn chart_hull(
    chart: &ProjLine,
    pts: &[ProjPoint],
    tol: &Tolerances,
) -> Result<ChartHull, ProjError> {
    let rot = chart_rotation(chart);
    let mut coords = Vec::with_capacity(pts.len());
    for p in pts {
        let y = rot * p.rep();
        if y.z.abs() < tol.inc {
            return Err(ProjError::PointOnChartLine);
        }
        coords.push((y.x / y.z, y.y / y.z));
    }
    let hull_ids = monotone_chain(&coords);
    let verts2 = hull_ids.iter().map(|&i| coords[i]).collect();
    Ok(ChartHull {
        chart: *chart,
        rot,
        verts2,
        vert_ids: hull_ids,
    })
}

/// Andrew's monotone chain; lexicographic tie-breaking, strict turns only.
/// Returns indices into the input, counterclockwise.
fn monotone_chain(pts: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| {
        pts[a]
            .0
            .partial_cmp(&pts[b].0)
            .unwrap()
            .then(pts[a].1.partial_cmp(&pts[b].1).unwrap())
    });
    idx.dedup_by(|&mut a, &mut b| pts[a] == pts[b]);
    let n = idx.len();
    if n <= 2 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| -> f64 {
        (pts[a].0 - pts[o].0) * (pts[b].1 - pts[o].1)
            - (pts[a].1 - pts[o].1) * (pts[b].0 - pts[o].0)
    };
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= 0.0 {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) <= 0.0 {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 2 {
        // all points coincide or are collinear into a single segment
        let mut ends = vec![idx[0], idx[n - 1]];
        ends.dedup();
        return ends;
    }
    lower
}

// ── Cross ratio ─────────────────────────────────────────────────────────────

/// Cross ratio [a:x:y:b] of four collinear points, chart independent.
///
/// The points are expressed in an orthonormal basis of the common plane and
/// the ratio is assembled from 2×2 determinants, which handles points at
/// infinity of any particular chart.
pub fn cross_ratio(
    a: &ProjPoint,
    x: &ProjPoint,
    y: &ProjPoint,
    b: &ProjPoint,
    tol: &Tolerances,
) -> Result<f64, ProjError> {
    let pts = [a, x, y, b];
    let mut d = DMatrix::<f64>::zeros(4, 3);
    for (i, p) in pts.iter().enumerate() {
        let v = p.rep();
        d[(i, 0)] = v.x;
        d[(i, 1)] = v.y;
        d[(i, 2)] = v.z;
    }
    let svd = d.clone().svd(false, true);
    let sv = &svd.singular_values;
    if sv[sv.len() - 1] > tol.inc * 1e3 {
        return Err(ProjError::NotCollinear);
    }
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let nrow = vt.row(vt.nrows() - 1);
    let n = Vec3::new(nrow[0], nrow[1], nrow[2]).normalize();
    let q1 = pick_orthogonal(&n);
    let q2 = n.cross(&q1);
    let co = |p: &ProjPoint| (p.rep().dot(&q1), p.rep().dot(&q2));
    let (ca, cx, cy, cb) = (co(a), co(x), co(y), co(b));
    let det = |u: (f64, f64), v: (f64, f64)| u.0 * v.1 - u.1 * v.0;
    let dax = det(ca, cx);
    let dyb = det(cy, cb);
    if dax.abs() < tol.cr * 1e-4 || dyb.abs() < tol.cr * 1e-4 {
        return Err(ProjError::CoincidentPoints);
    }
    Ok(det(ca, cy) * det(cx, cb) / (dax * dyb))
}

/// Solve sᵀ J s = J over symmetric J for a family of matrices.
///
/// Returns a unit-norm symmetric solution when the solution space is one
/// dimensional (up to scale), `None` when the stacked system has no
/// well-separated nullspace.
pub fn invariant_symmetric_form(mats: &[Mat3]) -> Option<Mat3> {
    // J is parametrized by (j11, j12, j13, j22, j23, j33)
    let basis = [
        Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        Mat3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        Mat3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
        Mat3::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0),
        Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0),
        Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0),
    ];
    let mut rows = DMatrix::<f64>::zeros(6 * mats.len(), 6);
    for (mi, s) in mats.iter().enumerate() {
        for (bi, e) in basis.iter().enumerate() {
            let r = s.transpose() * e * s - e;
            // upper triangle of the (symmetric) residual
            let vals = [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 2)],
            ];
            for (k, &v) in vals.iter().enumerate() {
                rows[(6 * mi + k, bi)] = v;
            }
        }
    }
    let svd = rows.svd(false, true);
    let sv = &svd.singular_values;
    let smallest = sv[sv.len() - 1];
    let second = sv[sv.len() - 2];
    if smallest > 1e-8 || second < 1e-6 {
        return None;
    }
    let vt = svd.v_t.as_ref()?;
    let c = vt.row(vt.nrows() - 1);
    let mut j = Mat3::zeros();
    for (bi, e) in basis.iter().enumerate() {
        j += e * c[bi];
    }
    Some(j / j.norm())
}

/// Nullspace intertwiner: the matrix g (up to scale) with g·A_i = B_i·g for
/// all i, when the solution space is one dimensional.
pub fn intertwiner(a: &[Mat3], b: &[Mat3]) -> Option<Mat3> {
    assert_eq!(a.len(), b.len());
    let mut rows = DMatrix::<f64>::zeros(9 * a.len(), 9);
    // unknowns g_{rc} flattened row major: index 3r + c
    for (k, (ai, bi)) in a.iter().zip(b.iter()).enumerate() {
        // equation (g·ai − bi·g)_{rc} = 0
        for r in 0..3 {
            for c in 0..3 {
                let row = 9 * k + 3 * r + c;
                for s in 0..3 {
                    rows[(row, 3 * r + s)] += ai[(s, c)];
                    rows[(row, 3 * s + c)] -= bi[(r, s)];
                }
            }
        }
    }
    let svd = rows.svd(false, true);
    let sv = &svd.singular_values;
    let smallest = sv[sv.len() - 1];
    let second = sv[sv.len() - 2];
    if smallest > 1e-8 || second < 1e-6 {
        return None;
    }
    let vt = svd.v_t.as_ref()?;
    let g = vt.row(vt.nrows() - 1);
    let m = Mat3::new(g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], g[8]);
    Some(m / m.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn eig3_identity() {
        let e = eig3(&Mat3::identity(), &tol());
        for v in e.values {
            assert_relative_eq!(v.0, 1.0, epsilon = 1e-12);
            assert_eq!(v.1, 0.0);
        }
        assert!(e.diagonalizable);
    }

    #[test]
    fn eig3_diagonal() {
        let m = Mat3::from_diagonal(&Vec3::new(2.0, -1.0, -0.5));
        let e = eig3(&m, &tol());
        let vals = e.real_values().unwrap();
        assert_relative_eq!(vals[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], -1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[2], -0.5, epsilon = 1e-12);
        for (i, expect) in [Vec3::x(), Vec3::y(), Vec3::z()].iter().enumerate() {
            let v = e.vectors[i].unwrap();
            assert!(v.cross(expect).norm() < 1e-12);
        }
    }

    #[test]
    fn eig3_companion_cube_roots_of_unity() {
        // companion matrix of λ³ − 1
        let m = Mat3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let e = eig3(&m, &tol());
        // expected roots computed directly: 1, −1/2 ± i√3/2
        let s3 = 3f64.sqrt() / 2.0;
        assert_relative_eq!(e.values[0].0, 1.0, epsilon = 1e-10);
        assert_relative_eq!(e.values[1].0, -0.5, epsilon = 1e-10);
        assert_relative_eq!(e.values[1].1, s3, epsilon = 1e-10);
        assert_relative_eq!(e.values[2].1, -s3, epsilon = 1e-10);
    }

    #[test]
    fn eig3_jordan_block_flagged() {
        let m = Mat3::new(2.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.25);
        let e = eig3(&m, &tol());
        assert!(!e.diagonalizable);
        // a defective double root is only determined to ~√ε by any method
        assert_relative_eq!(e.values[0].0, 2.0, epsilon = 1e-7);
    }

    #[test]
    fn eig3_reconstruction_random() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let m = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let e = eig3(&m, &tol());
            let sum_re: f64 = e.values.iter().map(|v| v.0).sum();
            let sum_im: f64 = e.values.iter().map(|v| v.1).sum();
            assert!((sum_re - m.trace()).abs() < 1e-8 * (1.0 + m.norm()));
            assert!(sum_im.abs() < 1e-8);
            // product of eigenvalues = det (real part; imaginary cancels)
            let (mut pr, mut pi) = (1.0f64, 0.0f64);
            for v in e.values {
                let (nr, ni) = (pr * v.0 - pi * v.1, pr * v.1 + pi * v.0);
                pr = nr;
                pi = ni;
            }
            assert!((pr - m.determinant()).abs() < 1e-8 * (1.0 + m.norm()));
            assert!(pi.abs() < 1e-8 * (1.0 + m.norm()));
            assert!(e.max_residual < 1e-8 * (1.0 + m.norm()));
        }
    }

    #[test]
    fn conic_through_circle_points() {
        let pts: Vec<ProjPoint> = (0..5)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
                ProjPoint::from_coords(t.cos(), t.sin(), 1.0).unwrap()
            })
            .collect();
        let fit = conic_through(&pts, &tol()).unwrap();
        assert!(fit.max_residual < 1e-12);
        // form ≃ diag(1,1,−1) up to scale: normalized form should match exactly
        let f = fit.conic.form();
        assert_relative_eq!(f[(0, 0)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(f[(1, 1)], 1.0, epsilon = 1e-9);
        assert_relative_eq!(f[(2, 2)], -1.0, epsilon = 1e-9);
        assert!(f[(0, 1)].abs() < 1e-9 && f[(0, 2)].abs() < 1e-9 && f[(1, 2)].abs() < 1e-9);
    }

    #[test]
    fn conic_degenerate_collinear() {
        // three of the five on a line makes the solution a line pair
        let pts = vec![
            ProjPoint::from_coords(0.0, 0.0, 1.0).unwrap(),
            ProjPoint::from_coords(1.0, 0.0, 1.0).unwrap(),
            ProjPoint::from_coords(2.0, 0.0, 1.0).unwrap(),
            ProjPoint::from_coords(0.0, 1.0, 1.0).unwrap(),
            ProjPoint::from_coords(1.0, 1.0, 1.0).unwrap(),
        ];
        assert_eq!(
            conic_through(&pts, &tol()).unwrap_err(),
            ProjError::DegenerateConic
        );
    }

    #[test]
    fn mobius_side_circle() {
        let c = Conic::new(Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)), &tol()).unwrap();
        let inside = ProjPoint::from_coords(0.0, 0.0, 1.0).unwrap();
        let outside = ProjPoint::from_coords(1.0, 1.0, 1.0).unwrap();
        let on = ProjPoint::from_coords(1.0, 0.0, 1.0).unwrap();
        assert_eq!(mobius_side(&c, &inside, &tol()), ConicSide::InsideDisk);
        assert_eq!(mobius_side(&c, &outside, &tol()), ConicSide::MobiusStrip);
        assert_eq!(mobius_side(&c, &on, &tol()), ConicSide::OnConic);
    }

    #[test]
    fn mobius_side_scale_invariant() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let q0 = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let q0 = q0 + q0.transpose();
            let Ok(c) = Conic::new(q0, &tol()) else {
                continue;
            };
            let s: f64 = rng.gen_range(0.1..10.0);
            let c2 = Conic::new(q0 * s, &tol()).unwrap();
            let v = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            if v.norm() < 1e-3 {
                continue;
            }
            let p = ProjPoint::new(v).unwrap();
            let p2 = ProjPoint::new(v * rng.gen_range(0.2..5.0)).unwrap();
            assert_eq!(c.side(&p, &tol()), c2.side(&p2, &tol()));
        }
    }

    #[test]
    fn chart_hull_unit_square_triangle() {
        // chart = line at infinity (0,0,1)
        let chart = ProjLine::new(Vec3::z()).unwrap();
        let pts = vec![
            ProjPoint::from_coords(0.0, 0.0, 1.0).unwrap(),
            ProjPoint::from_coords(1.0, 0.0, 1.0).unwrap(),
            ProjPoint::from_coords(0.0, 1.0, 1.0).unwrap(),
        ];
        let hull = chart_hull(&chart, &pts, &tol()).unwrap();
        assert_eq!(hull.vertex_indices().len(), 3);
        assert_relative_eq!(hull.area().abs(), 0.5, epsilon = 1e-12);
        let inside = ProjPoint::from_coords(0.2, 0.2, 1.0).unwrap();
        let outside = ProjPoint::from_coords(2.0, 2.0, 1.0).unwrap();
        assert!(hull.margin(&inside) > 0.0);
        assert!(hull.margin(&outside) < 0.0);
    }

    #[test]
    fn chart_hull_collinear_degenerate() {
        let chart = ProjLine::new(Vec3::z()).unwrap();
        let pts: Vec<ProjPoint> = (0..4)
            .map(|i| ProjPoint::from_coords(i as f64, 2.0 * i as f64, 1.0).unwrap())
            .collect();
        let hull = chart_hull(&chart, &pts, &tol()).unwrap();
        assert!(hull.vertex_indices().len() <= 2);
        let off = ProjPoint::from_coords(1.0, 0.0, 1.0).unwrap();
        assert!(hull.margin(&off) < 0.0);
        let on = ProjPoint::from_coords(1.0, 2.0, 1.0).unwrap();
        assert!(hull.margin(&on) >= -1e-12);
    }

    #[test]
    fn chart_hull_rejects_point_on_chart() {
        let chart = ProjLine::new(Vec3::z()).unwrap();
        let pts = vec![ProjPoint::from_coords(1.0, 0.0, 0.0).unwrap()];
        assert_eq!(
            chart_hull(&chart, &pts, &tol()).unwrap_err(),
            ProjError::PointOnChartLine
        );
    }

    #[test]
    fn hull_margin_continuity() {
        let chart = ProjLine::new(Vec3::z()).unwrap();
        let pts = vec![
            ProjPoint::from_coords(0.0, 0.0, 1.0).unwrap(),
            ProjPoint::from_coords(1.0, 0.0, 1.0).unwrap(),
            ProjPoint::from_coords(1.0, 1.0, 1.0).unwrap(),
            ProjPoint::from_coords(0.0, 1.0, 1.0).unwrap(),
        ];
        let hull = chart_hull(&chart, &pts, &tol()).unwrap();
        let p = ProjPoint::from_coords(0.5, 0.5, 1.0).unwrap();
        let m = hull.margin(&p);
        assert!(m > 0.0);
        let q = ProjPoint::from_coords(0.5 + m / 2.0 / 1.5, 0.5, 1.0).unwrap();
        assert!(hull.margin(&q) > 0.0);
    }

    #[test]
    fn cross_ratio_affine_positions() {
        let p = |x: f64| ProjPoint::from_coords(x, 0.0, 1.0).unwrap();
        let cr = cross_ratio(&p(0.0), &p(1.0), &p(2.0), &p(3.0), &tol()).unwrap();
        assert_relative_eq!(cr, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_ratio_degenerate_middle() {
        let p = |x: f64| ProjPoint::from_coords(x, 0.0, 1.0).unwrap();
        let cr = cross_ratio(&p(0.0), &p(1.5), &p(1.5), &p(3.0), &tol()).unwrap();
        assert_relative_eq!(cr, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_ratio_coincident_error() {
        let p = |x: f64| ProjPoint::from_coords(x, 0.0, 1.0).unwrap();
        assert_eq!(
            cross_ratio(&p(0.0), &p(0.0), &p(2.0), &p(3.0), &tol()).unwrap_err(),
            ProjError::CoincidentPoints
        );
    }

    #[test]
    fn cross_ratio_harmonic_in_two_charts() {
        // 0, 1, −1, ∞ on the x-axis: harmonic, value −1
        let a = ProjPoint::from_coords(0.0, 0.0, 1.0).unwrap();
        let x = ProjPoint::from_coords(1.0, 0.0, 1.0).unwrap();
        let y = ProjPoint::from_coords(-1.0, 0.0, 1.0).unwrap();
        let b = ProjPoint::from_coords(1.0, 0.0, 0.0).unwrap();
        let cr1 = cross_ratio(&a, &x, &y, &b, &tol()).unwrap();
        assert_relative_eq!(cr1, -1.0, epsilon = 1e-12);
        // same four points pushed through a projective map (a chart change)
        let g = Mat3::new(2.0, 0.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.0, 3.0);
        let cr2 = cross_ratio(
            &a.apply(&g).unwrap(),
            &x.apply(&g).unwrap(),
            &y.apply(&g).unwrap(),
            &b.apply(&g).unwrap(),
            &tol(),
        )
        .unwrap();
        assert!((cr1 - cr2).abs() < 1e-8);
    }

    #[test]
    fn cross_ratio_projective_invariance_random() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..300 {
            let s: Vec<f64> = {
                let mut v: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
                v.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
                if v.len() < 4 {
                    continue;
                }
                v
            };
            let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.2).normalize();
            let base = Vec3::new(0.1, -0.2, 1.0);
            let pt = |t: f64| ProjPoint::new(base + dir * t).unwrap();
            let (a, x, y, b) = (pt(s[0]), pt(s[1]), pt(s[2]), pt(s[3]));
            let Ok(cr1) = cross_ratio(&a, &x, &y, &b, &tol()) else {
                continue;
            };
            let g = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            if g.determinant().abs() < 0.05 {
                continue;
            }
            let cr2 = cross_ratio(
                &a.apply(&g).unwrap(),
                &x.apply(&g).unwrap(),
                &y.apply(&g).unwrap(),
                &b.apply(&g).unwrap(),
                &tol(),
            )
            .unwrap();
            assert!(
                (cr1 - cr2).abs() < 1e-8 * (1.0 + cr1.abs()),
                "cr1={cr1} cr2={cr2}"
            );
        }
    }

    #[test]
    fn conic_equivariance_random() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..100 {
            // points on a random conic: image of the unit circle
            let g = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            if g.determinant().abs() < 0.05 {
                continue;
            }
            let pts: Vec<ProjPoint> = (0..7)
                .map(|k| {
                    let t = 0.31 + 2.0 * std::f64::consts::PI * k as f64 / 7.0;
                    ProjPoint::new(Vec3::new(t.cos(), t.sin(), 1.0)).unwrap()
                })
                .collect();
            let fit0 = conic_through(&pts, &tol()).unwrap();
            let moved: Vec<ProjPoint> = pts.iter().map(|p| p.apply(&g).unwrap()).collect();
            let fit1 = conic_through(&moved, &tol()).unwrap();
            let g_inv = g.try_inverse().unwrap();
            let pushed = fit0.conic.transform(&g_inv, &tol()).unwrap();
            let d = (pushed.form() - fit1.conic.form()).norm().min(
                (pushed.form() + fit1.conic.form()).norm(),
            );
            assert!(d < 1e-8, "conic equivariance residual {d}");
        }
    }

    #[test]
    fn intertwiner_recovers_conjugation() {
        let mut rng = StdRng::seed_from_u64(13);
        let a1 = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let a2 = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let g = Mat3::new(1.0, 0.3, 0.0, -0.2, 1.1, 0.5, 0.0, 0.1, 0.9);
        let g_inv = g.try_inverse().unwrap();
        let b1 = g * a1 * g_inv;
        let b2 = g * a2 * g_inv;
        let h = intertwiner(&[a1, a2], &[b1, b2]).unwrap();
        // h should be proportional to g
        let hn = h / h.norm();
        let gn = g / g.norm();
        let d = (hn - gn).norm().min((hn + gn).norm());
        assert!(d < 1e-8, "intertwiner mismatch {d}");
    }
}
