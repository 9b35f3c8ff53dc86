//! The reference hyperbolic structure.
//!
//! The hyperbolic plane is modelled inside the type-(1,1,1), t = 1 projective
//! representation: the invariant form J has signature (2,1), its projectivized
//! null cone is the boundary circle, and circle points are canonicalized by
//! angle in a fixed J-diagonalizing frame. On top of this sit the orbit
//! points z_i, the intervals I, K, J and their primed versions, and the code
//! generator that expands a boundary point into subdivision letters.

use thiserror::Error;

use crate::cartan::{build_representation, normal_form, CartanError, CoxeterRep, TriangleSignature};
use crate::group::{alphabets, evaluate, Alphabets, EvalCache, GroupError, GroupWord, RepMats};
use crate::projlin::{eig3, Mat3, Vec3};
use crate::tol::Tolerances;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HyperbolicError {
    #[error("no invariant form found for the reference representation")]
    FormNotFound,
    #[error("vector is not on the null cone")]
    NotOnCone,
    #[error("word is not hyperbolic (no transverse fixed pair on the circle)")]
    NotHyperbolic,
    #[error("orbit point labelling is inconsistent: {0}")]
    BadLabelling(String),
    #[error(transparent)]
    Cartan(#[from] CartanError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

const TAU: f64 = 2.0 * std::f64::consts::PI;

// ── Circle points and intervals ─────────────────────────────────────────────

/// Boundary point, canonicalized by its angle in the J-frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirclePoint {
    pub angle: f64,
}

impl CirclePoint {
    pub fn new(angle: f64) -> Self {
        Self {
            angle: angle.rem_euclid(TAU),
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let d = (self.angle - other.angle).rem_euclid(TAU);
        d.min(TAU - d)
    }
}

/// Closed counterclockwise arc from `start` to `end`.
#[derive(Debug, Clone, Copy)]
pub struct Interval {
    pub start: CirclePoint,
    pub end: CirclePoint,
}

impl Interval {
    pub fn new(start: CirclePoint, end: CirclePoint) -> Self {
        Self { start, end }
    }

    /// Counterclockwise length.
    pub fn length(&self) -> f64 {
        (self.end.angle - self.start.angle).rem_euclid(TAU)
    }

    /// Signed membership margin: distance to the nearer endpoint, negative
    /// outside the arc.
    pub fn margin(&self, p: CirclePoint) -> f64 {
        let len = self.length();
        let pos = (p.angle - self.start.angle).rem_euclid(TAU);
        if pos <= len {
            pos.min(len - pos)
        } else {
            -(pos - len).min(TAU - pos)
        }
    }

    pub fn contains(&self, p: CirclePoint, tol: f64) -> bool {
        self.margin(p) >= -tol
    }

    /// The arc between a and b that contains `witness`.
    pub fn between_containing(a: CirclePoint, b: CirclePoint, witness: CirclePoint) -> Self {
        let cand = Interval::new(a, b);
        if cand.margin(witness) >= Interval::new(b, a).margin(witness) {
            cand
        } else {
            Interval::new(b, a)
        }
    }

    /// The arc between a and b that avoids both witnesses.
    pub fn between_avoiding(a: CirclePoint, b: CirclePoint, w1: CirclePoint, w2: CirclePoint) -> Self {
        let cand = Interval::new(a, b);
        let other = Interval::new(b, a);
        let score = |iv: &Interval| iv.margin(w1).max(iv.margin(w2));
        if score(&cand) <= score(&other) {
            cand
        } else {
            other
        }
    }
}

// ── Fuchsian representation ─────────────────────────────────────────────────

/// The discrete faithful reference representation with its invariant form
/// and the frame diagonalizing it to diag(1,1,−1).
#[derive(Debug, Clone)]
pub struct FuchsianRep {
    pub rep: CoxeterRep,
    pub mats: RepMats,
    pub j_form: Mat3,
    frame: Mat3,
    frame_inv: Mat3,
}

/// Build the reference representation (type (1,1,1), t = 1) and solve
/// sᵀJs = J for the invariant form, normalized to signature (2,1) with the
/// positive eigenvalue product equal to 1.
pub fn fuchsian(sig: TriangleSignature, tol: &Tolerances) -> Result<FuchsianRep, HyperbolicError> {
    let c = normal_form(sig, sig.hitchin_type(), 1.0)?;
    let rep = build_representation(&c, tol)?;
    let mut j = rep.invariant_form().ok_or(HyperbolicError::FormNotFound)?;
    let se = nalgebra::SymmetricEigen::new(j);
    let pos = se.eigenvalues.iter().filter(|&&d| d > 1e-9).count();
    if pos == 1 {
        j = -j;
    }
    let se = nalgebra::SymmetricEigen::new(j);
    // order columns (positive, positive, negative)
    let mut idx: Vec<usize> = (0..3).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
    let d = [
        se.eigenvalues[idx[0]],
        se.eigenvalues[idx[1]],
        se.eigenvalues[idx[2]],
    ];
    if !(d[0] > 0.0 && d[1] > 0.0 && d[2] < 0.0) {
        return Err(HyperbolicError::FormNotFound);
    }
    let scale = (d[0] * d[1]).sqrt();
    j /= scale;
    let d = [d[0] / scale, d[1] / scale, d[2] / scale];
    // frame W with J = Wᵀ diag(1,1,−1) W
    let mut w = Mat3::zeros();
    for (row, &col) in idx.iter().enumerate() {
        let v = se.eigenvectors.column(col);
        let s = d[row].abs().sqrt();
        for c2 in 0..3 {
            w[(row, c2)] = v[c2] * s;
        }
    }
    let frame_inv = w.try_inverse().ok_or(HyperbolicError::FormNotFound)?;
    let mats = RepMats::new(rep.s);
    Ok(FuchsianRep {
        rep,
        mats,
        j_form: j,
        frame: w,
        frame_inv,
    })
}

impl FuchsianRep {
    /// Ambient representative of a circle point (a null vector of J).
    pub fn point_at(&self, p: CirclePoint) -> Vec3 {
        self.frame_inv * Vec3::new(p.angle.cos(), p.angle.sin(), 1.0)
    }

    /// Angle of a null vector; error when it is off the cone.
    pub fn angle_of(&self, v: &Vec3) -> Result<CirclePoint, HyperbolicError> {
        let mut y = self.frame * v;
        if y.z < 0.0 {
            y = -y;
        }
        let r = y.x.hypot(y.y);
        if y.z < 1e-300 || ((r - y.z) / (r + y.z)).abs() > 1e-5 {
            return Err(HyperbolicError::NotOnCone);
        }
        Ok(CirclePoint::new(y.y.atan2(y.x)))
    }

    /// Circle action of a group matrix.
    pub fn act(&self, m: &Mat3, p: CirclePoint) -> CirclePoint {
        self.angle_of(&(m * self.point_at(p)))
            .expect("group action preserves the null cone")
    }

    pub fn act_word(&self, w: &GroupWord, p: CirclePoint, cache: &EvalCache) -> CirclePoint {
        self.act(&evaluate(w, &self.mats, cache), p)
    }

    /// The J-timelike basepoint (the frame origin).
    pub fn base_point(&self) -> Vec3 {
        self.frame_inv * Vec3::z()
    }

    /// The J-diagonalizing frame (rows map to cone coordinates).
    pub fn frame_matrix(&self) -> Mat3 {
        self.frame
    }

    /// Hyperbolic distance between two timelike directions.
    pub fn distance(&self, u: &Vec3, v: &Vec3) -> f64 {
        let q = |a: &Vec3, b: &Vec3| a.dot(&(self.j_form * b));
        let uu = q(u, u);
        let vv = q(v, v);
        let uv = q(u, v);
        let c = uv.abs() / (uu * vv).sqrt();
        c.max(1.0).acosh()
    }
}

/// Attracting and repelling fixed points of a hyperbolic word on the circle.
pub fn boundary_fixed_points(
    fr: &FuchsianRep,
    w: &GroupWord,
    cache: &EvalCache,
    tol: &Tolerances,
) -> Result<(CirclePoint, CirclePoint), HyperbolicError> {
    let m = evaluate(w, &fr.mats, cache);
    let e = eig3(&m, tol);
    if e.has_complex_pair() {
        return Err(HyperbolicError::NotHyperbolic);
    }
    let moduli = e.moduli();
    let scale = 1.0 + moduli[0];
    if moduli[0] - moduli[1] < 1e-9 * scale || moduli[1] - moduli[2] < 1e-9 * scale {
        return Err(HyperbolicError::NotHyperbolic);
    }
    let att = e.vectors[0].ok_or(HyperbolicError::NotHyperbolic)?;
    let rep = e.vectors[2].ok_or(HyperbolicError::NotHyperbolic)?;
    let a = fr.angle_of(&att).map_err(|_| HyperbolicError::NotHyperbolic)?;
    let r = fr.angle_of(&rep).map_err(|_| HyperbolicError::NotHyperbolic)?;
    Ok((a, r))
}

// ── Orbit points and intervals ──────────────────────────────────────────────

/// Interval data of one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameIntervals {
    /// I = [z3, z0], the arc avoiding z1 and z2.
    pub i: Interval,
    /// K = [z1, z2].
    pub k: Interval,
    /// J = [(s2s3s1)−, (s1s2s3)−], the arc containing K.
    pub j: Interval,
}

/// One code step: the frame whose alphabet supplied the letter, the index of
/// the letter inside that alphabet, and the letter as a word.
#[derive(Debug, Clone)]
pub struct CodeStep {
    pub frame: u8,
    pub q_index: usize,
    pub word: GroupWord,
}

/// A code: subdivision letters with the frame cycling f → f+2 → f+1 → f.
#[derive(Debug, Clone)]
pub struct Code {
    pub start_frame: u8,
    pub steps: Vec<CodeStep>,
}

/// Everything the code machinery needs for one signature: the reference
/// representation, the alphabets, the orbit points of all three frames, the
/// intervals, and the subdivision arcs.
pub struct HyperbolicTables {
    pub sig: TriangleSignature,
    pub fuchs: FuchsianRep,
    pub alph: Alphabets,
    /// z[k][i]: orbit point i of frame k (2·p3^{(k)} points).
    pub z: [Vec<CirclePoint>; 3],
    pub frames: [FrameIntervals; 3],
    /// sub[k][q]: the arc γ_q · I^{(k+2)} inside I^{(k)}.
    sub: [Vec<Interval>; 3],
    /// inverse letters, indexed like the alphabets.
    inv: [Vec<GroupWord>; 3],
    pub cache: EvalCache,
}

fn shifted_word(letters: &[u8], shift: usize, sig: &TriangleSignature) -> GroupWord {
    let moved: Vec<u8> = letters.iter().map(|&g| ((g as usize + shift) % 3) as u8).collect();
    GroupWord::from_letters(&moved, sig)
}

/// Orbit points z_0 … z_{2p3−1} of frame `k`, filled from the relations
/// s1 z_i = z_{3−i} and s2 z_i = z_{5−i} (in the frame's own labelling).
fn z_points_frame(
    fr: &FuchsianRep,
    sig: &TriangleSignature,
    k: usize,
    cache: &EvalCache,
    tol: &Tolerances,
) -> Result<Vec<CirclePoint>, HyperbolicError> {
    let n = 2 * sig.p()[(2 + k) % 3] as usize;
    let coxeter = shifted_word(&[0, 1, 2], k, sig);
    let (z0, _) = boundary_fixed_points(fr, &coxeter, cache, tol)?;
    let g1 = fr.mats.gens[k % 3];
    let g2 = fr.mats.gens[(1 + k) % 3];
    let mut z: Vec<Option<CirclePoint>> = vec![None; n];
    z[0] = Some(z0);
    let mut queue = vec![0usize];
    while let Some(i) = queue.pop() {
        let zi = z[i].unwrap();
        for (m, target) in [(g1, (3 + n as i64 - i as i64) as usize % n), (g2, (5 + n as i64 - i as i64) as usize % n)] {
            let img = fr.act(&m, zi);
            match z[target] {
                None => {
                    z[target] = Some(img);
                    queue.push(target);
                }
                Some(prev) => {
                    if prev.distance(&img) > tol.angle * 1e3 {
                        return Err(HyperbolicError::BadLabelling(format!(
                            "relation residual {} at index {target}",
                            prev.distance(&img)
                        )));
                    }
                }
            }
        }
    }
    let z: Vec<CirclePoint> = z
        .into_iter()
        .map(|p| p.ok_or_else(|| HyperbolicError::BadLabelling("orbit not transitive".into())))
        .collect::<Result<_, _>>()?;

    // the labels must advance monotonically around the circle
    let step0 = (z[1].angle - z[0].angle).rem_euclid(TAU);
    let dir = if step0 < std::f64::consts::PI { 1.0 } else { -1.0 };
    let mut total = 0.0;
    for i in 0..n {
        let d = (z[(i + 1) % n].angle - z[i].angle).rem_euclid(TAU);
        let d = if dir > 0.0 { d } else { TAU - d };
        if d <= 0.0 || d >= TAU {
            return Err(HyperbolicError::BadLabelling("cyclic order violated".into()));
        }
        total += d;
    }
    if (total - TAU).abs() > 1e-6 {
        return Err(HyperbolicError::BadLabelling("labels wrap more than once".into()));
    }
    // z2 is the attracting point of the once-rotated Coxeter word
    let rot = shifted_word(&[2, 0, 1], k, sig);
    let (z2, _) = boundary_fixed_points(fr, &rot, cache, tol)?;
    if z[2].distance(&z2) > 1e-8 {
        return Err(HyperbolicError::BadLabelling("z2 mismatch".into()));
    }
    Ok(z)
}

impl HyperbolicTables {
    pub fn new(sig: TriangleSignature, tol: &Tolerances) -> Result<Self, HyperbolicError> {
        let fuchs = fuchsian(sig, tol)?;
        let alph = alphabets(&sig)?;
        let cache = EvalCache::default();
        let z = [
            z_points_frame(&fuchs, &sig, 0, &cache, tol)?,
            z_points_frame(&fuchs, &sig, 1, &cache, tol)?,
            z_points_frame(&fuchs, &sig, 2, &cache, tol)?,
        ];
        let mut frames = Vec::with_capacity(3);
        for k in 0..3 {
            let zs = &z[k];
            // the arc between z3 and z0 avoiding z1 and z2, as a set; which
            // endpoint leads depends on how the labels wind in our chart
            let i = Interval::between_avoiding(zs[3], zs[0], zs[1], zs[2]);
            let kk = Interval::between_avoiding(zs[1], zs[2], zs[0], zs[3]);
            let cox = shifted_word(&[0, 1, 2], k, &sig);
            let rot = shifted_word(&[1, 2, 0], k, &sig);
            let (_, cox_minus) = boundary_fixed_points(&fuchs, &cox, &cache, tol)?;
            let (_, rot_minus) = boundary_fixed_points(&fuchs, &rot, &cache, tol)?;
            let j = Interval::between_containing(rot_minus, cox_minus, zs[1]);
            frames.push(FrameIntervals { i, k: kk, j });
        }
        let frames: [FrameIntervals; 3] = [frames[0], frames[1], frames[2]];

        // subdivision arcs γ·I^{(k+2)} for γ in Q^{(k)}
        let mut sub: [Vec<Interval>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut inv: [Vec<GroupWord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for k in 0..3 {
            let inner = frames[(k + 2) % 3].i;
            for gamma in &alph.q[k] {
                let m = evaluate(gamma, &fuchs.mats, &cache);
                let a = fuchs.act(&m, inner.start);
                let b = fuchs.act(&m, inner.end);
                let mid = fuchs.act(
                    &m,
                    CirclePoint::new(inner.start.angle + 0.5 * inner.length()),
                );
                sub[k].push(Interval::between_containing(a, b, mid));
                inv[k].push(gamma.inverse());
            }
        }
        Ok(Self {
            sig,
            fuchs,
            alph,
            z,
            frames,
            sub,
            inv,
            cache,
        })
    }

    /// Subdivision arcs of frame k.
    pub fn subdivision(&self, k: usize) -> &[Interval] {
        &self.sub[k]
    }

    /// The frame whose interval contains x; ties resolved 0, 2, 1.
    pub fn frame_of(&self, x: CirclePoint, tol: &Tolerances) -> u8 {
        for k in [0usize, 2, 1] {
            if self.frames[k].i.contains(x, tol.angle * 1e3) {
                return k as u8;
            }
        }
        // the arcs tile the circle; only reachable through rounding
        let mut best = 0usize;
        let mut best_m = f64::NEG_INFINITY;
        for k in 0..3 {
            let m = self.frames[k].i.margin(x);
            if m > best_m {
                best_m = m;
                best = k;
            }
        }
        best as u8
    }

    /// Expand x into `depth` subdivision letters.
    ///
    /// At each step the letter γ is chosen with the current remainder inside
    /// γ·I_next; at subdivision boundaries, where two letters qualify, the
    /// one making the remainder the counterclockwise endpoint of the image
    /// arc is taken (the convention that keeps eventually-fixed points, such
    /// as the attracting endpoint of I, on constant letter blocks).
    pub fn code(&self, x: CirclePoint, depth: usize, tol: &Tolerances) -> Code {
        let start_frame = self.frame_of(x, tol);
        let mut frame = start_frame as usize;
        let mut theta = x;
        let mut steps = Vec::with_capacity(depth);
        let t_loose = tol.angle * 1e3;
        for _ in 0..depth {
            let arcs = &self.sub[frame];
            let mut strict: Option<(usize, f64)> = None;
            let mut best: Option<(usize, f64)> = None;
            let mut tie: Option<(usize, f64)> = None;
            for (qi, arc) in arcs.iter().enumerate() {
                let m = arc.margin(theta);
                if best.map_or(true, |(_, bm)| m > bm) {
                    best = Some((qi, m));
                }
                if m > t_loose {
                    // deepest containing arc keeps the remainder interior
                    if strict.map_or(true, |(_, sm)| m > sm) {
                        strict = Some((qi, m));
                    }
                } else if m >= -t_loose {
                    // boundary case: prefer the arc whose ccw end is theta
                    let d_end = arc.end.distance(&theta);
                    if tie.map_or(true, |(_, td)| d_end < td) {
                        tie = Some((qi, d_end));
                    }
                }
            }
            let qi = strict
                .map(|(i, _)| i)
                .or_else(|| tie.map(|(i, _)| i))
                .unwrap_or_else(|| best.expect("nonempty alphabet").0);
            let gamma = &self.alph.q[frame][qi];
            steps.push(CodeStep {
                frame: frame as u8,
                q_index: qi,
                word: gamma.clone(),
            });
            theta = self
                .fuchs
                .act_word(&self.inv[frame][qi], theta, &self.cache);
            frame = (frame + 2) % 3;
        }
        Code {
            start_frame,
            steps,
        }
    }

    /// Largest violation of the code membership invariant: after each step
    /// the remainder must lie in the frame's interval.
    pub fn code_violation(&self, x: CirclePoint, code: &Code) -> f64 {
        let mut theta = x;
        let mut frame = code.start_frame as usize;
        let mut worst: f64 = 0.0;
        for step in &code.steps {
            theta = self
                .fuchs
                .act_word(&step.word.inverse(), theta, &self.cache);
            frame = (frame + 2) % 3;
            let m = self.frames[frame].i.margin(theta);
            worst = worst.max(-m);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn tables(p1: u32, p2: u32, p3: u32) -> HyperbolicTables {
        let sig = TriangleSignature::new(p1, p2, p3).unwrap();
        HyperbolicTables::new(sig, &tol()).unwrap()
    }

    #[test]
    fn interval_membership() {
        let iv = Interval::new(CirclePoint::new(6.0), CirclePoint::new(1.0));
        assert!(iv.contains(CirclePoint::new(0.2), 1e-12));
        assert!(iv.contains(CirclePoint::new(6.1), 1e-12));
        assert!(!iv.contains(CirclePoint::new(3.0), 1e-12));
        assert!(iv.margin(CirclePoint::new(0.2)) > 0.0);
        assert!(iv.margin(CirclePoint::new(3.0)) < 0.0);
        assert_relative_eq!(iv.length(), 2.0 * std::f64::consts::PI - 5.0, epsilon = 1e-12);
    }

    #[test]
    fn fuchsian_traces_and_signature() {
        let tl = tol();
        for (p1, p2, p3) in [(3u32, 3, 5), (3, 4, 5), (5, 5, 5)] {
            let sig = TriangleSignature::new(p1, p2, p3).unwrap();
            let fr = fuchsian(sig, &tl).unwrap();
            // tr ρ0(s_i s_j) = c_k² − 1 with c_k = 2cos(π/p_k)
            let p = sig.p();
            for (i, j, k) in [(1usize, 2usize, 0usize), (2, 0, 1), (0, 1, 2)] {
                let c = 2.0 * (std::f64::consts::PI / p[k] as f64).cos();
                let tr = (fr.mats.gens[i] * fr.mats.gens[j]).trace();
                assert_relative_eq!(tr, c * c - 1.0, epsilon = 1e-9);
            }
            // J has signature (2,1) after normalization
            let se = nalgebra::SymmetricEigen::new(fr.j_form);
            let pos = se.eigenvalues.iter().filter(|&&d| d > 0.0).count();
            assert_eq!(pos, 2);
            for m in fr.mats.gens.iter() {
                assert!((m.transpose() * fr.j_form * m - fr.j_form).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rotation_orders_hold() {
        let tl = tol();
        let sig = TriangleSignature::new(3, 3, 5).unwrap();
        let fr = fuchsian(sig, &tl).unwrap();
        for ((i, j), order) in [((1usize, 2usize), 3u32), ((2, 0), 3), ((0, 1), 5)] {
            let rot = fr.mats.gens[i] * fr.mats.gens[j];
            let mut pw = Mat3::identity();
            for _ in 0..order {
                pw *= rot;
            }
            assert!((pw - Mat3::identity()).norm() < 1e-7);
        }
    }

    #[test]
    fn boundary_fixed_points_basic() {
        let tl = tol();
        let t = tables(3, 3, 5);
        let sig = t.sig;
        let cox = GroupWord::parse("abc", &sig).unwrap();
        let (att, rep) = boundary_fixed_points(&t.fuchs, &cox, &t.cache, &tl).unwrap();
        assert!(att.distance(&rep) > 1e-3);
        // elliptic words have no boundary fixed points
        let ell = GroupWord::parse("ab", &sig).unwrap();
        assert_eq!(
            boundary_fixed_points(&t.fuchs, &ell, &t.cache, &tl).unwrap_err(),
            HyperbolicError::NotHyperbolic
        );
        // conjugation equivariance
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..10 {
            let len = rng.gen_range(1..6);
            let letters: Vec<u8> = (0..len).map(|_| rng.gen_range(0..3)).collect();
            let g = GroupWord::from_letters(&letters, &sig);
            let conj = g.concat(&cox, &sig).concat(&g.inverse(), &sig);
            let (att_c, rep_c) = boundary_fixed_points(&t.fuchs, &conj, &t.cache, &tl).unwrap();
            let gm = evaluate(&g, &t.fuchs.mats, &t.cache);
            assert!(att_c.distance(&t.fuchs.act(&gm, att)) < 1e-7);
            assert!(rep_c.distance(&t.fuchs.act(&gm, rep)) < 1e-7);
        }
    }

    #[test]
    fn z_point_relations_and_order() {
        let tl = tol();
        let t = tables(3, 3, 5);
        let z = &t.z[0];
        assert_eq!(z.len(), 10);
        let n = z.len();
        let a = t.fuchs.mats.gens[0];
        let b = t.fuchs.mats.gens[1];
        for i in 0..n {
            let za = t.fuchs.act(&a, z[i]);
            let zb = t.fuchs.act(&b, z[i]);
            assert!(za.distance(&z[(3 + n - i) % n]) < tl.angle * 1e3);
            assert!(zb.distance(&z[(5 + n - i) % n]) < tl.angle * 1e3);
            // composed relation: (s1s2) z_i = z_{i−2}
            let zab = t.fuchs.act(&(a * b), z[i]);
            assert!(zab.distance(&z[(i + n - 2) % n]) < 1e-9);
        }
        // z0 and z2 are the stated attracting points
        let (z0, _) =
            boundary_fixed_points(&t.fuchs, &GroupWord::parse("abc", &t.sig).unwrap(), &t.cache, &tl)
                .unwrap();
        let (z2, _) =
            boundary_fixed_points(&t.fuchs, &GroupWord::parse("cab", &t.sig).unwrap(), &t.cache, &tl)
                .unwrap();
        assert!(z[0].distance(&z0) < 1e-9);
        assert!(z[2].distance(&z2) < 1e-9);
    }

    #[test]
    fn frame_coincidences() {
        // z0' = z3, z2' = z0, z3' = z2, z0'' = z2, z3'' = z0
        let t = tables(3, 3, 5);
        let z = &t.z;
        assert!(z[1][0].distance(&z[0][3]) < 1e-9);
        assert!(z[1][2].distance(&z[0][0]) < 1e-9);
        assert!(z[1][3].distance(&z[0][2]) < 1e-9);
        assert!(z[2][0].distance(&z[0][2]) < 1e-9);
        assert!(z[2][3].distance(&z[0][0]) < 1e-9);
    }

    #[test]
    fn intervals_tile_and_nest() {
        for t in [tables(3, 3, 5), tables(5, 5, 5), tables(3, 5, 7)] {
            // I, I', I'' tile the circle
            let total: f64 = (0..3).map(|k| t.frames[k].i.length()).sum();
            assert_relative_eq!(total, TAU, epsilon = 1e-9);
            // K ⊂ J strictly
            for k in 0..3 {
                let fi = &t.frames[k];
                assert!(fi.j.margin(fi.k.start) > 1e-6);
                assert!(fi.j.margin(fi.k.end) > 1e-6);
                // I and K are disjoint, with open gaps on both sides
                assert!(fi.i.margin(fi.k.start) < -1e-6);
                assert!(fi.i.margin(fi.k.end) < -1e-6);
                let zs = &t.z[k];
                assert!(Interval::new(zs[0], zs[1]).length() > 1e-6);
                assert!(Interval::new(zs[2], zs[3]).length() > 1e-6);
            }
        }
    }

    #[test]
    fn subdivision_covers_interval() {
        // the subdivision is a cover of I with arcs meeting at orbit points
        // (for odd p3 the two letter families overlap in exactly one gap)
        for t in [tables(3, 3, 5), tables(5, 5, 5)] {
            for k in 0..3 {
                let arcs = t.subdivision(k);
                let outer = t.frames[k].i;
                for arc in arcs {
                    assert!(arc.length() < outer.length());
                    assert!(outer.contains(arc.start, 1e-9));
                    assert!(outer.contains(arc.end, 1e-9));
                    // every subdivision endpoint is an orbit point
                    for p in [arc.start, arc.end] {
                        let hit = t.z[k].iter().any(|z| z.distance(&p) < 1e-8);
                        assert!(hit, "subdivision endpoint off the orbit");
                    }
                }
                // dense sampling of I is covered
                for s in 0..500 {
                    let theta = CirclePoint::new(
                        outer.start.angle + outer.length() * s as f64 / 499.0,
                    );
                    let covered = arcs.iter().any(|a| a.contains(theta, 1e-9));
                    assert!(covered, "uncovered point in frame {k}");
                }
            }
        }
    }

    #[test]
    fn code_of_attracting_endpoint_is_constant_block() {
        let tl = tol();
        let t = tables(3, 3, 5);
        let z0 = t.z[0][0];
        let code = t.code(z0, 12, &tl);
        assert_eq!(code.start_frame, 0);
        // letters cycle ab, ca, bc forever: the square of the Coxeter element
        let expect = ["ab", "ca", "bc"];
        for (n, step) in code.steps.iter().enumerate() {
            assert_eq!(step.word.to_string(), expect[n % 3], "step {n}");
        }
        assert!(t.code_violation(z0, &code) < 1e-9);
    }

    #[test]
    fn code_first_letter_matches_subdivision() {
        let tl = tol();
        let t = tables(3, 3, 5);
        // x strictly inside γ·I'' and no other arc forces the first letter
        for (qi, arc) in t.subdivision(0).iter().enumerate() {
            let mid = CirclePoint::new(arc.start.angle + 0.5 * arc.length());
            if t.frames[0].i.margin(mid) < 1e-6 {
                continue;
            }
            let claimants = t
                .subdivision(0)
                .iter()
                .filter(|a| a.margin(mid) > 1e-9)
                .count();
            if claimants > 1 {
                continue; // overlap region: either letter is a valid code
            }
            let code = t.code(mid, 1, &tl);
            assert_eq!(code.steps[0].q_index, qi);
        }
    }

    #[test]
    fn codes_valid_for_random_points() {
        let tl = tol();
        let t = tables(3, 3, 5);
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..100 {
            let x = CirclePoint::new(rng.gen_range(0.0..TAU));
            let code = t.code(x, 40, &tl);
            assert_eq!(code.steps.len(), 40);
            assert!(
                t.code_violation(x, &code) < 1e-8,
                "code invariant violated at x={}",
                x.angle
            );
        }
    }

    #[test]
    fn orbit_points_converge_to_target() {
        let tl = tol();
        let t = tables(3, 3, 5);
        let o = t.fuchs.base_point();
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..100 {
            let x = CirclePoint::new(rng.gen_range(0.0..TAU));
            let code = t.code(x, 60, &tl);
            let mut g = Mat3::identity();
            for step in &code.steps {
                g *= evaluate(&step.word, &t.fuchs.mats, &t.cache);
            }
            let img = g * o;
            // project the orbit point radially to the boundary circle
            let mut y = t.fuchs.frame * img;
            if y.z < 0.0 {
                y = -y;
            }
            let ang = CirclePoint::new(y.y.atan2(y.x));
            assert!(
                ang.distance(&x) < 1e-6,
                "orbit point at angle distance {}",
                ang.distance(&x)
            );
        }
    }

    #[test]
    fn quasigeodesic_growth() {
        let tl = tol();
        let t = tables(3, 3, 5);
        let o = t.fuchs.base_point();
        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..5 {
            let x = CirclePoint::new(rng.gen_range(0.0..TAU));
            let code = t.code(x, 60, &tl);
            let mut g = Mat3::identity();
            let mut dists = Vec::new();
            for step in &code.steps {
                g *= evaluate(&step.word, &t.fuchs.mats, &t.cache);
                dists.push(t.fuchs.distance(&o, &(g * o)));
            }
            // linear regression of distance against step count
            let n = dists.len() as f64;
            let mean_x = (n - 1.0) / 2.0;
            let mean_y: f64 = dists.iter().sum::<f64>() / n;
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, d) in dists.iter().enumerate() {
                num += (i as f64 - mean_x) * (d - mean_y);
                den += (i as f64 - mean_x).powi(2);
            }
            let slope = num / den;
            assert!(slope > 0.1, "quasigeodesic slope {slope}");
        }
    }
}
