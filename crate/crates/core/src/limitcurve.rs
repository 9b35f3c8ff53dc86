//! Constructive boundary maps into the flag manifold.
//!
//! For a Barbot representation with parameter outside the critical window
//! the map ξ⁽¹⁾ is evaluated by running the subdivision code of a boundary
//! point through the nested-box system and returning the chart barycenter of
//! the final moved box, with its diameter as the error radius. The line part
//! ξ⁽²⁾ comes from the inverse-transpose representation (generators
//! transposed) followed by the standard duality. Parameters below the
//! critical window are rerouted through the relabelling that swaps the last
//! two generators, using an explicit boundary transfer between the two
//! reference hyperbolic structures.
//!
//! Hitchin representations get an approximate curve from the same codes via
//! the top singular direction of long word images (flagged as approximate by
//! the diameter proxy σ2/σ1).

use std::collections::HashSet;

use thiserror::Error;

use crate::boxes::{BoxError, BoxSystem};
use crate::cartan::{build_representation, CartanError, CartanMatrix, TriangleSignature};
use crate::classify::t_crit;
use crate::group::{evaluate, Gen, GroupWord, RepMats};
use crate::hyperbolic::{
    boundary_fixed_points, CirclePoint, HyperbolicError, HyperbolicTables, Interval,
};
use crate::projlin::{eig3, intertwiner, Mat3, ProjLine, ProjPoint};
use crate::tol::Tolerances;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("parameter t = {t} lies in the critical window ({lo}, {hi}) where no boundary map exists")]
    NotInBarbotRange { t: f64, lo: f64, hi: f64 },
    #[error("representation type supports no boundary-map construction")]
    UnsupportedComponent,
    #[error("boundary transfer between the two reference structures failed")]
    TransferFailed,
    #[error(transparent)]
    Cartan(#[from] CartanError),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Boxes(#[from] BoxError),
}

// ── Samples and diagnostics ─────────────────────────────────────────────────

/// One limit-curve sample: circle parameter, the flag, and the box
/// diameters at the final depth.
#[derive(Debug, Clone)]
pub struct FlagSample {
    pub x: CirclePoint,
    pub point: ProjPoint,
    pub line: ProjLine,
    pub diam1: f64,
    pub diam2: f64,
    pub depth: usize,
}

#[derive(Debug, Clone)]
pub struct CurveDiagnostics {
    /// minimum chordal distance between curve points of separated samples
    pub min_pair_separation: f64,
    /// min over separated ordered pairs of |⟨ξ⁽²⁾(y), ξ⁽¹⁾(x)⟩|
    pub min_transversality: f64,
    /// max over samples and generators of d(ξ(γx), ρ(γ)ξ(x))
    pub equivariance_residual: f64,
    /// fitted slope of the per-length minimum singular-value gap
    pub svgap_slope: f64,
    /// near-incidences violating the interval pattern of the z-decomposition
    pub incidence_pattern_violations: usize,
    /// best clearance of a mid-grid dual line from all curve points
    pub dual_line_clearance: f64,
}

// ── Engine ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    /// nested boxes (Barbot component, t outside the critical window)
    BarbotBoxes,
    /// svgap-guided power iteration on code words (Hitchin; approximate)
    HitchinPower,
}

/// Boundary transfer between the reference structure of the requested
/// signature and the structure of the relabelled one.
struct Transfer {
    phi_inv: Mat3,
}

struct Branch {
    tables: HyperbolicTables,
    mats: RepMats,
    boxes: Option<BoxSystem>,
    transfer: Option<Transfer>,
}

impl Branch {
    fn map_in(&self, req: &HyperbolicTables, x: CirclePoint) -> CirclePoint {
        match &self.transfer {
            None => x,
            Some(tr) => {
                let v = req.fuchs.point_at(x);
                self.tables
                    .fuchs
                    .angle_of(&(tr.phi_inv * v))
                    .expect("transfer preserves the null cone")
            }
        }
    }

    /// point and diameter through the nested boxes
    fn xi_boxes(
        &self,
        req: &HyperbolicTables,
        x: CirclePoint,
        depth: usize,
        tol: &Tolerances,
    ) -> (ProjPoint, f64) {
        let sys = self.boxes.as_ref().expect("box branch");
        let xw = self.map_in(req, x);
        let code = self.tables.code(xw, depth, tol);
        let mut m = Mat3::identity();
        for step in &code.steps {
            m *= evaluate(&step.word, &self.mats, &self.tables.cache);
        }
        let f_end = (code.start_frame as usize + 2 * depth) % 3;
        let outer = &sys.boxes[code.start_frame as usize];
        let inner = &sys.boxes[f_end];
        let mut coords = Vec::with_capacity(6);
        let mut reps = Vec::with_capacity(6);
        for v in &inner.vertices {
            let moved = v.apply(&m).unwrap();
            if let Some(c) = outer.hull.chart_coords(&moved) {
                coords.push(c);
            }
            reps.push(moved);
        }
        if coords.len() < 6 {
            // fell onto the chart line: average representatives directly
            let mut acc = nalgebra::Vector3::zeros();
            let r0 = reps[0].rep();
            for p in &reps {
                let r = p.rep();
                acc += if r.dot(&r0) >= 0.0 { r } else { -r };
            }
            return (ProjPoint::new(acc).unwrap(), f64::INFINITY);
        }
        let cx = coords.iter().map(|c| c.0).sum::<f64>() / 6.0;
        let cy = coords.iter().map(|c| c.1).sum::<f64>() / 6.0;
        let mut diam: f64 = 0.0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                let d = ((coords[i].0 - coords[j].0).powi(2)
                    + (coords[i].1 - coords[j].1).powi(2))
                .sqrt();
                diam = diam.max(d);
            }
        }
        let rot_t = crate::projlin::chart_rotation(outer.hull.chart()).transpose();
        let p = rot_t * nalgebra::Vector3::new(cx, cy, 1.0);
        (ProjPoint::new(p).unwrap(), diam)
    }

    /// point via the top singular direction of the code word image
    fn xi_power(
        &self,
        req: &HyperbolicTables,
        x: CirclePoint,
        depth: usize,
        tol: &Tolerances,
    ) -> (ProjPoint, f64) {
        let xw = self.map_in(req, x);
        let code = self.tables.code(xw, depth, tol);
        let mut m = Mat3::identity();
        for step in &code.steps {
            m *= evaluate(&step.word, &self.mats, &self.tables.cache);
        }
        let svd = m.svd(true, false);
        let u = svd.u.as_ref().expect("svd with u");
        let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let p = ProjPoint::new(nalgebra::Vector3::new(u[(0, 0)], u[(1, 0)], u[(2, 0)])).unwrap();
        (p, sv[1] / sv[0])
    }

    fn xi(
        &self,
        req: &HyperbolicTables,
        x: CirclePoint,
        depth: usize,
        tol: &Tolerances,
    ) -> (ProjPoint, f64) {
        if self.boxes.is_some() {
            self.xi_boxes(req, x, depth, tol)
        } else {
            self.xi_power(req, x, depth, tol)
        }
    }
}

pub struct LimitCurveEngine {
    pub sig: TriangleSignature,
    pub kind: EngineKind,
    pub t: f64,
    pub t_crit: f64,
    /// generator images of the requested representation
    pub gens: [Mat3; 3],
    req: HyperbolicTables,
    req_mats: RepMats,
    prim: Branch,
    dual: Branch,
    tol: Tolerances,
}

fn make_transfer(
    req: &HyperbolicTables,
    work: &HyperbolicTables,
) -> Result<Transfer, CurveError> {
    // φ intertwines the working reference with the relabelled requested one:
    // φ ρ0_w(s_i) φ⁻¹ = ρ0_req(s_σ(i)), σ = (2 3)
    let a = work.fuchs.mats.gens;
    let b = [
        req.fuchs.mats.gens[0],
        req.fuchs.mats.gens[2],
        req.fuchs.mats.gens[1],
    ];
    let phi = intertwiner(&a, &b).ok_or(CurveError::TransferFailed)?;
    let phi_inv = phi.try_inverse().ok_or(CurveError::TransferFailed)?;
    Ok(Transfer { phi_inv })
}

impl LimitCurveEngine {
    /// Build the engine for a Cartan matrix. Barbot parameters strictly
    /// inside the critical window are rejected; the endpoints are allowed
    /// (transversality degenerates there).
    pub fn from_cartan(c: &CartanMatrix, tol: &Tolerances) -> Result<Self, CurveError> {
        let sig = c.signature();
        let rep = build_representation(c, tol)?;
        let req = HyperbolicTables::new(sig, tol)?;
        let req_mats = RepMats::new(rep.s);

        if c.rep_type() == sig.hitchin_type() {
            let t = c.t().unwrap_or(1.0);
            if t <= 0.0 {
                return Err(CurveError::UnsupportedComponent);
            }
            let prim = Branch {
                tables: HyperbolicTables::new(sig, tol)?,
                mats: RepMats::new(rep.s),
                boxes: None,
                transfer: None,
            };
            let dual = Branch {
                tables: HyperbolicTables::new(sig, tol)?,
                mats: RepMats::new([
                    rep.s[0].transpose(),
                    rep.s[1].transpose(),
                    rep.s[2].transpose(),
                ]),
                boxes: None,
                transfer: None,
            };
            return Ok(Self {
                sig,
                kind: EngineKind::HitchinPower,
                t,
                t_crit: f64::NAN,
                gens: rep.s,
                req,
                req_mats,
                prim,
                dual,
                tol: tol.clone(),
            });
        }

        if !(sig.all_odd() && c.rep_type() == sig.barbot_type()) {
            return Err(CurveError::UnsupportedComponent);
        }
        let t = c.t_required()?;
        if t <= 0.0 {
            return Err(CurveError::UnsupportedComponent);
        }
        let tc = t_crit(&sig).map_err(|_| CurveError::UnsupportedComponent)?;
        let eps = 1e-9;
        if t > 1.0 / tc * (1.0 + eps) && t < tc * (1.0 - eps) {
            return Err(CurveError::NotInBarbotRange {
                t,
                lo: 1.0 / tc,
                hi: tc,
            });
        }

        let s = rep.s;
        let st = [s[0].transpose(), s[1].transpose(), s[2].transpose()];
        let high = t >= tc * (1.0 - eps);
        let sig_sw = sig.swapped23();

        let make_branch = |gens: [Mat3; 3], swap: bool| -> Result<Branch, CurveError> {
            if swap {
                let tables = HyperbolicTables::new(sig_sw, tol)?;
                let transfer = make_transfer(&req, &tables)?;
                let boxes = BoxSystem::new(sig_sw, gens, tol)?;
                Ok(Branch {
                    mats: RepMats::new(gens),
                    boxes: Some(boxes),
                    transfer: Some(transfer),
                    tables,
                })
            } else {
                let tables = HyperbolicTables::new(sig, tol)?;
                let boxes = BoxSystem::new(sig, gens, tol)?;
                Ok(Branch {
                    mats: RepMats::new(gens),
                    boxes: Some(boxes),
                    transfer: None,
                    tables,
                })
            }
        };

        // the primary branch runs where the parameter is above critical; the
        // dual (inverse transpose) has parameter 1/t and takes the other road
        let (prim, dual) = if high {
            (
                make_branch(s, false)?,
                make_branch([st[0], st[2], st[1]], true)?,
            )
        } else {
            (
                make_branch([s[0], s[2], s[1]], true)?,
                make_branch(st, false)?,
            )
        };

        Ok(Self {
            sig,
            kind: EngineKind::BarbotBoxes,
            t,
            t_crit: tc,
            gens: rep.s,
            req,
            req_mats,
            prim,
            dual,
            tol: tol.clone(),
        })
    }

    pub fn xi1(&self, x: CirclePoint, depth: usize) -> (ProjPoint, f64) {
        self.prim.xi(&self.req, x, depth, &self.tol)
    }

    /// The line part: the dual-branch point under the standard duality.
    pub fn xi2(&self, x: CirclePoint, depth: usize) -> (ProjLine, f64) {
        let (p, d) = self.dual.xi(&self.req, x, depth, &self.tol);
        (ProjLine::new(p.rep()).unwrap(), d)
    }

    pub fn tables(&self) -> &HyperbolicTables {
        &self.req
    }

    /// Index of the z-decomposition arc [z_q, z_{q+1}] containing x.
    pub fn z_interval_index(&self, x: CirclePoint) -> usize {
        let z = &self.req.z[0];
        let n = z.len();
        let mut best = 0usize;
        let mut best_m = f64::NEG_INFINITY;
        for q in 0..n {
            let a = z[q];
            let b = z[(q + 1) % n];
            // the short arc between consecutive orbit points
            let arc = if Interval::new(a, b).length() < Interval::new(b, a).length() {
                Interval::new(a, b)
            } else {
                Interval::new(b, a)
            };
            let m = arc.margin(x);
            if m > best_m {
                best_m = m;
                best = q;
            }
        }
        best
    }

    /// Uniform samples with full diagnostics.
    pub fn sample(&self, n_samples: usize, depth: usize) -> (Vec<FlagSample>, CurveDiagnostics) {
        let tau = 2.0 * std::f64::consts::PI;
        let mut samples = Vec::with_capacity(n_samples);
        for i in 0..n_samples {
            let x = CirclePoint::new(tau * i as f64 / n_samples as f64);
            let (point, diam1) = self.xi1(x, depth);
            let (line, diam2) = self.xi2(x, depth);
            samples.push(FlagSample {
                x,
                point,
                line,
                diam1,
                diam2,
                depth,
            });
        }

        let sep_min = tau / n_samples as f64 * 1.5;
        let mut min_pair_separation = f64::INFINITY;
        let mut min_transversality = f64::INFINITY;
        let mut violations = 0usize;
        let zn = self.req.z[0].len();
        let zidx: Vec<usize> = samples.iter().map(|s| self.z_interval_index(s.x)).collect();
        for i in 0..n_samples {
            for j in 0..n_samples {
                if i == j || samples[i].x.distance(&samples[j].x) <= sep_min {
                    continue;
                }
                if i < j {
                    min_pair_separation =
                        min_pair_separation.min(samples[i].point.distance(&samples[j].point));
                }
                let inc = samples[j].line.eval(&samples[i].point).abs();
                min_transversality = min_transversality.min(inc);
                if inc < self.tol.flag {
                    // the interval pattern of near-incidences
                    let (a, b) = (zidx[i], zidx[j]);
                    let d = (a as i64 - b as i64).rem_euclid(zn as i64) as usize;
                    let d = d.min(zn - d);
                    let allowed = d <= 1 || (d == 2 && a % 2 == 0 && b % 2 == 0);
                    if !allowed {
                        violations += 1;
                    }
                }
            }
        }

        // equivariance against the three generators
        let mut equivariance_residual: f64 = 0.0;
        for s in &samples {
            for g in 0..3 {
                let gx = self.req.fuchs.act(&self.req.fuchs.mats.gens[g], s.x);
                let (pgx, dgx) = self.xi1(gx, depth);
                let moved = s.point.apply(&self.gens[g]).unwrap();
                let resid = pgx.distance(&moved);
                // compare against the worse of the two error radii
                let _ = dgx;
                equivariance_residual = equivariance_residual.max(resid);
            }
        }

        // does some line of the dual curve miss all samples entirely?
        let mut dual_line_clearance: f64 = 0.0;
        let probes = 24.min(n_samples);
        for k in 0..probes {
            let x = CirclePoint::new(tau * (k as f64 + 0.5) / probes as f64);
            let (line, _) = self.xi2(x, depth);
            let mut clearance = f64::INFINITY;
            for s in &samples {
                clearance = clearance.min(line.eval(&s.point).abs());
            }
            dual_line_clearance = dual_line_clearance.max(clearance);
        }

        let svgap = svgap_check(&self.req_mats, &self.sig, 10);
        let diags = CurveDiagnostics {
            min_pair_separation,
            min_transversality,
            equivariance_residual,
            svgap_slope: svgap.slope,
            incidence_pattern_violations: violations,
            dual_line_clearance,
        };
        (samples, diags)
    }

    /// Nesting margins along the code of x: the minimum membership margin of
    /// the depth-(n+1) box barycenter inside the depth-n box where the
    /// one-letter inclusion applies, and inside the depth-(n−1) box at the
    /// frames where only the two-letter inclusion holds.
    pub fn nesting_margins(&self, x: CirclePoint, depth: usize) -> (f64, f64) {
        let branch = &self.prim;
        let sys = branch.boxes.as_ref().expect("box engine");
        let xw = branch.map_in(&self.req, x);
        let code = branch.tables.code(xw, depth, &self.tol);
        let p = sys.sig.p();
        let mut mats = Vec::with_capacity(depth);
        for step in &code.steps {
            mats.push(evaluate(&step.word, &branch.mats, &branch.tables.cache));
        }
        let mut prefix = vec![Mat3::identity()];
        for m in &mats {
            prefix.push(prefix.last().unwrap() * m);
        }
        // inverses assembled from reversed letter words: inverting the deep
        // products directly would lose all precision to their conditioning
        let mut prefix_inv = vec![Mat3::identity()];
        for step in &code.steps {
            let inv_m = evaluate(&step.word.inverse(), &branch.mats, &branch.tables.cache);
            prefix_inv.push(inv_m * prefix_inv.last().unwrap());
        }
        // depth-n barycenter, taken in the chart of the starting box where
        // the whole nested chain is visible
        let outer = &sys.boxes[code.start_frame as usize];
        let rot_t = crate::projlin::chart_rotation(outer.hull.chart()).transpose();
        let bary = |n: usize| -> Option<ProjPoint> {
            let f = (code.start_frame as usize + 2 * n) % 3;
            let bx = &sys.boxes[f];
            let mut cx = 0.0;
            let mut cy = 0.0;
            for v in &bx.vertices {
                let moved = v.apply(&prefix[n]).unwrap();
                let (x, y) = outer.hull.chart_coords(&moved)?;
                cx += x;
                cy += y;
            }
            cx /= 6.0;
            cy /= 6.0;
            ProjPoint::new(rot_t * nalgebra::Vector3::new(cx, cy, 1.0)).ok()
        };
        let margin_in = |point: &ProjPoint, n: usize| -> f64 {
            let f = (code.start_frame as usize + 2 * n) % 3;
            let back = point.apply(&prefix_inv[n]).unwrap();
            sys.boxes[f].hull.margin(&back)
        };
        let mut worst_single = f64::INFINITY;
        let mut worst_double = f64::INFINITY;
        for n in 0..depth {
            let Some(b) = bary(n + 1) else { continue };
            let f_from = (code.start_frame as usize + 2 * n) % 3;
            let single_valid = !(p[(1 + f_from) % 3] == 3 && p[(2 + f_from) % 3] == 3);
            if single_valid {
                worst_single = worst_single.min(margin_in(&b, n));
            } else if n >= 1 {
                worst_double = worst_double.min(margin_in(&b, n - 1));
            }
        }
        (worst_single, worst_double)
    }
}

// ── Singular value gaps ─────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SvgapData {
    /// (length, min log σ1/σ2, min log σ2/σ3) per word length
    pub per_len: Vec<(usize, f64, f64)>,
    /// least-squares slope of min(gap12, gap23) against word length
    pub slope: f64,
}

/// Enumerate reduced words breadth-first up to `max_len` and track the
/// per-length minima of the two log singular-value gaps. The fitted slope of
/// the smaller gap is the Anosov statistic: positive means the gaps grow
/// uniformly along the generation spheres.
pub fn svgap_check(rep: &RepMats, sig: &TriangleSignature, max_len: usize) -> SvgapData {
    let mut frontier: Vec<(GroupWord, Mat3)> = vec![(GroupWord::identity(), Mat3::identity())];
    let mut per_len = Vec::with_capacity(max_len);
    for len in 1..=max_len {
        let mut next: Vec<(GroupWord, Mat3)> = Vec::new();
        let mut seen: HashSet<Vec<Gen>> = HashSet::new();
        for (w, m) in &frontier {
            for g in 0..3u8 {
                let extended = w.concat(&GroupWord::generator(g), sig);
                if extended.len() != len {
                    continue;
                }
                if !seen.insert(extended.letters().to_vec()) {
                    continue;
                }
                let mat = m * rep.gens[g as usize];
                next.push((extended, mat));
            }
        }
        let mut m12 = f64::INFINITY;
        let mut m23 = f64::INFINITY;
        for (_, m) in &next {
            let svd = m.svd(false, false);
            let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if sv[2] <= 0.0 {
                continue;
            }
            m12 = m12.min((sv[0] / sv[1]).ln());
            m23 = m23.min((sv[1] / sv[2]).ln());
        }
        per_len.push((len, m12, m23));
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    // least-squares slope of the conservative statistic
    let ys: Vec<f64> = per_len.iter().map(|&(_, a, b)| a.min(b)).collect();
    let xs: Vec<f64> = per_len.iter().map(|&(l, _, _)| l as f64).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    SvgapData {
        per_len,
        slope: if den > 0.0 { num / den } else { 0.0 },
    }
}

/// Attracting fixed data of a proximal matrix (largest real eigenvalue).
pub fn attracting_point(m: &Mat3, tol: &Tolerances) -> Option<ProjPoint> {
    let e = eig3(m, tol);
    if e.has_complex_pair() {
        return None;
    }
    let moduli = e.moduli();
    if moduli[0] - moduli[1] < 1e-9 * (1.0 + moduli[0]) {
        return None;
    }
    e.vectors[0].and_then(|v| ProjPoint::new(v).ok())
}

/// Attracting fixed line (the invariant line of the two largest eigenvalues).
pub fn attracting_line(m: &Mat3, tol: &Tolerances) -> Option<ProjLine> {
    let e = eig3(&m.transpose(), tol);
    if e.has_complex_pair() {
        return None;
    }
    e.vectors[2].and_then(|v| ProjLine::new(v).ok())
}
