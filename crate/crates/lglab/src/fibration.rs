//! Vertical/horizontal tangent splitting, horizontal lifts, and symplectic
//! parallel transport along base paths.
//!
//! At a regular point `p` the tangent space splits as `Vert_p ⊕ Hor_p` with
//! `Vert = ker dv` and `Hor` its ω-orthogonal complement; for the Kähler
//! catalogue `Hor_p` is the complex line spanned by the conjugate gradient of
//! `v`. Transport integrates the horizontal-lift ODE with fixed-step RK4 and
//! a Newton projection back onto the fiber after every step, which pins the
//! constraint `v = c(t)` to rounding accuracy without degrading the order of
//! the integrator.

use crate::error::{Error, Result};
use crate::models::{Model, PointY, TangentVec};
use crate::numerics::CVec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Decomposition of a tangent vector into vertical and horizontal parts.
#[derive(Clone, Copy, Debug)]
pub struct TangentSplit {
    pub vertical: TangentVec,
    pub horizontal: TangentVec,
}

/// Threshold on |dv| below which a point counts as critical for splitting.
const SINGULAR_DV: f64 = 1e-10;

/// Split `x` into vertical + horizontal at `p`. Errors at critical points.
pub fn split_tangent(model: &Model, p: &PointY, x: &TangentVec) -> Result<TangentSplit> {
    let g = model.dv(p);
    let g2 = g.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();
    if g2.sqrt() < SINGULAR_DV {
        return Err(Error::SingularSplit(g2.sqrt()));
    }
    let dvx = model.dv_apply(p, &x.components);
    // Hor = span_C(conj g); the unique horizontal h with dv(h) = dv(x).
    let conj_g = CVec::new(&g.as_slice().iter().map(|z| z.conj()).collect::<Vec<_>>());
    let hor = conj_g.scale(dvx / g2);
    let vert = x.components.sub(&hor);
    Ok(TangentSplit {
        vertical: TangentVec::new(*p, vert),
        horizontal: TangentVec::new(*p, hor),
    })
}

/// Horizontal lift: the unique horizontal vector with `dv(lift) = xi`.
pub fn horizontal_lift(model: &Model, p: &PointY, xi: Complex64) -> Result<TangentVec> {
    let g = model.dv(p);
    let g2 = g.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();
    if g2.sqrt() < SINGULAR_DV {
        return Err(Error::SingularSplit(g2.sqrt()));
    }
    let conj_g = CVec::new(&g.as_slice().iter().map(|z| z.conj()).collect::<Vec<_>>());
    Ok(TangentVec::new(*p, conj_g.scale(xi / g2)))
}

/// Raw-lift used by the integrator inner loop (no TangentVec wrapping).
#[inline]
fn lift_raw(model: &Model, q: &CVec, xi: Complex64) -> Result<CVec> {
    let p = PointY::new(*q);
    let g = model.dv(&p);
    let g2 = g.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();
    if g2.sqrt() < SINGULAR_DV {
        return Err(Error::SingularSplit(g2.sqrt()));
    }
    let conj_g = CVec::new(&g.as_slice().iter().map(|z| z.conj()).collect::<Vec<_>>());
    Ok(conj_g.scale(xi / g2))
}

/// A parametrized curve in the base ℂ. Implemented by [`BasePath`] and by
/// ad-hoc closed-form families (isotopy s-lines).
pub trait Curve {
    fn at(&self, t: f64) -> Complex64;
    fn deriv(&self, t: f64) -> Complex64;
    fn domain(&self) -> (f64, f64);
    /// Parameter values where the curve is only C0/C1; the integrator splits
    /// its steps there.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Closed-form base paths: segments, circular arcs, and composites
/// (U-shaped curves are built as composites by [`BasePath::ushape`]).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasePath {
    /// Affine segment: t in [t0, t1] maps to the chord from `start` to `end`.
    Segment {
        start: (f64, f64),
        end: (f64, f64),
        t0: f64,
        t1: f64,
    },
    /// Circular arc `center + radius·exp(i(angle0 + omega·(t − t0)))`.
    Arc {
        center: (f64, f64),
        radius: f64,
        angle0: f64,
        omega: f64,
        t0: f64,
        t1: f64,
    },
    /// Contiguously parametrized pieces (piecewise C1).
    Composite { pieces: Vec<BasePath> },
}

fn cpx(p: (f64, f64)) -> Complex64 {
    Complex64::new(p.0, p.1)
}

impl BasePath {
    pub fn segment(start: Complex64, end: Complex64, t0: f64, t1: f64) -> Self {
        BasePath::Segment {
            start: (start.re, start.im),
            end: (end.re, end.im),
            t0,
            t1,
        }
    }

    pub fn arc(center: Complex64, radius: f64, angle0: f64, omega: f64, t0: f64, t1: f64) -> Self {
        BasePath::Arc {
            center: (center.re, center.im),
            radius,
            angle0,
            omega,
            t0,
            t1,
        }
    }

    /// Constant path at a point (zero-length segment).
    pub fn constant(at: Complex64, t0: f64, t1: f64) -> Self {
        BasePath::segment(at, at, t0, t1)
    }

    /// U-shaped base curve: two radial rays at `angle_in`/`angle_out` joined
    /// near the origin by the circular arc of radius `corner_radius`
    /// inscribed in the wedge between them. `leg` is the radial length of
    /// each straight piece. Parametrized by arclength with t = 0 at the arc
    /// midpoint; traversed incoming ray -> arc -> outgoing ray.
    pub fn ushape(angle_in: f64, angle_out: f64, corner_radius: f64, leg: f64) -> Result<Self> {
        let span = (angle_out - angle_in).rem_euclid(2.0 * std::f64::consts::PI);
        if span < 1e-3 || span > 2.0 * std::f64::consts::PI - 1e-3 {
            return Err(Error::Path("ushape: ray angles too close".into()));
        }
        let half = span / 2.0;
        let bisector = angle_in + half;
        // Inscribed circle tangent to both rays.
        let center_dist = corner_radius / half.sin();
        let tangent_dist = corner_radius / half.tan();
        if tangent_dist <= 1e-9 {
            return Err(Error::Path("ushape: corner radius too small for wedge".into()));
        }
        let center = Complex64::from_polar(center_dist, bisector);
        let p_in = Complex64::from_polar(tangent_dist, angle_in);
        let p_out = Complex64::from_polar(tangent_dist, angle_out);
        // Arc sweep between the two tangency points, measured at the corner
        // circle's center.
        let a_in = (p_in - center).arg();
        let a_out = (p_out - center).arg();
        let mut sweep = a_out - a_in;
        while sweep <= -std::f64::consts::PI {
            sweep += 2.0 * std::f64::consts::PI;
        }
        while sweep > std::f64::consts::PI {
            sweep -= 2.0 * std::f64::consts::PI;
        }
        let arc_len = corner_radius * sweep.abs();
        let h = arc_len / 2.0;
        let pieces = vec![
            BasePath::segment(
                Complex64::from_polar(tangent_dist + leg, angle_in),
                p_in,
                -h - leg,
                -h,
            ),
            BasePath::arc(center, corner_radius, a_in, sweep / arc_len, -h, h),
            BasePath::segment(
                p_out,
                Complex64::from_polar(tangent_dist + leg, angle_out),
                h,
                h + leg,
            ),
        ];
        let path = BasePath::Composite { pieces };
        // The admissibility picture keeps U-shapes off the negative reals.
        let (t0, t1) = path.domain();
        for k in 0..=400 {
            let t = t0 + (t1 - t0) * k as f64 / 400.0;
            let c = path.at(t);
            if c.re < 0.0 && c.im.abs() < 1e-9 {
                return Err(Error::Path("ushape: curve meets the negative real axis".into()));
            }
        }
        Ok(path)
    }

    fn piece_for(&self, t: f64) -> &BasePath {
        match self {
            BasePath::Composite { pieces } => {
                for p in pieces {
                    let (a, b) = p.domain();
                    if t <= b || std::ptr::eq(p, pieces.last().unwrap()) {
                        if t >= a - 1e-12 {
                            return p.piece_for(t);
                        }
                    }
                }
                pieces.last().unwrap()
            }
            _ => self,
        }
    }

    /// Validate the path against a model: the interior must keep clear of
    /// the critical values.
    pub fn validate_against(&self, model: &Model, samples: usize) -> Result<()> {
        let (t0, t1) = self.domain();
        for k in 1..samples {
            let t = t0 + (t1 - t0) * k as f64 / samples as f64;
            let c = self.at(t);
            for cv in model.critical_values() {
                if (c - cv).norm() < 1e-7 {
                    return Err(Error::Path(format!(
                        "path passes through critical value {} at t = {:.6}",
                        cv, t
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Curve for BasePath {
    fn at(&self, t: f64) -> Complex64 {
        match self {
            BasePath::Segment { start, end, t0, t1 } => {
                let s = if (t1 - t0).abs() < 1e-300 { 0.0 } else { (t - t0) / (t1 - t0) };
                cpx(*start) + s * (cpx(*end) - cpx(*start))
            }
            BasePath::Arc {
                center,
                radius,
                angle0,
                omega,
                t0,
                ..
            } => cpx(*center) + Complex64::from_polar(*radius, angle0 + omega * (t - t0)),
            BasePath::Composite { .. } => self.piece_for(t).at(t),
        }
    }

    fn deriv(&self, t: f64) -> Complex64 {
        match self {
            BasePath::Segment { start, end, t0, t1 } => {
                if (t1 - t0).abs() < 1e-300 {
                    Complex64::new(0.0, 0.0)
                } else {
                    (cpx(*end) - cpx(*start)) / (t1 - t0)
                }
            }
            BasePath::Arc {
                radius,
                angle0,
                omega,
                t0,
                ..
            } => {
                Complex64::new(0.0, 1.0)
                    * *omega
                    * Complex64::from_polar(*radius, angle0 + omega * (t - t0))
            }
            BasePath::Composite { .. } => self.piece_for(t).deriv(t),
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            BasePath::Segment { t0, t1, .. } | BasePath::Arc { t0, t1, .. } => (*t0, *t1),
            BasePath::Composite { pieces } => {
                (pieces.first().unwrap().domain().0, pieces.last().unwrap().domain().1)
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            BasePath::Composite { pieces } => {
                let mut out = Vec::new();
                for p in pieces.iter().take(pieces.len().saturating_sub(1)) {
                    out.push(p.domain().1);
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

/// A `Curve` assembled from closures; used for isotopy s-lines.
pub struct ClosureCurve<F, G>
where
    F: Fn(f64) -> Complex64,
    G: Fn(f64) -> Complex64,
{
    pub at_fn: F,
    pub deriv_fn: G,
    pub dom: (f64, f64),
}

impl<F, G> Curve for ClosureCurve<F, G>
where
    F: Fn(f64) -> Complex64,
    G: Fn(f64) -> Complex64,
{
    fn at(&self, t: f64) -> Complex64 {
        (self.at_fn)(t)
    }
    fn deriv(&self, t: f64) -> Complex64 {
        (self.deriv_fn)(t)
    }
    fn domain(&self) -> (f64, f64) {
        self.dom
    }
}

/// Reverse-orientation view of a curve: `t ↦ base(t0 + t1 − t)`.
pub struct ReversedCurve<'a, C: Curve + ?Sized>(pub &'a C);

impl<'a, C: Curve + ?Sized> Curve for ReversedCurve<'a, C> {
    fn at(&self, t: f64) -> Complex64 {
        let (a, b) = self.0.domain();
        self.0.at(a + b - t)
    }
    fn deriv(&self, t: f64) -> Complex64 {
        let (a, b) = self.0.domain();
        -self.0.deriv(a + b - t)
    }
    fn domain(&self) -> (f64, f64) {
        self.0.domain()
    }
    fn breakpoints(&self) -> Vec<f64> {
        let (a, b) = self.0.domain();
        let mut out: Vec<f64> = self.0.breakpoints().iter().map(|t| a + b - t).collect();
        out.sort_by(|x, y| x.partial_cmp(y).unwrap());
        out
    }
}

/// Integrator options, exposed in scenario files as
/// `{"step": ..., "fiber_tol": ..., "max_newton_iters": ...}`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportOpts {
    /// Fixed RK4 step in path parameter.
    pub step: f64,
    /// Post-step Newton projection target for |v − c(t)|.
    pub fiber_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for TransportOpts {
    fn default() -> Self {
        Self {
            step: 1e-3,
            fiber_tol: 1e-12,
            max_newton_iters: 4,
        }
    }
}

/// Transport outcome with trajectory diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct TransportResult {
    pub point: PointY,
    /// Max |v(q) − c(t)| recorded after projection over all accepted steps.
    pub max_fiber_residual: f64,
    pub steps: usize,
}

/// Newton projection of a point onto the fiber `v = c` along the horizontal
/// complex line through it. Returns the projected point and its residual.
pub fn project_point_to_fiber(
    model: &Model,
    q: &PointY,
    c: Complex64,
    opts: &TransportOpts,
) -> Result<(PointY, f64)> {
    let (coords, resid) = project_to_fiber(model, &q.coords, c, opts)?;
    Ok((PointY::new(coords), resid))
}

fn project_to_fiber(model: &Model, q: &CVec, c: Complex64, opts: &TransportOpts) -> Result<(CVec, f64)> {
    let mut q = *q;
    let mut resid = (model.v(&PointY::new(q)) - c).norm();
    for _ in 0..opts.max_newton_iters {
        if resid <= opts.fiber_tol {
            break;
        }
        let p = PointY::new(q);
        let defect = model.v(&p) - c;
        let h = lift_raw(model, &q, Complex64::new(1.0, 0.0))?;
        let dvh = model.dv_apply(&p, &h);
        q = q.sub(&h.scale(defect / dvh));
        resid = (model.v(&PointY::new(q)) - c).norm();
    }
    if resid > opts.fiber_tol * 10.0 + 1e-14 {
        return Err(Error::Integration(format!(
            "fiber projection stalled at |v - c| = {:.3e}",
            resid
        )));
    }
    Ok((q, resid))
}

fn rk4_step(model: &Model, curve: &(impl Curve + ?Sized), t: f64, h: f64, q: &CVec) -> Result<CVec> {
    let f = |t: f64, q: &CVec| -> Result<CVec> { lift_raw(model, q, curve.deriv(t)) };
    let k1 = f(t, q)?;
    let k2 = f(t + h / 2.0, &q.add(&k1.scale_re(h / 2.0)))?;
    let k3 = f(t + h / 2.0, &q.add(&k2.scale_re(h / 2.0)))?;
    let k4 = f(t + h, &q.add(&k3.scale_re(h)))?;
    let incr = k1.add(&k2.scale_re(2.0)).add(&k3.scale_re(2.0)).add(&k4).scale_re(h / 6.0);
    Ok(q.add(&incr))
}

/// Symplectic parallel transport of `q` along `curve` from `t0` to `t1`.
///
/// Precondition: `v(q) = curve(t0)` within projection reach, and the path
/// interior avoids critical values.
pub fn transport_with_diagnostics(
    model: &Model,
    curve: &(impl Curve + ?Sized),
    t0: f64,
    t1: f64,
    q: &PointY,
    opts: &TransportOpts,
) -> Result<TransportResult> {
    let start_defect = (model.v(q) - curve.at(t0)).norm();
    if start_defect > 1e-6 {
        return Err(Error::Argument(format!(
            "transport start point off the fiber: |v(q) - c(t0)| = {:.3e}",
            start_defect
        )));
    }
    // Snap exactly onto the fiber before integrating.
    let (mut state, mut max_resid) = project_to_fiber(model, &q.coords, curve.at(t0), opts)?;

    // March through breakpoint-delimited subintervals.
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut cuts: Vec<f64> = curve
        .breakpoints()
        .into_iter()
        .filter(|&b| (b - t0) * dir > 1e-12 && (t1 - b) * dir > 1e-12)
        .collect();
    cuts.sort_by(|a, b| if dir > 0.0 { a.partial_cmp(b).unwrap() } else { b.partial_cmp(a).unwrap() });
    cuts.push(t1);

    let mut t = t0;
    let mut steps = 0usize;
    for cut in cuts {
        let len = (cut - t).abs();
        if len < 1e-15 {
            t = cut;
            continue;
        }
        let n = (len / opts.step).ceil().max(1.0) as usize;
        let h = (cut - t) / n as f64;
        for _ in 0..n {
            // Guard: the base point must stay clear of critical values.
            let c_here = curve.at(t);
            for cv in model.critical_values() {
                if (c_here - cv).norm() < 1e-9 {
                    return Err(Error::Path(format!(
                        "path meets critical value {} at t = {:.6}",
                        cv, t
                    )));
                }
            }
            state = rk4_step(model, curve, t, h, &state)?;
            t += h;
            let (proj, resid) = project_to_fiber(model, &state, curve.at(t), opts)?;
            state = proj;
            max_resid = max_resid.max(resid);
            steps += 1;
        }
        t = cut;
    }
    Ok(TransportResult {
        point: PointY::new(state),
        max_fiber_residual: max_resid,
        steps,
    })
}

/// Parallel transport returning only the endpoint.
pub fn parallel_transport(
    model: &Model,
    curve: &(impl Curve + ?Sized),
    t0: f64,
    t1: f64,
    q: &PointY,
    opts: &TransportOpts,
) -> Result<PointY> {
    Ok(transport_with_diagnostics(model, curve, t0, t1, q, opts)?.point)
}

/// Parallel transport once around a closed loop (monodromy).
pub fn monodromy(
    model: &Model,
    loop_path: &(impl Curve + ?Sized),
    q: &PointY,
    opts: &TransportOpts,
) -> Result<PointY> {
    let (t0, t1) = loop_path.domain();
    let gap = (loop_path.at(t0) - loop_path.at(t1)).norm();
    if gap > 1e-9 {
        return Err(Error::Path(format!("monodromy path is not closed: endpoint gap {:.3e}", gap)));
    }
    parallel_transport(model, loop_path, t0, t1, q, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelId;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn conic() -> Model {
        Model::new(ModelId::Conic)
    }

    fn pt(m: &Model, parts: &[Complex64]) -> PointY {
        m.point(parts).unwrap()
    }

    #[test]
    fn split_examples() {
        let m = conic();
        let p = pt(&m, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let x = TangentVec::new(p, CVec::two(c(1.0, 0.0), c(0.0, 0.0)));
        let s = split_tangent(&m, &p, &x).unwrap();
        let want_v = CVec::two(c(0.5, 0.0), c(-0.5, 0.0));
        let want_h = CVec::two(c(0.5, 0.0), c(0.5, 0.0));
        assert!(s.vertical.components.sub(&want_v).norm() < 1e-14);
        assert!(s.horizontal.components.sub(&want_h).norm() < 1e-14);

        // x in ker dv splits as (x, 0).
        let k = TangentVec::new(p, CVec::two(c(1.0, 0.0), c(-1.0, 0.0)));
        let s = split_tangent(&m, &p, &k).unwrap();
        assert!(s.horizontal.components.norm() < 1e-14);
        assert!(s.vertical.components.sub(&k.components).norm() < 1e-14);

        // trivial_line: everything is horizontal.
        let t = Model::new(ModelId::TrivialLine);
        let q = pt(&t, &[c(0.3, 0.7)]);
        let v = TangentVec::new(q, CVec::one(c(1.0, 0.0)));
        let s = split_tangent(&t, &q, &v).unwrap();
        assert!(s.vertical.components.norm() < 1e-15);
        assert!((s.horizontal.components[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn split_rejects_critical_point() {
        let m = conic();
        let p = pt(&m, &[c(0.0, 0.0), c(0.0, 0.0)]);
        let x = TangentVec::new(p, CVec::two(c(1.0, 0.0), c(0.0, 0.0)));
        assert!(matches!(split_tangent(&m, &p, &x), Err(Error::SingularSplit(_))));
    }

    #[test]
    fn split_properties_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = conic();
        for _ in 0..100 {
            let p = pt(
                &m,
                &[
                    c(rng.gen_range(0.3..2.0), rng.gen_range(-1.0..1.0)),
                    c(rng.gen_range(0.3..2.0), rng.gen_range(-1.0..1.0)),
                ],
            );
            let x = TangentVec::new(
                p,
                CVec::two(
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ),
            );
            let s = split_tangent(&m, &p, &x).unwrap();
            // vertical + horizontal = x
            assert!(s.vertical.components.add(&s.horizontal.components).sub(&x.components).norm() < 1e-12);
            // dv(vertical) = 0
            assert!(m.dv_apply(&p, &s.vertical.components).norm() < 1e-12);
            // omega(vertical, J hor) = 0 and omega(vertical, hor) = 0
            assert!(m.omega_raw(&s.vertical.components, &s.horizontal.components).abs() < 1e-12);
            assert!(m
                .omega_raw(&s.vertical.components, &m.j_raw(&s.horizontal.components))
                .abs()
                < 1e-12);
        }
    }

    #[test]
    fn lift_examples() {
        let m = conic();
        let p = pt(&m, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let l = horizontal_lift(&m, &p, c(1.0, 0.0)).unwrap();
        assert!(l.components.sub(&CVec::two(c(0.5, 0.0), c(0.5, 0.0))).norm() < 1e-14);
        let z = horizontal_lift(&m, &p, c(0.0, 0.0)).unwrap();
        assert_eq!(z.components.norm(), 0.0);

        let t = Model::new(ModelId::TrivialLine);
        let q = pt(&t, &[c(0.1, -0.4)]);
        let w = c(0.3, 0.9);
        let l = horizontal_lift(&t, &q, w).unwrap();
        assert!((l.components[0] - w).norm() < 1e-15);
    }

    #[test]
    fn transport_constant_path_is_identity() {
        let m = conic();
        let q = pt(&m, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let path = BasePath::constant(c(1.0, 0.0), 0.0, 1.0);
        let r = parallel_transport(&m, &path, 0.0, 1.0, &q, &TransportOpts::default()).unwrap();
        assert!(r.coords.sub(&q.coords).norm() < 1e-12);
    }

    #[test]
    fn transport_real_axis_oracle() {
        // Closed form: the real locus and mu = 0 are invariant, so the point
        // over c stays (sqrt c, sqrt c).
        let m = conic();
        let q = pt(&m, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let path = BasePath::segment(c(1.0, 0.0), c(4.0, 0.0), 0.0, 1.0);
        let r = parallel_transport(&m, &path, 0.0, 1.0, &q, &TransportOpts::default()).unwrap();
        assert!(r.coords.sub(&CVec::two(c(2.0, 0.0), c(2.0, 0.0))).norm() < 1e-6);

        // Same via the 1 + 3t parametrization.
        let path2 = BasePath::segment(c(1.0, 0.0), c(4.0, 0.0), 0.0, 1.0);
        let r2 = parallel_transport(&m, &path2, 0.0, 1.0, &q, &TransportOpts::default()).unwrap();
        assert!(r2.coords.sub(&r.coords).norm() < 1e-9);
    }

    #[test]
    fn transport_half_loop_oracle() {
        // Closed form on mu = 0: z1 = z2 = e^{i theta/2}.
        let m = conic();
        let q = pt(&m, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let path = BasePath::arc(c(0.0, 0.0), 1.0, 0.0, 1.0, 0.0, PI);
        let r = parallel_transport(&m, &path, 0.0, PI, &q, &TransportOpts::default()).unwrap();
        assert!(r.coords.sub(&CVec::two(c(0.0, 1.0), c(0.0, 1.0))).norm() < 1e-6);
    }

    #[test]
    fn monodromy_unit_circle_oracle() {
        let m = conic();
        let q = pt(&m, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let lp = BasePath::arc(c(0.0, 0.0), 1.0, 0.0, 1.0, 0.0, 2.0 * PI);
        let r = monodromy(&m, &lp, &q, &TransportOpts::default()).unwrap();
        assert!(r.coords.sub(&CVec::two(c(-1.0, 0.0), c(-1.0, 0.0))).norm() < 1e-6);
    }

    #[test]
    fn monodromy_contractible_loop_is_identity() {
        let m = conic();
        // Small circle around c = 1 (no critical values enclosed), starting
        // at c = 1.25 with a mu = 0 point of that fiber. The horizontal
        // distribution is flat exactly on the mu = 0 locus, so holonomy of a
        // null-homotopic loop is trivial there.
        let lp = BasePath::arc(c(1.0, 0.0), 0.25, 0.0, 1.0, 0.0, 2.0 * PI);
        let s = 1.25f64.sqrt();
        let q0 = pt(&m, &[c(s, 0.0), c(s, 0.0)]);
        let r = monodromy(&m, &lp, &q0, &TransportOpts::default()).unwrap();
        assert!(r.coords.sub(&q0.coords).norm() < 1e-6);
        // Cross-check at half the step size.
        let opts2 = TransportOpts { step: 5e-4, ..Default::default() };
        let r2 = monodromy(&m, &lp, &q0, &opts2).unwrap();
        assert!(r2.coords.sub(&q0.coords).norm() < 1e-6);
    }

    #[test]
    fn trivial_line_transport_follows_base() {
        let m = Model::new(ModelId::TrivialLine);
        let q = pt(&m, &[c(0.2, 0.1)]);
        let path = BasePath::segment(c(0.2, 0.1), c(-1.0, 2.0), 0.0, 1.0);
        let r = parallel_transport(&m, &path, 0.0, 1.0, &q, &TransportOpts::default()).unwrap();
        assert!((r.coords[0] - c(-1.0, 2.0)).norm() < 1e-9);
    }

    #[test]
    fn fiber_constraint_held_along_trajectory() {
        let m = conic();
        let q = pt(&m, &[c(1.2, 0.3), c(1.0, 0.0) / c(1.2, 0.3)]);
        let path = BasePath::arc(c(0.0, 0.0), 1.0, 0.0, 1.0, 0.0, 2.0 * PI);
        let r = transport_with_diagnostics(&m, &path, 0.0, 2.0 * PI, &q, &TransportOpts::default()).unwrap();
        assert!(r.max_fiber_residual <= 1e-8);
    }

    #[test]
    fn conic_moment_is_conserved() {
        let m = conic();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let z1 = c(rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5));
            let cval = c(1.0, 0.0);
            let q = pt(&m, &[z1, cval / z1]);
            let th = rng.gen_range(0.5..2.0 * PI);
            let path = BasePath::arc(c(0.0, 0.0), 1.0, 0.0, 1.0, 0.0, th);
            let r = parallel_transport(&m, &path, 0.0, th, &q, &TransportOpts::default()).unwrap();
            assert!((m.conic_moment(&r) - m.conic_moment(&q)).abs() <= 1e-8);
        }
    }

    #[test]
    fn transport_is_fiberwise_symplectic() {
        // Finite-difference variation of fiber tangent vectors; omega_c is
        // preserved within 1e-5.
        let m = conic();
        let opts = TransportOpts::default();
        let path = BasePath::arc(c(0.0, 0.0), 1.0, 0.0, 1.0, 0.0, PI / 2.0);
        let q = pt(&m, &[c(1.1, 0.0), c(1.0, 0.0) / c(1.1, 0.0)]);
        let eps = 1e-5;
        // Two fiber tangent directions at q: ker dv = span(z1, -z2).
        let z = q.coords;
        let kv = CVec::two(z[0], -z[1]);
        let kw = kv.scale(c(0.0, 1.0));
        let transported = |p0: &CVec| -> CVec {
            let (proj, _) = project_to_fiber(&m, p0, c(1.0, 0.0), &opts).unwrap();
            parallel_transport(&m, &path, 0.0, PI / 2.0, &PointY::new(proj), &opts)
                .unwrap()
                .coords
        };
        let base = transported(&q.coords);
        let dx = transported(&q.coords.add(&kv.scale_re(eps))).sub(&base).scale_re(1.0 / eps);
        let dy = transported(&q.coords.add(&kw.scale_re(eps))).sub(&base).scale_re(1.0 / eps);
        let before = m.omega_raw(&kv, &kw);
        let after = m.omega_raw(&dx, &dy);
        assert!(
            (before - after).abs() <= 1e-5,
            "omega drift {} vs {}",
            before,
            after
        );
    }

    #[test]
    fn rk4_step_halving_order() {
        let m = conic();
        let q = pt(&m, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let path = BasePath::arc(c(0.0, 0.0), 1.0, 0.0, 1.0, 0.0, PI);
        let run = |h: f64| {
            // Projection disabled (huge tolerance) so the raw RK4 order is
            // visible.
            let opts = TransportOpts { step: h, fiber_tol: 1.0, max_newton_iters: 0 };
            parallel_transport(&m, &path, 0.0, PI, &q, &opts).unwrap().coords
        };
        let exact = CVec::two(c(0.0, 1.0), c(0.0, 1.0));
        let e1 = run(2e-2).sub(&exact).norm();
        let e2 = run(1e-2).sub(&exact).norm();
        // Fourth order: halving the step should shrink the error by ~16;
        // allow generous slack.
        assert!(e2 <= e1 / 8.0, "e1 = {:.3e}, e2 = {:.3e}", e1, e2);
    }

    #[test]
    fn path_through_critical_value_rejected() {
        let m = conic();
        let q = pt(&m, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let path = BasePath::segment(c(1.0, 0.0), c(-1.0, 0.0), 0.0, 1.0);
        let err = parallel_transport(&m, &path, 0.0, 1.0, &q, &TransportOpts::default());
        assert!(err.is_err());
        assert!(path.validate_against(&m, 1000).is_err());
    }

    #[test]
    fn ushape_factory_is_sane() {
        let u = BasePath::ushape(-1.0, 1.0, 0.3, 2.0).unwrap();
        let (t0, t1) = u.domain();
        assert!(t0 < 0.0 && t1 > 0.0);
        // Tangency joints are C1: direction continuous across breakpoints.
        for b in u.breakpoints() {
            let before = u.deriv(b - 1e-9);
            let after = u.deriv(b + 1e-9);
            assert!((before - after).norm() < 1e-6, "corner at breakpoint {b}");
        }
        // Stays off the negative real axis by construction.
        assert!(BasePath::ushape(3.0, -3.0, 0.3, 2.0).is_err());
    }
}
