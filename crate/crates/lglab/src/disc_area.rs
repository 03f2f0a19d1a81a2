//! Symplectic areas of parametrized disc patches, the deformation of a
//! patch under a Lagrangian isotopy, and the area identities governing it.
//!
//! A patch is a collection of triangulated parametric pieces mapping into
//! the model chart. Areas are computed by the per-triangle rule
//! `½·ω(u(B)−u(A), u(C)−u(A))` on vertex images (exact for the piecewise
//! affine interpolant since ω has constant coefficients) and are accepted
//! only when doubling the mesh resolution moves the value by less than the
//! quadrature tolerance.
//!
//! Deforming a patch along an isotopy glues the swept cylinder onto the
//! moved boundary arc with reversed orientation, which realizes the area
//! bookkeeping `∫u'ω = ∫uω − ∮(∫₀¹ b_s ds)` behind the endpoint-potential
//! identities checked here.

use crate::error::{Error, Result};
use crate::lagrangians::{
    psi_eval, psi_sweep_eval, BaseHomotopy, FiberedLagrangian, IntersectionPoint,
    LagrangianIsotopy,
};
use crate::models::{Model, PointY};
use crate::numerics::CVec;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

/// Quadrature tolerance: doubling the resolution must move areas less than
/// this.
pub const QUAD_TOL: f64 = 1e-5;

/// Boundary fidelity tolerance for arcs assigned to Lagrangians.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// A closed loop in the chart tabulated on a uniform parameter grid with
/// periodic cubic interpolation.
pub struct TabulatedLoop {
    values: Vec<CVec>,
}

impl TabulatedLoop {
    /// Tabulate `f` on `n` nodes over [0, 1) (periodic).
    pub fn build(n: usize, f: &mut dyn FnMut(f64) -> Result<CVec>) -> Result<Self> {
        let values: Vec<CVec> = (0..n).map(|k| f(k as f64 / n as f64)).collect::<Result<_>>()?;
        Ok(Self { values })
    }

    /// Periodic Catmull-Rom interpolation at parameter x ∈ [0, 1).
    pub fn at(&self, x: f64) -> CVec {
        let n = self.values.len();
        let xi = (x.rem_euclid(1.0)) * n as f64;
        let k = xi.floor() as i64;
        let t = xi - k as f64;
        let get = |j: i64| self.values[(j.rem_euclid(n as i64)) as usize];
        let (p0, p1, p2, p3) = (get(k - 1), get(k), get(k + 1), get(k + 2));
        // Catmull-Rom basis.
        let c0 = -0.5 * t + t * t - 0.5 * t * t * t;
        let c1 = 1.0 - 2.5 * t * t + 1.5 * t * t * t;
        let c2 = 0.5 * t + 2.0 * t * t - 1.5 * t * t * t;
        let c3 = -0.5 * t * t + 0.5 * t * t * t;
        p0.scale_re(c0)
            .add(&p1.scale_re(c1))
            .add(&p2.scale_re(c2))
            .add(&p3.scale_re(c3))
    }

    pub fn centroid(&self) -> CVec {
        let mut acc = self.values[0].scale_re(0.0);
        for v in &self.values {
            acc = acc.add(v);
        }
        acc.scale_re(1.0 / self.values.len() as f64)
    }
}

/// Parametric domain of a patch piece, with its meshing rule.
#[derive(Clone, Copy, Debug)]
pub enum PieceDomain {
    /// Unit disc in polar coordinates (ρ, φ), φ ∈ [0, 2π); `arcs` marked
    /// boundary points at φ = 2πj/arcs.
    Polygon { arcs: usize },
    /// Annulus `inner ≤ ρ ≤ 1` in polar coordinates.
    Annulus { inner: f64 },
    /// Unit square (x, y) ∈ [0,1]²; used for isotopy cylinders.
    Rectangle,
}

/// How a piece maps its domain into the chart.
pub enum PieceMap {
    /// Arbitrary closure on domain coordinates.
    Pointwise(Arc<dyn Fn(f64, f64) -> Result<CVec> + Send + Sync>),
    /// Cone over a tabulated loop: (ρ, φ) ↦ c + ρ·(Λ(φ/2π) − c).
    Cone { center: CVec, boundary: Arc<TabulatedLoop> },
    /// Cone in log-z₁ coordinates of a conic fiber over `cval`:
    /// w = c_w + ρ·(W(φ/2π) − c_w), point = (e^w, cval·e^{−w}).
    LogCone {
        center_w: Complex64,
        boundary_w: Arc<Vec<Complex64>>,
        cval: Complex64,
    },
    /// Isotopy cylinder: (x, y) ↦ ψ(params(x), s0 + y'·(s1 − s0)) with an
    /// optional interior warp y' = warp(x, y); evaluated column-wise by
    /// sweeping s.
    IsotopyCylinder {
        lagrangian: Arc<FiberedLagrangian>,
        homotopy: BaseHomotopy,
        params: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
        s0: f64,
        s1: f64,
        warp: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
    },
}

fn interp_w(boundary_w: &[Complex64], x: f64) -> Complex64 {
    let n = boundary_w.len();
    let xi = x.rem_euclid(1.0) * n as f64;
    let k = xi.floor() as i64;
    let t = xi - k as f64;
    let get = |j: i64| boundary_w[(j.rem_euclid(n as i64)) as usize];
    let (p0, p1, p2, p3) = (get(k - 1), get(k), get(k + 1), get(k + 2));
    let c0 = -0.5 * t + t * t - 0.5 * t * t * t;
    let c1 = 1.0 - 2.5 * t * t + 1.5 * t * t * t;
    let c2 = 0.5 * t + 2.0 * t * t - 1.5 * t * t * t;
    let c3 = -0.5 * t * t + 0.5 * t * t * t;
    p0 * c0 + p1 * c1 + p2 * c2 + p3 * c3
}

impl PieceMap {
    fn eval(&self, a: f64, b: f64) -> Result<CVec> {
        match self {
            PieceMap::Pointwise(f) => f(a, b),
            PieceMap::Cone { center, boundary } => {
                let lam = boundary.at(b / (2.0 * PI));
                Ok(center.add(&lam.sub(center).scale_re(a)))
            }
            PieceMap::LogCone { center_w, boundary_w, cval } => {
                let wb = interp_w(boundary_w, b / (2.0 * PI));
                let w = center_w + a * (wb - center_w);
                let z1 = w.exp();
                Ok(CVec::two(z1, cval / z1))
            }
            PieceMap::IsotopyCylinder {
                lagrangian,
                homotopy,
                params,
                s0,
                s1,
                warp,
            } => {
                let (t, u) = params(a);
                let y = warp.as_ref().map_or(b, |w| w(a, b));
                let s = s0 + y * (s1 - s0);
                Ok(psi_eval(lagrangian, homotopy, t, u, s)?.coords)
            }
        }
    }
}

/// One triangulated parametric piece of a patch.
pub struct PatchPiece {
    pub domain: PieceDomain,
    pub map: PieceMap,
    /// ±1: sign with which this piece's area counts.
    pub orientation: f64,
}

/// Where a boundary arc lives on a (possibly isotoped) fibered Lagrangian.
pub struct ArcPullback {
    pub lagrangian: Arc<FiberedLagrangian>,
    /// τ ∈ [0, 1] ↦ (t, u) Lagrangian parameters.
    pub params: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
    /// When set, the arc trace equals ψ_s(L(params)) for this homotopy and
    /// stage; when None it lies on L itself.
    pub stage: Option<(BaseHomotopy, f64)>,
}

impl ArcPullback {
    fn reference(&self, tau: f64) -> Result<CVec> {
        let (t, u) = (self.params)(tau);
        match &self.stage {
            None => Ok(self.lagrangian.eval(t, u)?.coords),
            Some((h, s)) => Ok(psi_eval(&self.lagrangian, h, t, u, *s)?.coords),
        }
    }
}

/// A boundary arc of a patch: its trace in the chart and, when assigned,
/// the Lagrangian it must lie on.
pub struct BoundaryArc {
    pub trace: Arc<dyn Fn(f64) -> Result<CVec> + Send + Sync>,
    pub pullback: Option<ArcPullback>,
}

/// A sampled disc patch: triangulated pieces, boundary arcs, and corners.
pub struct DiscPatch {
    pub model: Model,
    pub pieces: Vec<PatchPiece>,
    pub arcs: Vec<BoundaryArc>,
    pub corners: Vec<CVec>,
    /// Base linear resolution (mesh cells scale with its square).
    pub resolution: usize,
}

fn mesh(domain: &PieceDomain, res: usize) -> (Vec<(f64, f64)>, Vec<[usize; 3]>) {
    match domain {
        PieceDomain::Polygon { arcs } => {
            // Tile the (ρ, φ) parameter rectangle [0,1]×[0,2π]; the map
            // collapses ρ = 0 to a point, the integrand vanishes there.
            let rings = 16 * res;
            let per_arc = (48 * res + arcs - 1) / arcs;
            let ang = arcs * per_arc;
            let mut verts = Vec::new();
            for i in 0..=rings {
                let rho = i as f64 / rings as f64;
                for j in 0..=ang {
                    verts.push((rho, 2.0 * PI * j as f64 / ang as f64));
                }
            }
            let idx = |i: usize, j: usize| i * (ang + 1) + j;
            let mut tris = Vec::new();
            for i in 0..rings {
                for j in 0..ang {
                    tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                    tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                }
            }
            (verts, tris)
        }
        PieceDomain::Annulus { inner } => {
            let rings = 24 * res;
            let ang = 48 * res;
            let mut verts = Vec::new();
            for i in 0..=rings {
                let rho = inner + (1.0 - inner) * i as f64 / rings as f64;
                for j in 0..=ang {
                    verts.push((rho, 2.0 * PI * j as f64 / ang as f64));
                }
            }
            let idx = |i: usize, j: usize| i * (ang + 1) + j;
            let mut tris = Vec::new();
            for i in 0..rings {
                for j in 0..ang {
                    tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                    tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                }
            }
            (verts, tris)
        }
        PieceDomain::Rectangle => {
            let nx = 48 * res;
            let ny = 24 * res;
            let mut verts = Vec::new();
            for i in 0..=nx {
                for j in 0..=ny {
                    verts.push((i as f64 / nx as f64, j as f64 / ny as f64));
                }
            }
            let idx = |i: usize, j: usize| i * (ny + 1) + j;
            let mut tris = Vec::new();
            for i in 0..nx {
                for j in 0..ny {
                    tris.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                    tris.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                }
            }
            (verts, tris)
        }
    }
}

/// Batched evaluation of arbitrary domain points, grouping isotopy-cylinder
/// evaluations into per-column s-sweeps.
fn piece_eval_batch(piece: &PatchPiece, pts: &[(f64, f64)]) -> Result<Vec<CVec>> {
    match &piece.map {
        PieceMap::IsotopyCylinder {
            lagrangian,
            homotopy,
            params,
            s0,
            s1,
            warp,
        } => {
            let mut out = vec![CVec::zero(lagrangian.model.dim_total()); pts.len()];
            // Group by exact x so each group becomes one monotone sweep.
            let mut groups: std::collections::HashMap<u64, Vec<usize>> =
                std::collections::HashMap::new();
            for (k, &(x, _)) in pts.iter().enumerate() {
                groups.entry(x.to_bits()).or_default().push(k);
            }
            for (xbits, idxs) in groups {
                let x = f64::from_bits(xbits);
                let (t, u) = params(x);
                let mut nodes: Vec<(usize, f64)> = idxs
                    .iter()
                    .map(|&k| {
                        let y = warp.as_ref().map_or(pts[k].1, |w| w(x, pts[k].1));
                        (k, s0 + y * (s1 - s0))
                    })
                    .collect();
                nodes.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
                let svals: Vec<f64> = nodes.iter().map(|&(_, s)| s).collect();
                let vals = psi_sweep_eval(lagrangian, homotopy, t, u, &svals)?;
                for ((k, _), p) in nodes.iter().zip(vals) {
                    out[*k] = p.coords;
                }
            }
            Ok(out)
        }
        _ => pts.iter().map(|&(a, b)| piece.map.eval(a, b)).collect(),
    }
}

/// Domain step for the centroid partial derivatives.
const AREA_FD: f64 = 1e-6;

fn piece_area_at_resolution(model: &Model, piece: &PatchPiece, res: usize) -> Result<f64> {
    let (verts, tris) = mesh(&piece.domain, res);
    // Four FD probes around each triangle centroid.
    let mut probes: Vec<(f64, f64)> = Vec::with_capacity(4 * tris.len());
    let mut dom_areas: Vec<f64> = Vec::with_capacity(tris.len());
    for t in &tris {
        let (ax, ay) = verts[t[0]];
        let (bx, by) = verts[t[1]];
        let (cx, cy) = verts[t[2]];
        let gx = (ax + bx + cx) / 3.0;
        let gy = (ay + by + cy) / 3.0;
        dom_areas.push(0.5 * ((bx - ax) * (cy - ay) - (by - ay) * (cx - ax)));
        probes.push((gx + AREA_FD, gy));
        probes.push((gx - AREA_FD, gy));
        probes.push((gx, gy + AREA_FD));
        probes.push((gx, gy - AREA_FD));
    }
    let vals = piece_eval_batch(piece, &probes)?;
    let mut acc = 0.0;
    for (k, da) in dom_areas.iter().enumerate() {
        let d1 = vals[4 * k].sub(&vals[4 * k + 1]).scale_re(0.5 / AREA_FD);
        let d2 = vals[4 * k + 2].sub(&vals[4 * k + 3]).scale_re(0.5 / AREA_FD);
        acc += model.omega_raw(&d1, &d2) * da;
    }
    Ok(piece.orientation * acc)
}

/// Signed symplectic area of the patch at linear resolution `res`:
/// per-triangle midpoint rule on the Jacobian pairing ω(∂₁u, ∂₂u).
pub fn disc_area_at_resolution(patch: &DiscPatch, res: usize) -> Result<f64> {
    let mut total = 0.0;
    for piece in &patch.pieces {
        total += piece_area_at_resolution(&patch.model, piece, res)?;
    }
    Ok(total)
}

/// Symplectic area with the mesh-refinement convergence requirement: each
/// piece escalates its resolution independently until doubling moves its
/// value by less than its share of `QUAD_TOL`; errors when the cap is
/// reached without convergence. Returns (area, total refinement defect).
pub fn disc_area(patch: &DiscPatch) -> Result<(f64, f64)> {
    let share = QUAD_TOL / patch.pieces.len().max(1) as f64;
    let mut total = 0.0;
    let mut total_defect = 0.0;
    for piece in &patch.pieces {
        let mut res = patch.resolution;
        let mut coarse = piece_area_at_resolution(&patch.model, piece, res)?;
        let mut done = false;
        for _ in 0..6 {
            let fine = piece_area_at_resolution(&patch.model, piece, 2 * res)?;
            let defect = (fine - coarse).abs();
            if defect < share {
                total += fine;
                total_defect += defect;
                done = true;
                break;
            }
            res *= 2;
            coarse = fine;
        }
        if !done {
            return Err(Error::Mesh(format!(
                "quadrature not converged at resolution cap (piece area {coarse:.6})"
            )));
        }
    }
    Ok((total, total_defect))
}

/// Worst distance between assigned boundary arcs and their Lagrangians.
pub fn boundary_fidelity(patch: &DiscPatch, samples: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for arc in &patch.arcs {
        if let Some(pb) = &arc.pullback {
            for k in 0..=samples {
                let tau = k as f64 / samples as f64;
                let on_patch = (arc.trace)(tau)?;
                let on_lagr = pb.reference(tau)?;
                worst = worst.max(on_patch.sub(&on_lagr).norm());
            }
        }
    }
    if worst > BOUNDARY_TOL {
        return Err(Error::Argument(format!(
            "boundary arc leaves its Lagrangian by {worst:.3e}"
        )));
    }
    Ok(worst)
}

/// Deform the patch by sweeping boundary arc `m` along the isotopy from
/// stage `s0` to `s1`: the swept cylinder is glued with reversed
/// orientation, arc `m` is replaced by its stage-`s1` image, and the two
/// adjacent corners move with it.
pub fn deform_disc(
    patch: &DiscPatch,
    iso: &LagrangianIsotopy,
    m: usize,
    s_range: (f64, f64),
) -> Result<DiscPatch> {
    let (s0, s1) = s_range;
    let arc = patch
        .arcs
        .get(m)
        .ok_or_else(|| Error::Argument(format!("patch has no boundary arc {m}")))?;
    let pb = arc
        .pullback
        .as_ref()
        .ok_or_else(|| Error::Argument("swept arc carries no Lagrangian parameters".into()))?;
    if !Arc::ptr_eq(&pb.lagrangian, &iso.lagrangian) {
        return Err(Error::Argument(
            "boundary arc lies on a different Lagrangian than the isotopy moves".into(),
        ));
    }
    // The declared stage of the arc must match s0.
    for k in 0..=16 {
        let tau = k as f64 / 16.0;
        let (t, u) = (pb.params)(tau);
        let expect = psi_eval(&iso.lagrangian, &iso.homotopy, t, u, s0)?.coords;
        let got = (arc.trace)(tau)?;
        if got.sub(&expect).norm() > 1e-6 {
            return Err(Error::Argument(format!(
                "arc {m} is not the stage-{s0} image of its Lagrangian parameters"
            )));
        }
    }

    let mut pieces: Vec<PatchPiece> = Vec::new();
    for p in &patch.pieces {
        pieces.push(PatchPiece {
            domain: p.domain,
            map: clone_map(&p.map),
            orientation: p.orientation,
        });
    }
    pieces.push(PatchPiece {
        domain: PieceDomain::Rectangle,
        map: PieceMap::IsotopyCylinder {
            lagrangian: iso.lagrangian.clone(),
            homotopy: iso.homotopy.clone(),
            params: pb.params.clone(),
            s0,
            s1,
            warp: None,
        },
        orientation: -1.0,
    });

    let mut arcs: Vec<BoundaryArc> = Vec::new();
    for (j, a) in patch.arcs.iter().enumerate() {
        if j == m {
            let l = iso.lagrangian.clone();
            let h = iso.homotopy.clone();
            let params = pb.params.clone();
            let params2 = pb.params.clone();
            arcs.push(BoundaryArc {
                trace: Arc::new(move |tau| {
                    let (t, u) = params(tau);
                    Ok(psi_eval(&l, &h, t, u, s1)?.coords)
                }),
                pullback: Some(ArcPullback {
                    lagrangian: iso.lagrangian.clone(),
                    params: params2,
                    stage: Some((iso.homotopy.clone(), s1)),
                }),
            });
        } else {
            arcs.push(BoundaryArc {
                trace: a.trace.clone(),
                pullback: a.pullback.as_ref().map(|pb| ArcPullback {
                    lagrangian: pb.lagrangian.clone(),
                    params: pb.params.clone(),
                    stage: pb.stage.clone(),
                }),
            });
        }
    }

    let mut corners = patch.corners.clone();
    let n = corners.len().max(1);
    let start = (arcs[m].trace)(0.0)?;
    let end = (arcs[m].trace)(1.0)?;
    if !corners.is_empty() {
        corners[m % n] = start;
        corners[(m + 1) % n] = end;
    }

    Ok(DiscPatch {
        model: patch.model,
        pieces,
        arcs,
        corners,
        resolution: patch.resolution,
    })
}

fn clone_map(map: &PieceMap) -> PieceMap {
    match map {
        PieceMap::Pointwise(f) => PieceMap::Pointwise(f.clone()),
        PieceMap::Cone { center, boundary } => PieceMap::Cone {
            center: *center,
            boundary: boundary.clone(),
        },
        PieceMap::LogCone {
            center_w,
            boundary_w,
            cval,
        } => PieceMap::LogCone {
            center_w: *center_w,
            boundary_w: boundary_w.clone(),
            cval: *cval,
        },
        PieceMap::IsotopyCylinder {
            lagrangian,
            homotopy,
            params,
            s0,
            s1,
            warp,
        } => PieceMap::IsotopyCylinder {
            lagrangian: lagrangian.clone(),
            homotopy: homotopy.clone(),
            params: params.clone(),
            s0: *s0,
            s1: *s1,
            warp: warp.clone(),
        },
    }
}

/// Reparametrize the patch by an interior domain diffeomorphism fixing the
/// boundary pointwise; the image (hence the area and the boundary data) is
/// unchanged.
pub fn reparametrized(patch: &DiscPatch, strength: f64) -> DiscPatch {
    let pieces = patch
        .pieces
        .iter()
        .map(|p| {
            let s = strength;
            // Isotopy cylinders keep their column structure: only the s
            // coordinate is warped (an interior diffeo fixing the boundary).
            if let PieceMap::IsotopyCylinder {
                lagrangian,
                homotopy,
                params,
                s0,
                s1,
                warp,
            } = &p.map
            {
                let prev = warp.clone();
                let new_warp = move |x: f64, y: f64| -> f64 {
                    let y = prev.as_ref().map_or(y, |w| w(x, y));
                    y + s * y * (1.0 - y) * (PI * x).sin().powi(2)
                };
                return PatchPiece {
                    domain: p.domain,
                    map: PieceMap::IsotopyCylinder {
                        lagrangian: lagrangian.clone(),
                        homotopy: homotopy.clone(),
                        params: params.clone(),
                        s0: *s0,
                        s1: *s1,
                        warp: Some(Arc::new(new_warp)),
                    },
                    orientation: p.orientation,
                };
            }
            let inner = clone_map(&p.map);
            let domain = p.domain;
            let warped = move |a: f64, b: f64| -> Result<CVec> {
                match domain {
                    PieceDomain::Polygon { .. } => {
                        // Fixes ρ = 0, ρ = 1 and every boundary point.
                        let a2 = a + s * a * (1.0 - a);
                        let b2 = b + s * a * (1.0 - a) * (2.0 * b).sin();
                        inner.eval(a2, b2)
                    }
                    PieceDomain::Annulus { inner: r_in } => {
                        let x = (a - r_in) / (1.0 - r_in);
                        let a2 = r_in + (1.0 - r_in) * (x + s * x * (1.0 - x));
                        inner.eval(a2, b)
                    }
                    PieceDomain::Rectangle => {
                        let a2 = a + s * a * (1.0 - a) * (PI * b).sin().powi(2);
                        let b2 = b + s * b * (1.0 - b) * (PI * a).sin().powi(2);
                        inner.eval(a2, b2)
                    }
                }
            };
            PatchPiece {
                domain: p.domain,
                map: PieceMap::Pointwise(Arc::new(warped)),
                orientation: p.orientation,
            }
        })
        .collect();
    DiscPatch {
        model: patch.model,
        pieces,
        arcs: patch
            .arcs
            .iter()
            .map(|a| BoundaryArc {
                trace: a.trace.clone(),
                pullback: a.pullback.as_ref().map(|pb| ArcPullback {
                    lagrangian: pb.lagrangian.clone(),
                    params: pb.params.clone(),
                    stage: pb.stage.clone(),
                }),
            })
            .collect(),
        corners: patch.corners.clone(),
        resolution: patch.resolution,
    }
}

/// Outcome of an area-identity verification.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AreaReport {
    pub area_u: f64,
    pub area_u_prime: f64,
    pub boundary_term: f64,
    pub residual: f64,
    pub convergence_defect: f64,
    pub boundary_fidelity: f64,
}

/// Verify the endpoint-potential identity
/// `area(u) − area(u') = f(p_{m+1}) − f(p_m)` for the isotopy deformation
/// of boundary arc `m`.
pub fn area_difference_check(
    patch: &DiscPatch,
    iso: &LagrangianIsotopy,
    m: usize,
) -> Result<AreaReport> {
    let fidelity = boundary_fidelity(patch, 64)?;
    let pb = patch.arcs[m]
        .pullback
        .as_ref()
        .ok_or_else(|| Error::Argument("arc m carries no Lagrangian parameters".into()))?;
    let (area_u, d1) = disc_area(patch)?;
    let deformed = deform_disc(patch, iso, m, (0.0, 1.0))?;
    let (area_up, d2) = disc_area(&deformed)?;
    let p_start = (pb.params)(0.0);
    let p_end = (pb.params)(1.0);
    let boundary_term = iso.potential(p_end, p_start, 1e-5)?;
    let residual = ((area_u - area_up) - boundary_term).abs();
    Ok(AreaReport {
        area_u,
        area_u_prime: area_up,
        boundary_term,
        residual,
        convergence_defect: d1.max(d2),
        boundary_fidelity: fidelity,
    })
}

/// Verify the fiber/base splitting of a triangle's area:
/// `∫u ω = ∫u'' ω + f(p₁) − f(p₀)` with `u''` contained in the fiber over
/// −ε. `m` indexes the swept arc of `u` (the one on the isotopy's
/// Lagrangian); `others` are the remaining fibered Lagrangians whose base
/// curves must also pass through −ε.
pub fn triangle_split_check(
    u: &DiscPatch,
    iso: &LagrangianIsotopy,
    u_dd: &DiscPatch,
    m: usize,
    eps: f64,
    others: &[Arc<FiberedLagrangian>],
) -> Result<AreaReport> {
    let minus_eps = Complex64::new(-eps, 0.0);
    // Hypothesis: all base curves pass through −ε.
    let mut curves: Vec<&crate::fibration::BasePath> = vec![&iso.lagrangian.curve];
    for l in others {
        curves.push(&l.curve);
    }
    for curve in curves {
        // Newton-refined closest approach; must reach −ε.
        curve_param_at(curve, minus_eps)?;
    }
    // u'' must lie in the fiber over −ε.
    let mut worst_fiber: f64 = 0.0;
    for piece in &u_dd.pieces {
        let (verts, _) = mesh(&piece.domain, u_dd.resolution);
        for img in piece_eval_batch(piece, &verts)? {
            let defect = (u.model.v(&PointY::new(img)) - minus_eps).norm();
            worst_fiber = worst_fiber.max(defect);
        }
    }
    if worst_fiber > 1e-8 {
        return Err(Error::Hypothesis(format!(
            "u'' leaves the fiber over −ε by {worst_fiber:.3e}"
        )));
    }

    let fidelity = boundary_fidelity(u, 64)?;
    let pb = u.arcs[m]
        .pullback
        .as_ref()
        .ok_or_else(|| Error::Argument("swept arc carries no Lagrangian parameters".into()))?;
    let (area_u, d1) = disc_area(u)?;
    let (area_udd, d2) = disc_area(u_dd)?;
    let p_start = (pb.params)(0.0);
    let p_end = (pb.params)(1.0);
    let f_term = iso.potential(p_end, p_start, 1e-5)?;
    let residual = (area_u - (area_udd + f_term)).abs();
    Ok(AreaReport {
        area_u,
        area_u_prime: area_udd,
        boundary_term: f_term,
        residual,
        convergence_defect: d1.max(d2),
        boundary_fidelity: fidelity.max(worst_fiber),
    })
}

/// Patch factory: the round disc u(z) = R·z in the trivial line.
pub fn round_disc_patch(model: Model, radius: f64) -> DiscPatch {
    let map = move |rho: f64, phi: f64| -> Result<CVec> {
        Ok(CVec::one(Complex64::from_polar(radius * rho, phi)))
    };
    DiscPatch {
        model,
        pieces: vec![PatchPiece {
            domain: PieceDomain::Polygon { arcs: 1 },
            map: PieceMap::Pointwise(Arc::new(map)),
            orientation: 1.0,
        }],
        arcs: vec![BoundaryArc {
            trace: Arc::new(move |tau| {
                Ok(CVec::one(Complex64::from_polar(radius, 2.0 * PI * tau)))
            }),
            pullback: None,
        }],
        corners: vec![CVec::one(Complex64::new(radius, 0.0))],
        resolution: 1,
    }
}

/// Patch factory: a constant map (zero area).
pub fn constant_patch(model: Model, at: CVec) -> DiscPatch {
    DiscPatch {
        model,
        pieces: vec![PatchPiece {
            domain: PieceDomain::Polygon { arcs: 1 },
            map: PieceMap::Pointwise(Arc::new(move |_, _| Ok(at))),
            orientation: 1.0,
        }],
        arcs: vec![BoundaryArc {
            trace: Arc::new(move |_| Ok(at)),
            pullback: None,
        }],
        corners: vec![at],
        resolution: 1,
    }
}

/// Patch factory: the conic fiber graph z₂ = c/z₁ over the annulus
/// `r_inner ≤ |z₁| ≤ r_outer` in the fiber over c.
pub fn conic_annulus_patch(model: Model, cval: Complex64, r_outer: f64, r_inner: f64) -> DiscPatch {
    let map = move |rho: f64, phi: f64| -> Result<CVec> {
        let z1 = Complex64::from_polar(r_outer * rho, phi);
        Ok(CVec::two(z1, cval / z1))
    };
    DiscPatch {
        model,
        pieces: vec![PatchPiece {
            domain: PieceDomain::Annulus {
                inner: r_inner / r_outer,
            },
            map: PieceMap::Pointwise(Arc::new(map)),
            orientation: 1.0,
        }],
        arcs: Vec::new(),
        corners: Vec::new(),
        resolution: 1,
    }
}

/// Linear interpolation in Lagrangian parameters from a to b, shortening
/// circular fiber parameters to the nearest representative.
pub fn param_segment(
    l: &FiberedLagrangian,
    a: (f64, f64),
    b: (f64, f64),
) -> impl Fn(f64) -> (f64, f64) + Send + Sync + Clone {
    let mut du = b.1 - a.1;
    if matches!(l.fiber, crate::lagrangians::FiberParam::Circle { .. }) {
        du = (du + PI).rem_euclid(2.0 * PI) - PI;
    }
    let (t_a, u_a) = a;
    let dt = b.0 - a.0;
    move |tau: f64| (t_a + tau * dt, u_a + tau * du)
}

/// Patch factory: a two-cornered strip between two fibered Lagrangians,
/// filled by coning the boundary loop from its centroid in the chart.
/// Arc 0 runs along l0 from `p_a` to `p_b`; arc 1 returns along l1.
pub fn strip_patch(
    l0: Arc<FiberedLagrangian>,
    l1: Arc<FiberedLagrangian>,
    p_a: &IntersectionPoint,
    p_b: &IntersectionPoint,
    loop_nodes: usize,
) -> Result<DiscPatch> {
    let model = l0.model;
    let params0 = param_segment(&l0, (p_a.t0, p_a.u0), (p_b.t0, p_b.u0));
    let params1 = param_segment(&l1, (p_b.t1, p_b.u1), (p_a.t1, p_a.u1));
    let l0c = l0.clone();
    let l1c = l1.clone();
    let p0 = params0.clone();
    let p1 = params1.clone();
    let boundary = TabulatedLoop::build(loop_nodes, &mut |x| {
        if x < 0.5 {
            let (t, u) = p0(2.0 * x);
            Ok(l0c.eval(t, u)?.coords)
        } else {
            let (t, u) = p1(2.0 * x - 1.0);
            Ok(l1c.eval(t, u)?.coords)
        }
    })?;
    let boundary = Arc::new(boundary);
    let center = boundary.centroid();
    let trace0 = boundary.clone();
    let trace1 = boundary.clone();
    let params0_arc: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync> = Arc::new(params0);
    let params1_arc: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync> = Arc::new(params1);
    Ok(DiscPatch {
        model,
        pieces: vec![PatchPiece {
            domain: PieceDomain::Polygon { arcs: 2 },
            map: PieceMap::Cone { center, boundary },
            orientation: 1.0,
        }],
        arcs: vec![
            BoundaryArc {
                trace: Arc::new(move |tau| Ok(trace0.at(tau / 2.0))),
                pullback: Some(ArcPullback {
                    lagrangian: l0,
                    params: params0_arc,
                    stage: None,
                }),
            },
            BoundaryArc {
                trace: Arc::new(move |tau| Ok(trace1.at(0.5 + tau / 2.0))),
                pullback: Some(ArcPullback {
                    lagrangian: l1,
                    params: params1_arc,
                    stage: None,
                }),
            },
        ],
        corners: vec![p_a.point.coords, p_b.point.coords],
        resolution: 1,
    })
}

/// Find the curve parameter where a base curve meets a target value.
fn curve_param_at(curve: &crate::fibration::BasePath, target: Complex64) -> Result<f64> {
    use crate::fibration::Curve;
    let (a, b) = curve.domain();
    let mut best = (f64::INFINITY, a);
    for k in 0..=4000 {
        let t = a + (b - a) * k as f64 / 4000.0;
        let d = (curve.at(t) - target).norm();
        if d < best.0 {
            best = (d, t);
        }
    }
    let mut t = best.1;
    for _ in 0..60 {
        let r = curve.at(t) - target;
        if r.norm() < 1e-12 {
            break;
        }
        let d = curve.deriv(t);
        // Gauss-Newton on |γ(t) − target|².
        let g = (r.conj() * d).re;
        let h = d.norm_sqr();
        t = (t - g / h).clamp(a, b);
    }
    if (curve.at(t) - target).norm() > 1e-8 {
        return Err(Error::Hypothesis(format!(
            "curve misses {target} (closest {:.3e})",
            (curve.at(t) - target).norm()
        )));
    }
    Ok(t)
}

/// The pair (u, u'') of the fiber/base area-splitting scenario.
///
/// `iso` contracts a sub-arc of a circle-fibered Lagrangian L1 sitting on
/// the flat locus (circle moment zero) to −ε. `l0` is a static ray-fibered
/// Lagrangian and `l2` a static circle-fibered one, both over base curves
/// through −ε; `q1 ∈ L0∩L1` and `q0 ∈ L0∩L2` are honest transverse
/// intersection points in the fiber over −ε.
///
/// The fiber patch u'' is an annular sector over −ε: the swept side is the
/// ψ₁-image of an L1-arc ending exactly at q1 (it lies on the circle slice
/// |z₁| = √ε), the transversal side runs along L0's fiber slice from q1 to
/// q0, the outer side along L2's slice circle, and a near-radial seam
/// closes the loop. The total-space patch u is recovered by running the
/// isotopy sweep backwards, so u and u'' are homologous by construction.
pub fn fiber_triangle_patches(
    iso: &LagrangianIsotopy,
    l0: Arc<FiberedLagrangian>,
    l2: Arc<FiberedLagrangian>,
    q1: &IntersectionPoint,
    q0: &IntersectionPoint,
    arc_t_start: f64,
    arc_u_span: f64,
    nodes_per_arc: usize,
) -> Result<(DiscPatch, DiscPatch)> {
    let l1 = iso.lagrangian.clone();
    let model = l1.model;
    if model.fiber_dim() != 1 {
        return Err(Error::Argument("fiber sector needs 1-dimensional fibers".into()));
    }
    if !matches!(l1.fiber, crate::lagrangians::FiberParam::Circle { .. }) {
        return Err(Error::Argument("the contracted Lagrangian must be circle-fibered".into()));
    }
    let minus_eps = match &iso.homotopy.target {
        crate::lagrangians::HomotopyTarget::Constant { value } => Complex64::new(value.0, value.1),
        _ => {
            return Err(Error::Argument(
                "triangle isotopy must contract to a constant point".into(),
            ))
        }
    };
    // Corner bookkeeping: q1 lies on L0 (slot 0) and L1 (slot 1) over −ε,
    // q0 on L0 (slot 0) and L2 (slot 1) over −ε, at a common L0 parameter.
    if (q1.base_value - minus_eps).norm() > 1e-8 || (q0.base_value - minus_eps).norm() > 1e-8 {
        return Err(Error::Hypothesis("corner points must sit over −ε".into()));
    }
    if (q1.t0 - q0.t0).abs() > 1e-8 {
        return Err(Error::Hypothesis(
            "corners must share the L0 curve parameter over −ε".into(),
        ));
    }
    let t1_eps = q1.t1;
    if (crate::fibration::Curve::at(&l1.curve, t1_eps) - minus_eps).norm() > 1e-8 {
        return Err(Error::Hypothesis("q1 must be L1's slice over −ε".into()));
    }

    // Swept-side pullback: t from arc_t_start to t1_eps, u from
    // q1.u1 + arc_u_span to q1.u1, so the stage-1 trace ends exactly at q1.
    let (tb, te) = (arc_t_start, t1_eps);
    let (ub, ue) = (q1.u1 + arc_u_span, q1.u1);
    let b_params = move |tau: f64| (tb + tau * (te - tb), ub + tau * (ue - ub));
    // Stage-1 start of the swept side; the seam targets its angle.
    let b_start = {
        let (t, u) = b_params(0.0);
        psi_eval(&l1, &iso.homotopy, t, u, 1.0)?.coords
    };
    let beta = b_start[0].arg();

    // Outer arc on L2's slice: from q0 toward the seam angle.
    let t2_eps = q0.t1;
    let phi2 = l2.eval(t2_eps, 0.0)?.coords[0].arg();
    let mut du_c = (beta - phi2 - q0.u1 + PI).rem_euclid(2.0 * PI) - PI;

    // Transversal arc on L0's slice from q1 to q0.
    let t0_eps = q1.t0;
    let a_params = param_segment(&l0, (t0_eps, q1.u0), (t0_eps, q0.u0));

    // Tabulate z1 along the closed 4-gon [swept, transversal, outer, seam],
    // rerouting the outer arc until the loop does not wind around z1 = 0.
    let n_total = 4 * nodes_per_arc;
    let mut boundary_w: Option<Vec<Complex64>> = None;
    for attempt in 0..3 {
        let loop_z1 = |x: f64| -> Result<Complex64> {
            let x = x.rem_euclid(1.0);
            let seg = (x * 4.0).floor().min(3.0) as usize;
            let tau = x * 4.0 - seg as f64;
            match seg {
                0 => {
                    let (t, u) = b_params(tau);
                    Ok(psi_eval(&l1, &iso.homotopy, t, u, 1.0)?.coords[0])
                }
                1 => {
                    let (t, u) = a_params(tau);
                    Ok(l0.eval(t, u)?.coords[0])
                }
                2 => Ok(l2.eval(t2_eps, q0.u1 + tau * du_c)?.coords[0]),
                3 => {
                    let from = l2.eval(t2_eps, q0.u1 + du_c)?.coords[0];
                    Ok(log_segment(from, b_start[0], tau))
                }
                _ => unreachable!(),
            }
        };
        let samples: Vec<Complex64> =
            (0..n_total).map(|k| loop_z1(k as f64 / n_total as f64)).collect::<Result<_>>()?;
        let mut ws = Vec::with_capacity(n_total);
        let mut arg = samples[0].arg();
        ws.push(Complex64::new(samples[0].norm().ln(), arg));
        for k in 1..n_total {
            let d = (samples[k] / samples[k - 1]).arg();
            arg += d;
            ws.push(Complex64::new(samples[k].norm().ln(), arg));
        }
        let closure_gap = (samples[0] / samples[n_total - 1]).arg();
        let winding = (ws[n_total - 1].im + closure_gap - ws[0].im) / (2.0 * PI);
        let n_wind = winding.round();
        if n_wind.abs() < 0.25 {
            boundary_w = Some(ws);
            break;
        }
        if attempt == 2 {
            return Err(Error::Hypothesis(format!(
                "fiber sector boundary winds {n_wind} times around the critical point"
            )));
        }
        du_c -= 2.0 * PI * n_wind;
    }
    let boundary_w = Arc::new(boundary_w.expect("winding loop resolved"));
    let center_w = {
        let mut acc = Complex64::new(0.0, 0.0);
        for w in boundary_w.iter() {
            acc += w;
        }
        acc / n_total as f64
    };

    // Exact boundary traces and pullbacks.
    let (l1a, l1b) = (l1.clone(), l1.clone());
    let h_b = iso.homotopy.clone();
    let (l0t, l0p) = (l0.clone(), l0.clone());
    let ap = a_params.clone();
    let (l2t, l2p, l2s) = (l2.clone(), l2.clone(), l2.clone());
    let q0u1 = q0.u1;
    let arcs = vec![
        BoundaryArc {
            trace: Arc::new(move |tau| {
                let (t, u) = b_params(tau);
                Ok(psi_eval(&l1a, &h_b, t, u, 1.0)?.coords)
            }),
            pullback: Some(ArcPullback {
                lagrangian: l1b,
                params: Arc::new(b_params),
                stage: Some((iso.homotopy.clone(), 1.0)),
            }),
        },
        BoundaryArc {
            trace: Arc::new(move |tau: f64| {
                let (t, u) = ap(tau);
                Ok(l0t.eval(t, u)?.coords)
            }),
            pullback: Some(ArcPullback {
                lagrangian: l0p,
                params: Arc::new(a_params.clone()),
                stage: None,
            }),
        },
        BoundaryArc {
            trace: Arc::new(move |tau: f64| Ok(l2t.eval(t2_eps, q0u1 + tau * du_c)?.coords)),
            pullback: Some(ArcPullback {
                lagrangian: l2p,
                params: Arc::new(move |tau: f64| (t2_eps, q0u1 + tau * du_c)),
                stage: None,
            }),
        },
        BoundaryArc {
            trace: {
                let cval = minus_eps;
                Arc::new(move |tau: f64| {
                    let from = l2s.eval(t2_eps, q0u1 + du_c)?.coords[0];
                    let z1 = log_segment(from, b_start[0], tau);
                    Ok(CVec::two(z1, cval / z1))
                })
            },
            pullback: None,
        },
    ];
    let mut corners = Vec::new();
    for arc in &arcs {
        corners.push((arc.trace)(0.0)?);
    }
    let u_dd = DiscPatch {
        model,
        pieces: vec![PatchPiece {
            domain: PieceDomain::Polygon { arcs: 4 },
            map: PieceMap::LogCone {
                center_w,
                boundary_w,
                cval: minus_eps,
            },
            orientation: 1.0,
        }],
        arcs,
        corners,
        resolution: 1,
    };

    // Sweep the ψ₁-side back down to L1: homologous by construction.
    let u = deform_disc(&u_dd, iso, 0, (1.0, 0.0))?;
    Ok((u, u_dd))
}

/// Straight segment in log coordinates between two nonzero z1 values, with
/// the argument gap shortened mod 2π.
fn log_segment(from: Complex64, to: Complex64, tau: f64) -> Complex64 {
    let w_from = Complex64::new(from.norm().ln(), from.arg());
    let mut darg = to.arg() - from.arg();
    darg = (darg + PI).rem_euclid(2.0 * PI) - PI;
    let dw = Complex64::new(to.norm().ln() - w_from.re, darg);
    (w_from + tau * dw).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibration::{BasePath, TransportOpts};
    use crate::lagrangians::{find_intersections, make_isotopy, BumpOpts, FiberParam, HomotopyTarget};
    use crate::models::ModelId;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn round_disc_area_is_pi_r_squared() {
        let m = Model::new(ModelId::TrivialLine);
        for &r in &[0.5f64, 1.0, 1.7] {
            let patch = round_disc_patch(m, r);
            let (area, defect) = disc_area(&patch).unwrap();
            assert!((area - PI * r * r).abs() < 1e-5, "area {area} vs {}", PI * r * r);
            assert!(defect < 1e-5);
        }
    }

    #[test]
    fn constant_patch_has_zero_area() {
        let m = Model::new(ModelId::Conic);
        let patch = constant_patch(m, CVec::two(c(1.0, 0.0), c(1.0, 0.0)));
        let (area, _) = disc_area(&patch).unwrap();
        assert_eq!(area, 0.0);
    }

    #[test]
    fn conic_annulus_area_closed_form() {
        // π(R² − R'²) + π|c|²(1/R'² − 1/R²).
        let m = Model::new(ModelId::Conic);
        let cval = c(-0.3, 0.0);
        let (r, rp) = (1.0, 0.5);
        let patch = conic_annulus_patch(m, cval, r, rp);
        let want = PI * (r * r - rp * rp)
            + PI * cval.norm_sqr() * (1.0 / (rp * rp) - 1.0 / (r * r));
        let (area, defect) = disc_area(&patch).unwrap();
        assert!((area - want).abs() < 1e-5, "area {area} want {want}");
        assert!(defect < 1e-5);
    }

    #[test]
    fn reparametrization_preserves_area() {
        let m = Model::new(ModelId::TrivialLine);
        let patch = round_disc_patch(m, 1.2);
        let (a0, _) = disc_area(&patch).unwrap();
        let warped = reparametrized(&patch, 0.35);
        let (a1, _) = disc_area(&warped).unwrap();
        // Identical image, so agreement is limited only by quadrature.
        assert!((a0 - a1).abs() < 2.0 * QUAD_TOL, "areas {a0} vs {a1}");
    }

    fn bigon_setup() -> (Arc<FiberedLagrangian>, Arc<FiberedLagrangian>, Vec<IntersectionPoint>) {
        // Segment below the origin and an arc over the top, both rightward;
        // ray fiber on the arc, circle fiber on the segment.
        let m = Model::new(ModelId::Conic);
        let (a, b, rho) = (0.4f64, 0.9f64, 1.2f64);
        let theta_real = (b / rho).asin();
        // Polar angle θ_real − t: t = 0 sits at the real-positive crossing,
        // the domain covers both bigon corners.
        let arc = BasePath::arc(c(0.0, -b), rho, theta_real + 2.4, -1.0, -2.4, 2.4);
        let l0 = Arc::new(
            FiberedLagrangian::new(
                m,
                arc,
                FiberParam::real_ray(c(rho * theta_real.cos(), 0.0)),
                TransportOpts::default(),
            )
            .unwrap(),
        );
        let seg = BasePath::segment(c(-2.0, -a), c(2.0, -a), -2.0, 2.0);
        // Flat-locus circle fiber: r² = |c₀| makes the isotopy honestly exact.
        let l1 = Arc::new(
            FiberedLagrangian::new(
                m,
                seg,
                FiberParam::circle(a.sqrt(), c(0.0, -a)),
                TransportOpts::default(),
            )
            .unwrap(),
        );
        let pts = find_intersections(&l0, &l1).unwrap();
        (l0, l1, pts)
    }

    #[test]
    fn strip_patch_boundary_is_faithful() {
        let (l0, l1, pts) = bigon_setup();
        assert_eq!(pts.len(), 2, "expected two bigon corners, got {}", pts.len());
        let patch = strip_patch(l0, l1, &pts[0], &pts[1], 1024).unwrap();
        let worst = boundary_fidelity(&patch, 64).unwrap();
        assert!(worst <= BOUNDARY_TOL, "boundary fidelity {worst:.3e}");
        let (area, defect) = disc_area(&patch).unwrap();
        assert!(defect < 1e-5);
        assert!(area.is_finite());
    }

    #[test]
    fn identity_isotopy_area_difference_is_zero() {
        let (l0, l1, pts) = bigon_setup();
        let patch = strip_patch(l0, l1.clone(), &pts[0], &pts[1], 1024).unwrap();
        let iso = make_isotopy(
            l1,
            HomotopyTarget::Identity,
            (-0.9, 0.9),
            BumpOpts::default(),
        )
        .unwrap();
        let report = area_difference_check(&patch, &iso, 1).unwrap();
        assert!(report.boundary_term.abs() < 1e-9);
        assert!(report.residual <= 1e-6, "residual {:.3e}", report.residual);
    }

    /// Static ray over the big circle through −ε, plus two circle-fibered
    /// Lagrangians over tilted segments through −ε; L1 sits on the flat
    /// locus (zero circle moment) and is the one the isotopy contracts.
    pub(crate) fn triangle_setup() -> (
        Arc<FiberedLagrangian>,
        Arc<FiberedLagrangian>,
        Arc<FiberedLagrangian>,
    ) {
        let m = Model::new(ModelId::Conic);
        let l0 = Arc::new(
            FiberedLagrangian::new(
                m,
                BasePath::arc(c(0.425, 0.0), 0.725, 0.0, 1.0, 0.0, 2.0 * PI),
                FiberParam::real_ray(c(1.15, 0.0)),
                TransportOpts::default(),
            )
            .unwrap(),
        );
        // L1 over a circular arc whose top point is −ε: contracting the arc
        // to −ε sweeps a genuine lens, so the potential term is nonzero.
        let l1 = Arc::new(
            FiberedLagrangian::new(
                m,
                BasePath::arc(c(-0.3, -0.45), 0.45, PI / 2.0 - 1.2, 1.0, -1.2, 1.2),
                FiberParam::circle(0.3f64.sqrt(), c(-0.3, 0.0)),
                TransportOpts::default(),
            )
            .unwrap(),
        );
        let dir2 = Complex64::from_polar(1.0, -0.7);
        let l2 = Arc::new(
            FiberedLagrangian::new(
                m,
                BasePath::segment(c(-0.3, 0.0) - 0.9 * dir2, c(-0.3, 0.0) + 0.9 * dir2, -0.9, 0.9),
                FiberParam::circle(0.8, c(-0.3, 0.0)),
                TransportOpts::default(),
            )
            .unwrap(),
        );
        (l0, l1, l2)
    }

    fn pick_near(
        pts: &[IntersectionPoint],
        target: Complex64,
    ) -> Option<IntersectionPoint> {
        pts.iter()
            .filter(|p| (p.base_value - target).norm() < 1e-6)
            .min_by(|a, b| a.u0.abs().partial_cmp(&b.u0.abs()).unwrap())
            .copied()
    }

    #[test]
    fn triangle_split_identity() {
        let (l0, l1, l2) = triangle_setup();
        let q1s = find_intersections(&l0, &l1).unwrap();
        let q0s = find_intersections(&l0, &l2).unwrap();
        let q1 = pick_near(&q1s, c(-0.3, 0.0)).expect("L0∩L1 corner over -eps");
        let q0 = pick_near(&q0s, c(-0.3, 0.0)).expect("L0∩L2 corner over -eps");
        let iso = make_isotopy(
            l1.clone(),
            HomotopyTarget::Constant { value: (-0.3, 0.0) },
            (-0.45, 0.45),
            BumpOpts { ramp: 0.3 },
        )
        .unwrap();
        let (u, u_dd) =
            fiber_triangle_patches(&iso, l0.clone(), l2.clone(), &q1, &q0, 0.4, -1.7, 512)
                .unwrap();
        let _ = &u_dd;
        let report =
            triangle_split_check(&u, &iso, &u_dd, 0, 0.3, &[l0.clone(), l2.clone()]).unwrap();
        assert!(
            report.residual <= 1e-5,
            "triangle split residual {:.3e}",
            report.residual
        );
        assert!(
            report.boundary_term.abs() > 1e-4,
            "contraction should produce a nonzero base term, got {:.3e}",
            report.boundary_term
        );
        assert!(report.boundary_fidelity <= 1e-6);
        // The base term is independent of the patch representative.
        let u_rep = reparametrized(&u, 0.3);
        let report2 =
            triangle_split_check(&u_rep, &iso, &u_dd, 0, 0.3, &[l0, l2]).unwrap();
        assert!((report.boundary_term - report2.boundary_term).abs() <= 1e-6);
        assert!((report.area_u - report2.area_u).abs() <= 2.0 * QUAD_TOL);
    }

    #[test]
    fn contraction_isotopy_area_difference_identity() {
        let (l0, l1, pts) = bigon_setup();
        let patch = strip_patch(l0, l1.clone(), &pts[0], &pts[1], 1024).unwrap();
        // Contract a middle sub-arc of the segment toward a point below it;
        // the straight-line homotopy sweeps a triangle clear of 0.
        let iso = make_isotopy(
            l1,
            HomotopyTarget::Constant { value: (0.2, -1.0) },
            (-0.5, 0.9),
            BumpOpts { ramp: 0.35 },
        )
        .unwrap();
        let report = area_difference_check(&patch, &iso, 1).unwrap();
        assert!(
            report.boundary_term.abs() > 1e-4,
            "contraction should produce a nonzero boundary term, got {:.3e}",
            report.boundary_term
        );
        assert!(report.residual <= 1e-5, "residual {:.3e}", report.residual);
    }
}
