//! Scenario-driven front end: load a structured scenario file, run its
//! experiments, and emit `report.json`, `summary.csv`, and an optional
//! `base.svg` sketch of the base picture.
//!
//! Reports are deterministic given a scenario and a seed: randomized sweeps
//! draw from a seeded generator, collections are ordered, and floats are
//! printed with fixed formatting.

use crate::disc_area::{
    area_difference_check, conic_annulus_patch, disc_area, fiber_triangle_patches,
    reparametrized, round_disc_patch, strip_patch, triangle_split_check,
};
use crate::error::{Error, Result};
use crate::fibration::{
    monodromy, transport_with_diagnostics, BasePath, Curve, TransportOpts,
};
use crate::grading::{
    alpha_hor, alpha_total, alpha_vert, bigon_relation, degree_split, grade, principal_base_anchor,
    GradedLagrangian, LagrangianPlane,
};
use crate::lagrangians::{
    find_intersections, make_isotopy, BumpOpts, FiberParam, FiberedLagrangian, HomotopyTarget,
    IntersectionPoint, LagrangianIsotopy,
};
use crate::models::{Model, ModelId, TangentVec};
use crate::numerics::CVec;
use crate::sketch::render_base_svg;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Scenario schema
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub model: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub transport: TransportOpts,
    #[serde(default)]
    pub output: OutputOpts,
    #[serde(default)]
    pub lagrangians: BTreeMap<String, LagrangianSpec>,
    #[serde(default)]
    pub isotopies: BTreeMap<String, IsotopySpec>,
    pub experiments: Vec<ExperimentSpec>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OutputOpts {
    #[serde(default)]
    pub svg: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LagrangianSpec {
    pub curve: CurveSpec,
    pub fiber: FiberParam,
    #[serde(default)]
    pub grading: Option<GradingSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSpec {
    Segment {
        start: (f64, f64),
        end: (f64, f64),
        t0: f64,
        t1: f64,
    },
    Arc {
        center: (f64, f64),
        radius: f64,
        angle0: f64,
        omega: f64,
        t0: f64,
        t1: f64,
    },
    Ushape {
        angle_in: f64,
        angle_out: f64,
        corner_radius: f64,
        leg: f64,
    },
    Composite {
        pieces: Vec<CurveSpec>,
    },
}

impl CurveSpec {
    pub fn build(&self) -> Result<BasePath> {
        Ok(match self {
            CurveSpec::Segment { start, end, t0, t1 } => BasePath::Segment {
                start: *start,
                end: *end,
                t0: *t0,
                t1: *t1,
            },
            CurveSpec::Arc {
                center,
                radius,
                angle0,
                omega,
                t0,
                t1,
            } => BasePath::Arc {
                center: *center,
                radius: *radius,
                angle0: *angle0,
                omega: *omega,
                t0: *t0,
                t1: *t1,
            },
            CurveSpec::Ushape {
                angle_in,
                angle_out,
                corner_radius,
                leg,
            } => BasePath::ushape(*angle_in, *angle_out, *corner_radius, *leg)?,
            CurveSpec::Composite { pieces } => BasePath::Composite {
                pieces: pieces.iter().map(|p| p.build()).collect::<Result<_>>()?,
            },
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GradingSpec {
    pub fiber_anchor: f64,
    pub base_anchor: f64,
    #[serde(default)]
    pub anchor_params: AnchorParams,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct AnchorParams {
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsotopySpec {
    pub lagrangian: String,
    pub target: HomotopyTarget,
    pub delta_range: (f64, f64),
    #[serde(default)]
    pub bump: BumpOpts,
}

/// How an experiment selects one intersection point from the listing.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pick {
    First,
    Near { value: (f64, f64) },
}

impl Pick {
    fn select(&self, pts: &[IntersectionPoint]) -> Result<IntersectionPoint> {
        match self {
            Pick::First => pts
                .first()
                .copied()
                .ok_or_else(|| Error::Validation("no intersection points found".into())),
            Pick::Near { value } => {
                let target = Complex64::new(value.0, value.1);
                pts.iter()
                    .filter(|p| (p.base_value - target).norm() < 1e-6)
                    .min_by(|a, b| a.u0.abs().partial_cmp(&b.u0.abs()).unwrap())
                    .copied()
                    .ok_or_else(|| {
                        Error::Validation(format!("no intersection near {target} found"))
                    })
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    /// Parallel transport along a path, optionally closed (monodromy), with
    /// an expected endpoint and conservation checks.
    Transport {
        name: String,
        path: CurveSpec,
        start: Vec<(f64, f64)>,
        #[serde(default)]
        expect: Option<Vec<(f64, f64)>>,
        #[serde(default = "tol_1e6")]
        tol: f64,
        #[serde(default)]
        closed: bool,
    },
    /// Exactness bookkeeping of an isotopy: loop flux over the fiber-circle
    /// generator, vertical flux samples, and potential path independence.
    Flux {
        name: String,
        isotopy: String,
        #[serde(default = "default_svals")]
        s_values: Vec<f64>,
        #[serde(default = "default_50")]
        vertical_samples: usize,
        #[serde(default = "tol_1e5")]
        loop_tol: f64,
        #[serde(default = "tol_1e6")]
        vertical_tol: f64,
        #[serde(default)]
        potential: Option<PotentialSpec>,
    },
    /// Squared-phase splitting and residue probe independence on random
    /// points of a fibered Lagrangian.
    Grade {
        name: String,
        lagrangian: String,
        #[serde(default = "default_100")]
        samples: usize,
        #[serde(default = "tol_1e8")]
        tol: f64,
    },
    /// Degree splitting at an intersection point, with optional expected
    /// integers and optional randomized variants.
    Degree {
        name: String,
        l0: String,
        l1: String,
        #[serde(default = "pick_first")]
        pick: Pick,
        #[serde(default)]
        expect: Option<(i64, i64, i64)>,
        #[serde(default)]
        random_variants: usize,
    },
    /// The bigon relation at a pair of intersection points.
    Bigon {
        name: String,
        l0: String,
        l1: String,
        fiber_anchor0: f64,
        fiber_anchor1: f64,
        /// Intersection with larger real base value is p₊ when true.
        #[serde(default)]
        p_plus_max_re: bool,
        #[serde(default)]
        expect_difference: i64,
    },
    /// Disc-area checks.
    DiscArea {
        name: String,
        #[serde(flatten)]
        variant: DiscAreaVariant,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum DiscAreaVariant {
    /// Quadrature against a closed-form area.
    RoundDisc { radius: f64, #[serde(default = "tol_1e5")] tol: f64 },
    ConicAnnulus {
        c: (f64, f64),
        r_outer: f64,
        r_inner: f64,
        #[serde(default = "tol_1e5")]
        tol: f64,
    },
    /// Corollary-style endpoint identity on a two-cornered strip.
    AreaDifference {
        l0: String,
        l1: String,
        isotopy: String,
        /// Index of the swept boundary arc (0 on l0, 1 on l1).
        arc: usize,
        #[serde(default = "tol_1e5")]
        tol: f64,
    },
    /// Fiber/base splitting of the swept sector area.
    TriangleSplit {
        l0: String,
        l2: String,
        isotopy: String,
        q1_pick: Pick,
        q0_pick: Pick,
        arc_t_start: f64,
        arc_u_span: f64,
        eps: f64,
        #[serde(default = "tol_1e5")]
        tol: f64,
    },
}

fn tol_1e5() -> f64 {
    1e-5
}
fn tol_1e6() -> f64 {
    1e-6
}
fn tol_1e8() -> f64 {
    1e-8
}
fn default_50() -> usize {
    50
}
fn default_100() -> usize {
    100
}
fn default_svals() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}
fn pick_first() -> Pick {
    Pick::First
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub name: String,
    pub value: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub status: String,
    /// Violated invariant identifier on failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub details: BTreeMap<String, serde_json::Value>,
}

impl ExperimentRecord {
    fn passed(&self) -> bool {
        self.status == "pass"
    }
}

#[derive(Serialize)]
pub struct Report {
    pub schema: String,
    pub model: String,
    pub seed: u64,
    pub experiments: Vec<ExperimentRecord>,
    pub passed: usize,
    pub failed: usize,
}

/// One row per experiment: `experiment,name,value,residual,tolerance,status`.
pub fn summary_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("experiment,name,value,residual,tolerance,status\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.1e},{}\n",
            r.experiment, r.name, r.value, r.residual, r.tolerance, r.status
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Loading and validation
// ---------------------------------------------------------------------------

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario = serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    validate(&scenario)?;
    Ok(scenario)
}

pub fn validate(s: &Scenario) -> Result<()> {
    if s.schema_version != SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            s.schema_version
        )));
    }
    let _model: ModelId = s.model.parse()?;
    if s.transport.step <= 0.0 || s.transport.fiber_tol <= 0.0 {
        return Err(Error::Validation("transport options must be positive".into()));
    }
    for (name, spec) in &s.lagrangians {
        if let FiberParam::Circle { r, .. } = spec.fiber {
            if r <= 0.0 {
                return Err(Error::Validation(format!(
                    "lagrangians.{name}.fiber.r must be > 0"
                )));
            }
        }
        spec.curve.build().map_err(|e| {
            Error::Validation(format!("lagrangians.{name}.curve: {e}"))
        })?;
    }
    for (name, iso) in &s.isotopies {
        if !s.lagrangians.contains_key(&iso.lagrangian) {
            return Err(Error::Validation(format!(
                "isotopies.{name}.lagrangian `{}` is not declared",
                iso.lagrangian
            )));
        }
        if iso.delta_range.0 >= iso.delta_range.1 {
            return Err(Error::Validation(format!(
                "isotopies.{name}.delta_range is empty"
            )));
        }
    }
    let lref = |label: &str, key: &str| -> Result<()> {
        if s.lagrangians.contains_key(key) {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "{label} references undeclared Lagrangian `{key}`"
            )))
        }
    };
    for e in &s.experiments {
        match e {
            ExperimentSpec::Transport { path, .. } => {
                path.build()?;
            }
            ExperimentSpec::Flux { isotopy, .. } => {
                if !s.isotopies.contains_key(isotopy) {
                    return Err(Error::Validation(format!(
                        "flux experiment references undeclared isotopy `{isotopy}`"
                    )));
                }
            }
            ExperimentSpec::Grade { lagrangian, .. } => lref("grade", lagrangian)?,
            ExperimentSpec::Degree { l0, l1, .. } => {
                lref("degree", l0)?;
                lref("degree", l1)?;
            }
            ExperimentSpec::Bigon { l0, l1, .. } => {
                lref("bigon", l0)?;
                lref("bigon", l1)?;
            }
            ExperimentSpec::DiscArea { variant, .. } => match variant {
                DiscAreaVariant::AreaDifference { l0, l1, isotopy, .. } => {
                    lref("disc_area", l0)?;
                    lref("disc_area", l1)?;
                    if !s.isotopies.contains_key(isotopy) {
                        return Err(Error::Validation(format!(
                            "disc_area references undeclared isotopy `{isotopy}`"
                        )));
                    }
                }
                DiscAreaVariant::TriangleSplit { l0, l2, isotopy, .. } => {
                    lref("disc_area", l0)?;
                    lref("disc_area", l2)?;
                    if !s.isotopies.contains_key(isotopy) {
                        return Err(Error::Validation(format!(
                            "disc_area references undeclared isotopy `{isotopy}`"
                        )));
                    }
                }
                _ => {}
            },
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct Context {
    model: Model,
    opts: TransportOpts,
    lagrangians: BTreeMap<String, Arc<FiberedLagrangian>>,
    gradings: BTreeMap<String, GradingSpec>,
    isotopies: BTreeMap<String, LagrangianIsotopy>,
    seed: u64,
}

impl Context {
    fn lagrangian(&self, name: &str) -> Result<Arc<FiberedLagrangian>> {
        self.lagrangians
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("unknown Lagrangian `{name}`")))
    }

    fn graded(&self, name: &str) -> Result<GradedLagrangian> {
        let l = self.lagrangian(name)?;
        let g = self
            .gradings
            .get(name)
            .ok_or_else(|| Error::Validation(format!("Lagrangian `{name}` has no grading")))?;
        grade(l, g.fiber_anchor, g.base_anchor, (g.anchor_params.t, g.anchor_params.s))
    }

    fn isotopy(&self, name: &str) -> Result<&LagrangianIsotopy> {
        self.isotopies
            .get(name)
            .ok_or_else(|| Error::Validation(format!("unknown isotopy `{name}`")))
    }
}

fn build_context(s: &Scenario, seed: u64) -> Result<Context> {
    let model = Model::from_name(&s.model)?;
    let mut lagrangians = BTreeMap::new();
    let mut gradings = BTreeMap::new();
    for (name, spec) in &s.lagrangians {
        let curve = spec.curve.build()?;
        let l = Arc::new(FiberedLagrangian::new(model, curve, spec.fiber, s.transport)?);
        lagrangians.insert(name.clone(), l);
        if let Some(g) = spec.grading {
            gradings.insert(name.clone(), g);
        }
    }
    let mut isotopies = BTreeMap::new();
    for (name, spec) in &s.isotopies {
        let l = lagrangians
            .get(&spec.lagrangian)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("isotopy `{name}` on unknown Lagrangian")))?;
        isotopies.insert(
            name.clone(),
            make_isotopy(l, spec.target.clone(), spec.delta_range, spec.bump)?,
        );
    }
    Ok(Context {
        model,
        opts: s.transport,
        lagrangians,
        gradings,
        isotopies,
        seed,
    })
}

fn record(
    kind: &str,
    name: &str,
    value: f64,
    residual: f64,
    tolerance: f64,
    ok: bool,
    failure: Option<String>,
    details: BTreeMap<String, serde_json::Value>,
) -> ExperimentRecord {
    ExperimentRecord {
        experiment: kind.into(),
        name: name.into(),
        value,
        residual,
        tolerance,
        status: if ok { "pass".into() } else { "fail".into() },
        failure: if ok { None } else { failure },
        details,
    }
}

fn fail_record(kind: &str, name: &str, tolerance: f64, err: &Error) -> ExperimentRecord {
    record(
        kind,
        name,
        f64::NAN,
        f64::NAN,
        tolerance,
        false,
        Some(format!("{err}")),
        BTreeMap::new(),
    )
}

/// Run all experiments of a scenario; returns the records in order.
pub fn run_experiments(s: &Scenario, seed: u64) -> Result<Vec<ExperimentRecord>> {
    let ctx = build_context(s, seed)?;
    let mut records = Vec::new();
    for (idx, spec) in s.experiments.iter().enumerate() {
        let rec = run_one(&ctx, spec, idx);
        records.push(rec);
    }
    Ok(records)
}

fn run_one(ctx: &Context, spec: &ExperimentSpec, idx: usize) -> ExperimentRecord {
    match spec {
        ExperimentSpec::Transport {
            name,
            path,
            start,
            expect,
            tol,
            closed,
        } => match run_transport(ctx, path, start, expect.as_deref(), *tol, *closed) {
            Ok(r) => r.finish("transport", name),
            Err(e) => fail_record("transport", name, *tol, &e),
        },
        ExperimentSpec::Flux {
            name,
            isotopy,
            s_values,
            vertical_samples,
            loop_tol,
            vertical_tol,
            potential,
        } => match run_flux(
            ctx,
            isotopy,
            s_values,
            *vertical_samples,
            *loop_tol,
            *vertical_tol,
            potential,
            idx,
        ) {
            Ok(r) => r.finish("flux", name),
            Err(e) => fail_record("flux", name, *loop_tol, &e),
        },
        ExperimentSpec::Grade {
            name,
            lagrangian,
            samples,
            tol,
        } => match run_grade(ctx, lagrangian, *samples, *tol, idx) {
            Ok(r) => r.finish("grade", name),
            Err(e) => fail_record("grade", name, *tol, &e),
        },
        ExperimentSpec::Degree {
            name,
            l0,
            l1,
            pick,
            expect,
            random_variants,
        } => match run_degree(ctx, l0, l1, pick, *expect, *random_variants) {
            Ok(r) => r.finish("degree", name),
            Err(e) => fail_record("degree", name, 1e-4, &e),
        },
        ExperimentSpec::Bigon {
            name,
            l0,
            l1,
            fiber_anchor0,
            fiber_anchor1,
            p_plus_max_re,
            expect_difference,
        } => match run_bigon(
            ctx,
            l0,
            l1,
            *fiber_anchor0,
            *fiber_anchor1,
            *p_plus_max_re,
            *expect_difference,
        ) {
            Ok(r) => r.finish("bigon", name),
            Err(e) => fail_record("bigon", name, 1e-4, &e),
        },
        ExperimentSpec::DiscArea { name, variant } => match run_disc_area(ctx, variant) {
            Ok(r) => r.finish("disc_area", name),
            Err(e) => fail_record("disc_area", name, 1e-5, &e),
        },
    }
}

/// Partially-filled record, finished with kind and name.
struct Partial {
    value: f64,
    residual: f64,
    tolerance: f64,
    ok: bool,
    failure: Option<String>,
    details: BTreeMap<String, serde_json::Value>,
}

impl Partial {
    fn finish(self, kind: &str, name: &str) -> ExperimentRecord {
        record(
            kind,
            name,
            self.value,
            self.residual,
            self.tolerance,
            self.ok,
            self.failure,
            self.details,
        )
    }
}

fn cvec_json(v: &CVec) -> serde_json::Value {
    json!(v.as_slice().iter().map(|z| (z.re, z.im)).collect::<Vec<_>>())
}

fn run_transport(
    ctx: &Context,
    path: &CurveSpec,
    start: &[(f64, f64)],
    expect: Option<&[(f64, f64)]>,
    tol: f64,
    closed: bool,
) -> Result<Partial> {
    let curve = path.build()?;
    let parts: Vec<Complex64> = start.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
    let q = ctx.model.point(&parts)?;
    let (t0, t1) = curve.domain();
    let result = if closed {
        let r = monodromy(&ctx.model, &curve, &q, &ctx.opts)?;
        // Cross-check at half the step.
        let opts2 = TransportOpts {
            step: ctx.opts.step / 2.0,
            ..ctx.opts
        };
        let r2 = monodromy(&ctx.model, &curve, &q, &opts2)?;
        if r.coords.sub(&r2.coords).norm() > tol {
            return Err(Error::Integration(
                "step-halving cross-check disagrees beyond tolerance".into(),
            ));
        }
        transport_with_diagnostics(&ctx.model, &curve, t0, t1, &q, &ctx.opts)?
    } else {
        transport_with_diagnostics(&ctx.model, &curve, t0, t1, &q, &ctx.opts)?
    };
    let endpoint = result.point;
    let mut details = BTreeMap::new();
    details.insert("end".into(), cvec_json(&endpoint.coords));
    details.insert("max_fiber_residual".into(), json!(result.max_fiber_residual));
    let mut ok = result.max_fiber_residual <= 1e-8;
    let mut failure = (!ok).then(|| "fiber_constraint".to_string());
    let value = if let Some(exp) = expect {
        let parts: Vec<Complex64> = exp.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        let target = ctx.model.point(&parts)?;
        let dist = endpoint.coords.sub(&target.coords).norm();
        if dist > tol {
            ok = false;
            failure = Some("endpoint_mismatch".into());
        }
        dist
    } else if closed {
        let dist = endpoint.coords.sub(&q.coords).norm();
        details.insert("loop_displacement".into(), json!(dist));
        dist
    } else {
        0.0
    };
    // Conic conservation law.
    if ctx.model.id() == ModelId::Conic {
        let dmu = (ctx.model.conic_moment(&endpoint) - ctx.model.conic_moment(&q)).abs();
        details.insert("moment_drift".into(), json!(dmu));
        if dmu > 1e-8 {
            ok = false;
            failure = Some("moment_conservation".into());
        }
    }
    Ok(Partial {
        value,
        residual: result.max_fiber_residual,
        tolerance: tol,
        ok,
        failure,
        details,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_flux(
    ctx: &Context,
    isotopy: &str,
    s_values: &[f64],
    vertical_samples: usize,
    loop_tol: f64,
    vertical_tol: f64,
    potential: &Option<PotentialSpec>,
    idx: usize,
) -> Result<Partial> {
    let iso = ctx.isotopy(isotopy)?;
    let l = &iso.lagrangian;
    let mut details = BTreeMap::new();
    let mut ok = true;
    let mut failure = None;

    // Loop flux over the fiber-circle generator (when one exists).
    let mut worst_loop: f64 = 0.0;
    if matches!(l.fiber, FiberParam::Circle { .. }) {
        let t_probe = iso.probe_t();
        for &s in s_values {
            let v = iso.flux_loop_integral(s, &|tau| (t_probe, 2.0 * PI * tau), 48)?;
            worst_loop = worst_loop.max(v.abs());
        }
    }
    details.insert("worst_loop_flux".into(), json!(worst_loop));
    if worst_loop > loop_tol {
        ok = false;
        failure = Some("loop_flux".into());
    }

    // Vertical flux samples.
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ (idx as u64) << 8);
    let (s_lo, s_hi) = iso.homotopy.support;
    let (ua, ub, periodic) = l.fiber.search_range();
    let mut worst_vert: f64 = 0.0;
    if l.fiber_dim() == 1 {
        for _ in 0..vertical_samples {
            let s = rng.gen_range(0.02..0.98);
            let t = rng.gen_range(s_lo..s_hi);
            let u = if periodic {
                rng.gen_range(0.0..2.0 * PI)
            } else {
                rng.gen_range(ua..ub)
            };
            let h = 1e-5;
            let a = iso.psi(t, u + h, s)?;
            let b = iso.psi(t, u - h, s)?;
            let p = iso.psi(t, u, s)?;
            let w = TangentVec::new(p, a.coords.sub(&b.coords).scale_re(0.5 / h));
            let val = iso.flux_form(s, t, u, &w)?;
            worst_vert = worst_vert.max(val.abs() / w.components.norm().max(1.0));
        }
    }
    details.insert("worst_vertical_flux".into(), json!(worst_vert));
    if worst_vert > vertical_tol {
        ok = false;
        failure = Some("vertical_flux".into());
    }

    // Potential path-independence certificate.
    let mut pot_val = 0.0;
    if let Some(p) = potential {
        pot_val = iso.potential((p.p.0, p.p.1), (p.basepoint.0, p.basepoint.1), p.path_tol)?;
        details.insert("potential".into(), json!(pot_val));
    }
    let _ = pot_val;

    Ok(Partial {
        value: worst_loop,
        residual: worst_vert,
        tolerance: loop_tol,
        ok,
        failure,
        details,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub p: (f64, f64),
    pub basepoint: (f64, f64),
    #[serde(default = "tol_1e5")]
    pub path_tol: f64,
}

fn run_grade(
    ctx: &Context,
    lagrangian: &str,
    samples: usize,
    tol: f64,
    idx: usize,
) -> Result<Partial> {
    let l = ctx.lagrangian(lagrangian)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ ((idx as u64) << 8) ^ 0x9e37);
    let (t0, t1) = l.curve.domain();
    let (ua, ub, periodic) = l.fiber.search_range();
    let mut worst_split: f64 = 0.0;
    let mut worst_probe: f64 = 0.0;
    for _ in 0..samples {
        let t = rng.gen_range(t0..t1);
        let u = if l.fiber_dim() == 0 {
            0.0
        } else if periodic {
            rng.gen_range(0.0..2.0 * PI)
        } else {
            rng.gen_range(ua..ub)
        };
        let frame = l.tangent_frame(t, u)?;
        let p = frame[0].base;
        let plane = LagrangianPlane::new(&ctx.model, p, frame.clone())?;
        let total = alpha_total(&ctx.model, &plane)?;
        let (av, ah) = if l.fiber_dim() == 1 {
            let v = crate::fibration::split_tangent(&ctx.model, &p, &frame[0])?.vertical;
            let h = crate::fibration::split_tangent(&ctx.model, &p, &frame[1])?.horizontal;
            (
                alpha_vert(&ctx.model, &p, &[v])?,
                alpha_hor(&ctx.model, &p, &h)?,
            )
        } else {
            let h = crate::fibration::split_tangent(&ctx.model, &p, &frame[0])?.horizontal;
            (Complex64::new(1.0, 0.0), alpha_hor(&ctx.model, &p, &h)?)
        };
        worst_split = worst_split.max((total - av * ah).norm());
        // Residue probe independence.
        if l.fiber_dim() == 1 {
            let v = crate::fibration::split_tangent(&ctx.model, &p, &frame[0])?.vertical;
            let r1 = crate::grading::residue_value(&ctx.model, &p, &[v], Complex64::new(1.0, 0.0))?;
            let r2 =
                crate::grading::residue_value(&ctx.model, &p, &[v], Complex64::new(0.7, 1.3))?;
            worst_probe = worst_probe.max((r1 - r2).norm() / r1.norm().max(1e-30));
        }
    }
    let ok = worst_split <= tol && worst_probe <= 1e-10;
    let mut details = BTreeMap::new();
    details.insert("worst_phase_split".into(), json!(worst_split));
    details.insert("worst_probe_dependence".into(), json!(worst_probe));
    Ok(Partial {
        value: worst_split,
        residual: worst_probe,
        tolerance: tol,
        ok,
        failure: (!ok).then(|| "phase_splitting".to_string()),
        details,
    })
}

fn run_degree(
    ctx: &Context,
    l0: &str,
    l1: &str,
    pick: &Pick,
    expect: Option<(i64, i64, i64)>,
    random_variants: usize,
) -> Result<Partial> {
    let la = ctx.lagrangian(l0)?;
    let lb = ctx.lagrangian(l1)?;
    let pts = find_intersections(&la, &lb)?;
    let p = pick.select(&pts)?;
    let l0g = ctx.graded(l0)?;
    let l1g = ctx.graded(l1)?;
    let split = degree_split(&l0g, &l1g, &p)?;
    let mut details = BTreeMap::new();
    details.insert(
        "split".into(),
        json!({
            "fiber": split.fiber.value,
            "base": split.base.value,
            "total": split.total.value,
        }),
    );
    let mut residual = split.total.residual.max(split.fiber.residual).max(split.base.residual);
    let mut ok = split.total.value == split.fiber.value + split.base.value;
    let mut failure = (!ok).then(|| "degree_splitting".to_string());
    if let Some((f, b, t)) = expect {
        if (split.fiber.value, split.base.value, split.total.value) != (f, b, t) {
            ok = false;
            failure = Some("expected_degrees".into());
        }
    }

    // Seeded random variants of the canonical ray-vs-circle configuration.
    if random_variants > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x5eed_5eed);
        let mut passed = 0usize;
        for _ in 0..random_variants {
            match random_split_variant(&ctx.model, &ctx.opts, &mut rng) {
                Ok(r) => {
                    residual = residual.max(r);
                    passed += 1;
                }
                Err(e) => {
                    ok = false;
                    failure = Some(format!("random_variant: {e}"));
                }
            }
        }
        details.insert("random_variants_passed".into(), json!(passed));
    }
    if residual > 1e-4 {
        ok = false;
        failure = Some("degree_residual".into());
    }
    Ok(Partial {
        value: split.total.value as f64,
        residual,
        tolerance: 1e-4,
        ok,
        failure,
        details,
    })
}

fn random_split_variant(model: &Model, opts: &TransportOpts, rng: &mut ChaCha8Rng) -> Result<f64> {
    // Ray and circle fibers anchored at a common real-positive crossing,
    // random radii, angles, and integer anchor shifts.
    let cstar = rng.gen_range(0.6..1.8);
    let r = rng.gen_range(0.6..1.5);
    let ang0 = rng.gen_range(-0.6..0.6);
    let dang = rng.gen_range(0.35..PI - 0.35);
    let ang1 = ang0 + dang;
    let k0 = rng.gen_range(-2i64..=2) as f64;
    let k1 = rng.gen_range(-2i64..=2) as f64;
    let m0 = rng.gen_range(-1i64..=1) as f64;
    let m1 = rng.gen_range(-1i64..=1) as f64;
    let cs = Complex64::new(cstar, 0.0);
    let dir0 = Complex64::from_polar(0.4, ang0);
    let dir1 = Complex64::from_polar(0.4, ang1);
    let l0 = Arc::new(FiberedLagrangian::new(
        *model,
        BasePath::segment(cs - dir0, cs + dir0, -1.0, 1.0),
        FiberParam::real_ray(cs),
        *opts,
    )?);
    let l1 = Arc::new(FiberedLagrangian::new(
        *model,
        BasePath::segment(cs - dir1, cs + dir1, -1.0, 1.0),
        FiberParam::circle(r, cs),
        *opts,
    )?);
    let pts = find_intersections(&l0, &l1)?;
    if pts.len() != 1 {
        return Err(Error::Validation(format!(
            "variant expected 1 intersection, found {}",
            pts.len()
        )));
    }
    let l0g = grade(l0, k0, ang0 / PI + m0, (0.0, 0.0))?;
    let l1g = grade(l1, 0.5 + k1, ang1 / PI + m1, (0.0, 0.0))?;
    let split = degree_split(&l0g, &l1g, &pts[0])?;
    if split.total.value != split.fiber.value + split.base.value {
        return Err(Error::IdentityCheck("variant split violated".into()));
    }
    Ok(split.total.residual.max(split.fiber.residual).max(split.base.residual))
}

fn run_bigon(
    ctx: &Context,
    l0: &str,
    l1: &str,
    fiber_anchor0: f64,
    fiber_anchor1: f64,
    p_plus_max_re: bool,
    expect_difference: i64,
) -> Result<Partial> {
    let la = ctx.lagrangian(l0)?;
    let lb = ctx.lagrangian(l1)?;
    let pts = find_intersections(&la, &lb)?;
    if pts.len() != 2 {
        return Err(Error::Validation(format!(
            "bigon needs exactly 2 intersection points, found {}",
            pts.len()
        )));
    }
    let (p_plus, p_minus) = {
        let (a, b) = (pts[0], pts[1]);
        let a_re = a.base_value.re;
        let b_re = b.base_value.re;
        if (a_re > b_re) == p_plus_max_re {
            (a, b)
        } else {
            (b, a)
        }
    };
    // Base gradings pinned to the principal-branch convention of the bigon
    // relation; fiber anchors are scenario inputs.
    let l0g = grade(la.clone(), fiber_anchor0, principal_base_anchor(&la, 0.0), (0.0, 0.0))?;
    let l1g = grade(lb.clone(), fiber_anchor1, principal_base_anchor(&lb, 0.0), (0.0, 0.0))?;
    let report = bigon_relation(&l0g, &l1g, &p_plus, &p_minus)?;
    let mut details = BTreeMap::new();
    details.insert(
        "relation".into(),
        json!({
            "deg_plus": report.deg_plus,
            "deg_minus": report.deg_minus,
            "fiber_deg_plus": report.fiber_deg_plus,
            "fiber_deg_monodromy": report.fiber_deg_monodromy,
            "lhs": report.lhs,
            "rhs": report.rhs,
            "difference": report.difference,
        }),
    );
    let ok = report.difference == expect_difference && report.max_residual <= 1e-4;
    Ok(Partial {
        value: report.lhs as f64,
        residual: report.max_residual,
        tolerance: 1e-4,
        ok,
        failure: (!ok).then(|| "bigon_relation".to_string()),
        details,
    })
}

fn run_disc_area(ctx: &Context, variant: &DiscAreaVariant) -> Result<Partial> {
    match variant {
        DiscAreaVariant::RoundDisc { radius, tol } => {
            let patch = round_disc_patch(ctx.model, *radius);
            let (area, defect) = disc_area(&patch)?;
            let want = PI * radius * radius;
            let resid = (area - want).abs();
            let ok = resid <= *tol && defect <= *tol;
            let mut details = BTreeMap::new();
            details.insert("area".into(), json!(area));
            details.insert("expected".into(), json!(want));
            Ok(Partial {
                value: area,
                residual: resid,
                tolerance: *tol,
                ok,
                failure: (!ok).then(|| "quadrature".to_string()),
                details,
            })
        }
        DiscAreaVariant::ConicAnnulus { c, r_outer, r_inner, tol } => {
            let cval = Complex64::new(c.0, c.1);
            let patch = conic_annulus_patch(ctx.model, cval, *r_outer, *r_inner);
            let (area, defect) = disc_area(&patch)?;
            let want = PI * (r_outer * r_outer - r_inner * r_inner)
                + PI * cval.norm_sqr() * (1.0 / (r_inner * r_inner) - 1.0 / (r_outer * r_outer));
            let resid = (area - want).abs();
            let ok = resid <= *tol && defect <= *tol;
            let mut details = BTreeMap::new();
            details.insert("area".into(), json!(area));
            details.insert("expected".into(), json!(want));
            Ok(Partial {
                value: area,
                residual: resid,
                tolerance: *tol,
                ok,
                failure: (!ok).then(|| "quadrature".to_string()),
                details,
            })
        }
        DiscAreaVariant::AreaDifference { l0, l1, isotopy, arc, tol } => {
            let la = ctx.lagrangian(l0)?;
            let lb = ctx.lagrangian(l1)?;
            let pts = find_intersections(&la, &lb)?;
            if pts.len() != 2 {
                return Err(Error::Validation(format!(
                    "strip needs exactly 2 intersection points, found {}",
                    pts.len()
                )));
            }
            let patch = strip_patch(la, lb, &pts[0], &pts[1], 1024)?;
            let iso = ctx.isotopy(isotopy)?;
            let report = area_difference_check(&patch, iso, *arc)?;
            let ok = report.residual <= *tol;
            let mut details = BTreeMap::new();
            details.insert("report".into(), serde_json::to_value(report).unwrap());
            Ok(Partial {
                value: report.boundary_term,
                residual: report.residual,
                tolerance: *tol,
                ok,
                failure: (!ok).then(|| "area_difference_identity".to_string()),
                details,
            })
        }
        DiscAreaVariant::TriangleSplit {
            l0,
            l2,
            isotopy,
            q1_pick,
            q0_pick,
            arc_t_start,
            arc_u_span,
            eps,
            tol,
        } => {
            let la = ctx.lagrangian(l0)?;
            let lc = ctx.lagrangian(l2)?;
            let iso = ctx.isotopy(isotopy)?;
            let q1 = q1_pick.select(&find_intersections(&la, &iso.lagrangian)?)?;
            let q0 = q0_pick.select(&find_intersections(&la, &lc)?)?;
            // Corner slots: fiber_triangle_patches expects q1/q0 with L0 in
            // slot 0 and the contracted/outer Lagrangian in slot 1.
            let (u, u_dd) = fiber_triangle_patches(
                iso,
                la.clone(),
                lc.clone(),
                &q1,
                &q0,
                *arc_t_start,
                *arc_u_span,
                512,
            )?;
            let report = triangle_split_check(&u, iso, &u_dd, 0, *eps, &[la, lc])?;
            // The base contribution is invariant under reparametrization.
            let u_rep = reparametrized(&u, 0.25);
            let report2 = triangle_split_check(
                &u_rep,
                iso,
                &u_dd,
                0,
                *eps,
                &[ctx.lagrangian(l0)?, ctx.lagrangian(l2)?],
            )?;
            let reparam_shift = (report.boundary_term - report2.boundary_term).abs();
            let ok = report.residual <= *tol && reparam_shift <= 1e-6;
            let mut details = BTreeMap::new();
            details.insert("report".into(), serde_json::to_value(report).unwrap());
            details.insert("reparam_base_shift".into(), json!(reparam_shift));
            Ok(Partial {
                value: report.boundary_term,
                residual: report.residual,
                tolerance: *tol,
                ok,
                failure: (!ok).then(|| "triangle_split_identity".to_string()),
                details,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Entry points used by the CLI
// ---------------------------------------------------------------------------

pub struct RunOutcome {
    pub report: Report,
    pub all_passed: bool,
}

/// Run a scenario file and write `report.json`, `summary.csv`, and
/// optionally `base.svg` into `out_dir`.
pub fn run(scenario_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> Result<RunOutcome> {
    let scenario = load_scenario(scenario_path)?;
    let seed = seed_override.unwrap_or(scenario.seed);
    let records = run_experiments(&scenario, seed)?;
    let passed = records.iter().filter(|r| r.passed()).count();
    let failed = records.len() - passed;
    let report = Report {
        schema: format!("lglab-report/{SCHEMA_VERSION}"),
        model: scenario.model.clone(),
        seed,
        experiments: records,
        passed,
        failed,
    };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(&report.experiments))?;
    if scenario.output.svg {
        let model = Model::from_name(&scenario.model)?;
        let mut curves = Vec::new();
        for (name, spec) in &scenario.lagrangians {
            curves.push((name.clone(), spec.curve.build()?));
        }
        // Mark intersection base points of consecutive Lagrangian pairs.
        let mut marks = Vec::new();
        let names: Vec<&String> = scenario.lagrangians.keys().collect();
        if names.len() >= 2 {
            let ctx = build_context(&scenario, seed)?;
            for pair in names.windows(2) {
                let a = ctx.lagrangian(pair[0])?;
                let b = ctx.lagrangian(pair[1])?;
                if let Ok(pts) = find_intersections(&a, &b) {
                    marks.extend(pts.iter().map(|p| p.base_value));
                }
            }
        }
        std::fs::write(out_dir.join("base.svg"), render_base_svg(&model, &curves, &marks))?;
    }
    let all_passed = failed == 0;
    Ok(RunOutcome { report, all_passed })
}

/// Stable catalogue listing for the CLI.
pub fn list_models() -> String {
    let mut out = String::new();
    for id in ModelId::all() {
        let m = Model::new(id);
        let critv = m
            .critical_values()
            .iter()
            .map(format_complex)
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!("{}  dim={}  critv={{{}}}\n", id, m.dim_total(), critv));
    }
    out
}

fn format_complex(z: &Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else {
        format!("{}{}{}i", z.re, if z.im >= 0.0 { "+" } else { "-" }, z.im.abs())
    }
}

// Quick access used by unit tests and examples.
pub fn transport_example(model: &Model, opts: &TransportOpts) -> Result<f64> {
    let path = BasePath::segment(Complex64::new(1.0, 0.0), Complex64::new(4.0, 0.0), 0.0, 1.0);
    let q = model.point(&[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)])?;
    let r = transport_with_diagnostics(model, &path, 0.0, 1.0, &q, opts)?;
    Ok(r
        .point
        .coords
        .sub(&CVec::two(Complex64::new(2.0, 0.0), Complex64::new(2.0, 0.0)))
        .norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_models_is_stable_and_complete() {
        let a = list_models();
        let b = list_models();
        assert_eq!(a, b);
        assert!(a.contains("conic  dim=2  critv={0}"));
        assert!(a.contains("trivial_line  dim=1  critv={}"));
        assert!(a.contains("lefschetz_quadratic  dim=2  critv={0}"));
    }

    #[test]
    fn scenario_validation_rejects_bad_references() {
        let text = r#"{
            "schema_version": 1,
            "model": "conic",
            "experiments": [
                {"kind": "flux", "name": "f", "isotopy": "nope"}
            ]
        }"#;
        let s: Scenario = serde_json::from_str(text).unwrap();
        assert!(matches!(validate(&s), Err(Error::Validation(_))));
    }

    #[test]
    fn scenario_validation_rejects_unknown_model() {
        let text = r#"{
            "schema_version": 1,
            "model": "unknown_thing",
            "experiments": []
        }"#;
        let s: Scenario = serde_json::from_str(text).unwrap();
        assert!(validate(&s).is_err());
    }

    #[test]
    fn malformed_scenario_is_a_parse_error() {
        let dir = std::env::temp_dir().join("lglab_test_malformed");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.json");
        std::fs::write(&p, "{ not json").unwrap();
        assert!(matches!(load_scenario(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn transport_oracle_via_front_end() {
        let m = Model::new(ModelId::Conic);
        let d = transport_example(&m, &TransportOpts::default()).unwrap();
        assert!(d < 1e-6);
    }
}
