//! The model catalogue: explicit Kähler Landau-Ginzburg charts with
//! closed-form evaluators for the superpotential `v`, its differential `dv`,
//! the standard symplectic form `ω`, the complex structure `J`, and the
//! holomorphic volume form `Ω`.
//!
//! Three models are provided:
//!
//! | id                   | chart | v            | Ω          | critv |
//! |----------------------|-------|--------------|------------|-------|
//! | `trivial_line`       | ℂ     | z            | dz         | {}    |
//! | `conic`              | ℂ²    | z₁·z₂        | dz₁∧dz₂    | {0}   |
//! | `lefschetz_quadratic`| ℂ²    | z₁²+z₂²      | dz₁∧dz₂    | {0}   |
//!
//! Values and first derivatives are hard-coded analytic formulas; there is no
//! automatic differentiation anywhere in the crate.

use crate::error::{Error, Result};
use crate::numerics::CVec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A point of the model chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointY {
    pub coords: CVec,
}

impl PointY {
    pub fn new(coords: CVec) -> Self {
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A tangent vector at a chart point, identifying `T_pY` with ℂ^{n+1}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVec {
    pub base: PointY,
    pub components: CVec,
}

impl TangentVec {
    pub fn new(base: PointY, components: CVec) -> Self {
        Self { base, components }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    TrivialLine,
    Conic,
    LefschetzQuadratic,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::TrivialLine => "trivial_line",
            ModelId::Conic => "conic",
            ModelId::LefschetzQuadratic => "lefschetz_quadratic",
        }
    }

    pub fn all() -> [ModelId; 3] {
        [ModelId::TrivialLine, ModelId::Conic, ModelId::LefschetzQuadratic]
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trivial_line" => Ok(ModelId::TrivialLine),
            "conic" => Ok(ModelId::Conic),
            "lefschetz_quadratic" => Ok(ModelId::LefschetzQuadratic),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// An explicit Kähler LG model. Immutable after construction; every
/// evaluator is a pure function, safe to call from concurrent workers.
#[derive(Clone, Copy, Debug)]
pub struct Model {
    id: ModelId,
}

/// Catalogue constructor. Errors on unknown ids (string front end lives in
/// `ModelId::from_str`).
pub fn make_model(id: ModelId) -> Model {
    Model { id }
}

impl Model {
    pub fn new(id: ModelId) -> Self {
        make_model(id)
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(make_model(name.parse()?))
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    /// Total complex dimension n+1 of the chart.
    pub fn dim_total(&self) -> usize {
        match self.id {
            ModelId::TrivialLine => 1,
            ModelId::Conic | ModelId::LefschetzQuadratic => 2,
        }
    }

    /// Complex dimension n of the fibers.
    pub fn fiber_dim(&self) -> usize {
        self.dim_total() - 1
    }

    /// The finite set of critical values of `v`.
    pub fn critical_values(&self) -> &'static [Complex64] {
        const ZERO: [Complex64; 1] = [Complex64::new(0.0, 0.0)];
        match self.id {
            ModelId::TrivialLine => &[],
            ModelId::Conic | ModelId::LefschetzQuadratic => &ZERO,
        }
    }

    /// Superpotential value `v(p)`.
    pub fn v(&self, p: &PointY) -> Complex64 {
        let z = p.coords.as_slice();
        match self.id {
            ModelId::TrivialLine => z[0],
            ModelId::Conic => z[0] * z[1],
            ModelId::LefschetzQuadratic => z[0] * z[0] + z[1] * z[1],
        }
    }

    /// Holomorphic gradient of `v`: the vector `g` with `dv_p(x) = Σ g_j x_j`.
    pub fn dv(&self, p: &PointY) -> CVec {
        let z = p.coords.as_slice();
        match self.id {
            ModelId::TrivialLine => CVec::one(Complex64::new(1.0, 0.0)),
            ModelId::Conic => CVec::two(z[1], z[0]),
            ModelId::LefschetzQuadratic => CVec::two(2.0 * z[0], 2.0 * z[1]),
        }
    }

    /// `dv_p` applied to a tangent vector.
    pub fn dv_apply(&self, p: &PointY, x: &CVec) -> Complex64 {
        let g = self.dv(p);
        g.as_slice().iter().zip(x.as_slice()).map(|(gj, xj)| gj * xj).sum()
    }

    /// Standard Kähler form `ω(x, y) = Σ Im(conj(x_j) y_j)` at `p`.
    pub fn omega(&self, p: &PointY, x: &TangentVec, y: &TangentVec) -> Result<f64> {
        if x.base.coords != p.coords || y.base.coords != p.coords {
            return Err(Error::Argument("omega: tangent vectors not based at p".into()));
        }
        Ok(self.omega_raw(&x.components, &y.components))
    }

    /// `ω` on raw component vectors (the form has constant coefficients).
    #[inline]
    pub fn omega_raw(&self, x: &CVec, y: &CVec) -> f64 {
        x.as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(xj, yj)| (xj.conj() * yj).im)
            .sum()
    }

    /// Complex structure: multiplication by i.
    #[inline]
    pub fn j_raw(&self, x: &CVec) -> CVec {
        x.scale(Complex64::new(0.0, 1.0))
    }

    /// Holomorphic volume form `Ω = dz₁∧…∧dz_{n+1}` on a frame of n+1
    /// tangent vectors: the determinant of the component matrix.
    pub fn volume_form(&self, p: &PointY, frame: &[TangentVec]) -> Result<Complex64> {
        if frame.len() != self.dim_total() {
            return Err(Error::Argument(format!(
                "volume form needs {} vectors, got {}",
                self.dim_total(),
                frame.len()
            )));
        }
        for e in frame {
            if e.base.coords != p.coords {
                return Err(Error::Argument("volume form: frame not based at p".into()));
            }
        }
        let cols: Vec<CVec> = frame.iter().map(|e| e.components).collect();
        Ok(self.volume_form_raw(&cols))
    }

    /// `Ω` on raw component columns.
    pub fn volume_form_raw(&self, cols: &[CVec]) -> Complex64 {
        match self.dim_total() {
            1 => cols[0][0],
            2 => cols[0][0] * cols[1][1] - cols[0][1] * cols[1][0],
            _ => unreachable!(),
        }
    }

    /// Conserved moment `μ = (|z₁|² − |z₂|²)/2` of the conic's circle action.
    /// Only meaningful for the conic model; transport preserves it.
    pub fn conic_moment(&self, p: &PointY) -> f64 {
        let z = p.coords.as_slice();
        0.5 * (z[0].norm_sqr() - z[1].norm_sqr())
    }

    pub fn point(&self, parts: &[Complex64]) -> Result<PointY> {
        if parts.len() != self.dim_total() {
            return Err(Error::Argument(format!(
                "point needs {} coordinates, got {}",
                self.dim_total(),
                parts.len()
            )));
        }
        Ok(PointY::new(CVec::new(parts)))
    }
}

/// Spec-shaped wrappers around the method API.
pub fn eval_omega(model: &Model, p: &PointY, x: &TangentVec, y: &TangentVec) -> Result<f64> {
    model.omega(p, x, y)
}

pub fn eval_volume_form(model: &Model, p: &PointY, frame: &[TangentVec]) -> Result<Complex64> {
    model.volume_form(p, frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_cvec(rng: &mut impl Rng, len: usize) -> CVec {
        let parts: Vec<Complex64> = (0..len)
            .map(|_| c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        CVec::new(&parts)
    }

    #[test]
    fn catalogue_ids_round_trip() {
        for id in ModelId::all() {
            let parsed: ModelId = id.as_str().parse().unwrap();
            assert_eq!(parsed, id);
        }
        assert!(Model::from_name("nope").is_err());
    }

    #[test]
    fn conic_v_at_ones() {
        let m = Model::from_name("conic").unwrap();
        let p = m.point(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(m.v(&p), c(1.0, 0.0));
    }

    #[test]
    fn critical_values_match_catalogue() {
        // conic: dv = (z2, z1) = 0 only at the origin, value 0.
        let conic = Model::new(ModelId::Conic);
        assert_eq!(conic.critical_values(), &[c(0.0, 0.0)]);
        let origin = conic.point(&[c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(conic.dv(&origin).norm(), 0.0);
        assert_eq!(conic.v(&origin), c(0.0, 0.0));

        // trivial_line: dv = dz never vanishes.
        let triv = Model::new(ModelId::TrivialLine);
        assert!(triv.critical_values().is_empty());

        let lef = Model::new(ModelId::LefschetzQuadratic);
        assert_eq!(lef.critical_values(), &[c(0.0, 0.0)]);
    }

    #[test]
    fn omega_examples() {
        let m = Model::new(ModelId::Conic);
        let p = m.point(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let x = TangentVec::new(p, CVec::two(c(1.0, 0.0), c(0.0, 0.0)));
        let jx = TangentVec::new(p, CVec::two(c(0.0, 1.0), c(0.0, 0.0)));
        assert!((m.omega(&p, &x, &jx).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.omega(&p, &x, &x).unwrap(), 0.0);

        let q = m.point(&[c(2.0, 0.0), c(3.0, 0.0)]).unwrap();
        let a = TangentVec::new(q, CVec::two(c(1.0, 0.0), c(0.0, 0.0)));
        let b = TangentVec::new(q, CVec::two(c(0.0, 0.0), c(1.0, 0.0)));
        assert_eq!(m.omega(&q, &a, &b).unwrap(), 0.0);
    }

    #[test]
    fn omega_rejects_base_mismatch() {
        let m = Model::new(ModelId::Conic);
        let p = m.point(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let q = m.point(&[c(2.0, 0.0), c(1.0, 0.0)]).unwrap();
        let x = TangentVec::new(q, CVec::two(c(1.0, 0.0), c(0.0, 0.0)));
        assert!(m.omega(&p, &x, &x).is_err());
    }

    #[test]
    fn volume_form_examples() {
        let m = Model::new(ModelId::Conic);
        let p = m.point(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let e1 = TangentVec::new(p, CVec::two(c(1.0, 0.0), c(0.0, 0.0)));
        let e2 = TangentVec::new(p, CVec::two(c(0.0, 0.0), c(1.0, 0.0)));
        assert_eq!(m.volume_form(&p, &[e1, e2]).unwrap(), c(1.0, 0.0));
        // Dependent tuple.
        let e3 = TangentVec::new(p, CVec::two(c(2.0, 0.0), c(0.0, 0.0)));
        assert_eq!(m.volume_form(&p, &[e1, e3]).unwrap(), c(0.0, 0.0));
        // Alternating swap.
        assert_eq!(m.volume_form(&p, &[e2, e1]).unwrap(), c(-1.0, 0.0));
        // Wrong frame length.
        assert!(m.volume_form(&p, &[e1]).is_err());
    }

    #[test]
    fn kahler_compatibility_random_sweep() {
        // omega(Jx, Jy) = omega(x, y), omega(x, Jx) > 0, dv(Jx) = i dv(x),
        // and Omega vanishes on repeated vectors.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in ModelId::all() {
            let m = Model::new(id);
            let d = m.dim_total();
            for _ in 0..100 {
                let p = PointY::new(random_cvec(&mut rng, d));
                let x = random_cvec(&mut rng, d);
                let y = random_cvec(&mut rng, d);
                let jx = m.j_raw(&x);
                let jy = m.j_raw(&y);
                assert!((m.omega_raw(&jx, &jy) - m.omega_raw(&x, &y)).abs() <= 1e-12);
                if x.norm() > 1e-6 {
                    assert!(m.omega_raw(&x, &jx) > 0.0);
                }
                let dv_jx = m.dv_apply(&p, &jx);
                let i_dv_x = Complex64::new(0.0, 1.0) * m.dv_apply(&p, &x);
                assert!((dv_jx - i_dv_x).norm() <= 1e-12);
                if d == 2 {
                    let rep = m.volume_form_raw(&[x, x]);
                    assert!(rep.norm() <= 1e-12);
                }
            }
        }
    }
}
