//! Small numeric helpers shared across modules: a fixed-capacity complex
//! vector for chart coordinates, quadrature rules, and subspace angles.

use num_complex::Complex64;

/// Complex vector of dimension 1 or 2, the chart coordinate type for the
/// whole catalogue. Copy semantics keep the transport inner loops
/// allocation-free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CVec {
    len: usize,
    z: [Complex64; 2],
}

impl CVec {
    pub fn new(parts: &[Complex64]) -> Self {
        assert!(parts.len() >= 1 && parts.len() <= 2, "CVec supports dim 1 or 2");
        let mut z = [Complex64::new(0.0, 0.0); 2];
        z[..parts.len()].copy_from_slice(parts);
        Self { len: parts.len(), z }
    }

    pub fn zero(len: usize) -> Self {
        assert!(len >= 1 && len <= 2);
        Self { len, z: [Complex64::new(0.0, 0.0); 2] }
    }

    pub fn one(z: Complex64) -> Self {
        Self { len: 1, z: [z, Complex64::new(0.0, 0.0)] }
    }

    pub fn two(z1: Complex64, z2: Complex64) -> Self {
        Self { len: 2, z: [z1, z2] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.z[..self.len]
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[inline]
    pub fn add(&self, other: &CVec) -> CVec {
        debug_assert_eq!(self.len, other.len);
        let mut out = *self;
        for j in 0..self.len {
            out.z[j] += other.z[j];
        }
        out
    }

    #[inline]
    pub fn sub(&self, other: &CVec) -> CVec {
        debug_assert_eq!(self.len, other.len);
        let mut out = *self;
        for j in 0..self.len {
            out.z[j] -= other.z[j];
        }
        out
    }

    #[inline]
    pub fn scale(&self, c: Complex64) -> CVec {
        let mut out = *self;
        for j in 0..self.len {
            out.z[j] *= c;
        }
        out
    }

    #[inline]
    pub fn scale_re(&self, c: f64) -> CVec {
        let mut out = *self;
        for j in 0..self.len {
            out.z[j] *= c;
        }
        out
    }

    /// Hermitian inner product `⟨a, b⟩ = Σ conj(a_j) b_j`.
    #[inline]
    pub fn hdot(&self, other: &CVec) -> Complex64 {
        debug_assert_eq!(self.len, other.len);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.len {
            acc += self.z[j].conj() * other.z[j];
        }
        acc
    }
}

impl std::ops::Index<usize> for CVec {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.as_slice()[i]
    }
}

/// z²/|z|², the unit complex number carrying the doubled phase of `z`.
pub fn squared_phase(z: Complex64) -> Complex64 {
    let n = z.norm_sqr();
    z * z / n
}

/// 16-point Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_16() -> [(f64, f64); 16] {
    // Abscissae/weights for [-1, 1], mapped to [0, 1].
    const X: [f64; 8] = [
        0.0950125098376374,
        0.2816035507792589,
        0.4580167776572274,
        0.6178762444026438,
        0.7554044083550030,
        0.8656312023878318,
        0.9445750230732326,
        0.9894009349916499,
    ];
    const W: [f64; 8] = [
        0.1894506104550685,
        0.1826034150449236,
        0.1691565193950025,
        0.1495959888165767,
        0.1246289712555339,
        0.0951585116824928,
        0.0622535239386479,
        0.0271524594117541,
    ];
    let mut out = [(0.0, 0.0); 16];
    for j in 0..8 {
        out[2 * j] = (0.5 * (1.0 - X[j]), 0.5 * W[j]);
        out[2 * j + 1] = (0.5 * (1.0 + X[j]), 0.5 * W[j]);
    }
    out
}

/// Composite Simpson rule with `2n` intervals for `f` on `[a, b]`.
pub fn simpson<F: FnMut(f64) -> f64>(a: f64, b: f64, n_half: usize, mut f: F) -> f64 {
    let n = 2 * n_half.max(1);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// Modified Gram-Schmidt orthonormalization of real column vectors.
/// Returns None if the columns are numerically dependent.
pub fn orthonormalize(cols: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for col in cols {
        let mut w = col.clone();
        for prev in &q {
            let d: f64 = prev.iter().zip(&w).map(|(a, b)| a * b).sum();
            for (wj, pj) in w.iter_mut().zip(prev) {
                *wj -= d * pj;
            }
        }
        let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-13 {
            return None;
        }
        for x in &mut w {
            *x /= norm;
        }
        q.push(w);
    }
    Some(q)
}

/// Smallest principal angle between two real subspaces of equal dimension,
/// given by (not necessarily orthonormal) spanning columns.
pub fn smallest_principal_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<f64> {
    let qa = orthonormalize(a)?;
    let qb = orthonormalize(b)?;
    let k = qa.len();
    debug_assert_eq!(k, qb.len());
    // M = Qa^T Qb, k x k with k <= 2; largest singular value -> smallest angle.
    let mut m = [[0.0f64; 2]; 2];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = qa[i].iter().zip(&qb[j]).map(|(x, y)| x * y).sum();
        }
    }
    let sigma_max = match k {
        1 => m[0][0].abs(),
        2 => {
            // Singular values of a 2x2 matrix in closed form.
            let (a11, a12, a21, a22) = (m[0][0], m[0][1], m[1][0], m[1][1]);
            let f = a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22;
            let det = a11 * a22 - a12 * a21;
            let disc = (f * f - 4.0 * det * det).max(0.0).sqrt();
            (0.5 * (f + disc)).max(0.0).sqrt()
        }
        _ => return None,
    };
    Some(sigma_max.min(1.0).acos())
}

/// Realify a complex vector: (Re z_1, ..., Re z_m, Im z_1, ..., Im z_m).
pub fn realify(v: &CVec) -> Vec<f64> {
    let s = v.as_slice();
    let mut out = Vec::with_capacity(2 * s.len());
    out.extend(s.iter().map(|z| z.re));
    out.extend(s.iter().map(|z| z.im));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let val = simpson(0.0, 2.0, 8, |x| x * x * x);
        assert!((val - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre_16();
        let val: f64 = nodes.iter().map(|&(x, w)| w * x.powi(7)).sum();
        assert!((val - 1.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn principal_angle_of_rotated_line() {
        let a = vec![vec![1.0, 0.0]];
        let theta: f64 = 0.3;
        let b = vec![vec![theta.cos(), theta.sin()]];
        let ang = smallest_principal_angle(&a, &b).unwrap();
        assert!((ang - 0.3).abs() < 1e-12);
    }

    #[test]
    fn principal_angle_of_identical_planes_is_zero() {
        let a = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]];
        let ang = smallest_principal_angle(&a, &a).unwrap();
        assert!(ang.abs() < 1e-7);
    }
}
