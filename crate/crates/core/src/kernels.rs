//! Frozen-coefficient Gaussian kernel `p_t(x,y) = N(x; y, tÃ(y))`, the
//! constant-coefficient reference density `q_t`, the parametrix integrand
//! `h₀ = (L_z − L^y_z)p` and its symmetrized form `h`.

use std::f64::consts::PI;

use dashmap::DashMap;
use serde::Serialize;

use crate::diffusion_models::{symmetrize_a, DiffusionModel};
use crate::error::{Error, Result};
use crate::geometry::{project_pi, HalfSpaceDomain, PayoffFunction};
use crate::linalg::{dot, Mat, Vec3, MAX_DIM};
use crate::quadrature::{gl_interval, graded_interval, QuadratureScheme};

const CACHE_CAP: usize = 1 << 20;

/// `Ã(y)`, its inverse and determinant.
#[derive(Clone, Copy, Debug)]
pub struct Factor {
    pub a_tilde: Mat,
    pub inv: Mat,
    pub det: f64,
}

impl Factor {
    fn new(a_tilde: Mat) -> Self {
        let c = a_tilde.cholesky().expect("symmetrized matrix must be positive definite");
        Factor { a_tilde, inv: c.inverse(), det: c.det() }
    }
}

pub struct KernelEval {
    pub model: DiffusionModel,
    pub dom: HalfSpaceDomain,
    constant: Option<[Factor; 2]>,
    cache: DashMap<[u64; MAX_DIM], Factor>,
}

/// Which side of ∂D a half-space quadrature covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Inside,
    Outside,
}

impl KernelEval {
    pub fn new(model: &DiffusionModel, dom: &HalfSpaceDomain) -> Result<Self> {
        if model.d != dom.d {
            return Err(Error::DimensionMismatch { expected: dom.d, got: model.d });
        }
        let constant = if model.is_constant() {
            let a = model.a(&vec![0.0; model.d]);
            Some([Factor::new(a), Factor::new(dom.conjugate(&a))])
        } else {
            None
        };
        Ok(KernelEval { model: model.clone(), dom: dom.clone(), constant, cache: DashMap::new() })
    }

    pub fn d(&self) -> usize {
        self.dom.d
    }

    /// Factorization of `Ã(y)`, memoized per node for variable coefficients.
    #[inline]
    pub fn factor(&self, y: &[f64]) -> Factor {
        if let Some(c) = &self.constant {
            return if self.dom.contains(y) { c[0] } else { c[1] };
        }
        let mut key = [0u64; MAX_DIM];
        for (k, v) in key.iter_mut().zip(y) {
            *k = v.to_bits();
        }
        if let Some(f) = self.cache.get(&key) {
            return *f;
        }
        let f = Factor::new(symmetrize_a(&self.model, &self.dom, y));
        if self.cache.len() < CACHE_CAP {
            self.cache.insert(key, f);
        }
        f
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    #[inline]
    fn gauss(&self, t: f64, v: &[f64], f: &Factor) -> f64 {
        let d = self.d();
        let q = f.inv.bilinear(v, v);
        (2.0 * PI * t).powf(-0.5 * d as f64) / f.det.sqrt() * (-0.5 * q / t).exp()
    }

    /// `p_t(x,y)`
    pub fn p_kernel(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        check_t(t)?;
        self.check2(x, y)?;
        Ok(self.p_raw(t, x, y))
    }

    #[inline]
    pub fn p_raw(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let f = self.factor(y);
        let v = sub(x, y, self.d());
        self.gauss(t, &v, &f)
    }

    /// Transition density of the constant-coefficient model:
    /// `N(y; x + tb, tA)`.
    pub fn q_reference(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        check_t(t)?;
        self.check2(x, y)?;
        let c = self
            .constant
            .as_ref()
            .ok_or_else(|| Error::UnsupportedModel("q_t has a closed form only for constant coefficients".into()))?;
        Ok(self.q_raw(t, x, y, &c[0]))
    }

    #[inline]
    fn q_raw(&self, t: f64, x: &[f64], y: &[f64], f: &Factor) -> f64 {
        let d = self.d();
        let b = self.model.b(x);
        let mut v = [0.0; MAX_DIM];
        for i in 0..d {
            v[i] = y[i] - x[i] - t * b[i];
        }
        self.gauss(t, &v, f)
    }

    /// `h₀(t,z,y)`
    pub fn h0(&self, t: f64, z: &[f64], y: &[f64]) -> Result<f64> {
        check_t(t)?;
        self.check2(z, y)?;
        Ok(self.h0_raw(t, z, y))
    }

    #[inline]
    pub fn h0_raw(&self, t: f64, z: &[f64], y: &[f64]) -> f64 {
        let f = self.factor(y);
        self.h0_with(t, z, y, &f)
    }

    /// `h₀` with a precomputed factor of `Ã(y)`.
    #[inline]
    pub fn h0_with(&self, t: f64, z: &[f64], y: &[f64], f: &Factor) -> f64 {
        let d = self.d();
        let v = sub(z, y, d);
        let delta = self.model.a(z).sub(&f.a_tilde);
        let b = self.model.b(z);
        let w = f.inv.mat_vec(&v);
        let quad = delta.bilinear(&w, &w);
        let tr = f.inv.trace_prod(&delta);
        let bw = dot(&b[..d], &w[..d]);
        if quad == 0.0 && tr == 0.0 && bw == 0.0 {
            return 0.0;
        }
        let p = self.gauss(t, &v, f);
        (0.5 * quad / (t * t) - 0.5 * (tr + 2.0 * bw) / t) * p
    }

    /// `h(t,x,y) = h₀(t,x,y) − h₀(t,x,θy)`
    pub fn h_sym(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        check_t(t)?;
        self.check2(x, y)?;
        Ok(self.h_raw(t, x, y))
    }

    #[inline]
    pub fn h_raw(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        let ty = self.dom.reflect3(y);
        self.h0_raw(t, x, y) - self.h0_raw(t, x, &ty[..self.d()])
    }

    /// Isotropic Gaussian `(4πMt)^{-d/2} e^{-|x−y|²/4Mt}`.
    pub fn p_iso(&self, t: f64, x: &[f64], y: &[f64], big_m: f64) -> f64 {
        let d = self.d();
        let r2: f64 = (0..d).map(|i| (x[i] - y[i]) * (x[i] - y[i])).sum();
        (4.0 * PI * big_m * t).powf(-0.5 * d as f64) * (-r2 / (4.0 * big_m * t)).exp()
    }

    fn check2(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let d = self.d();
        for v in [x, y] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
        }
        Ok(())
    }

    /// Tensor rule over the part of the cube `center ± half_width` (in frame
    /// coordinates) lying on `side`. With `finest`, the normal axis is graded
    /// towards ∂D when the clipped interval touches it.
    pub fn half_space_rule(
        &self,
        center: &[f64],
        half_width: f64,
        side: Side,
        order: usize,
        finest: Option<f64>,
    ) -> Vec<(Vec3, f64)> {
        let d = self.d();
        let c = self.dom.to_frame(center);
        let (lo, hi) = match side {
            Side::Inside => ((c[0] - half_width).max(0.0), c[0] + half_width),
            Side::Outside => (c[0] - half_width, (c[0] + half_width).min(0.0)),
        };
        if hi <= lo {
            return Vec::new();
        }
        let touches = match side {
            Side::Inside => lo == 0.0,
            Side::Outside => hi == 0.0,
        };
        let normal: Vec<(f64, f64)> = match (finest, touches) {
            (Some(eps), true) => {
                let per = (order / 3).max(8);
                match side {
                    Side::Inside => graded_interval(per, 0.0, hi, eps),
                    Side::Outside => graded_interval(per, 0.0, -lo, eps).into_iter().map(|(x, w)| (-x, w)).collect(),
                }
            }
            _ => gl_interval(order, lo, hi),
        };
        let trans: Vec<Vec<(f64, f64)>> =
            (1..d).map(|j| gl_interval(order, c[j] - half_width, c[j] + half_width)).collect();
        let mut out = Vec::with_capacity(normal.len() * order.pow((d - 1) as u32));
        let mut idx = vec![0usize; d.saturating_sub(1)];
        for &(xi, wx) in &normal {
            loop {
                let mut fc = [0.0; MAX_DIM];
                fc[0] = xi;
                let mut w = wx;
                for j in 1..d {
                    let (e, we) = trans[j - 1][idx[j - 1]];
                    fc[j] = e;
                    w *= we;
                }
                out.push((self.dom.from_frame(&fc), w));
                // odometer over transverse axes
                let mut j = 0;
                while j < idx.len() {
                    idx[j] += 1;
                    if idx[j] < order {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j == idx.len() {
                    break;
                }
            }
        }
        out
    }

    /// `∫ π(f)(y) p_t(x,y) dy` over the truncated box; vanishes for `x ∈ ∂D`.
    pub fn boundary_symmetry_integral(&self, t: f64, x: &[f64], f: &PayoffFunction, quad: &QuadratureScheme) -> Result<f64> {
        check_t(t)?;
        let d = self.d();
        let w = quad.truncation_sigmas * (2.0 * self.model.big_m * t).sqrt();
        let mut s = 0.0;
        for side in [Side::Inside, Side::Outside] {
            for (y, wt) in self.half_space_rule(x, w, side, quad.space_order, None) {
                s += wt * project_pi(f, &self.dom, &y[..d]) * self.p_raw(t, x, &y[..d]);
            }
        }
        Ok(s)
    }

    /// Residual of the parametrix identity
    /// `q_t − p_t = ∫₀ᵗ ∫ q_s(x,z) h₀(t−s,z,y) dz ds`.
    pub fn parametrix_residual(&self, t: f64, x: &[f64], y: &[f64], quad: &QuadratureScheme) -> Result<ParametrixResidual> {
        let q = self.q_reference(t, x, y)?;
        let p = self.p_kernel(t, x, y)?;
        let fy = self.factor(y);
        let mut integral = 0.0;
        for (s, ws) in quad.time_rule(0.0, t) {
            let u = t - s;
            if s <= 0.0 || u <= 0.0 {
                continue;
            }
            integral += ws * self.q_h0_inner(s, u, x, y, &fy, quad);
        }
        Ok(ParametrixResidual { q, p, integral, residual: q - p - integral })
    }

    /// `∫ q_s(x,z) h₀(u,z,y) dz` for constant-coefficient models.
    pub fn q_h0_convolution(&self, s: f64, u: f64, x: &[f64], y: &[f64], quad: &QuadratureScheme) -> Result<f64> {
        check_t(s)?;
        check_t(u)?;
        self.check2(x, y)?;
        if self.constant.is_none() {
            return Err(Error::UnsupportedModel("closed-form reference density needs constant coefficients".into()));
        }
        let fy = self.factor(y);
        Ok(self.q_h0_inner(s, u, x, y, &fy, quad))
    }

    fn q_h0_inner(&self, s: f64, u: f64, x: &[f64], y: &[f64], fy: &Factor, quad: &QuadratureScheme) -> f64 {
        let d = self.d();
        let fa = self.constant.as_ref().unwrap()[0];
        let b = self.model.b(x);
        // Product of N(x + sb, sA) and N(y, uÃ) in z: integrate over a box
        // around the product mean.
        let p1 = fa.inv.scale(1.0 / s);
        let p2 = fy.inv.scale(1.0 / u);
        let prec = p1.add(&p2);
        let cov = prec.cholesky().unwrap().inverse();
        let mut m1 = [0.0; MAX_DIM];
        for i in 0..d {
            m1[i] = x[i] + s * b[i];
        }
        let r1 = p1.mat_vec(&m1);
        let r2 = p2.mat_vec(y);
        let mut rhs = [0.0; MAX_DIM];
        for i in 0..d {
            rhs[i] = r1[i] + r2[i];
        }
        let mu = cov.mat_vec(&rhs);
        let lam = cov.sym_eigenvalues()[d - 1];
        let hw = (quad.truncation_sigmas + 1.0) * lam.sqrt();
        let axes: Vec<Vec<(f64, f64)>> = (0..d).map(|i| gl_interval(quad.space_order, mu[i] - hw, mu[i] + hw)).collect();
        let mut inner = 0.0;
        tensor_for_each(&axes, |z, w| {
            inner += w * self.q_raw(s, x, &z[..d], &fa) * self.h0_with(u, &z[..d], y, fy);
        });
        inner
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ParametrixResidual {
    pub q: f64,
    pub p: f64,
    pub integral: f64,
    pub residual: f64,
}

impl ParametrixResidual {
    /// `|residual| / |q − p|`; scaled by the density itself when `q = p`.
    pub fn relative(&self) -> f64 {
        let gap = (self.q - self.p).abs();
        let scale = if gap > 0.0 { gap } else { self.q.abs().max(self.p.abs()) };
        if scale == 0.0 {
            if self.residual == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.residual.abs() / scale
        }
    }
}

/// Visits every node of a tensor rule given per-axis rules.
pub fn tensor_for_each<F: FnMut(Vec3, f64)>(axes: &[Vec<(f64, f64)>], mut f: F) {
    let d = axes.len();
    if axes.iter().any(|a| a.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; d];
    loop {
        let mut z = [0.0; MAX_DIM];
        let mut w = 1.0;
        for i in 0..d {
            let (x, wi) = axes[i][idx[i]];
            z[i] = x;
            w *= wi;
        }
        f(z, w);
        let mut j = 0;
        while j < d {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == d {
            break;
        }
    }
}

#[inline]
fn sub(x: &[f64], y: &[f64], d: usize) -> Vec3 {
    let mut v = [0.0; MAX_DIM];
    for i in 0..d {
        v[i] = x[i] - y[i];
    }
    v
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drift1d() -> KernelEval {
        let m = DiffusionModel::constant(Mat::identity(1), &[0.2]).unwrap();
        KernelEval::new(&m, &HalfSpaceDomain::axis(1, 0.0)).unwrap()
    }

    #[test]
    fn peak_of_standard_kernel() {
        let k = KernelEval::new(&DiffusionModel::brownian(2), &HalfSpaceDomain::axis(2, 0.0)).unwrap();
        let v = k.p_kernel(0.5, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!((v - 1.0 / (2.0 * PI * 0.5)).abs() < 1e-15);
        assert!(k.p_kernel(0.0, &[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn q_at_mean_in_one_dimension() {
        let k = drift1d();
        let v = k.q_reference(1.0, &[0.0], &[0.2]).unwrap();
        assert!((v - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
        assert!((v - 0.39894).abs() < 1e-5);
    }

    #[test]
    fn q_reference_rejects_variable_models() {
        let m = DiffusionModel::tanh1d(1.0, 0.5, 0.0).unwrap();
        let k = KernelEval::new(&m, &HalfSpaceDomain::axis(1, 0.0)).unwrap();
        assert!(matches!(k.q_reference(1.0, &[0.0], &[0.0]), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn drift_only_h0() {
        let k = drift1d();
        for &(t, z, y) in &[(0.3, 0.4, -0.2), (1.0, 1.0, 2.0), (0.01, 0.05, 0.0)] {
            let p = k.p_raw(t, &[z], &[y]);
            let want = -(0.2 / t) * (z - y) * p;
            let got = k.h0(t, &[z], &[y]).unwrap();
            assert!((got - want).abs() <= 1e-15 * want.abs().max(1e-300), "{got} {want}");
        }
    }

    #[test]
    fn h0_matches_generator_difference() {
        // (L_z − L_z^y) p by central differences in z.
        let m = DiffusionModel::tanh1d(1.0, 0.4, 0.3).unwrap();
        let dom = HalfSpaceDomain::axis(1, 0.0);
        let k = KernelEval::new(&m, &dom).unwrap();
        let (t, z, y) = (0.4, 0.3, -0.5);
        let f = k.factor(&[y]);
        let p = |zz: f64| k.gauss(t, &[zz - y], &f);
        let h = 1e-4;
        let d2 = (p(z + h) - 2.0 * p(z) + p(z - h)) / (h * h);
        let d1 = (p(z + h) - p(z - h)) / (2.0 * h);
        let want = 0.5 * (m.a(&[z]).a[0][0] - f.a_tilde.a[0][0]) * d2 + m.b(&[z])[0] * d1;
        let got = k.h0(t, &[z], &[y]).unwrap();
        assert!((got - want).abs() < 1e-6 * want.abs().max(1.0), "{got} {want}");
    }

    #[test]
    fn p_integrates_to_one_in_x() {
        let m = DiffusionModel::rotated_constant(0.3, &[0.0, 0.0]).unwrap();
        let k = KernelEval::new(&m, &HalfSpaceDomain::axis(2, 0.0)).unwrap();
        let y = [-0.3, 0.2];
        let t = 0.7;
        let hw = 8.6 * (2.0 * 1.3 * t as f64).sqrt();
        let axes: Vec<Vec<(f64, f64)>> = (0..2).map(|i| gl_interval(48, y[i] - hw, y[i] + hw)).collect();
        let mut s = 0.0;
        tensor_for_each(&axes, |x, w| s += w * k.p_raw(t, &x[..2], &y));
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn half_space_rule_volume() {
        let k = KernelEval::new(&DiffusionModel::brownian(2), &HalfSpaceDomain::axis(2, 0.5)).unwrap();
        let r: f64 = k.half_space_rule(&[0.7, 0.0], 1.0, Side::Inside, 8, None).iter().map(|p| p.1).sum();
        assert!((r - 1.2 * 2.0).abs() < 1e-13);
        let g: f64 = k.half_space_rule(&[0.7, 0.0], 1.0, Side::Outside, 24, Some(1e-4)).iter().map(|p| p.1).sum();
        assert!((g - 0.8 * 2.0).abs() < 1e-13);
    }

    #[test]
    fn factor_cache_is_used() {
        let m = DiffusionModel::tanh1d(1.0, 0.5, 0.0).unwrap();
        let k = KernelEval::new(&m, &HalfSpaceDomain::axis(1, 0.0)).unwrap();
        let a = k.h0_raw(0.1, &[0.3], &[-0.2]);
        let b = k.h0_raw(0.1, &[0.3], &[-0.2]);
        assert_eq!(a, b);
        assert_eq!(k.cache_len(), 1);
    }
}
