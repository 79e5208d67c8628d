//! Half-space barrier domain `D = {x : ⟨x,γ⟩ > k}`, its mirror map and the
//! payoff projections used by the symmetrized hedge.
//!
//! Points with `|⟨x,γ⟩ − k| ≤ BOUNDARY_TOL` count as boundary points and are
//! classified outside `D`, since `D` is open.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Mat, Vec3, MAX_DIM};

pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HalfSpaceDomain {
    pub gamma: Vec<f64>,
    pub k: f64,
    pub d: usize,
    /// Orthonormal completion of `gamma`; `basis[0] == gamma`.
    #[serde(skip)]
    basis: Vec<Vec<f64>>,
}

impl HalfSpaceDomain {
    /// Builds a domain from a unit normal. Fails unless `|γ| = 1` to 1e-14.
    pub fn new(gamma: Vec<f64>, k: f64) -> Result<Self> {
        let d = gamma.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Domain(format!("dimension {d} outside 1..=3")));
        }
        let n = dot(&gamma, &gamma).sqrt();
        if (n - 1.0).abs() > 1e-14 {
            return Err(Error::Domain(format!("|gamma| = {n}, expected 1")));
        }
        let basis = orthonormal_completion(&gamma);
        Ok(HalfSpaceDomain { gamma, k, d, basis })
    }

    /// Normalizes `gamma` first. Returns the domain and `true` when the input
    /// norm differed from 1 by more than 1e-6.
    pub fn normalized(gamma: Vec<f64>, k: f64) -> Result<(Self, bool)> {
        let n = dot(&gamma, &gamma).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Domain("gamma must be a non-zero finite vector".into()));
        }
        let g: Vec<f64> = gamma.iter().map(|x| x / n).collect();
        let mut dom = HalfSpaceDomain::new(g.clone(), k);
        if dom.is_err() {
            // Renormalize once more to absorb rounding in the division.
            let n2 = dot(&g, &g).sqrt();
            dom = HalfSpaceDomain::new(g.iter().map(|x| x / n2).collect(), k);
        }
        Ok((dom?, (n - 1.0).abs() > 1e-6))
    }

    pub fn axis(d: usize, k: f64) -> Self {
        let mut g = vec![0.0; d];
        g[0] = 1.0;
        HalfSpaceDomain::new(g, k).expect("unit axis")
    }

    /// `⟨x,γ⟩ − k`
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        dot(&x[..self.d], &self.gamma) - self.k
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) > BOUNDARY_TOL
    }

    #[inline]
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.signed_distance(x).abs() <= BOUNDARY_TOL
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(())
    }

    /// `θ(x) = (I − 2γγᵀ)x + 2kγ`
    pub fn reflect(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let r = self.reflect3(x);
        Ok(r[..self.d].to_vec())
    }

    #[inline]
    pub fn reflect3(&self, x: &[f64]) -> Vec3 {
        let s = 2.0 * self.signed_distance(x);
        let mut r = [0.0; MAX_DIM];
        for i in 0..self.d {
            r[i] = x[i] - s * self.gamma[i];
        }
        r
    }

    /// `Ψ = I − 2γγᵀ`
    pub fn psi_matrix(&self) -> Mat {
        Mat::identity(self.d).sub(&Mat::outer(&self.gamma, &self.gamma).scale(2.0))
    }

    /// `Ψ a Ψ = a − 2(γuᵀ + uγᵀ)` with `u = aγ − ⟨γ,aγ⟩γ`. A commutator
    /// `u` at rounding level returns `a` unchanged, so matrices that commute
    /// with `γγᵀ` are reproduced bit for bit.
    pub fn conjugate(&self, a: &Mat) -> Mat {
        let d = self.d;
        let ag = a.mat_vec(&self.gamma);
        let agg = dot(&self.gamma, &ag[..d]);
        let mut u = [0.0; MAX_DIM];
        for i in 0..d {
            u[i] = ag[i] - agg * self.gamma[i];
        }
        if norm(&u[..d]) <= 8.0 * f64::EPSILON * a.max_abs() {
            return a.clone();
        }
        let mut out = a.clone();
        for i in 0..d {
            for j in 0..d {
                out.a[i][j] -= 2.0 * (self.gamma[i] * u[j] + u[i] * self.gamma[j]);
            }
        }
        out
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Frame coordinates `(ξ, η)`: `ξ = ⟨x,γ⟩ − k`, `η_j = ⟨x, e_j⟩` for the
    /// transverse basis vectors.
    #[inline]
    pub fn to_frame(&self, x: &[f64]) -> Vec3 {
        let mut r = [0.0; MAX_DIM];
        r[0] = self.signed_distance(x);
        for j in 1..self.d {
            r[j] = dot(&x[..self.d], &self.basis[j]);
        }
        r
    }

    #[inline]
    pub fn from_frame(&self, c: &[f64]) -> Vec3 {
        let mut r = [0.0; MAX_DIM];
        for i in 0..self.d {
            r[i] = (self.k + c[0]) * self.gamma[i];
            for j in 1..self.d {
                r[i] += c[j] * self.basis[j][i];
            }
        }
        r
    }
}

fn orthonormal_completion(gamma: &[f64]) -> Vec<Vec<f64>> {
    let d = gamma.len();
    let mut basis = vec![gamma.to_vec()];
    // Start from the coordinate axes least aligned with gamma.
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&a, &b| gamma[a].abs().partial_cmp(&gamma[b].abs()).unwrap());
    for &ax in &axes {
        if basis.len() == d {
            break;
        }
        let mut v = vec![0.0; d];
        v[ax] = 1.0;
        for b in &basis {
            let p = dot(&v, b);
            for i in 0..d {
                v[i] -= p * b[i];
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Bounded payoff `f`, evaluated pointwise.
#[derive(Clone)]
pub struct PayoffFunction {
    name: String,
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    sup_bound: f64,
    normal_only: bool,
}

impl fmt::Debug for PayoffFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PayoffFunction")
            .field("name", &self.name)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl PayoffFunction {
    /// Arbitrary payoff. `normal_only` declares that the value depends on `x`
    /// only through `⟨x,γ⟩` for the domain it will be used with.
    pub fn custom<F>(name: &str, sup_bound: f64, normal_only: bool, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(sup_bound >= 0.0) || !sup_bound.is_finite() {
            return Err(Error::Precondition(format!("payoff '{name}' needs a finite sup bound")));
        }
        Ok(PayoffFunction { name: name.to_string(), eval: Arc::new(f), sup_bound, normal_only })
    }

    pub fn constant(c: f64) -> Self {
        PayoffFunction::custom("constant", c.abs(), true, move |_| c).expect("finite constant")
    }

    /// `min((⟨x,γ⟩ − strike)⁺, cap)`
    pub fn capped_call(dom: &HalfSpaceDomain, strike: f64, cap: f64) -> Result<Self> {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(Error::Precondition("call payoff needs a finite positive cap".into()));
        }
        let g = dom.gamma.clone();
        PayoffFunction::custom("call", cap, true, move |x| (dot(x, &g) - strike).max(0.0).min(cap))
    }

    /// `1{⟨x,γ⟩ > level}`
    pub fn digital(dom: &HalfSpaceDomain, level: f64) -> Self {
        let g = dom.gamma.clone();
        PayoffFunction::custom("digital", 1.0, true, move |x| if dot(x, &g) > level { 1.0 } else { 0.0 })
            .expect("bounded")
    }

    /// `½(1 + tanh(⟨x,v⟩/scale))` for a direction `v`; depends only on
    /// `⟨x,γ⟩` when `v` is parallel to `γ`.
    pub fn tanh_ramp(dom: &HalfSpaceDomain, direction: &[f64], scale: f64) -> Result<Self> {
        if direction.len() != dom.d {
            return Err(Error::DimensionMismatch { expected: dom.d, got: direction.len() });
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Precondition("ramp scale must be positive".into()));
        }
        let v = direction.to_vec();
        let nv = norm(&v);
        let along = dot(&v, &dom.gamma);
        let parallel = nv > 0.0 && (along.abs() - nv).abs() <= 1e-14 * nv;
        PayoffFunction::custom("tanh_ramp", 1.0, parallel || nv == 0.0, move |x| 0.5 * (1.0 + (dot(x, &v) / scale).tanh()))
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn normal_only(&self) -> bool {
        self.normal_only
    }

    /// `α f + β g`
    pub fn linear_combination(alpha: f64, f: &PayoffFunction, beta: f64, g: &PayoffFunction) -> Self {
        let (f2, g2) = (f.clone(), g.clone());
        PayoffFunction {
            name: format!("{alpha}*{}+{beta}*{}", f.name, g.name),
            sup_bound: alpha.abs() * f.sup_bound + beta.abs() * g.sup_bound,
            normal_only: f.normal_only && g.normal_only,
            eval: Arc::new(move |x| alpha * f2.eval(x) + beta * g2.eval(x)),
        }
    }
}

/// `π(f)(x) = f(x)` on `D`, `−f(θx)` off `D`.
pub fn project_pi(f: &PayoffFunction, dom: &HalfSpaceDomain, x: &[f64]) -> f64 {
    if dom.contains(x) {
        f.eval(x)
    } else {
        let r = dom.reflect3(x);
        -f.eval(&r[..dom.d])
    }
}

/// `π⊥(f)(x) = (f(x) + f(θx)) 1{x ∉ D}`
pub fn project_pi_perp(f: &PayoffFunction, dom: &HalfSpaceDomain, x: &[f64]) -> f64 {
    if dom.contains(x) {
        0.0
    } else {
        let r = dom.reflect3(x);
        f.eval(x) + f.eval(&r[..dom.d])
    }
}

/// Same projections for a plain closure, used on intermediate hedge payoffs.
pub fn pi_perp_of<F: Fn(&[f64]) -> f64>(g: F, dom: &HalfSpaceDomain, x: &[f64]) -> f64 {
    if dom.contains(x) {
        0.0
    } else {
        let r = dom.reflect3(x);
        g(x) + g(&r[..dom.d])
    }
}
