//! The knock-in operator `S_t f(x) = ∫_D h(t,x,y) f(y) dy`, its time
//! iterates `S*ⁿ_t f(x) = ∫₀ᵗ S_s S*ⁿ⁻¹_{t−s} f(x) ds` and the hedge payoffs
//! `π⊥ S_{s−u} S*ʰ⁻¹_{T−s} f` built from them.
//!
//! `S_t g(x)` is evaluated as `∫_D h₀(t,x,y) g(y) dy − ∫_{D^c} h₀(t,x,y') g(θy') dy'`,
//! so `g` is only ever sampled inside `D`. Iterates are tabulated on a grid
//! in `D` (geometric in the distance to ∂D) and on a geometric maturity
//! grid, then interpolated when an outer operator needs them.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{pi_perp_of, project_pi, HalfSpaceDomain, PayoffFunction};
use crate::kernels::{KernelEval, Side};
use crate::linalg::{Vec3, MAX_DIM};
use crate::quadrature::QuadratureScheme;

pub const MAX_ORDER_CAP: usize = 4;

/// `∫_D h₀(t,x,y) g(y) dy − ∫_{D^c} h₀(t,x,y') g(θy') dy'` where `g` is
/// only evaluated in `D`.
pub fn s_integral<G: Fn(&[f64]) -> f64>(
    kern: &KernelEval,
    t: f64,
    x: &[f64],
    quad: &QuadratureScheme,
    finest: Option<f64>,
    g: G,
) -> f64 {
    let d = kern.d();
    let w = quad.truncation_sigmas * (2.0 * kern.model.big_m * t).sqrt();
    let mut acc = 0.0;
    for (y, wt) in kern.half_space_rule(x, w, Side::Inside, quad.space_order, finest) {
        let h = kern.h0_raw(t, x, &y[..d]);
        if h != 0.0 {
            acc += wt * h * g(&y[..d]);
        }
    }
    for (y, wt) in kern.half_space_rule(x, w, Side::Outside, quad.space_order, finest) {
        let h = kern.h0_raw(t, x, &y[..d]);
        if h != 0.0 {
            let ty = kern.dom.reflect3(&y[..d]);
            acc -= wt * h * g(&ty[..d]);
        }
    }
    acc
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// `S_t f(x)`
pub fn apply_s(kern: &KernelEval, t: f64, f: &PayoffFunction, x: &[f64], quad: &QuadratureScheme) -> Result<f64> {
    check_t(t)?;
    kern.model.check_dim(x)?;
    Ok(s_integral(kern, t, x, quad, None, |y| f.eval(y)))
}

/// `S_t f(x)` together with the change under a refined rule; a warning is
/// attached when that change exceeds `100·tol`.
pub fn apply_s_checked(
    kern: &KernelEval,
    t: f64,
    f: &PayoffFunction,
    x: &[f64],
    quad: &QuadratureScheme,
    tol: f64,
) -> Result<(f64, f64, Option<String>)> {
    let a = apply_s(kern, t, f, x, quad)?;
    let b = apply_s(kern, t, f, x, &quad.refined())?;
    let delta = (a - b).abs();
    let warn = (delta > 100.0 * tol).then(|| format!("S_t quadrature not converged: order-doubling change {delta:.3e}"));
    Ok((a, delta, warn))
}

/// `S*ⁿ_t f(x)`; builds the tables for orders below `n` on the fly.
pub fn apply_s_star(kern: &KernelEval, n: usize, t: f64, f: &PayoffFunction, x: &[f64], quad: &QuadratureScheme) -> Result<f64> {
    check_t(t)?;
    kern.model.check_dim(x)?;
    if n == 0 || n > MAX_ORDER_CAP {
        return Err(Error::config("order", format!("order {n} outside 1..={MAX_ORDER_CAP}")));
    }
    if n == 1 {
        return apply_s(kern, t, f, x, quad);
    }
    let eng = HedgeEngine::build(kern, f, quad, t, x, n - 1)?;
    eng.star(n, t, x)
}

/// 4-point Lagrange stencil on sorted `nodes`, clamped to the node range.
fn lagrange4(nodes: &[f64], x: f64) -> (usize, [f64; 4], usize) {
    let n = nodes.len();
    if n == 1 {
        return (0, [1.0, 0.0, 0.0, 0.0], 1);
    }
    let xc = x.clamp(nodes[0], nodes[n - 1]);
    if n < 4 {
        let j = nodes.partition_point(|v| *v <= xc).clamp(1, n - 1) - 1;
        let f = (xc - nodes[j]) / (nodes[j + 1] - nodes[j]);
        return (j, [1.0 - f, f, 0.0, 0.0], 2);
    }
    let j = nodes.partition_point(|v| *v <= xc).clamp(1, n - 1) - 1;
    let start = j.saturating_sub(1).min(n - 4);
    let mut w = [0.0; 4];
    for a in 0..4 {
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                l *= (xc - nodes[start + b]) / (nodes[start + a] - nodes[start + b]);
            }
        }
        w[a] = l;
    }
    (start, w, 4)
}

/// Grid over `D` in frame coordinates.
#[derive(Clone, Debug)]
pub struct FrameGrid {
    pub xi: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
}

impl FrameGrid {
    fn n_eta(&self) -> usize {
        self.eta.iter().map(|e| e.len()).product()
    }

    pub fn len(&self) -> usize {
        self.xi.len() * self.n_eta()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn node(&self, idx: usize) -> Vec3 {
        let ne = self.n_eta();
        let (ix, mut ie) = (idx / ne, idx % ne);
        let mut c = [0.0; MAX_DIM];
        c[0] = self.xi[ix];
        for (j, e) in self.eta.iter().enumerate().rev() {
            c[j + 1] = e[ie % e.len()];
            ie /= e.len();
        }
        c
    }

    /// Stencil offsets and weights for a frame point; returns the count.
    fn stencil(&self, c: &[f64], out: &mut [(usize, f64); STENCIL_CAP]) -> usize {
        let (sx, wx, nx) = lagrange4(&self.xi, c[0]);
        let ne = self.n_eta();
        let mut len = 0;
        for a in 0..nx {
            out[len] = ((sx + a) * ne, wx[a]);
            len += 1;
        }
        let mut stride = ne;
        for (j, e) in self.eta.iter().enumerate() {
            stride /= e.len();
            let (se, we, n) = lagrange4(e, c[j + 1]);
            if n == 1 {
                continue;
            }
            // expand in place, last entry first so sources are not overwritten
            for i in (0..len).rev() {
                let (o, w) = out[i];
                for b in (0..n).rev() {
                    out[i * n + b] = (o + (se + b) * stride, w * we[b]);
                }
            }
            len *= n;
        }
        len
    }
}

const STENCIL_CAP: usize = 64;

/// A level table blended to one maturity.
pub struct Slice<'e> {
    grid: &'e FrameGrid,
    dom: &'e HalfSpaceDomain,
    values: Vec<f64>,
}

impl Slice<'_> {
    pub fn value(&self, y: &[f64]) -> f64 {
        let c = self.dom.to_frame(y);
        let mut sten = [(0usize, 0.0f64); STENCIL_CAP];
        let n = self.grid.stencil(&c, &mut sten);
        sten[..n].iter().map(|&(o, w)| w * self.values[o]).sum()
    }
}

/// Tabulated `S*ʲ_τ f` on a `FrameGrid` for a geometric grid of τ.
#[derive(Clone, Debug)]
pub struct LevelTable {
    pub order: usize,
    pub log_tau: Vec<f64>,
    pub values: Vec<f64>,
}

/// Holds the tabulated iterates needed to evaluate hedge payoffs up to a
/// given order.
pub struct HedgeEngine<'a> {
    pub kern: &'a KernelEval,
    pub f: PayoffFunction,
    pub quad: QuadratureScheme,
    pub horizon: f64,
    pub grid: FrameGrid,
    pub tables: Vec<LevelTable>,
    anchor: Vec3,
    tau_min: f64,
}

impl<'a> HedgeEngine<'a> {
    /// Tabulates `S*ʲ_τ f` for `j ≤ levels` and `τ ∈ [1e-8·horizon, horizon]`.
    /// `anchor` fixes the transverse window of the grid.
    pub fn build(
        kern: &'a KernelEval,
        f: &PayoffFunction,
        quad: &QuadratureScheme,
        horizon: f64,
        anchor: &[f64],
        levels: usize,
    ) -> Result<Self> {
        check_t(horizon)?;
        if levels > MAX_ORDER_CAP {
            return Err(Error::config("order", format!("order {levels} above cap {MAX_ORDER_CAP}")));
        }
        let model = &kern.model;
        let dom = &kern.dom;
        let tau_min = 1e-8 * horizon;
        let reach = (model.big_m * horizon).sqrt();
        let c = dom.to_frame(anchor);
        let mut xi = vec![0.0];
        let mut h = 0.25 * (model.m * tau_min).sqrt();
        let xi_max = c[0].max(0.0) + 18.2 * reach + model.b_inf * horizon;
        let ratio = quad.grid_ratio.max(1.01);
        while h < xi_max {
            xi.push(h);
            h *= ratio;
        }
        xi.push(xi_max);
        let reducible = model.transverse_invariant(dom) && f.normal_only();
        let nt = if reducible { 1 } else { quad.transverse_points.max(1) };
        let span = 6.0 * reach + model.b_inf * horizon;
        let eta: Vec<Vec<f64>> = (1..dom.d)
            .map(|j| {
                if nt == 1 {
                    vec![c[j]]
                } else {
                    (0..nt).map(|i| c[j] - span + 2.0 * span * i as f64 / (nt - 1) as f64).collect()
                }
            })
            .collect();
        let mut log_tau = Vec::new();
        let mut t = tau_min;
        let tr = quad.tau_ratio.max(1.01);
        while t < horizon * (1.0 - 1e-12) {
            log_tau.push(t.ln());
            t *= tr;
        }
        log_tau.push(horizon.ln());
        let mut eng = HedgeEngine {
            kern,
            f: f.clone(),
            quad: quad.clone(),
            horizon,
            grid: FrameGrid { xi, eta },
            tables: Vec::new(),
            anchor: crate::linalg::to_vec3(anchor),
            tau_min,
        };
        for j in 1..=levels {
            let tab = eng.tabulate(j);
            eng.tables.push(tab);
        }
        Ok(eng)
    }

    pub fn levels(&self) -> usize {
        self.tables.len()
    }

    pub fn is_reducible(&self) -> bool {
        self.grid.eta.iter().all(|e| e.len() == 1)
    }

    fn tabulate(&self, order: usize) -> LevelTable {
        let ng = self.grid.len();
        let log_tau = self.grid_log_tau();
        let values: Vec<f64> = (0..log_tau.len() * ng)
            .into_par_iter()
            .map(|e| {
                let (it, ig) = (e / ng, e % ng);
                let tau = log_tau[it].exp();
                let c = self.grid.node(ig);
                let x = self.kern.dom.from_frame(&c);
                self.star_unchecked(order, tau, &x[..self.kern.d()])
            })
            .collect();
        LevelTable { order, log_tau, values }
    }

    fn grid_log_tau(&self) -> Vec<f64> {
        let mut log_tau = Vec::new();
        let mut t = self.tau_min;
        let tr = self.quad.tau_ratio.max(1.01);
        while t < self.horizon * (1.0 - 1e-12) {
            log_tau.push(t.ln());
            t *= tr;
        }
        log_tau.push(self.horizon.ln());
        log_tau
    }

    /// `S*ʲ_τ f` on the grid, interpolated in maturity.
    pub fn slice(&self, order: usize, tau: f64) -> Slice<'_> {
        let tab = &self.tables[order - 1];
        let lt = tau.max(self.tau_min).min(self.horizon).ln();
        let (st, wt, nt) = lagrange4(&tab.log_tau, lt);
        let ng = self.grid.len();
        let mut values = vec![0.0; ng];
        for a in 0..nt {
            let row = &tab.values[(st + a) * ng..(st + a + 1) * ng];
            for (v, r) in values.iter_mut().zip(row) {
                *v += wt[a] * r;
            }
        }
        Slice { grid: &self.grid, dom: &self.kern.dom, values }
    }

    /// Interpolated `S*ʲ_τ f(y)` for `y ∈ D`.
    pub fn table_value(&self, order: usize, tau: f64, y: &[f64]) -> f64 {
        self.slice(order, tau).value(y)
    }

    fn star_unchecked(&self, order: usize, tau: f64, x: &[f64]) -> f64 {
        if order == 1 {
            let f = &self.f;
            return s_integral(self.kern, tau, x, &self.quad, None, |y| f.eval(y));
        }
        let m = self.kern.model.m;
        let mut acc = 0.0;
        for (s, w) in self.quad.time_rule(0.0, tau) {
            let rest = tau - s;
            if s <= 0.0 || rest <= 0.0 {
                continue;
            }
            let finest = 0.5 * (m * rest).sqrt();
            let sl = self.slice(order - 1, rest);
            acc += w * s_integral(self.kern, s, x, &self.quad, Some(finest), |y| sl.value(y));
        }
        acc
    }

    /// `S*ʲ_τ f(x)` for any `x`; needs tables up to order `j − 1`.
    pub fn star(&self, order: usize, tau: f64, x: &[f64]) -> Result<f64> {
        check_t(tau)?;
        self.kern.model.check_dim(x)?;
        if order == 0 || order > self.levels() + 1 {
            return Err(Error::config("order", format!("order {order} needs tables up to {}", order.saturating_sub(1))));
        }
        if tau > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("maturity {tau} beyond tabulated horizon {}", self.horizon)));
        }
        Ok(self.star_unchecked(order, tau, x))
    }

    /// `∫_u^T S_{s−u} S*ⁿ_{T−s} f(x) ds` with `T = horizon`.
    pub fn residual_term(&self, n: usize, u: f64, x: &[f64]) -> Result<f64> {
        if !(u >= 0.0 && u < self.horizon) {
            return Err(Error::Precondition(format!("need 0 ≤ u < T, got u = {u}")));
        }
        if n == 0 || n > self.levels() {
            return Err(Error::config("order", format!("residual order {n} needs {n} tables")));
        }
        self.kern.model.check_dim(x)?;
        let m = self.kern.model.m;
        let mut acc = 0.0;
        for (s, w) in self.quad.time_rule(u, self.horizon) {
            let (inner, outer) = (self.horizon - s, s - u);
            if inner <= 0.0 || outer <= 0.0 {
                continue;
            }
            let finest = 0.5 * (m * inner).sqrt();
            let sl = self.slice(n, inner);
            acc += w * s_integral(self.kern, outer, x, &self.quad, Some(finest), |y| sl.value(y));
        }
        Ok(acc)
    }

    /// Point evaluator for `x ↦ S*ʲ_τ f(x)`: a ξ-profile when the problem
    /// is translation invariant along ∂D, otherwise direct evaluation.
    pub fn evaluator(&self, order: usize, tau: f64, lo: f64, hi: f64) -> Result<PointEvaluator<'_, 'a>> {
        check_t(tau)?;
        if order == 0 || order > self.levels() + 1 {
            return Err(Error::config("order", format!("order {order} exceeds tabulated levels")));
        }
        if !self.is_reducible() {
            return Ok(PointEvaluator::Direct { eng: self, order, tau });
        }
        let mut xi: Vec<f64> = Vec::new();
        let sq = tau.sqrt();
        let mut g = 0.005;
        while g < 12.0 {
            xi.push(g * sq);
            xi.push(-g * sq);
            g *= 1.12;
        }
        xi.push(0.0);
        let reach = (self.kern.model.big_m * self.horizon).sqrt();
        let step = 0.08 * reach;
        let (lo, hi) = (lo.min(-step), hi.max(step));
        let mut v = lo;
        while v <= hi {
            xi.push(v);
            v += step;
        }
        xi.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xi.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (1.0 + b.abs()));
        let split = xi.iter().position(|v| *v == 0.0).unwrap();
        let d = self.kern.d();
        let values: Vec<f64> = xi
            .par_iter()
            .map(|&e| {
                let mut c = self.anchor_frame();
                c[0] = e;
                let x = self.kern.dom.from_frame(&c);
                self.star_unchecked(order, tau, &x[..d])
            })
            .collect();
        Ok(PointEvaluator::Profile(Profile { xi, values, split }))
    }

    fn anchor_frame(&self) -> Vec3 {
        self.kern.dom.to_frame(&self.anchor[..self.kern.d()])
    }
}

/// Values of a translation-invariant field along the normal coordinate.
#[derive(Clone, Debug)]
pub struct Profile {
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
    split: usize,
}

impl Profile {
    /// Interpolates without letting a stencil straddle ∂D.
    pub fn eval_xi(&self, e: f64) -> f64 {
        let (nodes, vals) = if e >= 0.0 {
            (&self.xi[self.split..], &self.values[self.split..])
        } else {
            (&self.xi[..=self.split], &self.values[..=self.split])
        };
        let (s, w, n) = lagrange4(nodes, e);
        (0..n).map(|a| w[a] * vals[s + a]).sum()
    }
}

pub enum PointEvaluator<'e, 'a> {
    Profile(Profile),
    Direct { eng: &'e HedgeEngine<'a>, order: usize, tau: f64 },
}

impl PointEvaluator<'_, '_> {
    pub fn eval(&self, dom: &HalfSpaceDomain, x: &[f64]) -> f64 {
        match self {
            PointEvaluator::Profile(p) => p.eval_xi(dom.signed_distance(x)),
            PointEvaluator::Direct { eng, order, tau } => eng.star_unchecked(*order, *tau, x),
        }
    }

    pub fn eval_pi_perp(&self, dom: &HalfSpaceDomain, x: &[f64]) -> f64 {
        pi_perp_of(|z| self.eval(dom, z), dom, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FamilyKind {
    /// `π(f)` held to maturity `T`.
    Terminal,
    /// `π⊥ S_{T−s} f` for `s ∈ (0, T)`.
    Single,
    /// `π⊥ S_{s−u} S*ʰ⁻¹_{T−s} f` on `0 ≤ u ≤ s ≤ T`.
    Double,
}

#[derive(Clone, Debug, Serialize)]
pub struct HedgeFamily {
    pub order: usize,
    pub kind: FamilyKind,
    pub description: String,
}

/// One liquidation claim from a hedge family.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HedgeTerm {
    pub order: usize,
    pub maturity_outer: Option<f64>,
    pub maturity_inner: Option<f64>,
}

/// Symbolic portfolio up to order `n_max`.
pub fn build_hedge_terms(n_max: usize, horizon: f64) -> Result<Vec<HedgeFamily>> {
    if n_max == 0 || n_max > MAX_ORDER_CAP {
        return Err(Error::config("order", format!("n_max {n_max} outside 1..={MAX_ORDER_CAP}")));
    }
    let mut out = vec![
        HedgeFamily { order: 0, kind: FamilyKind::Terminal, description: format!("pi(f) at T = {horizon}") },
        HedgeFamily { order: 1, kind: FamilyKind::Single, description: "pi_perp S_{T-s} f, s in (0,T)".into() },
    ];
    for h in 2..=n_max {
        out.push(HedgeFamily {
            order: h,
            kind: FamilyKind::Double,
            description: format!("pi_perp S_{{s-u}} S*^{} _{{T-s}} f, 0 <= u <= s <= T", h - 1),
        });
    }
    Ok(out)
}

impl HedgeTerm {
    /// Liquidation payoff at `x`.
    pub fn payoff(&self, eng: &HedgeEngine<'_>, x: &[f64]) -> Result<f64> {
        let dom = &eng.kern.dom;
        let t = eng.horizon;
        match self.order {
            0 => Ok(project_pi(&eng.f, dom, x)),
            1 => {
                let s = self.maturity_outer.ok_or_else(|| Error::Precondition("order-1 term needs s".into()))?;
                let tau = t - s;
                check_t(tau)?;
                Ok(pi_perp_of(|z| eng.star_unchecked(1, tau, z), dom, x))
            }
            h => {
                let s = self.maturity_outer.ok_or_else(|| Error::Precondition("term needs s".into()))?;
                let u = self.maturity_inner.ok_or_else(|| Error::Precondition("term needs u".into()))?;
                if h - 1 > eng.levels() {
                    return Err(Error::config("order", format!("order {h} needs {} tables", h - 1)));
                }
                let (outer, inner) = (s - u, t - s);
                check_t(outer)?;
                check_t(inner)?;
                let m = eng.kern.model.m;
                let sl = eng.slice(h - 1, inner);
                let g = |z: &[f64]| s_integral(eng.kern, outer, z, &eng.quad, Some(0.5 * (m * inner).sqrt()), |y| sl.value(y));
                Ok(pi_perp_of(g, dom, x))
            }
        }
    }
}

/// Writes `order,s,u,x…,payoff` rows for the given terms and points.
pub fn export_hedge_csv<W: Write>(eng: &HedgeEngine<'_>, terms: &[HedgeTerm], points: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = eng.kern.d();
    let mut header = vec!["order".to_string(), "s".into(), "u".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.push("payoff".into());
    w.write_record(&header)?;
    for term in terms {
        for x in points {
            let v = term.payoff(eng, x)?;
            let mut row = vec![
                term.order.to_string(),
                term.maturity_outer.map_or(String::new(), |v| v.to_string()),
                term.maturity_inner.map_or(String::new(), |v| v.to_string()),
            ];
            row.extend(x.iter().map(|c| c.to_string()));
            row.push(v.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion_models::DiffusionModel;
    use crate::linalg::Mat;

    fn drift_kernel() -> KernelEval {
        let m = DiffusionModel::constant(Mat::identity(1), &[0.2]).unwrap();
        KernelEval::new(&m, &HalfSpaceDomain::axis(1, 0.0)).unwrap()
    }

    #[test]
    fn lagrange_reproduces_cubics() {
        let nodes = [0.0, 0.1, 0.3, 0.7, 1.5, 2.0];
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        for &x in &[0.05, 0.5, 1.9, 0.0, 2.0] {
            let (s, w, n) = lagrange4(&nodes, x);
            let v: f64 = (0..n).map(|a| w[a] * f(nodes[s + a])).sum();
            assert!((v - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn unit_payoff_closed_form() {
        // S_t 1(x) = 2b φ_t(x) for the drift-only model.
        let k = drift_kernel();
        let q = QuadratureScheme::default();
        let f = PayoffFunction::constant(1.0);
        for &(t, x) in &[(0.25f64, 1.0f64), (0.1, -0.3), (1.0, 0.05)] {
            let want = 2.0 * 0.2 * (-x * x / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt();
            let got = apply_s(&k, t, &f, &[x], &q).unwrap();
            assert!((got / want - 1.0).abs() < 1e-9, "t={t} x={x} {got} {want}");
        }
    }

    #[test]
    fn brownian_operator_vanishes() {
        let k = KernelEval::new(&DiffusionModel::brownian(2), &HalfSpaceDomain::axis(2, 0.0)).unwrap();
        let f = PayoffFunction::constant(1.0);
        let q = QuadratureScheme::coarse();
        assert_eq!(apply_s(&k, 0.3, &f, &[0.4, 0.1], &q).unwrap(), 0.0);
        assert_eq!(apply_s_star(&k, 2, 0.3, &f, &[0.4, 0.1], &q).unwrap(), 0.0);
    }

    #[test]
    fn hedge_families() {
        let fam = build_hedge_terms(1, 1.0).unwrap();
        assert_eq!(fam.len(), 2);
        assert_eq!(fam[1].kind, FamilyKind::Single);
        let fam = build_hedge_terms(2, 1.0).unwrap();
        assert_eq!(fam[2].kind, FamilyKind::Double);
        assert!(build_hedge_terms(5, 1.0).is_err());
    }

    #[test]
    fn order_above_cap_rejected() {
        let k = drift_kernel();
        let f = PayoffFunction::constant(1.0);
        assert!(apply_s_star(&k, 5, 0.5, &f, &[1.0], &QuadratureScheme::default()).is_err());
    }
}
