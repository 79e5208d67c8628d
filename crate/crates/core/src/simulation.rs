//! Euler–Maruyama paths with first-exit detection, barrier and plain prices,
//! and Monte Carlo evaluation of the hedging-error identities at `t = 0`.
//!
//! Each path draws from its own ChaCha stream (`stream = path index`), so
//! results do not depend on how paths are scheduled across threads. Every
//! step consumes `d` normals and one uniform whether or not the bridge
//! correction is enabled, which keeps the normals aligned across settings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion_models::DiffusionModel;
use crate::error::{Error, Result};
use crate::geometry::{project_pi, HalfSpaceDomain, PayoffFunction};
use crate::hedge_operators::{HedgeEngine, PointEvaluator};
use crate::linalg::{Vec3, MAX_DIM};
use crate::quadrature::QuadratureScheme;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub bridge_correction: bool,
    pub scheme: String,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { n_paths: 10_000, n_steps: 256, seed: 20240601, bridge_correction: true, scheme: "euler".into() }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(Error::config("montecarlo.n_paths", "must be at least 100"));
        }
        if self.n_steps < 16 {
            return Err(Error::config("montecarlo.n_steps", "must be at least 16"));
        }
        if self.scheme != "euler" {
            return Err(Error::config("montecarlo.scheme", format!("unknown scheme '{}'", self.scheme)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_effective: usize,
}

impl MCEstimate {
    /// Sequential (fixed-order) mean and standard error.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MCEstimate { mean: 0.0, std_error: 0.0, n_effective: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        MCEstimate { mean, std_error: (var / n as f64).sqrt(), n_effective: n }
    }

    pub fn within(&self, target: f64, k_se: f64) -> bool {
        (self.mean - target).abs() <= k_se * self.std_error
    }
}

/// State of a path at an observation time.
#[derive(Clone, Copy, Debug)]
pub struct Observation {
    pub time: f64,
    pub x: Vec3,
    /// The exit happened in a step ending no later than `time`.
    pub exited: bool,
}

#[derive(Clone, Debug)]
pub struct PathRecord {
    pub exit_time: Option<f64>,
    /// Exit state projected onto ∂D.
    pub x_exit: Option<Vec3>,
    /// Unkilled terminal state.
    pub x_t: Vec3,
    pub observations: Vec<Observation>,
}

impl PathRecord {
    pub fn exited(&self) -> bool {
        self.exit_time.is_some()
    }

    /// `τ ∧ T`
    pub fn stopped_time(&self, horizon: f64) -> f64 {
        self.exit_time.unwrap_or(horizon)
    }
}

pub struct PathEnsemble {
    pub horizon: f64,
    pub d: usize,
    pub paths: Vec<PathRecord>,
}

fn time_grid(horizon: f64, n_steps: usize, obs: &[f64]) -> Vec<f64> {
    let n = ((n_steps as f64) * horizon).ceil().max(1.0) as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
    g.extend(obs.iter().copied().filter(|t| *t > 0.0 && *t < horizon));
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    g
}

/// Simulates paths on a uniform grid merged with `obs_times`.
pub fn simulate_paths(
    model: &DiffusionModel,
    dom: &HalfSpaceDomain,
    x0: &[f64],
    horizon: f64,
    cfg: &PathConfig,
    obs_times: &[f64],
) -> Result<PathEnsemble> {
    cfg.validate()?;
    model.check_dim(x0)?;
    if !dom.contains(x0) {
        return Err(Error::Precondition("initial point must lie in D".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    let grid = time_grid(horizon, cfg.n_steps, obs_times);
    let mut obs: Vec<f64> = obs_times.to_vec();
    obs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| simulate_one(model, dom, x0, &grid, &obs, cfg, p as u64))
        .collect();
    Ok(PathEnsemble { horizon, d: model.d, paths })
}

fn simulate_one(
    model: &DiffusionModel,
    dom: &HalfSpaceDomain,
    x0: &[f64],
    grid: &[f64],
    obs: &[f64],
    cfg: &PathConfig,
    path: u64,
) -> PathRecord {
    let d = model.d;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path);
    let mut x = crate::linalg::to_vec3(x0);
    let mut exit_time = None;
    let mut x_exit = None;
    let mut observations = Vec::with_capacity(obs.len());
    let mut next_obs = 0;
    while next_obs < obs.len() && obs[next_obs] <= 0.0 {
        observations.push(Observation { time: obs[next_obs], x, exited: false });
        next_obs += 1;
    }
    for w in grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let dt = t1 - t0;
        let a = model.a(&x[..d]);
        let b = model.b(&x[..d]);
        let l = a.cholesky().expect("A(x) positive definite").lower();
        let mut z = [0.0; MAX_DIM];
        for zi in z.iter_mut().take(d) {
            *zi = rng.sample(StandardNormal);
        }
        let u: f64 = rng.gen();
        let lz = l.mat_vec(&z);
        let xi0 = dom.signed_distance(&x[..d]);
        let mut xn = x;
        for i in 0..d {
            xn[i] = x[i] + b[i] * dt + dt.sqrt() * lz[i];
        }
        if exit_time.is_none() {
            let xi1 = dom.signed_distance(&xn[..d]);
            let mut crossed = xi1 <= 0.0;
            if !crossed && cfg.bridge_correction && xi0 > 0.0 {
                let var = a.bilinear(&dom.gamma, &dom.gamma);
                let p = (-2.0 * xi0 * xi1 / (var * dt)).exp();
                crossed = u < p;
            }
            if crossed {
                exit_time = Some(t1);
                let mut xb = xn;
                for i in 0..d {
                    xb[i] -= xi1 * dom.gamma[i];
                }
                x_exit = Some(xb);
            }
        }
        x = xn;
        while next_obs < obs.len() && (obs[next_obs] - t1).abs() < 1e-14 {
            observations.push(Observation { time: t1, x, exited: exit_time.is_some() });
            next_obs += 1;
        }
    }
    PathRecord { exit_time, x_exit, x_t: x, observations }
}

fn sample<F: Fn(&PathRecord) -> f64 + Sync + Send>(ens: &PathEnsemble, f: F) -> Vec<f64> {
    ens.paths.par_iter().map(f).collect()
}

pub fn knock_out_samples(ens: &PathEnsemble, f: &PayoffFunction, disc: f64) -> Vec<f64> {
    let d = ens.d;
    sample(ens, |p| if p.exited() { 0.0 } else { disc * f.eval(&p.x_t[..d]) })
}

pub fn price_knock_out(
    f: &PayoffFunction,
    model: &DiffusionModel,
    dom: &HalfSpaceDomain,
    x0: &[f64],
    horizon: f64,
    r: f64,
    cfg: &PathConfig,
) -> Result<MCEstimate> {
    let ens = simulate_paths(model, dom, x0, horizon, cfg, &[])?;
    Ok(MCEstimate::from_samples(&knock_out_samples(&ens, f, (-r * horizon).exp())))
}

pub fn price_knock_in(
    f: &PayoffFunction,
    model: &DiffusionModel,
    dom: &HalfSpaceDomain,
    x0: &[f64],
    horizon: f64,
    r: f64,
    cfg: &PathConfig,
) -> Result<MCEstimate> {
    let ens = simulate_paths(model, dom, x0, horizon, cfg, &[])?;
    let disc = (-r * horizon).exp();
    let d = ens.d;
    Ok(MCEstimate::from_samples(&sample(&ens, |p| if p.exited() { disc * f.eval(&p.x_t[..d]) } else { 0.0 })))
}

/// `e^{−rT} E[g(X_T)]` without barrier monitoring.
pub fn price_plain<G: Fn(&[f64]) -> f64 + Sync>(
    g: G,
    model: &DiffusionModel,
    x0: &[f64],
    horizon: f64,
    r: f64,
    cfg: &PathConfig,
) -> Result<MCEstimate> {
    // Any half-space containing x0 works: the barrier is ignored.
    let mut gamma = vec![0.0; model.d];
    gamma[0] = 1.0;
    let dom = HalfSpaceDomain::new(gamma, x0[0] - 1.0)?;
    let ens = simulate_paths(model, &dom, x0, horizon, cfg, &[])?;
    let disc = (-r * horizon).exp();
    let d = ens.d;
    Ok(MCEstimate::from_samples(&sample(&ens, |p| disc * g(&p.x_t[..d]))))
}

/// `E[1{τ<T} π(f)(X_T)]`
pub fn error_lhs_samples(ens: &PathEnsemble, f: &PayoffFunction, dom: &HalfSpaceDomain) -> Vec<f64> {
    let d = ens.d;
    sample(ens, |p| if p.exited() { project_pi(f, dom, &p.x_t[..d]) } else { 0.0 })
}

pub fn error_lhs_mc(
    f: &PayoffFunction,
    model: &DiffusionModel,
    dom: &HalfSpaceDomain,
    x0: &[f64],
    horizon: f64,
    cfg: &PathConfig,
) -> Result<MCEstimate> {
    let ens = simulate_paths(model, dom, x0, horizon, cfg, &[])?;
    Ok(MCEstimate::from_samples(&error_lhs_samples(&ens, f, dom)))
}

/// Range of the normal coordinate that paths can plausibly reach.
fn reach(model: &DiffusionModel, dom: &HalfSpaceDomain, x0: &[f64], horizon: f64) -> (f64, f64) {
    let xi0 = dom.signed_distance(x0);
    let w = 9.0 * (model.big_m * horizon).sqrt() + model.b_inf * horizon;
    (xi0 - w, xi0 + w)
}

/// Pathwise `∫₀ᵀ 1{τ<s} G(s, X_s) ds` (or with `π⊥` in place of the
/// indicator) over the time rule `nodes`.
fn time_functional(
    ens: &PathEnsemble,
    dom: &HalfSpaceDomain,
    nodes: &[(f64, f64)],
    evals: &[PointEvaluator<'_, '_>],
    killed_only: bool,
) -> Vec<f64> {
    let d = ens.d;
    ens.paths
        .par_iter()
        .map(|p| {
            let mut acc = 0.0;
            for (i, &(s, w)) in nodes.iter().enumerate() {
                let o = p
                    .observations
                    .iter()
                    .find(|o| (o.time - s).abs() < 1e-14)
                    .expect("observation at quadrature node");
                let v = if killed_only {
                    if o.exited {
                        evals[i].eval(dom, &o.x[..d])
                    } else {
                        0.0
                    }
                } else {
                    evals[i].eval_pi_perp(dom, &o.x[..d])
                };
                acc += w * v;
            }
            acc
        })
        .collect()
}

fn interior_nodes(quad: &QuadratureScheme, horizon: f64) -> Vec<(f64, f64)> {
    quad.time_rule(0.0, horizon).into_iter().filter(|(s, _)| *s > 0.0 && *s < horizon).collect()
}

/// `∫₀ᵀ E[1{τ<s} S_{T−s} f(X_s)] ds`
pub fn error_rhs_quadmc(
    f: &PayoffFunction,
    eng: &HedgeEngine<'_>,
    x0: &[f64],
    cfg: &PathConfig,
) -> Result<MCEstimate> {
    let (model, dom) = (&eng.kern.model, &eng.kern.dom);
    let horizon = eng.horizon;
    let nodes = interior_nodes(&eng.quad, horizon);
    let times: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let ens = simulate_paths(model, dom, x0, horizon, cfg, &times)?;
    let _ = f;
    let (lo, hi) = reach(model, dom, x0, horizon);
    let evals = nodes.iter().map(|(s, _)| eng.evaluator(1, horizon - s, lo, hi)).collect::<Result<Vec<_>>>()?;
    Ok(MCEstimate::from_samples(&time_functional(&ens, dom, &nodes, &evals, true)))
}

/// Both sides of the first-order error identity on common paths.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorIdentity {
    pub lhs: MCEstimate,
    pub rhs: MCEstimate,
    /// Pathwise difference (common random numbers).
    pub difference: MCEstimate,
}

pub fn error_identity(eng: &HedgeEngine<'_>, x0: &[f64], cfg: &PathConfig) -> Result<ErrorIdentity> {
    let (model, dom) = (&eng.kern.model, &eng.kern.dom);
    let horizon = eng.horizon;
    let nodes = interior_nodes(&eng.quad, horizon);
    let times: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let ens = simulate_paths(model, dom, x0, horizon, cfg, &times)?;
    let (lo, hi) = reach(model, dom, x0, horizon);
    let evals = nodes.iter().map(|(s, _)| eng.evaluator(1, horizon - s, lo, hi)).collect::<Result<Vec<_>>>()?;
    let l = error_lhs_samples(&ens, &eng.f, dom);
    let r = time_functional(&ens, dom, &nodes, &evals, true);
    let diff: Vec<f64> = l.iter().zip(&r).map(|(a, b)| a - b).collect();
    Ok(ErrorIdentity {
        lhs: MCEstimate::from_samples(&l),
        rhs: MCEstimate::from_samples(&r),
        difference: MCEstimate::from_samples(&diff),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HedgeReport {
    pub n_max: usize,
    pub knock_out: MCEstimate,
    pub plain: MCEstimate,
    /// `orders[h−1]`: value of the order-`h` hedge family.
    pub orders: Vec<MCEstimate>,
    /// `residuals[n−1]`: `∫∫ E[1{τ≤u} S_{s−u} S*ⁿ_{T−s} f(X_u)] ds du`.
    pub residuals: Vec<MCEstimate>,
    pub error_lhs: MCEstimate,
    /// `plain − Σ orders − knock_out − residual(n_max)`, pathwise.
    pub defect: MCEstimate,
    pub discount: f64,
}

/// Values every term of the order-`n_max` hedge on common paths.
pub fn hedge_ledger(eng: &HedgeEngine<'_>, n_max: usize, x0: &[f64], r: f64, cfg: &PathConfig) -> Result<HedgeReport> {
    if n_max == 0 || n_max > eng.levels() {
        return Err(Error::config("order", format!("n_max = {n_max} needs {n_max} tabulated levels, have {}", eng.levels())));
    }
    let (model, dom) = (&eng.kern.model, &eng.kern.dom);
    let horizon = eng.horizon;
    let d = model.d;
    let nodes = interior_nodes(&eng.quad, horizon);
    let times: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let ens = simulate_paths(model, dom, x0, horizon, cfg, &times)?;
    let (lo, hi) = reach(model, dom, x0, horizon);
    let disc = (-r * horizon).exp();
    // evals[j−1][i] evaluates S*ʲ_{T−u_i} f.
    let mut evals = Vec::new();
    for j in 1..=n_max + 1 {
        evals.push(nodes.iter().map(|(u, _)| eng.evaluator(j, horizon - u, lo, hi)).collect::<Result<Vec<_>>>()?);
    }
    let scale = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| disc * x).collect() };
    let plain = scale(sample(&ens, |p| project_pi(&eng.f, dom, &p.x_t[..d])));
    let ko = knock_out_samples(&ens, &eng.f, disc);
    let lhs = scale(error_lhs_samples(&ens, &eng.f, dom));
    let orders: Vec<Vec<f64>> = (1..=n_max).map(|h| scale(time_functional(&ens, dom, &nodes, &evals[h - 1], false))).collect();
    let residuals: Vec<Vec<f64>> = (1..=n_max).map(|n| scale(time_functional(&ens, dom, &nodes, &evals[n], true))).collect();
    let defect: Vec<f64> = (0..ens.paths.len())
        .map(|i| {
            let hedged: f64 = orders.iter().map(|o| o[i]).sum();
            plain[i] - hedged - ko[i] - residuals[n_max - 1][i]
        })
        .collect();
    Ok(HedgeReport {
        n_max,
        knock_out: MCEstimate::from_samples(&ko),
        plain: MCEstimate::from_samples(&plain),
        orders: orders.iter().map(|o| MCEstimate::from_samples(o)).collect(),
        residuals: residuals.iter().map(|o| MCEstimate::from_samples(o)).collect(),
        error_lhs: MCEstimate::from_samples(&lhs),
        defect: MCEstimate::from_samples(&defect),
        discount: disc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> PathConfig {
        PathConfig { n_paths: n, n_steps: 64, seed: 11, ..Default::default() }
    }

    #[test]
    fn config_limits() {
        assert!(PathConfig { n_paths: 99, ..Default::default() }.validate().is_err());
        assert!(PathConfig { n_steps: 8, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn start_outside_domain_rejected() {
        let m = DiffusionModel::brownian(1);
        let dom = HalfSpaceDomain::axis(1, 0.0);
        assert!(simulate_paths(&m, &dom, &[-0.1], 1.0, &cfg(100), &[]).is_err());
    }

    #[test]
    fn constant_plain_payoff_is_discounted_constant() {
        let m = DiffusionModel::brownian(1);
        let e = price_plain(|_| 3.0, &m, &[1.0], 2.0, 0.05, &cfg(200)).unwrap();
        assert!((e.mean - 3.0 * (-0.1f64).exp()).abs() < 1e-14 && e.std_error < 1e-14);
    }

    #[test]
    fn knock_in_plus_knock_out_is_plain() {
        let m = DiffusionModel::constant(crate::linalg::Mat::identity(1), &[0.1]).unwrap();
        let dom = HalfSpaceDomain::axis(1, 0.0);
        let f = PayoffFunction::capped_call(&dom, 0.5, 3.0).unwrap();
        let c = cfg(500);
        let ko = price_knock_out(&f, &m, &dom, &[1.0], 1.0, 0.0, &c).unwrap();
        let ki = price_knock_in(&f, &m, &dom, &[1.0], 1.0, 0.0, &c).unwrap();
        let ens = simulate_paths(&m, &dom, &[1.0], 1.0, &c, &[]).unwrap();
        let plain: Vec<f64> = ens.paths.iter().map(|p| f.eval(&p.x_t[..1])).collect();
        let pl = MCEstimate::from_samples(&plain);
        assert!((ko.mean + ki.mean - pl.mean).abs() < 1e-12);
    }

    #[test]
    fn exit_states_sit_on_boundary() {
        let m = DiffusionModel::brownian(2);
        let dom = HalfSpaceDomain::axis(2, 0.0);
        let ens = simulate_paths(&m, &dom, &[0.5, 0.0], 1.0, &cfg(300), &[]).unwrap();
        for p in &ens.paths {
            if let Some(x) = p.x_exit {
                assert!(dom.signed_distance(&x[..2]).abs() < 1e-12);
            }
        }
    }
}
