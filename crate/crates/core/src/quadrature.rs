//! Quadrature rules: Gauss–Legendre, graded composite Gauss–Legendre,
//! the `s = t·sin²(πθ/2)` time substitution, and tanh-sinh for integrands
//! with algebraic endpoint singularities.

use std::f64::consts::PI;
use std::sync::OnceLock;

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureScheme {
    pub space_order: usize,
    pub time_order: usize,
    pub truncation_sigmas: f64,
    pub singularity_substitution: String,
    /// Ratio of the geometric ξ-grid used to tabulate iterated operators.
    pub grid_ratio: f64,
    /// Ratio of the geometric maturity grid of the tables.
    pub tau_ratio: f64,
    /// Transverse grid points per axis when the problem is not translation invariant.
    pub transverse_points: usize,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        QuadratureScheme {
            space_order: 48,
            time_order: 32,
            truncation_sigmas: 8.6,
            singularity_substitution: "sin2".to_string(),
            grid_ratio: 1.08,
            tau_ratio: 1.25,
            transverse_points: 17,
        }
    }
}

impl QuadratureScheme {
    /// Lighter rule for d ≥ 2 tabulations on a single core.
    pub fn coarse() -> Self {
        QuadratureScheme {
            space_order: 24,
            time_order: 16,
            grid_ratio: 1.15,
            tau_ratio: 1.5,
            transverse_points: 9,
            ..Default::default()
        }
    }

    pub fn refined(&self) -> Self {
        QuadratureScheme {
            space_order: self.space_order * 2,
            time_order: self.time_order * 2,
            grid_ratio: self.grid_ratio.sqrt(),
            tau_ratio: self.tau_ratio.sqrt(),
            ..self.clone()
        }
    }

    /// Time nodes and weights on `(a, b)`.
    pub fn time_rule(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        match self.singularity_substitution.as_str() {
            "none" => gl_interval(self.time_order, a, b),
            _ => sin2_rule(self.time_order, a, b),
        }
    }
}

fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn cache() -> &'static DashMap<usize, (Vec<f64>, Vec<f64>)> {
    static C: OnceLock<DashMap<usize, (Vec<f64>, Vec<f64>)>> = OnceLock::new();
    C.get_or_init(DashMap::new)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    if let Some(v) = cache().get(&n) {
        return v.clone();
    }
    let r = legendre_nodes(n);
    cache().insert(n, r.clone());
    r
}

pub fn gl_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(&w).map(|(xi, wi)| (c + h * xi, h * wi)).collect()
}

/// Composite rule on `[a, b]` with panels refined geometrically (ratio 4)
/// towards `a` down to width `finest`.
pub fn graded_interval(n_per_panel: usize, a: f64, b: f64, finest: f64) -> Vec<(f64, f64)> {
    let len = b - a;
    if len <= 0.0 {
        return Vec::new();
    }
    if !(finest > 0.0) || finest >= 0.25 * len {
        return gl_interval(n_per_panel.max(2), a, b);
    }
    let mut edges = vec![b];
    let mut w = len;
    while w > finest && edges.len() < 14 {
        w *= 0.25;
        edges.push(a + w);
    }
    edges.push(a);
    edges.reverse();
    let mut out = Vec::new();
    for p in edges.windows(2) {
        out.extend(gl_interval(n_per_panel, p[0], p[1]));
    }
    out
}

/// `∫_a^b g(s) ds` with `s = a + (b−a) sin²(πθ/2)`, θ ∈ (0,1): removes
/// inverse square-root singularities at both ends.
pub fn sin2_rule(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let len = b - a;
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| {
            let th = 0.5 * (xi + 1.0);
            let s = (0.5 * PI * th).sin();
            let c = (0.5 * PI * th).cos();
            // a + len sin², b − len cos²: use whichever is closer for accuracy.
            let node = if th < 0.5 { a + len * s * s } else { b - len * c * c };
            let jac = len * 0.5 * PI * (PI * th).sin() * 0.5;
            (node, wi * jac)
        })
        .collect()
}

/// Tanh-sinh quadrature on `(a, b)`. The integrand receives
/// `(u, u − a, b − u)` with both endpoint distances computed without
/// cancellation.
pub fn tanh_sinh<F: Fn(f64, f64, f64) -> f64>(f: F, a: f64, b: f64, level: u32) -> f64 {
    let h = 1.0 / (1u64 << level) as f64;
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    let mut k: i64 = 0;
    loop {
        let t = k as f64 * h;
        let sh = 0.5 * PI * t.sinh();
        let ch = 0.5 * PI * t.cosh();
        // 1 − tanh(sh) = 2 / (1 + e^{2 sh})
        let comp = 2.0 / (1.0 + (2.0 * sh).exp());
        let cosh_sh = sh.cosh();
        let w = ch / (cosh_sh * cosh_sh);
        if comp * half < 1e-300 || w < 1e-300 {
            break;
        }
        let dl = half * (2.0 - comp);
        let dr = half * comp;
        // right node: distance dr to b, dl to a
        let right = f(b - dr, dl, dr);
        let mut term = right;
        if k > 0 {
            term += f(a + dr, dr, dl);
        }
        let inc = w * term;
        sum += inc;
        if k > 8 && inc.abs() < 1e-18 * sum.abs() {
            break;
        }
        k += 1;
        if k > 40_000 {
            break;
        }
    }
    sum * h * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in [1usize, 2, 5, 16, 48] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((q - exact).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn sin2_handles_arcsine_weight() {
        let r = sin2_rule(16, 0.0, 2.0);
        let v: f64 = r.iter().map(|(s, w)| w / (s * (2.0 - s)).sqrt()).sum();
        assert!((v - PI).abs() < 1e-12);
    }

    #[test]
    fn tanh_sinh_beta_integral() {
        let v = tanh_sinh(|_, a, b| a.powf(-0.75) * b.powf(-0.75), 0.0, 1.0, 6);
        let exact = statrs::function::beta::beta(0.25, 0.25);
        assert!((v / exact - 1.0).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn graded_rule_integrates_near_singular_bump() {
        let eps: f64 = 1e-6;
        let r = graded_interval(12, 0.0, 1.0, eps);
        let v: f64 = r.iter().map(|(x, w)| w * (-(x / eps)).exp() / eps).sum();
        assert!((v - 1.0).abs() < 1e-8, "{v}");
    }
}
