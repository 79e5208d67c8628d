//! Coefficient families for `dX = b(X)dt + σ(X)dW`, `A = σσᵀ`, together with
//! the sampled checks of uniform ellipticity, Lipschitz continuity and the
//! boundary commutator defect δ.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::HalfSpaceDomain;
use crate::linalg::{norm, Mat, Vec3, MAX_DIM};

#[derive(Clone, Debug)]
pub struct GridModel {
    axes: Vec<Vec<f64>>,
    /// Row-major over the tensor grid, last axis fastest.
    a: Vec<Mat>,
    b: Vec<Vec3>,
}

impl GridModel {
    /// Reads rows `x_1..x_d, A (row-major, d²), b (d)` from a headerless CSV.
    pub fn from_csv(path: &Path, d: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
            let row = row.map_err(|e| Error::ModelDefinition(format!("grid csv: {e}")))?;
            if row.len() != d + d * d + d {
                return Err(Error::ModelDefinition(format!(
                    "grid csv row has {} columns, expected {}",
                    row.len(),
                    d + d * d + d
                )));
            }
            rows.push(row);
        }
        GridModel::from_rows(&rows, d)
    }

    pub fn from_rows(rows: &[Vec<f64>], d: usize) -> Result<Self> {
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); d];
        for r in rows {
            for i in 0..d {
                axes[i].push(r[i]);
            }
        }
        for ax in axes.iter_mut() {
            ax.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ax.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            if ax.len() < 2 {
                return Err(Error::ModelDefinition("grid needs at least two nodes per axis".into()));
            }
        }
        let total: usize = axes.iter().map(|a| a.len()).product();
        if total != rows.len() {
            return Err(Error::ModelDefinition(format!(
                "grid has {} rows but the tensor grid needs {total}",
                rows.len()
            )));
        }
        let mut a = vec![Mat::zeros(d); total];
        let mut b = vec![[0.0; MAX_DIM]; total];
        let mut seen = vec![false; total];
        for r in rows {
            let mut idx = 0;
            for i in 0..d {
                let p = axes[i].iter().position(|v| (v - r[i]).abs() < 1e-12).unwrap();
                idx = idx * axes[i].len() + p;
            }
            seen[idx] = true;
            let mut m = Mat::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    m.a[i][j] = r[d + i * d + j];
                }
            }
            a[idx] = m;
            for i in 0..d {
                b[idx][i] = r[d + d * d + i];
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::ModelDefinition("grid has duplicate nodes".into()));
        }
        Ok(GridModel { axes, a, b })
    }

    fn interp(&self, x: &[f64]) -> (Mat, Vec3) {
        let d = self.axes.len();
        let mut lo = [0usize; MAX_DIM];
        let mut fr = [0.0; MAX_DIM];
        for i in 0..d {
            let ax = &self.axes[i];
            let xi = x[i].clamp(ax[0], ax[ax.len() - 1]);
            let mut j = ax.partition_point(|v| *v <= xi).saturating_sub(1);
            if j >= ax.len() - 1 {
                j = ax.len() - 2;
            }
            lo[i] = j;
            fr[i] = (xi - ax[j]) / (ax[j + 1] - ax[j]);
        }
        let mut am = Mat::zeros(d);
        let mut bv = [0.0; MAX_DIM];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0;
            for i in 0..d {
                let bit = (corner >> i) & 1;
                w *= if bit == 1 { fr[i] } else { 1.0 - fr[i] };
                idx = idx * self.axes[i].len() + lo[i] + bit;
            }
            if w == 0.0 {
                continue;
            }
            am = am.add(&self.a[idx].scale(w));
            for i in 0..d {
                bv[i] += w * self.b[idx][i];
            }
        }
        (am, bv)
    }
}

#[derive(Clone, Debug)]
pub enum ModelFamily {
    Constant { a: Mat, b: Vec3 },
    /// `A = diag(1 + amp·sin²x₁, 1, …)`
    DiagonalSine { amp: f64, b: Vec3 },
    /// One-dimensional `A(x) = base + amp·tanh(x)`.
    Tanh1d { base: f64, amp: f64, b: f64 },
    Grid(GridModel),
}

#[derive(Clone, Debug)]
pub struct DiffusionModel {
    pub name: String,
    pub family: ModelFamily,
    pub d: usize,
    pub m: f64,
    pub big_m: f64,
    pub a_inf: f64,
    /// `sup_x |b(x)|` (Euclidean norm).
    pub b_inf: f64,
    pub m0: f64,
    pub cq: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelReport {
    pub delta: f64,
    pub ellipticity_ok: bool,
    pub sampled_min_eig: f64,
    pub sampled_max_eig: f64,
    pub sample_count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub estimate: f64,
    pub declared: f64,
    pub ok: bool,
}

/// Axis-aligned sampling cube.
#[derive(Clone, Debug)]
pub struct SamplingBox {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl SamplingBox {
    pub fn around(x0: &[f64], model: &DiffusionModel, horizon: f64) -> Self {
        SamplingBox { center: x0.to_vec(), half_width: 6.0 * (model.big_m * horizon).sqrt() }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        let mut x = [0.0; MAX_DIM];
        for (i, c) in self.center.iter().enumerate() {
            x[i] = c + self.half_width * (2.0 * rng.gen::<f64>() - 1.0);
        }
        x
    }
}

fn vec3(b: &[f64]) -> Vec3 {
    let mut r = [0.0; MAX_DIM];
    r[..b.len()].copy_from_slice(b);
    r
}

impl DiffusionModel {
    /// Constant coefficients; `m`, `M` from the spectrum of `a`, `a_inf = 0`.
    pub fn constant(a: Mat, b: &[f64]) -> Result<Self> {
        if b.len() != a.d {
            return Err(Error::DimensionMismatch { expected: a.d, got: b.len() });
        }
        if a.asymmetry() > 1e-10 {
            return Err(Error::ModelDefinition("A is not symmetric".into()));
        }
        let ev = a.sym_eigenvalues();
        if ev[0] <= 0.0 {
            return Err(Error::ModelDefinition("A is not positive definite".into()));
        }
        let mut model = DiffusionModel {
            name: "constant".into(),
            family: ModelFamily::Constant { a, b: vec3(b) },
            d: a.d,
            m: ev[0],
            big_m: ev[a.d - 1],
            a_inf: 0.0,
            b_inf: norm(b),
            m0: 1.05 * ev[a.d - 1],
            cq: 0.0,
        };
        model.cq = calibrate_cq(&model, 1.0, &SamplingBox { center: vec![0.0; a.d], half_width: 1.0 });
        Ok(model)
    }

    pub fn brownian(d: usize) -> Self {
        let mut m = DiffusionModel::constant(Mat::identity(d), &vec![0.0; d]).expect("identity");
        m.name = "brownian".into();
        m
    }

    /// `A = [[1, c], [c, 1]]`; with `γ = e₁` the boundary commutator has norm `√2|c|`.
    pub fn rotated_constant(c: f64, b: &[f64]) -> Result<Self> {
        if !(c.abs() < 1.0) {
            return Err(Error::ModelDefinition("rotated_constant needs |c| < 1".into()));
        }
        let a = Mat::from_rows(&[vec![1.0, c], vec![c, 1.0]]).unwrap();
        let mut m = DiffusionModel::constant(a, b)?;
        m.name = "rotated_constant".into();
        Ok(m)
    }

    pub fn diagonal_sine(d: usize, amp: f64, b: &[f64]) -> Result<Self> {
        if !(amp >= 0.0) || b.len() != d || d == 0 || d > MAX_DIM {
            return Err(Error::ModelDefinition("diagonal_sine needs amp ≥ 0 and len(b) = d".into()));
        }
        let mut model = DiffusionModel {
            name: "diagonal_sine".into(),
            family: ModelFamily::DiagonalSine { amp, b: vec3(b) },
            d,
            m: 1.0,
            big_m: 1.0 + amp,
            a_inf: amp,
            b_inf: norm(b),
            m0: 1.05 * (1.0 + amp),
            cq: 0.0,
        };
        model.cq = calibrate_cq(&model, 1.0, &SamplingBox { center: vec![0.0; d], half_width: 2.0 });
        Ok(model)
    }

    pub fn tanh1d(base: f64, amp: f64, b: f64) -> Result<Self> {
        if !(base > amp.abs()) {
            return Err(Error::ModelDefinition("tanh1d needs base > |amp|".into()));
        }
        let mut model = DiffusionModel {
            name: "tanh1d".into(),
            family: ModelFamily::Tanh1d { base, amp, b },
            d: 1,
            m: base - amp.abs(),
            big_m: base + amp.abs(),
            a_inf: amp.abs(),
            b_inf: b.abs(),
            m0: 1.05 * (base + amp.abs()),
            cq: 0.0,
        };
        model.cq = calibrate_cq(&model, 1.0, &SamplingBox { center: vec![0.0], half_width: 4.0 });
        Ok(model)
    }

    /// Tabulated coefficients; the model constants are declarations.
    pub fn grid(grid: GridModel, m: f64, big_m: f64, a_inf: f64, b_inf: f64) -> Result<Self> {
        let d = grid.axes.len();
        if !(m > 0.0 && big_m >= m) {
            return Err(Error::ModelDefinition("grid model needs 0 < m ≤ M".into()));
        }
        let center: Vec<f64> = grid.axes.iter().map(|a| 0.5 * (a[0] + a[a.len() - 1])).collect();
        let mut model = DiffusionModel {
            name: "grid".into(),
            family: ModelFamily::Grid(grid),
            d,
            m,
            big_m,
            a_inf,
            b_inf,
            m0: 1.05 * big_m,
            cq: 0.0,
        };
        model.cq = calibrate_cq(&model, 1.0, &SamplingBox { center, half_width: 1.0 });
        Ok(model)
    }

    #[inline]
    pub fn a(&self, x: &[f64]) -> Mat {
        match &self.family {
            ModelFamily::Constant { a, .. } => *a,
            ModelFamily::DiagonalSine { amp, .. } => {
                let mut m = Mat::identity(self.d);
                let s = x[0].sin();
                m.a[0][0] = 1.0 + amp * s * s;
                m
            }
            ModelFamily::Tanh1d { base, amp, .. } => Mat::diag(&[base + amp * x[0].tanh()]),
            ModelFamily::Grid(g) => g.interp(x).0,
        }
    }

    #[inline]
    pub fn b(&self, x: &[f64]) -> Vec3 {
        match &self.family {
            ModelFamily::Constant { b, .. } | ModelFamily::DiagonalSine { b, .. } => *b,
            ModelFamily::Tanh1d { b, .. } => [*b, 0.0, 0.0],
            ModelFamily::Grid(g) => g.interp(x).1,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.family, ModelFamily::Constant { .. })
    }

    pub fn has_zero_drift(&self) -> bool {
        match &self.family {
            ModelFamily::Constant { b, .. } | ModelFamily::DiagonalSine { b, .. } => b.iter().all(|v| *v == 0.0),
            ModelFamily::Tanh1d { b, .. } => *b == 0.0,
            ModelFamily::Grid(g) => g.b.iter().all(|v| v.iter().all(|c| *c == 0.0)),
        }
    }

    /// True when the coefficients are invariant under translations parallel to ∂D.
    pub fn transverse_invariant(&self, dom: &HalfSpaceDomain) -> bool {
        if self.d == 1 {
            return true;
        }
        match &self.family {
            ModelFamily::Constant { .. } => true,
            ModelFamily::DiagonalSine { amp, .. } => *amp == 0.0 || (dom.gamma[0].abs() - 1.0).abs() < 1e-14,
            _ => false,
        }
    }

    /// Overrides the declared constants.
    pub fn with_constants(
        mut self,
        m: Option<f64>,
        big_m: Option<f64>,
        a_inf: Option<f64>,
        b_inf: Option<f64>,
        m0: Option<f64>,
        cq: Option<f64>,
    ) -> Result<Self> {
        if let Some(v) = m {
            self.m = v;
        }
        if let Some(v) = big_m {
            self.big_m = v;
            self.m0 = 1.05 * v;
        }
        if let Some(v) = a_inf {
            self.a_inf = v;
        }
        if let Some(v) = b_inf {
            self.b_inf = v;
        }
        if let Some(v) = m0 {
            self.m0 = v;
        }
        if !(self.m0 > self.big_m) {
            return Err(Error::ModelDefinition(format!("M0 = {} must exceed M = {}", self.m0, self.big_m)));
        }
        if let Some(v) = cq {
            if !(v > 0.0) {
                return Err(Error::ModelDefinition("Cq must be positive".into()));
            }
            self.cq = v;
        }
        Ok(self)
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(())
    }
}

/// `Ã(y) = A(y)` on `D`, `Ψ A(θy) Ψ` off `D`.
pub fn symmetrize_a(model: &DiffusionModel, dom: &HalfSpaceDomain, y: &[f64]) -> Mat {
    if dom.contains(y) {
        model.a(y)
    } else {
        let r = dom.reflect3(y);
        dom.conjugate(&model.a(&r[..dom.d]))
    }
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn validate_ellipticity(model: &DiffusionModel, n_samples: usize, seed: u64, bx: &SamplingBox) -> Result<ModelReport> {
    if n_samples == 0 {
        return Err(Error::Precondition("n_samples must be ≥ 1".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n_samples {
        let mut rng = sample_rng(seed, i as u64);
        let x = bx.sample(&mut rng);
        let a = model.a(&x[..model.d]);
        if a.asymmetry() > 1e-10 {
            return Err(Error::ModelDefinition(format!("A(x) not symmetric at {:?}", &x[..model.d])));
        }
        let ev = a.sym_eigenvalues();
        lo = lo.min(ev[0]);
        hi = hi.max(ev[model.d - 1]);
    }
    let tol = 1e-12 * model.big_m.max(1.0);
    Ok(ModelReport {
        delta: f64::NAN,
        ellipticity_ok: lo >= model.m - tol && hi <= model.big_m + tol,
        sampled_min_eig: lo,
        sampled_max_eig: hi,
        sample_count: n_samples,
    })
}

fn commutator_norm(a: &Mat, gg: &Mat) -> f64 {
    a.mul(gg).sub(&gg.mul(a)).frobenius()
}

/// `2 max ‖A(x)γγᵀ − γγᵀA(x)‖_F` over sampled boundary points (exact for
/// constant coefficients).
pub fn commutator_defect(model: &DiffusionModel, dom: &HalfSpaceDomain, n_boundary_samples: usize, seed: u64, bx: &SamplingBox) -> f64 {
    let gg = Mat::outer(&dom.gamma, &dom.gamma);
    if let ModelFamily::Constant { a, .. } = &model.family {
        return 2.0 * commutator_norm(a, &gg);
    }
    let c = dom.to_frame(&bx.center);
    let mut best: f64 = 0.0;
    for i in 0..n_boundary_samples.max(1) {
        let mut rng = sample_rng(seed, i as u64);
        let mut f = [0.0; MAX_DIM];
        for j in 1..dom.d {
            f[j] = c[j] + bx.half_width * (2.0 * rng.gen::<f64>() - 1.0);
        }
        let x = dom.from_frame(&f);
        best = best.max(commutator_norm(&model.a(&x[..dom.d]), &gg));
    }
    2.0 * best
}

/// Full model report: ellipticity plus δ.
pub fn model_report(model: &DiffusionModel, dom: &HalfSpaceDomain, n_samples: usize, seed: u64, bx: &SamplingBox) -> Result<ModelReport> {
    let mut r = validate_ellipticity(model, n_samples, seed, bx)?;
    r.delta = commutator_defect(model, dom, n_samples, seed ^ 0x5eed, bx);
    Ok(r)
}

/// Largest sampled `‖A(x) − A(y)‖_F / |x − y|`.
pub fn lipschitz_estimate(model: &DiffusionModel, n_pairs: usize, seed: u64, bx: &SamplingBox) -> LipschitzReport {
    let d = model.d;
    let mut est: f64 = 0.0;
    for i in 0..n_pairs.max(1) {
        let mut rng = sample_rng(seed, i as u64);
        let x = bx.sample(&mut rng);
        let scale = bx.half_width * 10f64.powf(-3.0 * rng.gen::<f64>());
        let mut y = x;
        for j in 0..d {
            y[j] += scale * (2.0 * rng.gen::<f64>() - 1.0);
        }
        let dx = crate::linalg::dist(&x[..d], &y[..d]);
        if dx > 0.0 {
            est = est.max(model.a(&x[..d]).sub(&model.a(&y[..d])).frobenius() / dx);
        }
    }
    LipschitzReport { estimate: est, declared: model.a_inf, ok: est <= model.a_inf * (1.0 + 1e-6) + 1e-15 }
}

/// Largest sampled `‖A(x) − Ã(y)‖_F − a_inf |x − y|` over `x ∈ D`, `y ∉ D`;
/// non-positive up to δ when the discontinuity estimate holds.
pub fn commutator_excess(model: &DiffusionModel, dom: &HalfSpaceDomain, delta: f64, n: usize, seed: u64, bx: &SamplingBox) -> f64 {
    let d = model.d;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let mut rng = sample_rng(seed, i as u64);
        let mut x = bx.sample(&mut rng);
        let mut y = bx.sample(&mut rng);
        if !dom.contains(&x[..d]) {
            x = dom.reflect3(&x[..d]);
        }
        if dom.contains(&y[..d]) {
            y = dom.reflect3(&y[..d]);
        }
        if !dom.contains(&x[..d]) || dom.contains(&y[..d]) {
            continue;
        }
        let lhs = model.a(&x[..d]).sub(&symmetrize_a(model, dom, &y[..d])).frobenius();
        let rhs = model.a_inf * crate::linalg::dist(&x[..d], &y[..d]) + delta;
        worst = worst.max(lhs - rhs);
    }
    worst
}

/// Calibrates `C_q` so that the frozen-coefficient Gaussian reference obeys
/// `q_t ≤ C_q t^{-d/2} e^{-|x−y|²/4M₀t}` and the matching gradient bound for
/// `t ≤ horizon`. Frozen matrices are sampled from the box.
pub fn calibrate_cq(model: &DiffusionModel, horizon: f64, bx: &SamplingBox) -> f64 {
    let d = model.d;
    let mut frozen: Vec<(Mat, Vec3)> = Vec::new();
    if model.is_constant() {
        frozen.push((model.a(&bx.center), model.b(&bx.center)));
    } else {
        for i in 0..32 {
            let mut rng = sample_rng(0xc0ffee, i);
            let x = bx.sample(&mut rng);
            frozen.push((model.a(&x[..d]), model.b(&x[..d])));
        }
    }
    let dirs = directions(d);
    let mut best: f64 = 0.0;
    for (a, b) in &frozen {
        let chol = match a.cholesky() {
            Some(c) => c,
            None => continue,
        };
        let inv = chol.inverse();
        let det = chol.det();
        for it in 0..48 {
            let t = horizon * 10f64.powf(-6.0 + 6.0 * it as f64 / 47.0);
            for dir in &dirs {
                for ir in 0..=240 {
                    let r = (ir as f64) * 0.1 * (model.big_m * t).sqrt();
                    let mut v = [0.0; MAX_DIM];
                    let mut w = [0.0; MAX_DIM];
                    for j in 0..d {
                        v[j] = r * dir[j];
                        w[j] = v[j] - t * b[j];
                    }
                    let quad = inv.bilinear(&w, &w);
                    // log of q · t^{d/2} · e^{|v|²/4M₀t}
                    let lq = -0.5 * quad / t - 0.5 * (d as f64) * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln()
                        + r * r / (4.0 * model.m0 * t);
                    let g = inv.mat_vec(&w);
                    let gn = norm(&g[..d]) / t.sqrt();
                    let r1 = lq.exp();
                    best = best.max(r1).max(r1 * gn);
                }
            }
        }
    }
    best * 1.01
}

fn directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..24)
            .map(|i| {
                let a = std::f64::consts::PI * i as f64 / 12.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut v = Vec::new();
            for i in 0..12 {
                let th = std::f64::consts::PI * (i as f64 + 0.5) / 12.0;
                for j in 0..24 {
                    let ph = std::f64::consts::PI * j as f64 / 12.0;
                    v.push(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
                }
            }
            v
        }
    }
}
