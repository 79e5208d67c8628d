//! Experiment orchestration: dispatch on the configured experiment, collect
//! one record per named check and write `report.json`, `constants.json`
//! and the CSV artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds_ledger::{
    beta_chain_check, check_h0_bound, check_kernel_envelopes, compute_constants, det_sweep, gamma_power_check,
    nth_bound_check, CheckReport, ConstantsTable,
};
use crate::config::{Experiment, RunConfig};
use crate::diffusion_models::{lipschitz_estimate, model_report, DiffusionModel, ModelReport, SamplingBox};
use crate::error::{Error, Result};
use crate::geometry::{project_pi, project_pi_perp, HalfSpaceDomain, PayoffFunction};
use crate::hedge_operators::{build_hedge_terms, export_hedge_csv, HedgeEngine, HedgeTerm};
use crate::kernels::KernelEval;
use crate::simulation::{
    error_identity, hedge_ledger, knock_out_samples, simulate_paths, MCEstimate, PathConfig,
};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Confidence multiplier for Monte Carlo comparisons.
pub const K_SE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    /// The check ran and its tolerance was exceeded.
    Tolerance,
    /// The check could not be evaluated.
    Error,
    Skipped,
    /// Informational record without a pass criterion.
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub name: String,
    pub anchor: String,
    pub status: Status,
    pub detail: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config_hash: String,
    pub experiment: String,
    pub config: RunConfig,
    pub records: Vec<Record>,
}

impl RunReport {
    /// 0 on success, 2 when a check exceeded its tolerance, 1 when a check errored.
    pub fn exit_code(&self) -> i32 {
        if self.records.iter().any(|r| r.status == Status::Error) {
            1
        } else if self.records.iter().any(|r| r.status == Status::Tolerance) {
            2
        } else {
            0
        }
    }
}

/// Wall-clock timings, kept out of `report.json` so that file is reproducible.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub records: Vec<(String, f64)>,
}

struct Ctx {
    cfg: RunConfig,
    model: DiffusionModel,
    dom: HalfSpaceDomain,
    f: PayoffFunction,
    kern: KernelEval,
    report: ModelReport,
    consts: ConstantsTable,
    records: Vec<Record>,
    timing: Timing,
    clock: Instant,
}

impl Ctx {
    fn push(&mut self, name: &str, anchor: &str, status: Status, detail: Value) {
        let now = self.clock.elapsed().as_secs_f64();
        let prev: f64 = self.timing.records.iter().map(|r| r.1).sum();
        self.timing.records.push((name.to_string(), now - prev));
        self.records.push(Record { name: name.into(), anchor: anchor.into(), status, detail });
    }

    fn push_check(&mut self, rep: &CheckReport) {
        let scale = self.cfg.checks.tolerance_scale;
        let status = if rep.evaluated == 0 {
            Status::Skipped
        } else if rep.violations > 0 || rep.max_rel_error > rep.tolerance * scale {
            Status::Tolerance
        } else {
            Status::Pass
        };
        let detail = serde_json::to_value(rep).expect("serializable report");
        self.push(&rep.name, &rep.anchor, status, detail);
    }

    fn push_result<T: Serialize>(&mut self, name: &str, anchor: &str, r: Result<(bool, T)>) {
        match r {
            Ok((ok, v)) => {
                let st = if ok { Status::Pass } else { Status::Tolerance };
                self.push(name, anchor, st, serde_json::to_value(v).expect("serializable"));
            }
            Err(e) => self.push(name, anchor, Status::Error, json!({ "error": e.to_string() })),
        }
    }

    fn seed(&self) -> u64 {
        self.cfg.montecarlo.seed
    }

    fn k_se(&self) -> f64 {
        K_SE * self.cfg.checks.tolerance_scale
    }
}

/// Loads the config, runs it and writes the artifacts into `out_dir`.
pub fn run(config_path: &Path, out_dir: &Path) -> Result<RunReport> {
    let cfg = RunConfig::from_path(config_path)?;
    run_config(cfg, out_dir)
}

pub fn run_config(cfg: RunConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let clock = Instant::now();
    let dom = cfg.build_domain()?;
    let model = cfg.build_model()?;
    let f = cfg.build_payoff(&dom)?;
    let kern = KernelEval::new(&model, &dom)?;
    let bx = SamplingBox::around(&cfg.x0, &model, cfg.horizon);
    let report = model_report(&model, &dom, cfg.checks.model_samples.max(1), cfg.montecarlo.seed, &bx)?;
    let consts = compute_constants(&model, report.delta, cfg.horizon)?;
    write_json(&out_dir.join("constants.json"), &consts)?;
    let mut ctx = Ctx {
        cfg,
        model,
        dom,
        f,
        kern,
        report,
        consts,
        records: Vec::new(),
        timing: Timing::default(),
        clock,
    };
    match ctx.cfg.experiment {
        Experiment::Verify => verify(&mut ctx, out_dir),
        Experiment::Price => price(&mut ctx),
        Experiment::Hedge => hedge(&mut ctx, out_dir)?,
        Experiment::Convergence => convergence(&mut ctx, out_dir)?,
        Experiment::Bounds => bounds(&mut ctx, out_dir)?,
    }
    let rep = RunReport {
        tool_version: TOOL_VERSION.into(),
        config_hash: ctx.cfg.hash(),
        experiment: ctx.cfg.experiment.name().into(),
        config: ctx.cfg.clone(),
        records: ctx.records,
    };
    write_json(&out_dir.join("report.json"), &rep)?;
    ctx.timing.total_seconds = ctx.clock.elapsed().as_secs_f64();
    write_json(&out_dir.join("timing.json"), &ctx.timing)?;
    Ok(rep)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn model_records(ctx: &mut Ctx) {
    let rep = ctx.report.clone();
    let ok = rep.ellipticity_ok;
    ctx.push(
        "ellipticity",
        "uniform-ellipticity",
        if ok { Status::Pass } else { Status::Tolerance },
        serde_json::to_value(&rep).expect("serializable"),
    );
    let bx = SamplingBox::around(&ctx.cfg.x0, &ctx.model, ctx.cfg.horizon);
    let lip = lipschitz_estimate(&ctx.model, ctx.cfg.checks.model_samples.max(1), ctx.seed(), &bx);
    let st = if lip.ok { Status::Pass } else { Status::Tolerance };
    ctx.push("lipschitz", "coefficient-lipschitz", st, serde_json::to_value(&lip).expect("serializable"));
}

fn constants_record(ctx: &mut Ctx) {
    let c = &ctx.consts;
    let detail = json!({
        "delta": c.delta,
        "c6": c.c6,
        "convergence_margin": c.convergence_margin,
        "convergent": c.convergent,
    });
    ctx.push("convergence_criterion", "delta-below-inverse-c6", Status::Info, detail);
}

/// `p_t(x,y) = p_t(x,θy)` for `x ∈ ∂D`.
fn symmetry_check(ctx: &Ctx) -> CheckReport {
    let mut rep = CheckReport::new("boundary_symmetry", "boundary-kernel-symmetry", 1e-12);
    let d = ctx.model.d;
    let horizon = ctx.cfg.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed() ^ 0x5eed);
    for _ in 0..ctx.cfg.checks.symmetry_samples {
        let t = horizon * 10f64.powf(rng.gen_range(-2.0..0.0));
        let mut c = [0.0; crate::linalg::MAX_DIM];
        for v in c.iter_mut().take(d).skip(1) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let x = ctx.dom.from_frame(&c);
        let y: Vec<f64> = (0..d).map(|j| x[j] + rng.gen_range(-1.5..1.5) * (horizon).sqrt()).collect();
        let ty = ctx.dom.reflect3(&y);
        let p = ctx.kern.p_raw(t, &x[..d], &y);
        let pr = ctx.kern.p_raw(t, &x[..d], &ty[..d]);
        rep.inequality((p - pr).abs(), 1e-12 * p);
    }
    rep
}

/// `π(f) + π⊥(f) = f` off the boundary.
fn projection_check(ctx: &Ctx) -> CheckReport {
    let mut rep = CheckReport::new("projection_decomposition", "payoff-projection-sum", 1e-12);
    let d = ctx.model.d;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed() ^ 0xfa11);
    let s = (ctx.model.big_m * ctx.cfg.horizon).sqrt();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..d).map(|j| ctx.cfg.x0[j] + rng.gen_range(-3.0..3.0) * s).collect();
        if ctx.dom.on_boundary(&x) {
            continue;
        }
        let lhs = project_pi(&ctx.f, &ctx.dom, &x) + project_pi_perp(&ctx.f, &ctx.dom, &x);
        let rhs = ctx.f.eval(&x);
        rep.inequality((lhs - rhs).abs(), 1e-12 * (1.0 + rhs.abs()));
    }
    rep
}

/// `(t, x)` grid for the `∫_D |h|` envelope and `(s, u, x, y)` grid for the
/// `q h₀` envelope, both built around `x₀`.
fn envelope_grids(ctx: &Ctx) -> (Vec<(f64, Vec<f64>)>, Vec<(f64, f64, Vec<f64>, Vec<f64>)>) {
    let d = ctx.model.d;
    let horizon = ctx.cfg.horizon;
    let s = (ctx.model.big_m * horizon).sqrt();
    let c0 = ctx.dom.to_frame(&ctx.cfg.x0);
    let at = |xi: f64, eta: f64| -> Vec<f64> {
        let mut c = c0;
        c[0] = xi;
        if d > 1 {
            c[1] += eta;
        }
        ctx.dom.from_frame(&c)[..d].to_vec()
    };
    let mut tx = Vec::new();
    for t in [0.01, 0.05, 0.1, 0.5, 1.0] {
        for xi in [-0.5, 0.1, 0.5, 1.5] {
            tx.push((t * horizon, at(xi * s, 0.2 * s)));
        }
    }
    let mut suxy = Vec::new();
    for sv in [0.05, 0.3] {
        for u in [0.05, 0.5] {
            for (a, b) in [(0.5, -0.3), (1.0, 0.4), (-0.2, -0.6)] {
                suxy.push((sv * horizon, u * horizon, at(a * s, 0.0), at(b * s, 0.3 * s)));
            }
        }
    }
    (tx, suxy)
}

fn parametrix_check(ctx: &Ctx) -> Result<(bool, Value)> {
    let d = ctx.model.d;
    let horizon = ctx.cfg.horizon;
    let s = (ctx.model.big_m * horizon).sqrt();
    let c0 = ctx.dom.to_frame(&ctx.cfg.x0);
    let at = |xi: f64, eta: f64| -> Vec<f64> {
        let mut c = c0;
        c[0] = xi;
        if d > 1 {
            c[1] += eta;
        }
        ctx.dom.from_frame(&c)[..d].to_vec()
    };
    let xs = [at(0.5 * s, 0.0), at(s, 0.3 * s), at(-0.4 * s, 0.1 * s)];
    let ys = [at(-0.25 * s, 0.1 * s), at(-0.75 * s, 0.2 * s), at(-0.5 * s, -0.3 * s)];
    let tol = 0.02 * ctx.cfg.checks.tolerance_scale;
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for t in [0.1, 0.5, 1.0] {
        for x in &xs {
            for y in &ys {
                let r = ctx.kern.parametrix_residual(t * horizon, x, y, &ctx.cfg.quadrature)?;
                worst = worst.max(r.relative());
                rows.push(json!({ "t": t * horizon, "x": x, "y": y, "q_minus_p": r.q - r.p, "residual": r.residual }));
            }
        }
    }
    Ok((worst <= tol, json!({ "max_relative_residual": worst, "tolerance": tol, "points": rows })))
}

fn verify(ctx: &mut Ctx, out_dir: &Path) {
    model_records(ctx);
    constants_record(ctx);
    let sym = symmetry_check(ctx);
    ctx.push_check(&sym);
    let proj = projection_check(ctx);
    ctx.push_check(&proj);
    match check_h0_bound(&ctx.model, &ctx.dom, &ctx.consts, ctx.cfg.checks.h0_samples, ctx.seed()) {
        Ok(r) => ctx.push_check(&r),
        Err(e) => ctx.push("h0_bound", "h0-gaussian-envelope", Status::Error, json!({ "error": e.to_string() })),
    }
    let (tx, suxy) = envelope_grids(ctx);
    match check_kernel_envelopes(&ctx.model, &ctx.dom, &ctx.consts, &tx, &suxy, &ctx.cfg.quadrature) {
        Ok((a, b)) => {
            ctx.push_check(&a);
            ctx.push_check(&b);
        }
        Err(e) => ctx.push("h_integral_bound", "h-integral-envelope", Status::Error, json!({ "error": e.to_string() })),
    }
    if ctx.model.is_constant() {
        let r = parametrix_check(ctx);
        ctx.push_result("parametrix_identity", "parametrix-expansion", r);
    } else {
        ctx.push("parametrix_identity", "parametrix-expansion", Status::Skipped, json!({ "notice": "reference density needs constant coefficients" }));
    }
    if ctx.cfg.checks.error_identity || ctx.cfg.checks.iterated_bound {
        engine_checks(ctx, out_dir);
    }
    appendix_checks(ctx);
}

fn engine_checks(ctx: &mut Ctx, _out_dir: &Path) {
    let eng = match HedgeEngine::build(&ctx.kern, &ctx.f, &ctx.cfg.quadrature, ctx.cfg.horizon, &ctx.cfg.x0, 1) {
        Ok(e) => e,
        Err(e) => {
            let err = json!({ "error": e.to_string() });
            ctx.records.push(Record { name: "tabulation".into(), anchor: "iterated-operator-table".into(), status: Status::Error, detail: err });
            return;
        }
    };
    let mut out: Vec<(String, &str, Status, Value)> = Vec::new();
    if ctx.cfg.checks.error_identity {
        let k = ctx.k_se();
        match error_identity(&eng, &ctx.cfg.x0, &ctx.cfg.montecarlo) {
            Ok(id) => {
                let se = (id.lhs.std_error.powi(2) + id.rhs.std_error.powi(2)).sqrt();
                let ok = (id.lhs.mean - id.rhs.mean).abs() <= k * se;
                let st = if ok { Status::Pass } else { Status::Tolerance };
                out.push(("error_identity".into(), "first-order-error-formula", st, json!({ "identity": id, "k_se": k })));
            }
            Err(e) => out.push(("error_identity".into(), "first-order-error-formula", Status::Error, json!({ "error": e.to_string() }))),
        }
    }
    if ctx.cfg.checks.iterated_bound {
        let points: Vec<Vec<f64>> = [0.1, 0.5, 1.0, 2.0]
            .iter()
            .map(|v| {
                let mut c = ctx.dom.to_frame(&ctx.cfg.x0);
                c[0] = v * (ctx.model.big_m * ctx.cfg.horizon).sqrt();
                ctx.dom.from_frame(&c)[..ctx.model.d].to_vec()
            })
            .collect();
        let taus: Vec<f64> = [0.1, 0.5, 1.0].iter().map(|v| v * ctx.cfg.horizon).collect();
        match nth_bound_check(2, &eng, &ctx.consts, &taus, &points) {
            Ok(r) => {
                let v = serde_json::to_value(&r).expect("serializable");
                let st = if r.passed() { Status::Pass } else { Status::Tolerance };
                out.push((r.name.clone(), "iterated-kernel-envelope", st, v));
            }
            Err(e) => out.push(("s_star_2_bound".into(), "iterated-kernel-envelope", Status::Error, json!({ "error": e.to_string() }))),
        }
    }
    drop(eng);
    for (n, a, s, v) in out {
        ctx.push(&n, a, s, v);
    }
}

fn appendix_checks(ctx: &mut Ctx) {
    let (eq, lower, cof) = det_sweep(ctx.cfg.checks.det_max_n, ctx.cfg.checks.det_cases_per_subset, ctx.seed());
    ctx.push_check(&eq);
    ctx.push_check(&lower);
    ctx.push_check(&cof);
    let mut chain = CheckReport::new("beta_chain_closed_form", "beta-chain-closed-form", 1e-6);
    let mut t1 = CheckReport::new("t1_inequality", "beta-chain-t1-envelope", 1e-9);
    for m in 1..=ctx.cfg.checks.beta_max_m {
        for eps in [0.0, 0.125, 0.25] {
            for b in [0.25, 0.5, 1.0] {
                // the T₁ envelope does not depend on m
                let n_t1 = if m == 1 { ctx.cfg.checks.t1_samples } else { 0 };
                match beta_chain_check(m, eps, b, ctx.consts.c8, n_t1, ctx.seed()) {
                    Ok((c, t)) => {
                        chain.merge(&c);
                        t1.merge(&t);
                    }
                    Err(e) => chain.notes.push(e.to_string()),
                }
            }
        }
    }
    ctx.push_check(&chain);
    ctx.push_check(&t1);
    let g = gamma_power_check(0.5);
    ctx.push_check(&g);
}

fn price(ctx: &mut Ctx) {
    let r = price_records(ctx);
    match r {
        Ok(v) => ctx.push("prices", "barrier-prices", Status::Info, v),
        Err(e) => ctx.push("prices", "barrier-prices", Status::Error, json!({ "error": e.to_string() })),
    }
}

fn price_records(ctx: &Ctx) -> Result<Value> {
    let cfg = &ctx.cfg;
    let ens = simulate_paths(&ctx.model, &ctx.dom, &cfg.x0, cfg.horizon, &cfg.montecarlo, &[])?;
    let disc = (-cfg.rate * cfg.horizon).exp();
    let d = ctx.model.d;
    let ko = MCEstimate::from_samples(&knock_out_samples(&ens, &ctx.f, disc));
    let plain: Vec<f64> = ens.paths.iter().map(|p| disc * ctx.f.eval(&p.x_t[..d])).collect();
    let ki: Vec<f64> = ens.paths.iter().map(|p| if p.exited() { disc * ctx.f.eval(&p.x_t[..d]) } else { 0.0 }).collect();
    let stat: Vec<f64> = ens.paths.iter().map(|p| disc * project_pi(&ctx.f, &ctx.dom, &p.x_t[..d])).collect();
    let surv: Vec<f64> = ens.paths.iter().map(|p| if p.exited() { 0.0 } else { 1.0 }).collect();
    Ok(json!({
        "knock_out": ko,
        "knock_in": MCEstimate::from_samples(&ki),
        "plain": MCEstimate::from_samples(&plain),
        "static_hedge_order0": MCEstimate::from_samples(&stat),
        "survival_probability": MCEstimate::from_samples(&surv),
        "discount": disc,
    }))
}

fn build_engine<'a>(ctx: &'a Ctx, levels: usize) -> Result<HedgeEngine<'a>> {
    HedgeEngine::build(&ctx.kern, &ctx.f, &ctx.cfg.quadrature, ctx.cfg.horizon, &ctx.cfg.x0, levels)
}

fn hedge(ctx: &mut Ctx, out_dir: &Path) -> Result<()> {
    let n = ctx.cfg.order;
    let families = build_hedge_terms(n, ctx.cfg.horizon)?;
    ctx.push("hedge_families", "hedge-portfolio", Status::Info, serde_json::to_value(&families).expect("serializable"));
    let res = (|| -> Result<(bool, Value)> {
        let eng = build_engine(ctx, n)?;
        let rep = hedge_ledger(&eng, n, &ctx.cfg.x0, ctx.cfg.rate, &ctx.cfg.montecarlo)?;
        let ok = rep.defect.within(0.0, ctx.k_se());
        write_terms_csv(ctx, &eng, &out_dir.join("hedge_terms.csv"))?;
        write_ledger_csv(&rep, &out_dir.join("hedge_ledger.csv"))?;
        Ok((ok, json!({ "ledger": rep, "k_se": ctx.k_se() })))
    })();
    ctx.push_result("hedge_ledger", "hedge-error-ledger", res);
    Ok(())
}

fn write_ledger_csv(rep: &crate::simulation::HedgeReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["term", "order", "mean", "std_error"])?;
    let mut row = |term: &str, order: String, e: &MCEstimate| w.write_record([term.to_string(), order, e.mean.to_string(), e.std_error.to_string()]);
    row("plain_pi_f", String::new(), &rep.plain)?;
    row("knock_out", String::new(), &rep.knock_out)?;
    for (i, o) in rep.orders.iter().enumerate() {
        row("hedge_order", (i + 1).to_string(), o)?;
    }
    for (i, o) in rep.residuals.iter().enumerate() {
        row("residual", (i + 1).to_string(), o)?;
    }
    row("defect", String::new(), &rep.defect)?;
    w.flush()?;
    Ok(())
}

/// Liquidation payoffs on a line through `x₀` normal to ∂D.
fn write_terms_csv(ctx: &Ctx, eng: &HedgeEngine<'_>, path: &Path) -> Result<()> {
    let horizon = ctx.cfg.horizon;
    let s = (ctx.model.big_m * horizon).sqrt();
    let c0 = ctx.dom.to_frame(&ctx.cfg.x0);
    let points: Vec<Vec<f64>> = (0..=24)
        .map(|i| {
            let mut c = c0;
            c[0] = -2.0 * s + 4.0 * s * i as f64 / 24.0;
            ctx.dom.from_frame(&c)[..ctx.model.d].to_vec()
        })
        .collect();
    let mut terms = vec![HedgeTerm { order: 0, maturity_outer: None, maturity_inner: None }];
    for frac in [0.25, 0.5, 0.75] {
        terms.push(HedgeTerm { order: 1, maturity_outer: Some(frac * horizon), maturity_inner: None });
    }
    for h in 2..=ctx.cfg.order {
        for (a, b) in [(0.5, 0.25), (0.75, 0.25), (0.75, 0.5)] {
            terms.push(HedgeTerm { order: h, maturity_outer: Some(a * horizon), maturity_inner: Some(b * horizon) });
        }
    }
    let file = fs::File::create(path)?;
    export_hedge_csv(eng, &terms, &points, std::io::BufWriter::new(file))
}

fn convergence(ctx: &mut Ctx, out_dir: &Path) -> Result<()> {
    constants_record(ctx);
    let n = ctx.cfg.order.max(2);
    let res = (|| -> Result<(bool, Value)> {
        let eng = build_engine(ctx, n)?;
        let rep = hedge_ledger(&eng, n, &ctx.cfg.x0, ctx.cfg.rate, &ctx.cfg.montecarlo)?;
        let margin = ctx.consts.convergence_margin;
        let mut w = csv::Writer::from_path(out_dir.join("convergence.csv"))?;
        w.write_record(["n", "residual_mean", "residual_std_error", "envelope"])?;
        let mut ratios = Vec::new();
        let mut envelopes = Vec::new();
        for (i, r) in rep.residuals.iter().enumerate() {
            let env = ctx.consts.residual_envelope(i + 1, ctx.f.sup_bound());
            envelopes.push(env);
            w.write_record([(i + 1).to_string(), r.mean.to_string(), r.std_error.to_string(), env.to_string()])?;
            if i > 0 {
                let prev = rep.residuals[i - 1].mean.abs();
                ratios.push(if prev == 0.0 && r.mean == 0.0 { 0.0 } else { r.mean.abs() / prev });
            }
        }
        w.flush()?;
        let within_env = rep.residuals.iter().zip(&envelopes).all(|(r, e)| r.mean.abs() <= *e);
        let ratio_ok = margin >= 1.0 || ratios.iter().all(|q| *q <= margin + 0.1);
        Ok((
            within_env && ratio_ok,
            json!({
                "residuals": rep.residuals,
                "ratios": ratios,
                "envelopes": envelopes,
                "convergence_margin": margin,
                "ratio_slack": 0.1,
            }),
        ))
    })();
    ctx.push_result("residual_decay", "residual-decay", res);
    Ok(())
}

fn bounds(ctx: &mut Ctx, out_dir: &Path) -> Result<()> {
    model_records(ctx);
    constants_record(ctx);
    match check_h0_bound(&ctx.model, &ctx.dom, &ctx.consts, ctx.cfg.checks.h0_samples, ctx.seed()) {
        Ok(r) => ctx.push_check(&r),
        Err(e) => ctx.push("h0_bound", "h0-gaussian-envelope", Status::Error, json!({ "error": e.to_string() })),
    }
    let (tx, suxy) = envelope_grids(ctx);
    match check_kernel_envelopes(&ctx.model, &ctx.dom, &ctx.consts, &tx, &suxy, &ctx.cfg.quadrature) {
        Ok((a, b)) => {
            ctx.push_check(&a);
            ctx.push_check(&b);
        }
        Err(e) => ctx.push("h_integral_bound", "h-integral-envelope", Status::Error, json!({ "error": e.to_string() })),
    }
    if ctx.cfg.checks.iterated_bound {
        let saved = ctx.cfg.checks.error_identity;
        ctx.cfg.checks.error_identity = false;
        engine_checks(ctx, out_dir);
        ctx.cfg.checks.error_identity = saved;
    }
    appendix_checks(ctx);
    let table = render_table(&ctx.consts, &ctx.records);
    fs::File::create(out_dir.join("bounds.txt"))?.write_all(table.as_bytes())?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.6e}"))
}

/// Human-readable constants table followed by one line per record.
pub fn render_table(c: &ConstantsTable, records: &[Record]) -> String {
    let mut s = String::new();
    let rows: Vec<(&str, String)> = vec![
        ("K_1/2", format!("{:.6e}", c.k_half)),
        ("K_1", format!("{:.6e}", c.k_one)),
        ("K_3/2", format!("{:.6e}", c.k_three_halves)),
        ("K_3/8", format!("{:.6e}", c.k_three_eighths)),
        ("C1", format!("{:.6e}", c.c1)),
        ("C2", format!("{:.6e}", c.c2)),
        ("C3", format!("{:.6e}", c.c3)),
        ("C4_eff", format!("{:.6e}", c.c4_eff)),
        ("C5", format!("{:.6e}", c.c5)),
        ("C6", format!("{:.6e}", c.c6)),
        ("C7", fmt_opt(c.c7)),
        ("C8", format!("{:.6e}", c.c8)),
        ("C9", format!("{:.6e}", c.c9)),
        ("C10(delta^4)", fmt_opt(c.c10)),
        ("C11", fmt_opt(c.c11)),
        ("C12", fmt_opt(c.c12)),
        ("C13", fmt_opt(c.c13)),
        ("delta", format!("{:.6e}", c.delta)),
        ("margin C6*delta", format!("{:.6e}", c.convergence_margin)),
        ("convergent", c.convergent.to_string()),
    ];
    for (k, v) in rows {
        s.push_str(&format!("{k:<18} {v}\n"));
    }
    s.push('\n');
    for r in records {
        s.push_str(&format!("{:<28} {:?}\n", r.name, r.status));
    }
    s
}

/// Writes `t,x…,y…,p,h0,h` rows for `y` on a line through `x₀` normal to ∂D.
pub fn kernel_dump(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dom = cfg.build_domain()?;
    let model = cfg.build_model()?;
    let kern = KernelEval::new(&model, &dom)?;
    let d = model.d;
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=d).map(|i| format!("y{i}")));
    header.extend(["p".into(), "h0".into(), "h".into()]);
    w.write_record(&header)?;
    let s = (model.big_m * cfg.horizon).sqrt();
    let c0 = dom.to_frame(&cfg.x0);
    for t in [0.1, 0.5, 1.0].map(|v| v * cfg.horizon) {
        for i in 0..=40 {
            let mut c = c0;
            c[0] = -2.0 * s + 4.0 * s * i as f64 / 40.0;
            let y = dom.from_frame(&c);
            let mut row = vec![t.to_string()];
            row.extend(cfg.x0.iter().map(|v| v.to_string()));
            row.extend(y[..d].iter().map(|v| v.to_string()));
            row.push(kern.p_raw(t, &cfg.x0, &y[..d]).to_string());
            row.push(kern.h0_raw(t, &cfg.x0, &y[..d]).to_string());
            row.push(kern.h_raw(t, &cfg.x0, &y[..d]).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Applies the command-line overrides.
pub fn apply_overrides(cfg: &mut RunConfig, experiment: Option<Experiment>, seed: Option<u64>, paths: Option<usize>, order: Option<usize>) -> Result<()> {
    if let Some(e) = experiment {
        cfg.experiment = e;
    }
    if let Some(s) = seed {
        cfg.montecarlo.seed = s;
    }
    if let Some(p) = paths {
        cfg.montecarlo = PathConfig { n_paths: p, ..cfg.montecarlo.clone() };
    }
    if let Some(o) = order {
        cfg.order = o;
    }
    cfg.validate().map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config("$", other.to_string()),
    })
}
