//! JSON run configuration and the name registries it resolves against.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::diffusion_models::{DiffusionModel, GridModel};
use crate::error::{Error, Result};
use crate::geometry::{HalfSpaceDomain, PayoffFunction};
use crate::linalg::Mat;
use crate::quadrature::QuadratureScheme;
use crate::simulation::PathConfig;

pub const MODEL_FAMILIES: &[&str] = &["brownian", "constant", "rotated_constant", "diagonal_sine", "tanh1d", "grid"];
pub const PAYOFF_FAMILIES: &[&str] = &["constant", "call", "digital", "tanh_ramp"];
pub const EXPERIMENTS: &[&str] = &["verify", "price", "hedge", "convergence", "bounds"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Verify,
    Price,
    Hedge,
    Convergence,
    Bounds,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Verify => "verify",
            Experiment::Price => "price",
            Experiment::Hedge => "hedge",
            Experiment::Convergence => "convergence",
            Experiment::Bounds => "bounds",
        }
    }
}

/// Declares a spec enum serialized with an inline `family` tag. It is read
/// through an externally tagged twin so that error paths reach into the
/// variant fields.
macro_rules! family_spec {
    ($(#[$m:meta])* $name:ident / $ext:ident {
        $($(#[$vm:meta])* $var:ident { $($(#[$fm:meta])* $f:ident : $t:ty),* $(,)? }),* $(,)?
    }) => {
        $(#[$m])*
        #[derive(Clone, Debug, PartialEq, Serialize)]
        #[serde(tag = "family", rename_all = "snake_case")]
        pub enum $name {
            $($(#[$vm])* $var { $($(#[$fm])* $f: $t),* }),*
        }

        #[derive(Deserialize)]
        #[serde(rename_all = "snake_case", deny_unknown_fields)]
        enum $ext {
            $($var { $($(#[$fm])* $f: $t),* }),*
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                Ok(match $ext::deserialize(d)? {
                    $($ext::$var { $($f),* } => $name::$var { $($f),* }),*
                })
            }
        }
    };
}

family_spec! {
    ModelSpec / ModelSpecTagged {
        Brownian { d: usize },
        Constant { a: Vec<Vec<f64>>, b: Vec<f64> },
        RotatedConstant { c: f64, #[serde(default = "zero2")] b: Vec<f64> },
        DiagonalSine { d: usize, amp: f64, b: Vec<f64> },
        Tanh1d { base: f64, amp: f64, #[serde(default)] b: f64 },
        /// CSV with columns `x1..xd, a11, a12, …, add, b1..bd` on a tensor grid.
        Grid { path: PathBuf, d: usize, m: f64, big_m: f64, a_inf: f64, b_inf: f64 },
    }
}

fn zero2() -> Vec<f64> {
    vec![0.0, 0.0]
}

/// Optional overrides of the declared model constants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantOverrides {
    pub m: Option<f64>,
    pub big_m: Option<f64>,
    pub a_inf: Option<f64>,
    pub b_inf: Option<f64>,
    pub m0: Option<f64>,
    pub cq: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub k: f64,
}

family_spec! {
    PayoffSpec / PayoffSpecTagged {
        Constant { value: f64 },
        /// `min((⟨x,γ⟩ − strike)⁺, cap)`
        Call { strike: f64, cap: f64 },
        /// `1{⟨x,γ⟩ > level}`
        Digital { level: f64 },
        /// `½(1 + tanh(⟨x,direction⟩/scale))`
        TanhRamp { direction: Vec<f64>, scale: f64 },
    }
}

/// Sizes of the sampled checks run by `verify` and `bounds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSizes {
    pub symmetry_samples: usize,
    pub h0_samples: usize,
    pub model_samples: usize,
    pub det_max_n: usize,
    pub det_cases_per_subset: usize,
    pub t1_samples: usize,
    pub beta_max_m: usize,
    /// Multiplies every tolerance; values below 1 tighten the checks.
    pub tolerance_scale: f64,
    /// Run the order-`2` iterated-kernel bound (needs a one-level table).
    pub iterated_bound: bool,
    /// Run the error identity (tabulation plus Monte Carlo).
    pub error_identity: bool,
}

impl Default for CheckSizes {
    fn default() -> Self {
        CheckSizes {
            symmetry_samples: 1000,
            h0_samples: 100_000,
            model_samples: 2000,
            det_max_n: 6,
            det_cases_per_subset: 100,
            t1_samples: 1000,
            beta_max_m: 3,
            tolerance_scale: 1.0,
            iterated_bound: true,
            error_identity: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub model: ModelSpec,
    #[serde(default)]
    pub constants: ConstantOverrides,
    pub domain: DomainSpec,
    pub payoff: PayoffSpec,
    pub x0: Vec<f64>,
    pub horizon: f64,
    #[serde(default)]
    pub rate: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub quadrature: QuadratureScheme,
    #[serde(default)]
    pub montecarlo: PathConfig,
    #[serde(default)]
    pub checks: CheckSizes,
}

fn default_order() -> usize {
    2
}

fn check_family(v: &Value, block: &str, known: &[&str]) -> Result<()> {
    let fam = v.get(block).and_then(|b| b.get("family"));
    match fam {
        None => Err(Error::config(format!("{block}.family"), "missing field")),
        Some(Value::String(s)) if known.contains(&s.as_str()) => Ok(()),
        Some(other) => Err(Error::config(
            format!("{block}.family"),
            format!("unknown family {other}; expected one of {}", known.join(", ")),
        )),
    }
}

/// `{"family": f, ...}` becomes `{f: {...}}`.
fn retag(v: &mut Value, block: &str) {
    if let Some(Value::Object(obj)) = v.get_mut(block) {
        if let Some(Value::String(fam)) = obj.remove("family") {
            let inner = Value::Object(std::mem::take(obj));
            obj.insert(fam, inner);
        }
    }
}

/// Drops the family segment that `retag` introduced.
fn untag_path(path: &str) -> String {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.len() >= 2 && (parts[0] == "model" || parts[0] == "payoff") {
        let mut out = vec![parts[0]];
        out.extend(&parts[2..]);
        out.join(".")
    } else {
        path.to_string()
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        if !v.is_object() {
            return Err(Error::config("$", "config must be a JSON object"));
        }
        check_family(&v, "model", MODEL_FAMILIES)?;
        check_family(&v, "payoff", PAYOFF_FAMILIES)?;
        if let Some(e) = v.get("experiment") {
            if !e.as_str().is_some_and(|s| EXPERIMENTS.contains(&s)) {
                return Err(Error::config("experiment", format!("unknown experiment {e}; expected one of {}", EXPERIMENTS.join(", "))));
            }
        }
        let mut v = v;
        for block in ["model", "payoff"] {
            retag(&mut v, block);
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(v).map_err(|e| {
            let path = untag_path(&e.path().to_string());
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::config("horizon", "T must be positive"));
        }
        if !self.rate.is_finite() {
            return Err(Error::config("rate", "must be finite"));
        }
        if self.order == 0 || self.order > crate::hedge_operators::MAX_ORDER_CAP - 1 {
            return Err(Error::config("order", format!("must lie in 1..={}", crate::hedge_operators::MAX_ORDER_CAP - 1)));
        }
        if !(self.checks.tolerance_scale > 0.0) {
            return Err(Error::config("checks.tolerance_scale", "must be positive"));
        }
        if self.checks.det_max_n > 10 {
            return Err(Error::config("checks.det_max_n", "at most 10"));
        }
        if self.checks.beta_max_m == 0 || self.checks.beta_max_m > 5 {
            return Err(Error::config("checks.beta_max_m", "must lie in 1..=5"));
        }
        self.montecarlo.validate()?;
        let d = self.domain.gamma.len();
        if self.x0.len() != d {
            return Err(Error::config("x0", format!("expected {d} coordinates, got {}", self.x0.len())));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON with all defaults materialized.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("serializable config");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_domain(&self) -> Result<HalfSpaceDomain> {
        let (dom, renormalized) = HalfSpaceDomain::normalized(self.domain.gamma.clone(), self.domain.k)
            .map_err(|e| Error::config("domain.gamma", e.to_string()))?;
        if renormalized {
            return Err(Error::config("domain.gamma", "gamma must be a unit vector"));
        }
        Ok(dom)
    }

    pub fn build_model(&self) -> Result<DiffusionModel> {
        let wrap = |e: Error| Error::config("model", e.to_string());
        let model = match &self.model {
            ModelSpec::Brownian { d } => {
                if *d == 0 || *d > crate::linalg::MAX_DIM {
                    return Err(Error::config("model.d", "must lie in 1..=3"));
                }
                DiffusionModel::brownian(*d)
            }
            ModelSpec::Constant { a, b } => {
                let a = Mat::from_rows(a).ok_or_else(|| Error::config("model.a", "must be a square matrix of size at most 3"))?;
                DiffusionModel::constant(a, b).map_err(wrap)?
            }
            ModelSpec::RotatedConstant { c, b } => DiffusionModel::rotated_constant(*c, b).map_err(wrap)?,
            ModelSpec::DiagonalSine { d, amp, b } => DiffusionModel::diagonal_sine(*d, *amp, b).map_err(wrap)?,
            ModelSpec::Tanh1d { base, amp, b } => DiffusionModel::tanh1d(*base, *amp, *b).map_err(wrap)?,
            ModelSpec::Grid { path, d, m, big_m, a_inf, b_inf } => {
                let g = GridModel::from_csv(path, *d).map_err(wrap)?;
                DiffusionModel::grid(g, *m, *big_m, *a_inf, *b_inf).map_err(wrap)?
            }
        };
        let o = &self.constants;
        let model = model.with_constants(o.m, o.big_m, o.a_inf, o.b_inf, o.m0, o.cq).map_err(|e| Error::config("constants", e.to_string()))?;
        if model.d != self.domain.gamma.len() {
            return Err(Error::config("domain.gamma", format!("model has dimension {}, gamma has {}", model.d, self.domain.gamma.len())));
        }
        Ok(model)
    }

    pub fn build_payoff(&self, dom: &HalfSpaceDomain) -> Result<PayoffFunction> {
        match &self.payoff {
            PayoffSpec::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::config("payoff.value", "must be finite"));
                }
                Ok(PayoffFunction::constant(*value))
            }
            PayoffSpec::Call { strike, cap } => {
                PayoffFunction::capped_call(dom, *strike, *cap).map_err(|e| Error::config("payoff.cap", e.to_string()))
            }
            PayoffSpec::Digital { level } => Ok(PayoffFunction::digital(dom, *level)),
            PayoffSpec::TanhRamp { direction, scale } => {
                PayoffFunction::tanh_ramp(dom, direction, *scale).map_err(|e| Error::config("payoff", e.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "experiment": "bounds",
        "model": {"family": "brownian", "d": 1},
        "domain": {"gamma": [1.0], "k": 0.0},
        "payoff": {"family": "constant", "value": 1.0},
        "x0": [1.0],
        "horizon": 1.0
    }"#;

    #[test]
    fn defaults_materialize() {
        let c = RunConfig::from_json(BASE).unwrap();
        assert_eq!(c.order, 2);
        assert_eq!(c.quadrature, QuadratureScheme::default());
        assert_eq!(c.hash(), RunConfig::from_json(BASE).unwrap().hash());
    }

    #[test]
    fn unknown_family_is_named() {
        let text = BASE.replace("\"constant\"", "\"asian\"");
        let e = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("unknown family") && e.contains("payoff.family"), "{e}");
    }

    #[test]
    fn field_path_in_diagnostic() {
        let text = BASE.replace("\"d\": 1", "\"d\": \"one\"");
        let e = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(e.contains("model.d"), "{e}");
        let text = BASE.replace("\"horizon\": 1.0", "\"horizon\": -1.0");
        assert!(RunConfig::from_json(&text).unwrap_err().to_string().contains("horizon"));
    }

    #[test]
    fn materialized_config_round_trips() {
        let c = RunConfig::from_json(BASE).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        let extra = BASE.replace("\"d\": 1", "\"d\": 1, \"dd\": 2");
        let e = RunConfig::from_json(&extra).unwrap_err().to_string();
        assert!(e.contains("dd"), "{e}");
    }
}
