//! Run configuration: one TOML document with a section per command.

use std::path::Path;

use rindler_core::formfactor::ProfileSpec;
use rindler_core::kinematics::ModelParameters;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const REFERENCE_CONFIG: &str = include_str!("../../../reference.config");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelSection,
    pub profile: ProfileSpec,
    pub rates: RatesSection,
    pub kms: KmsSection,
    pub resonances: ResonancesSection,
    pub simulate: SimulateSection,
    pub localized: LocalizedSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub m: f64,
    pub d: u32,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub e_min: f64,
    pub e_max: f64,
    pub points: usize,
    /// fraction of the scan maximum below which a point counts as exceptional
    pub threshold: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmsSection {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
    pub fit_min: f64,
    pub fit_max: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonancesSection {
    pub lambdas: Vec<f64>,
    /// imaginary deformation parameters θ'; two values give the robustness check
    pub thetas: Vec<f64>,
    pub n_s: usize,
    pub n_k: usize,
    /// half-width of the s-window; derived from the form factor when absent
    pub s_max: Option<f64>,
    pub k_max: Option<f64>,
    pub boson_cutoff: usize,
    pub dense: bool,
    /// largest Liouvillean dimension the run may build
    pub max_dimension: usize,
    /// extract Re Λ±E numerically for the perturbative column
    pub lamb_shift: bool,
    pub width_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub p_plus: f64,
    pub coherence_re: f64,
    pub coherence_im: f64,
    /// end of the σ grid in units of τ_relax
    pub horizon: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizedSection {
    pub epsilons: Vec<f64>,
    /// one bump shape per entry
    pub sharpness: Vec<f64>,
    pub max_gap: f64,
    pub shape_tolerance: f64,
}

impl RunConfig {
    pub fn reference() -> Self {
        RunConfig::from_toml(REFERENCE_CONFIG, &[]).expect("bundled reference config is valid")
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
            None => REFERENCE_CONFIG.to_string(),
        };
        RunConfig::from_toml(&text, overrides)
    }

    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn params(&self) -> ModelParameters {
        let m = &self.model;
        ModelParameters { a: m.a, e: m.e, m: m.m, d: m.d, lambda: m.lambda }
    }

    /// Canonical serialization, also the input of the config hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        self.params().validate().map_err(|e| CliError::Config(e.to_string()))?;
        let p = &self.profile;
        for (name, v) in [("w1", p.w1), ("w_perp", p.w_perp), ("epsilon", p.epsilon), ("sharpness", p.sharpness)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("profile.{name} must be finite and > 0 (got {v})"));
            }
        }
        let a = self.model.a;
        if p.c1.abs() + p.epsilon * p.w1 >= 1.0 / a {
            return bad("profile support must stay inside the wedge: |c1| + epsilon*w1 < 1/a".into());
        }
        let r = &self.rates;
        if r.points == 0 || !(r.e_min >= 0.0 && r.e_max >= r.e_min) {
            return bad("rates: need points >= 1 and 0 <= e_min <= e_max".into());
        }
        if !(r.threshold > 0.0 && r.threshold < 1.0) || !(r.rel_tol > 0.0) {
            return bad("rates: threshold must be in (0, 1) and rel_tol > 0".into());
        }
        let k = &self.kms;
        if k.points == 0 || !(k.s_min >= 0.0 && k.s_max >= k.s_min) || !(k.rel_tol > 0.0) {
            return bad("kms: need points >= 1, 0 <= s_min <= s_max and rel_tol > 0".into());
        }
        if !(k.fit_max > k.fit_min) {
            return bad("kms: fit_max must exceed fit_min".into());
        }
        let z = &self.resonances;
        if z.lambdas.is_empty() || z.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("resonances.lambdas must be a non-empty list of values >= 0".into());
        }
        if z.thetas.is_empty() || z.thetas.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("resonances.thetas must be a non-empty list of values > 0".into());
        }
        if !(1..=2).contains(&z.boson_cutoff) {
            return bad(format!("resonances.boson_cutoff must be 1 or 2 (got {})", z.boson_cutoff));
        }
        if z.n_s < 2 || (self.model.d > 1 && z.n_k == 0) {
            return bad("resonances: n_s >= 2 and n_k >= 1 required".into());
        }
        if self.model.e <= 0.0 {
            return bad("resonances need E > 0 (the target balls around 0 and ±E must be disjoint)".into());
        }
        if z.s_max.is_some_and(|v| !(v > 0.0)) || z.k_max.is_some_and(|v| !(v > 0.0)) {
            return bad("resonances: s_max and k_max must be > 0 when given".into());
        }
        let s = &self.simulate;
        if !(0.0..=1.0).contains(&s.p_plus) {
            return bad("simulate.p_plus must lie in [0, 1]".into());
        }
        let c2 = s.coherence_re.powi(2) + s.coherence_im.powi(2);
        if c2 > s.p_plus * (1.0 - s.p_plus) + 1e-15 {
            return bad("simulate: |coherence|^2 must not exceed p_plus (1 - p_plus)".into());
        }
        if s.points < 2 || !(s.horizon > 0.0) {
            return bad("simulate: need points >= 2 and horizon > 0".into());
        }
        let l = &self.localized;
        if l.epsilons.is_empty() || l.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("localized.epsilons must be a non-empty list in (0, 1]".into());
        }
        if l.sharpness.is_empty() || l.sharpness.iter().any(|p| !(*p > 0.0)) {
            return bad("localized.sharpness must be a non-empty list of values > 0".into());
        }
        Ok(())
    }
}

/// `section.key=value`; the value is parsed as a TOML value, falling back to a string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{spec}' is not of the form key=value")))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one element");
    let mut table = doc;
    for k in parents {
        table = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override '{spec}': '{k}' is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}
