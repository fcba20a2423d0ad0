//! JSON form of estimation results and of simulation truth files.
//!
//! Numbers are written with 17 significant digits so a result read back
//! reproduces every `f64` exactly. Non-finite values are written as `null`.

use std::path::Path;

use indexmap::IndexMap;
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::draws::DrawPlan;
use crate::error::{Error, Result};
use crate::estimate::EstimationResult;
use crate::optim::Termination;
use crate::simulate::TrueParameters;
use crate::spec::parse_model_spec;

/// An `f64` serialized in round-trip exponent form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sig17(pub f64);

impl Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Sig17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Sig17(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

type NamedValues = IndexMap<String, Sig17>;

#[derive(Debug, Serialize, Deserialize)]
pub struct ResultDocument {
    pub estimates: NamedValues,
    pub robust_se: NamedValues,
    pub robust_t: NamedValues,
    #[serde(default)]
    pub classical_se: NamedValues,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ll_start: Option<Sig17>,
    pub ll_final: Sig17,
    pub ll_null: Sig17,
    pub adjusted_rho_sq: Sig17,
    pub n_individuals: usize,
    pub n_outcomes: usize,
    pub n_draws: usize,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_error: Option<String>,
    pub spec_echo: String,
    #[serde(default)]
    pub draw_plan: Option<DrawPlan>,
}

fn named(names: &[String], values: &[f64]) -> NamedValues {
    names
        .iter()
        .zip(values)
        .map(|(n, &v)| (n.clone(), Sig17(v)))
        .collect()
}

fn unnamed(names: &[String], values: &NamedValues, field: &str, required: bool) -> Result<Vec<f64>> {
    names
        .iter()
        .map(|n| match values.get(n) {
            Some(v) => Ok(v.0),
            None if !required => Ok(f64::NAN),
            None => Err(Error::Config(format!("result field `{field}` is missing `{n}`"))),
        })
        .collect()
}

impl From<&EstimationResult> for ResultDocument {
    fn from(r: &EstimationResult) -> Self {
        ResultDocument {
            estimates: named(&r.names, &r.estimates),
            robust_se: named(&r.names, &r.robust_se),
            robust_t: named(&r.names, &r.robust_t),
            classical_se: named(&r.names, &r.classical_se),
            ll_start: Some(Sig17(r.ll_start)),
            ll_final: Sig17(r.ll_final),
            ll_null: Sig17(r.ll_null),
            adjusted_rho_sq: Sig17(r.adjusted_rho_sq),
            n_individuals: r.n_individuals,
            n_outcomes: r.n_outcomes,
            n_draws: r.n_draws,
            converged: r.converged,
            iterations: r.iterations,
            termination: r.termination,
            covariance_error: r.covariance_error.clone(),
            spec_echo: r.spec.to_string(),
            draw_plan: r.draw_plan.clone(),
        }
    }
}

impl TryFrom<ResultDocument> for EstimationResult {
    type Error = Error;

    fn try_from(doc: ResultDocument) -> Result<Self> {
        let spec = parse_model_spec(&doc.spec_echo).map_err(Error::Spec)?;
        let names = spec.estimated_names();
        Ok(EstimationResult {
            estimates: unnamed(&names, &doc.estimates, "estimates", true)?,
            robust_se: unnamed(&names, &doc.robust_se, "robust_se", true)?,
            robust_t: unnamed(&names, &doc.robust_t, "robust_t", true)?,
            classical_se: unnamed(&names, &doc.classical_se, "classical_se", false)?,
            names,
            spec,
            ll_start: doc.ll_start.map_or(f64::NAN, |v| v.0),
            ll_final: doc.ll_final.0,
            ll_null: doc.ll_null.0,
            adjusted_rho_sq: doc.adjusted_rho_sq.0,
            n_individuals: doc.n_individuals,
            n_outcomes: doc.n_outcomes,
            n_draws: doc.n_draws,
            converged: doc.converged,
            termination: doc.termination,
            iterations: doc.iterations,
            draw_plan: doc.draw_plan,
            covariance_error: doc.covariance_error,
        })
    }
}

pub fn result_to_json(result: &EstimationResult) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&ResultDocument::from(result))?;
    s.push('\n');
    Ok(s)
}

pub fn result_from_json(text: &str) -> Result<EstimationResult> {
    serde_json::from_str::<ResultDocument>(text)?.try_into()
}

pub fn write_result(result: &EstimationResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, result_to_json(result)?).map_err(|e| Error::io(path, e))
}

pub fn read_result(path: impl AsRef<Path>) -> Result<EstimationResult> {
    let path = path.as_ref();
    result_from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Truth file: named values under `parameters` (or `estimates`, so a result
/// file can serve as truth) plus an optional seed and specification echo.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthDocument {
    #[serde(alias = "estimates")]
    pub parameters: IndexMap<String, Sig17>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_echo: Option<String>,
}

impl TruthDocument {
    pub fn values(&self) -> IndexMap<String, f64> {
        self.parameters.iter().map(|(k, v)| (k.clone(), v.0)).collect()
    }
}

impl From<&TrueParameters> for TruthDocument {
    fn from(t: &TrueParameters) -> Self {
        TruthDocument {
            parameters: named(&t.spec.estimated_names(), &t.values),
            seed: Some(t.seed),
            spec_echo: Some(t.spec.to_string()),
        }
    }
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<TruthDocument> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_truth(truth: &TrueParameters, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(&TruthDocument::from(truth))?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
