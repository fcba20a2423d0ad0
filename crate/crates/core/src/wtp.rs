//! Money-metric reporting.
//!
//! Money values are price-equivalents inside the alternative an attribute
//! enters: a positive value acts like an extra price (respondents need to be
//! compensated), a negative one like a discount (respondents are willing to
//! pay). The same rule covers ride attributes and stay-side covariates.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::EstimationResult;
use crate::spec::{Distribution, ModelSpec, ParameterKind, ParameterRole, Space, TermAttribute};

/// Fresh pseudo-random draws used to summarize preference-space ratios.
pub const RATIO_DRAWS: usize = 100_000;

/// Named ratios reported when both parameters exist: (numerator, denominator).
pub const REPORTED_RATIOS: [(&str, &str); 3] = [
    ("wait", "travel"),
    ("fear", "anxiety"),
    ("peers_staying", "peers_ride"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Pay,
    Compensate,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Direction::Pay => "pay",
            Direction::Compensate => "compensate",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MoneyValue {
    /// Always nonnegative; `direction` carries the sign.
    pub amount: f64,
    pub direction: Direction,
}

impl MoneyValue {
    pub fn from_signed(value: f64) -> Self {
        MoneyValue {
            amount: value.abs(),
            direction: if value > 0.0 {
                Direction::Compensate
            } else {
                Direction::Pay
            },
        }
    }

    pub fn signed(&self) -> f64 {
        match self.direction {
            Direction::Compensate => self.amount,
            Direction::Pay => -self.amount,
        }
    }
}

impl fmt::Display for MoneyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ${:.2}", self.direction, self.amount)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FloodThreat {
    Low,
    Moderate,
    Extreme,
}

impl FloodThreat {
    pub const ALL: [FloodThreat; 3] = [FloodThreat::Low, FloodThreat::Moderate, FloodThreat::Extreme];

    /// Ordinal code 1..=3.
    pub fn level(self) -> f64 {
        match self {
            FloodThreat::Low => 1.0,
            FloodThreat::Moderate => 2.0,
            FloodThreat::Extreme => 3.0,
        }
    }
}

impl fmt::Display for FloodThreat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            FloodThreat::Low => "low",
            FloodThreat::Moderate => "moderate",
            FloodThreat::Extreme => "extreme",
        })
    }
}

impl std::str::FromStr for FloodThreat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(FloodThreat::Low),
            "moderate" => Ok(FloodThreat::Moderate),
            "extreme" => Ok(FloodThreat::Extreme),
            other => Err(Error::Config(format!("unknown flood threat `{other}`"))),
        }
    }
}

/// A threat level and the attribute names it controls.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub threat: FloodThreat,
    pub moderate_attribute: String,
    pub extreme_attribute: String,
    pub level_attribute: String,
}

impl ScenarioSpec {
    pub fn new(threat: FloodThreat) -> Self {
        ScenarioSpec {
            threat,
            moderate_attribute: "moderate".into(),
            extreme_attribute: "extreme".into(),
            level_attribute: "threat_level".into(),
        }
    }

    /// Value the scenario assigns to `attribute`, if it controls it.
    pub fn value_of(&self, attribute: &str) -> Option<f64> {
        let flag = |on: bool| if on { 1.0 } else { 0.0 };
        if attribute == self.moderate_attribute {
            Some(flag(self.threat == FloodThreat::Moderate))
        } else if attribute == self.extreme_attribute {
            Some(flag(self.threat == FloodThreat::Extreme))
        } else if attribute == self.level_attribute {
            Some(self.threat.level())
        } else {
            None
        }
    }

    /// Scenario-controlled attributes with a nonzero value.
    pub fn active_interactions(&self) -> Vec<String> {
        [&self.moderate_attribute, &self.extreme_attribute, &self.level_attribute]
            .into_iter()
            .filter(|a| self.value_of(a).unwrap_or(0.0) != 0.0)
            .cloned()
            .collect()
    }
}

/// An interaction coefficient scaled by a scenario-controlled attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioInteraction {
    pub scenario_attribute: String,
    pub z: f64,
}

/// `base + Σ z · (scenario value of its attribute)`; for indicator
/// interactions this is the base plus every active interaction.
pub fn scenario_value(base_z: f64, interactions: &[ScenarioInteraction], scenario: &ScenarioSpec) -> MoneyValue {
    let net = interactions.iter().fold(base_z, |acc, i| {
        acc + i.z * scenario.value_of(&i.scenario_attribute).unwrap_or(0.0)
    });
    MoneyValue::from_signed(net)
}

/// Signed ratio of the raw spread and mean estimates.
pub fn coefficient_of_variation(mean: f64, sd: f64) -> Result<f64> {
    if mean == 0.0 {
        return Err(Error::UndefinedCov);
    }
    Ok(sd / mean)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Share of a normal coefficient's population above zero.
pub fn sign_share(mean: f64, sd: f64) -> f64 {
    let sd = sd.abs();
    if sd == 0.0 {
        return if mean > 0.0 { 1.0 } else { 0.0 };
    }
    normal_cdf(mean / sd)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WtpRow {
    pub parameter: String,
    /// The attribute, `a×b` for interactions.
    pub attribute: String,
    pub alternatives: Vec<String>,
    /// Signed money value per unit.
    pub value: f64,
    pub money: MoneyValue,
    pub unit: String,
    /// Simulated ratio distribution (preference space only).
    pub distribution: Option<DistributionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovRow {
    pub parameter: String,
    pub cov: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignShareRow {
    pub parameter: String,
    pub share_positive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioRow {
    pub parameter: String,
    pub scenario: FloodThreat,
    pub net: f64,
    pub money: MoneyValue,
    pub unit: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub numerator: String,
    pub denominator: String,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WtpReport {
    pub rows: Vec<WtpRow>,
    pub cov_table: Vec<CovRow>,
    pub sign_shares: Vec<SignShareRow>,
    pub scenario_rows: Vec<ScenarioRow>,
    pub ratios: Vec<RatioRow>,
}

fn location_of(result: &EstimationResult, p: usize) -> (f64, Option<f64>) {
    let offset = result.spec.estimated_offsets()[p];
    let location = result.estimates[offset];
    let spread = result.spec.parameters[p]
        .is_random()
        .then(|| result.estimates[offset + 1]);
    (location, spread)
}

/// Population mean of a parameter's distribution.
fn population_mean(kind: ParameterKind, location: f64, spread: Option<f64>) -> f64 {
    match kind {
        ParameterKind::Random(Distribution::NegatedLognormal) => {
            let s = spread.unwrap_or(0.0);
            -(location + 0.5 * s * s).exp()
        }
        _ => location,
    }
}

fn draw_parameter(kind: ParameterKind, location: f64, spread: Option<f64>, xi: f64) -> f64 {
    let s = spread.unwrap_or(0.0).abs();
    match kind {
        ParameterKind::Fixed => location,
        ParameterKind::Random(Distribution::Normal) => location + s * xi,
        ParameterKind::Random(Distribution::NegatedLognormal) => -(location + s * xi).exp(),
    }
}

fn term_label(spec: &ModelSpec, name: &str) -> (String, Vec<String>) {
    let term = spec.terms.iter().find(|t| t.parameter == name);
    match term {
        Some(t) => {
            let mut label = t.attribute.to_string();
            if let Some(m) = &t.multiplier {
                label = format!("{label}×{m}");
            }
            (label, t.applies_to.clone())
        }
        None => (String::new(), Vec::new()),
    }
}

fn summarize(mut xs: Vec<f64>) -> DistributionSummary {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (xs.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
    };
    DistributionSummary {
        mean,
        median: q(0.5),
        q05: q(0.05),
        q95: q(0.95),
    }
}

/// Per-unit money value of every money-metric parameter.
///
/// WTP space reads the coefficients directly. Preference space simulates
/// `β/φ` over [`RATIO_DRAWS`] seeded draws, since both terms may be random.
pub fn marginal_money_values(result: &EstimationResult, seed: u64) -> Result<Vec<WtpRow>> {
    let spec = &result.spec;
    let mut rows = Vec::new();
    match spec.space {
        Space::Wtp => {
            for (p, def) in spec.parameters.iter().enumerate() {
                if spec.role(p) != ParameterRole::Money {
                    continue;
                }
                let (location, spread) = location_of(result, p);
                let value = population_mean(def.kind, location, spread);
                let (attribute, alternatives) = term_label(spec, &def.name);
                rows.push(WtpRow {
                    parameter: def.name.clone(),
                    unit: format!("per unit of {attribute}"),
                    attribute,
                    alternatives,
                    value,
                    money: MoneyValue::from_signed(value),
                    distribution: None,
                });
            }
        }
        Space::Preference => {
            let price = spec.price_parameter().ok_or_else(|| {
                Error::Identification("preference-space money values need a price attribute".into())
            })?;
            let price_def = &spec.parameters[price];
            if price_def.distribution() == Some(Distribution::Normal) {
                return Err(Error::Identification(format!(
                    "price coefficient `{}` is normal, so β/φ has no finite moments",
                    price_def.name
                )));
            }
            let (phi_loc, phi_spread) = location_of(result, price);
            if price_def.kind == ParameterKind::Fixed && phi_loc == 0.0 {
                return Err(Error::Identification("price coefficient is zero".into()));
            }
            for (p, def) in spec.parameters.iter().enumerate() {
                let constant = spec
                    .terms
                    .iter()
                    .any(|t| t.parameter == def.name && t.attribute == TermAttribute::Constant);
                if p == price || constant {
                    continue;
                }
                let (location, spread) = location_of(result, p);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p as u64);
                let ratios: Vec<f64> = (0..RATIO_DRAWS)
                    .map(|_| {
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        draw_parameter(def.kind, location, spread, a)
                            / draw_parameter(price_def.kind, phi_loc, phi_spread, b)
                    })
                    .collect();
                let summary = summarize(ratios);
                let (attribute, alternatives) = term_label(spec, &def.name);
                rows.push(WtpRow {
                    parameter: def.name.clone(),
                    unit: format!("per unit of {attribute}"),
                    attribute,
                    alternatives,
                    value: summary.mean,
                    money: MoneyValue::from_signed(summary.mean),
                    distribution: Some(summary),
                });
            }
        }
    }
    Ok(rows)
}

/// Interactions of `parameter`'s base term with scenario-controlled
/// attributes, read from the specification.
pub fn scenario_interactions(
    result: &EstimationResult,
    parameter: &str,
    template: &ScenarioSpec,
) -> Vec<ScenarioInteraction> {
    let spec = &result.spec;
    let Some(base) = spec
        .terms
        .iter()
        .find(|t| t.parameter == parameter && t.multiplier.is_none())
    else {
        return Vec::new();
    };
    let TermAttribute::Named(base_attr) = &base.attribute else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for term in &spec.terms {
        if term.parameter == parameter || term.applies_to != base.applies_to {
            continue;
        }
        let Some(mult) = &term.multiplier else { continue };
        let TermAttribute::Named(attr) = &term.attribute else { continue };
        let scenario_attribute = if attr == base_attr && template.value_of(mult).is_some() {
            mult
        } else if mult == base_attr && template.value_of(attr).is_some() {
            attr
        } else {
            continue;
        };
        let Some(p) = spec.parameter_index(&term.parameter) else { continue };
        let (location, spread) = location_of(result, p);
        out.push(ScenarioInteraction {
            scenario_attribute: scenario_attribute.clone(),
            z: population_mean(spec.parameters[p].kind, location, spread),
        });
    }
    out
}

/// Everything the `wtp` subcommand prints, for the given threat levels.
pub fn build_report(result: &EstimationResult, threats: &[FloodThreat], seed: u64) -> Result<WtpReport> {
    let spec = &result.spec;
    let rows = marginal_money_values(result, seed)?;

    let mut cov_table = Vec::new();
    let mut sign_shares = Vec::new();
    for (p, def) in spec.parameters.iter().enumerate() {
        let (location, spread) = location_of(result, p);
        let Some(sd) = spread else { continue };
        if let Ok(cov) = coefficient_of_variation(location, sd) {
            cov_table.push(CovRow {
                parameter: def.name.clone(),
                cov,
            });
        }
        if def.distribution() == Some(Distribution::Normal) {
            sign_shares.push(SignShareRow {
                parameter: def.name.clone(),
                share_positive: sign_share(location, sd),
            });
        }
    }

    let mut scenario_rows = Vec::new();
    if spec.space == Space::Wtp {
        for row in &rows {
            let template = ScenarioSpec::new(FloodThreat::Low);
            let interactions = scenario_interactions(result, &row.parameter, &template);
            if interactions.is_empty() {
                continue;
            }
            for &threat in threats {
                let scenario = ScenarioSpec { threat, ..template.clone() };
                let money = scenario_value(row.value, &interactions, &scenario);
                scenario_rows.push(ScenarioRow {
                    parameter: row.parameter.clone(),
                    scenario: threat,
                    net: money.signed(),
                    money,
                    unit: row.unit.clone(),
                });
            }
        }
    }

    let ratios = REPORTED_RATIOS
        .iter()
        .filter_map(|(a, b)| {
            let va = rows.iter().find(|r| r.parameter == *a)?.value;
            let vb = rows.iter().find(|r| r.parameter == *b)?.value;
            Some(RatioRow {
                numerator: a.to_string(),
                denominator: b.to_string(),
                ratio: (va / vb).abs(),
            })
        })
        .collect();

    Ok(WtpReport {
        rows,
        cov_table,
        sign_shares,
        scenario_rows,
        ratios,
    })
}

impl WtpReport {
    /// `attribute,scenario,net_value,direction,unit`; base rows use the
    /// scenario label `base`. Amounts are rounded to cents.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute,scenario,net_value,direction,unit\n");
        let quote = |s: &str| {
            if s.contains(',') || s.contains('"') {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        for r in &self.rows {
            out.push_str(&format!(
                "{},base,{:.2},{},{}\n",
                quote(&r.parameter),
                r.money.amount,
                r.money.direction,
                quote(&r.unit)
            ));
        }
        for r in &self.scenario_rows {
            out.push_str(&format!(
                "{},{},{:.2},{},{}\n",
                quote(&r.parameter),
                r.scenario,
                r.money.amount,
                r.money.direction,
                quote(&r.unit)
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("Money values\n");
        for r in &self.rows {
            out.push_str(&format!(
                "  {:<28} {:>12} {:<11} {} (alts {})\n",
                r.parameter,
                format!("${:.2}", r.money.amount),
                r.money.direction,
                r.unit,
                r.alternatives.join(",")
            ));
            if let Some(d) = &r.distribution {
                out.push_str(&format!(
                    "  {:<28} mean {:.3} median {:.3} 5% {:.3} 95% {:.3}\n",
                    "", d.mean, d.median, d.q05, d.q95
                ));
            }
        }
        if !self.scenario_rows.is_empty() {
            out.push_str("Scenario values\n");
            for r in &self.scenario_rows {
                out.push_str(&format!(
                    "  {:<28} {:<9} {:>12} {}\n",
                    r.parameter,
                    r.scenario,
                    format!("${:.2}", r.money.amount),
                    r.money.direction
                ));
            }
        }
        if !self.cov_table.is_empty() {
            out.push_str("Coefficients of variation\n");
            for r in &self.cov_table {
                out.push_str(&format!("  {:<28} {:>8.3}\n", r.parameter, r.cov));
            }
        }
        if !self.sign_shares.is_empty() {
            out.push_str("Share of population with a positive coefficient\n");
            for r in &self.sign_shares {
                out.push_str(&format!("  {:<28} {:>8.4}\n", r.parameter, r.share_positive));
            }
        }
        if !self.ratios.is_empty() {
            out.push_str("Ratios\n");
            for r in &self.ratios {
                out.push_str(&format!(
                    "  {:<28} {:>8.3}\n",
                    format!("{}/{}", r.numerator, r.denominator),
                    r.ratio
                ));
            }
        }
        out
    }
}
