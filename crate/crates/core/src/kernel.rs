//! Utilities, logit probabilities and the simulated panel log-likelihood.
//!
//! Preference space: `V = Σ β·x`, the price term being an ordinary term.
//! WTP space: `V = φ·(p + Σ z·x) + Σ c·x_asc`, where `φ` is the price
//! coefficient, `z` are money-metric coefficients and alternative-specific
//! constants stay on the utility scale.
//!
//! For person `n` the simulated likelihood is
//! `L_n = (1/R) Σ_r Π_t P(chosen_nt | coefficients from draw r)`; the product
//! is accumulated as a sum of log-probabilities and the average with a
//! max-shifted log-sum-exp, so nine tasks of extreme utilities never
//! underflow.

use std::collections::{BTreeMap, HashMap};
use std::ops::Deref;

use indexmap::IndexMap;
use rayon::prelude::*;

use crate::dataset::{AttributeInfo, ChoiceDataset};
use crate::draws::DrawTensor;
use crate::error::{Error, Result};
use crate::spec::{Distribution, ModelSpec, ParameterKind, ParameterRole, Space, TermAttribute, UtilityTerm};

/// Chosen-alternative probabilities below this raise an evaluation error.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

/// Estimated values in canonical specification order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector(pub Vec<f64>);

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}

/// Named attribute lookup for a single alternative.
pub trait AttributeSource {
    fn attribute(&self, name: &str) -> Option<f64>;
}

impl AttributeSource for HashMap<String, f64> {
    fn attribute(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl AttributeSource for BTreeMap<String, f64> {
    fn attribute(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl AttributeSource for IndexMap<String, f64> {
    fn attribute(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// A dataset row viewed through its schema.
pub struct RowAttributes<'a> {
    pub schema: &'a [AttributeInfo],
    pub values: &'a [f64],
}

impl AttributeSource for RowAttributes<'_> {
    fn attribute(&self, name: &str) -> Option<f64> {
        self.schema
            .iter()
            .position(|a| a.name == name)
            .and_then(|i| self.values.get(i).copied())
    }
}

/// One realization of every model coefficient, indexed by parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedCoefficients {
    pub values: Vec<f64>,
    pub price: Option<usize>,
}

impl RealizedCoefficients {
    pub fn phi(&self) -> Option<f64> {
        self.price.map(|p| self.values[p])
    }

    /// Preference-space coefficients behaviourally equivalent to these
    /// WTP-space ones: `β = φ·z` for money-metric coefficients.
    pub fn to_preference_space(&self, spec: &ModelSpec) -> RealizedCoefficients {
        let phi = self.phi().unwrap_or(1.0);
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(p, &c)| match spec.role(p) {
                ParameterRole::Money => phi * c,
                _ => c,
            })
            .collect();
        RealizedCoefficients {
            values,
            price: self.price,
        }
    }
}

#[inline]
fn signum_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn realize_one(kind: ParameterKind, location: f64, spread: f64, draw: f64) -> f64 {
    match kind {
        ParameterKind::Fixed => location,
        ParameterKind::Random(Distribution::Normal) => location + spread.abs() * draw,
        ParameterKind::Random(Distribution::NegatedLognormal) => {
            -(location + spread.abs() * draw).exp()
        }
    }
}

/// Realizes every coefficient from the estimated values and one row of
/// standard-normal draws (one entry per random parameter).
pub fn realize_coefficients(params: &[f64], draw_row: &[f64], spec: &ModelSpec) -> RealizedCoefficients {
    let offsets = spec.estimated_offsets();
    let dims = spec.draw_dimensions();
    let values = spec
        .parameters
        .iter()
        .zip(offsets.iter().zip(&dims))
        .map(|(p, (&o, dim))| match dim {
            Some(k) => realize_one(p.kind, params[o], params[o + 1], draw_row[*k]),
            None => params[o],
        })
        .collect();
    RealizedCoefficients {
        values,
        price: spec.price_parameter(),
    }
}

/// Value of `term` for alternative `alt_id`: 0 when the term does not apply.
pub fn term_value(term: &UtilityTerm, alt_id: &str, attrs: &impl AttributeSource) -> Result<f64, String> {
    if !term.applies(alt_id) {
        return Ok(0.0);
    }
    let base = match &term.attribute {
        TermAttribute::Constant => 1.0,
        TermAttribute::Named(name) => attrs.attribute(name).ok_or_else(|| name.clone())?,
    };
    match &term.multiplier {
        None => Ok(base),
        Some(m) => Ok(base * attrs.attribute(m).ok_or_else(|| m.clone())?),
    }
}

/// Systematic utility of one alternative.
pub fn alternative_utility(
    spec: &ModelSpec,
    coefficients: &RealizedCoefficients,
    alt_id: &str,
    attrs: &impl AttributeSource,
) -> Result<f64> {
    let unbound = |name: String| Error::Evaluation {
        person: "-".into(),
        task: "-".into(),
        message: format!("attribute `{name}` is not bound for alternative {alt_id}"),
    };
    let mut utility = 0.0;
    let mut bracket = 0.0;
    for term in &spec.terms {
        let p = spec
            .parameter_index(&term.parameter)
            .expect("validated specification");
        let x = term_value(term, alt_id, attrs).map_err(unbound)?;
        let c = coefficients.values[p];
        match spec.role(p) {
            ParameterRole::Utility => utility += c * x,
            // φ multiplies the price inside the bracket
            ParameterRole::Price => bracket += x,
            ParameterRole::Money => bracket += c * x,
        }
    }
    if spec.space == Space::Wtp {
        let phi = coefficients.phi().unwrap_or(0.0);
        utility += phi * bracket;
    }
    Ok(utility)
}

/// Logit probabilities over the available alternatives, computed with a
/// max shift. Unavailable alternatives get exactly 0.
pub fn choice_probabilities(utilities: &[f64], available: &[bool]) -> Result<Vec<f64>> {
    let max = utilities
        .iter()
        .zip(available)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Domain("no available alternative".into()));
    }
    if !max.is_finite() {
        return Err(Error::Domain(format!("non-finite utility {max}")));
    }
    let mut out: Vec<f64> = utilities
        .iter()
        .zip(available)
        .map(|(&v, &a)| if a { (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodEvaluation {
    pub value: f64,
    pub per_individual: Vec<f64>,
    pub score: Option<Vec<f64>>,
    /// Per-individual score contributions, used by the sandwich estimator.
    pub individual_scores: Option<Vec<Vec<f64>>>,
}

struct CompiledTask {
    id: String,
    n_alts: usize,
    chosen: usize,
    available: Vec<bool>,
    price: Vec<f64>,
    /// `n_alts × n_params`, term values summed per parameter.
    x: Vec<f64>,
}

struct CompiledPerson {
    id: String,
    tasks: Vec<CompiledTask>,
}

#[derive(Clone)]
struct ParamInfo {
    kind: ParameterKind,
    role: ParameterRole,
    offset: usize,
    dim: Option<usize>,
}

/// A dataset and specification compiled into dense per-task matrices, bound
/// to a draw tensor.
pub struct PanelLikelihood<'a> {
    spec: &'a ModelSpec,
    draws: &'a DrawTensor,
    persons: Vec<CompiledPerson>,
    params: Vec<ParamInfo>,
    price: Option<usize>,
    n_estimated: usize,
}

impl<'a> PanelLikelihood<'a> {
    pub fn new(dataset: &ChoiceDataset, spec: &'a ModelSpec, draws: &'a DrawTensor) -> Result<Self> {
        if draws.dimensions() != spec.n_random() {
            return Err(Error::Config(format!(
                "draw tensor has {} dimensions, specification has {} random parameters",
                draws.dimensions(),
                spec.n_random()
            )));
        }
        if draws.n_individuals() < dataset.individuals.len() {
            return Err(Error::Config(format!(
                "draw tensor covers {} individuals, dataset has {}",
                draws.n_individuals(),
                dataset.individuals.len()
            )));
        }
        let n_params = spec.parameters.len();
        let price = if spec.space == Space::Wtp {
            spec.price_parameter()
        } else {
            None
        };
        let offsets = spec.estimated_offsets();
        let dims = spec.draw_dimensions();
        let params = spec
            .parameters
            .iter()
            .enumerate()
            .map(|(p, def)| ParamInfo {
                kind: def.kind,
                role: spec.role(p),
                offset: offsets[p],
                dim: dims[p],
            })
            .collect();

        // resolve attribute columns once
        struct Bound {
            param: usize,
            column: Option<usize>,
            multiplier: Option<usize>,
        }
        let column = |name: &str| {
            dataset.attribute_index(name).ok_or_else(|| Error::Evaluation {
                person: "-".into(),
                task: "-".into(),
                message: format!("attribute `{name}` is not in the dataset"),
            })
        };
        let mut bound = Vec::with_capacity(spec.terms.len());
        for term in &spec.terms {
            let param = spec.parameter_index(&term.parameter).ok_or_else(|| {
                Error::Config(format!("unknown parameter `{}`", term.parameter))
            })?;
            let col = match &term.attribute {
                TermAttribute::Constant => None,
                TermAttribute::Named(n) => Some(column(n)?),
            };
            let mult = term.multiplier.as_deref().map(column).transpose()?;
            bound.push(Bound {
                param,
                column: col,
                multiplier: mult,
            });
        }

        let mut persons = Vec::with_capacity(dataset.individuals.len());
        for person in &dataset.individuals {
            let mut tasks = Vec::with_capacity(person.tasks.len());
            for task in &person.tasks {
                let n_alts = task.alternatives.len();
                let chosen = task.chosen_index().ok_or_else(|| Error::Evaluation {
                    person: person.person_id.clone(),
                    task: task.task_id.clone(),
                    message: "chosen alternative missing".into(),
                })?;
                let mut x = vec![0.0; n_alts * n_params];
                let mut price_row = vec![0.0; n_alts];
                for (j, alt) in task.alternatives.iter().enumerate() {
                    for (term, b) in spec.terms.iter().zip(&bound) {
                        if !term.applies(&alt.alt_id) {
                            continue;
                        }
                        let mut value = b.column.map_or(1.0, |c| alt.attributes[c]);
                        if let Some(m) = b.multiplier {
                            value *= alt.attributes[m];
                        }
                        if Some(b.param) == price {
                            price_row[j] += value;
                        } else {
                            x[j * n_params + b.param] += value;
                        }
                    }
                }
                tasks.push(CompiledTask {
                    id: task.task_id.clone(),
                    n_alts,
                    chosen,
                    available: task.alternatives.iter().map(|a| a.available).collect(),
                    price: price_row,
                    x,
                });
            }
            persons.push(CompiledPerson {
                id: person.person_id.clone(),
                tasks,
            });
        }
        Ok(PanelLikelihood {
            spec,
            draws,
            persons,
            params,
            price,
            n_estimated: spec.n_estimated(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn n_individuals(&self) -> usize {
        self.persons.len()
    }

    pub fn n_estimated(&self) -> usize {
        self.n_estimated
    }

    /// Simulated log-likelihood, optionally with its analytic score.
    pub fn evaluate(&self, theta: &[f64], with_score: bool) -> Result<LikelihoodEvaluation> {
        if theta.len() != self.n_estimated {
            return Err(Error::Config(format!(
                "parameter vector has {} entries, specification needs {}",
                theta.len(),
                self.n_estimated
            )));
        }
        let parts: Vec<(f64, Option<Vec<f64>>)> = self
            .persons
            .par_iter()
            .enumerate()
            .map(|(n, person)| self.person_contribution(n, person, theta, with_score))
            .collect::<Result<_>>()?;
        let per_individual: Vec<f64> = parts.iter().map(|(v, _)| *v).collect();
        let value = pairwise_sum(&per_individual);
        let individual_scores: Option<Vec<Vec<f64>>> = with_score
            .then(|| parts.into_iter().map(|(_, s)| s.unwrap_or_default()).collect());
        let score = individual_scores.as_ref().map(|scores| {
            (0..self.n_estimated)
                .map(|k| {
                    let column: Vec<f64> = scores.iter().map(|s| s[k]).collect();
                    pairwise_sum(&column)
                })
                .collect()
        });
        Ok(LikelihoodEvaluation {
            value,
            per_individual,
            score,
            individual_scores,
        })
    }

    fn person_contribution(
        &self,
        n: usize,
        person: &CompiledPerson,
        theta: &[f64],
        with_score: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        let n_draws = self.draws.n_draws();
        let n_params = self.params.len();
        let k_est = self.n_estimated;
        let wtp = self.spec.space == Space::Wtp;

        let mut log_p = vec![0.0; n_draws];
        let mut grads = if with_score {
            vec![0.0; n_draws * k_est]
        } else {
            Vec::new()
        };
        let mut coef = vec![0.0; n_params];
        let mut effective = vec![0.0; n_params];
        let mut a = vec![0.0; n_params];
        let mut d_coef = vec![0.0; n_params];
        let mut v = Vec::new();
        let mut prob = Vec::new();

        for r in 0..n_draws {
            let draw = self.draws.row(n, r);
            for (p, info) in self.params.iter().enumerate() {
                let spread = if info.dim.is_some() { theta[info.offset + 1] } else { 0.0 };
                let xi = info.dim.map_or(0.0, |k| draw[k]);
                coef[p] = realize_one(info.kind, theta[info.offset], spread, xi);
            }
            let phi = self.price.map_or(0.0, |p| coef[p]);
            for (p, info) in self.params.iter().enumerate() {
                effective[p] = match info.role {
                    ParameterRole::Money if wtp => phi * coef[p],
                    ParameterRole::Price if wtp => 0.0,
                    _ => coef[p],
                };
            }
            a.iter_mut().for_each(|x| *x = 0.0);
            let mut a_price = 0.0;
            let mut total = 0.0;
            for task in &person.tasks {
                v.clear();
                for j in 0..task.n_alts {
                    let row = &task.x[j * n_params..(j + 1) * n_params];
                    let mut u = phi * task.price[j];
                    for (e, x) in effective.iter().zip(row) {
                        u += e * x;
                    }
                    v.push(u);
                }
                if let Some(bad) = v.iter().position(|u| !u.is_finite()) {
                    return Err(Error::Evaluation {
                        person: person.id.clone(),
                        task: task.id.clone(),
                        message: format!("non-finite utility for alternative {}", bad + 1),
                    });
                }
                let max = v
                    .iter()
                    .zip(&task.available)
                    .filter(|(_, &av)| av)
                    .map(|(&u, _)| u)
                    .fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = v
                    .iter()
                    .zip(&task.available)
                    .filter(|(_, &av)| av)
                    .map(|(&u, _)| (u - max).exp())
                    .sum();
                let log_denom = max + denom.ln();
                let lp = v[task.chosen] - log_denom;
                if lp < PROBABILITY_FLOOR.ln() {
                    return Err(Error::Evaluation {
                        person: person.id.clone(),
                        task: task.id.clone(),
                        message: format!("chosen-alternative probability e^{lp:.1} is below {PROBABILITY_FLOOR:e}"),
                    });
                }
                total += lp;
                if with_score {
                    prob.clear();
                    prob.extend(v.iter().zip(&task.available).map(|(&u, &av)| {
                        if av {
                            (u - log_denom).exp()
                        } else {
                            0.0
                        }
                    }));
                    for j in 0..task.n_alts {
                        let resid = if j == task.chosen { 1.0 } else { 0.0 } - prob[j];
                        if resid == 0.0 {
                            continue;
                        }
                        let row = &task.x[j * n_params..(j + 1) * n_params];
                        for (acc, x) in a.iter_mut().zip(row) {
                            *acc += resid * x;
                        }
                        a_price += resid * task.price[j];
                    }
                }
            }
            log_p[r] = total;

            if with_score {
                // d log P / d coefficient
                let mut money_sum = 0.0;
                for (p, info) in self.params.iter().enumerate() {
                    d_coef[p] = match info.role {
                        ParameterRole::Money if wtp => {
                            money_sum += coef[p] * a[p];
                            phi * a[p]
                        }
                        _ => a[p],
                    };
                }
                if let Some(pp) = self.price {
                    d_coef[pp] = a_price + money_sum;
                }
                let g = &mut grads[r * k_est..(r + 1) * k_est];
                for (p, info) in self.params.iter().enumerate() {
                    let dc = d_coef[p];
                    match (info.kind, info.dim) {
                        (ParameterKind::Random(dist), Some(k)) => {
                            let xi = draw[k];
                            let s = signum_or_zero(theta[info.offset + 1]);
                            let dloc = match dist {
                                Distribution::Normal => dc,
                                Distribution::NegatedLognormal => dc * coef[p],
                            };
                            g[info.offset] = dloc;
                            g[info.offset + 1] = dloc * s * xi;
                        }
                        _ => g[info.offset] = dc,
                    }
                }
            }
        }

        let lse = log_sum_exp(&log_p);
        let value = lse - (n_draws as f64).ln();
        if !value.is_finite() {
            return Err(Error::Evaluation {
                person: person.id.clone(),
                task: "-".into(),
                message: "non-finite simulated likelihood".into(),
            });
        }
        let score = with_score.then(|| {
            let mut s = vec![0.0; k_est];
            for r in 0..n_draws {
                let w = (log_p[r] - lse).exp();
                for (acc, g) in s.iter_mut().zip(&grads[r * k_est..(r + 1) * k_est]) {
                    *acc += w * g;
                }
            }
            s
        });
        Ok((value, score))
    }
}

/// Total simulated log-likelihood with per-individual contributions.
pub fn simulated_loglikelihood(
    dataset: &ChoiceDataset,
    spec: &ModelSpec,
    params: &[f64],
    draws: &DrawTensor,
) -> Result<LikelihoodEvaluation> {
    PanelLikelihood::new(dataset, spec, draws)?.evaluate(params, false)
}

/// Analytic gradient of the simulated log-likelihood, canonical order.
pub fn score_vector(
    dataset: &ChoiceDataset,
    spec: &ModelSpec,
    params: &[f64],
    draws: &DrawTensor,
) -> Result<Vec<f64>> {
    let eval = PanelLikelihood::new(dataset, spec, draws)?.evaluate(params, true)?;
    Ok(eval.score.expect("score requested"))
}

/// Simulated log-likelihood from externally supplied realizations:
/// `realize(person_index, draw_index)` gives the coefficients for that draw.
///
/// This evaluates utilities through [`alternative_utility`] rather than the
/// compiled matrices, so it doubles as a cross-check of [`PanelLikelihood`].
pub fn loglikelihood_from_realizations(
    dataset: &ChoiceDataset,
    spec: &ModelSpec,
    n_draws: usize,
    realize: impl Fn(usize, usize) -> RealizedCoefficients,
) -> Result<f64> {
    let mut contributions = Vec::with_capacity(dataset.individuals.len());
    for (n, person) in dataset.individuals.iter().enumerate() {
        let mut log_p = Vec::with_capacity(n_draws);
        for r in 0..n_draws {
            let coefs = realize(n, r);
            let mut total = 0.0;
            for task in &person.tasks {
                let mut v = Vec::with_capacity(task.alternatives.len());
                for alt in &task.alternatives {
                    let attrs = RowAttributes {
                        schema: &dataset.attribute_schema,
                        values: &alt.attributes,
                    };
                    v.push(alternative_utility(spec, &coefs, &alt.alt_id, &attrs)?);
                }
                let available: Vec<bool> = task.alternatives.iter().map(|a| a.available).collect();
                let max = v.iter().zip(&available).filter(|(_, &a)| a).map(|(&u, _)| u).fold(f64::NEG_INFINITY, f64::max);
                let lse = max
                    + v.iter()
                        .zip(&available)
                        .filter(|(_, &a)| a)
                        .map(|(&u, _)| (u - max).exp())
                        .sum::<f64>()
                        .ln();
                let chosen = task.chosen_index().ok_or_else(|| Error::Evaluation {
                    person: person.person_id.clone(),
                    task: task.task_id.clone(),
                    message: "chosen alternative missing".into(),
                })?;
                total += v[chosen] - lse;
            }
            log_p.push(total);
        }
        contributions.push(log_sum_exp(&log_p) - (n_draws as f64).ln());
    }
    Ok(pairwise_sum(&contributions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_model_spec;
    use proptest::prelude::*;

    fn attrs(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn realizations() {
        let spec = parse_model_spec(
            "param peers random normal\nparam cost random neglognormal\nparam t fixed\n\
             term peers on a alts=1\nterm cost on b alts=1\nterm t on c alts=1\n",
        )
        .unwrap();
        let c = realize_coefficients(&[7.756, 10.872, -3.714, 1.028, 0.5], &[0.0, 0.0], &spec);
        assert_eq!(c.values[0], 7.756);
        assert!((c.values[1] + 0.024_379_808_737_919_54).abs() < 1e-15);
        assert_eq!(c.values[2], 0.5);
        let c = realize_coefficients(&[0.0, 1.0, 0.0, -1.0, 0.0], &[1.0, 1.0], &spec);
        assert_eq!(c.values[0], 1.0);
        // spread enters through its absolute value
        assert!((c.values[1] + 1f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn utilities() {
        let spec = parse_model_spec(
            "space wtp\nprice cost\nparam phi fixed\nparam time fixed\n\
             term phi on cost alts=1\nterm time on time alts=1,2\n",
        )
        .unwrap();
        let zero = RealizedCoefficients {
            values: vec![0.0, 0.0],
            price: Some(0),
        };
        let a = attrs(&[("cost", 10.0), ("time", 5.0)]);
        assert_eq!(alternative_utility(&spec, &zero, "1", &a).unwrap(), 0.0);
        let c = RealizedCoefficients {
            values: vec![-1.0, 1.0],
            price: Some(0),
        };
        assert_eq!(alternative_utility(&spec, &c, "1", &a).unwrap(), -15.0);
        // alternative 2 has no price term
        assert_eq!(alternative_utility(&spec, &c, "2", &a).unwrap(), -5.0);

        let pref = parse_model_spec(
            "param cost fixed\nparam time fixed\nterm cost on cost alts=1\nterm time on time alts=1\n",
        )
        .unwrap();
        let beta = RealizedCoefficients {
            values: vec![-0.02, 0.634 * -0.02],
            price: None,
        };
        let v = alternative_utility(&pref, &beta, "1", &attrs(&[("cost", 20.0), ("time", 30.0)])).unwrap();
        assert!((v + 0.7804).abs() < 1e-12);
    }

    #[test]
    fn unbound_attribute_is_named() {
        let spec = parse_model_spec("param b fixed\nterm b on walk alts=1\n").unwrap();
        let c = RealizedCoefficients {
            values: vec![1.0],
            price: None,
        };
        let err = alternative_utility(&spec, &c, "1", &attrs(&[])).unwrap_err();
        assert!(err.to_string().contains("walk"));
    }

    #[test]
    fn probabilities() {
        let p = choice_probabilities(&[0.0; 4], &[true; 4]).unwrap();
        assert_eq!(p, [0.25; 4]);
        let p = choice_probabilities(&[2f64.ln(), 0.0], &[true, true]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = choice_probabilities(&[1000.0, 0.0], &[true, true]).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1] < 1e-300);
        let p = choice_probabilities(&[5.0, 0.0, 1.0], &[false, true, true]).unwrap();
        assert_eq!(p[0], 0.0);
        assert!(choice_probabilities(&[1.0, 2.0], &[false, false]).is_err());
    }

    #[test]
    fn pairwise_sum_small_cases() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0, 4.0, 5.0]), 15.0);
    }

    proptest! {
        #[test]
        fn probabilities_normalize_and_are_translation_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 2..8),
            shift in -100.0f64..100.0,
            mask in prop::collection::vec(prop::bool::ANY, 8),
        ) {
            let mut available: Vec<bool> = mask[..v.len()].to_vec();
            available[0] = true;
            let p = choice_probabilities(&v, &available).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (pj, &a) in p.iter().zip(&available) {
                if !a { prop_assert_eq!(*pj, 0.0); }
            }
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = choice_probabilities(&shifted, &available).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
