//! Synthetic evacuation panels simulated at known parameters, plus scenario
//! forecasts from a fitted model.

use indexmap::IndexMap;
use rand::distr::{Distribution as _, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Binomial, Normal, StandardNormal};
use rayon::prelude::*;

use crate::dataset::{
    AttributeInfo, AttributeKind, AttributeScope, Alternative, ChoiceDataset, ChoiceTask, PersonRecord,
    PEER_NETWORK_SIZE,
};
use crate::error::{Error, Result};
use crate::estimate::EstimationResult;
use crate::kernel::{alternative_utility, choice_probabilities, realize_coefficients, AttributeSource, RowAttributes};
use crate::spec::ModelSpec;
use crate::wtp::{FloodThreat, ScenarioSpec};

pub const COST_LEVELS: [f64; 5] = [0.0, 10.0, 20.0, 30.0, 40.0];
pub const WALK_LEVELS: [f64; 3] = [0.0, 0.25, 0.5];
pub const WAIT_LEVELS: [f64; 3] = [0.0, 30.0, 60.0];
pub const TRAVEL_LEVELS: [f64; 3] = [20.0, 40.0, 60.0];
pub const TASKS_PER_THREAT: usize = 3;
pub const RIDE_IDS: [&str; 3] = ["1", "2", "3"];
pub const STAY_ID: &str = "4";

/// Smallest draw count accepted by [`forecast_scenario`].
pub const MIN_FORECAST_DRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crowding {
    Private,
    Front,
    Back,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RideLevels {
    pub cost: f64,
    pub walk: f64,
    pub wait: f64,
    pub travel: f64,
    pub crowding: Crowding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDesign {
    pub threat: FloodThreat,
    pub rides: [RideLevels; 3],
    /// Peers choosing rides 1..3 and staying, totaling 5.
    pub peer_counts: [u32; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct PersonDesign {
    pub covariates: IndexMap<String, f64>,
    pub tasks: Vec<TaskDesign>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDesign {
    pub persons: Vec<PersonDesign>,
    pub seed: u64,
}

/// Known parameters bound to a specification.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueParameters {
    pub spec: ModelSpec,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl TrueParameters {
    pub fn new(spec: ModelSpec, values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.len() != spec.n_estimated() {
            return Err(Error::Config(format!(
                "{} true values for {} estimated parameters",
                values.len(),
                spec.n_estimated()
            )));
        }
        Ok(TrueParameters { spec, values, seed })
    }

    /// Binds named values; every estimated name must be present.
    pub fn from_named(spec: ModelSpec, named: &IndexMap<String, f64>, seed: u64) -> Result<Self> {
        let values = spec
            .estimated_names()
            .iter()
            .map(|n| {
                named
                    .get(n)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("truth is missing `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        TrueParameters::new(spec, values, seed)
    }
}

/// Design and choice streams are disjoint, so one seed can drive both.
const CHOICE_STREAM: u64 = 1 << 63;

fn person_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn pick<R: Rng>(rng: &mut R, levels: &[f64]) -> f64 {
    levels[rng.random_range(0..levels.len())]
}

/// Likert score: a rounded normal clamped to 1..=5.
fn likert<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let x: f64 = Normal::new(mean, sd).expect("valid sd").sample(rng);
    x.round().clamp(1.0, 5.0)
}

fn draw_covariates<R: Rng>(rng: &mut R) -> IndexMap<String, f64> {
    let flag = |rng: &mut R, p: f64| f64::from(u8::from(Bernoulli::new(p).expect("valid p").sample(rng)));
    let mut c = IndexMap::new();
    c.insert("age".into(), rng.random_range(1..=6) as f64);
    let luggage: f64 = Uniform::new_inclusive(0.0, 7.5).expect("valid range").sample(rng);
    c.insert("luggage".into(), (luggage * 10.0).round() / 10.0);
    c.insert("disability".into(), flag(rng, 0.03));
    c.insert("pets".into(), flag(rng, 0.49));
    c.insert("anxiety".into(), likert(rng, 4.53, 0.93));
    c.insert("fear".into(), likert(rng, 4.37, 1.00));
    c.insert("major_risk".into(), flag(rng, 0.39));
    c
}

/// Multinomial(5; ¼,¼,¼,¼) by sequential binomials.
fn peer_counts<R: Rng>(rng: &mut R) -> [u32; 4] {
    let mut left = PEER_NETWORK_SIZE as u64;
    let mut out = [0u32; 4];
    for (k, slot) in out.iter_mut().enumerate().take(3) {
        let p = 1.0 / (4 - k) as f64;
        let n = Binomial::new(left, p).expect("valid binomial").sample(rng);
        *slot = n as u32;
        left -= n;
    }
    out[3] = left as u32;
    out
}

fn draw_ride<R: Rng>(rng: &mut R) -> RideLevels {
    RideLevels {
        cost: pick(rng, &COST_LEVELS),
        walk: pick(rng, &WALK_LEVELS),
        wait: pick(rng, &WAIT_LEVELS),
        travel: pick(rng, &TRAVEL_LEVELS),
        crowding: [Crowding::Private, Crowding::Front, Crowding::Back][rng.random_range(0..3)],
    }
}

/// Nine tasks per person, three per threat level in increasing order, with
/// uniformly sampled levels. Each person has an independent seeded stream.
pub fn generate_design(n_individuals: usize, seed: u64) -> SyntheticDesign {
    let persons = (0..n_individuals)
        .map(|i| {
            let mut rng = person_rng(seed, i as u64);
            let covariates = draw_covariates(&mut rng);
            let tasks = FloodThreat::ALL
                .iter()
                .flat_map(|&t| std::iter::repeat_n(t, TASKS_PER_THREAT))
                .map(|threat| TaskDesign {
                    threat,
                    rides: [draw_ride(&mut rng), draw_ride(&mut rng), draw_ride(&mut rng)],
                    peer_counts: peer_counts(&mut rng),
                })
                .collect();
            PersonDesign { covariates, tasks }
        })
        .collect();
    SyntheticDesign { persons, seed }
}

/// Column layout of synthetic datasets.
pub fn synthetic_schema() -> Vec<AttributeInfo> {
    use AttributeKind::*;
    use AttributeScope::*;
    let a = |name: &str, kind, units: &str, scope| AttributeInfo {
        name: name.into(),
        kind,
        units: units.into(),
        scope,
    };
    vec![
        a("cost", Continuous, "dollars", Alternative),
        a("walk", Continuous, "miles", Alternative),
        a("wait", Continuous, "minutes", Alternative),
        a("travel", Continuous, "minutes", Alternative),
        a("back_seat", Binary, "", Alternative),
        a("front_seat", Binary, "", Alternative),
        a("peer_share", Continuous, "share of 5 peers", Alternative),
        a("moderate", Binary, "", Alternative),
        a("extreme", Binary, "", Alternative),
        a("threat_level", Categorical, "1=low 2=moderate 3=extreme", Alternative),
        a("age", Categorical, "decade", Person),
        a("luggage", Continuous, "tens of pounds", Person),
        a("disability", Binary, "", Person),
        a("pets", Binary, "", Person),
        a("anxiety", Categorical, "1-5", Person),
        a("fear", Categorical, "1-5", Person),
        a("major_risk", Binary, "", Person),
    ]
}

fn task_rows(task: &TaskDesign, covariates: &IndexMap<String, f64>) -> Vec<Alternative> {
    let scenario = ScenarioSpec::new(task.threat);
    let scenario_cols = [
        scenario.value_of("moderate").unwrap_or(0.0),
        scenario.value_of("extreme").unwrap_or(0.0),
        scenario.value_of("threat_level").unwrap_or(0.0),
    ];
    let mut rows = Vec::with_capacity(4);
    for (k, id) in RIDE_IDS.iter().chain(std::iter::once(&STAY_ID)).enumerate() {
        let mut v = Vec::with_capacity(17);
        match task.rides.get(k) {
            Some(r) => {
                v.extend([r.cost, r.walk, r.wait, r.travel]);
                v.push(f64::from(u8::from(r.crowding == Crowding::Back)));
                v.push(f64::from(u8::from(r.crowding == Crowding::Front)));
            }
            None => v.extend([0.0; 6]),
        }
        v.push(f64::from(task.peer_counts[k]) / PEER_NETWORK_SIZE);
        v.extend(scenario_cols);
        v.extend(covariates.values().copied());
        rows.push(Alternative {
            alt_id: id.to_string(),
            available: true,
            attributes: v,
        });
    }
    rows
}

impl SyntheticDesign {
    pub fn n_tasks(&self) -> usize {
        self.persons.iter().map(|p| p.tasks.len()).sum()
    }

    /// The design as a dataset whose `chosen` fields come from `choose`.
    fn assemble(&self, choices: &[Vec<String>]) -> ChoiceDataset {
        let individuals = self
            .persons
            .iter()
            .zip(choices)
            .enumerate()
            .map(|(i, (person, chosen))| PersonRecord {
                person_id: (i + 1).to_string(),
                tasks: person
                    .tasks
                    .iter()
                    .zip(chosen)
                    .enumerate()
                    .map(|(t, (task, c))| ChoiceTask {
                        task_id: (t + 1).to_string(),
                        alternatives: task_rows(task, &person.covariates),
                        chosen: c.clone(),
                    })
                    .collect(),
                covariates: person.covariates.clone(),
            })
            .collect();
        ChoiceDataset::new(individuals, synthetic_schema(), Some("peer_share".into()))
    }
}

/// One coefficient realization per person (seeded by person index), then
/// inverse-CDF sampling of each task's choice from one uniform.
pub fn simulate_choices(design: &SyntheticDesign, truth: &TrueParameters) -> Result<ChoiceDataset> {
    let schema = synthetic_schema();
    let spec = &truth.spec;
    let n_random = spec.n_random();
    let choices = design
        .persons
        .par_iter()
        .enumerate()
        .map(|(i, person)| {
            let mut rng = person_rng(truth.seed, CHOICE_STREAM | i as u64);
            let xi: Vec<f64> = (0..n_random).map(|_| StandardNormal.sample(&mut rng)).collect();
            let coefs = realize_coefficients(&truth.values, &xi, spec);
            person
                .tasks
                .iter()
                .map(|task| {
                    let rows = task_rows(task, &person.covariates);
                    let v = rows
                        .iter()
                        .map(|alt| {
                            let attrs = RowAttributes {
                                schema: &schema,
                                values: &alt.attributes,
                            };
                            alternative_utility(spec, &coefs, &alt.alt_id, &attrs)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let available: Vec<bool> = rows.iter().map(|a| a.available).collect();
                    let p = choice_probabilities(&v, &available)?;
                    let u: f64 = rng.random();
                    Ok(rows[inverse_cdf(&p, u)].alt_id.clone())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(design.assemble(&choices))
}

/// Index of the first cumulative probability exceeding `u`; the last
/// positive-probability index absorbs rounding.
pub fn inverse_cdf(probabilities: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in probabilities.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

/// Row attributes with scenario-controlled columns overridden.
struct ScenarioAttributes<'a> {
    row: RowAttributes<'a>,
    scenario: &'a ScenarioSpec,
}

impl AttributeSource for ScenarioAttributes<'_> {
    fn attribute(&self, name: &str) -> Option<f64> {
        self.scenario.value_of(name).or_else(|| self.row.attribute(name))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastShare {
    pub alt_id: String,
    pub mean: f64,
    pub se: f64,
}

/// Average choice probabilities of `task` under `scenario` over `draws`
/// seeded population draws, with Monte Carlo standard errors.
pub fn forecast_scenario(
    result: &EstimationResult,
    scenario: &ScenarioSpec,
    task: &ChoiceTask,
    schema: &[AttributeInfo],
    draws: usize,
    seed: u64,
) -> Result<Vec<ForecastShare>> {
    if draws < MIN_FORECAST_DRAWS {
        return Err(Error::Domain(format!(
            "forecast needs at least {MIN_FORECAST_DRAWS} draws, got {draws}"
        )));
    }
    let spec = &result.spec;
    let available: Vec<bool> = task.alternatives.iter().map(|a| a.available).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_alt = task.alternatives.len();
    let mut sum = vec![0.0; n_alt];
    let mut sum_sq = vec![0.0; n_alt];
    for _ in 0..draws {
        let xi: Vec<f64> = (0..spec.n_random()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let coefs = realize_coefficients(&result.estimates, &xi, spec);
        let v = task
            .alternatives
            .iter()
            .map(|alt| {
                let attrs = ScenarioAttributes {
                    row: RowAttributes {
                        schema,
                        values: &alt.attributes,
                    },
                    scenario,
                };
                alternative_utility(spec, &coefs, &alt.alt_id, &attrs)
            })
            .collect::<Result<Vec<_>>>()?;
        let p = choice_probabilities(&v, &available)?;
        for j in 0..n_alt {
            sum[j] += p[j];
            sum_sq[j] += p[j] * p[j];
        }
    }
    let r = draws as f64;
    Ok(task
        .alternatives
        .iter()
        .enumerate()
        .map(|(j, alt)| {
            let mean = sum[j] / r;
            let var = ((sum_sq[j] / r - mean * mean) * r / (r - 1.0)).max(0.0);
            ForecastShare {
                alt_id: alt.alt_id.clone(),
                mean,
                se: (var / r).sqrt(),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryRow {
    pub name: String,
    pub truth: f64,
    pub estimate: f64,
    pub robust_se: f64,
    /// |estimate − truth| / robust SE.
    pub z: f64,
    /// Sign agreement, for fixed parameters only.
    pub sign_match: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
}

impl RecoveryReport {
    pub fn share_within(&self, tolerance: f64) -> f64 {
        let hits = self.rows.iter().filter(|r| r.z <= tolerance).count();
        hits as f64 / self.rows.len().max(1) as f64
    }

    pub fn fixed_signs_match(&self) -> bool {
        self.rows.iter().all(|r| r.sign_match != Some(false))
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<28} {:>12} {:>12} {:>10} {:>7}\n",
            "parameter", "truth", "estimate", "robust_se", "|z|"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<28} {:>12.4} {:>12.4} {:>10.4} {:>7.2}{}\n",
                r.name,
                r.truth,
                r.estimate,
                r.robust_se,
                r.z,
                match r.sign_match {
                    Some(false) => "  sign flipped",
                    _ => "",
                }
            ));
        }
        out
    }
}

/// Compares estimates with the truth they were simulated from. Spreads are
/// compared in absolute value since only `|s|` is identified.
pub fn compare_recovery(truth: &TrueParameters, result: &EstimationResult) -> RecoveryReport {
    let spec = &truth.spec;
    let names = spec.estimated_names();
    let offsets = spec.estimated_offsets();
    let mut is_spread = vec![false; names.len()];
    let mut is_fixed = vec![false; names.len()];
    for (p, def) in spec.parameters.iter().enumerate() {
        if def.is_random() {
            is_spread[offsets[p] + 1] = true;
        } else {
            is_fixed[offsets[p]] = true;
        }
    }
    let rows = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (t, e) = if is_spread[k] {
                (truth.values[k].abs(), result.estimates[k].abs())
            } else {
                (truth.values[k], result.estimates[k])
            };
            let se = result.robust_se[k];
            RecoveryRow {
                name: name.clone(),
                truth: t,
                estimate: e,
                robust_se: se,
                z: (e - t).abs() / se,
                sign_match: is_fixed[k].then(|| t.signum() == e.signum()),
            }
        })
        .collect();
    RecoveryReport { rows }
}
