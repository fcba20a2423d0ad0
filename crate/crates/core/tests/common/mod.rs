#![allow(dead_code)]

use std::path::PathBuf;

use indexmap::IndexMap;
use mixlogit::dataset::{
    load_long_table, AttributeInfo, AttributeKind, AttributeScope, Alternative, ChoiceDataset, ChoiceTask,
    PersonRecord, TableSchema,
};
use mixlogit::estimate::EstimationResult;
use mixlogit::results::read_result;
use mixlogit::spec::{parse_model_spec, ModelSpec};

pub const COVARIATES: [&str; 7] = ["age", "luggage", "disability", "pets", "anxiety", "fear", "major_risk"];

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn read_spec(name: &str) -> ModelSpec {
    let text = std::fs::read_to_string(data_path(name)).expect("bundled spec");
    parse_model_spec(&text).expect("bundled spec parses")
}

pub fn published_fit() -> EstimationResult {
    read_result(data_path("published_fit.json")).expect("fixture loads")
}

pub fn synthetic() -> ChoiceDataset {
    let schema = TableSchema {
        covariates: COVARIATES.iter().map(|s| s.to_string()).collect(),
        peer_share: Some("peer_share".into()),
        ..TableSchema::default()
    };
    load_long_table(data_path("evac_synthetic.csv"), &schema).expect("synthetic data loads")
}

/// A dataset with alternatives "A" and "B" and attributes x1, x2.
/// `tasks[n][t] = ([x1_A, x2_A], [x1_B, x2_B], chosen)`.
pub fn two_alternative_dataset(tasks: &[Vec<([f64; 2], [f64; 2], &str)>]) -> ChoiceDataset {
    let schema = ["x1", "x2"]
        .iter()
        .map(|n| AttributeInfo {
            name: n.to_string(),
            kind: AttributeKind::Continuous,
            units: String::new(),
            scope: AttributeScope::Alternative,
        })
        .collect();
    let individuals = tasks
        .iter()
        .enumerate()
        .map(|(n, person)| PersonRecord {
            person_id: format!("p{n}"),
            tasks: person
                .iter()
                .enumerate()
                .map(|(t, (a, b, chosen))| ChoiceTask {
                    task_id: format!("t{t}"),
                    alternatives: vec![
                        Alternative {
                            alt_id: "A".into(),
                            available: true,
                            attributes: a.to_vec(),
                        },
                        Alternative {
                            alt_id: "B".into(),
                            available: true,
                            attributes: b.to_vec(),
                        },
                    ],
                    chosen: chosen.to_string(),
                })
                .collect(),
            covariates: IndexMap::new(),
        })
        .collect();
    ChoiceDataset::new(individuals, schema, None)
}

/// Two people, two binary tasks each.
pub fn tiny_dataset() -> ChoiceDataset {
    two_alternative_dataset(&[
        vec![([1.0, 0.5], [0.0, 2.0], "A"), ([2.0, -1.0], [1.5, 0.0], "B")],
        vec![([0.3, 1.0], [1.2, 0.7], "B"), ([-1.0, 0.4], [0.5, 1.5], "A")],
    ])
}

/// Plain softmax probability of the chosen alternative, no shifting.
pub fn naive_logit(v: &[f64], chosen: usize) -> f64 {
    let denom: f64 = v.iter().map(|u| u.exp()).sum();
    v[chosen].exp() / denom
}

/// Random points near `center`: each entry scaled by a factor in
/// `[1 - spread, 1 + spread]`, plus a small absolute jitter.
pub fn points_near(center: &[f64], spread: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            center
                .iter()
                .map(|&c| c * (1.0 + rng.random_range(-spread..spread)) + rng.random_range(-0.01..0.01))
                .collect()
        })
        .collect()
}

/// Fourth-order central difference of `f` along each coordinate.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut point = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = 1e-3 * x[j].abs().max(1.0);
            let mut at = |d: f64| {
                point[j] = x[j] + d;
                let v = f(&point);
                point[j] = x[j];
                v
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Relative error of one gradient component, with the denominator floored
/// at 1e-8 of the gradient's largest entry so structurally zero components
/// are judged against roundoff rather than against themselves.
pub fn gradient_error(analytic: &[f64], numeric: &[f64], k: usize) -> f64 {
    let norm = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let scale = analytic[k].abs().max(numeric[k].abs()).max(1e-8 * norm);
    if scale == 0.0 {
        0.0
    } else {
        (analytic[k] - numeric[k]).abs() / scale
    }
}
