//! Acceptance criteria, one PASS/FAIL line each. Run with
//! `cargo test --release --test acceptance`. Failures are reported but only
//! change the exit code when `MIXLOGIT_ACCEPTANCE_STRICT=1` is set.

#[path = "common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use mixlogit::dataset::{read_long_table, write_long_table, TableSchema};
use mixlogit::draws::{build_draw_tensor, radical_inverse, standard_normal_from_uniform, DrawPlan};
use mixlogit::estimate::{estimate, fit_statistics, robust_covariance};
use mixlogit::kernel::{
    choice_probabilities, loglikelihood_from_realizations, realize_coefficients, simulated_loglikelihood,
    PanelLikelihood,
};
use mixlogit::optim::OptimizerConfig;
use mixlogit::simulate::{compare_recovery, generate_design, simulate_choices, TrueParameters};
use mixlogit::spec::parse_model_spec;
use mixlogit::wtp::{build_report, coefficient_of_variation, Direction, FloodThreat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fit_fixtures() -> Outcome {
    let outcomes = [4usize; 5274];
    let wtp = fit_statistics(-5425.07, 24, &outcomes);
    let pref = fit_statistics(-5645.22, 24, &outcomes);
    let gap = -5425.07f64 - -5645.22;
    ensure((wtp.ll_null - 5274.0 * 0.25f64.ln()).abs() < 1e-9, "null LL")?;
    ensure((wtp.adjusted_rho_sq - 0.255).abs() <= 1e-3, format!("wtp rho² {}", wtp.adjusted_rho_sq))?;
    ensure((pref.adjusted_rho_sq - 0.225).abs() <= 1e-3, format!("pref rho² {}", pref.adjusted_rho_sq))?;
    ensure((gap - 220.15).abs() <= 0.01, format!("LL gap {gap}"))?;
    Ok(format!(
        "rho² {:.4} / {:.4}, LL gap {gap:.2}",
        wtp.adjusted_rho_sq, pref.adjusted_rho_sq
    ))
}

fn cov_fixtures() -> Outcome {
    let cases = [
        (-3.714, 1.028, -0.277),
        (-1.273, -1.911, 1.501),
        (7.756, 10.872, 1.402),
        (-3.536, 0.605, -0.171),
        (71.771, 57.285, 0.798),
        (-271.125, -57.813, 0.213),
    ];
    let mut got = Vec::new();
    for (m, s, expected) in cases {
        let cov = coefficient_of_variation(m, s).map_err(|e| e.to_string())?;
        ensure((cov - expected).abs() <= 1e-3, format!("{m}/{s}: {cov} vs {expected}"))?;
        got.push(format!("{cov:.3}"));
    }
    Ok(got.join(", "))
}

fn scenario_fixtures() -> Outcome {
    let report = build_report(&published_fit(), &FloodThreat::ALL, 0).map_err(|e| e.to_string())?;
    let cases = [
        ("peers_staying", FloodThreat::Moderate, -43.887, Direction::Pay, "pay $43.89"),
        ("peers_staying", FloodThreat::Extreme, 76.849, Direction::Compensate, "compensate $76.85"),
        ("peers_ride", FloodThreat::Moderate, 28.173, Direction::Compensate, "compensate $28.17"),
        ("peers_ride", FloodThreat::Extreme, -1.038, Direction::Pay, "pay $1.04"),
    ];
    let mut got = Vec::new();
    for (p, t, net, direction, text) in cases {
        let row = report
            .scenario_rows
            .iter()
            .find(|r| r.parameter == p && r.scenario == t)
            .ok_or(format!("no {p} {t} row"))?;
        ensure((row.net - net).abs() <= 0.01, format!("{p} {t}: {} vs {net}", row.net))?;
        ensure(row.money.direction == direction, format!("{p} {t}: direction"))?;
        ensure(row.money.to_string() == text, format!("{p} {t}: `{}`", row.money))?;
        got.push(format!("{p}/{t} {}", row.money));
    }
    Ok(got.join("; "))
}

fn ratio_fixtures() -> Outcome {
    let report = build_report(&published_fit(), &FloodThreat::ALL, 0).map_err(|e| e.to_string())?;
    let ratio = |a: &str| report.ratios.iter().find(|r| r.numerator == a).map(|r| r.ratio);
    let cases = [("wait", 1.249, 0.002), ("fear", 1.319, 0.002), ("peers_staying", 3.778, 0.005)];
    let mut got = Vec::new();
    for (a, expected, tol) in cases {
        let r = ratio(a).ok_or(format!("no {a} ratio"))?;
        ensure((r - expected).abs() <= tol, format!("{a}: {r} vs {expected}"))?;
        got.push(format!("{r:.3}"));
    }
    Ok(got.join(", "))
}

fn oracle_equivalence() -> Outcome {
    let data = tiny_dataset();
    let spec = parse_model_spec(
        "space preference\nparam b1 random normal init=0\nparam b2 fixed init=0\nterm b1 on x1 alts=A,B\nterm b2 on x2 alts=A\n",
    )
    .map_err(|e| format!("{e:?}"))?;
    let theta: [f64; 3] = [0.4, -0.8, -0.7];
    let brute = |r_count: usize| -> Result<(f64, f64), String> {
        let draws = build_draw_tensor(&DrawPlan::new(r_count, 1).unwrap(), 2).map_err(|e| e.to_string())?;
        let mut oracle = 0.0;
        let mut closed_form = 0.0;
        for (n, person) in data.individuals.iter().enumerate() {
            let mut avg = 0.0;
            for r in 0..r_count {
                let b1 = theta[0] + theta[1].abs() * draws.row(n, r)[0];
                let mut prod = 1.0;
                for task in &person.tasks {
                    let a = &task.alternatives[0].attributes;
                    let b = &task.alternatives[1].attributes;
                    let p = naive_logit(&[b1 * a[0] + theta[2] * a[1], b1 * b[0]], task.chosen_index().unwrap());
                    prod *= p;
                    closed_form += p.ln();
                }
                avg += prod / r_count as f64;
            }
            oracle += avg.ln();
        }
        let got = simulated_loglikelihood(&data, &spec, &theta, &draws)
            .map_err(|e| e.to_string())?
            .value;
        let reference = if r_count == 1 { closed_form } else { oracle };
        Ok((got, reference))
    };
    let (two, two_oracle) = brute(2)?;
    ensure(relative_error(two, two_oracle) <= 1e-12, format!("R=2: {two} vs {two_oracle}"))?;
    let (one, one_oracle) = brute(1)?;
    ensure(relative_error(one, one_oracle) <= 1e-12, format!("R=1: {one} vs {one_oracle}"))?;
    Ok(format!(
        "R=2 rel err {:.1e}, R=1 rel err {:.1e}",
        relative_error(two, two_oracle),
        relative_error(one, one_oracle)
    ))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let data = synthetic().head(50);
    let spec = read_spec("evac.spec");
    let draws = build_draw_tensor(&DrawPlan::new(50, spec.n_random()).unwrap(), 50).map_err(|e| e.to_string())?;
    let lik = PanelLikelihood::new(&data, &spec, &draws).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for theta in points_near(&published_fit().estimates, 0.2, 10, 2024) {
        let analytic = lik.evaluate(&theta, true).map_err(|e| e.to_string())?.score.unwrap();
        let numeric = numeric_gradient(|x| lik.evaluate(x, false).unwrap().value, &theta);
        for k in 0..analytic.len() {
            worst = worst.max(gradient_error(&analytic, &numeric, k));
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-5, format!("worst relative error {worst:.2e}"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("worst relative error {worst:.2e} over 10 points, {:.1}s", elapsed.as_secs_f64()))
}

fn space_equivalence() -> Outcome {
    let data = synthetic().head(50);
    let spec = read_spec("evac.spec");
    let pref = spec.as_preference_space();
    let r_count = 50;
    let draws = build_draw_tensor(&DrawPlan::new(r_count, spec.n_random()).unwrap(), 50).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for theta in points_near(&published_fit().estimates, 0.3, 10, 7) {
        let wtp = simulated_loglikelihood(&data, &spec, &theta, &draws)
            .map_err(|e| e.to_string())?
            .value;
        let mapped = loglikelihood_from_realizations(&data, &pref, r_count, |n, r| {
            realize_coefficients(&theta, draws.row(n, r), &spec).to_preference_space(&spec)
        })
        .map_err(|e| e.to_string())?;
        worst = worst.max((wtp - mapped).abs());
    }
    ensure(worst <= 1e-8, format!("worst |ΔLL| {worst:.2e}"))?;
    Ok(format!("worst |ΔLL| {worst:.2e} over 10 points"))
}

fn recovery(n: usize, draws: usize, tolerance: f64, budget: Duration) -> Outcome {
    let start = Instant::now();
    let spec = read_spec("evac.spec");
    let truth = TrueParameters::new(spec.clone(), published_fit().estimates, 0).map_err(|e| e.to_string())?;
    let data = simulate_choices(&generate_design(n, 0), &truth).map_err(|e| e.to_string())?;
    let plan = DrawPlan::new(draws, spec.n_random()).map_err(|e| e.to_string())?;
    let result = estimate(&data, &spec, &plan, &OptimizerConfig::default()).map_err(|e| e.to_string())?;
    let report = compare_recovery(&truth, &result);
    let share = report.share_within(tolerance);
    let elapsed = start.elapsed();
    let misses: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.z > tolerance)
        .map(|r| format!("{} (|z| {:.2})", r.name, r.z))
        .collect();
    let summary = format!(
        "N={n} R={draws}: {:.1}% within {tolerance} SEs, fixed signs {}, converged {}, {:.0}s; outside: [{}]",
        100.0 * share,
        if report.fixed_signs_match() { "match" } else { "differ" },
        result.converged,
        elapsed.as_secs_f64(),
        misses.join(", ")
    );
    ensure(share >= 0.9, summary.clone())?;
    ensure(report.fixed_signs_match(), summary.clone())?;
    ensure(elapsed <= budget, summary.clone())?;
    Ok(summary)
}

/// (p, Φ⁻¹(p)) computed with 50-digit arithmetic.
const QUANTILES: [(f64, f64); 25] = [
    (1e-12, -7.0344838253011319298),
    (1e-10, -6.3613409024040562047),
    (1e-8, -5.6120012441747887315),
    (1e-6, -4.7534243088228989482),
    (1e-4, -3.7190164854556805644),
    (0.001, -3.0902323061678135415),
    (0.01, -2.3263478740408411009),
    (0.025, -1.9599639845400542355),
    (0.05, -1.6448536269514727149),
    (0.1, -1.281551565544600467),
    (0.2, -0.84162123357291420518),
    (0.25, -0.6744897501960817432),
    (0.31, -0.49585034734745332657),
    (0.4, -0.2533471031357997988),
    (0.5, 0.0),
    (0.6, 0.2533471031357997988),
    (0.69, 0.49585034734745332657),
    (0.75, 0.6744897501960817432),
    (0.8, 0.84162123357291420518),
    (0.9, 1.281551565544600467),
    (0.95, 1.6448536269514727149),
    (0.975, 1.9599639845400542355),
    (0.99, 2.3263478740408411009),
    (0.999, 3.0902323061678135415),
    (0.999999, 4.7534243088228989482),
];

fn halton_and_quantiles() -> Outcome {
    let base2 = [1, 2, 3, 4, 5, 6, 7, 8].map(|i| radical_inverse(2, i));
    let base3 = [1, 2, 3, 4, 5, 6, 7, 8].map(|i| radical_inverse(3, i));
    ensure(base2 == [0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875, 0.0625], format!("base 2 {base2:?}"))?;
    let third = |n: f64, d: f64| n / d;
    let expected3 = [
        third(1.0, 3.0),
        third(2.0, 3.0),
        third(1.0, 9.0),
        third(4.0, 9.0),
        third(7.0, 9.0),
        third(2.0, 9.0),
        third(5.0, 9.0),
        third(8.0, 9.0),
    ];
    ensure(base3 == expected3, format!("base 3 {base3:?}"))?;
    let mut worst: f64 = 0.0;
    for (p, q) in QUANTILES {
        let got = standard_normal_from_uniform(p).map_err(|e| e.to_string())?;
        worst = worst.max((got - q).abs());
    }
    ensure(worst <= 1e-9, format!("worst quantile error {worst:.2e}"))?;
    Ok(format!("16 radical inverses exact, worst quantile error {worst:.1e}"))
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    // probability normalization and translation invariance
    for _ in 0..2000 {
        let j = rng.random_range(2..8);
        let v: Vec<f64> = (0..j).map(|_| rng.random_range(-700.0..700.0)).collect();
        let mut available: Vec<bool> = (0..j).map(|_| rng.random_bool(0.7)).collect();
        available[0] = true;
        let p = choice_probabilities(&v, &available).map_err(|e| e.to_string())?;
        ensure((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "probabilities do not sum to 1")?;
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = v.iter().map(|u| u + c).collect();
        let q = choice_probabilities(&shifted, &available).map_err(|e| e.to_string())?;
        ensure(p.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-12), "translation changed probabilities")?;
    }

    // dataset round trip
    let data = synthetic().head(40);
    let mut buf = Vec::new();
    write_long_table(&data, &mut buf).map_err(|e| e.to_string())?;
    let schema = TableSchema {
        covariates: COVARIATES.iter().map(|s| s.to_string()).collect(),
        peer_share: Some("peer_share".into()),
        ..TableSchema::default()
    };
    let back = read_long_table(buf.as_slice(), &schema).map_err(|e| e.to_string())?;
    ensure(back == data, "dataset changed on a write/read round trip")?;

    // determinism under fixed seeds, including thread count
    let spec = read_spec("evac.spec");
    let truth = TrueParameters::new(spec.clone(), published_fit().estimates, 3).map_err(|e| e.to_string())?;
    let a = simulate_choices(&generate_design(30, 3), &truth).map_err(|e| e.to_string())?;
    let b = simulate_choices(&generate_design(30, 3), &truth).map_err(|e| e.to_string())?;
    ensure(a == b, "simulation is not deterministic")?;
    let draws = build_draw_tensor(&DrawPlan::new(20, spec.n_random()).unwrap(), 40).map_err(|e| e.to_string())?;
    let lik = PanelLikelihood::new(&data, &spec, &draws).map_err(|e| e.to_string())?;
    let theta = published_fit().estimates;
    let eval = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| lik.evaluate(&theta, true).unwrap())
    };
    let (one, four) = (eval(1), eval(4));
    ensure(
        one.value.to_bits() == four.value.to_bits() && one.score == four.score,
        "thread count changed the likelihood",
    )?;

    // covariance symmetry on a subsample where every parameter is identified
    let full = synthetic();
    let people = full
        .individuals
        .iter()
        .enumerate()
        .filter(|(i, p)| *i < 60 || p.covariates["disability"] == 1.0)
        .map(|(_, p)| p.clone())
        .collect();
    let sub = mixlogit::ChoiceDataset::new(people, full.attribute_schema.clone(), full.peer_share_attribute.clone());
    let draws = build_draw_tensor(&DrawPlan::new(20, spec.n_random()).unwrap(), sub.individuals.len())
        .map_err(|e| e.to_string())?;
    let lik = PanelLikelihood::new(&sub, &spec, &draws).map_err(|e| e.to_string())?;
    let cov = robust_covariance(&lik, &theta).map_err(|e| e.to_string())?;
    ensure(cov.classical == cov.classical.transpose(), "classical covariance not symmetric")?;
    ensure(cov.robust == cov.robust.transpose(), "robust covariance not symmetric")?;
    Ok("normalization, translation, round trip, determinism, covariance symmetry".into())
}

fn main() {
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("1 fit-statistic fixtures", Box::new(fit_fixtures)),
        ("2 COV fixtures", Box::new(cov_fixtures)),
        ("3 scenario WTP fixtures", Box::new(scenario_fixtures)),
        ("4 ratio fixtures", Box::new(ratio_fixtures)),
        ("5 oracle equivalence", Box::new(oracle_equivalence)),
        ("6 gradient check", Box::new(gradient_check)),
        ("7 space equivalence", Box::new(space_equivalence)),
        (
            "8 parameter recovery",
            Box::new(|| recovery(586, 500, 2.0, Duration::from_secs(1800))),
        ),
        (
            "8 parameter recovery, fast variant",
            Box::new(|| recovery(300, 200, 2.5, Duration::from_secs(300))),
        ),
        ("9 Halton and quantiles", Box::new(halton_and_quantiles)),
        ("10 property suites", Box::new(property_suites)),
    ];

    let total = criteria.len();
    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", total - failures);
    if failures > 0 && std::env::var_os("MIXLOGIT_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
