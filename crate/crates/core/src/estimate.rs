//! Simulated maximum likelihood by BFGS, with sandwich standard errors.

use log::{info, warn};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::dataset::ChoiceDataset;
use crate::draws::{build_draw_tensor, DrawPlan, DrawTensor};
use crate::error::{Error, Result};
use crate::kernel::PanelLikelihood;
use crate::optim::{minimize, OptimizerConfig, Termination};
use crate::spec::{validate_spec, Distribution, ModelSpec, ParameterKind, ParameterRole};

/// Spread used for every random parameter when warm-starting.
pub const START_SPREAD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub spec: ModelSpec,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub classical_se: Vec<f64>,
    pub robust_se: Vec<f64>,
    pub robust_t: Vec<f64>,
    pub ll_start: f64,
    pub ll_final: f64,
    pub ll_null: f64,
    pub adjusted_rho_sq: f64,
    pub n_individuals: usize,
    pub n_outcomes: usize,
    pub n_draws: usize,
    pub converged: bool,
    pub termination: Option<Termination>,
    pub iterations: usize,
    pub draw_plan: Option<DrawPlan>,
    /// Why standard errors are missing, if they are.
    pub covariance_error: Option<String>,
}

impl EstimationResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.estimates[i])
    }

    pub fn robust_se_of(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.robust_se[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitStatistics {
    pub ll_null: f64,
    pub adjusted_rho_sq: f64,
}

/// Equal-shares null log-likelihood and the parameter-penalized rho-square
/// `1 - (LL - K) / LL0`. `available` holds the available-alternative count
/// of each modeled outcome.
pub fn fit_statistics(ll_final: f64, n_estimated: usize, available: &[usize]) -> FitStatistics {
    let ll_null: f64 = available.iter().map(|&j| -(j as f64).ln()).sum();
    FitStatistics {
        ll_null,
        adjusted_rho_sq: 1.0 - (ll_final - n_estimated as f64) / ll_null,
    }
}

/// `estimate / se`, NaN when the standard error is missing or zero.
pub fn robust_t(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        estimate / se
    } else {
        f64::NAN
    }
}

#[derive(Clone, Debug)]
pub struct CovarianceEstimate {
    /// Hessian of the simulated log-likelihood (symmetrized).
    pub hessian: DMatrix<f64>,
    /// Σ_n s_n s_n' over individual score contributions.
    pub bhhh: DMatrix<f64>,
    pub classical: DMatrix<f64>,
    pub robust: DMatrix<f64>,
}

impl CovarianceEstimate {
    pub fn classical_se(&self) -> Vec<f64> {
        self.classical.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn robust_se(&self) -> Vec<f64> {
        self.robust.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetrizes and clips negative eigenvalues to 0.
fn floor_psd(m: &DMatrix<f64>, label: &str) -> DMatrix<f64> {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let negatives = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
    warn!("{label} covariance had {negatives} negative eigenvalue(s); floored at 0");
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&out)
}

/// Classical (`H⁻¹`) and robust (`H⁻¹ B H⁻¹`) covariance at `theta`, with `H`
/// the negative Hessian from central differences of the analytic score and
/// `B` the outer product of per-individual scores.
pub fn robust_covariance(likelihood: &PanelLikelihood<'_>, theta: &[f64]) -> Result<CovarianceEstimate> {
    let k = theta.len();
    let at = likelihood.evaluate(theta, true)?;
    let scores = at.individual_scores.expect("score requested");
    let mut bhhh = DMatrix::zeros(k, k);
    for s in &scores {
        let v = nalgebra::DVector::from_column_slice(s);
        bhhh += &v * v.transpose();
    }

    let mut hessian = DMatrix::zeros(k, k);
    let mut point = theta.to_vec();
    for j in 0..k {
        let h = 1e-5 * theta[j].abs().max(1.0);
        point[j] = theta[j] + h;
        let plus = likelihood.evaluate(&point, true)?.score.expect("score");
        point[j] = theta[j] - h;
        let minus = likelihood.evaluate(&point, true)?.score.expect("score");
        point[j] = theta[j];
        for i in 0..k {
            hessian[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    let hessian = symmetrize(&hessian);
    let information = -&hessian;

    let eig = SymmetricEigen::new(information.clone());
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let (min_idx, min_val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, &l)| (i, l))
        .unwrap_or((0, 0.0));
    if k > 0 && min_val.abs() <= 1e-12 * max_abs.max(f64::MIN_POSITIVE) {
        let vector = eig.eigenvectors.column(min_idx);
        let worst = vector
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        return Err(Error::SingularHessian {
            parameter: likelihood.spec().estimated_names()[worst].clone(),
            eigenvalue: min_val,
        });
    }
    let inv_values = eig.eigenvalues.map(|l| 1.0 / l);
    let inverse = &eig.eigenvectors * DMatrix::from_diagonal(&inv_values) * eig.eigenvectors.transpose();
    let inverse = symmetrize(&inverse);
    let robust = &inverse * &bhhh * &inverse;
    Ok(CovarianceEstimate {
        classical: floor_psd(&inverse, "classical"),
        robust: floor_psd(&robust, "robust"),
        hessian,
        bhhh,
    })
}

fn fd_gradient_check(likelihood: &PanelLikelihood<'_>, theta: &[f64]) -> Result<()> {
    let analytic = likelihood.evaluate(theta, true)?.score.expect("score");
    let mut point = theta.to_vec();
    for j in 0..theta.len() {
        let h = 1e-5 * theta[j].abs().max(1.0);
        point[j] = theta[j] + h;
        let up = likelihood.evaluate(&point, false)?.value;
        point[j] = theta[j] - h;
        let down = likelihood.evaluate(&point, false)?.value;
        point[j] = theta[j];
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[j].abs().max(numeric.abs()).max(1.0);
        if (numeric - analytic[j]).abs() > 1e-4 * scale {
            warn!(
                "gradient check: component {j} analytic {} vs finite difference {numeric}",
                analytic[j]
            );
        }
    }
    Ok(())
}

/// Maximizes the simulated log-likelihood from `start`.
pub fn maximize(
    dataset: &ChoiceDataset,
    spec: &ModelSpec,
    plan: &DrawPlan,
    cfg: &OptimizerConfig,
    start: &[f64],
) -> Result<EstimationResult> {
    let mismatches = validate_spec(spec, dataset);
    if !mismatches.is_empty() {
        return Err(Error::SpecMismatch(mismatches));
    }
    let draws = build_draw_tensor(plan, dataset.individuals.len())?;
    maximize_with_draws(dataset, spec, &draws, cfg, start)
}

pub fn maximize_with_draws(
    dataset: &ChoiceDataset,
    spec: &ModelSpec,
    draws: &DrawTensor,
    cfg: &OptimizerConfig,
    start: &[f64],
) -> Result<EstimationResult> {
    cfg.validate()?;
    let likelihood = PanelLikelihood::new(dataset, spec, draws)?;
    if start.len() != spec.n_estimated() {
        return Err(Error::StartPoint(format!(
            "start has {} values, specification needs {}",
            start.len(),
            spec.n_estimated()
        )));
    }
    let ll_start = likelihood
        .evaluate(start, false)
        .map_err(|e| Error::StartPoint(e.to_string()))?
        .value;
    if cfg.fd_check {
        fd_gradient_check(&likelihood, start)?;
    }

    let objective = |theta: &[f64]| {
        let eval = likelihood.evaluate(theta, true).ok()?;
        let grad = eval.score?.into_iter().map(|g| -g).collect();
        Some((-eval.value, grad))
    };
    let min = minimize(objective, start, cfg)?;
    info!(
        "optimizer stopped after {} iterations ({:?}), LL = {}",
        min.iterations, min.termination, -min.value
    );

    let k = spec.n_estimated();
    let (classical_se, robust_se, covariance_error) = match robust_covariance(&likelihood, &min.x) {
        Ok(cov) => (cov.classical_se(), cov.robust_se(), None),
        Err(e) => {
            warn!("covariance unavailable: {e}");
            (vec![f64::NAN; k], vec![f64::NAN; k], Some(e.to_string()))
        }
    };
    let robust_t_values = min
        .x
        .iter()
        .zip(&robust_se)
        .map(|(&e, &se)| robust_t(e, se))
        .collect();
    let ll_final = -min.value;
    let fit = fit_statistics(ll_final, k, &dataset.available_counts());
    Ok(EstimationResult {
        spec: spec.clone(),
        names: spec.estimated_names(),
        estimates: min.x.clone(),
        classical_se,
        robust_se,
        robust_t: robust_t_values,
        ll_start,
        ll_final,
        ll_null: fit.ll_null,
        adjusted_rho_sq: fit.adjusted_rho_sq,
        n_individuals: dataset.individuals.len(),
        n_outcomes: dataset.n_observations,
        n_draws: draws.n_draws(),
        converged: min.converged(),
        termination: Some(min.termination),
        iterations: min.iterations,
        draw_plan: Some(draws.plan().clone()),
        covariance_error,
    })
}

/// Two-stage warm start: a fixed-coefficient preference-space logit from
/// zeros, mapped onto the target specification.
pub fn starting_values(dataset: &ChoiceDataset, spec: &ModelSpec, cfg: &OptimizerConfig) -> Result<Vec<f64>> {
    let stage1 = spec.fixed_preference_counterpart();
    let plan = DrawPlan::new(1, 0)?;
    let draws = build_draw_tensor(&plan, dataset.individuals.len())?;
    let fit = maximize_with_draws(dataset, &stage1, &draws, cfg, &vec![0.0; stage1.n_estimated()])?;
    Ok(map_stage_one(spec, &fit.estimates))
}

/// Maps fixed preference-space coefficients (one per parameter) onto a start
/// point for `spec`.
pub fn map_stage_one(spec: &ModelSpec, beta: &[f64]) -> Vec<f64> {
    const FLOOR: f64 = 1e-2;
    let price = spec.price_parameter();
    let phi = price.map(|p| beta[p]).map(|b| if b < 0.0 { b } else { -FLOOR });
    let mut out = Vec::with_capacity(spec.n_estimated());
    for (p, def) in spec.parameters.iter().enumerate() {
        let value = match (spec.role(p), phi) {
            (ParameterRole::Price, Some(phi)) => phi,
            (ParameterRole::Money, Some(phi)) => beta[p] / phi,
            _ => beta[p],
        };
        match def.kind {
            ParameterKind::Fixed => out.push(value),
            ParameterKind::Random(Distribution::Normal) => {
                out.push(value);
                out.push(START_SPREAD);
            }
            ParameterKind::Random(Distribution::NegatedLognormal) => {
                out.push(if value < 0.0 { (-value).ln() } else { FLOOR.ln() });
                out.push(START_SPREAD);
            }
        }
    }
    out
}

/// Warm start followed by full maximization.
pub fn estimate(
    dataset: &ChoiceDataset,
    spec: &ModelSpec,
    plan: &DrawPlan,
    cfg: &OptimizerConfig,
) -> Result<EstimationResult> {
    let mismatches = validate_spec(spec, dataset);
    if !mismatches.is_empty() {
        return Err(Error::SpecMismatch(mismatches));
    }
    let start = starting_values(dataset, spec, cfg)?;
    maximize(dataset, spec, plan, cfg, &start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_log_likelihood() {
        let fit = fit_statistics(-5425.07, 24, &vec![4; 5274]);
        assert!((fit.ll_null + 7311.316_460_546_303).abs() < 1e-8);
        assert!((fit.adjusted_rho_sq - 0.2547).abs() < 1e-4);
    }

    #[test]
    fn zero_parameters_at_null_is_zero() {
        let counts = vec![4, 3, 2, 4];
        let ll0 = fit_statistics(0.0, 0, &counts).ll_null;
        assert_eq!(fit_statistics(ll0, 0, &counts).adjusted_rho_sq, 0.0);
    }

    #[test]
    fn stage_one_mapping_into_wtp_space() {
        let spec = crate::spec::parse_model_spec(
            "space wtp\nprice cost\nparam asc fixed\nparam phi random neglognormal\n\
             param t fixed\nparam peers random normal\n\
             term asc on ASC alts=1\nterm phi on cost alts=1\nterm t on time alts=1\nterm peers on share alts=1\n",
        )
        .unwrap();
        let start = map_stage_one(&spec, &[1.5, -0.05, -0.02, 0.1]);
        assert_eq!(start.len(), 6);
        assert_eq!(start[0], 1.5);
        assert!((start[1] - 0.05f64.ln()).abs() < 1e-15);
        assert_eq!(start[2], START_SPREAD);
        assert!((start[3] - 0.4).abs() < 1e-12);
        assert!((start[4] + 2.0).abs() < 1e-12);
    }
}
