//! BFGS minimization with a strong-Wolfe line search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop when the gradient's infinity norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step's infinity norm falls below this.
    pub step_tolerance: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Compare the analytic gradient with finite differences at the start.
    pub fd_check: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-10,
            c1: 1e-4,
            c2: 0.9,
            fd_check: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective value after every accepted iterate, starting point first.
    pub history: Vec<f64>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Gradient | Termination::Step)
    }
}

const MAX_BRACKET: usize = 40;
/// Relative band around the start value treated as "no measurable change".
const FLAT_TOLERANCE: f64 = 1e-12;
const MAX_ZOOM: usize = 40;

struct Point {
    alpha: f64,
    value: f64,
    gradient: DVector<f64>,
    slope: f64,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `objective`, which returns the value and gradient or `None`
/// where the function cannot be evaluated (treated as +∞ by the line search).
pub fn minimize<F>(mut objective: F, start: &[f64], cfg: &OptimizerConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let n = start.len();
    let (f0, g0) = objective(start)
        .filter(|(f, g)| f.is_finite() && g.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::StartPoint("objective is not finite at the start point".into()))?;

    let mut x = DVector::from_column_slice(start);
    let mut f = f0;
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh_h = true;
    let mut history = vec![f];
    let mut iterations = 0;

    let mut eval = |x: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        objective(x.as_slice())
            .filter(|(f, g)| f.is_finite() && g.iter().all(|v| v.is_finite()))
            .map(|(f, g)| (f, DVector::from_vec(g)))
    };

    let termination = loop {
        if inf_norm(&g) < cfg.gradient_tolerance {
            break Termination::Gradient;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }

        let mut direction = -(&h * &g);
        if direction.dot(&g) >= 0.0 {
            h = DMatrix::identity(n, n);
            fresh_h = true;
            direction = -g.clone();
        }
        let initial = if fresh_h {
            (1.0 / g.norm()).min(1.0)
        } else {
            1.0
        };
        let mut found = line_search(&mut eval, &x, f, &g, &direction, initial, cfg);
        if found.is_none() && !fresh_h {
            // retry once along steepest descent with a reset metric
            h = DMatrix::identity(n, n);
            fresh_h = true;
            direction = -g.clone();
            found = line_search(&mut eval, &x, f, &g, &direction, (1.0 / g.norm()).min(1.0), cfg);
        }
        let Some(point) = found else {
            break Termination::LineSearchFailed;
        };

        let step = &direction * point.alpha;
        let y = &point.gradient - &g;
        x += &step;
        f = point.value;
        g = point.gradient;
        iterations += 1;
        history.push(f);

        if inf_norm(&step) < cfg.step_tolerance {
            break Termination::Step;
        }

        let sy = step.dot(&y);
        if sy > 1e-12 * step.norm() * y.norm() {
            if fresh_h {
                h *= sy / y.dot(&y);
                fresh_h = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - ρ(s (Hy)' + (Hy) s') + (ρ² y'Hy + ρ) s s'
            h -= (&step * hy.transpose() + &hy * step.transpose()) * rho;
            h += (&step * step.transpose()) * (rho * rho * yhy + rho);
        }
    };

    Ok(Minimum {
        x: x.as_slice().to_vec(),
        value: f,
        gradient: g.as_slice().to_vec(),
        iterations,
        termination,
        history,
    })
}

/// Strong-Wolfe line search (bracketing then zoom). Falls back to the best
/// sufficient-decrease point seen when the curvature condition cannot be met
/// within the iteration budget; `None` means no decrease was found.
///
/// Near a minimum the decrease a step achieves can fall below the rounding
/// error of the objective. Points whose value is within [`FLAT_TOLERANCE`]
/// (relative) of the start are then judged by the approximate Wolfe
/// conditions of Hager and Zhang, `c2·φ'(0) ≤ φ'(α) ≤ (2c1 − 1)·φ'(0)`,
/// which only use the directional derivative.
fn line_search<E>(
    eval: &mut E,
    x: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
    d: &DVector<f64>,
    initial: f64,
    cfg: &OptimizerConfig,
) -> Option<Point>
where
    E: FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let slope0 = g0.dot(d);
    let mut best: Option<Point> = None;
    let mut probe = |alpha: f64, best: &mut Option<Point>| -> Option<Point> {
        let (value, gradient) = eval(&(x + d * alpha))?;
        let slope = gradient.dot(d);
        let point = Point {
            alpha,
            value,
            gradient,
            slope,
        };
        if point.value <= f0 + cfg.c1 * alpha * slope0
            && best.as_ref().map_or(true, |b| point.value < b.value)
        {
            *best = Some(Point {
                alpha,
                value,
                gradient: point.gradient.clone(),
                slope,
            });
        }
        Some(point)
    };
    let flat = FLAT_TOLERANCE * f0.abs().max(1.0);
    let armijo = |p: &Point| p.value <= f0 + cfg.c1 * p.alpha * slope0;
    let decrease = |p: &Point| armijo(p) || p.value <= f0 + flat;
    let acceptable = |p: &Point| {
        let strong = armijo(p) && p.slope.abs() <= -cfg.c2 * slope0;
        let approximate = p.value <= f0 + flat
            && p.slope >= cfg.c2 * slope0
            && p.slope <= (2.0 * cfg.c1 - 1.0) * slope0;
        strong || approximate
    };

    let mut lo = Point {
        alpha: 0.0,
        value: f0,
        gradient: g0.clone(),
        slope: slope0,
    };
    let mut hi_alpha: Option<f64> = None;
    let mut hi_value = f64::INFINITY;
    let mut alpha = initial;

    for i in 0..MAX_BRACKET {
        match probe(alpha, &mut best) {
            None => {
                hi_alpha = Some(alpha);
                hi_value = f64::INFINITY;
                break;
            }
            Some(p) => {
                if acceptable(&p) {
                    return Some(p);
                }
                if !decrease(&p) || (i > 0 && p.value > lo.value + flat) {
                    hi_alpha = Some(p.alpha);
                    hi_value = p.value;
                    break;
                }
                if p.slope >= 0.0 {
                    hi_alpha = Some(lo.alpha);
                    hi_value = lo.value;
                    lo = p;
                    break;
                }
                lo = p;
                alpha *= 2.0;
            }
        }
    }
    let mut hi = hi_alpha?;

    for _ in 0..MAX_ZOOM {
        let width = hi - lo.alpha;
        // quadratic through (lo, f_lo, slope_lo) and (hi, f_hi), safeguarded
        let mut trial = lo.alpha + 0.5 * width;
        if hi_value.is_finite() {
            let denom = 2.0 * (hi_value - lo.value - lo.slope * width);
            if denom > 0.0 {
                let q = lo.alpha - lo.slope * width * width / denom;
                let (a, b) = if lo.alpha < hi { (lo.alpha, hi) } else { (hi, lo.alpha) };
                let margin = 0.1 * (b - a);
                if q > a + margin && q < b - margin {
                    trial = q;
                }
            }
        }
        if (trial - lo.alpha).abs() <= f64::EPSILON * lo.alpha.abs().max(1e-300) {
            break;
        }
        match probe(trial, &mut best) {
            None => {
                hi = trial;
                hi_value = f64::INFINITY;
            }
            Some(p) => {
                if acceptable(&p) {
                    return Some(p);
                }
                if !decrease(&p) || p.value > lo.value + flat {
                    hi = p.alpha;
                    hi_value = p.value;
                } else {
                    if p.slope * (hi - lo.alpha) >= 0.0 {
                        hi = lo.alpha;
                        hi_value = lo.value;
                    }
                    lo = p;
                }
            }
        }
    }
    best.filter(|b| b.value < f0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_recovers_optimum() {
        let target = [1.5, -2.0, 30.0, 0.25];
        let objective = |x: &[f64]| {
            let f = x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
            let g = x.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            Some((f, g))
        };
        let m = minimize(objective, &[0.0; 4], &OptimizerConfig::default()).unwrap();
        assert!(m.converged());
        assert!(m.iterations <= 30, "{} iterations", m.iterations);
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rosenbrock() {
        let objective = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Some((f, g))
        };
        let m = minimize(objective, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(m.converged(), "{:?}", m.termination);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn undefined_regions_are_avoided() {
        // log barrier: undefined for x <= 0, minimum at x = 1
        let objective = |x: &[f64]| {
            (x[0] > 0.0).then(|| (x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]]))
        };
        let m = minimize(objective, &[20.0], &OptimizerConfig::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bad_start_and_bad_constants() {
        let nan = |_: &[f64]| Some((f64::NAN, vec![0.0]));
        assert!(matches!(
            minimize(nan, &[0.0], &OptimizerConfig::default()),
            Err(Error::StartPoint(_))
        ));
        let cfg = OptimizerConfig {
            c1: 0.9,
            c2: 0.1,
            ..OptimizerConfig::default()
        };
        let ok = |x: &[f64]| Some((x[0] * x[0], vec![2.0 * x[0]]));
        assert!(matches!(minimize(ok, &[1.0], &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let cfg = OptimizerConfig {
            max_iterations: 2,
            ..OptimizerConfig::default()
        };
        let objective = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            Some((f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))
        };
        let m = minimize(objective, &[-1.2, 1.0], &cfg).unwrap();
        assert_eq!(m.termination, Termination::MaxIterations);
        assert!(!m.converged());
        assert!(m.value <= 24.2);
    }
}
