//! Gradient descent on a sequence of drifting strongly convex quadratics,
//! checked against the tracking bound
//! `‖b_t − b*_t‖ ≤ (Π_{τ≤t} m_τ)‖b_0 − b*_0‖ + (1 − m̂ᵗ)/(1 − m̂)·C_B`.
//!
//! `m_τ = max(|1 − γ C_s|, |1 − γ C_ℓ|)` is the contraction of the update
//! that produces `b_τ`, and `m̂` is the running maximum of the rates so far.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, label};

/// `J_t(b) = ½ (b − b*_t)ᵀ H_t (b − b*_t)` for t = 0..steps.
#[derive(Debug, Clone)]
pub struct TrackingProblem {
    pub hessians: Vec<Array2<f64>>,
    /// One more entry than `hessians`: the optimum after the last update.
    pub optima: Vec<Array1<f64>>,
    pub c_b: f64,
    pub c_s: Vec<f64>,
    pub c_l: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dim: usize,
    pub steps: usize,
    /// Bound on the drift of the optimum per step.
    pub c_b: f64,
    /// Eigenvalues of every Hessian lie in `[curvature.0, curvature.1]`.
    pub curvature: (f64, f64),
}

/// Product of random Givens rotations.
fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Array2<f64> {
    let mut q = Array2::eye(dim);
    if dim < 2 {
        return q;
    }
    for _ in 0..2 * dim {
        let i = rng.gen_range(0..dim);
        let mut j = rng.gen_range(0..dim - 1);
        if j >= i {
            j += 1;
        }
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let (c, s) = (theta.cos(), theta.sin());
        for k in 0..dim {
            let (a, b) = (q[[i, k]], q[[j, k]]);
            q[[i, k]] = c * a - s * b;
            q[[j, k]] = s * a + c * b;
        }
    }
    q
}

pub fn generate_problem(spec: &ProblemSpec, seed: u64) -> Result<TrackingProblem> {
    let (lo, hi) = spec.curvature;
    if spec.dim == 0 || spec.steps == 0 {
        return Err(Error::Assumption("dimension and horizon must be positive".into()));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Assumption(format!(
            "curvature range [{lo}, {hi}] is not strongly convex"
        )));
    }
    if !(spec.c_b >= 0.0 && spec.c_b.is_finite()) {
        return Err(Error::Assumption(format!(
            "drift bound {} must be non-negative",
            spec.c_b
        )));
    }
    let mut r = rng::stream(seed, &[label::THEOREM]);
    let mut problem = TrackingProblem {
        hessians: Vec::with_capacity(spec.steps),
        optima: vec![Array1::from_shape_fn(spec.dim, |_| r.gen_range(-5.0..5.0))],
        c_b: spec.c_b,
        c_s: Vec::with_capacity(spec.steps),
        c_l: Vec::with_capacity(spec.steps),
    };
    for _ in 0..spec.steps {
        let eig: Vec<f64> = (0..spec.dim).map(|_| r.gen_range(lo..=hi)).collect();
        let q = random_rotation(spec.dim, &mut r);
        let h = q.t().dot(&Array2::from_diag(&Array1::from(eig.clone()))).dot(&q);
        problem.hessians.push((&h + &h.t()) * 0.5);
        problem.c_l.push(eig.iter().copied().fold(f64::INFINITY, f64::min));
        problem.c_s.push(eig.iter().copied().fold(0.0, f64::max));

        let dir = Array1::from_shape_fn(spec.dim, |_| r.gen_range(-1.0f64..1.0));
        let norm = dir.dot(&dir).sqrt();
        let step = if norm > 0.0 {
            dir * (r.gen_range(0.0..=1.0) * spec.c_b / norm)
        } else {
            Array1::zeros(spec.dim)
        };
        let prev = problem.optima.last().expect("seeded with b*_0");
        let next = prev + &step;
        let drift = (&next - prev).mapv(|v| v * v).sum().sqrt();
        if drift > spec.c_b * (1.0 + 1e-12) {
            return Err(Error::Assumption(format!("drift {drift} exceeds C_B = {}", spec.c_b)));
        }
        problem.optima.push(next);
    }
    Ok(problem)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingReport {
    /// `‖b_t − b*_t‖` for t = 0..=steps.
    pub errors: Vec<f64>,
    pub bounds: Vec<f64>,
    /// `rates[t-1]` is m_t.
    pub rates: Vec<f64>,
    pub m_hat: f64,
    pub c_b: f64,
    pub violations: usize,
    /// Largest `error − bound` observed.
    pub max_excess: f64,
}

/// `Σ_{k<t} mᵏ`, exact at m = 1.
fn geometric_sum(m: f64, t: usize) -> f64 {
    if (m - 1.0).abs() < 1e-12 {
        t as f64
    } else {
        (1.0 - m.powi(t as i32)) / (1.0 - m)
    }
}

/// Runs `b_{t+1} = b_t − γ H_t (b_t − b*_t)` from `b0` and compares every
/// error with the bound, allowing `slack` absolute.
pub fn verify_tracking_bound(
    problem: &TrackingProblem,
    gamma: f64,
    b0: &Array1<f64>,
    slack: f64,
) -> Result<TrackingReport> {
    let dim = problem.optima[0].len();
    check_dim("initial point", dim, b0.len())?;
    let dist = |a: &Array1<f64>, b: &Array1<f64>| (a - b).mapv(|v| v * v).sum().sqrt();
    let e0 = dist(b0, &problem.optima[0]);
    let mut report = TrackingReport {
        errors: vec![e0],
        bounds: vec![e0],
        rates: Vec::with_capacity(problem.hessians.len()),
        m_hat: 0.0,
        c_b: problem.c_b,
        violations: 0,
        max_excess: 0.0,
    };
    let mut b = b0.clone();
    let mut product = 1.0;
    for (t, h) in problem.hessians.iter().enumerate() {
        let grad = h.dot(&(&b - &problem.optima[t]));
        b = &b - &(grad * gamma);
        let m = (1.0 - gamma * problem.c_s[t])
            .abs()
            .max((1.0 - gamma * problem.c_l[t]).abs());
        report.rates.push(m);
        report.m_hat = report.m_hat.max(m);
        product *= m;
        let steps_done = t + 1;
        let bound = product * e0 + geometric_sum(report.m_hat, steps_done) * problem.c_b;
        let err = dist(&b, &problem.optima[steps_done]);
        if !err.is_finite() {
            return Err(Error::NonFinite {
                context: format!("tracking error at step {steps_done}"),
            });
        }
        if err > bound + slack {
            report.violations += 1;
        }
        report.max_excess = report.max_excess.max(err - bound);
        report.errors.push(err);
        report.bounds.push(bound);
    }
    Ok(report)
}

/// Summary of a seeded batch of random problems.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremSummary {
    pub problems: usize,
    pub steps: usize,
    pub violations: usize,
    pub max_excess: f64,
    /// Largest final error among the drift-free problems.
    pub static_final_error: f64,
    /// Largest final error relative to `C_B/(1 − m̂)` among drifting ones.
    pub worst_steady_state_ratio: f64,
}

/// `count` random problems of dimension 1..=`max_dim`, each run once with
/// drift and once without, at a step size near the best fixed one `2/(C_ℓ + C_s)`.
pub fn theorem_suite(seed: u64, count: usize, max_dim: usize, steps: usize, slack: f64) -> Result<TheoremSummary> {
    let mut summary = TheoremSummary {
        problems: count,
        steps,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
        static_final_error: 0.0,
        worst_steady_state_ratio: 0.0,
    };
    for k in 0..count {
        let mut r = rng::stream(seed, &[label::THEOREM, k as u64]);
        let dim = r.gen_range(1..=max_dim.max(1));
        let lo = r.gen_range(0.1..1.0);
        let hi = lo * r.gen_range(1.0..10.0);
        let gamma = r.gen_range(1.4..2.0) / (lo + hi);
        let b0 = Array1::from_shape_fn(dim, |_| r.gen_range(-10.0..10.0));
        for c_b in [r.gen_range(0.01..0.5), 0.0] {
            let spec = ProblemSpec {
                dim,
                steps,
                c_b,
                curvature: (lo, hi),
            };
            let problem = generate_problem(&spec, rng::derive_seed(seed, &[k as u64, c_b.to_bits()]))?;
            let report = verify_tracking_bound(&problem, gamma, &b0, slack)?;
            summary.violations += report.violations;
            summary.max_excess = summary.max_excess.max(report.max_excess);
            let last = *report.errors.last().expect("at least the initial error");
            if c_b == 0.0 {
                summary.static_final_error = summary.static_final_error.max(last);
            } else {
                let limit = c_b / (1.0 - report.m_hat);
                summary.worst_steady_state_ratio = summary.worst_steady_state_ratio.max(last / limit);
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem(steps: usize, h: f64, optima: Vec<f64>, c_b: f64) -> TrackingProblem {
        TrackingProblem {
            hessians: vec![Array2::from_elem((1, 1), h); steps],
            optima: optima.into_iter().map(|v| Array1::from(vec![v])).collect(),
            c_b,
            c_s: vec![h; steps],
            c_l: vec![h; steps],
        }
    }

    #[test]
    fn exact_step_on_a_static_isotropic_problem() {
        let c = 2.5;
        let p = TrackingProblem {
            hessians: vec![Array2::eye(3) * c; 4],
            optima: vec![Array1::from(vec![1.0, -2.0, 0.5]); 5],
            c_b: 0.0,
            c_s: vec![c; 4],
            c_l: vec![c; 4],
        };
        let r = verify_tracking_bound(&p, 1.0 / c, &Array1::zeros(3), 1e-9).unwrap();
        assert_eq!(r.errors[1], 0.0);
        assert_eq!(r.bounds[1], 0.0);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn drifting_scalar_problem_stays_within_the_steady_state_limit() {
        let steps = 200;
        let optima: Vec<f64> = (0..=steps).map(|t| 0.1 * t as f64).collect();
        let p = scalar_problem(steps, 1.0, optima, 0.1);
        let r = verify_tracking_bound(&p, 0.5, &Array1::from(vec![3.0]), 1e-9).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.m_hat, 0.5);
        assert!(*r.errors.last().unwrap() <= 0.2 + 1e-12);
        assert!((r.bounds.last().unwrap() - 0.2).abs() < 1e-9);
    }

    #[test]
    fn geometric_sum_handles_unit_rate() {
        assert_eq!(geometric_sum(1.0, 7), 7.0);
        assert!((geometric_sum(0.5, 3) - 1.75).abs() < 1e-15);
        assert_eq!(geometric_sum(0.3, 0), 0.0);
    }

    #[test]
    fn generated_problems_honor_their_constants() {
        let spec = ProblemSpec {
            dim: 4,
            steps: 50,
            c_b: 0.2,
            curvature: (0.5, 3.0),
        };
        let p = generate_problem(&spec, 9).unwrap();
        for (t, h) in p.hessians.iter().enumerate() {
            // Rayleigh quotients stay inside the stated curvature range.
            for k in 0..4 {
                let mut e = Array1::zeros(4);
                e[k] = 1.0;
                let q = e.dot(&h.dot(&e));
                assert!(q >= p.c_l[t] - 1e-12 && q <= p.c_s[t] + 1e-12);
            }
            let drift = (&p.optima[t + 1] - &p.optima[t]).mapv(|v| v * v).sum().sqrt();
            assert!(drift <= 0.2 + 1e-12);
        }
        let bad = ProblemSpec {
            curvature: (0.0, 1.0),
            ..spec
        };
        assert!(matches!(generate_problem(&bad, 0), Err(Error::Assumption(_))));
    }

    #[test]
    fn small_monte_carlo_has_no_violations() {
        let s = theorem_suite(1, 5, 4, 300, 1e-9).unwrap();
        assert_eq!(s.violations, 0);
        assert!(s.static_final_error < 1e-10);
        assert!(s.worst_steady_state_ratio <= 1.0 + 1e-9);
    }
}
