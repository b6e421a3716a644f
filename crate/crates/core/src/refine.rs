//! Direct maximization of the rank log-likelihood over all mixture
//! parameters, starting from a nested-iteration estimate.
//!
//! The nested iteration treats the pseudo-data as fixed inside each EM run,
//! so its fixed points need not maximize any likelihood of the ranks; when
//! the signal is well separated from the noise it drifts along a ridge of
//! near-fixed points. Here the pseudo-data are recomputed at every trial
//! point and the copula log-likelihood is maximized with a projected
//! quasi-Newton search on central-difference gradients.

use crate::data::BivariateDataset;
use crate::em::{compute_pseudo_data, copula_log_likelihood, FitConfig, PseudoData, SignalBounds};
use crate::model::ModelParams;
use crate::optim::{Bounds, BoxQuasiNewton};
use crate::survival::MarginalSurvival;

/// Log-ratio bound for mixture weights; `e^-30` is zero for all purposes.
const LOGIT_BOUND: f64 = 30.0;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub params: ModelParams,
    pub pseudo: PseudoData,
    pub copula_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Weights are stored as log-ratios against the largest starting weight,
/// followed by both means and both log standard deviations.
struct Coding {
    reference: usize,
    bounds: SignalBounds,
}

impl Coding {
    fn encode(&self, p: &ModelParams) -> Vec<f64> {
        let r = p.pi[self.reference];
        let mut x: Vec<f64> = (0..4)
            .filter(|&k| k != self.reference)
            .map(|k| (p.pi[k] / r).ln().clamp(-LOGIT_BOUND, LOGIT_BOUND))
            .collect();
        x.extend([p.mu[0], p.mu[1], 0.5 * p.var[0].ln(), 0.5 * p.var[1].ln()]);
        x
    }

    fn decode(&self, x: &[f64]) -> ModelParams {
        let mut w = [0.0; 4];
        let mut logits = x[..3].iter();
        for (k, wk) in w.iter_mut().enumerate() {
            *wk = if k == self.reference {
                1.0
            } else {
                logits.next().map_or(1.0, |v| v.exp())
            };
        }
        let total: f64 = w.iter().sum();
        let mu = self.bounds.mu();
        let sd = self.bounds.sigma();
        let sigma = [sd.clamp(x[5].exp()), sd.clamp(x[6].exp())];
        ModelParams {
            pi: w.map(|v| v / total),
            mu: [mu.clamp(x[3]), mu.clamp(x[4])],
            var: [sigma[0] * sigma[0], sigma[1] * sigma[1]],
        }
    }

    fn box_bounds(&self) -> Vec<Bounds> {
        let logit = Bounds::new(-LOGIT_BOUND, LOGIT_BOUND);
        let mu = self.bounds.mu();
        let s = self.bounds.sigma();
        let log_sd = Bounds::new(s.lower.ln(), s.upper.ln());
        vec![logit, logit, logit, mu, mu, log_sd, log_sd]
    }
}

pub fn refine(
    dataset: &BivariateDataset,
    margins: &[MarginalSurvival; 2],
    start: &ModelParams,
    config: &FitConfig,
) -> Refined {
    let reference = (0..4)
        .max_by(|&a, &b| start.pi[a].total_cmp(&start.pi[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let coding = Coding {
        reference,
        bounds: config.signal_bounds,
    };
    let exec = config.execution;
    let objective = |x: &[f64]| {
        let p = coding.decode(x);
        let pseudo = compute_pseudo_data(dataset, margins, &p, config.grid_size);
        -copula_log_likelihood(&pseudo, &p, exec)
    };
    let x0 = coding.encode(start);
    let bounds = coding.box_bounds();
    let solver = BoxQuasiNewton {
        max_iters: config.refine_max_iters,
        grad_tol: 1e-4,
        f_tol: 1e-12,
    };
    let outcome = solver.minimize(
        |x, g| {
            let mut probe = x.to_vec();
            for i in 0..x.len() {
                probe[i] = x[i] + FD_STEP;
                let up = objective(&probe);
                probe[i] = x[i] - FD_STEP;
                let down = objective(&probe);
                probe[i] = x[i];
                g[i] = (up - down) / (2.0 * FD_STEP);
            }
            objective(x)
        },
        &x0,
        &bounds,
    );
    let (params, iterations, converged) = match outcome {
        Ok(m) => (coding.decode(&m.x), m.iterations, m.converged),
        Err(_) => (*start, 0, false),
    };
    let pseudo = compute_pseudo_data(dataset, margins, &params, config.grid_size);
    let copula_loglik = copula_log_likelihood(&pseudo, &params, exec);
    Refined {
        params,
        pseudo,
        copula_loglik,
        iterations,
        converged,
    }
}
