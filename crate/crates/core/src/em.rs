//! Nested EM fit of the mixture parameters.
//!
//! The outer loop maps observed scores to latent pseudo-data through the
//! Kaplan-Meier margins and the current model's marginal survival, the inner
//! loop runs EM on those pseudo-data, and the two alternate until the
//! re-evaluated log-likelihood settles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BivariateDataset, Margin, PatternCounts};
use crate::error::{Result, ScopError};
use crate::exec::Execution;
use crate::model::{
    build_grid_with_size, component_log_density, component_log_survival, Component, ModelParams,
    DEFAULT_GRID_SIZE,
};
use crate::normal;
use crate::optim::{BoxQuasiNewton, Bounds};
use crate::refine::refine;
use crate::survival::{kaplan_meier_with_floor, MarginalSurvival, DEFAULT_FLOOR_DIVISOR};

/// Components whose total posterior weight falls below this keep their
/// previous signal parameters.
pub const EMPTY_COMPONENT_WEIGHT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalBounds {
    pub mu_min: f64,
    pub mu_max: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for SignalBounds {
    fn default() -> Self {
        SignalBounds {
            mu_min: -50.0,
            mu_max: -1e-6,
            sigma_min: 1e-3,
            sigma_max: 50.0,
        }
    }
}

impl SignalBounds {
    pub(crate) fn mu(&self) -> Bounds {
        Bounds::new(self.mu_min, self.mu_max)
    }

    pub(crate) fn sigma(&self) -> Bounds {
        Bounds::new(self.sigma_min, self.sigma_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub seed: u64,
    /// Random starting points drawn in addition to the two fixed starts.
    pub random_starts: usize,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    pub grid_size: usize,
    /// Survival floor is `1 / (floor_divisor * n)`.
    pub floor_divisor: f64,
    pub min_complete_cases: usize,
    pub init_pi: [f64; 4],
    pub init_mu: [f64; 2],
    pub init_sigma: [f64; 2],
    pub signal_bounds: SignalBounds,
    /// Polish the best nested-iteration estimate by maximizing the copula
    /// log-likelihood directly.
    pub refine: bool,
    pub refine_max_iters: usize,
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            seed: 0,
            random_starts: 4,
            inner_tol: 1e-4,
            outer_tol: 1e-3,
            max_inner_iters: 100,
            max_outer_iters: 50,
            grid_size: DEFAULT_GRID_SIZE,
            floor_divisor: DEFAULT_FLOOR_DIVISOR,
            min_complete_cases: 50,
            init_pi: [0.7, 0.1, 0.1, 0.1],
            init_mu: [-2.0, -2.0],
            init_sigma: [1.0, 1.0],
            signal_bounds: SignalBounds::default(),
            refine: true,
            refine_max_iters: 300,
            execution: Execution::Parallel,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ScopError::Config(m.into()));
        if !(self.inner_tol > 0.0 && self.outer_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return bad("iteration caps must be at least 1");
        }
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        if self.floor_divisor.is_nan() || self.floor_divisor <= 0.0 {
            return bad("floor_divisor must be positive");
        }
        let b = &self.signal_bounds;
        if !(b.mu_min < b.mu_max && b.mu_max < 0.0 && 0.0 < b.sigma_min && b.sigma_min < b.sigma_max) {
            return bad("signal bounds must satisfy mu_min < mu_max < 0 < sigma_min < sigma_max");
        }
        self.default_start().map(|_| ())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn default_start(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.init_pi,
            self.init_mu,
            [self.init_sigma[0].powi(2), self.init_sigma[1].powi(2)],
        )
    }

    /// Start whose signal patterns follow the observed overlap: weights
    /// proportional to (0.05, only-1, only-2, both) fractions, each floored
    /// at 0.01, with the default means and sds.
    pub fn pattern_start(&self, counts: &PatternCounts) -> Result<ModelParams> {
        let n = counts.total().max(1) as f64;
        let raw = [
            0.05,
            counts.n_only1 as f64 / n,
            counts.n_only2 as f64 / n,
            counts.n_both as f64 / n,
        ]
        .map(|v| v.max(0.01));
        let total: f64 = raw.iter().sum();
        let mut pi = raw.map(|v| v / total);
        pi[3] = 1.0 - pi[0] - pi[1] - pi[2];
        ModelParams::new(
            pi,
            self.init_mu,
            [self.init_sigma[0].powi(2), self.init_sigma[1].powi(2)],
        )
    }

    /// The default start, the overlap-pattern start, then `random_starts`
    /// seeded draws: weights from a flat Dirichlet, means uniform on
    /// [-6, -0.5], sds uniform on [0.5, 2].
    pub fn starting_points(&self, counts: &PatternCounts) -> Result<Vec<ModelParams>> {
        let mut starts = vec![self.default_start()?, self.pattern_start(counts)?];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.random_starts {
            let w: [f64; 4] = std::array::from_fn(|_| -(1.0 - rng.gen::<f64>()).ln());
            let total: f64 = w.iter().sum();
            let mut pi = w.map(|x| x / total);
            pi[3] = (1.0 - pi[0] - pi[1] - pi[2]).max(0.0);
            let mu = [rng.gen_range(-6.0..-0.5), rng.gen_range(-6.0..-0.5)];
            let sd: [f64; 2] = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
            starts.push(ModelParams::new(pi, mu, [sd[0] * sd[0], sd[1] * sd[1]])?);
        }
        Ok(starts)
    }
}

/// Latent images of the observed times under the current model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoData {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub delta1: Vec<bool>,
    pub delta2: Vec<bool>,
    /// Images of the two cutoffs.
    pub k1: f64,
    pub k2: f64,
}

impl PseudoData {
    pub fn len(&self) -> usize {
        self.z1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z1.is_empty()
    }

    pub fn z(&self, margin: Margin) -> &[f64] {
        match margin {
            Margin::First => &self.z1,
            Margin::Second => &self.z2,
        }
    }

    pub fn deltas(&self, margin: Margin) -> &[bool] {
        match margin {
            Margin::First => &self.delta1,
            Margin::Second => &self.delta2,
        }
    }
}

/// Per-locus posterior pattern probabilities, one row of four per locus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    pub rows: Vec<[f64; 4]>,
}

impl Posteriors {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }
}

pub fn fit_margins(dataset: &BivariateDataset, floor_divisor: f64) -> Result<[MarginalSurvival; 2]> {
    let fit = |m: Margin| {
        kaplan_meier_with_floor(
            &dataset.times(m),
            &dataset.deltas(m),
            dataset.cutoff(m),
            floor_divisor,
        )
    };
    Ok([fit(Margin::First)?, fit(Margin::Second)?])
}

pub fn compute_pseudo_data(
    dataset: &BivariateDataset,
    margins: &[MarginalSurvival; 2],
    params: &ModelParams,
    grid_size: usize,
) -> PseudoData {
    let mut z = [Vec::new(), Vec::new()];
    let mut k = [0.0; 2];
    for m in Margin::BOTH {
        let grid = build_grid_with_size(params, m, grid_size);
        let surv = &margins[m.index()];
        z[m.index()] = dataset
            .records()
            .iter()
            .map(|r| grid.inverse(surv.evaluate(r.x(m))))
            .collect();
        k[m.index()] = grid.inverse(surv.evaluate(dataset.cutoff(m)));
    }
    let [z1, z2] = z;
    PseudoData {
        z1,
        z2,
        delta1: dataset.deltas(Margin::First),
        delta2: dataset.deltas(Margin::Second),
        k1: k[0],
        k2: k[1],
    }
}

/// `ln(pi_k h_ki)` for the four patterns of one locus.
fn joint_log_terms(z1: f64, d1: bool, z2: f64, d2: bool, params: &ModelParams) -> [f64; 4] {
    let term = |z: f64, d: bool, c: Component, m: Margin| {
        let (mu, var) = (params.mu(m), params.var(m));
        if d {
            component_log_density(z, c, mu, var)
        } else {
            component_log_survival(z, c, mu, var)
        }
    };
    let a1 = [
        term(z1, d1, Component::Noise, Margin::First),
        term(z1, d1, Component::Signal, Margin::First),
    ];
    let a2 = [
        term(z2, d2, Component::Noise, Margin::Second),
        term(z2, d2, Component::Signal, Margin::Second),
    ];
    std::array::from_fn(|k| {
        let c1 = Component::for_pattern(k, Margin::First) as usize;
        let c2 = Component::for_pattern(k, Margin::Second) as usize;
        params.pi[k].ln() + (a1[c1] + a2[c2])
    })
}

fn locus_log_terms(pseudo: &PseudoData, params: &ModelParams, exec: Execution) -> Vec<[f64; 4]> {
    exec.map_indexed(pseudo.len(), |i| {
        joint_log_terms(
            pseudo.z1[i],
            pseudo.delta1[i],
            pseudo.z2[i],
            pseudo.delta2[i],
            params,
        )
    })
}

pub fn log_likelihood(pseudo: &PseudoData, params: &ModelParams) -> f64 {
    log_likelihood_with(pseudo, params, Execution::Sequential)
}

pub fn log_likelihood_with(pseudo: &PseudoData, params: &ModelParams, exec: Execution) -> f64 {
    locus_log_terms(pseudo, params, exec)
        .iter()
        .map(|t| normal::log_sum_exp(t))
        .sum()
}

/// Log marginal density (observed) or survival (censored) of one coordinate.
fn marginal_log_term(z: f64, observed: bool, params: &ModelParams, margin: Margin) -> f64 {
    let (w0, w1) = params.margin_weights(margin);
    let (mu, var) = (params.mu(margin), params.var(margin));
    let f = if observed {
        component_log_density
    } else {
        component_log_survival
    };
    normal::log_sum_exp(&[
        w0.ln() + f(z, Component::Noise, mu, var),
        w1.ln() + f(z, Component::Signal, mu, var),
    ])
}

/// Joint log-likelihood minus both marginal log-likelihoods: the log copula
/// density of the ranks, which unlike [`log_likelihood`] is comparable
/// across different pseudo-data.
pub fn copula_log_likelihood(pseudo: &PseudoData, params: &ModelParams, exec: Execution) -> f64 {
    let per_locus = exec.map_indexed(pseudo.len(), |i| {
        let t = joint_log_terms(pseudo.z1[i], pseudo.delta1[i], pseudo.z2[i], pseudo.delta2[i], params);
        normal::log_sum_exp(&t)
            - marginal_log_term(pseudo.z1[i], pseudo.delta1[i], params, Margin::First)
            - marginal_log_term(pseudo.z2[i], pseudo.delta2[i], params, Margin::Second)
    });
    per_locus.iter().sum()
}

pub fn e_step(pseudo: &PseudoData, params: &ModelParams) -> Result<Posteriors> {
    e_step_with_loglik(pseudo, params, Execution::Sequential).map(|(p, _)| p)
}

/// Posteriors together with the log-likelihood at `params`, from one pass.
pub fn e_step_with_loglik(
    pseudo: &PseudoData,
    params: &ModelParams,
    exec: Execution,
) -> Result<(Posteriors, f64)> {
    let terms = locus_log_terms(pseudo, params, exec);
    let mut rows = Vec::with_capacity(terms.len());
    let mut loglik = 0.0;
    for (i, t) in terms.iter().enumerate() {
        let lse = normal::log_sum_exp(t);
        if !lse.is_finite() {
            return Err(ScopError::DegenerateLocus { index: i });
        }
        loglik += lse;
        rows.push(t.map(|v| (v - lse).exp()));
    }
    Ok((Posteriors { rows }, loglik))
}

pub fn m_step_pi(posteriors: &Posteriors) -> [f64; 4] {
    let n = posteriors.len() as f64;
    let mut sums = [0.0; 4];
    for row in &posteriors.rows {
        for k in 0..4 {
            sums[k] += row[k];
        }
    }
    let mut pi = sums.map(|s| s / n);
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    pi
}

/// Weighted censored-Gaussian log-likelihood of `N(mu, sigma^2)` and its
/// gradient in `(mu, sigma)`.
pub fn signal_objective(z: &[f64], deltas: &[bool], weights: &[f64], mu: f64, sigma: f64) -> (f64, [f64; 2]) {
    let ln_sigma = sigma.ln();
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for ((&zi, &di), &wi) in z.iter().zip(deltas).zip(weights) {
        if wi == 0.0 {
            continue;
        }
        let u = (zi - mu) / sigma;
        if di {
            value += wi * (normal::ln_pdf(u) - ln_sigma);
            grad[0] += wi * u / sigma;
            grad[1] += wi * (u * u - 1.0) / sigma;
        } else {
            let lam = normal::hazard(u);
            value += wi * normal::ln_sf(u);
            grad[0] += wi * lam / sigma;
            grad[1] += wi * lam * u / sigma;
        }
    }
    (value, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalUpdate {
    ClosedForm,
    QuasiNewton,
    /// Optimizer failed; coarse grid search followed by local refinement.
    GridFallback,
    /// Total weight below the emptiness threshold; previous values kept.
    EmptyComponent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalFit {
    pub mu: f64,
    pub var: f64,
    pub update: SignalUpdate,
}

/// Maximizes the weighted censored-Gaussian log-likelihood over the box.
/// Never returns a point worse than `previous`.
pub fn m_step_signal(
    z: &[f64],
    deltas: &[bool],
    weights: &[f64],
    bounds: &SignalBounds,
    previous: (f64, f64),
) -> SignalFit {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total < EMPTY_COMPONENT_WEIGHT {
        return SignalFit {
            mu: previous.0,
            var: previous.1,
            update: SignalUpdate::EmptyComponent,
        };
    }
    let (mu_b, sd_b) = (bounds.mu(), bounds.sigma());

    let censored_weight: f64 = deltas
        .iter()
        .zip(weights)
        .filter(|(d, _)| !**d)
        .map(|(_, w)| w)
        .sum();
    if censored_weight == 0.0 {
        // uncensored: the box optimum is the clipped weighted mean, then the
        // clipped root mean square deviation about it
        let mean = z.iter().zip(weights).map(|(z, w)| z * w).sum::<f64>() / total;
        let mu = mu_b.clamp(mean);
        let ms = z
            .iter()
            .zip(weights)
            .map(|(z, w)| w * (z - mu).powi(2))
            .sum::<f64>()
            / total;
        let sd = sd_b.clamp(ms.sqrt());
        return SignalFit {
            mu,
            var: sd * sd,
            update: SignalUpdate::ClosedForm,
        };
    }

    let objective = |x: &[f64], g: &mut [f64]| {
        let (v, gr) = signal_objective(z, deltas, weights, x[0], x[1]);
        g[0] = -gr[0] / total;
        g[1] = -gr[1] / total;
        -v / total
    };
    let value_at = |mu: f64, sd: f64| signal_objective(z, deltas, weights, mu, sd).0;

    let prev = [mu_b.clamp(previous.0), sd_b.clamp(previous.1.sqrt())];
    let boxes = [mu_b, sd_b];
    let solver = BoxQuasiNewton::default();

    let run = |x0: &[f64]| solver.minimize(objective, x0, &boxes).ok().filter(|m| m.value.is_finite());
    let best_prev = value_at(prev[0], prev[1]);
    let mut best: Option<(f64, [f64; 2], SignalUpdate)> = None;
    if let Some(m) = run(&prev) {
        best = Some((-m.value * total, [m.x[0], m.x[1]], SignalUpdate::QuasiNewton));
    }
    if best.is_none() {
        let seed = coarse_grid_search(&value_at, bounds);
        if let Some(m) = run(&seed) {
            best = Some((-m.value * total, [m.x[0], m.x[1]], SignalUpdate::GridFallback));
        } else {
            best = Some((value_at(seed[0], seed[1]), seed, SignalUpdate::GridFallback));
        }
    }
    match best {
        Some((v, x, update)) if v.is_finite() && (best_prev.is_nan() || v >= best_prev) => SignalFit {
            mu: x[0],
            var: x[1] * x[1],
            update,
        },
        _ => SignalFit {
            mu: prev[0],
            var: prev[1] * prev[1],
            update: SignalUpdate::QuasiNewton,
        },
    }
}

fn coarse_grid_search(value_at: &dyn Fn(f64, f64) -> f64, bounds: &SignalBounds) -> [f64; 2] {
    const STEPS: usize = 60;
    let mut best = (f64::NEG_INFINITY, [bounds.mu_max, 1.0f64.clamp(bounds.sigma_min, bounds.sigma_max)]);
    let (ls_lo, ls_hi) = (bounds.sigma_min.ln(), bounds.sigma_max.ln());
    for i in 0..=STEPS {
        let mu = bounds.mu_min + (bounds.mu_max - bounds.mu_min) * i as f64 / STEPS as f64;
        for j in 0..=STEPS {
            let sd = (ls_lo + (ls_hi - ls_lo) * j as f64 / STEPS as f64).exp();
            let v = value_at(mu, sd);
            if v > best.0 {
                best = (v, [mu, sd]);
            }
        }
    }
    best.1
}

fn signal_weights(posteriors: &Posteriors, margin: Margin) -> Vec<f64> {
    let (a, b) = match margin {
        Margin::First => (1, 3),
        Margin::Second => (2, 3),
    };
    posteriors.rows.iter().map(|r| r[a] + r[b]).collect()
}

/// One M-step: closed-form weights, then each list's signal law.
pub fn m_step(pseudo: &PseudoData, posteriors: &Posteriors, current: &ModelParams, bounds: &SignalBounds) -> ModelParams {
    let pi = m_step_pi(posteriors);
    let mut mu = current.mu;
    let mut var = current.var;
    for m in Margin::BOTH {
        let w = signal_weights(posteriors, m);
        let fit = m_step_signal(
            pseudo.z(m),
            pseudo.deltas(m),
            &w,
            bounds,
            (current.mu(m), current.var(m)),
        );
        mu[m.index()] = fit.mu;
        var[m.index()] = fit.var;
    }
    ModelParams { pi, mu, var }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerFit {
    pub params: ModelParams,
    pub posteriors: Posteriors,
    /// Log-likelihood at the starting point and after every M-step.
    pub trace: Vec<f64>,
    pub converged: bool,
}

pub fn inner_em(
    pseudo: &PseudoData,
    params0: &ModelParams,
    tol: f64,
    max_iters: usize,
    bounds: &SignalBounds,
    exec: Execution,
) -> Result<InnerFit> {
    let mut params = *params0;
    let (mut posteriors, mut ll) = e_step_with_loglik(pseudo, &params, exec)?;
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..max_iters {
        let next = m_step(pseudo, &posteriors, &params, bounds);
        let (post_next, ll_next) = e_step_with_loglik(pseudo, &next, exec)?;
        trace.push(ll_next);
        params = next;
        posteriors = post_next;
        let change = (ll_next - ll).abs();
        ll = ll_next;
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(InnerFit {
        params,
        posteriors,
        trace,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub outer: usize,
    pub inner: usize,
    pub loglik: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    Full,
    CompleteCase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    pub posteriors: Posteriors,
    /// Every inner-EM log-likelihood, tagged by outer and inner iteration.
    pub loglik_trace: Vec<TraceEntry>,
    /// Log-likelihood re-evaluated after each pseudo-data refresh.
    pub outer_loglik: Vec<f64>,
    pub pseudo: PseudoData,
    pub margins: [MarginalSurvival; 2],
    /// Whether the final stage met its tolerance: the refinement when it
    /// ran, the nested iteration otherwise.
    pub converged: bool,
    pub nested_converged: bool,
    pub n_outer_iters: usize,
    /// Rank log-likelihood at the final parameters; comparable across starts.
    pub copula_loglik: f64,
    /// Quasi-Newton iterations of the refinement, if it ran.
    pub refine_iters: Option<usize>,
    /// Which starting point won (0 is the fixed default, 1 the overlap start).
    pub start_index: usize,
    pub mode: FitMode,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.outer_loglik.last().expect("at least one outer iteration")
    }

    /// Inner-EM traces split by outer iteration.
    pub fn inner_traces(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = vec![Vec::new(); self.n_outer_iters];
        for e in &self.loglik_trace {
            out[e.outer - 1].push(e.loglik);
        }
        out
    }
}

pub fn fit(dataset: &BivariateDataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let margins = fit_margins(dataset, config.floor_divisor)?;
    let starts = config.starting_points(&dataset.counts())?;
    let runs = config
        .execution
        .map(&starts, |p| fit_from(dataset, &margins, p, config));
    let mut best: Option<(usize, FitResult)> = None;
    for (i, run) in runs.into_iter().enumerate() {
        let Ok(run) = run else {
            // a failed random start is skipped; the default start must succeed
            if i == 0 {
                return run;
            }
            continue;
        };
        let better = match &best {
            None => true,
            Some((_, b)) => run.copula_loglik > b.copula_loglik,
        };
        if better {
            best = Some((i, run));
        }
    }
    let (i, mut res) = best.expect("default start always yields a result");
    res.start_index = i;
    if config.refine {
        refine_result(dataset, &mut res, config)?;
    }
    Ok(res)
}

/// Replaces the parameters of `res` by their copula-likelihood refinement.
pub fn refine_result(dataset: &BivariateDataset, res: &mut FitResult, config: &FitConfig) -> Result<()> {
    let r = refine(dataset, &res.margins, &res.params, config);
    res.refine_iters = Some(r.iterations);
    res.converged = r.converged;
    if r.copula_loglik >= res.copula_loglik {
        let (post, _) = e_step_with_loglik(&r.pseudo, &r.params, config.execution)?;
        res.params = r.params;
        res.pseudo = r.pseudo;
        res.posteriors = post;
        res.copula_loglik = r.copula_loglik;
    }
    Ok(())
}

/// Runs the nested iteration from one starting point.
pub fn fit_from(
    dataset: &BivariateDataset,
    margins: &[MarginalSurvival; 2],
    start: &ModelParams,
    config: &FitConfig,
) -> Result<FitResult> {
    start.validate()?;
    let exec = config.execution;
    let mut params = *start;
    let mut pseudo = compute_pseudo_data(dataset, margins, &params, config.grid_size);
    let mut trace = Vec::new();
    let mut outer_loglik = Vec::new();
    let mut converged = false;
    let mut posteriors = None;
    let mut n_outer = 0;
    for outer in 1..=config.max_outer_iters {
        n_outer = outer;
        let inner = inner_em(
            &pseudo,
            &params,
            config.inner_tol,
            config.max_inner_iters,
            &config.signal_bounds,
            exec,
        )?;
        trace.extend(inner.trace.iter().enumerate().map(|(k, &loglik)| TraceEntry {
            outer,
            inner: k,
            loglik,
        }));
        params = inner.params;
        pseudo = compute_pseudo_data(dataset, margins, &params, config.grid_size);
        let (post, ll) = e_step_with_loglik(&pseudo, &params, exec)?;
        posteriors = Some(post);
        let done = outer_loglik
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() < config.outer_tol);
        outer_loglik.push(ll);
        if done {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        params,
        posteriors: posteriors.expect("max_outer_iters >= 1"),
        loglik_trace: trace,
        outer_loglik,
        copula_loglik: copula_log_likelihood(&pseudo, &params, exec),
        pseudo,
        margins: margins.clone(),
        converged,
        nested_converged: converged,
        n_outer_iters: n_outer,
        refine_iters: None,
        start_index: 0,
        mode: FitMode::Full,
    })
}

/// Fits only the loci observed in both lists.
pub fn fit_complete_case(dataset: &BivariateDataset, config: &FitConfig) -> Result<FitResult> {
    let found = dataset.counts().n_both;
    let min = config.min_complete_cases.max(1);
    if found < min {
        return Err(ScopError::TooFewCompleteCases { found, min });
    }
    let sub = dataset
        .complete_cases()
        .ok_or(ScopError::TooFewCompleteCases { found, min })?;
    let mut res = fit(&sub, config)?;
    res.mode = FitMode::CompleteCase;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{merge_lists, LocusRecord, RankList};
    use crate::simulate::{simulate, SimConfig, SignalLaw};
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand_distr::StandardNormal;

    fn params(pi: [f64; 4], mu: [f64; 2], sd: [f64; 2]) -> ModelParams {
        ModelParams::new(pi, mu, [sd[0] * sd[0], sd[1] * sd[1]]).unwrap()
    }

    /// Pseudo-data from (z1, d1, z2, d2) rows; censored entries are set to K.
    fn pseudo(rows: &[(f64, bool, f64, bool)], k1: f64, k2: f64) -> PseudoData {
        let z = |v: f64, d: bool, k: f64| if d { v } else { k };
        PseudoData {
            z1: rows.iter().map(|r| z(r.0, r.1, k1)).collect(),
            delta1: rows.iter().map(|r| r.1).collect(),
            z2: rows.iter().map(|r| z(r.2, r.3, k2)).collect(),
            delta2: rows.iter().map(|r| r.3).collect(),
            k1,
            k2,
        }
    }

    // Linear-space reference terms straight from erfc and exp.
    fn dens(z: f64, mu: f64, sd: f64) -> f64 {
        let u = (z - mu) / sd;
        (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn surv(z: f64, mu: f64, sd: f64) -> f64 {
        0.5 * libm::erfc((z - mu) / (sd * std::f64::consts::SQRT_2))
    }

    fn brute_terms(p: &ModelParams, z1: f64, d1: bool, z2: f64, d2: bool) -> [f64; 4] {
        let h = |z: f64, d: bool, signal: bool, m: Margin| {
            let (mu, sd) = if signal { (p.mu(m), p.sigma(m)) } else { (0.0, 1.0) };
            if d {
                dens(z, mu, sd)
            } else {
                surv(z, mu, sd)
            }
        };
        let s1 = [false, true, false, true];
        let s2 = [false, false, true, true];
        std::array::from_fn(|k| p.pi[k] * h(z1, d1, s1[k], Margin::First) * h(z2, d2, s2[k], Margin::Second))
    }

    fn small_sample(seed: u64, n: usize) -> (PseudoData, ModelParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k1, k2) = (-1.0, -0.5);
        let rows: Vec<_> = (0..n)
            .map(|_| {
                let z1: f64 = rng.gen_range(-4.0..0.5);
                let z2: f64 = rng.gen_range(-4.0..0.5);
                let d1 = z1 <= k1;
                let d2 = z2 <= k2 || !d1;
                (z1.min(k1), d1, z2.min(k2), d2)
            })
            .collect();
        let (a, b) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.3));
        let p = params(
            [a, b, 0.2, 0.8 - a - b],
            [rng.gen_range(-3.0..-1.0), rng.gen_range(-3.0..-1.0)],
            [rng.gen_range(0.6..1.5), rng.gen_range(0.6..1.5)],
        );
        (pseudo(&rows, k1, k2), p)
    }

    #[test]
    fn loglik_pure_noise_reduction() {
        let ps = pseudo(&[(-1.0, true, -2.0, true), (0.3, true, -0.1, true)], 1.0, 1.0);
        let p = params([1.0, 0.0, 0.0, 0.0], [-2.0, -2.0], [1.0, 1.0]);
        let expect: f64 = [-1.0f64, -2.0, 0.3, -0.1].iter().map(|&z| normal::ln_pdf(z)).sum();
        assert!((log_likelihood(&ps, &p) - expect).abs() < 1e-12);
    }

    #[test]
    fn loglik_single_signal_noise_locus() {
        let ps = pseudo(&[(-3.1, true, 0.0, false)], -1.0, -1.2);
        let p = params([0.0, 1.0, 0.0, 0.0], [-2.5, -4.0], [0.8, 1.3]);
        let expect = component_log_density(-3.1, Component::Signal, -2.5, 0.64) + normal::ln_sf(-1.2);
        assert!((log_likelihood(&ps, &p) - expect).abs() < 1e-12);
    }

    #[test]
    fn loglik_matches_linear_space_enumeration() {
        for seed in 0..10 {
            let (ps, p) = small_sample(seed, 3 + seed as usize % 8);
            let brute: f64 = (0..ps.len())
                .map(|i| brute_terms(&p, ps.z1[i], ps.delta1[i], ps.z2[i], ps.delta2[i]).iter().sum::<f64>().ln())
                .sum();
            let ll = log_likelihood(&ps, &p);
            assert!((ll - brute).abs() <= 1e-10 * brute.abs().max(1.0), "{ll} vs {brute}");
            assert_eq!(ll, log_likelihood_with(&ps, &p, Execution::Parallel));
        }
    }

    #[test]
    fn e_step_degenerate_prior() {
        let (ps, _) = small_sample(4, 9);
        let p = params([1.0, 0.0, 0.0, 0.0], [-2.0, -2.0], [1.0, 1.0]);
        for row in e_step(&ps, &p).unwrap().rows {
            assert_eq!(row, [1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn e_step_symmetry() {
        let ps = pseudo(&[(-2.2, true, -2.2, true)], -1.0, -1.0);
        let p = params([0.25; 4], [-2.0, -2.0], [1.1, 1.1]);
        let row = e_step(&ps, &p).unwrap().rows[0];
        assert_eq!(row[1], row[2]);
    }

    #[test]
    fn e_step_matches_direct_ratios() {
        let ps = pseudo(
            &[(-2.5, true, -1.9, true), (-3.0, true, 0.0, false), (0.0, false, -1.4, true)],
            -1.2,
            -1.1,
        );
        let p = params([0.4, 0.15, 0.25, 0.2], [-2.4, -1.8], [0.9, 1.2]);
        let post = e_step(&ps, &p).unwrap();
        for i in 0..3 {
            let t = brute_terms(&p, ps.z1[i], ps.delta1[i], ps.z2[i], ps.delta2[i]);
            let total: f64 = t.iter().sum();
            for k in 0..4 {
                assert!((post.rows[i][k] - t[k] / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn e_step_reports_degenerate_locus() {
        // the squared deviation overflows, so every pattern term is -inf
        let ps = pseudo(&[(-3.0, true, -3.0, true), (1e160, true, -3.0, true)], 1e300, 1e300);
        let p = params([1.0, 0.0, 0.0, 0.0], [-2.0, -2.0], [1.0, 1.0]);
        assert!(matches!(e_step(&ps, &p), Err(ScopError::DegenerateLocus { index: 1 })));
    }

    #[test]
    fn m_step_pi_simple_cases() {
        let uniform = Posteriors {
            rows: vec![[0.25; 4]; 7],
        };
        assert_eq!(m_step_pi(&uniform), [0.25; 4]);
        let onehot = Posteriors {
            rows: vec![[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0], [0.0, 1.0, 0.0, 0.0]],
        };
        assert_eq!(m_step_pi(&onehot), [0.25, 0.25, 0.0, 0.5]);
    }

    /// Euclidean projection onto the probability simplex.
    fn project_simplex(v: [f64; 4]) -> [f64; 4] {
        let mut u = v;
        u.sort_by(|a, b| b.total_cmp(a));
        let mut cum = 0.0;
        let mut theta = 0.0;
        for (j, &x) in u.iter().enumerate() {
            cum += x;
            let t = (cum - 1.0) / (j + 1) as f64;
            if x - t > 0.0 {
                theta = t;
            }
        }
        v.map(|x| (x - theta).max(0.0))
    }

    #[test]
    fn m_step_pi_maximizes_q_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let rows: Vec<[f64; 4]> = (0..40)
                .map(|_| {
                    let w: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>() + 0.01);
                    let s: f64 = w.iter().sum();
                    w.map(|x| x / s)
                })
                .collect();
            let post = Posteriors { rows };
            let s: [f64; 4] = std::array::from_fn(|k| post.column(k).iter().sum());
            // projected gradient ascent on sum_k s_k ln pi_k
            let mut pi = [0.25f64; 4];
            for it in 0..200_000 {
                let step = 1e-4 / (1.0 + it as f64 * 1e-4);
                let g: [f64; 4] = std::array::from_fn(|k| s[k] / pi[k].max(1e-12));
                pi = project_simplex(std::array::from_fn(|k| pi[k] + step * g[k]));
            }
            let got = m_step_pi(&post);
            for k in 0..4 {
                assert!((got[k] - pi[k]).abs() < 1e-6, "{got:?} vs {pi:?}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn m_step_signal_uncensored_closed_form() {
        let z = [-3.0, -2.0, -4.5, -1.5];
        let w = [1.0, 0.5, 0.25, 1.0];
        let fit = m_step_signal(&z, &[true; 4], &w, &SignalBounds::default(), (-1.0, 1.0));
        let total: f64 = w.iter().sum();
        let mean = z.iter().zip(&w).map(|(z, w)| z * w).sum::<f64>() / total;
        let var = z.iter().zip(&w).map(|(z, w)| w * (z - mean).powi(2)).sum::<f64>() / total;
        assert_eq!(fit.update, SignalUpdate::ClosedForm);
        assert!((fit.mu - mean).abs() < 1e-12);
        assert!((fit.var - var).abs() < 1e-12);

        let clipped = m_step_signal(&[1.0, 2.0], &[true; 2], &[1.0; 2], &SignalBounds::default(), (-1.0, 1.0));
        assert_eq!(clipped.mu, -1e-6);
    }

    #[test]
    fn m_step_signal_empty_component_keeps_previous() {
        let fit = m_step_signal(&[-2.0], &[true], &[1e-9], &SignalBounds::default(), (-3.0, 2.0));
        assert_eq!((fit.mu, fit.var, fit.update), (-3.0, 2.0, SignalUpdate::EmptyComponent));
    }

    /// Exhaustive search on a coarse grid, then on ever finer grids around the best point.
    fn grid_oracle(z: &[f64], d: &[bool], w: &[f64], mu0: (f64, f64), sd0: (f64, f64)) -> (f64, f64) {
        let f = |mu: f64, sd: f64| signal_objective(z, d, w, mu, sd).0;
        let (mut mu_r, mut sd_r) = (mu0, sd0);
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for _ in 0..6 {
            for i in 0..=100 {
                let mu = mu_r.0 + (mu_r.1 - mu_r.0) * i as f64 / 100.0;
                if mu >= 0.0 {
                    continue;
                }
                for j in 0..=100 {
                    let sd = sd_r.0 + (sd_r.1 - sd_r.0) * j as f64 / 100.0;
                    let v = f(mu, sd);
                    if v > best.0 {
                        best = (v, mu, sd);
                    }
                }
            }
            let hm = (mu_r.1 - mu_r.0) / 50.0;
            let hs = (sd_r.1 - sd_r.0) / 50.0;
            mu_r = (best.1 - hm, best.1 + hm);
            sd_r = ((best.2 - hs).max(1e-3), best.2 + hs);
        }
        (best.1, best.2)
    }

    #[test]
    fn m_step_signal_matches_grid_oracle() {
        let z = [-3.2, -2.1, -1.0, -1.0, -4.4];
        let d = [true, true, false, false, true];
        let w = [0.9, 0.4, 0.7, 0.2, 1.0];
        let fit = m_step_signal(&z, &d, &w, &SignalBounds::default(), (-2.0, 1.0));
        let (mu, sd) = grid_oracle(&z, &d, &w, (-8.0, -0.01), (0.05, 5.0));
        assert!((fit.mu - mu).abs() < 1e-3, "{} vs {mu}", fit.mu);
        assert!((fit.var.sqrt() - sd).abs() < 1e-3, "{} vs {sd}", fit.var.sqrt());
    }

    #[test]
    fn m_step_signal_recovers_censored_gaussian() {
        // censoring at mu + 1.65 sd leaves about 5% of the draws censored
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let c = -5.0 + 1.65;
        let raw: Vec<f64> = (0..2000).map(|_| -5.0 + rng.sample::<f64, _>(StandardNormal)).collect();
        let d: Vec<bool> = raw.iter().map(|&v| v <= c).collect();
        let z: Vec<f64> = raw.iter().map(|&v| v.min(c)).collect();
        let censored = d.iter().filter(|x| !**x).count() as f64 / 2000.0;
        assert!((censored - 0.05).abs() < 0.015);
        let w = vec![1.0; 2000];
        let fit = m_step_signal(&z, &d, &w, &SignalBounds::default(), (-2.0, 1.0));
        assert!((fit.mu + 5.0).abs() < 0.1 && (fit.var.sqrt() - 1.0).abs() < 0.1, "{fit:?}");
        let (mu, sd) = grid_oracle(&z, &d, &w, (-6.0, -4.0), (0.5, 1.5));
        assert!((fit.mu - mu).abs() < 1e-2 && (fit.var.sqrt() - sd).abs() < 1e-2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn signal_gradient_matches_central_differences(
            seed in any::<u64>(),
            mu in -6.0f64..-0.5,
            sd in 0.4f64..3.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 30;
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-6.0..-1.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let (_, g) = signal_objective(&z, &d, &w, mu, sd);
            let h = 1e-6;
            let fd = [
                (signal_objective(&z, &d, &w, mu + h, sd).0 - signal_objective(&z, &d, &w, mu - h, sd).0) / (2.0 * h),
                (signal_objective(&z, &d, &w, mu, sd + h).0 - signal_objective(&z, &d, &w, mu, sd - h).0) / (2.0 * h),
            ];
            for k in 0..2 {
                let scale = g[k].abs().max(1.0);
                prop_assert!((g[k] - fd[k]).abs() <= 1e-5 * scale, "{:?} vs {:?}", g, fd);
            }
        }
    }

    fn simulated(seed: u64, n: usize, pi: [f64; 4]) -> (BivariateDataset, Vec<u8>) {
        let cfg = SimConfig {
            n,
            pi,
            signal1: SignalLaw { mu: -3.0, var: 1.0 },
            signal2: SignalLaw { mu: -2.5, var: 1.5 },
            k1: -1.65,
            k2: -1.65,
            seed,
        };
        let out = simulate(&cfg).unwrap();
        (out.dataset, out.labels)
    }

    #[test]
    fn inner_em_is_monotone_over_seeds() {
        for seed in 0..20 {
            let (data, _) = simulated(seed, 4000, [0.6, 0.1, 0.1, 0.2]);
            let cfg = FitConfig::default();
            let margins = fit_margins(&data, cfg.floor_divisor).unwrap();
            for start in cfg.clone().with_seed(seed).starting_points(&data.counts()).unwrap() {
                let ps = compute_pseudo_data(&data, &margins, &start, cfg.grid_size);
                let inner = inner_em(&ps, &start, 1e-6, 200, &cfg.signal_bounds, Execution::Sequential).unwrap();
                for w in inner.trace.windows(2) {
                    assert!(w[1] >= w[0] - 1e-8, "seed {seed}: {} -> {}", w[0], w[1]);
                }
                for row in &inner.posteriors.rows {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                assert!(inner.params.validate().is_ok());
            }
        }
    }

    #[test]
    fn inner_em_from_truth_settles_quickly() {
        let truth = params([0.5, 0.1, 0.1, 0.3], [-3.0, -3.0], [1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<_> = (0..5000)
            .map(|_| {
                let u: f64 = rng.gen();
                let b = if u < 0.5 { 0 } else if u < 0.6 { 1 } else if u < 0.7 { 2 } else { 3 };
                let e1: f64 = rng.sample(StandardNormal);
                let e2: f64 = rng.sample(StandardNormal);
                let z1 = if b == 1 || b == 3 { -3.0 + e1 } else { e1 };
                let z2 = if b == 2 || b == 3 { -3.0 + e2 } else { e2 };
                (z1, true, z2, true)
            })
            .collect();
        let ps = pseudo(&rows, 10.0, 10.0);
        let inner = inner_em(&ps, &truth, 1e-4, 100, &SignalBounds::default(), Execution::Sequential).unwrap();
        assert!(inner.converged);
        assert!(inner.trace.len() <= 20, "{}", inner.trace.len());
        assert!((inner.params.pi[3] - 0.3).abs() < 0.03);
    }

    #[test]
    fn censored_pseudo_data_share_the_cutoff_image() {
        let (data, _) = simulated(8, 3000, [0.6, 0.1, 0.1, 0.2]);
        let cfg = FitConfig::default();
        let margins = fit_margins(&data, cfg.floor_divisor).unwrap();
        let p = cfg.default_start().unwrap();
        let ps = compute_pseudo_data(&data, &margins, &p, cfg.grid_size);
        for m in Margin::BOTH {
            let k = if m == Margin::First { ps.k1 } else { ps.k2 };
            let z = ps.z(m);
            for (i, &d) in ps.deltas(m).iter().enumerate() {
                assert!(z[i].is_finite());
                if !d {
                    assert_eq!(z[i], k);
                }
            }
            // order of x carries over to z
            let x = data.times(m);
            for i in 0..x.len() {
                for j in (i + 1..x.len()).step_by(97) {
                    if x[i] < x[j] {
                        assert!(z[i] <= z[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn pure_noise_pseudo_data_are_normal_quantiles() {
        let n = 50;
        let records: Vec<LocusRecord> = (0..n)
            .map(|i| LocusRecord {
                locus_id: format!("l{i:02}"),
                x1: (i + 1) as f64 / 100.0,
                x2: (n - i) as f64 / 100.0,
                delta1: true,
                delta2: true,
            })
            .collect();
        let data = BivariateDataset::from_records(records, (0.9, 0.9)).unwrap();
        let margins = fit_margins(&data, 10.0).unwrap();
        let p = params([1.0, 0.0, 0.0, 0.0], [-2.0, -2.0], [1.0, 1.0]);
        let ps = compute_pseudo_data(&data, &margins, &p, 5000);
        for i in 0..n {
            // empirical survival (n - i) / n is a standard normal upper tail
            let s = (n - i) as f64 / n as f64;
            // survival 1 clamps to the grid's lower end, mu - 5 sd
            let expect = if s >= 1.0 { -7.0 } else { quantile_upper(s) };
            assert!((ps.z1[i] - expect).abs() < 1e-5, "{i}: {} vs {expect}", ps.z1[i]);
        }
    }

    /// z with P(Z >= z) = s, by bisection on erfc.
    fn quantile_upper(s: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if surv(mid, 0.0, 1.0) > s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn copula_loglik_is_zero_without_dependence() {
        // with pi_3 = pi_1 pi_2-style factorization the joint equals the product of margins
        let (a, b) = (0.3, 0.6);
        let pi = [(1.0 - a) * (1.0 - b), a * (1.0 - b), (1.0 - a) * b, a * b];
        let p = params(pi, [-2.0, -3.0], [1.0, 0.7]);
        let (ps, _) = small_sample(5, 10);
        assert!(copula_log_likelihood(&ps, &p, Execution::Sequential).abs() < 1e-10);
    }

    fn small_fit_config() -> FitConfig {
        FitConfig {
            random_starts: 1,
            execution: Execution::Sequential,
            ..FitConfig::default()
        }
    }

    #[test]
    fn fit_is_invariant_to_monotone_rescoring() {
        let cfg = preset_like(2, 1500);
        let out = simulate(&cfg).unwrap();
        let warp = |l: &RankList| {
            let pairs: Vec<_> = l.entries.iter().map(|e| (e.locus_id.clone(), e.score.sqrt() * 7.0)).collect();
            RankList::from_pairs("w", pairs, l.cutoff.sqrt() * 7.0).unwrap()
        };
        let warped = merge_lists(&warp(&out.list1), &out.list2).unwrap();
        let fc = small_fit_config();
        let a = fit(&out.dataset, &fc).unwrap();
        let b = fit(&warped, &fc).unwrap();
        assert_eq!(a.params, b.params);
        for (r, s) in a.posteriors.rows.iter().zip(&b.posteriors.rows) {
            for k in 0..4 {
                assert!((r[k] - s[k]).abs() <= 1e-12);
            }
        }
    }

    fn preset_like(seed: u64, n: usize) -> SimConfig {
        SimConfig {
            n,
            pi: [0.5, 0.1, 0.1, 0.3],
            signal1: SignalLaw { mu: -3.0, var: 1.0 },
            signal2: SignalLaw { mu: -3.0, var: 1.0 },
            k1: -1.65,
            k2: -1.65,
            seed,
        }
    }

    #[test]
    fn duplicated_list_puts_signal_in_both() {
        let out = simulate(&preset_like(9, 3000)).unwrap();
        let copy: Vec<_> = out.list1.entries.iter().map(|e| (e.locus_id.clone(), e.score)).collect();
        let twin = RankList::from_pairs("twin", copy, out.list1.cutoff).unwrap();
        let data = merge_lists(&out.list1, &twin).unwrap();
        let res = fit(&data, &small_fit_config()).unwrap();
        let pi = res.params.pi;
        assert!(pi[1] < 0.02 && pi[2] < 0.02, "{pi:?}");
        assert!(pi[3] > 0.3, "{pi:?}");
    }

    #[test]
    fn starting_points_are_seeded() {
        let counts = PatternCounts {
            n_both: 10,
            n_only1: 30,
            n_only2: 0,
        };
        let cfg = FitConfig::default();
        let a = cfg.starting_points(&counts).unwrap();
        assert_eq!(a.len(), 2 + cfg.random_starts);
        assert_eq!(a, cfg.starting_points(&counts).unwrap());
        assert_ne!(a, cfg.clone().with_seed(1).starting_points(&counts).unwrap());
        assert_eq!(a[0], cfg.default_start().unwrap());
        // empty pattern is floored, the rest follow the counts
        let p = a[1].pi;
        assert!(p[2] > 0.0 && p[1] > p[3] && p[3] > p[2]);
        for s in &a {
            assert!(s.validate().is_ok());
        }
    }

    #[test]
    fn complete_case_guards_and_matches_fit_without_censoring() {
        let out = simulate(&preset_like(4, 800)).unwrap();
        let strict = FitConfig {
            min_complete_cases: 10_000,
            ..small_fit_config()
        };
        assert!(matches!(
            fit_complete_case(&out.dataset, &strict),
            Err(ScopError::TooFewCompleteCases { .. })
        ));
        let cc = out.dataset.complete_cases().unwrap();
        let cfg = FitConfig {
            min_complete_cases: 5,
            ..small_fit_config()
        };
        let a = fit(&cc, &cfg).unwrap();
        let b = fit_complete_case(&cc, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(b.mode, FitMode::CompleteCase);
    }

    #[test]
    fn refinement_never_lowers_the_rank_likelihood() {
        let out = simulate(&preset_like(12, 1500)).unwrap();
        let nested = fit(&out.dataset, &FitConfig { refine: false, ..small_fit_config() }).unwrap();
        let refined = fit(&out.dataset, &small_fit_config()).unwrap();
        assert!(refined.copula_loglik >= nested.copula_loglik);
        assert!(refined.refine_iters.is_some() && nested.refine_iters.is_none());
        assert_eq!(nested.converged, nested.nested_converged);
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let out = simulate(&preset_like(1, 800)).unwrap();
        let cfg = FitConfig {
            max_outer_iters: 1,
            refine: false,
            ..small_fit_config()
        };
        let res = fit(&out.dataset, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.n_outer_iters, 1);
        assert!(!res.loglik_trace.is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = [
            FitConfig { inner_tol: 0.0, ..FitConfig::default() },
            FitConfig { grid_size: 1, ..FitConfig::default() },
            FitConfig { max_outer_iters: 0, ..FitConfig::default() },
            FitConfig { init_mu: [0.5, -1.0], ..FitConfig::default() },
            FitConfig {
                signal_bounds: SignalBounds { mu_max: 1.0, ..SignalBounds::default() },
                ..FitConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert!(FitConfig::default().validate().is_ok());
    }
}
