//! Four-pattern frailty mixture on latent Gaussian scales.
//!
//! Pattern `b` selects, per list, either the N(0, 1) noise law or that
//! list's N(mu_j, var_j) signal law:
//!
//! | b | list 1 | list 2 |
//! |---|--------|--------|
//! | 0 | noise  | noise  |
//! | 1 | signal | noise  |
//! | 2 | noise  | signal |
//! | 3 | signal | signal |

use serde::{Deserialize, Serialize};

use crate::data::Margin;
use crate::error::{Result, ScopError};
use crate::normal;

pub const DEFAULT_GRID_SIZE: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Noise,
    Signal,
}

impl Component {
    /// Component used for `margin` under pattern `b`.
    pub fn for_pattern(b: usize, margin: Margin) -> Component {
        let signal = match margin {
            Margin::First => b == 1 || b == 3,
            Margin::Second => b == 2 || b == 3,
        };
        if signal {
            Component::Signal
        } else {
            Component::Noise
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub pi: [f64; 4],
    pub mu: [f64; 2],
    pub var: [f64; 2],
}

impl ModelParams {
    pub fn new(pi: [f64; 4], mu: [f64; 2], var: [f64; 2]) -> Result<Self> {
        let p = ModelParams { pi, mu, var };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ScopError::InvalidParams(m));
        if self.pi.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return err(format!("mixture weights {:?} must be non-negative", self.pi));
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return err(format!("mixture weights sum to {total}, not 1"));
        }
        for j in 0..2 {
            if !(self.mu[j] < 0.0 && self.mu[j].is_finite()) {
                return err(format!("signal mean {} must be negative", self.mu[j]));
            }
            if !(self.var[j] > 0.0 && self.var[j].is_finite()) {
                return err(format!("signal variance {} must be positive", self.var[j]));
            }
        }
        Ok(())
    }

    pub fn mu(&self, margin: Margin) -> f64 {
        self.mu[margin.index()]
    }

    pub fn var(&self, margin: Margin) -> f64 {
        self.var[margin.index()]
    }

    pub fn sigma(&self, margin: Margin) -> f64 {
        self.var(margin).sqrt()
    }

    /// Marginal (noise, signal) weights for one list.
    pub fn margin_weights(&self, margin: Margin) -> (f64, f64) {
        let [p0, p1, p2, p3] = self.pi;
        match margin {
            Margin::First => (p0 + p2, p1 + p3),
            Margin::Second => (p0 + p1, p2 + p3),
        }
    }
}

pub fn component_log_density(z: f64, which: Component, mu: f64, var: f64) -> f64 {
    match which {
        Component::Noise => normal::ln_pdf(z),
        Component::Signal => {
            let sd = var.sqrt();
            normal::ln_pdf((z - mu) / sd) - sd.ln()
        }
    }
}

/// `ln P(Z >= z)` for the component.
pub fn component_log_survival(z: f64, which: Component, mu: f64, var: f64) -> f64 {
    match which {
        Component::Noise => normal::ln_sf(z),
        Component::Signal => normal::ln_sf((z - mu) / var.sqrt()),
    }
}

/// `G_j(z) = P(Z_j >= z)` under the marginal mixture of list `margin`.
pub fn marginal_survival(z: f64, params: &ModelParams, margin: Margin) -> f64 {
    let (w_noise, w_signal) = params.margin_weights(margin);
    let u = (z - params.mu(margin)) / params.sigma(margin);
    w_noise * normal::sf(z) + w_signal * normal::sf(u)
}

/// `G_j` tabulated on an equally spaced grid, for interpolated inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    points: Vec<f64>,
    g_values: Vec<f64>,
}

impl LatentGrid {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g_values
    }

    pub fn spacing(&self) -> f64 {
        self.points[1] - self.points[0]
    }

    /// Latent value whose marginal survival is `p`, linear between knots.
    /// Probabilities outside the tabulated range clamp to the end knots.
    pub fn inverse(&self, p: f64) -> f64 {
        let g = &self.g_values;
        let last = g.len() - 1;
        if p >= g[0] {
            return self.points[0];
        }
        if p <= g[last] {
            return self.points[last];
        }
        // first knot with G <= p; g[0] > p so j >= 1
        let j = g.partition_point(|&v| v > p);
        if g[j] == p {
            return self.points[j];
        }
        let (z0, z1) = (self.points[j - 1], self.points[j]);
        let (g0, g1) = (g[j - 1], g[j]);
        z0 + (g0 - p) / (g0 - g1) * (z1 - z0)
    }
}

/// Range `[min(-5, mu - 5 sigma), max(5, mu + 5 sigma)]`.
pub fn grid_range(mu: f64, sigma: f64) -> (f64, f64) {
    ((-5.0f64).min(mu - 5.0 * sigma), 5.0f64.max(mu + 5.0 * sigma))
}

pub fn build_grid(params: &ModelParams, margin: Margin) -> LatentGrid {
    build_grid_with_size(params, margin, DEFAULT_GRID_SIZE)
}

pub fn build_grid_with_size(params: &ModelParams, margin: Margin, size: usize) -> LatentGrid {
    let size = size.max(2);
    let (lo, hi) = grid_range(params.mu(margin), params.sigma(margin));
    let step = (hi - lo) / (size - 1) as f64;
    let points: Vec<f64> = (0..size)
        .map(|i| if i == size - 1 { hi } else { lo + step * i as f64 })
        .collect();
    let g_values = points
        .iter()
        .map(|&z| marginal_survival(z, params, margin))
        .collect();
    LatentGrid { points, g_values }
}

pub fn inverse_g(p: f64, grid: &LatentGrid) -> f64 {
    grid.inverse(p)
}
