//! Seeded draws from the generative mixture, with ground-truth labels.
//!
//! Every locus gets its own ChaCha stream (`seed`, stream = locus index), so
//! a locus's draws do not depend on how generation is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{merge_lists, BivariateDataset, RankEntry, RankList};
use crate::error::{Result, ScopError};
use crate::exec::Execution;
use crate::model::ModelParams;
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalLaw {
    pub mu: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub pi: [f64; 4],
    pub signal1: SignalLaw,
    pub signal2: SignalLaw,
    /// Latent cutoffs; a coordinate is reported when its latent value is <= K.
    pub k1: f64,
    pub k2: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ScopError::Config("simulation needs n >= 1".into()));
        }
        if !(self.k1.is_finite() && self.k2.is_finite()) {
            return Err(ScopError::Config("latent cutoffs must be finite".into()));
        }
        self.as_params().map(|_| ())
    }

    pub fn as_params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.pi,
            [self.signal1.mu, self.signal2.mu],
            [self.signal1.var, self.signal2.var],
        )
    }

    /// Score-scale cutoffs `Phi(K_j)`.
    pub fn cutoffs(&self) -> (f64, f64) {
        (normal::cdf(self.k1), normal::cdf(self.k2))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub const PRESETS: [&str; 3] = ["case1", "case2", "case3"];

/// The three simulation designs; the seed is left at 0.
pub fn preset(name: &str) -> Result<SimConfig> {
    let law = |mu: f64| SignalLaw { mu, var: 1.0 };
    let (n, pi, mu) = match name {
        "case1" => (10_000, [0.9, 0.0, 0.0, 0.1], -5.0),
        "case2" => (1_000, [0.1, 0.0, 0.0, 0.9], -5.0),
        "case3" => (10_000, [0.3, 0.5, 0.0, 0.2], -3.0),
        other => return Err(ScopError::UnknownPreset(other.to_string())),
    };
    Ok(SimConfig {
        n,
        pi,
        signal1: law(mu),
        signal2: law(mu),
        k1: -1.65,
        k2: -1.65,
        seed: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub list1: RankList,
    pub list2: RankList,
    pub dataset: BivariateDataset,
    /// Pattern of each retained record, aligned with `dataset.records()`.
    pub labels: Vec<u8>,
    /// Untruncated latent draws of each retained record.
    pub latent: Vec<(f64, f64)>,
    pub n_generated: usize,
    pub n_retained: usize,
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    b: u8,
    z1: f64,
    z2: f64,
}

fn draw_locus(config: &SimConfig, index: usize) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut b = 3u8;
    for (k, &p) in config.pi.iter().enumerate() {
        acc += p;
        if u < acc {
            b = k as u8;
            break;
        }
    }
    // skip zero-weight patterns that the tail of the cumulative sum might hit
    while config.pi[b as usize] == 0.0 && b > 0 {
        b -= 1;
    }
    let e1: f64 = rng.sample(StandardNormal);
    let e2: f64 = rng.sample(StandardNormal);
    let z1 = if b == 1 || b == 3 {
        config.signal1.mu + config.signal1.var.sqrt() * e1
    } else {
        e1
    };
    let z2 = if b == 2 || b == 3 {
        config.signal2.mu + config.signal2.var.sqrt() * e2
    } else {
        e2
    };
    Draw { b, z1, z2 }
}

pub fn locus_id(index: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(1);
    format!("locus{index:0width$}")
}

pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    simulate_with(config, Execution::Parallel)
}

pub fn simulate_with(config: &SimConfig, exec: Execution) -> Result<SimOutput> {
    config.validate()?;
    let draws = exec.map_indexed(config.n, |i| draw_locus(config, i));
    let (c1, c2) = config.cutoffs();

    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    let mut labels = Vec::new();
    let mut latent = Vec::new();
    for (i, d) in draws.iter().enumerate() {
        let obs1 = d.z1 <= config.k1;
        let obs2 = d.z2 <= config.k2;
        if !(obs1 || obs2) {
            continue;
        }
        let id = locus_id(i, config.n);
        if obs1 {
            e1.push(RankEntry {
                locus_id: id.clone(),
                score: normal::cdf(d.z1),
            });
        }
        if obs2 {
            e2.push(RankEntry {
                locus_id: id,
                score: normal::cdf(d.z2),
            });
        }
        labels.push(d.b);
        latent.push((d.z1, d.z2));
    }
    let list1 = RankList::new("list1", e1, c1)?;
    let list2 = RankList::new("list2", e2, c2)?;
    // zero-padded ids sort in generation order, so labels stay aligned
    let dataset = merge_lists(&list1, &list2)?;
    let n_retained = dataset.len();
    Ok(SimOutput {
        list1,
        list2,
        dataset,
        labels,
        latent,
        n_generated: config.n,
        n_retained,
    })
}
