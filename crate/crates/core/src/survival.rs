//! Kaplan-Meier estimate of `P(T >= t)` for one list's scores.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScopError};

/// Default divisor for the survival floor: values are clamped to at least
/// `1 / (FLOOR_DIVISOR * n)`.
pub const DEFAULT_FLOOR_DIVISOR: f64 = 10.0;

/// Left-continuous step function: `evaluate(t)` is the product over event
/// times strictly below `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSurvival {
    event_times: Vec<f64>,
    /// `survival_values[k]` holds on `(event_times[k], event_times[k + 1]]`.
    survival_values: Vec<f64>,
    cutoff: f64,
    floor_value: f64,
}

impl MarginalSurvival {
    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn survival_values(&self) -> &[f64] {
        &self.survival_values
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn floor_value(&self) -> f64 {
        self.floor_value
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        // number of event times strictly below t
        let k = self.event_times.partition_point(|&e| e < t);
        if k == 0 {
            1.0
        } else {
            self.survival_values[k - 1]
        }
    }

    /// `event_time,survival` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("event_time,survival\n");
        for (t, s) in self.event_times.iter().zip(&self.survival_values) {
            out.push_str(&format!("{t},{s}\n"));
        }
        out
    }
}

pub fn kaplan_meier(times: &[f64], deltas: &[bool], cutoff: f64) -> Result<MarginalSurvival> {
    kaplan_meier_with_floor(times, deltas, cutoff, DEFAULT_FLOOR_DIVISOR)
}

pub fn kaplan_meier_with_floor(
    times: &[f64],
    deltas: &[bool],
    cutoff: f64,
    floor_divisor: f64,
) -> Result<MarginalSurvival> {
    let bad = |msg: String| Err(ScopError::InvalidSurvivalInput(msg));
    if times.is_empty() {
        return bad("no observations".into());
    }
    if times.len() != deltas.len() {
        return bad(format!(
            "{} times but {} censoring indicators",
            times.len(),
            deltas.len()
        ));
    }
    if !(floor_divisor.is_finite() && floor_divisor > 0.0) {
        return bad(format!("floor divisor {floor_divisor} must be positive"));
    }
    for (i, (&t, &d)) in times.iter().zip(deltas).enumerate() {
        if !t.is_finite() || t > cutoff {
            return bad(format!("observation {i}: time {t} not in range (cutoff {cutoff})"));
        }
        if !d && t != cutoff {
            return bad(format!(
                "observation {i}: censored time {t} differs from cutoff {cutoff}"
            ));
        }
    }

    let n = times.len();
    let eps = 1.0 / (floor_divisor * n as f64);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    // The product of (1 - d_k / n_k) telescopes to (at risk) / n times a
    // correction that only changes when censored observations leave the risk
    // set. Without censoring the correction stays exactly 1 and the estimate
    // is bit-identical to the empirical survival.
    let mut event_times = Vec::new();
    let mut survival_values = Vec::new();
    let mut at_risk = n;
    let mut correction = 1.0;
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let mut events = 0usize;
        let mut j = i;
        while j < n && times[order[j]] == t {
            if deltas[order[j]] {
                events += 1;
            }
            j += 1;
        }
        let censored = (j - i) - events;
        let survivors = at_risk - events;
        if events > 0 {
            let s = survivors as f64 / n as f64 * correction;
            event_times.push(t);
            survival_values.push(s.max(eps));
        }
        let remaining = survivors - censored;
        if censored > 0 && remaining > 0 {
            correction *= survivors as f64 / remaining as f64;
        }
        at_risk = remaining;
        i = j;
    }

    let floor_value = survival_values.last().copied().unwrap_or(1.0);
    Ok(MarginalSurvival {
        event_times,
        survival_values,
        cutoff,
        floor_value,
    })
}
