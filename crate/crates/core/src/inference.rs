//! Coexistence probabilities and rank-indexed reproducibility curves.

use serde::{Deserialize, Serialize};

use crate::data::{BivariateDataset, Margin};
use crate::em::Posteriors;
use crate::error::{Result, ScopError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub rank: usize,
    pub score_threshold: f64,
    pub value: f64,
}

/// Posterior probability that each locus is signal in both lists.
pub fn coexistence_probability(posteriors: &Posteriors) -> Vec<f64> {
    posteriors.column(3)
}

/// Record indices sorted by score in `margin`, ties broken by locus id.
/// Censored records sit at the cutoff, so they trail the observed ones.
pub fn rank_order(dataset: &BivariateDataset, margin: Margin) -> Vec<usize> {
    let recs = dataset.records();
    let mut idx: Vec<usize> = (0..recs.len()).collect();
    idx.sort_by(|&a, &b| {
        recs[a]
            .x(margin)
            .total_cmp(&recs[b].x(margin))
            .then_with(|| recs[a].locus_id.cmp(&recs[b].locus_id))
    });
    idx
}

/// Number of records reported in `margin`: the depth of that observed list.
pub fn observed_depth(dataset: &BivariateDataset, margin: Margin) -> usize {
    let c = dataset.counts();
    c.n_both + c.only(margin)
}

fn running_mean(dataset: &BivariateDataset, order: &[usize], values: &[f64], margin: Margin) -> Vec<CurvePoint> {
    let recs = dataset.records();
    let mut sum = 0.0;
    order
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            sum += values[i];
            CurvePoint {
                rank: r + 1,
                score_threshold: recs[i].x(margin),
                value: (sum / (r + 1) as f64).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// Running mean of per-locus coexistence probability along one list's
/// ranking.
pub fn cop_curve(dataset: &BivariateDataset, cops: &[f64], margin: Margin) -> Result<Vec<CurvePoint>> {
    if cops.len() != dataset.len() {
        return Err(ScopError::LabelMismatch {
            labels: cops.len(),
            records: dataset.len(),
        });
    }
    let order = rank_order(dataset, margin);
    Ok(running_mean(dataset, &order, cops, margin))
}

pub fn idr_curve(cop: &[CurvePoint]) -> Vec<CurvePoint> {
    cop.iter()
        .map(|p| CurvePoint {
            value: 1.0 - p.value,
            ..*p
        })
        .collect()
}

/// Among the top-k reported loci of one list, the fraction absent from the
/// other list. Only loci reported in `margin` are ranked.
pub fn naive_venn_curve(dataset: &BivariateDataset, margin: Margin) -> Vec<CurvePoint> {
    let recs = dataset.records();
    let other = margin.other();
    let mut absent = 0usize;
    rank_order(dataset, margin)
        .into_iter()
        .filter(|&i| recs[i].delta(margin))
        .enumerate()
        .map(|(r, i)| {
            if !recs[i].delta(other) {
                absent += 1;
            }
            CurvePoint {
                rank: r + 1,
                score_threshold: recs[i].x(margin),
                value: absent as f64 / (r + 1) as f64,
            }
        })
        .collect()
}

/// COP curve built from true pattern labels instead of posteriors.
pub fn truth_curves(labels: Option<&[u8]>, dataset: &BivariateDataset, margin: Margin) -> Result<Vec<CurvePoint>> {
    let labels = labels.ok_or(ScopError::MissingLabels)?;
    let indicator: Vec<f64> = labels.iter().map(|&b| if b == 3 { 1.0 } else { 0.0 }).collect();
    cop_curve(dataset, &indicator, margin)
}

/// Value of a rank-indexed curve at `rank` (1-based).
pub fn value_at(curve: &[CurvePoint], rank: usize) -> Option<f64> {
    rank.checked_sub(1).and_then(|i| curve.get(i)).map(|p| p.value)
}

/// One margin's curves joined by rank, ready for CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub rank: usize,
    pub score_threshold: f64,
    pub cop: f64,
    pub idr: f64,
    /// Absent past the depth of the reported list.
    pub naive_venn: Option<f64>,
}

pub fn curve_table(dataset: &BivariateDataset, cops: &[f64], margin: Margin) -> Result<Vec<CurveRow>> {
    let cop = cop_curve(dataset, cops, margin)?;
    let idr = idr_curve(&cop);
    let naive = naive_venn_curve(dataset, margin);
    Ok(cop
        .iter()
        .zip(&idr)
        .enumerate()
        .map(|(i, (c, d))| CurveRow {
            rank: c.rank,
            score_threshold: c.score_threshold,
            cop: c.value,
            idr: d.value,
            naive_venn: naive.get(i).map(|p| p.value),
        })
        .collect())
}

/// CSV with header `rank,score_threshold,cop,idr,naive_venn`. With
/// `stride > 1` only every stride-th rank is written, plus the first rank,
/// the last reported rank and the last rank.
pub fn curve_csv(rows: &[CurveRow], stride: usize, observed: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::from("rank,score_threshold,cop,idr,naive_venn\n");
    let last = rows.len();
    for row in rows {
        let keep = stride == 1 || row.rank == 1 || row.rank % stride == 0 || row.rank == observed || row.rank == last;
        if !keep {
            continue;
        }
        let naive = row.naive_venn.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.rank, row.score_threshold, row.cop, row.idr, naive
        ));
    }
    out
}
