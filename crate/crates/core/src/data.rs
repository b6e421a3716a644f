//! Rank lists and their merge into a bivariate right-censored sample.
//!
//! A locus reported in list `j` contributes its score as an observed time
//! (`delta_j = 1`); a locus missing from list `j` is censored at that list's
//! cutoff (`x_j = C_j`, `delta_j = 0`). Loci absent from both lists never
//! appear.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScopError};

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub locus_id: String,
    pub score: f64,
}

/// One scored list; smaller scores are more significant.
#[derive(Debug, Clone, PartialEq)]
pub struct RankList {
    pub list_id: String,
    pub entries: Vec<RankEntry>,
    pub cutoff: f64,
}

impl RankList {
    pub fn new(
        list_id: impl Into<String>,
        entries: Vec<RankEntry>,
        cutoff: f64,
    ) -> Result<Self> {
        let list = RankList {
            list_id: list_id.into(),
            entries,
            cutoff,
        };
        list.validate()?;
        Ok(list)
    }

    pub fn from_pairs<S: Into<String>>(
        list_id: impl Into<String>,
        pairs: impl IntoIterator<Item = (S, f64)>,
        cutoff: f64,
    ) -> Result<Self> {
        let entries = pairs
            .into_iter()
            .map(|(id, score)| RankEntry {
                locus_id: id.into(),
                score,
            })
            .collect();
        Self::new(list_id, entries, cutoff)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.cutoff.is_finite() || self.cutoff <= 0.0 {
            return Err(ScopError::InvalidCutoff {
                list: self.list_id.clone(),
                cutoff: self.cutoff,
            });
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !e.score.is_finite() || e.score < 0.0 {
                return Err(ScopError::InvalidScore {
                    list: self.list_id.clone(),
                    id: e.locus_id.clone(),
                    score: e.score,
                });
            }
            if e.score > self.cutoff {
                return Err(ScopError::ScoreAboveCutoff {
                    list: self.list_id.clone(),
                    id: e.locus_id.clone(),
                    score: e.score,
                    cutoff: self.cutoff,
                });
            }
            if !seen.insert(e.locus_id.as_str()) {
                return Err(ScopError::DuplicateLocus {
                    list: self.list_id.clone(),
                    id: e.locus_id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusRecord {
    pub locus_id: String,
    pub x1: f64,
    pub x2: f64,
    pub delta1: bool,
    pub delta2: bool,
}

impl LocusRecord {
    pub fn x(&self, margin: Margin) -> f64 {
        match margin {
            Margin::First => self.x1,
            Margin::Second => self.x2,
        }
    }

    pub fn delta(&self, margin: Margin) -> bool {
        match margin {
            Margin::First => self.delta1,
            Margin::Second => self.delta2,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.delta1 && self.delta2
    }
}

/// Which of the two lists a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Margin {
    First,
    Second,
}

impl Margin {
    pub const BOTH: [Margin; 2] = [Margin::First, Margin::Second];

    pub fn other(self) -> Margin {
        match self {
            Margin::First => Margin::Second,
            Margin::Second => Margin::First,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Margin::First => 0,
            Margin::Second => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCounts {
    pub n_both: usize,
    pub n_only1: usize,
    pub n_only2: usize,
}

impl PatternCounts {
    pub fn total(&self) -> usize {
        self.n_both + self.n_only1 + self.n_only2
    }

    pub fn only(&self, margin: Margin) -> usize {
        match margin {
            Margin::First => self.n_only1,
            Margin::Second => self.n_only2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BivariateDataset {
    records: Vec<LocusRecord>,
    cutoffs: (f64, f64),
    counts: PatternCounts,
}

impl BivariateDataset {
    /// Builds a dataset from already-encoded records, checking every record
    /// against the censoring encoding.
    pub fn from_records(records: Vec<LocusRecord>, cutoffs: (f64, f64)) -> Result<Self> {
        if records.is_empty() {
            return Err(ScopError::EmptyDataset);
        }
        for (c, name) in [(cutoffs.0, "1"), (cutoffs.1, "2")] {
            if !c.is_finite() || c <= 0.0 {
                return Err(ScopError::InvalidCutoff {
                    list: name.into(),
                    cutoff: c,
                });
            }
        }
        let mut counts = PatternCounts {
            n_both: 0,
            n_only1: 0,
            n_only2: 0,
        };
        for r in &records {
            let bad = |reason: &str| ScopError::InvalidRecord {
                id: r.locus_id.clone(),
                reason: reason.into(),
            };
            for (x, d, c) in [(r.x1, r.delta1, cutoffs.0), (r.x2, r.delta2, cutoffs.1)] {
                if !x.is_finite() || x < 0.0 {
                    return Err(bad("observed time must be finite and >= 0"));
                }
                if x > c {
                    return Err(bad("observed time exceeds cutoff"));
                }
                if !d && x != c {
                    return Err(bad("censored coordinate must equal the cutoff"));
                }
            }
            match (r.delta1, r.delta2) {
                (true, true) => counts.n_both += 1,
                (true, false) => counts.n_only1 += 1,
                (false, true) => counts.n_only2 += 1,
                (false, false) => return Err(bad("locus is censored in both lists")),
            }
        }
        Ok(BivariateDataset {
            records,
            cutoffs,
            counts,
        })
    }

    pub fn records(&self) -> &[LocusRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn cutoffs(&self) -> (f64, f64) {
        self.cutoffs
    }

    pub fn cutoff(&self, margin: Margin) -> f64 {
        match margin {
            Margin::First => self.cutoffs.0,
            Margin::Second => self.cutoffs.1,
        }
    }

    pub fn counts(&self) -> PatternCounts {
        self.counts
    }

    pub fn times(&self, margin: Margin) -> Vec<f64> {
        self.records.iter().map(|r| r.x(margin)).collect()
    }

    pub fn deltas(&self, margin: Margin) -> Vec<bool> {
        self.records.iter().map(|r| r.delta(margin)).collect()
    }

    /// Records observed in both lists, or `None` if there are none.
    pub fn complete_cases(&self) -> Option<BivariateDataset> {
        let records: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.is_complete())
            .cloned()
            .collect();
        BivariateDataset::from_records(records, self.cutoffs).ok()
    }

    /// Same loci with the two lists exchanged.
    pub fn swapped(&self) -> BivariateDataset {
        let records = self
            .records
            .iter()
            .map(|r| LocusRecord {
                locus_id: r.locus_id.clone(),
                x1: r.x2,
                x2: r.x1,
                delta1: r.delta2,
                delta2: r.delta1,
            })
            .collect();
        BivariateDataset {
            records,
            cutoffs: (self.cutoffs.1, self.cutoffs.0),
            counts: PatternCounts {
                n_both: self.counts.n_both,
                n_only1: self.counts.n_only2,
                n_only2: self.counts.n_only1,
            },
        }
    }
}

/// Merges two lists into one record per locus in their union, ordered by
/// locus id.
pub fn merge_lists(list1: &RankList, list2: &RankList) -> Result<BivariateDataset> {
    list1.validate()?;
    list2.validate()?;
    let mut union: BTreeMap<&str, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for e in &list1.entries {
        union.entry(e.locus_id.as_str()).or_default().0 = Some(e.score);
    }
    for e in &list2.entries {
        union.entry(e.locus_id.as_str()).or_default().1 = Some(e.score);
    }
    let (c1, c2) = (list1.cutoff, list2.cutoff);
    let records = union
        .into_iter()
        .map(|(id, (s1, s2))| LocusRecord {
            locus_id: id.to_string(),
            x1: s1.unwrap_or(c1),
            x2: s2.unwrap_or(c2),
            delta1: s1.is_some(),
            delta2: s2.is_some(),
        })
        .collect();
    BivariateDataset::from_records(records, (c1, c2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VennSummary {
    pub n_union: usize,
    pub n_intersection: usize,
    pub n_only1: usize,
    pub n_only2: usize,
    pub fraction_shared: f64,
}

pub fn venn_summary(dataset: &BivariateDataset) -> VennSummary {
    let c = dataset.counts();
    let n_union = c.total();
    VennSummary {
        n_union,
        n_intersection: c.n_both,
        n_only1: c.n_only1,
        n_only2: c.n_only2,
        fraction_shared: c.n_both as f64 / n_union as f64,
    }
}
