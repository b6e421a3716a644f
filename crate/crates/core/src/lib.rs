//! Survival copula mixture model for comparing two scored rank lists.
//!
//! Two lists of loci, each truncated at its own score cutoff, are merged into
//! a bivariate right-censored sample: a locus missing from one list is
//! censored at that list's cutoff. Scores are mapped to latent Gaussian
//! mixture scales through Kaplan-Meier margins, and a four-pattern mixture
//! (noise/noise, signal/noise, noise/signal, signal/signal) is fit by a
//! nested EM. The fit yields, per locus, the probability of being signal in
//! both lists, and from that rank-indexed coexistence (COP) and
//! irreproducibility (IDR) curves for each list.
//!
//! ```no_run
//! use scop::{data::{merge_lists, RankList}, em::{fit, FitConfig}, inference};
//! # fn main() -> Result<(), scop::ScopError> {
//! let a = RankList::from_pairs("A", [("r1", 0.01), ("r2", 0.03)], 0.05)?;
//! let b = RankList::from_pairs("B", [("r2", 0.02), ("r3", 0.04)], 0.05)?;
//! let data = merge_lists(&a, &b)?;
//! let res = fit(&data, &FitConfig::default())?;
//! let cops = inference::coexistence_probability(&res.posteriors);
//! let idr1 = inference::idr_curve(&inference::cop_curve(&data, &cops, scop::Margin::First)?);
//! # let _ = idr1;
//! # Ok(())
//! # }
//! ```

pub mod cli;
pub mod data;
pub mod em;
pub mod error;
pub mod exec;
pub mod inference;
pub mod io;
pub mod model;
pub mod normal;
pub mod optim;
pub mod refine;
pub mod simulate;
pub mod survival;

pub use data::{merge_lists, venn_summary, BivariateDataset, LocusRecord, Margin, RankList, VennSummary};
pub use em::{fit, fit_complete_case, FitConfig, FitResult, PseudoData, Posteriors};
pub use error::{Result, ScopError};
pub use exec::Execution;
pub use model::{LatentGrid, ModelParams};
pub use simulate::{preset, simulate, SimConfig, SimOutput};
pub use survival::{kaplan_meier, MarginalSurvival};
