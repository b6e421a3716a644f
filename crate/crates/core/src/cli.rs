//! `scop` command line: simulate, fit, curves, venn.
//!
//! Every command writes a `manifest.json` next to its outputs recording the
//! resolved configuration, input digests and output digests. Timestamps come
//! from `SOURCE_DATE_EPOCH` when it is set, so manifests can be reproduced
//! byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{merge_lists, venn_summary, BivariateDataset, Margin};
use crate::em::{fit, fit_complete_case, FitConfig, FitMode, FitResult};
use crate::inference::{coexistence_probability, curve_csv, curve_table, observed_depth};
use crate::io;
use crate::simulate::{preset, simulate, SimConfig, PRESETS};

/// Exit status when fitting stopped at the outer iteration cap.
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "scop", version, about = "Survival copula mixture model for two censored rank lists")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    CompleteCase,
}

#[derive(Debug, clap::Args)]
pub struct ListArgs {
    /// First rank list (TSV with header `locus_id<TAB>score`)
    #[arg(long)]
    pub list1: PathBuf,
    /// Second rank list
    #[arg(long)]
    pub list2: PathBuf,
    /// Largest reportable score of list 1
    #[arg(long)]
    pub cutoff1: f64,
    /// Largest reportable score of list 2
    #[arg(long)]
    pub cutoff2: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw two rank lists and labels from a preset or a simulation config
    Simulate {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        /// Simulation config (JSON or key=value)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the mixture model to two rank lists
    Fit {
        #[command(flatten)]
        lists: ListArgs,
        /// Fit config (JSON or key=value)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "full")]
        mode: ModeArg,
        /// Also write the Kaplan-Meier margins as CSV
        #[arg(long)]
        dump_margins: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit COP / IDR / NaiveVenn curves from a fit directory
    Curves {
        /// Output directory of a previous `fit`
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        list1: PathBuf,
        #[arg(long)]
        list2: PathBuf,
        #[arg(long)]
        cutoff1: Option<f64>,
        #[arg(long)]
        cutoff2: Option<f64>,
        /// Write every n-th rank only
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Venn counts of two rank lists
    Venn {
        #[command(flatten)]
        lists: ListArgs,
        /// Also write venn.json and a manifest here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: BTreeMap<String, InputDigest>,
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now_unix() -> u64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return epoch;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct OutputDir {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutputDir {
    fn create(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written
            .insert(name.to_string(), io::sha256_hex(contents.as_bytes()));
        Ok(())
    }

    fn finish(self, mut manifest: RunManifest) -> anyhow::Result<()> {
        manifest.outputs = self.written;
        manifest.finished_unix = now_unix();
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn digest(path: &Path) -> anyhow::Result<InputDigest> {
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: io::file_digest(path).with_context(|| format!("reading {}", path.display()))?,
    })
}

fn manifest(command: &str, seed: Option<u64>, config: Value, inputs: BTreeMap<String, InputDigest>, started: u64) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        inputs,
        outputs: BTreeMap::new(),
        started_unix: started,
        finished_unix: started,
    }
}

fn load_dataset(list1: &Path, list2: &Path, cutoff1: f64, cutoff2: f64) -> anyhow::Result<BivariateDataset> {
    let a = io::read_rank_list(list1, "list1", cutoff1).with_context(|| format!("loading {}", list1.display()))?;
    let b = io::read_rank_list(list2, "list2", cutoff2).with_context(|| format!("loading {}", list2.display()))?;
    Ok(merge_lists(&a, &b)?)
}

/// Runs one command and returns the process exit status.
pub fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Simulate {
            preset: name,
            config,
            seed,
            out,
        } => cmd_simulate(name.as_deref(), config.as_deref(), seed, &out),
        Command::Fit {
            lists,
            config,
            seed,
            mode,
            dump_margins,
            out,
        } => cmd_fit(&lists, config.as_deref(), seed, mode, dump_margins, &out),
        Command::Curves {
            fit,
            list1,
            list2,
            cutoff1,
            cutoff2,
            stride,
            out,
        } => cmd_curves(&fit, &list1, &list2, cutoff1, cutoff2, stride, &out),
        Command::Venn { lists, out } => cmd_venn(&lists, out.as_deref()),
    }
}

pub fn cmd_simulate(name: Option<&str>, config: Option<&Path>, seed: Option<u64>, out: &Path) -> anyhow::Result<u8> {
    let started = now_unix();
    let mut inputs = BTreeMap::new();
    let mut cfg: SimConfig = match (name, config) {
        (Some(n), _) => preset(n).map_err(|e| anyhow!("{e}"))?,
        (None, Some(path)) => {
            inputs.insert("config".to_string(), digest(path)?);
            io::parse_config(&fs::read_to_string(path)?)?
        }
        (None, None) => bail!("either --preset ({}) or --config is required", PRESETS.join(", ")),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sim = simulate(&cfg)?;
    let mut dir = OutputDir::create(out)?;
    dir.write("list1.tsv", &io::rank_list_tsv(&sim.list1))?;
    dir.write("list2.tsv", &io::rank_list_tsv(&sim.list2))?;
    let ids = sim.dataset.records().iter().map(|r| r.locus_id.as_str());
    dir.write("labels.tsv", &io::labels_tsv(ids, &sim.labels))?;
    let (c1, c2) = cfg.cutoffs();
    let config_value = json!({
        "preset": name,
        "simulation": cfg,
        "cutoff1": c1,
        "cutoff2": c2,
        "n_retained": sim.n_retained,
    });
    dir.finish(manifest("simulate", Some(cfg.seed), config_value, inputs, started))?;
    Ok(0)
}

fn fit_summary(res: &FitResult, dataset: &BivariateDataset) -> Value {
    json!({
        "params": res.params,
        "converged": res.converged,
        "nested_converged": res.nested_converged,
        "n_outer_iters": res.n_outer_iters,
        "refine_iters": res.refine_iters,
        "loglik": res.loglik(),
        "copula_loglik": res.copula_loglik,
        "mode": res.mode,
        "start_index": res.start_index,
        "n_records": dataset.len(),
        "cutoffs": [dataset.cutoffs().0, dataset.cutoffs().1],
    })
}

pub fn cmd_fit(
    lists: &ListArgs,
    config: Option<&Path>,
    seed: Option<u64>,
    mode: ModeArg,
    dump_margins: bool,
    out: &Path,
) -> anyhow::Result<u8> {
    let started = now_unix();
    let mut inputs = BTreeMap::new();
    inputs.insert("list1".to_string(), digest(&lists.list1)?);
    inputs.insert("list2".to_string(), digest(&lists.list2)?);
    let mut cfg: FitConfig = match config {
        Some(path) => {
            inputs.insert("config".to_string(), digest(path)?);
            io::parse_config(&fs::read_to_string(path)?)?
        }
        None => FitConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dataset = load_dataset(&lists.list1, &lists.list2, lists.cutoff1, lists.cutoff2)?;
    let res = match mode {
        ModeArg::Full => fit(&dataset, &cfg)?,
        ModeArg::CompleteCase => fit_complete_case(&dataset, &cfg)?,
    };
    let fitted = match mode {
        ModeArg::Full => dataset.clone(),
        ModeArg::CompleteCase => dataset.complete_cases().expect("checked by fit_complete_case"),
    };

    let mut dir = OutputDir::create(out)?;
    dir.write("params.json", &(serde_json::to_string_pretty(&fit_summary(&res, &fitted))? + "\n"))?;
    let ids = fitted.records().iter().map(|r| r.locus_id.as_str());
    dir.write("posteriors.csv", &io::posteriors_csv(ids, &res.posteriors))?;
    dir.write("loglik_trace.csv", &io::trace_csv(&res.loglik_trace))?;
    dir.write("venn.json", &(serde_json::to_string_pretty(&venn_summary(&dataset))? + "\n"))?;
    if dump_margins {
        dir.write("margin1.csv", &res.margins[0].to_csv())?;
        dir.write("margin2.csv", &res.margins[1].to_csv())?;
    }
    let config_value = json!({
        "fit": cfg,
        "mode": res.mode,
        "cutoff1": lists.cutoff1,
        "cutoff2": lists.cutoff2,
    });
    dir.finish(manifest("fit", Some(cfg.seed), config_value, inputs, started))?;
    Ok(if res.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn cmd_curves(
    fit_dir: &Path,
    list1: &Path,
    list2: &Path,
    cutoff1: Option<f64>,
    cutoff2: Option<f64>,
    stride: usize,
    out: &Path,
) -> anyhow::Result<u8> {
    let started = now_unix();
    let fit_manifest: RunManifest = serde_json::from_value(read_json(&fit_dir.join("manifest.json"))?)
        .context("fit manifest is malformed")?;
    if fit_manifest.command != "fit" {
        bail!("{} is not a fit output directory", fit_dir.display());
    }
    let mut inputs = BTreeMap::new();
    for (key, path) in [("list1", list1), ("list2", list2)] {
        let d = digest(path)?;
        let recorded = fit_manifest
            .inputs
            .get(key)
            .ok_or_else(|| anyhow!("fit manifest has no digest for {key}"))?;
        if recorded.sha256 != d.sha256 {
            bail!(
                "{} does not match the {key} the fit was run on (stale input)",
                path.display()
            );
        }
        inputs.insert(key.to_string(), d);
    }
    let recorded_cutoff = |key: &str| {
        fit_manifest.config[key]
            .as_f64()
            .ok_or_else(|| anyhow!("fit manifest has no {key}"))
    };
    let c1 = recorded_cutoff("cutoff1")?;
    let c2 = recorded_cutoff("cutoff2")?;
    for (given, recorded, name) in [(cutoff1, c1, "cutoff1"), (cutoff2, c2, "cutoff2")] {
        if let Some(g) = given {
            if g != recorded {
                bail!("--{name} {g} differs from the fit's {recorded} (stale input)");
            }
        }
    }
    for name in ["params.json", "posteriors.csv"] {
        let path = fit_dir.join(name);
        let d = digest(&path)?;
        if fit_manifest.outputs.get(name) != Some(&d.sha256) {
            bail!("{} was modified after the fit", path.display());
        }
        inputs.insert(name.to_string(), d);
    }

    let mode: FitMode = serde_json::from_value(read_json(&fit_dir.join("params.json"))?["mode"].clone())
        .context("params.json has no fit mode")?;
    let full = load_dataset(list1, list2, c1, c2)?;
    let dataset = match mode {
        FitMode::Full => full,
        FitMode::CompleteCase => full
            .complete_cases()
            .ok_or_else(|| anyhow!("no complete cases in the inputs"))?,
    };
    let post_path = fit_dir.join("posteriors.csv");
    let (ids, posteriors) = io::parse_posteriors_csv(&fs::read_to_string(&post_path)?, &post_path)?;
    let aligned = ids.len() == dataset.len()
        && ids.iter().zip(dataset.records()).all(|(a, r)| *a == r.locus_id);
    if !aligned {
        bail!("posteriors.csv does not line up with the merged lists");
    }
    let cops = coexistence_probability(&posteriors);

    let mut dir = OutputDir::create(out)?;
    for m in Margin::BOTH {
        let rows = curve_table(&dataset, &cops, m)?;
        let csv = curve_csv(&rows, stride, observed_depth(&dataset, m));
        dir.write(&format!("curves_list{}.csv", m.number()), &csv)?;
    }
    let config_value = json!({ "stride": stride, "mode": mode, "cutoff1": c1, "cutoff2": c2 });
    dir.finish(manifest("curves", fit_manifest.seed, config_value, inputs, started))?;
    Ok(0)
}

pub fn cmd_venn(lists: &ListArgs, out: Option<&Path>) -> anyhow::Result<u8> {
    let started = now_unix();
    let dataset = load_dataset(&lists.list1, &lists.list2, lists.cutoff1, lists.cutoff2)?;
    let text = serde_json::to_string_pretty(&venn_summary(&dataset))? + "\n";
    print!("{text}");
    if let Some(out) = out {
        let mut inputs = BTreeMap::new();
        inputs.insert("list1".to_string(), digest(&lists.list1)?);
        inputs.insert("list2".to_string(), digest(&lists.list2)?);
        let mut dir = OutputDir::create(out)?;
        dir.write("venn.json", &text)?;
        let config_value = json!({ "cutoff1": lists.cutoff1, "cutoff2": lists.cutoff2 });
        dir.finish(manifest("venn", None, config_value, inputs, started))?;
    }
    Ok(0)
}
