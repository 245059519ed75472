use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use comask_core::datagen::SegSample;
use comask_core::masking::PairKind;
use comask_core::metrics::{self, Score};
use comask_core::recovery::{self, SweepGrid};
use comask_core::seed::{self, stream};
use comask_core::theory::{self, DataModelSpec, FeatureMapSpec, GapConfig, IpStats, PAIR_KINDS};
use comask_core::trainer::{self, DataConfig, EvalRecord, RunResult, TrainConfig, UdaData, Variant};
use comask_core::Tensor;

use crate::error::CliError;
use crate::output::{CheckOutcome, OutDir};

/// What a finished experiment hands back to the runner for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub derived_seeds: BTreeMap<String, u64>,
    pub check: Option<CheckOutcome>,
}

pub trait Experiment: Serialize + DeserializeOwned + Default {
    /// Config key that `--reps` sets, if the experiment repeats anything.
    const REPS_KEY: Option<&'static str>;
    /// Whether the experiment has an acceptance target for `--check`.
    const CHECKED: bool;

    /// Runs and writes outputs. Seeds below the top level are filled in
    /// here, so the config serialized afterwards is the one that ran.
    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError>;
}

fn check(passed: bool, detail: String) -> Option<CheckOutcome> {
    Some(CheckOutcome { passed, detail })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Ones,
    Gaussian,
}

impl InputKind {
    fn build(self, dim: usize, seed: u64) -> Result<Tensor, CliError> {
        if dim == 0 {
            return Err(CliError::Config("dim must be positive".into()));
        }
        Ok(match self {
            InputKind::Ones => Tensor::ones(&[dim]),
            InputKind::Gaussian => theory::gaussian_vector(dim, seed),
        })
    }
}

/// Row layout shared by the theory experiments.
#[derive(Debug, Serialize)]
pub struct TheoryRow {
    pub experiment: String,
    pub kind: String,
    pub trials: u64,
    pub mean: f64,
    pub variance: f64,
    pub predicted_mean: Option<f64>,
    pub predicted_variance: Option<f64>,
    pub seed: u64,
}

impl From<&IpStats> for TheoryRow {
    fn from(s: &IpStats) -> Self {
        TheoryRow {
            experiment: s.experiment.clone(),
            kind: s.kind.clone(),
            trials: s.trials,
            mean: s.mean,
            variance: s.variance,
            predicted_mean: Some(s.predicted_mean),
            predicted_variance: Some(s.predicted_variance),
            seed: s.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpCommand {
    pub seed: u64,
    pub dim: usize,
    pub trials: u64,
    pub input: InputKind,
}

impl Default for IpCommand {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 256,
            trials: 100_000,
            input: InputKind::Ones,
        }
    }
}

impl Experiment for IpCommand {
    const REPS_KEY: Option<&'static str> = Some("trials");
    const CHECKED: bool = true;

    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError> {
        let input_seed = seed::derive(self.seed, stream::SAMPLE, 0);
        let trial_seed = seed::derive(self.seed, stream::RUN, 0);
        let x = self.input.build(self.dim, input_seed)?;
        let stats = PAIR_KINDS
            .iter()
            .map(|&k| theory::ip_experiment(&x, k, self.trials, trial_seed))
            .collect::<Result<Vec<_>, _>>()?;
        out.csv("theory.csv", &stats.iter().map(TheoryRow::from).collect::<Vec<_>>())?;
        let (c, r) = (&stats[0], &stats[1]);
        let mean_ok = (r.mean - 0.25).abs() <= 0.01;
        let var_ok = (r.variance - r.predicted_variance).abs() <= 0.1 * r.predicted_variance;
        let passed = c.mean == 0.0 && c.variance == 0.0 && mean_ok && var_ok;
        Ok(Outcome {
            derived_seeds: BTreeMap::from([("input".into(), input_seed), ("trials".into(), trial_seed)]),
            check: check(
                passed,
                format!(
                    "complementary mean {} variance {}; random mean {:.5} (0.25 ± 0.01), variance {:.6} vs {:.6} ± 10%",
                    c.mean, c.variance, r.mean, r.variance, r.predicted_variance
                ),
            ),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiviewCommand {
    pub seed: u64,
    pub dim: usize,
    pub ks: Vec<usize>,
    pub trials: u64,
    pub input: InputKind,
}

impl Default for MultiviewCommand {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 256,
            ks: vec![2, 3, 4],
            trials: 1000,
            input: InputKind::Gaussian,
        }
    }
}

impl Experiment for MultiviewCommand {
    const REPS_KEY: Option<&'static str> = Some("trials");
    const CHECKED: bool = true;

    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError> {
        let input_seed = seed::derive(self.seed, stream::SAMPLE, 0);
        let x = self.input.build(self.dim, input_seed)?;
        let mut seeds = BTreeMap::from([("input".to_string(), input_seed)]);
        let mut reports = Vec::new();
        for (i, &k) in self.ks.iter().enumerate() {
            let s = seed::derive(self.seed, stream::RUN, i as u64);
            seeds.insert(format!("k{k}"), s);
            reports.push(theory::multiview_experiment(&x, k, self.trials, s)?);
        }
        out.csv("theory.csv", &reports.iter().map(|r| TheoryRow::from(&r.stats)).collect::<Vec<_>>())?;
        out.json("multiview.json", &reports)?;
        let exact = reports.iter().all(|r| r.exact_partitions == r.stats.trials);
        let zero = reports.iter().all(|r| r.stats.mean == 0.0);
        let flags: Vec<String> = reports.iter().map(|r| format!("K={} discrepancy={}", r.k, r.discrepancy)).collect();
        Ok(Outcome {
            derived_seeds: seeds,
            check: check(
                exact && zero,
                format!("exact partitions in every trial: {exact}; measured mean 0: {zero}; {}", flags.join(", ")),
            ),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FceCommand {
    pub seed: u64,
    pub model: DataModelSpec,
    pub fmap: FeatureMapSpec,
    pub trials: u64,
}

impl Default for FceCommand {
    fn default() -> Self {
        Self {
            seed: 0,
            model: DataModelSpec::default(),
            fmap: FeatureMapSpec::default(),
            trials: 1000,
        }
    }
}

impl Experiment for FceCommand {
    const REPS_KEY: Option<&'static str> = Some("trials");
    const CHECKED: bool = false;

    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError> {
        self.fmap.seed = seed::derive(self.seed, stream::FEATURE, 0);
        let trial_seed = seed::derive(self.seed, stream::RUN, 0);
        let report = theory::fce_experiment(&self.model, &self.fmap, self.trials, trial_seed)?;
        let rows: Vec<TheoryRow> = report
            .summaries
            .iter()
            .map(|s| TheoryRow {
                experiment: "fce".into(),
                kind: s.kind.clone(),
                trials: s.trials,
                mean: s.mean,
                variance: s.variance,
                predicted_mean: Some(if s.kind == "complementary" {
                    report.bound_complementary
                } else {
                    report.bound_random
                }),
                predicted_variance: None,
                seed: trial_seed,
            })
            .collect();
        out.csv("theory.csv", &rows)?;
        out.json("fce.json", &report)?;
        Ok(Outcome {
            derived_seeds: BTreeMap::from([("feature_map".into(), self.fmap.seed), ("trials".into(), trial_seed)]),
            check: None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct GapCommand {
    pub seed: u64,
    #[serde(flatten)]
    pub gap: GapConfig,
}


impl Experiment for GapCommand {
    const REPS_KEY: Option<&'static str> = Some("repetitions");
    const CHECKED: bool = true;

    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError> {
        self.gap.fmap.seed = seed::derive(self.seed, stream::FEATURE, 0);
        let run_seed = seed::derive(self.seed, stream::RUN, 0);
        let report = theory::gap_experiment(&self.gap, run_seed)?;
        out.csv("gap.csv", &report.rows)?;
        out.json("gap.json", &report.kinds)?;
        let slope = report
            .kinds
            .iter()
            .find(|k| k.kind == PairKind::Complementary.label())
            .and_then(|k| k.slope);
        let passed = slope.is_some_and(|s| (-0.8..=-0.2).contains(&s));
        Ok(Outcome {
            derived_seeds: BTreeMap::from([("feature_map".into(), self.gap.fmap.seed), ("run".into(), run_seed)]),
            check: check(passed, format!("complementary log-log slope {slope:?}, target [-0.8, -0.2]")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct RecoveryCommand {
    pub seed: u64,
    #[serde(flatten)]
    pub grid: SweepGrid,
}


impl Experiment for RecoveryCommand {
    const REPS_KEY: Option<&'static str> = Some("trials");
    const CHECKED: bool = true;

    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError> {
        let run_seed = seed::derive(self.seed, stream::RUN, 0);
        let report = recovery::sweep_compare(&self.grid, run_seed)?;
        out.csv("recovery.csv", &report.rows)?;
        out.csv("recovery_cells.csv", &report.cells)?;
        let need = (0.9 * report.cell_count as f64).ceil() as usize;
        Ok(Outcome {
            derived_seeds: BTreeMap::from([("run".into(), run_seed)]),
            check: check(
                report.complementary_wins >= need,
                format!(
                    "complementary median <= random median in {}/{} cells (need {need})",
                    report.complementary_wins, report.cell_count
                ),
            ),
        })
    }
}

/// Metrics row. `seed` is the run seed, or `mean` on summary rows; `class`
/// is a class index, or `mean` for class-averaged rows. Undefined scores
/// are left empty.
#[derive(Clone, Debug, Serialize)]
pub struct MetricRow {
    pub variant: String,
    pub seed: String,
    pub class: String,
    pub iou: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub map: f64,
    pub miou: f64,
}

fn defined(s: Score) -> Option<f64> {
    s.defined.then_some(s.value)
}

fn class_rows(variant: &str, seed: u64, rec: &EvalRecord) -> Vec<MetricRow> {
    rec.classes
        .iter()
        .map(|c| MetricRow {
            variant: variant.into(),
            seed: seed.to_string(),
            class: c.class.to_string(),
            iou: defined(c.iou),
            f1: defined(c.f1),
            mcc: defined(c.mcc),
            map: rec.map,
            miou: rec.miou,
        })
        .collect()
}

fn mean_row(variant: &str, seed: u64, rec: &EvalRecord) -> MetricRow {
    let over = |f: fn(&trainer::ClassMetrics) -> Score| {
        let s: Vec<Score> = rec.classes.iter().map(f).collect();
        metrics::mean_defined(&s)
    };
    MetricRow {
        variant: variant.into(),
        seed: seed.to_string(),
        class: "mean".into(),
        iou: Some(rec.miou),
        f1: Some(over(|c| c.f1)),
        mcc: Some(over(|c| c.mcc)),
        map: rec.map,
        miou: rec.miou,
    }
}

fn average(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summary_row(variant: &str, rows: &[&MetricRow]) -> MetricRow {
    let n = rows.len() as f64;
    MetricRow {
        variant: variant.into(),
        seed: "mean".into(),
        class: "mean".into(),
        iou: average(rows.iter().map(|r| r.iou)),
        f1: average(rows.iter().map(|r| r.f1)),
        mcc: average(rows.iter().map(|r| r.mcc)),
        map: rows.iter().map(|r| r.map).sum::<f64>() / n,
        miou: rows.iter().map(|r| r.miou).sum::<f64>() / n,
    }
}

/// Seed of run `index` under `master`; data generation and training both
/// use it, on disjoint streams.
pub fn run_seed(master: u64, index: u64) -> u64 {
    seed::derive(master, stream::RUN, index)
}

/// Trained student weights with the config that produced them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamsFile {
    pub variant: Variant,
    pub config: TrainConfig,
    pub data: DataConfig,
    pub params: Vec<Tensor>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainCommand {
    pub seed: u64,
    pub data: DataConfig,
    pub train: TrainConfig,
}

impl Experiment for TrainCommand {
    const REPS_KEY: Option<&'static str> = None;
    const CHECKED: bool = false;

    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError> {
        let s = run_seed(self.seed, 0);
        self.data.seed = s;
        self.train.seed = s;
        let data = UdaData::generate(&self.data)?;
        let (res, params) = trainer::run_with_params(&self.train, &data)?;
        let label = self.train.variant.label();
        let mut rows = class_rows(label, s, &res.target);
        rows.push(mean_row(label, s, &res.target));
        out.csv("metrics.csv", &rows)?;
        out.jsonl("losses.jsonl", &res.losses)?;
        out.json("evaluation.json", &EvalSummary::from(&res))?;
        out.json(
            "params.json",
            &ParamsFile {
                variant: self.train.variant,
                config: self.train.clone(),
                data: self.data.clone(),
                params,
            },
        )?;
        Ok(Outcome {
            derived_seeds: BTreeMap::from([("run".into(), s)]),
            check: None,
        })
    }
}

#[derive(Debug, Serialize)]
struct EvalSummary<'a> {
    variant: &'static str,
    source_val: &'a EvalRecord,
    target_val: &'a EvalRecord,
}

impl<'a> From<&'a RunResult> for EvalSummary<'a> {
    fn from(r: &'a RunResult) -> Self {
        EvalSummary {
            variant: r.config.variant.label(),
            source_val: &r.source,
            target_val: &r.target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateCommand {
    pub seed: u64,
    /// Number of runs per variant.
    pub seeds: usize,
    pub variants: Vec<Variant>,
    pub data: DataConfig,
    pub train: TrainConfig,
}

impl Default for AblateCommand {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 5,
            variants: Variant::ALL.to_vec(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Mean target mIoU per variant from an ablation's summary rows.
pub fn variant_means(rows: &[MetricRow]) -> BTreeMap<String, f64> {
    rows.iter()
        .filter(|r| r.seed == "mean")
        .map(|r| (r.variant.clone(), r.miou))
        .collect()
}

/// Ordering complementary ≥ random_mask ≥ source_only on mean target mIoU
/// and a margin of at least 0.05 between the ends.
pub fn ablation_check(means: &BTreeMap<String, f64>) -> (bool, String) {
    let get = |v: Variant| means.get(v.label()).copied();
    match (get(Variant::Complementary), get(Variant::RandomMask), get(Variant::SourceOnly)) {
        (Some(c), Some(r), Some(s)) => (
            c >= r && r >= s && c - s >= 0.05,
            format!("mean target mIoU complementary {c:.4}, random_mask {r:.4}, source_only {s:.4}; margin {:.4} (need 0.05)", c - s),
        ),
        _ => (false, "ablation needs all three variants".into()),
    }
}

impl Experiment for AblateCommand {
    const REPS_KEY: Option<&'static str> = Some("seeds");
    const CHECKED: bool = true;

    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError> {
        if self.seeds == 0 || self.variants.is_empty() {
            return Err(CliError::Config("ablate needs at least one seed and one variant".into()));
        }
        let mut seeds = BTreeMap::new();
        let mut rows = Vec::new();
        let mut per_class = Vec::new();
        let mut evaluations = Vec::new();
        for i in 0..self.seeds {
            let s = run_seed(self.seed, i as u64);
            seeds.insert(format!("run{i}"), s);
            let data = UdaData::generate(&DataConfig {
                seed: s,
                ..self.data.clone()
            })?;
            for &variant in &self.variants {
                let cfg = TrainConfig {
                    variant,
                    seed: s,
                    ..self.train.clone()
                };
                let res = trainer::run(&cfg, &data)?;
                rows.push(mean_row(variant.label(), s, &res.target));
                per_class.extend(class_rows(variant.label(), s, &res.target));
                out.jsonl(&format!("losses_{}_{i}.jsonl", variant.label()), &res.losses)?;
                evaluations.push(EvalSummary::from(&res).to_value()?);
            }
        }
        for &variant in &self.variants {
            let mine: Vec<&MetricRow> = rows.iter().filter(|r| r.variant == variant.label()).collect();
            let summary = summary_row(variant.label(), &mine);
            rows.push(summary);
        }
        out.csv("metrics.csv", &rows)?;
        out.csv("metrics_per_class.csv", &per_class)?;
        out.json("evaluation.json", &evaluations)?;
        let (passed, detail) = ablation_check(&variant_means(&rows));
        Ok(Outcome {
            derived_seeds: seeds,
            check: check(passed, detail),
        })
    }
}

impl EvalSummary<'_> {
    fn to_value(&self) -> Result<serde_json::Value, CliError> {
        Ok(serde_json::to_value(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    SourceTrain,
    TargetTrain,
    SourceVal,
    TargetVal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCommand {
    pub seed: u64,
    /// `params.json` written by `train`.
    pub params: PathBuf,
    pub split: Split,
}

impl Default for EvalCommand {
    fn default() -> Self {
        Self {
            seed: 0,
            params: PathBuf::from("params.json"),
            split: Split::TargetVal,
        }
    }
}

impl Experiment for EvalCommand {
    const REPS_KEY: Option<&'static str> = None;
    const CHECKED: bool = false;

    /// Rebuilds the training run's data from the saved data config; the
    /// master seed only labels the output rows.
    fn run(&mut self, out: &mut OutDir) -> Result<Outcome, CliError> {
        let text = std::fs::read_to_string(&self.params)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", self.params.display())))?;
        let file: ParamsFile =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("parsing {}: {e}", self.params.display())))?;
        file.config.arch.check_params(&file.params)?;
        let data = UdaData::generate(&file.data)?;
        let split: &[SegSample] = match self.split {
            Split::SourceTrain => &data.source_train,
            Split::TargetTrain => &data.target_train,
            Split::SourceVal => &data.source_val,
            Split::TargetVal => &data.target_val,
        };
        let rec = trainer::evaluate(&file.config.arch, &file.params, split)?;
        let label = file.variant.label();
        let mut rows = class_rows(label, file.data.seed, &rec);
        rows.push(mean_row(label, file.data.seed, &rec));
        out.csv("metrics.csv", &rows)?;
        out.json("evaluation.json", &rec)?;
        Ok(Outcome {
            derived_seeds: BTreeMap::from([("data".into(), file.data.seed)]),
            check: None,
        })
    }
}
