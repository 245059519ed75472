//! Mean-teacher self-training with masked target views.
//!
//! Each step the teacher labels the unmasked target batch, the student is
//! trained on labeled source images and on two masked views of the target
//! batch, and the teacher follows the student by an exponential moving
//! average. Three variants share the same network and schedule:
//!
//! * `source_only`: supervised loss only; target data is never read.
//! * `random_mask`: the two views use independently sampled masks.
//! * `complementary`: the second view is the exact complement of the first.
//!
//! The student is evaluated; the teacher starts as a copy of the student.

mod loss;
mod model;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_domain, make_shift_pair, DomainSpec, SegSample, Shift};
use crate::error::{Error, Result};
use crate::masking::{apply_mask, sample_pair, MaskConfig, PairKind};
use crate::metrics::{self, ConfusionCounts, Score};
use crate::optim::{Adam, AdamConfig};
use crate::seed::{self, stream};
use crate::{autodiff, Graph, Tensor};

pub use loss::{adain_align, cl_loss, cm_loss, ema_update, loss_cm, pseudo_label, sup_loss, PseudoLabel};
pub use model::{forward_graph, forward_segment, place_params, stack, Architecture, FeatureStats, Forward};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SourceOnly,
    RandomMask,
    Complementary,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SourceOnly, Variant::RandomMask, Variant::Complementary];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::SourceOnly => "source_only",
            Variant::RandomMask => "random_mask",
            Variant::Complementary => "complementary",
        }
    }

    fn pair_kind(&self) -> Option<PairKind> {
        match self {
            Variant::SourceOnly => None,
            Variant::RandomMask => Some(PairKind::Random),
            Variant::Complementary => Some(PairKind::Complementary),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Architecture,
    /// Mask ratio: probability that a block is hidden.
    pub ratio: f64,
    /// Block side of the masks.
    pub patch: usize,
    pub lambda_cm: f64,
    /// Weight of the first view in the consistency loss.
    pub lambda: f64,
    /// Pseudo-label confidence threshold.
    pub delta: f64,
    /// EMA decay of the teacher.
    pub alpha: f64,
    /// Use `min(alpha, 1 - 1/(t+2))` after step `t` so the teacher tracks the
    /// student while both are far from trained.
    pub ema_warmup: bool,
    pub lr: f64,
    pub iterations: usize,
    /// Leading steps trained on source labels only; the target losses start
    /// once the student makes sensible predictions.
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub variant: Variant,
    pub adain_align: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::default(),
            ratio: 0.5,
            patch: 4,
            lambda_cm: 0.01,
            lambda: 0.5,
            delta: 0.7,
            alpha: 0.999,
            ema_warmup: true,
            lr: 1e-3,
            iterations: 2000,
            warmup_steps: 500,
            batch_size: 1,
            variant: Variant::Complementary,
            adain_align: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Teacher decay used after step `step`.
    pub fn ema_decay(&self, step: usize) -> f64 {
        if self.ema_warmup {
            self.alpha.min(1.0 - 1.0 / (step as f64 + 2.0))
        } else {
            self.alpha
        }
    }

    pub fn validate(&self) -> Result<()> {
        let op = "train_config";
        self.arch.validate()?;
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::invalid(op, format!("ratio {} outside (0, 1)", self.ratio)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(op, format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(op, format!("delta {} outside (0, 1]", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(op, format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lambda_cm >= 0.0 && self.lambda_cm.is_finite()) {
            return Err(Error::invalid(op, format!("lambda_cm {} must be non-negative", self.lambda_cm)));
        }
        if self.patch == 0 || self.batch_size == 0 {
            return Err(Error::invalid(op, "patch and batch size must be positive"));
        }
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
        .validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelPair {
    pub student: Vec<Tensor>,
    pub teacher: Vec<Tensor>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub step: usize,
    pub sup: f64,
    pub cl: f64,
    pub cm: f64,
    pub total: f64,
}

/// Target-side inputs of one step, fixed ahead of time.
#[derive(Clone, Debug)]
pub struct TargetViews {
    pub pseudo: PseudoLabel,
    pub first: Tensor,
    pub second: Tensor,
    /// First-layer teacher statistics on the unmasked batch.
    pub stats: FeatureStats,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub pair: ModelPair,
    optimizer: Adam,
    steps: usize,
}

fn labels_of(batch: &[&SegSample]) -> Vec<usize> {
    batch.iter().flat_map(|s| s.label.iter().copied()).collect()
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let student = config.arch.init(config.seed)?;
        Self::with_params(config, student)
    }

    pub fn with_params(config: TrainConfig, student: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        config.arch.check_params(&student)?;
        let optimizer = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            &student,
        )?;
        Ok(Self {
            pair: ModelPair {
                teacher: student.clone(),
                student,
            },
            optimizer,
            config,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Teacher pass on the unmasked target batch and the two masked views
    /// for `step`.
    pub fn target_views(&self, target: &[&SegSample], step: usize) -> Result<Option<TargetViews>> {
        let Some(kind) = self.config.variant.pair_kind() else {
            return Ok(None);
        };
        let x = stack(&target.iter().map(|s| &s.image).collect::<Vec<_>>())?;
        let mut g = Graph::new();
        let vars = place_params(&mut g, &self.pair.teacher, false);
        let xv = g.leaf(x.clone());
        let f = forward_graph(&mut g, &self.config.arch, &vars, xv, None)?;
        let p = g.softmax(f.logits)?;
        let pseudo = pseudo_label(g.value(p), self.config.delta)?;
        let (mean, std) = autodiff::channel_stats(g.value(f.first))?;

        let hw = &x.shape()[2..];
        let cfg = MaskConfig::new(hw, self.config.patch, self.config.ratio)?;
        let step_seed = seed::derive(self.config.seed, stream::MASK_A, step as u64);
        let mut first = Vec::with_capacity(target.len());
        let mut second = Vec::with_capacity(target.len());
        for (i, s) in target.iter().enumerate() {
            let pair = sample_pair(&cfg, kind, seed::derive(step_seed, stream::TRIAL, i as u64))?;
            first.push(apply_mask(&s.image, pair.first())?);
            second.push(apply_mask(&s.image, pair.second())?);
        }
        Ok(Some(TargetViews {
            pseudo,
            first: stack(&first.iter().collect::<Vec<_>>())?,
            second: stack(&second.iter().collect::<Vec<_>>())?,
            stats: FeatureStats { mean, std },
        }))
    }

    /// Builds the total loss on a fresh tape. Returns the tape, the student
    /// parameter nodes and the loss nodes `(sup, cl, cm, total)`.
    pub fn loss_graph(
        &self,
        source: &[&SegSample],
        views: Option<&TargetViews>,
    ) -> Result<(Graph, Vec<autodiff::Var>, [autodiff::Var; 4])> {
        let cfg = &self.config;
        let mut g = Graph::new();
        let vars = place_params(&mut g, &self.pair.student, true);
        let xs = g.leaf(stack(&source.iter().map(|s| &s.image).collect::<Vec<_>>())?);
        let align = match (cfg.adain_align, views) {
            (true, Some(v)) => Some(&v.stats),
            _ => None,
        };
        let fs = forward_graph(&mut g, &cfg.arch, &vars, xs, align)?;
        let sup = sup_loss(&mut g, fs.logits, &labels_of(source))?;
        let Some(v) = views else {
            let zero = g.leaf(Tensor::scalar(0.0));
            return Ok((g, vars, [sup, zero, zero, sup]));
        };
        let xd = g.leaf(v.first.clone());
        let xc = g.leaf(v.second.clone());
        let fd = forward_graph(&mut g, &cfg.arch, &vars, xd, None)?;
        let fc = forward_graph(&mut g, &cfg.arch, &vars, xc, None)?;
        let cl = cl_loss(&mut g, fd.logits, fc.logits, &v.pseudo, cfg.lambda)?;
        let pd = g.softmax(fd.logits)?;
        let pc = g.softmax(fc.logits)?;
        let cm = cm_loss(&mut g, pd, pc)?;
        let weighted = g.scale(cm, cfg.lambda_cm);
        let partial = g.add(sup, cl)?;
        let total = g.add(partial, weighted)?;
        Ok((g, vars, [sup, cl, cm, total]))
    }

    /// One optimizer step on the student followed by one EMA update of the
    /// teacher.
    pub fn train_step(&mut self, source: &[&SegSample], target: &[&SegSample], step: usize) -> Result<StepLosses> {
        if source.is_empty() || (self.config.variant != Variant::SourceOnly && target.is_empty()) {
            return Err(Error::invalid("train_step", "empty batch"));
        }
        let views = if step < self.config.warmup_steps {
            None
        } else {
            self.target_views(target, step)?
        };
        self.step_with_views(source, views.as_ref(), step)
    }

    /// [`Trainer::train_step`] with the target-side inputs supplied.
    pub fn step_with_views(
        &mut self,
        source: &[&SegSample],
        views: Option<&TargetViews>,
        step: usize,
    ) -> Result<StepLosses> {
        let (mut g, vars, [sup, cl, cm, total]) = self.loss_graph(source, views)?;
        let losses = StepLosses {
            step,
            sup: g.value(sup).item(),
            cl: g.value(cl).item(),
            cm: g.value(cm).item(),
            total: g.value(total).item(),
        };
        if ![losses.sup, losses.cl, losses.cm, losses.total].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                sup: losses.sup,
                cl: losses.cl,
                cm: losses.cm,
                total: losses.total,
            });
        }
        let grads = g.backward(total)?.collect(&vars);
        self.optimizer.step(&mut self.pair.student, &grads)?;
        ema_update(&mut self.pair.teacher, &self.pair.student, self.config.ema_decay(step))?;
        self.steps += 1;
        Ok(losses)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub iou: Score,
    pub f1: Score,
    pub mcc: Score,
    pub ap: Score,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub classes: Vec<ClassMetrics>,
    pub miou: f64,
    pub map: f64,
    pub counts: ConfusionCounts,
}

/// Confusion-based IoU/F1/MCC per class plus one-vs-rest AP of each class's
/// probability map, over all pixels of the dataset.
pub fn evaluate(arch: &Architecture, params: &[Tensor], data: &[SegSample]) -> Result<EvalRecord> {
    if data.is_empty() {
        return Err(Error::invalid("evaluate", "empty dataset"));
    }
    let c = arch.classes;
    let mut counts = ConfusionCounts {
        per_class: vec![Default::default(); c],
    };
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); c];
    let mut truth = Vec::new();
    for s in data {
        let p = forward_segment(arch, params, &s.image)?;
        let pseudo = pseudo_label(&p, f64::MIN_POSITIVE)?;
        counts.merge(&metrics::confusion(&pseudo.classes, &s.label, c)?);
        let plane = s.label.len();
        for (k, sc) in scores.iter_mut().enumerate() {
            sc.extend(p.data()[k * plane..(k + 1) * plane].iter().map(|v| v.clamp(0.0, 1.0)));
        }
        truth.extend_from_slice(&s.label);
    }
    let mut classes = Vec::with_capacity(c);
    for k in 0..c {
        let pos: Vec<bool> = truth.iter().map(|&t| t == k).collect();
        let one = &counts.per_class[k];
        classes.push(ClassMetrics {
            class: k,
            iou: one.iou(),
            f1: one.f1(),
            mcc: one.mcc(),
            ap: metrics::average_precision(&scores[k], &pos)?,
        });
    }
    let aps: Vec<Score> = classes.iter().map(|m| m.ap).collect();
    Ok(EvalRecord {
        miou: counts.mean_iou(),
        map: metrics::mean_defined(&aps),
        classes,
        counts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub base: DomainSpec,
    pub shift: Shift,
    pub train_count: usize,
    pub val_count: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            base: DomainSpec::default(),
            shift: Shift::default(),
            train_count: 200,
            val_count: 50,
            seed: 0,
        }
    }
}

/// Labeled source and unlabeled target training sets plus labeled
/// validation sets of both domains; all four use distinct geometry seeds.
#[derive(Clone, Debug)]
pub struct UdaData {
    pub source_train: Vec<SegSample>,
    pub target_train: Vec<SegSample>,
    pub source_val: Vec<SegSample>,
    pub target_val: Vec<SegSample>,
}

impl UdaData {
    pub fn generate(cfg: &DataConfig) -> Result<Self> {
        let (src, tgt) = make_shift_pair(&cfg.base, &cfg.shift)?;
        let with_seed = |spec: &DomainSpec, i: u64| DomainSpec {
            seed: seed::derive(cfg.seed, stream::SAMPLE, i),
            ..spec.clone()
        };
        Ok(Self {
            source_train: gen_domain(&with_seed(&src, 0), cfg.train_count)?,
            target_train: gen_domain(&with_seed(&tgt, 1), cfg.train_count)?,
            source_val: gen_domain(&with_seed(&src, 2), cfg.val_count)?,
            target_val: gen_domain(&with_seed(&tgt, 3), cfg.val_count)?,
        })
    }
}

fn draw_batch(data: &[SegSample], size: usize, seed: u64) -> Vec<&SegSample> {
    let mut rng = seed::rng(seed);
    (0..size).map(|_| &data[rng.random_range(0..data.len())]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: TrainConfig,
    pub losses: Vec<StepLosses>,
    pub source: EvalRecord,
    pub target: EvalRecord,
}

/// Full training run followed by evaluation of the student on both
/// validation sets. Source and target batches come from separate seed
/// streams, so the source trajectory does not depend on target data.
pub fn run(config: &TrainConfig, data: &UdaData) -> Result<RunResult> {
    run_with_params(config, data).map(|(r, _)| r)
}

/// [`run`], also returning the trained student parameters.
pub fn run_with_params(config: &TrainConfig, data: &UdaData) -> Result<(RunResult, Vec<Tensor>)> {
    let mut trainer = Trainer::new(config.clone())?;
    let mut losses = Vec::with_capacity(config.iterations);
    for step in 0..config.iterations {
        let s = seed::derive(config.seed, stream::BATCH, step as u64);
        let source = draw_batch(&data.source_train, config.batch_size, seed::derive(s, 0, 0));
        let target = if config.variant == Variant::SourceOnly {
            Vec::new()
        } else {
            draw_batch(&data.target_train, config.batch_size, seed::derive(s, 1, 0))
        };
        losses.push(trainer.train_step(&source, &target, step)?);
    }
    let params = trainer.pair.student;
    let result = RunResult {
        source: evaluate(&config.arch, &params, &data.source_val)?,
        target: evaluate(&config.arch, &params, &data.target_val)?,
        losses,
        config: config.clone(),
    };
    Ok((result, params))
}
