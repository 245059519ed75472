//! Segmentation metrics from one-vs-rest confusion counts.
//!
//! Degenerate ratios (zero denominators) evaluate to 0 and carry
//! `defined = false`; means over classes skip undefined entries. mAP is the
//! mean over classes of the one-vs-rest average precision of each class's
//! probability map; for a binary task that is the AP of the foreground map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub defined: bool,
}

impl Score {
    fn ratio(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Score {
                value: 0.0,
                defined: false,
            }
        } else {
            Score {
                value: num / den,
                defined: true,
            }
        }
    }
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn iou(&self) -> Score {
        Score::ratio(self.tp as f64, (self.tp + self.fp + self.fn_) as f64)
    }

    pub fn f1(&self) -> Score {
        Score::ratio(2.0 * self.tp as f64, (2 * self.tp + self.fp + self.fn_) as f64)
    }

    pub fn mcc(&self) -> Score {
        let (tp, fp, fn_, tn) = (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64);
        let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        Score::ratio(tp * tn - fp * fn_, den)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_class: Vec<ClassCounts>,
}

impl ConfusionCounts {
    pub fn classes(&self) -> usize {
        self.per_class.len()
    }

    /// Accumulates another set of counts with the same class count.
    pub fn merge(&mut self, other: &ConfusionCounts) {
        assert_eq!(self.classes(), other.classes());
        for (a, b) in self.per_class.iter_mut().zip(&other.per_class) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
            a.tn += b.tn;
        }
    }

    pub fn iou(&self) -> Vec<Score> {
        self.per_class.iter().map(ClassCounts::iou).collect()
    }

    pub fn f1(&self) -> Vec<Score> {
        self.per_class.iter().map(ClassCounts::f1).collect()
    }

    pub fn mcc(&self) -> Vec<Score> {
        self.per_class.iter().map(ClassCounts::mcc).collect()
    }

    /// Mean IoU over classes with a defined IoU, i.e. classes present in the
    /// prediction or the truth.
    pub fn mean_iou(&self) -> f64 {
        mean_defined(&self.iou())
    }
}

pub fn mean_defined(scores: &[Score]) -> f64 {
    let defined: Vec<f64> = scores.iter().filter(|s| s.defined).map(|s| s.value).collect();
    if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

pub fn confusion(pred: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            op: "confusion",
            left: vec![pred.len()],
            right: vec![truth.len()],
        });
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&c| c >= classes) {
        return Err(Error::ClassOutOfRange {
            index: bad,
            classes,
        });
    }
    let mut joint = vec![0u64; classes * classes];
    for (&p, &t) in pred.iter().zip(truth) {
        joint[t * classes + p] += 1;
    }
    let n = pred.len() as u64;
    let per_class = (0..classes)
        .map(|c| {
            let tp = joint[c * classes + c];
            let row: u64 = (0..classes).map(|p| joint[c * classes + p]).sum();
            let col: u64 = (0..classes).map(|t| joint[t * classes + c]).sum();
            ClassCounts {
                tp,
                fp: col - tp,
                fn_: row - tp,
                tn: n + tp - row - col,
            }
        })
        .collect();
    Ok(ConfusionCounts { per_class })
}

/// Step-wise area under the precision-recall curve. Pixels are ranked by
/// descending score; tied scores form one threshold step.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Result<Score> {
    if scores.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            op: "average_precision",
            left: vec![scores.len()],
            right: vec![truth.len()],
        });
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::invalid("average_precision", format!("score {bad} outside [0, 1]")));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Ok(Score {
            value: 0.0,
            defined: false,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let before = tp;
        while i < order.len() && scores[order[i]] == s {
            tp += truth[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        if tp > before {
            let recall_step = (tp - before) as f64 / positives as f64;
            ap += recall_step * tp as f64 / seen as f64;
        }
    }
    Ok(Score {
        value: ap,
        defined: true,
    })
}
