//! Synthetic segmentation domains with exact labels.
//!
//! Each image is a flat background with discs (class 1) and axis-aligned
//! rectangles (class 2). Foreground pixels get a class-specific base
//! intensity plus a sinusoidal texture; the whole image then receives
//! Gaussian noise and a global offset. Geometry and appearance draw from
//! separate seed streams, so two specs differing only in appearance produce
//! the same label maps.
//!
//! # Split file layout
//!
//! Little-endian throughout:
//!
//! ```text
//! magic    [u8; 4]  "CMSK"
//! version  u32      1
//! channels u32
//! height   u32
//! width    u32
//! classes  u32
//! count    u32
//! count × { image: f32 × channels·height·width, label: u8 × height·width }
//! ```

use std::io::{Read, Write};

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    /// Square canvas side; a multiple of 16.
    pub size: usize,
    pub classes: usize,
    /// Inclusive count range of discs per image.
    pub discs: (usize, usize),
    /// Inclusive count range of rectangles per image.
    pub rects: (usize, usize),
    pub radius: (usize, usize),
    pub side: (usize, usize),
    /// Base intensity per class, background first.
    pub intensity: Vec<f64>,
    pub offset: f64,
    pub noise: f64,
    /// Texture cycles across the canvas.
    pub frequency: f64,
    pub texture_amplitude: f64,
    pub seed: u64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            size: 64,
            classes: 3,
            discs: (1, 3),
            rects: (1, 3),
            radius: (4, 9),
            side: (6, 16),
            intensity: vec![0.0, 1.5, 3.0],
            offset: 0.0,
            noise: 0.2,
            frequency: 4.0,
            texture_amplitude: 0.15,
            seed: 0,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let op = "domain_spec";
        if self.size == 0 || !self.size.is_multiple_of(16) {
            return Err(Error::invalid(op, format!("size {} must be a positive multiple of 16", self.size)));
        }
        if self.classes < 2 || self.intensity.len() != self.classes {
            return Err(Error::invalid(op, "need at least 2 classes and one intensity per class"));
        }
        if (self.discs.1 > 0 || self.rects.1 > 0) && self.classes < 3 {
            return Err(Error::invalid(op, "discs and rectangles need classes 1 and 2"));
        }
        for (name, (lo, hi)) in [("discs", self.discs), ("rects", self.rects), ("radius", self.radius), ("side", self.side)] {
            if lo > hi {
                return Err(Error::invalid(op, format!("{name} range ({lo}, {hi}) is empty")));
            }
        }
        if self.discs.1 > 0 && (self.radius.0 == 0 || 2 * self.radius.1 + 1 > self.size) {
            return Err(Error::invalid(op, format!("discs of radius {:?} do not fit", self.radius)));
        }
        if self.rects.1 > 0 && (self.side.0 == 0 || self.side.1 > self.size) {
            return Err(Error::invalid(op, format!("rectangles of side {:?} do not fit", self.side)));
        }
        let reals = [self.offset, self.noise, self.frequency, self.texture_amplitude];
        if reals.iter().any(|v| !v.is_finite()) || self.intensity.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(op, "non-finite parameter"));
        }
        if self.noise < 0.0 || self.frequency <= 0.0 {
            return Err(Error::invalid(op, "noise must be non-negative and frequency positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegSample {
    /// `[1, H, W]`
    pub image: Tensor,
    /// Row-major `H × W` class map.
    pub label: Vec<usize>,
}

enum Shape {
    Disc { cy: usize, cx: usize, r: usize },
    Rect { y0: usize, x0: usize, h: usize, w: usize },
}

impl Shape {
    fn class(&self) -> usize {
        match self {
            Shape::Disc { .. } => 1,
            Shape::Rect { .. } => 2,
        }
    }

    fn contains(&self, y: usize, x: usize) -> bool {
        match *self {
            Shape::Disc { cy, cx, r } => {
                let (dy, dx) = (y as i64 - cy as i64, x as i64 - cx as i64);
                dy * dy + dx * dx <= (r * r) as i64
            }
            Shape::Rect { y0, x0, h, w } => (y0..y0 + h).contains(&y) && (x0..x0 + w).contains(&x),
        }
    }
}

fn layout(spec: &DomainSpec, rng: &mut seed::Rng) -> Vec<Shape> {
    let s = spec.size;
    let mut shapes = Vec::new();
    let n_discs = rng.random_range(spec.discs.0..=spec.discs.1);
    let n_rects = rng.random_range(spec.rects.0..=spec.rects.1);
    for _ in 0..n_discs {
        let r = rng.random_range(spec.radius.0..=spec.radius.1);
        shapes.push(Shape::Disc {
            cy: rng.random_range(r..s - r),
            cx: rng.random_range(r..s - r),
            r,
        });
    }
    for _ in 0..n_rects {
        let h = rng.random_range(spec.side.0..=spec.side.1);
        let w = rng.random_range(spec.side.0..=spec.side.1);
        shapes.push(Shape::Rect {
            y0: rng.random_range(0..=s - h),
            x0: rng.random_range(0..=s - w),
            h,
            w,
        });
    }
    // Later shapes are drawn on top; shuffle so neither class always wins.
    for i in (1..shapes.len()).rev() {
        shapes.swap(i, rng.random_range(0..=i));
    }
    shapes
}

fn texture(spec: &DomainSpec, class: usize, y: usize, x: usize) -> f64 {
    if class == 0 || spec.texture_amplitude == 0.0 {
        return 0.0;
    }
    // Discs are striped along x, rectangles along y.
    let coord = if class == 1 { x } else { y } as f64;
    spec.texture_amplitude * (std::f64::consts::TAU * spec.frequency * coord / spec.size as f64).sin()
}

fn render(spec: &DomainSpec, index: u64) -> SegSample {
    let s = spec.size;
    let shapes = layout(spec, &mut seed::rng(seed::derive(spec.seed, stream::SAMPLE, index)));
    let mut label = vec![0usize; s * s];
    for shape in &shapes {
        for y in 0..s {
            for x in 0..s {
                if shape.contains(y, x) {
                    label[y * s + x] = shape.class();
                }
            }
        }
    }
    let mut noise = seed::rng(seed::derive(spec.seed, stream::NOISE, index));
    let data = (0..s * s)
        .map(|i| {
            let (y, x) = (i / s, i % s);
            let c = label[i];
            let eps = if spec.noise > 0.0 {
                spec.noise * noise.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            spec.intensity[c] + texture(spec, c, y, x) + eps + spec.offset
        })
        .collect();
    SegSample {
        image: Tensor::new(vec![1, s, s], data).expect("canvas shape"),
        label,
    }
}

pub fn gen_domain(spec: &DomainSpec, count: usize) -> Result<Vec<SegSample>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::invalid("gen_domain", "count must be positive"));
    }
    Ok((0..count as u64).map(|i| render(spec, i)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub offset: f64,
    pub noise: f64,
    /// Multiplier on the texture frequency.
    pub frequency: f64,
}

impl Shift {
    pub const NONE: Shift = Shift {
        offset: 0.0,
        noise: 0.0,
        frequency: 1.0,
    };
}

impl Default for Shift {
    fn default() -> Self {
        Self {
            offset: 0.3,
            noise: 0.1,
            frequency: 2.0,
        }
    }
}

impl Shift {
    pub fn apply(&self, spec: &DomainSpec) -> DomainSpec {
        DomainSpec {
            offset: spec.offset + self.offset,
            noise: spec.noise + self.noise,
            frequency: spec.frequency * self.frequency,
            ..spec.clone()
        }
    }
}

/// `(source, target)`: the base spec and the base with `shift` applied.
pub fn make_shift_pair(base: &DomainSpec, shift: &Shift) -> Result<(DomainSpec, DomainSpec)> {
    base.validate()?;
    let target = shift.apply(base);
    target.validate()?;
    Ok((base.clone(), target))
}

/// Pixel frequency of each class over a set of samples.
pub fn class_frequencies(samples: &[SegSample], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    let mut total = 0;
    for s in samples {
        for &c in &s.label {
            counts[c] += 1;
        }
        total += s.label.len();
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

const MAGIC: &[u8; 4] = b"CMSK";
const VERSION: u32 = 1;

pub fn write_split(mut w: impl Write, samples: &[SegSample], classes: usize) -> Result<()> {
    let first = samples.first().ok_or_else(|| Error::invalid("write_split", "no samples"))?;
    let shape = first.image.shape().to_vec();
    w.write_all(MAGIC)?;
    for v in [VERSION, shape[0] as u32, shape[1] as u32, shape[2] as u32, classes as u32, samples.len() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for s in samples {
        if s.image.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "write_split",
                left: shape,
                right: s.image.shape().to_vec(),
            });
        }
        for v in s.image.data() {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        let labels: Vec<u8> = s.label.iter().map(|&c| c as u8).collect();
        w.write_all(&labels)?;
    }
    Ok(())
}

/// Reads a split written by [`write_split`]; images come back at `f32`
/// precision. Returns the class count with the samples.
pub fn read_split(mut r: impl Read) -> Result<(usize, Vec<SegSample>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a split file".into()));
    }
    let mut header = [0u32; 6];
    for h in &mut header {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *h = u32::from_le_bytes(b);
    }
    let [version, c, h, w, classes, count] = header.map(|v| v as usize);
    if version != VERSION as usize {
        return Err(Error::Parse(format!("unsupported split version {version}")));
    }
    let mut samples = Vec::with_capacity(count);
    let mut buf = vec![0u8; 4 * c * h * w];
    let mut labels = vec![0u8; h * w];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        r.read_exact(&mut labels)?;
        let data = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        samples.push(SegSample {
            image: Tensor::new(vec![c, h, w], data)?,
            label: labels.iter().map(|&l| l as usize).collect(),
        });
    }
    Ok((classes, samples))
}
