//! Block-structured binary masks in two and three dimensions.
//!
//! A mask is constant on aligned `b`-sized blocks (squares in 2D, cubes in
//! 3D). Each block is visible (1) with probability `1 - r`, where `r` is the
//! mask ratio. Pairs come in three kinds: a mask and its complement,
//! two independent masks, and a K-way partition of the block grid.
//!
//! # Text format
//!
//! [`PatchMask::to_rle`] writes a compact run-length form for debugging:
//!
//! ```text
//! mask 4x4 b=2
//! 2:1 2:0 2:1 2:0 ...
//! ```
//!
//! The header gives extents (outermost first) and the block edge; the body
//! lists `run:bit` pairs over the cells in row-major order. The format is
//! not a stability contract.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub dims: Vec<usize>,
    pub patch: usize,
    pub ratio: f64,
}

impl MaskConfig {
    pub fn new(dims: &[usize], patch: usize, ratio: f64) -> Result<Self> {
        let cfg = Self {
            dims: dims.to_vec(),
            patch,
            ratio,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Coordinate-level masks (`b = 1`, `r = 0.5`) over a tensor shape. A
    /// flat vector of length `d` is treated as a `1 x d` grid.
    pub fn coordinates(shape: &[usize]) -> Result<Self> {
        let dims = match shape.len() {
            1 => vec![1, shape[0]],
            2 | 3 => shape.to_vec(),
            _ => {
                return Err(Error::invalid(
                    "mask",
                    format!("coordinate masks need rank 1-3, got {shape:?}"),
                ))
            }
        };
        Self::new(&dims, 1, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dims.len()) {
            return Err(Error::invalid("mask", format!("need 2 or 3 extents, got {:?}", self.dims)));
        }
        if self.patch == 0 {
            return Err(Error::invalid("mask", "patch size must be positive"));
        }
        if let Some(&bad) = self.dims.iter().find(|&&d| d == 0 || d % self.patch != 0) {
            return Err(Error::invalid(
                "mask",
                format!("extent {bad} not a positive multiple of patch {}", self.patch),
            ));
        }
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::invalid("mask", format!("ratio {} outside [0, 1]", self.ratio)));
        }
        Ok(())
    }

    fn block_grid(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d / self.patch).collect()
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchMask {
    dims: Vec<usize>,
    patch: usize,
    bits: Vec<u8>,
}

impl fmt::Debug for PatchMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PatchMask({:?}, b={}, ones={}/{})",
            self.dims,
            self.patch,
            self.count_ones(),
            self.bits.len()
        )
    }
}

/// Row-major cell offsets covered by block `block` of the grid.
fn block_cells(dims: &[usize], patch: usize, block: &[usize]) -> Vec<usize> {
    let mut cells = vec![0usize];
    for (&d, &bi) in dims.iter().zip(block) {
        let mut next = Vec::with_capacity(cells.len() * patch);
        for &c in &cells {
            for o in 0..patch {
                next.push(c * d + bi * patch + o);
            }
        }
        cells = next;
    }
    cells
}

fn grid_indices(grid: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = grid.iter().product();
    (0..total).map(move |mut lin| {
        let mut idx = vec![0; grid.len()];
        for a in (0..grid.len()).rev() {
            idx[a] = lin % grid[a];
            lin /= grid[a];
        }
        idx
    })
}

impl PatchMask {
    /// Builds a mask from one value per block, blocks in row-major order.
    pub fn from_blocks(dims: &[usize], patch: usize, blocks: &[bool]) -> Result<Self> {
        let cfg = MaskConfig::new(dims, patch, 0.0)?;
        let grid = cfg.block_grid();
        if blocks.len() != grid.iter().product::<usize>() {
            return Err(Error::invalid(
                "mask",
                format!("{} block values for grid {grid:?}", blocks.len()),
            ));
        }
        if patch == 1 {
            return Ok(Self {
                dims: dims.to_vec(),
                patch,
                bits: blocks.iter().map(|&b| b as u8).collect(),
            });
        }
        let mut bits = vec![0u8; dims.iter().product()];
        for (idx, &on) in grid_indices(&grid).zip(blocks) {
            if on {
                for c in block_cells(dims, patch, &idx) {
                    bits[c] = 1;
                }
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            patch,
            bits,
        })
    }

    pub fn ones(dims: &[usize], patch: usize) -> Result<Self> {
        let n = dims.iter().map(|d| d / patch.max(1)).product();
        Self::from_blocks(dims, patch, &vec![true; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Fraction of cells that are masked out.
    pub fn masked_fraction(&self) -> f64 {
        1.0 - self.count_ones() as f64 / self.bits.len() as f64
    }

    /// Block values in row-major block order.
    pub fn blocks(&self) -> Vec<bool> {
        let grid: Vec<usize> = self.dims.iter().map(|d| d / self.patch).collect();
        grid_indices(&grid)
            .map(|idx| self.bits[block_cells(&self.dims, self.patch, &idx)[0]] == 1)
            .collect()
    }

    /// True when every aligned block holds a single value.
    pub fn is_block_constant(&self) -> bool {
        let grid: Vec<usize> = self.dims.iter().map(|d| d / self.patch).collect();
        let constant = grid_indices(&grid).all(|idx| {
            let cells = block_cells(&self.dims, self.patch, &idx);
            let v = self.bits[cells[0]];
            cells.iter().all(|&c| self.bits[c] == v)
        });
        constant
    }

    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            patch: self.patch,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }

    /// Mask values as a tensor of zeros and ones with the mask's extents.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            self.dims.clone(),
            self.bits
                .iter()
                .map(|&b| if b == 1 { T::one() } else { T::zero() })
                .collect(),
        )
        .expect("mask extents are positive")
    }

    pub fn to_rle(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(ToString::to_string).collect();
        let mut out = format!("mask {} b={}\n", dims.join("x"), self.patch);
        let mut runs = Vec::new();
        let mut iter = self.bits.iter().copied().peekable();
        while let Some(b) = iter.next() {
            let mut n = 1;
            while iter.peek() == Some(&b) {
                iter.next();
                n += 1;
            }
            runs.push(format!("{n}:{b}"));
        }
        out.push_str(&runs.join(" "));
        out.push('\n');
        out
    }

    pub fn from_rle(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("mask rle: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("mask") {
            return Err(bad("missing 'mask' tag"));
        }
        let dims = parts
            .next()
            .ok_or_else(|| bad("missing extents"))?
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad("bad extent")))
            .collect::<Result<Vec<_>>>()?;
        let patch = parts
            .next()
            .and_then(|p| p.strip_prefix("b="))
            .ok_or_else(|| bad("missing b="))?
            .parse::<usize>()
            .map_err(|_| bad("bad patch"))?;
        MaskConfig::new(&dims, patch, 0.0)?;
        let mut bits = Vec::with_capacity(dims.iter().product());
        for run in lines.flat_map(str::split_whitespace) {
            let (n, b) = run.split_once(':').ok_or_else(|| bad("bad run"))?;
            let n: usize = n.parse().map_err(|_| bad("bad run length"))?;
            let b: u8 = match b {
                "0" => 0,
                "1" => 1,
                _ => return Err(bad("bit must be 0 or 1")),
            };
            bits.extend(std::iter::repeat_n(b, n));
        }
        if bits.len() != dims.iter().product::<usize>() {
            return Err(bad("run lengths do not cover the grid"));
        }
        let mask = Self { dims, patch, bits };
        if !mask.is_block_constant() {
            return Err(bad("cells inside a block disagree"));
        }
        Ok(mask)
    }
}

/// Each block is visible with probability `1 - ratio`.
pub fn sample_patch_mask(config: &MaskConfig, seed: u64) -> Result<PatchMask> {
    config.validate()?;
    let mut rng = seed::rng(seed);
    let n = config.block_grid().iter().product();
    let keep = 1.0 - config.ratio;
    let blocks: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < keep).collect();
    PatchMask::from_blocks(&config.dims, config.patch, &blocks)
}

pub fn complement(mask: &PatchMask) -> PatchMask {
    mask.complement()
}

/// Element-wise product of `x` with the mask, broadcast over leading
/// (batch, channel) dimensions.
pub fn apply_mask<T: Scalar>(x: &Tensor<T>, mask: &PatchMask) -> Result<Tensor<T>> {
    let r = mask.dims.len();
    if x.rank() < r || x.shape()[x.rank() - r..] != mask.dims[..] {
        return Err(Error::ShapeMismatch {
            op: "apply_mask",
            left: x.shape().to_vec(),
            right: mask.dims.clone(),
        });
    }
    let plane = mask.bits.len();
    let mut out = x.clone();
    for chunk in out.data_mut().chunks_mut(plane) {
        for (v, &b) in chunk.iter_mut().zip(&mask.bits) {
            if b == 0 {
                *v = T::zero();
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Complementary,
    Random,
    /// Partition of the blocks among `k` masks.
    Multiview(usize),
}

impl PairKind {
    pub fn label(&self) -> String {
        match self {
            PairKind::Complementary => "complementary".into(),
            PairKind::Random => "random".into(),
            PairKind::Multiview(k) => format!("multiview_k{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedPair {
    kind: PairKind,
    masks: Vec<PatchMask>,
}

impl MaskedPair {
    /// Checks the coverage invariant of `kind` before accepting the masks.
    pub fn new(kind: PairKind, masks: Vec<PatchMask>) -> Result<Self> {
        let expected = match kind {
            PairKind::Multiview(k) => k,
            _ => 2,
        };
        if masks.len() != expected {
            return Err(Error::invalid("masked_pair", format!("{kind:?} needs {expected} masks")));
        }
        if masks.windows(2).any(|w| w[0].dims != w[1].dims) {
            return Err(Error::invalid("masked_pair", "masks differ in extents"));
        }
        let pair = Self { kind, masks };
        if kind != PairKind::Random && !pair.is_partition() {
            return Err(Error::invalid("masked_pair", "masks do not partition the grid"));
        }
        Ok(pair)
    }

    pub fn kind(&self) -> PairKind {
        self.kind
    }

    pub fn masks(&self) -> &[PatchMask] {
        &self.masks
    }

    pub fn first(&self) -> &PatchMask {
        &self.masks[0]
    }

    pub fn second(&self) -> &PatchMask {
        &self.masks[1]
    }

    /// Element-wise sum over all masks is exactly one everywhere.
    pub fn is_partition(&self) -> bool {
        (0..self.masks[0].bits.len())
            .all(|i| self.masks.iter().map(|m| m.bits[i] as usize).sum::<usize>() == 1)
    }

    /// Applies every mask to `x`.
    pub fn views<T: Scalar>(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.masks.iter().map(|m| apply_mask(x, m)).collect()
    }
}

/// Samples masks of the given kind. For [`PairKind::Multiview`] the ratio is
/// ignored and each block goes to one of the `k` masks uniformly.
pub fn sample_pair(config: &MaskConfig, kind: PairKind, seed: u64) -> Result<MaskedPair> {
    config.validate()?;
    let masks = match kind {
        PairKind::Complementary => {
            let d = sample_patch_mask(config, seed::derive(seed, seed::stream::MASK_A, 0))?;
            let c = d.complement();
            vec![d, c]
        }
        PairKind::Random => vec![
            sample_patch_mask(config, seed::derive(seed, seed::stream::MASK_A, 0))?,
            sample_patch_mask(config, seed::derive(seed, seed::stream::MASK_B, 0))?,
        ],
        PairKind::Multiview(k) => {
            if k < 2 {
                return Err(Error::invalid("sample_pair", format!("multiview needs K >= 2, got {k}")));
            }
            let mut rng = seed::rng(seed::derive(seed, seed::stream::MASK_A, 0));
            let n = config.block_grid().iter().product();
            let owner: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            (0..k)
                .map(|v| {
                    let blocks: Vec<bool> = owner.iter().map(|&o| o == v).collect();
                    PatchMask::from_blocks(&config.dims, config.patch, &blocks)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(MaskedPair { kind, masks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(dims: &[usize], b: usize, r: f64) -> MaskConfig {
        MaskConfig::new(dims, b, r).unwrap()
    }

    #[test]
    fn degenerate_ratios() {
        let ones = sample_patch_mask(&cfg(&[8, 8], 2, 0.0), 3).unwrap();
        assert_eq!(ones.count_ones(), 64);
        let zeros = sample_patch_mask(&cfg(&[8, 8], 2, 1.0), 3).unwrap();
        assert_eq!(zeros.count_ones(), 0);
    }

    #[test]
    fn rejects_indivisible_extent_and_bad_ratio() {
        assert!(MaskConfig::new(&[10, 8], 4, 0.5).is_err());
        assert!(MaskConfig::new(&[8, 8], 4, 1.5).is_err());
        assert!(MaskConfig::new(&[8], 4, 0.5).is_err());
    }

    #[test]
    fn complement_identities() {
        let ones = PatchMask::ones(&[4, 4], 2).unwrap();
        assert_eq!(complement(&ones).count_ones(), 0);
        let d = sample_patch_mask(&cfg(&[8, 4, 4], 2, 0.5), 11).unwrap();
        assert_eq!(complement(&complement(&d)), d);
        let sum: Vec<u8> = d.bits().iter().zip(complement(&d).bits()).map(|(a, b)| a + b).collect();
        assert!(sum.iter().all(|&s| s == 1));
    }

    #[test]
    fn apply_mask_identities() {
        let x = Tensor::from_fn(&[2, 3, 4, 4], |i| (i as f64).sin());
        let ones = PatchMask::ones(&[4, 4], 2).unwrap();
        assert_eq!(apply_mask(&x, &ones).unwrap(), x);

        let d = sample_patch_mask(&cfg(&[4, 4], 2, 0.5), 5).unwrap();
        let a = apply_mask(&x, &d).unwrap();
        let b = apply_mask(&x, &d.complement()).unwrap();
        assert_eq!(a.zip_map(&b, "add", |p, q| p + q).unwrap(), x);

        let bad = PatchMask::ones(&[2, 2], 1).unwrap();
        assert!(apply_mask(&x, &bad).is_err());
    }

    #[test]
    fn checkerboard_blocks_have_eight_ones() {
        let board = PatchMask::from_blocks(&[4, 4], 2, &[true, false, false, true]).unwrap();
        let y = apply_mask(&Tensor::<f64>::ones(&[4, 4]), &board).unwrap();
        assert_eq!(y.sum(), 8.0);
        #[rustfmt::skip]
        let want = [1., 1., 0., 0.,
                    1., 1., 0., 0.,
                    0., 0., 1., 1.,
                    0., 0., 1., 1.];
        assert_eq!(y.data(), &want);
    }

    #[test]
    fn multiview_is_partition_and_k_below_two_rejected() {
        let c = cfg(&[8, 8], 2, 0.5);
        let p = sample_pair(&c, PairKind::Multiview(3), 9).unwrap();
        assert_eq!(p.masks().len(), 3);
        assert!(p.is_partition());
        assert!(sample_pair(&c, PairKind::Multiview(1), 9).is_err());
    }

    #[test]
    fn pair_constructor_checks_invariant() {
        let a = PatchMask::ones(&[2, 2], 1).unwrap();
        assert!(MaskedPair::new(PairKind::Complementary, vec![a.clone(), a.clone()]).is_err());
        assert!(MaskedPair::new(PairKind::Random, vec![a.clone(), a.clone()]).is_ok());
        assert!(MaskedPair::new(PairKind::Complementary, vec![a.clone(), a.complement()]).is_ok());
    }

    #[test]
    fn rle_roundtrip_and_rejects_garbage() {
        let d = sample_patch_mask(&cfg(&[4, 8, 8], 4, 0.5), 1).unwrap();
        let text = d.to_rle();
        assert!(text.starts_with("mask 4x8x8 b=4\n"));
        assert_eq!(PatchMask::from_rle(&text).unwrap(), d);
        assert!(PatchMask::from_rle("mask 4x4 b=2\n3:1 13:0\n").is_err());
        assert!(PatchMask::from_rle("mask 4x4 b=2\n4:1\n").is_err());
    }

    proptest! {
        #[test]
        fn sampled_masks_keep_invariants(
            seed in any::<u64>(),
            grid in prop::collection::vec(1usize..5, 2..=3),
            b in 1usize..4,
            r in 0.0f64..=1.0,
        ) {
            let dims: Vec<usize> = grid.iter().map(|g| g * b).collect();
            let c = cfg(&dims, b, r);
            let pair = sample_pair(&c, PairKind::Complementary, seed).unwrap();
            prop_assert!(pair.is_partition());
            for m in pair.masks() {
                prop_assert!(m.is_block_constant());
            }
            let min_all_zero = pair.first().bits().iter().zip(pair.second().bits()).all(|(a, b)| a.min(b) == &0);
            let max_all_one = pair.first().bits().iter().zip(pair.second().bits()).all(|(a, b)| a.max(b) == &1);
            prop_assert!(min_all_zero && max_all_one);
            prop_assert_eq!(sample_pair(&c, PairKind::Random, seed).unwrap(), sample_pair(&c, PairKind::Random, seed).unwrap());
            let k = 2 + (seed % 3) as usize;
            prop_assert!(sample_pair(&c, PairKind::Multiview(k), seed).unwrap().is_partition());
        }
    }
}
