//! Forward and backward kernels behind the graph operations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn dims2<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::invalid(op, format!("expected rank 2, got {:?}", t.shape()))),
    }
}

pub(crate) fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = dims2(a, "matmul")?;
    let (k2, n) = dims2(b, "matmul")?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, a.data(), (k as isize, 1), b.data(), (n as isize, 1), T::zero(), &mut out);
    Tensor::new(vec![m, n], out)
}

/// `G · Bᵀ`
pub(crate) fn matmul_grad_lhs<T: Scalar>(g: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (g.shape()[0], g.shape()[1]);
    let k = b.shape()[0];
    let mut out = vec![T::zero(); m * k];
    T::gemm(m, n, k, g.data(), (n as isize, 1), b.data(), (1, n as isize), T::zero(), &mut out);
    Tensor::new(vec![m, k], out).expect("shape")
}

/// `Aᵀ · G`
pub(crate) fn matmul_grad_rhs<T: Scalar>(a: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = g.shape()[1];
    let mut out = vec![T::zero(); k * n];
    T::gemm(k, m, n, a.data(), (1, k as isize), g.data(), (n as isize, 1), T::zero(), &mut out);
    Tensor::new(vec![k, n], out).expect("shape")
}

#[derive(Clone, Copy, Debug)]
struct ConvDims {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
}

impl ConvDims {
    fn of<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<Self> {
        let [batch, c_in, h, w] = *input.shape() else {
            return Err(Error::invalid(
                "conv2d",
                format!("input must be NCHW, got {:?}", input.shape()),
            ));
        };
        let [c_out, kc_in, kh, kw] = *kernel.shape() else {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel must be OIKK, got {:?}", kernel.shape()),
            ));
        };
        if kh != kw {
            return Err(Error::invalid("conv2d", format!("non-square kernel {kh}x{kw}")));
        }
        if kh % 2 == 0 {
            return Err(Error::invalid("conv2d", format!("even kernel size {kh}")));
        }
        if kc_in != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: input.shape().to_vec(),
                right: kernel.shape().to_vec(),
            });
        }
        Ok(Self {
            batch,
            c_in,
            c_out,
            h,
            w,
            k: kh,
        })
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Unfolds one image `[C_in, H, W]` into `[C_in·K·K, H·W]` with zero padding.
fn im2col<T: Scalar>(img: &[T], d: &ConvDims, col: &mut [T]) {
    let (h, w, k) = (d.h, d.w, d.k);
    let pad = (k / 2) as isize;
    let plane = d.plane();
    for c in 0..d.c_in {
        let src = &img[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let iy = y as isize + dy;
                    let out_row = &mut dst[y * w..(y + 1) * w];
                    if iy < 0 || iy >= h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let in_row = &src[iy as usize * w..(iy as usize + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    out_row[..x0.min(w)].fill(T::zero());
                    if x1 > x0 {
                        let s0 = (x0 as isize + dx) as usize;
                        out_row[x0..x1].copy_from_slice(&in_row[s0..s0 + (x1 - x0)]);
                    }
                    out_row[x1.max(x0).min(w)..].fill(T::zero());
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `[C_in·K·K, H·W]` back into `[C_in, H, W]`.
fn col2im<T: Scalar>(col: &[T], d: &ConvDims, img: &mut [T]) {
    let (h, w, k) = (d.h, d.w, d.k);
    let pad = (k / 2) as isize;
    let plane = d.plane();
    for c in 0..d.c_in {
        let dst = &mut img[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &col[row * plane..(row + 1) * plane];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let iy = y as isize + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    if x1 <= x0 {
                        continue;
                    }
                    let s0 = (x0 as isize + dx) as usize;
                    let in_row = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for (o, &v) in in_row[s0..s0 + (x1 - x0)]
                        .iter_mut()
                        .zip(&src[y * w + x0..y * w + x1])
                    {
                        *o += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let d = ConvDims::of(input, kernel)?;
    let plane = d.plane();
    let pl = d.patch_len();
    let mut out = vec![T::zero(); d.batch * d.c_out * plane];
    let mut col = if d.k == 1 { Vec::new() } else { vec![T::zero(); pl * plane] };
    for n in 0..d.batch {
        let img = &input.data()[n * d.c_in * plane..(n + 1) * d.c_in * plane];
        let cols: &[T] = if d.k == 1 {
            img
        } else {
            im2col(img, &d, &mut col);
            &col
        };
        T::gemm(
            d.c_out,
            pl,
            plane,
            kernel.data(),
            (pl as isize, 1),
            cols,
            (plane as isize, 1),
            T::zero(),
            &mut out[n * d.c_out * plane..(n + 1) * d.c_out * plane],
        );
    }
    Tensor::new(vec![d.batch, d.c_out, d.h, d.w], out)
}

pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    g: &Tensor<T>,
    want_input: bool,
    want_kernel: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    let d = ConvDims::of(input, kernel).expect("validated in forward");
    let plane = d.plane();
    let pl = d.patch_len();
    let mut dk = want_kernel.then(|| vec![T::zero(); d.c_out * pl]);
    let mut dx = want_input.then(|| vec![T::zero(); input.numel()]);
    let mut col = vec![T::zero(); if d.k == 1 { 0 } else { pl * plane }];
    let mut dcol = vec![T::zero(); if want_input && d.k > 1 { pl * plane } else { 0 }];
    for n in 0..d.batch {
        let img = &input.data()[n * d.c_in * plane..(n + 1) * d.c_in * plane];
        let gn = &g.data()[n * d.c_out * plane..(n + 1) * d.c_out * plane];
        if let Some(dk) = dk.as_mut() {
            let cols: &[T] = if d.k == 1 {
                img
            } else {
                im2col(img, &d, &mut col);
                &col
            };
            // dK += G_n · colsᵀ
            T::gemm(
                d.c_out,
                plane,
                pl,
                gn,
                (plane as isize, 1),
                cols,
                (1, plane as isize),
                T::one(),
                dk,
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dimg = &mut dx[n * d.c_in * plane..(n + 1) * d.c_in * plane];
            // dcol = Kᵀ · G_n
            if d.k == 1 {
                T::gemm(
                    pl,
                    d.c_out,
                    plane,
                    kernel.data(),
                    (1, pl as isize),
                    gn,
                    (plane as isize, 1),
                    T::zero(),
                    dimg,
                );
            } else {
                T::gemm(
                    pl,
                    d.c_out,
                    plane,
                    kernel.data(),
                    (1, pl as isize),
                    gn,
                    (plane as isize, 1),
                    T::zero(),
                    &mut dcol,
                );
                col2im(&dcol, &d, dimg);
            }
        }
    }
    (
        dx.map(|v| Tensor::new(input.shape().to_vec(), v).expect("shape")),
        dk.map(|v| Tensor::new(kernel.shape().to_vec(), v).expect("shape")),
    )
}

/// `(batch, channels, spatial)` view of an `[N, C, ...]` tensor.
fn ncs<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    if t.rank() < 2 {
        return Err(Error::invalid(op, format!("expected [N, C, ...], got {:?}", t.shape())));
    }
    let s = t.shape()[2..].iter().product();
    Ok((t.shape()[0], t.shape()[1], s))
}

pub(crate) fn channel_bias<T: Scalar>(input: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, s) = ncs(input, "channel_bias")?;
    if bias.numel() != c {
        return Err(Error::ShapeMismatch {
            op: "channel_bias",
            left: input.shape().to_vec(),
            right: bias.shape().to_vec(),
        });
    }
    let mut out = input.clone();
    let data = out.data_mut();
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * s;
            let v = bias.data()[ch];
            data[off..off + s].iter_mut().for_each(|x| *x += v);
        }
    }
    Ok(out)
}

pub(crate) fn channel_sum<T: Scalar>(g: &Tensor<T>, channels: usize) -> Tensor<T> {
    let (n, c, s) = ncs(g, "channel_sum").expect("validated in forward");
    debug_assert_eq!(c, channels);
    let mut out = vec![T::zero(); c];
    for b in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            let off = (b * c + ch) * s;
            *o += g.data()[off..off + s].iter().copied().sum::<T>();
        }
    }
    Tensor::new(vec![c], out).expect("shape")
}

pub(crate) fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, s) = ncs(logits, "softmax")?;
    let mut out = logits.clone();
    let x = logits.data();
    let y = out.data_mut();
    for b in 0..n {
        let base = b * c * s;
        for p in 0..s {
            let mut mx = T::neg_infinity();
            for ch in 0..c {
                mx = mx.max(x[base + ch * s + p]);
            }
            let mut z = T::zero();
            for ch in 0..c {
                let e = (x[base + ch * s + p] - mx).exp();
                y[base + ch * s + p] = e;
                z += e;
            }
            for ch in 0..c {
                y[base + ch * s + p] /= z;
            }
        }
    }
    Ok(out)
}

pub(crate) fn softmax_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let (n, c, s) = ncs(y, "softmax").expect("validated in forward");
    let mut out = g.clone();
    let (yd, gd) = (y.data(), g.data());
    let od = out.data_mut();
    for b in 0..n {
        let base = b * c * s;
        for p in 0..s {
            let dot: T = (0..c).map(|ch| yd[base + ch * s + p] * gd[base + ch * s + p]).sum();
            for ch in 0..c {
                let i = base + ch * s + p;
                od[i] = yd[i] * (gd[i] - dot);
            }
        }
    }
    out
}

fn check_targets<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    weights: Option<&[T]>,
) -> Result<(usize, usize, usize)> {
    let (n, c, s) = ncs(logits, "softmax_cross_entropy")?;
    if targets.len() != n * s {
        return Err(Error::invalid(
            "softmax_cross_entropy",
            format!("{} targets for {} pixels", targets.len(), n * s),
        ));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::ClassOutOfRange {
            index: bad,
            classes: c,
        });
    }
    if let Some(w) = weights {
        if w.len() != n * s {
            return Err(Error::invalid(
                "softmax_cross_entropy",
                format!("{} weights for {} pixels", w.len(), n * s),
            ));
        }
        if w.iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::invalid("softmax_cross_entropy", "weights must be 0 or 1"));
        }
    }
    Ok((n, c, s))
}

fn log_softmax_at<T: Scalar>(x: &[T], base: usize, c: usize, s: usize, p: usize, t: usize) -> T {
    let mut mx = T::neg_infinity();
    for ch in 0..c {
        mx = mx.max(x[base + ch * s + p]);
    }
    let z: T = (0..c).map(|ch| (x[base + ch * s + p] - mx).exp()).sum();
    x[base + t * s + p] - mx - z.ln()
}

pub(crate) fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    weights: Option<&[T]>,
) -> Result<T> {
    let (n, c, s) = check_targets(logits, targets, weights)?;
    let x = logits.data();
    let mut total = T::zero();
    let mut count = T::zero();
    for b in 0..n {
        let base = b * c * s;
        for p in 0..s {
            let pix = b * s + p;
            let w = weights.map_or(T::one(), |w| w[pix]);
            if w == T::zero() {
                continue;
            }
            total -= log_softmax_at(x, base, c, s, p, targets[pix]);
            count += T::one();
        }
    }
    Ok(if count == T::zero() { T::zero() } else { total / count })
}

pub(crate) fn softmax_cross_entropy_grad<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    weights: Option<&[T]>,
) -> Tensor<T> {
    let (n, c, s) = ncs(logits, "softmax_cross_entropy").expect("validated in forward");
    let count = weights.map_or((n * s) as f64, |w| w.iter().map(|v| v.as_f64()).sum());
    let mut grad = Tensor::zeros(logits.shape());
    if count == 0.0 {
        return grad;
    }
    let inv = T::lit(1.0 / count);
    let probs = softmax(logits).expect("validated in forward");
    let (pd, gd) = (probs.data(), grad.data_mut());
    for b in 0..n {
        let base = b * c * s;
        for p in 0..s {
            let pix = b * s + p;
            let w = weights.map_or(T::one(), |w| w[pix]);
            if w == T::zero() {
                continue;
            }
            for ch in 0..c {
                let i = base + ch * s + p;
                let onehot = if ch == targets[pix] { T::one() } else { T::zero() };
                gd[i] = (pd[i] - onehot) * inv;
            }
        }
    }
    grad
}

/// Per-channel mean and population standard deviation over batch and space.
pub fn channel_stats<T: Scalar>(x: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
    let (n, c, s) = ncs(x, "channel_stats")?;
    let m = T::lit((n * s) as f64);
    let mut means = vec![T::zero(); c];
    let mut stds = vec![T::zero(); c];
    for ch in 0..c {
        let vals = || (0..n).flat_map(move |b| x.data()[(b * c + ch) * s..(b * c + ch + 1) * s].iter().copied());
        let mu = vals().sum::<T>() / m;
        let var = vals().map(|v| (v - mu) * (v - mu)).sum::<T>() / m;
        means[ch] = mu;
        stds[ch] = var.sqrt();
    }
    Ok((means, stds))
}

fn degenerate<T: Scalar>(mu: T, sd: T) -> bool {
    sd <= T::epsilon() * (T::one() + mu.abs())
}

pub(crate) fn adain<T: Scalar>(
    input: &Tensor<T>,
    target_mean: &[T],
    target_std: &[T],
) -> Result<Tensor<T>> {
    let (n, c, s) = ncs(input, "adain")?;
    if target_mean.len() != c || target_std.len() != c {
        return Err(Error::invalid(
            "adain",
            format!(
                "{} channels but {} means / {} stds",
                c,
                target_mean.len(),
                target_std.len()
            ),
        ));
    }
    let (mu, sd) = channel_stats(input)?;
    let mut out = input.clone();
    let od = out.data_mut();
    for ch in 0..c {
        if degenerate(mu[ch], sd[ch]) {
            continue;
        }
        let scale = target_std[ch] / sd[ch];
        for b in 0..n {
            for v in &mut od[(b * c + ch) * s..(b * c + ch + 1) * s] {
                *v = (*v - mu[ch]) * scale + target_mean[ch];
            }
        }
    }
    Ok(out)
}

pub(crate) fn adain_backward<T: Scalar>(
    input: &Tensor<T>,
    target_std: &[T],
    g: &Tensor<T>,
) -> Tensor<T> {
    let (n, c, s) = ncs(input, "adain").expect("validated in forward");
    let (mu, sd) = channel_stats(input).expect("validated in forward");
    let m = T::lit((n * s) as f64);
    let mut out = g.clone();
    let (xd, gd) = (input.data(), g.data());
    let od = out.data_mut();
    for ch in 0..c {
        if degenerate(mu[ch], sd[ch]) {
            continue;
        }
        let idx = || (0..n).flat_map(move |b| (b * c + ch) * s..(b * c + ch + 1) * s);
        let xhat = |i: usize| (xd[i] - mu[ch]) / sd[ch];
        let g_mean = idx().map(|i| gd[i]).sum::<T>() / m;
        let gx_mean = idx().map(|i| gd[i] * xhat(i)).sum::<T>() / m;
        let scale = target_std[ch] / sd[ch];
        for i in idx() {
            od[i] = scale * (gd[i] - g_mean - xhat(i) * gx_mean);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(input: &Tensor<f64>, kernel: &Tensor<f64>) -> Vec<f64> {
        let d = ConvDims::of(input, kernel).unwrap();
        let p = (d.k / 2) as isize;
        let mut out = vec![0.0; d.batch * d.c_out * d.plane()];
        for n in 0..d.batch {
            for o in 0..d.c_out {
                for y in 0..d.h {
                    for x in 0..d.w {
                        let mut acc = 0.0;
                        for i in 0..d.c_in {
                            for ky in 0..d.k {
                                for kx in 0..d.k {
                                    let iy = y as isize + ky as isize - p;
                                    let ix = x as isize + kx as isize - p;
                                    if iy < 0 || ix < 0 || iy >= d.h as isize || ix >= d.w as isize {
                                        continue;
                                    }
                                    let xi = ((n * d.c_in + i) * d.h + iy as usize) * d.w + ix as usize;
                                    let ki = ((o * d.c_in + i) * d.k + ky) * d.k + kx;
                                    acc += input.data()[xi] * kernel.data()[ki];
                                }
                            }
                        }
                        out[((n * d.c_out + o) * d.h + y) * d.w + x] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loop() {
        for k in [1, 3, 5] {
            let input = Tensor::from_fn(&[2, 3, 5, 7], |i| ((i * 37 % 11) as f64) - 5.0);
            let kernel = Tensor::from_fn(&[4, 3, k, k], |i| ((i * 13 % 7) as f64) * 0.25 - 0.7);
            let got = conv2d(&input, &kernel).unwrap();
            let want = naive_conv(&input, &kernel);
            for (a, b) in got.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let d = ConvDims {
            batch: 1,
            c_in: 2,
            c_out: 1,
            h: 4,
            w: 6,
            k: 3,
        };
        let x: Vec<f64> = (0..d.c_in * d.plane()).map(|i| (i as f64 * 0.7).sin()).collect();
        let c: Vec<f64> = (0..d.patch_len() * d.plane()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut col = vec![0.0; c.len()];
        im2col(&x, &d, &mut col);
        let mut back = vec![0.0; x.len()];
        col2im(&c, &d, &mut back);
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_fn(&[2, 4, 3], |i| (i as f64 * 1.3).sin() * 20.0);
        let y = softmax(&x).unwrap();
        for b in 0..2 {
            for p in 0..3 {
                let s: f64 = (0..4).map(|c| y.data()[b * 12 + c * 3 + p]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adain_zero_variance_channel_passes_through() {
        let mut x = Tensor::from_fn(&[1, 2, 4], |i| i as f64);
        x.data_mut()[..4].fill(3.0);
        let y = adain(&x, &[10.0, 10.0], &[2.0, 2.0]).unwrap();
        assert_eq!(&y.data()[..4], &[3.0; 4]);
        let (mu, sd) = channel_stats(&y).unwrap();
        assert!((mu[1] - 10.0).abs() < 1e-12 && (sd[1] - 2.0).abs() < 1e-12);
    }
}
