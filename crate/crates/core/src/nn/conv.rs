use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Tensor4};

/// Kernel and bias of one convolution layer.
///
/// Weight layout depends on the operation the parameters feed:
/// [`conv2d`] reads `(out, in, k, k)`, [`conv_transpose2d`] reads
/// `(in, out, k, k)`. Either way `bias` has one entry per output channel of
/// the operation and `k` is odd.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor4,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Tensor4,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn zeros(dim0: usize, dim1: usize, kernel: usize, bias_len: usize) -> Self {
        ConvParams {
            weight: Tensor4::zeros([dim0, dim1, kernel, kernel]),
            bias: vec![0.0; bias_len],
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.height()
    }

    fn check_kernel(&self) -> Result<usize> {
        let [_, _, kh, kw] = self.weight.dims();
        if kh != kw || kh % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel must be square with odd size, got {kh}x{kw}"
            )));
        }
        Ok(kh)
    }
}

/// Copies every plane of `t` into a zero border of width `pad`.
fn pad_planes(t: &Tensor4, pad: usize) -> Vec<f64> {
    let [b, c, h, w] = t.dims();
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; b * c * ph * pw];
    for (plane, dst) in t.as_slice().chunks_exact(h * w).zip(out.chunks_exact_mut(ph * pw)) {
        for y in 0..h {
            let row = (y + pad) * pw + pad;
            dst[row..row + w].copy_from_slice(&plane[y * w..(y + 1) * w]);
        }
    }
    out
}

/// Geometry shared by the padded-plane kernels.
#[derive(Clone, Copy)]
struct Geom {
    h: usize,
    w: usize,
    k: usize,
}

impl Geom {
    fn pw(self) -> usize {
        self.w + self.k - 1
    }

    fn plane(self) -> usize {
        (self.h + self.k - 1) * self.pw()
    }
}

/// `dst[y][x] += sum_{ky,kx} kern[ky][kx] * src[y + ky][x + kx]` over one
/// output row, where `src` is a padded plane.
#[inline]
fn correlate_row(dst: &mut [f64], src: &[f64], g: Geom, y: usize, kern: &[f64]) {
    let (w, pw, k) = (g.w, g.pw(), g.k);
    let dst = &mut dst[..w];
    if k == 3 {
        let r0 = &src[y * pw..y * pw + w + 2];
        let r1 = &src[(y + 1) * pw..(y + 1) * pw + w + 2];
        let r2 = &src[(y + 2) * pw..(y + 2) * pw + w + 2];
        let kern: &[f64; 9] = kern.try_into().expect("3x3 kernel");
        for x in 0..w {
            dst[x] += kern[0] * r0[x] + kern[1] * r0[x + 1] + kern[2] * r0[x + 2]
                + kern[3] * r1[x] + kern[4] * r1[x + 1] + kern[5] * r1[x + 2]
                + kern[6] * r2[x] + kern[7] * r2[x + 1] + kern[8] * r2[x + 2];
        }
        return;
    }
    for ky in 0..k {
        let row = &src[(y + ky) * pw..(y + ky) * pw + pw];
        for kx in 0..k {
            let wv = kern[ky * k + kx];
            for (d, s) in dst.iter_mut().zip(&row[kx..kx + w]) {
                *d += wv * s;
            }
        }
    }
}

/// `out[ky][kx] += sum_{y,x} a[y][x] * src[y + ky][x + kx]` where `a` is an
/// unpadded plane and `src` a padded one.
fn correlate_dot(a: &[f64], src: &[f64], g: Geom, out: &mut [f64]) {
    const L: usize = 4;
    let (h, w, pw, k) = (g.h, g.w, g.pw(), g.k);
    let body = w - w % L;
    for ky in 0..k {
        for kx in 0..k {
            let mut lanes = [0.0f64; L];
            let mut tail = 0.0;
            for y in 0..h {
                let ar = &a[y * w..y * w + w];
                let sr = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                for (ac, sc) in ar[..body].chunks_exact(L).zip(sr[..body].chunks_exact(L)) {
                    for l in 0..L {
                        lanes[l] += ac[l] * sc[l];
                    }
                }
                for x in body..w {
                    tail += ar[x] * sr[x];
                }
            }
            out[ky * k + kx] += lanes.iter().sum::<f64>() + tail;
        }
    }
}

/// Weight-gradient reduction for a whole layer:
/// `out[a][b][ky][kx] = sum_{n,y,x} grads[n][a][y][x] * padded[n][b][y+ky][x+kx]`
/// with `grads` holding `a_ch` unpadded planes and `padded` holding `b_ch`
/// padded planes per batch entry.
fn weight_grad_layer(grads: &Tensor4, padded: &[f64], g: Geom, b_ch: usize) -> Vec<f64> {
    const GB: usize = 4;
    const L: usize = 8;
    let [batch, a_ch, h, w] = grads.dims();
    let (k, pw, plane) = (g.k, g.pw(), g.plane());
    let kk = k * k;
    let mut out = vec![0.0; a_ch * b_ch * kk];
    let blocked = if k == 3 { a_ch / GB } else { 0 };
    let body = w / L * L;
    for n in 0..batch {
        for blk in 0..blocked {
            let gp: [&[f64]; GB] = core::array::from_fn(|j| grads.plane(n, blk * GB + j));
            for b in 0..b_ch {
                let src = &padded[(n * b_ch + b) * plane..][..plane];
                for ky in 0..3 {
                    let mut acc0 = [[0.0f64; L]; GB];
                    let mut acc1 = [[0.0f64; L]; GB];
                    let mut acc2 = [[0.0f64; L]; GB];
                    let mut tail = [[0.0f64; 3]; GB];
                    for y in 0..h {
                        let row = &src[(y + ky) * pw..(y + ky) * pw + w + 2];
                        let grow: [&[f64]; GB] = core::array::from_fn(|j| &gp[j][y * w..y * w + w]);
                        for x0 in (0..body).step_by(L) {
                            let s0: &[f64; L] = row[x0..x0 + L].try_into().unwrap();
                            let s1: &[f64; L] = row[x0 + 1..x0 + 1 + L].try_into().unwrap();
                            let s2: &[f64; L] = row[x0 + 2..x0 + 2 + L].try_into().unwrap();
                            for j in 0..GB {
                                let gv: &[f64; L] = grow[j][x0..x0 + L].try_into().unwrap();
                                for l in 0..L {
                                    acc0[j][l] += gv[l] * s0[l];
                                    acc1[j][l] += gv[l] * s1[l];
                                    acc2[j][l] += gv[l] * s2[l];
                                }
                            }
                        }
                        for x in body..w {
                            for j in 0..GB {
                                for kx in 0..3 {
                                    tail[j][kx] += grow[j][x] * row[x + kx];
                                }
                            }
                        }
                    }
                    let acc = [acc0, acc1, acc2];
                    for j in 0..GB {
                        for kx in 0..3 {
                            let a = blk * GB + j;
                            out[(a * b_ch + b) * kk + ky * 3 + kx] += acc[kx][j].iter().sum::<f64>() + tail[j][kx];
                        }
                    }
                }
            }
        }
        for a in blocked * GB..a_ch {
            for b in 0..b_ch {
                let src = &padded[(n * b_ch + b) * plane..][..plane];
                correlate_dot(grads.plane(n, a), src, g, &mut out[(a * b_ch + b) * kk..][..kk]);
            }
        }
    }
    out
}

fn flipped(kern: &[f64]) -> Vec<f64> {
    kern.iter().rev().copied().collect()
}

/// Output channels computed together by the blocked kernel.
const OB: usize = 4;
/// Output columns computed together by the blocked kernel.
const XB: usize = 16;

/// `out[n][o] = bias[o] + sum_i correlate(padded[n][i], kernel(o, i))`.
///
/// Full `OB × XB` output tiles go through a register-blocked kernel that
/// reuses every input load across `OB` output channels; ragged edges fall
/// back to [`correlate_row`].
fn correlate_layer(
    padded: &[f64],
    g: Geom,
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    bias: &[f64],
    kernel: impl Fn(usize, usize) -> Vec<f64>,
) -> Tensor4 {
    let (h, w, k) = (g.h, g.w, g.k);
    let (pw, plane, kk) = (g.pw(), g.plane(), k * k);
    let kernels: Vec<Vec<f64>> = (0..out_ch)
        .flat_map(|o| (0..in_ch).map(move |i| (o, i)))
        .map(|(o, i)| kernel(o, i))
        .collect();
    // Packed as [block][i][ky][kx][OB] so the blocked kernel reads one
    // contiguous weight group per tap.
    let full_blocks = out_ch / OB;
    let mut packed = vec![0.0; full_blocks * in_ch * kk * OB];
    for b in 0..full_blocks {
        for i in 0..in_ch {
            for t in 0..kk {
                for ol in 0..OB {
                    packed[((b * in_ch + i) * kk + t) * OB + ol] = kernels[(b * OB + ol) * in_ch + i][t];
                }
            }
        }
    }
    let bias_of = |o: usize| bias.get(o).copied().unwrap_or(0.0);
    let full_x = w / XB * XB;

    let mut out = Tensor4::zeros([batch, out_ch, h, w]);
    let out_data = out.as_mut_slice();
    for n in 0..batch {
        let src_n = &padded[n * in_ch * plane..(n + 1) * in_ch * plane];
        for b in 0..full_blocks {
            let wb = &packed[b * in_ch * kk * OB..(b + 1) * in_ch * kk * OB];
            for y in 0..h {
                for x0 in (0..full_x).step_by(XB) {
                    let mut acc = [[0.0f64; XB]; OB];
                    for i in 0..in_ch {
                        let src = &src_n[i * plane..(i + 1) * plane];
                        for ky in 0..k {
                            let row = &src[(y + ky) * pw + x0..(y + ky) * pw + x0 + XB + k - 1];
                            for kx in 0..k {
                                let s: &[f64; XB] = row[kx..kx + XB].try_into().unwrap();
                                let wv: &[f64; OB] =
                                    wb[((i * kk) + ky * k + kx) * OB..][..OB].try_into().unwrap();
                                for ol in 0..OB {
                                    for l in 0..XB {
                                        acc[ol][l] += wv[ol] * s[l];
                                    }
                                }
                            }
                        }
                    }
                    for ol in 0..OB {
                        let o = b * OB + ol;
                        let dst = &mut out_data[((n * out_ch + o) * h + y) * w + x0..][..XB];
                        for l in 0..XB {
                            dst[l] = bias_of(o) + acc[ol][l];
                        }
                    }
                }
            }
        }
        // Ragged right edge of the blocked channels, and leftover channels.
        for o in 0..out_ch {
            let x_start = if o < full_blocks * OB { full_x } else { 0 };
            if x_start == w {
                continue;
            }
            let dst = &mut out_data[(n * out_ch + o) * h * w..(n * out_ch + o + 1) * h * w];
            let mut row = vec![0.0; w];
            for y in 0..h {
                row.fill(0.0);
                for i in 0..in_ch {
                    correlate_row(&mut row, &src_n[i * plane..(i + 1) * plane], g, y, &kernels[o * in_ch + i]);
                }
                for x in x_start..w {
                    dst[y * w + x] = bias_of(o) + row[x];
                }
            }
        }
    }
    out
}

fn channel_sums(t: &Tensor4) -> Vec<f64> {
    let [batch, ch, _, _] = t.dims();
    (0..ch)
        .map(|c| (0..batch).map(|n| t.plane(n, c).iter().sum::<f64>()).sum())
        .collect()
}

fn check_bias(params: &ConvParams, expected: usize) -> Result<()> {
    if params.bias.len() != expected {
        return Err(Error::shape(format!(
            "bias has {} entries, expected {expected}",
            params.bias.len()
        )));
    }
    Ok(())
}

/// Same-padded, stride-1 2-D cross-correlation (the kernel is not flipped):
///
/// `out[n][o][y][x] = bias[o] + sum_{i,ky,kx} w[o][i][ky][kx] * in[n][i][y+ky-p][x+kx-p]`
/// with `p = k / 2` and zeros outside the plane.
pub fn conv2d(input: &Tensor4, params: &ConvParams) -> Result<Tensor4> {
    let k = params.check_kernel()?;
    let [out_ch, in_ch, _, _] = params.weight.dims();
    let [batch, channels, h, w] = input.dims();
    if channels != in_ch {
        return Err(Error::shape(format!(
            "conv2d input has {channels} channels, layer expects {in_ch}"
        )));
    }
    check_bias(params, out_ch)?;
    let g = Geom { h, w, k };
    let padded = pad_planes(input, k / 2);
    let kk = k * k;
    let wt = params.weight.as_slice();
    Ok(correlate_layer(&padded, g, batch, in_ch, out_ch, &params.bias, |o, i| {
        wt[(o * in_ch + i) * kk..][..kk].to_vec()
    }))
}

/// Adjoint of [`conv2d`] with respect to its input, weights and bias.
pub fn conv2d_grad(grad_out: &Tensor4, input: &Tensor4, params: &ConvParams) -> Result<ConvGrads> {
    let k = params.check_kernel()?;
    let [out_ch, in_ch, _, _] = params.weight.dims();
    let [batch, channels, h, w] = input.dims();
    if channels != in_ch {
        return Err(Error::shape(format!(
            "conv2d input has {channels} channels, layer expects {in_ch}"
        )));
    }
    check_bias(params, out_ch)?;
    if grad_out.dims() != [batch, out_ch, h, w] {
        return Err(Error::shape(format!(
            "conv2d grad_out dims {:?}, expected {:?}",
            grad_out.dims(),
            [batch, out_ch, h, w]
        )));
    }
    let g = Geom { h, w, k };
    let kk = k * k;
    let wt = params.weight.as_slice();
    let padded_in = pad_planes(input, k / 2);
    let padded_g = pad_planes(grad_out, k / 2);
    let grad_bias = channel_sums(grad_out);
    let grad_weight =
        Tensor4::from_vec(params.weight.dims(), weight_grad_layer(grad_out, &padded_in, g, in_ch))?;
    // Adjoint of a correlation is a correlation with the flipped kernel.
    let grad_input = correlate_layer(&padded_g, g, batch, out_ch, in_ch, &[], |i, o| {
        flipped(&wt[(o * in_ch + i) * kk..][..kk])
    });
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

/// Flips a kernel in both spatial axes and swaps its first two axes.
///
/// `conv_transpose2d(x, p)` equals `conv2d(x, p')` where `p'` carries
/// `flip_swap_io(p.weight)` and the same bias.
pub fn flip_swap_io(weight: &Tensor4) -> Tensor4 {
    let [a, b, kh, kw] = weight.dims();
    let mut out = Tensor4::zeros([b, a, kh, kw]);
    for i in 0..a {
        for j in 0..b {
            for y in 0..kh {
                for x in 0..kw {
                    out[[j, i, kh - 1 - y, kw - 1 - x]] = weight[[i, j, y, x]];
                }
            }
        }
    }
    out
}

/// Same-padded, stride-1 transposed convolution with weights laid out as
/// `(in, out, k, k)`. Without bias this is exactly the adjoint of
/// [`conv2d`] run with the same weight tensor.
pub fn conv_transpose2d(input: &Tensor4, params: &ConvParams) -> Result<Tensor4> {
    let k = params.check_kernel()?;
    let [in_ch, out_ch, _, _] = params.weight.dims();
    let [batch, channels, h, w] = input.dims();
    if channels != in_ch {
        return Err(Error::shape(format!(
            "conv_transpose2d input has {channels} channels, layer expects {in_ch}"
        )));
    }
    check_bias(params, out_ch)?;
    let g = Geom { h, w, k };
    let padded = pad_planes(input, k / 2);
    let kk = k * k;
    let wt = params.weight.as_slice();
    Ok(correlate_layer(&padded, g, batch, in_ch, out_ch, &params.bias, |o, i| {
        flipped(&wt[(i * out_ch + o) * kk..][..kk])
    }))
}

/// Adjoint of [`conv_transpose2d`] with respect to its input, weights and
/// bias.
pub fn conv_transpose2d_grad(
    grad_out: &Tensor4,
    input: &Tensor4,
    params: &ConvParams,
) -> Result<ConvGrads> {
    let k = params.check_kernel()?;
    let [in_ch, out_ch, _, _] = params.weight.dims();
    let [batch, channels, h, w] = input.dims();
    if channels != in_ch {
        return Err(Error::shape(format!(
            "conv_transpose2d input has {channels} channels, layer expects {in_ch}"
        )));
    }
    check_bias(params, out_ch)?;
    if grad_out.dims() != [batch, out_ch, h, w] {
        return Err(Error::shape(format!(
            "conv_transpose2d grad_out dims {:?}, expected {:?}",
            grad_out.dims(),
            [batch, out_ch, h, w]
        )));
    }
    let g = Geom { h, w, k };
    let kk = k * k;
    let wt = params.weight.as_slice();
    let padded_in = pad_planes(input, k / 2);
    let padded_g = pad_planes(grad_out, k / 2);
    let grad_bias = channel_sums(grad_out);
    let by_out = weight_grad_layer(grad_out, &padded_in, g, in_ch);
    let mut grad_weight = Tensor4::zeros(params.weight.dims());
    for i in 0..in_ch {
        for o in 0..out_ch {
            // The forward pass used the flipped kernel.
            let acc = &by_out[(o * in_ch + i) * kk..][..kk];
            let dst = &mut grad_weight.as_mut_slice()[(i * out_ch + o) * kk..][..kk];
            for (d, a) in dst.iter_mut().zip(acc.iter().rev()) {
                *d = *a;
            }
        }
    }
    let grad_input = correlate_layer(&padded_g, g, batch, out_ch, in_ch, &[], |i, o| {
        wt[(i * out_ch + o) * kk..][..kk].to_vec()
    });
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}
