//! Numeric kernels behind the graph ops.
//!
//! Every kernel is a plain sequential loop with a fixed iteration order, so
//! results are bit-identical from run to run and independent of any thread
//! count used above this layer.

use crate::tensor::{strides_of, Tensor};

/// Elementwise binary op with size-1 broadcasting. `a` and `b` must already
/// have passed the graph's broadcast shape check.
pub(crate) fn broadcast_binary(
    a: &Tensor,
    b: &Tensor,
    out_shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let n: usize = out_shape.iter().product();
    // Fast path: identical shapes need no index arithmetic.
    if a.shape() == out_shape && b.shape() == out_shape {
        return a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
    }
    // Rank-0 operands broadcast against anything.
    if a.is_scalar() {
        let x = a.data()[0];
        return b.data().iter().map(|&y| f(x, y)).collect();
    }
    if b.is_scalar() {
        let y = b.data()[0];
        return a.data().iter().map(|&x| f(x, y)).collect();
    }
    // General case: walk the output with a multi-index, mapping each axis
    // onto the operand (stride 0 where the operand extent is 1).
    let rank = out_shape.len();
    let sa = strides_of(a.shape());
    let sb = strides_of(b.shape());
    let mut stride_a = vec![0usize; rank];
    let mut stride_b = vec![0usize; rank];
    for i in 0..rank {
        stride_a[i] = if a.shape()[i] == 1 { 0 } else { sa[i] };
        stride_b[i] = if b.shape()[i] == 1 { 0 } else { sb[i] };
    }
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    let (da, db) = (a.data(), b.data());
    for _ in 0..n {
        out.push(f(da[oa], db[ob]));
        // Odometer increment from the innermost axis outward.
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += stride_a[ax];
            ob += stride_b[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            oa -= stride_a[ax] * out_shape[ax];
            ob -= stride_b[ax] * out_shape[ax];
        }
    }
    out
}

/// Sums `x` down to `target` (axes shrink to extent 1).
pub(crate) fn sum_to(x: &Tensor, target: &[usize]) -> Vec<f64> {
    let n_out: usize = target.iter().product();
    let mut out = vec![0.0f64; n_out];
    let rank = target.len();
    let st = strides_of(target);
    let mut stride_o = vec![0usize; rank];
    for i in 0..rank {
        stride_o[i] = if target[i] == 1 { 0 } else { st[i] };
    }
    let shape = x.shape();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for &v in x.data() {
        out[off] += v;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += stride_o[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
            off -= stride_o[ax] * shape[ax];
        }
    }
    out
}

/// Expands size-1 axes of `x` up to `target`.
pub(crate) fn broadcast_to(x: &Tensor, target: &[usize]) -> Vec<f64> {
    let n: usize = target.iter().product();
    let rank = target.len();
    let sx = strides_of(x.shape());
    let mut stride_x = vec![0usize; rank];
    for i in 0..rank {
        stride_x[i] = if x.shape()[i] == 1 { 0 } else { sx[i] };
    }
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    let data = x.data();
    for _ in 0..n {
        out.push(data[off]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += stride_x[ax];
            if idx[ax] < target[ax] {
                break;
            }
            idx[ax] = 0;
            off -= stride_x[ax] * target[ax];
        }
    }
    out
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let (da, db) = (a.data(), b.data());
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        let arow = &da[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &db[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &Tensor) -> Vec<f64> {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let d = a.data();
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    out
}

/// Convolution, NHWC x (kh,kw,ci,co), stride 1, zero same-padding.
pub(crate) fn conv2d(x: &Tensor, w: &Tensor) -> Vec<f64> {
    let (b, h, wd, ci) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (kh, kw, _, co) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let (dx, dw) = (x.data(), w.data());
    let mut out = vec![0.0f64; b * h * wd * co];
    for bi in 0..b {
        for oy in 0..h {
            for ox in 0..wd {
                let acc = &mut out[((bi * h + oy) * wd + ox) * co..][..co];
                for ky in 0..kh {
                    let iy = oy + ky;
                    if iy < ph || iy - ph >= h {
                        continue;
                    }
                    let iy = iy - ph;
                    for kx in 0..kw {
                        let ix = ox + kx;
                        if ix < pw || ix - pw >= wd {
                            continue;
                        }
                        let ix = ix - pw;
                        let xrow = &dx[((bi * h + iy) * wd + ix) * ci..][..ci];
                        let wbase = (ky * kw + kx) * ci * co;
                        for (c, &xv) in xrow.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let wrow = &dw[wbase + c * co..][..co];
                            for (a, &wv) in acc.iter_mut().zip(wrow.iter()) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of `conv2d` w.r.t. the image, computed as a convolution of the
/// cotangent with the spatially flipped, channel-swapped kernel.
pub(crate) fn conv2d_input_grad(gy: &Tensor, w: &Tensor) -> Vec<f64> {
    let (kh, kw, ci, co) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let dw = w.data();
    let mut flipped = vec![0.0f64; kh * kw * co * ci];
    for ky in 0..kh {
        for kx in 0..kw {
            for c_in in 0..ci {
                for c_out in 0..co {
                    let src = ((ky * kw + kx) * ci + c_in) * co + c_out;
                    let dst = (((kh - 1 - ky) * kw + (kw - 1 - kx)) * co + c_out) * ci + c_in;
                    flipped[dst] = dw[src];
                }
            }
        }
    }
    let wt = Tensor::new(&[kh, kw, co, ci], flipped).expect("finite kernel stays finite");
    conv2d(gy, &wt)
}

/// Adjoint of `conv2d` w.r.t. the kernel.
pub(crate) fn conv2d_weight_grad(x: &Tensor, gy: &Tensor, kh: usize, kw: usize) -> Vec<f64> {
    let (b, h, wd, ci) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let co = gy.shape()[3];
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let (dx, dg) = (x.data(), gy.data());
    let mut out = vec![0.0f64; kh * kw * ci * co];
    for ky in 0..kh {
        for kx in 0..kw {
            let wbase = (ky * kw + kx) * ci * co;
            for bi in 0..b {
                for oy in 0..h {
                    let iy = oy + ky;
                    if iy < ph || iy - ph >= h {
                        continue;
                    }
                    let iy = iy - ph;
                    for ox in 0..wd {
                        let ix = ox + kx;
                        if ix < pw || ix - pw >= wd {
                            continue;
                        }
                        let ix = ix - pw;
                        let xrow = &dx[((bi * h + iy) * wd + ix) * ci..][..ci];
                        let grow = &dg[((bi * h + oy) * wd + ox) * co..][..co];
                        for (c, &xv) in xrow.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let acc = &mut out[wbase + c * co..][..co];
                            for (a, &gv) in acc.iter_mut().zip(grow.iter()) {
                                *a += xv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Row-major argmax offsets of each ceil-mode 2x2 window. Ties keep the
/// first maximal element encountered.
fn pool_argmax(x: &Tensor) -> Vec<usize> {
    let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let d = x.data();
    let mut arg = Vec::with_capacity(b * oh * ow * c);
    for bi in 0..b {
        for oy in 0..oh {
            let ys = 2 * oy;
            let ye = (ys + 2).min(h);
            for ox in 0..ow {
                let xs = 2 * ox;
                let xe = (xs + 2).min(w);
                for ch in 0..c {
                    let mut best = ((bi * h + ys) * w + xs) * c + ch;
                    let mut best_v = d[best];
                    for y in ys..ye {
                        for xw in xs..xe {
                            let off = ((bi * h + y) * w + xw) * c + ch;
                            if d[off] > best_v {
                                best_v = d[off];
                                best = off;
                            }
                        }
                    }
                    arg.push(best);
                }
            }
        }
    }
    arg
}

pub(crate) fn max_pool2(x: &Tensor) -> Vec<f64> {
    let d = x.data();
    pool_argmax(x).into_iter().map(|off| d[off]).collect()
}

/// Scatter pooled-space values `g` back to the argmax positions of `x`.
pub(crate) fn max_pool_vjp(x: &Tensor, g: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0f64; x.len()];
    for (slot, off) in pool_argmax(x).into_iter().enumerate() {
        out[off] += g.data()[slot];
    }
    out
}

/// Gather values of `z` at the argmax positions of `x`.
pub(crate) fn max_pool_sel(x: &Tensor, z: &Tensor) -> Vec<f64> {
    let d = z.data();
    pool_argmax(x).into_iter().map(|off| d[off]).collect()
}

pub(crate) fn softmax(x: &Tensor) -> Vec<f64> {
    let n = *x.shape().last().expect("softmax input has rank >= 1");
    let d = x.data();
    let mut out = Vec::with_capacity(d.len());
    for row in d.chunks(n.max(1)) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
        let s: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / s));
    }
    out
}

/// Per-row cross-entropy between softmax(logits) and target rows, using a
/// max-shifted log-sum-exp.
pub(crate) fn softmax_cross_entropy(logits: &Tensor, targets: &Tensor) -> Vec<f64> {
    let n = logits.shape()[1];
    let (dl, dt) = (logits.data(), targets.data());
    let mut out = Vec::with_capacity(logits.shape()[0]);
    for (lrow, trow) in dl.chunks(n).zip(dt.chunks(n)) {
        let m = lrow.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let lse = m + lrow.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        let dot: f64 = lrow.iter().zip(trow.iter()).map(|(&l, &t)| l * t).sum();
        let tsum: f64 = trow.iter().sum();
        out.push(lse * tsum - dot);
    }
    out
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize, out_shape: &[usize]) -> Vec<f64> {
    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let total_axis = out_shape[axis];
    let mut out = vec![0.0f64; outer * total_axis * inner];
    let mut offset = 0usize;
    for p in parts {
        let pa = p.shape()[axis];
        let d = p.data();
        for o in 0..outer {
            let src = &d[o * pa * inner..(o + 1) * pa * inner];
            let dst = &mut out[(o * total_axis + offset) * inner..][..pa * inner];
            dst.copy_from_slice(src);
        }
        offset += pa;
    }
    out
}

pub(crate) fn slice(x: &Tensor, axis: usize, start: usize, len: usize) -> Vec<f64> {
    let s = x.shape();
    let outer: usize = s[..axis].iter().product();
    let inner: usize = s[axis + 1..].iter().product();
    let d = x.data();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * s[axis] + start) * inner;
        out.extend_from_slice(&d[base..base + len * inner]);
    }
    out
}

pub(crate) fn pad(x: &Tensor, axis: usize, before: usize, out_shape: &[usize]) -> Vec<f64> {
    let s = x.shape();
    let outer: usize = s[..axis].iter().product();
    let inner: usize = s[axis + 1..].iter().product();
    let mut out = vec![0.0f64; out_shape.iter().product()];
    let d = x.data();
    for o in 0..outer {
        let src = &d[o * s[axis] * inner..(o + 1) * s[axis] * inner];
        let dst = &mut out[(o * out_shape[axis] + before) * inner..][..s[axis] * inner];
        dst.copy_from_slice(src);
    }
    out
}

pub(crate) fn upsample2(x: &Tensor) -> Vec<f64> {
    let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let d = x.data();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0f64; b * oh * ow * c];
    for bi in 0..b {
        for y in 0..oh {
            for xw in 0..ow {
                let src = ((bi * h + y / 2) * w + xw / 2) * c;
                let dst = ((bi * oh + y) * ow + xw) * c;
                out[dst..dst + c].copy_from_slice(&d[src..src + c]);
            }
        }
    }
    out
}

pub(crate) fn sum_pool2(x: &Tensor) -> Vec<f64> {
    let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h / 2, w / 2);
    let d = x.data();
    let mut out = vec![0.0f64; b * oh * ow * c];
    for bi in 0..b {
        for y in 0..h {
            for xw in 0..w {
                let src = ((bi * h + y) * w + xw) * c;
                let dst = ((bi * oh + y / 2) * ow + xw / 2) * c;
                for ch in 0..c {
                    out[dst + ch] += d[src + ch];
                }
            }
        }
    }
    out
}

/// Per-axis area-resampling weights: for output cell `i`, the contiguous
/// input range it overlaps plus the overlap lengths normalized to sum to 1.
fn area_weights(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = n_in as f64 / n_out as f64;
    let mut rows = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let lo = i as f64 * scale;
        let hi = (i + 1) as f64 * scale;
        let u0 = lo.floor() as usize;
        let u1 = (hi.ceil() as usize).min(n_in);
        let mut weights = Vec::with_capacity(u1 - u0);
        for u in u0..u1 {
            let overlap = (hi.min((u + 1) as f64) - lo.max(u as f64)).max(0.0);
            weights.push(overlap / scale);
        }
        rows.push((u0, weights));
    }
    rows
}

fn resize_rows(
    data: &[f64],
    b: usize,
    h: usize,
    w: usize,
    c: usize,
    rows: &[(usize, Vec<f64>)],
    oh: usize,
    transpose: bool,
) -> Vec<f64> {
    // Resamples the height axis into `oh` output rows. `transpose` applies
    // the weight matrix transposed (for the adjoint), mapping rows onto the
    // weights' input side instead.
    let mut out = vec![0.0f64; b * oh * w * c];
    for bi in 0..b {
        for (i, (start, weights)) in rows.iter().enumerate() {
            for (k, &wt) in weights.iter().enumerate() {
                let u = start + k;
                let (src_y, dst_y) = if transpose { (i, u) } else { (u, i) };
                if src_y >= h || dst_y >= oh {
                    continue;
                }
                let src = ((bi * h + src_y) * w) * c;
                let dst = ((bi * oh + dst_y) * w) * c;
                for off in 0..w * c {
                    out[dst + off] += wt * data[src + off];
                }
            }
        }
    }
    out
}

fn transpose_hw(data: &[f64], b: usize, h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; data.len()];
    for bi in 0..b {
        for y in 0..h {
            for xw in 0..w {
                let src = ((bi * h + y) * w + xw) * c;
                let dst = ((bi * w + xw) * h + y) * c;
                out[dst..dst + c].copy_from_slice(&data[src..src + c]);
            }
        }
    }
    out
}

/// Area resampling (b,h,w,c) -> (b,oh,ow,c), separable across axes.
pub(crate) fn resize_area(x: &Tensor, oh: usize, ow: usize) -> Vec<f64> {
    let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let tmp = resize_rows(x.data(), b, h, w, c, &area_weights(h, oh), oh, false);
    // Resample the width axis by transposing h and w around the row kernel.
    let t = transpose_hw(&tmp, b, oh, w, c);
    let t2 = resize_rows(&t, b, w, oh, c, &area_weights(w, ow), ow, false);
    transpose_hw(&t2, b, ow, oh, c)
}

/// Transposed area resampling: cotangent on (oh,ow) back to (h,w).
pub(crate) fn resize_area_t(g: &Tensor, h: usize, w: usize) -> Vec<f64> {
    let (b, oh, ow, c) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
    let tmp = resize_rows(g.data(), b, oh, ow, c, &area_weights(h, oh), h, true);
    let t = transpose_hw(&tmp, b, h, ow, c);
    let t2 = resize_rows(&t, b, ow, h, c, &area_weights(w, ow), w, true);
    transpose_hw(&t2, b, w, h, c)
}

/// Public numeric helper: area-resizes an NHWC tensor outside any graph.
/// Used to precompute reconstruction targets.
pub fn resize_area_tensor(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    assert_eq!(x.rank(), 4, "resize_area_tensor expects (b,h,w,c)");
    let shape = [x.shape()[0], oh, ow, x.shape()[3]];
    Tensor::new(&shape, resize_area(x, oh, ow)).expect("area average of finite data is finite")
}
