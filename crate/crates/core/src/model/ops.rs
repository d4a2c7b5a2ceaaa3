//! Forward and backward kernels for single-sample `[C, D, H, W]` tensors.
//!
//! Convolutions go through im2col and `sgemm`; everything is
//! single-threaded so results are bit-reproducible.

use crate::volume::{voxel_count, Dims};

/// Channel-major feature map for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub dims: Dims,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, dims: Dims) -> Self {
        Tensor {
            channels,
            dims,
            data: vec![0.0; channels * voxel_count(dims)],
        }
    }

    pub fn from_data(channels: usize, dims: Dims, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * voxel_count(dims));
        Tensor { channels, dims, data }
    }

    #[inline]
    pub fn spatial(&self) -> usize {
        voxel_count(self.dims)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.spatial();
        &self.data[c * n..(c + 1) * n]
    }
}

/// Budget for one im2col slab, in floats.
const COL_BUDGET: usize = 1 << 21;

#[inline]
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the asserted index bounds cover every element sgemm touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

fn slab_depth(channels: usize, dims: Dims) -> usize {
    let per_slice = channels * 27 * dims[1] * dims[2];
    (COL_BUDGET / per_slice.max(1)).clamp(1, dims[0])
}

/// Columns for output slices `z0..z1` of a 3x3x3, padding-1 convolution.
fn im2col(x: &Tensor, z0: usize, z1: usize, col: &mut [f32]) {
    let [d, h, w] = x.dims;
    let plane = h * w;
    let n = (z1 - z0) * plane;
    for ci in 0..x.channels {
        let src = x.channel(ci);
        for kz in 0..3 {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = ci * 27 + kz * 9 + ky * 3 + kx;
                    let dst_row = &mut col[row * n..(row + 1) * n];
                    for z in z0..z1 {
                        let sz = z + kz;
                        for y in 0..h {
                            let sy = y + ky;
                            let dst = &mut dst_row[((z - z0) * h + y) * w..][..w];
                            if sz == 0 || sz > d || sy == 0 || sy > h {
                                dst.fill(0.0);
                                continue;
                            }
                            let s = &src[(sz - 1) * plane + (sy - 1) * w..][..w];
                            match kx {
                                0 => {
                                    dst[0] = 0.0;
                                    dst[1..].copy_from_slice(&s[..w - 1]);
                                }
                                1 => dst.copy_from_slice(s),
                                _ => {
                                    dst[..w - 1].copy_from_slice(&s[1..]);
                                    dst[w - 1] = 0.0;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into `dx`.
fn col2im(col: &[f32], z0: usize, z1: usize, dx: &mut Tensor) {
    let [d, h, w] = dx.dims;
    let plane = h * w;
    let n = (z1 - z0) * plane;
    let spatial = d * plane;
    for ci in 0..dx.channels {
        let dst_ch = &mut dx.data[ci * spatial..(ci + 1) * spatial];
        for kz in 0..3 {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = ci * 27 + kz * 9 + ky * 3 + kx;
                    let src_row = &col[row * n..(row + 1) * n];
                    for z in z0..z1 {
                        let sz = z + kz;
                        if sz == 0 || sz > d {
                            continue;
                        }
                        for y in 0..h {
                            let sy = y + ky;
                            if sy == 0 || sy > h {
                                continue;
                            }
                            let s = &src_row[((z - z0) * h + y) * w..][..w];
                            let t = &mut dst_ch[(sz - 1) * plane + (sy - 1) * w..][..w];
                            match kx {
                                0 => t[..w - 1].iter_mut().zip(&s[1..]).for_each(|(a, b)| *a += b),
                                1 => t.iter_mut().zip(s).for_each(|(a, b)| *a += b),
                                _ => t[1..].iter_mut().zip(&s[..w - 1]).for_each(|(a, b)| *a += b),
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cubic convolution with kernel 3 (padding 1) or 1, stride 1.
/// Weights are `[cout, cin, k, k, k]`.
pub fn conv3d_forward(x: &Tensor, weight: &[f32], bias: Option<&[f32]>, cout: usize, k: usize) -> Tensor {
    let cin = x.channels;
    let n_all = x.spatial();
    let mut out = Tensor::zeros(cout, x.dims);
    match k {
        1 => {
            debug_assert_eq!(weight.len(), cout * cin);
            gemm(cout, cin, n_all, weight, cin, 1, &x.data, n_all, 1, 0.0, &mut out.data, n_all);
        }
        3 => {
            let kk = cin * 27;
            debug_assert_eq!(weight.len(), cout * kk);
            let plane = x.dims[1] * x.dims[2];
            let zs = slab_depth(cin, x.dims);
            let mut col = vec![0.0f32; kk * zs * plane];
            let mut z0 = 0;
            while z0 < x.dims[0] {
                let z1 = (z0 + zs).min(x.dims[0]);
                let n = (z1 - z0) * plane;
                im2col(x, z0, z1, &mut col[..kk * n]);
                gemm(cout, kk, n, weight, kk, 1, &col[..kk * n], n, 1, 0.0, &mut out.data[z0 * plane..], n_all);
                z0 = z1;
            }
        }
        _ => unreachable!("unsupported kernel size {k}"),
    }
    if let Some(b) = bias {
        for (co, &bv) in b.iter().enumerate() {
            out.data[co * n_all..(co + 1) * n_all].iter_mut().for_each(|v| *v += bv);
        }
    }
    out
}

/// Accumulates weight (and bias) gradients; returns the input gradient when asked.
pub fn conv3d_backward(
    x: &Tensor,
    weight: &[f32],
    dy: &Tensor,
    k: usize,
    dweight: &mut [f32],
    dbias: Option<&mut [f32]>,
    need_dx: bool,
) -> Option<Tensor> {
    let cin = x.channels;
    let cout = dy.channels;
    let n_all = x.spatial();
    if let Some(db) = dbias {
        for (co, g) in db.iter_mut().enumerate() {
            *g += dy.channel(co).iter().map(|&v| v as f64).sum::<f64>() as f32;
        }
    }
    match k {
        1 => {
            gemm(cout, n_all, cin, &dy.data, n_all, 1, &x.data, 1, n_all, 1.0, dweight, cin);
            need_dx.then(|| {
                let mut dx = Tensor::zeros(cin, x.dims);
                gemm(cin, cout, n_all, weight, 1, cin, &dy.data, n_all, 1, 0.0, &mut dx.data, n_all);
                dx
            })
        }
        3 => {
            let kk = cin * 27;
            let plane = x.dims[1] * x.dims[2];
            let zs = slab_depth(cin, x.dims);
            let mut col = vec![0.0f32; kk * zs * plane];
            let mut dcol = if need_dx { vec![0.0f32; kk * zs * plane] } else { Vec::new() };
            let mut dx = need_dx.then(|| Tensor::zeros(cin, x.dims));
            let mut z0 = 0;
            while z0 < x.dims[0] {
                let z1 = (z0 + zs).min(x.dims[0]);
                let n = (z1 - z0) * plane;
                im2col(x, z0, z1, &mut col[..kk * n]);
                let dy_slab = &dy.data[z0 * plane..];
                gemm(cout, n, kk, dy_slab, n_all, 1, &col[..kk * n], 1, n, 1.0, dweight, kk);
                if let Some(dx) = dx.as_mut() {
                    gemm(kk, cout, n, weight, 1, kk, dy_slab, n_all, 1, 0.0, &mut dcol[..kk * n], n);
                    col2im(&dcol[..kk * n], z0, z1, dx);
                }
                z0 = z1;
            }
            dx
        }
        _ => unreachable!("unsupported kernel size {k}"),
    }
}

/// Per-channel normalisation over the spatial extent.
pub struct NormCache {
    pub xhat: Vec<f32>,
    pub inv_std: Vec<f32>,
}

pub const NORM_EPS: f64 = 1e-5;

pub fn instance_norm_forward(x: &Tensor, gamma: &[f32], beta: &[f32]) -> (Tensor, NormCache) {
    let n = x.spatial();
    let mut out = Tensor::zeros(x.channels, x.dims);
    let mut xhat = vec![0.0f32; x.data.len()];
    let mut inv_std = Vec::with_capacity(x.channels);
    for c in 0..x.channels {
        let src = x.channel(c);
        let mean = src.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let var = src.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        inv_std.push(inv as f32);
        let (g, b) = (gamma[c], beta[c]);
        let xh = &mut xhat[c * n..(c + 1) * n];
        let o = &mut out.data[c * n..(c + 1) * n];
        for i in 0..n {
            let v = ((src[i] as f64 - mean) * inv) as f32;
            xh[i] = v;
            o[i] = g * v + b;
        }
    }
    (out, NormCache { xhat, inv_std })
}

pub fn instance_norm_backward(
    dy: &Tensor,
    cache: &NormCache,
    gamma: &[f32],
    dgamma: &mut [f32],
    dbeta: &mut [f32],
) -> Tensor {
    let n = dy.spatial();
    let mut dx = Tensor::zeros(dy.channels, dy.dims);
    for c in 0..dy.channels {
        let g = dy.channel(c);
        let xh = &cache.xhat[c * n..(c + 1) * n];
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for i in 0..n {
            sum_g += g[i] as f64;
            sum_gx += g[i] as f64 * xh[i] as f64;
        }
        dbeta[c] += sum_g as f32;
        dgamma[c] += sum_gx as f32;
        let scale = gamma[c] as f64 * cache.inv_std[c] as f64;
        let mean_g = sum_g / n as f64;
        let mean_gx = sum_gx / n as f64;
        let d = &mut dx.data[c * n..(c + 1) * n];
        for i in 0..n {
            d[i] = (scale * (g[i] as f64 - mean_g - xh[i] as f64 * mean_gx)) as f32;
        }
    }
    dx
}

#[inline]
pub fn leaky_relu(v: f32, slope: f32) -> f32 {
    if v > 0.0 {
        v
    } else {
        v * slope
    }
}

pub fn leaky_relu_inplace(x: &mut Tensor, slope: f32) {
    x.data.iter_mut().for_each(|v| *v = leaky_relu(*v, slope));
}

/// Uses the activation output: its sign matches the pre-activation.
pub fn leaky_relu_backward_inplace(dy: &mut Tensor, y: &Tensor, slope: f32) {
    dy.data.iter_mut().zip(&y.data).for_each(|(g, &v)| {
        if v <= 0.0 {
            *g *= slope
        }
    });
}

/// 2x2x2 max-pooling; returns the flat source index of each maximum.
pub fn maxpool2_forward(x: &Tensor) -> (Tensor, Vec<u32>) {
    let [d, h, w] = x.dims;
    let od = [d / 2, h / 2, w / 2];
    let mut out = Tensor::zeros(x.channels, od);
    let mut arg = vec![0u32; out.data.len()];
    let n_in = x.spatial();
    let mut o = 0;
    for c in 0..x.channels {
        let base = c * n_in;
        for z in 0..od[0] {
            for y in 0..od[1] {
                for xx in 0..od[2] {
                    let mut best = base + ((2 * z) * h + 2 * y) * w + 2 * xx;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = base + ((2 * z + dz) * h + 2 * y + dy) * w + 2 * xx + dx;
                                if x.data[i] > x.data[best] {
                                    best = i;
                                }
                            }
                        }
                    }
                    out.data[o] = x.data[best];
                    arg[o] = best as u32;
                    o += 1;
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward(dy: &Tensor, arg: &[u32], input_dims: Dims) -> Tensor {
    let mut dx = Tensor::zeros(dy.channels, input_dims);
    for (g, &i) in dy.data.iter().zip(arg) {
        dx.data[i as usize] += g;
    }
    dx
}

/// Transposed convolution with kernel 2 and stride 2.
/// Weights are `[cin, cout, 2, 2, 2]`.
pub fn upconv2_forward(x: &Tensor, weight: &[f32], bias: &[f32], cout: usize) -> Tensor {
    let cin = x.channels;
    let n = x.spatial();
    let rows = cout * 8;
    let mut z = vec![0.0f32; rows * n];
    gemm(rows, cin, n, weight, 1, rows, &x.data, n, 1, 0.0, &mut z, n);
    let [d, h, w] = x.dims;
    let od = [2 * d, 2 * h, 2 * w];
    let mut out = Tensor::zeros(cout, od);
    let n_out = out.spatial();
    for co in 0..cout {
        for kk in 0..8 {
            let (a, b, c) = (kk / 4, (kk / 2) % 2, kk % 2);
            let src = &z[(co * 8 + kk) * n..][..n];
            let dst = &mut out.data[co * n_out..(co + 1) * n_out];
            let mut i = 0;
            for zz in 0..d {
                for y in 0..h {
                    let row = ((2 * zz + a) * od[1] + 2 * y + b) * od[2] + c;
                    for xx in 0..w {
                        dst[row + 2 * xx] = src[i] + bias[co];
                        i += 1;
                    }
                }
            }
        }
    }
    out
}

pub fn upconv2_backward(
    x: &Tensor,
    weight: &[f32],
    dy: &Tensor,
    dweight: &mut [f32],
    dbias: &mut [f32],
) -> Tensor {
    let cin = x.channels;
    let cout = dy.channels;
    let n = x.spatial();
    let rows = cout * 8;
    let [d, h, w] = x.dims;
    let od = dy.dims;
    let n_out = dy.spatial();
    let mut dz = vec![0.0f32; rows * n];
    for co in 0..cout {
        dbias[co] += dy.channel(co).iter().map(|&v| v as f64).sum::<f64>() as f32;
        for kk in 0..8 {
            let (a, b, c) = (kk / 4, (kk / 2) % 2, kk % 2);
            let dst = &mut dz[(co * 8 + kk) * n..][..n];
            let src = &dy.data[co * n_out..(co + 1) * n_out];
            let mut i = 0;
            for zz in 0..d {
                for y in 0..h {
                    let row = ((2 * zz + a) * od[1] + 2 * y + b) * od[2] + c;
                    for xx in 0..w {
                        dst[i] = src[row + 2 * xx];
                        i += 1;
                    }
                }
            }
        }
    }
    gemm(cin, n, rows, &x.data, n, 1, &dz, 1, n, 1.0, dweight, rows);
    let mut dx = Tensor::zeros(cin, x.dims);
    gemm(cin, rows, n, weight, rows, 1, &dz, n, 1, 0.0, &mut dx.data, n);
    dx
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.dims, b.dims);
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::from_data(a.channels + b.channels, a.dims, data)
}

pub fn split_channels(t: &Tensor, first: usize) -> (Tensor, Tensor) {
    let n = t.spatial();
    let (a, b) = t.data.split_at(first * n);
    (
        Tensor::from_data(first, t.dims, a.to_vec()),
        Tensor::from_data(t.channels - first, t.dims, b.to_vec()),
    )
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}
