use serde::{Deserialize, Serialize};

use super::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::ReLU => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn grad_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::ReLU => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

/// Geometry shared by convolution and transposed convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
        }
    }

    pub fn with_kernel(mut self, kernel_h: usize, kernel_w: usize) -> Self {
        self.kernel_h = kernel_h;
        self.kernel_w = kernel_w;
        self
    }

    /// Output size of a zero-padded convolution: `floor((in + 2p - k) / s) + 1`.
    pub fn conv_out(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if self.stride == 0 || ph < self.kernel_h || pw < self.kernel_w {
            return None;
        }
        Some((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    /// Output size of a transposed convolution: `(in - 1) * s - 2p + k`.
    pub fn deconv_out(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if self.stride == 0 || h == 0 || w == 0 {
            return None;
        }
        let oh = ((h - 1) * self.stride + self.kernel_h).checked_sub(2 * self.padding)?;
        let ow = ((w - 1) * self.stride + self.kernel_w).checked_sub(2 * self.padding)?;
        (oh >= 1 && ow >= 1).then_some((oh, ow))
    }

    fn patch_len(&self, channels: usize) -> usize {
        channels * self.kernel_h * self.kernel_w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    /// Weight `[out_ch, in_ch, kh, kw]`, bias `[out_ch]`.
    Conv(ConvGeometry),
    /// Weight `[in_ch, out_ch, kh, kw]`, bias `[out_ch]`.
    Deconv(ConvGeometry),
    /// Weight `[out_dim, in_dim]`, bias `[out_dim]`. Flattens its input.
    Dense { in_dim: usize, out_dim: usize },
    /// Parameter-free reshape of a flat vector into `[channels, height, width]`.
    Unflatten {
        channels: usize,
        height: usize,
        width: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(geom: ConvGeometry, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv(geom),
            activation,
        }
    }

    pub fn deconv(geom: ConvGeometry, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Deconv(geom),
            activation,
        }
    }

    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Dense { in_dim, out_dim },
            activation,
        }
    }

    pub fn unflatten(channels: usize, height: usize, width: usize) -> Self {
        Self {
            kind: LayerKind::Unflatten {
                channels,
                height,
                width,
            },
            activation: Activation::Identity,
        }
    }

    /// Weight and bias shapes, or `None` for parameter-free layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match self.kind {
            LayerKind::Conv(g) => Some((
                vec![g.out_ch, g.in_ch, g.kernel_h, g.kernel_w],
                vec![g.out_ch],
            )),
            LayerKind::Deconv(g) => Some((
                vec![g.in_ch, g.out_ch, g.kernel_h, g.kernel_w],
                vec![g.out_ch],
            )),
            LayerKind::Dense { in_dim, out_dim } => Some((vec![out_dim, in_dim], vec![out_dim])),
            LayerKind::Unflatten { .. } => None,
        }
    }

    /// `(fan_in, fan_out)` used by the initializers.
    pub fn fans(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Conv(g) | LayerKind::Deconv(g) => {
                (g.patch_len(g.in_ch), g.patch_len(g.out_ch))
            }
            LayerKind::Dense { in_dim, out_dim } => (in_dim, out_dim),
            LayerKind::Unflatten { .. } => (0, 0),
        }
    }
}

/// Unfolds one `[c, h, w]` image into a `[c*kh*kw, oh*ow]` patch matrix.
pub(crate) fn im2col<T: Real>(
    img: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: &ConvGeometry,
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    let p = oh * ow;
    let pad = g.padding as isize;
    let s = g.stride as isize;
    for ch in 0..c {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (ch * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let y = oy as isize * s - pad + ki as isize;
                    let dst_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if y < 0 || y >= h as isize {
                        dst_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &img[(ch * h + y as usize) * w..(ch * h + y as usize + 1) * w];
                    for (ox, v) in dst_row.iter_mut().enumerate() {
                        let x = ox as isize * s - pad + kj as isize;
                        *v = if x < 0 || x >= w as isize {
                            T::zero()
                        } else {
                            src[x as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds patch columns back into an image.
pub(crate) fn col2im<T: Real>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: &ConvGeometry,
    oh: usize,
    ow: usize,
    img: &mut [T],
) {
    img.iter_mut().for_each(|v| *v = T::zero());
    let p = oh * ow;
    let pad = g.padding as isize;
    let s = g.stride as isize;
    for ch in 0..c {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (ch * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let y = oy as isize * s - pad + ki as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let base = (ch * h + y as usize) * w;
                    for ox in 0..ow {
                        let x = ox as isize * s - pad + kj as isize;
                        if x >= 0 && x < w as isize {
                            img[base + x as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvDims {
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

/// Forward convolution of a batch; `out` is `[n, out_ch, oh, ow]`.
pub(crate) fn conv_forward<T: Real>(
    input: &[T],
    n: usize,
    g: &ConvGeometry,
    d: &ConvDims,
    weight: &[T],
    bias: &[T],
    out: &mut [T],
    scratch: &mut Vec<T>,
) {
    let k = g.patch_len(g.in_ch);
    let p = d.oh * d.ow;
    scratch.resize(k * p, T::zero());
    let in_len = g.in_ch * d.h * d.w;
    let out_len = g.out_ch * p;
    for i in 0..n {
        im2col(
            &input[i * in_len..(i + 1) * in_len],
            g.in_ch,
            d.h,
            d.w,
            g,
            d.oh,
            d.ow,
            scratch,
        );
        let o = &mut out[i * out_len..(i + 1) * out_len];
        for (ch, row) in o.chunks_mut(p).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[ch]);
        }
        T::gemm(
            g.out_ch,
            k,
            p,
            T::one(),
            weight,
            k as isize,
            1,
            scratch,
            p as isize,
            1,
            T::one(),
            o,
            p as isize,
            1,
        );
    }
}

/// Backward convolution. Accumulates into `dweight`/`dbias`; writes `dinput` if given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    input: &[T],
    n: usize,
    g: &ConvGeometry,
    d: &ConvDims,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut dinput: Option<&mut [T]>,
    scratch: &mut Vec<T>,
    dcols: &mut Vec<T>,
) {
    let k = g.patch_len(g.in_ch);
    let p = d.oh * d.ow;
    scratch.resize(k * p, T::zero());
    let in_len = g.in_ch * d.h * d.w;
    let out_len = g.out_ch * p;
    for i in 0..n {
        let x = &input[i * in_len..(i + 1) * in_len];
        let dy = &dout[i * out_len..(i + 1) * out_len];
        im2col(x, g.in_ch, d.h, d.w, g, d.oh, d.ow, scratch);
        // dW[out, k] += dY[out, p] * cols^T[p, k]
        T::gemm(
            g.out_ch,
            p,
            k,
            T::one(),
            dy,
            p as isize,
            1,
            scratch,
            1,
            p as isize,
            T::one(),
            dweight,
            k as isize,
            1,
        );
        for (ch, row) in dy.chunks(p).enumerate() {
            let mut acc = T::zero();
            for &v in row {
                acc += v;
            }
            dbias[ch] += acc;
        }
        if let Some(dx) = dinput.as_deref_mut() {
            dcols.resize(k * p, T::zero());
            // dcols[k, p] = W^T[k, out] * dY[out, p]
            T::gemm(
                k,
                g.out_ch,
                p,
                T::one(),
                weight,
                1,
                k as isize,
                dy,
                p as isize,
                1,
                T::zero(),
                dcols,
                p as isize,
                1,
            );
            col2im(
                dcols,
                g.in_ch,
                d.h,
                d.w,
                g,
                d.oh,
                d.ow,
                &mut dx[i * in_len..(i + 1) * in_len],
            );
        }
    }
}

/// Forward transposed convolution; `d.h, d.w` are input dims, `d.oh, d.ow` output dims.
pub(crate) fn deconv_forward<T: Real>(
    input: &[T],
    n: usize,
    g: &ConvGeometry,
    d: &ConvDims,
    weight: &[T],
    bias: &[T],
    out: &mut [T],
    scratch: &mut Vec<T>,
) {
    let k = g.patch_len(g.out_ch);
    let p = d.h * d.w;
    scratch.resize(k * p, T::zero());
    let in_len = g.in_ch * p;
    let out_plane = d.oh * d.ow;
    let out_len = g.out_ch * out_plane;
    for i in 0..n {
        let x = &input[i * in_len..(i + 1) * in_len];
        // cols[k, p] = W^T[k, in] * X[in, p]
        T::gemm(
            k,
            g.in_ch,
            p,
            T::one(),
            weight,
            1,
            k as isize,
            x,
            p as isize,
            1,
            T::zero(),
            scratch,
            p as isize,
            1,
        );
        let o = &mut out[i * out_len..(i + 1) * out_len];
        col2im(scratch, g.out_ch, d.oh, d.ow, g, d.h, d.w, o);
        for (ch, plane) in o.chunks_mut(out_plane).enumerate() {
            plane.iter_mut().for_each(|v| *v += bias[ch]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn deconv_backward<T: Real>(
    input: &[T],
    n: usize,
    g: &ConvGeometry,
    d: &ConvDims,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut dinput: Option<&mut [T]>,
    scratch: &mut Vec<T>,
) {
    let k = g.patch_len(g.out_ch);
    let p = d.h * d.w;
    scratch.resize(k * p, T::zero());
    let in_len = g.in_ch * p;
    let out_plane = d.oh * d.ow;
    let out_len = g.out_ch * out_plane;
    for i in 0..n {
        let x = &input[i * in_len..(i + 1) * in_len];
        let dy = &dout[i * out_len..(i + 1) * out_len];
        im2col(dy, g.out_ch, d.oh, d.ow, g, d.h, d.w, scratch);
        // dW[in, k] += X[in, p] * dcols^T[p, k]
        T::gemm(
            g.in_ch,
            p,
            k,
            T::one(),
            x,
            p as isize,
            1,
            scratch,
            1,
            p as isize,
            T::one(),
            dweight,
            k as isize,
            1,
        );
        for (ch, plane) in dy.chunks(out_plane).enumerate() {
            let mut acc = T::zero();
            for &v in plane {
                acc += v;
            }
            dbias[ch] += acc;
        }
        if let Some(dx) = dinput.as_deref_mut() {
            // dX[in, p] = W[in, k] * dcols[k, p]
            T::gemm(
                g.in_ch,
                k,
                p,
                T::one(),
                weight,
                k as isize,
                1,
                scratch,
                p as isize,
                1,
                T::zero(),
                &mut dx[i * in_len..(i + 1) * in_len],
                p as isize,
                1,
            );
        }
    }
}

/// `out[n, out_dim] = input[n, in_dim] * W^T + b`
pub(crate) fn dense_forward<T: Real>(
    input: &[T],
    n: usize,
    in_dim: usize,
    out_dim: usize,
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    for row in out.chunks_mut(out_dim) {
        row.copy_from_slice(bias);
    }
    T::gemm(
        n,
        in_dim,
        out_dim,
        T::one(),
        input,
        in_dim as isize,
        1,
        weight,
        1,
        in_dim as isize,
        T::one(),
        out,
        out_dim as isize,
        1,
    );
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Real>(
    input: &[T],
    n: usize,
    in_dim: usize,
    out_dim: usize,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dinput: Option<&mut [T]>,
) {
    // dW[out, in] += dY^T[out, n] * X[n, in]
    T::gemm(
        out_dim,
        n,
        in_dim,
        T::one(),
        dout,
        1,
        out_dim as isize,
        input,
        in_dim as isize,
        1,
        T::one(),
        dweight,
        in_dim as isize,
        1,
    );
    for row in dout.chunks(out_dim) {
        for (b, &g) in dbias.iter_mut().zip(row) {
            *b += g;
        }
    }
    if let Some(dx) = dinput {
        // dX[n, in] = dY[n, out] * W[out, in]
        T::gemm(
            n,
            out_dim,
            in_dim,
            T::one(),
            dout,
            out_dim as isize,
            1,
            weight,
            in_dim as isize,
            1,
            T::zero(),
            dx,
            in_dim as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_dims_follow_floor_rule() {
        let g = ConvGeometry::new(3, 32, 8, 4, 0);
        assert_eq!(g.conv_out(48, 64), Some((11, 15)));
        let g = ConvGeometry::new(1, 1, 3, 2, 1);
        assert_eq!(g.conv_out(5, 5), Some((3, 3)));
        assert_eq!(ConvGeometry::new(1, 1, 6, 1, 0).conv_out(5, 5), None);
        let d = ConvGeometry::new(32, 3, 6, 2, 0);
        assert_eq!(d.deconv_out(22, 30), Some((48, 64)));
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for arbitrary x, y.
        let g = ConvGeometry::new(2, 1, 3, 2, 1);
        let (h, w) = (5, 4);
        let (oh, ow) = g.conv_out(h, w).unwrap();
        let k = 2 * 9;
        let x: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..k * oh * ow).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; k * oh * ow];
        im2col(&x, 2, h, w, &g, oh, ow, &mut cols);
        let mut back = vec![0.0; 2 * h * w];
        col2im(&y, 2, h, w, &g, oh, ow, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn relu_grad_zero_below_zero() {
        let a = Activation::ReLU;
        assert_eq!(a.apply(-2.0f32), 0.0);
        assert_eq!(a.grad_from_output(a.apply(-2.0f32)), 0.0);
        assert_eq!(a.grad_from_output(a.apply(2.0f32)), 1.0);
    }
}
