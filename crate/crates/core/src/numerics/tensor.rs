use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major tensor.
///
/// Image batches use NCHW order; convolution kernels use OIKK.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor values".into()));
        }
        Ok(Self { dims, values })
    }

    /// Builds a tensor whose length is known to match `dims`.
    pub(crate) fn from_parts(dims: Vec<usize>, values: Vec<T>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), values.len());
        Self { dims, values }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self::from_parts(dims.to_vec(), vec![T::zero(); n])
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        let n = dims.iter().product();
        Self::from_parts(dims.to_vec(), vec![value; n])
    }

    pub fn scalar(value: T) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.dims.clone(),
            self.values.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        )
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        if dims.iter().product::<usize>() != self.numel() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {dims:?}", self.dims)));
        }
        Ok(Self::from_parts(dims.to_vec(), self.values.clone()))
    }

    /// Sum with 64-bit accumulation.
    pub fn sum(&self) -> f64 {
        self.values.iter().map(|v| v.as_f64()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.numel().max(1) as f64
    }

    fn nchw(&self, what: &str) -> Result<[usize; 4]> {
        match self.dims[..] {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::Shape(format!("{what} must be rank 4 (NCHW), got {:?}", self.dims))),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_broadcast(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_broadcast(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_broadcast(other, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        let out = self.zip_broadcast(other, "div", |a, b| a / b)?;
        out.require_finite("div")
    }

    pub fn exp(&self) -> Result<Self> {
        self.map(|v| v.exp()).require_finite("exp")
    }

    pub fn log(&self) -> Result<Self> {
        if let Some(v) = self.values.iter().find(|v| **v <= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "log of nonpositive value {}",
                v.as_f64()
            )));
        }
        Ok(self.map(|v| v.ln()))
    }

    pub fn softplus(&self) -> Self {
        self.map(softplus)
    }

    pub fn leaky_relu(&self, slope: T) -> Self {
        self.map(|v| if v > T::zero() { v } else { v * slope })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(self.dims.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    fn require_finite(self, op: &str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op.into()))
        }
    }

    fn zip_broadcast(&self, other: &Self, op: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims == other.dims {
            let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
            Ok(Self::from_parts(self.dims.clone(), values))
        } else if other.numel() == 1 {
            let b = other.values[0];
            Ok(self.map(|a| f(a, b)))
        } else if self.numel() == 1 {
            let a = self.values[0];
            Ok(other.map(|b| f(a, b)))
        } else {
            Err(Error::Shape(format!("{op}: {:?} vs {:?}", self.dims, other.dims)))
        }
    }

    /// Same-padding, stride-1 cross-correlation with zero fill.
    pub fn conv2d(&self, kernel: &Self, bias: &Self) -> Result<Self> {
        Ok(conv2d_forward(self, kernel, bias)?.0)
    }

    /// Depth-to-space: `N x (C r^2) x H x W` to `N x C x rH x rW`.
    pub fn pixel_shuffle(&self, r: usize) -> Result<Self> {
        let [n, cr2, h, w] = self.nchw("pixel_shuffle input")?;
        if r == 0 || cr2 % (r * r) != 0 {
            return Err(Error::Shape(format!(
                "pixel_shuffle: {cr2} channels not divisible by r^2 = {}",
                r * r
            )));
        }
        let c = cr2 / (r * r);
        let mut out = vec![T::zero(); self.numel()];
        let (oh, ow) = (h * r, w * r);
        for b in 0..n {
            for ch in 0..c {
                for i in 0..r {
                    for j in 0..r {
                        let src_c = ch * r * r + i * r + j;
                        let src = &self.values[((b * cr2 + src_c) * h) * w..][..h * w];
                        let dst = &mut out[((b * c + ch) * oh) * ow..][..oh * ow];
                        for y in 0..h {
                            for x in 0..w {
                                dst[(y * r + i) * ow + x * r + j] = src[y * w + x];
                            }
                        }
                    }
                }
            }
        }
        Ok(Self::from_parts(vec![n, c, oh, ow], out))
    }

    /// Nearest-neighbour upsampling of an NCHW tensor by `r`.
    pub fn upsample_nearest(&self, r: usize) -> Result<Self> {
        let [n, c, h, w] = self.nchw("upsample_nearest")?;
        if r == 0 {
            return Err(Error::Shape("upsample factor must be positive".into()));
        }
        let (oh, ow) = (h * r, w * r);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in self.values.chunks_exact(h * w) {
            for y in 0..oh {
                let row = &plane[(y / r) * w..][..w];
                for x in 0..ow {
                    out.push(row[x / r]);
                }
            }
        }
        Ok(Self::from_parts(vec![n, c, oh, ow], out))
    }

    /// Space-to-depth, the inverse of [`Tensor::pixel_shuffle`].
    pub fn pixel_unshuffle(&self, r: usize) -> Result<Self> {
        let [n, c, oh, ow] = self.nchw("pixel_unshuffle input")?;
        if r == 0 || oh % r != 0 || ow % r != 0 {
            return Err(Error::Shape(format!(
                "pixel_unshuffle: {oh}x{ow} not divisible by {r}"
            )));
        }
        let (h, w) = (oh / r, ow / r);
        let cr2 = c * r * r;
        let mut out = vec![T::zero(); self.numel()];
        for b in 0..n {
            for ch in 0..c {
                let src = &self.values[((b * c + ch) * oh) * ow..][..oh * ow];
                for i in 0..r {
                    for j in 0..r {
                        let dst_c = ch * r * r + i * r + j;
                        let dst = &mut out[((b * cr2 + dst_c) * h) * w..][..h * w];
                        for y in 0..h {
                            for x in 0..w {
                                dst[y * w + x] = src[(y * r + i) * ow + x * r + j];
                            }
                        }
                    }
                }
            }
        }
        Ok(Self::from_parts(vec![n, cr2, h, w], out))
    }

    /// Mean over the channel axis: `N x C x H x W` to `N x 1 x H x W`.
    pub fn mean_channels(&self) -> Result<Self> {
        let [n, c, h, w] = self.nchw("mean_channels input")?;
        let plane = h * w;
        let mut out = vec![T::zero(); n * plane];
        let inv = T::of_f64(1.0 / c as f64);
        for b in 0..n {
            for p in 0..plane {
                let mut acc = 0.0f64;
                for ch in 0..c {
                    acc += self.values[(b * c + ch) * plane + p].as_f64();
                }
                out[b * plane + p] = T::of_f64(acc) * inv;
            }
        }
        Ok(Self::from_parts(vec![n, 1, h, w], out))
    }
}

/// `log(1 + e^x)` without overflow for large `x`.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) struct ConvGeometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
}

impl ConvGeometry {
    pub fn patch(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

pub(crate) fn conv_geometry<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<ConvGeometry> {
    let [n, c, h, w] = input.nchw("conv2d input")?;
    let [o, kc, kh, kw] = kernel.nchw("conv2d kernel")?;
    if kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!("conv2d kernel must be square with odd size, got {kh}x{kw}")));
    }
    if kc != c {
        return Err(Error::Shape(format!("conv2d channel mismatch: input {c}, kernel {kc}")));
    }
    if bias.dims() != [o] {
        return Err(Error::Shape(format!("conv2d bias {:?} for {o} output channels", bias.dims())));
    }
    Ok(ConvGeometry { n, c, h, w, o, k: kh })
}

/// Unrolls one `C x H x W` image into a `(C K K) x (H W)` patch matrix.
fn im2col<T: Scalar>(src: &[T], g: &ConvGeometry, cols: &mut [T]) {
    let (h, w, k) = (g.h as isize, g.w as isize, g.k);
    let r = (k / 2) as isize;
    let plane = g.plane();
    for ch in 0..g.c {
        let img = &src[ch * plane..][..plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * plane..][..plane];
                let dy = ky as isize - r;
                let dx = kx as isize - r;
                for y in 0..h {
                    let sy = y + dy;
                    let dst = &mut row[(y * w) as usize..][..w as usize];
                    if sy < 0 || sy >= h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &img[(sy * w) as usize..][..w as usize];
                    for x in 0..w {
                        let sx = x + dx;
                        dst[x as usize] = if sx < 0 || sx >= w { T::zero() } else { src_row[sx as usize] };
                    }
                }
            }
        }
    }
}

/// Scatters a patch-matrix gradient back onto a `C x H x W` image gradient.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry, dst: &mut [T]) {
    let (h, w, k) = (g.h as isize, g.w as isize, g.k);
    let r = (k / 2) as isize;
    let plane = g.plane();
    for ch in 0..g.c {
        let img = &mut dst[ch * plane..][..plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * plane..][..plane];
                let dy = ky as isize - r;
                let dx = kx as isize - r;
                for y in 0..h {
                    let sy = y + dy;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x + dx;
                        if sx >= 0 && sx < w {
                            img[(sy * w + sx) as usize] = img[(sy * w + sx) as usize] + row[(y * w + x) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution; also returns the per-image patch matrices for reuse
/// in the backward pass.
pub(crate) fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>)> {
    let g = conv_geometry(input, kernel, bias)?;
    let (patch, plane) = (g.patch(), g.plane());
    let mut cols = vec![T::zero(); g.n * patch * plane];
    let mut out = vec![T::zero(); g.n * g.o * plane];
    for b in 0..g.n {
        let src = &input.values[b * g.c * plane..][..g.c * plane];
        let col = &mut cols[b * patch * plane..][..patch * plane];
        im2col(src, &g, col);
        let dst = &mut out[b * g.o * plane..][..g.o * plane];
        for (o, row) in dst.chunks_exact_mut(plane).enumerate() {
            row.fill(bias.values[o]);
        }
        T::gemm(
            g.o,
            patch,
            plane,
            &kernel.values,
            (patch as isize, 1),
            col,
            (plane as isize, 1),
            T::one(),
            dst,
            (plane as isize, 1),
        );
    }
    Ok((Tensor::from_parts(vec![g.n, g.o, g.h, g.w], out), cols))
}

/// Gradients of a convolution with respect to input, kernel and bias.
pub(crate) fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    g: &ConvGeometry,
    kernel: &Tensor<T>,
    cols: &[T],
    need_input: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let (patch, plane) = (g.patch(), g.plane());
    let mut d_input = vec![T::zero(); if need_input { g.n * g.c * plane } else { 0 }];
    let mut d_kernel = vec![T::zero(); g.o * patch];
    let mut d_bias = vec![0.0f64; g.o];
    let mut d_cols = vec![T::zero(); if need_input { patch * plane } else { 0 }];
    for b in 0..g.n {
        let go = &grad_out.values[b * g.o * plane..][..g.o * plane];
        for (o, row) in go.chunks_exact(plane).enumerate() {
            d_bias[o] += row.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let col = &cols[b * patch * plane..][..patch * plane];
        // dK += dOut (O x HW) * cols^T (HW x CKK)
        T::gemm(
            g.o,
            plane,
            patch,
            go,
            (plane as isize, 1),
            col,
            (1, plane as isize),
            T::one(),
            &mut d_kernel,
            (patch as isize, 1),
        );
        if !need_input {
            continue;
        }
        // dCols = K^T (CKK x O) * dOut (O x HW)
        T::gemm(
            patch,
            g.o,
            plane,
            &kernel.values,
            (1, patch as isize),
            go,
            (plane as isize, 1),
            T::zero(),
            &mut d_cols,
            (plane as isize, 1),
        );
        col2im(&d_cols, g, &mut d_input[b * g.c * plane..][..g.c * plane]);
    }
    (
        need_input.then(|| Tensor::from_parts(vec![g.n, g.c, g.h, g.w], d_input)),
        Tensor::from_parts(kernel.dims.clone(), d_kernel),
        Tensor::from_parts(vec![g.o], d_bias.into_iter().map(T::of_f64).collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random(dims: &[usize], seed: u64) -> Tensor<f64> {
        let mut r = rng::stream(seed);
        let n = dims.iter().product();
        Tensor::from_parts(dims.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
    }

    fn conv_oracle(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let [n, c, h, w] = x.nchw("x").unwrap();
        let [o, _, ks, _] = k.nchw("k").unwrap();
        let r = (ks / 2) as isize;
        let mut out = vec![0.0; n * o * h * w];
        for bi in 0..n {
            for oi in 0..o {
                for y in 0..h as isize {
                    for xx in 0..w as isize {
                        let mut s = b.values[oi];
                        for ci in 0..c {
                            for ky in 0..ks as isize {
                                for kx in 0..ks as isize {
                                    let (sy, sx) = (y + ky - r, xx + kx - r);
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    s += x.values[((bi * c + ci) * h + sy as usize) * w + sx as usize]
                                        * k.values[((oi * c + ci) * ks + ky as usize) * ks + kx as usize];
                                }
                            }
                        }
                        out[((bi * o + oi) * h + y as usize) * w + xx as usize] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel() {
        let x = random(&[2, 1, 6, 5], 1);
        let k = Tensor::full(&[1, 1, 1, 1], 1.0);
        let b = Tensor::zeros(&[1]);
        assert_eq!(x.conv2d(&k, &b).unwrap(), x);
    }

    #[test]
    fn conv_ones_on_constant() {
        let x = Tensor::full(&[1, 1, 7, 7], 0.3f64);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = x.conv2d(&k, &Tensor::zeros(&[1])).unwrap();
        for yy in 1..6 {
            for xx in 1..6 {
                assert!((y.values[yy * 7 + xx] - 2.7).abs() < 1e-12);
            }
        }
        // corner sees a 2x2 neighbourhood
        assert!((y.values[0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_nested_loop_oracle() {
        let x = random(&[2, 3, 5, 5], 2);
        let k = random(&[4, 3, 3, 3], 3);
        let b = random(&[4], 4);
        let got = x.conv2d(&k, &b).unwrap();
        let want = conv_oracle(&x, &k, &b);
        let max = got.values.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max < 1e-5, "max abs diff {max}");

        let xf: Tensor<f32> = x.cast();
        let got32 = xf.conv2d(&k.cast(), &b.cast()).unwrap();
        let max = got32.values.iter().zip(&want).map(|(a, b)| (*a as f64 - b).abs()).fold(0.0, f64::max);
        assert!(max < 1e-5, "f32 max abs diff {max}");
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let x = random(&[1, 3, 4, 4], 5);
        assert!(x.conv2d(&random(&[2, 2, 3, 3], 6), &Tensor::zeros(&[2])).is_err());
        assert!(x.conv2d(&random(&[2, 3, 2, 2], 6), &Tensor::zeros(&[2])).is_err());
        assert!(x.conv2d(&random(&[2, 3, 3, 3], 6), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-6);
        assert!((softplus(50.0f64) - 50.0).abs() < 1e-6);
        assert!((softplus(50.0f32) - 50.0).abs() < 1e-6);
        assert!(softplus(-800.0f64) >= 0.0);
        assert!(softplus(800.0f64).is_finite());
    }

    #[test]
    fn elementwise_ops() {
        let t = Tensor::new(vec![3], vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(t.leaky_relu(0.2).values(), &[-0.2, 0.0, 2.0]);
        assert!(t.log().is_err());
        let s = Tensor::scalar(2.0);
        assert_eq!(t.mul(&s).unwrap().values(), &[-2.0, 0.0, 4.0]);
        assert_eq!(s.sub(&t).unwrap().values(), &[3.0, 2.0, 0.0]);
        assert!(t.add(&Tensor::zeros(&[2])).is_err());
        assert!(Tensor::new(vec![2], vec![1.0f64]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn pixel_shuffle_layout() {
        let t = Tensor::new(vec![1, 4, 1, 1], vec![0.0f32, 1.0, 2.0, 3.0]).unwrap();
        let s = t.pixel_shuffle(2).unwrap();
        assert_eq!(s.dims(), &[1, 1, 2, 2]);
        assert_eq!(s.values(), &[0.0, 1.0, 2.0, 3.0]);
        let x = random(&[2, 3, 4, 5], 7);
        assert_eq!(x.pixel_shuffle(1).unwrap(), x);
        assert!(x.pixel_shuffle(2).is_err());
    }

    #[test]
    fn nearest_upsampling_repeats_blocks() {
        let t = Tensor::new(vec![1, 1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let u = t.upsample_nearest(2).unwrap();
        assert_eq!(u.dims(), &[1, 1, 4, 4]);
        assert_eq!(u.values(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn mean_channels_averages() {
        let t = Tensor::new(vec![1, 2, 1, 2], vec![1.0f64, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(t.mean_channels().unwrap().values(), &[2.0, 4.0]);
    }
}
