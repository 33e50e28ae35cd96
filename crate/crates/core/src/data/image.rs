use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `H x W x C` image with unit-interval samples, `C` in {1, 3}.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("images carry 1 or 3 channels, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("sample {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image, clamping every sample into [0, 1] (NaN maps to 0).
    pub fn from_clamped(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.height, self.width, self.channels) == (other.height, other.width, other.channels)
    }

    /// Channel-mean grayscale plane, row-major.
    pub fn gray(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().map(|&v| v as f64).sum::<f64>() / self.channels as f64)
            .collect()
    }

    /// Replicates a 1-channel image to 3 channels; 3-channel images pass through.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            channels: 3,
            data,
            ..*self
        }
    }

    /// `1 x C x H x W` network tensor.
    pub fn to_nchw(&self) -> Tensor<f32> {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[(ch * h + y) * w + x] = self.data[(y * w + x) * c + ch];
                }
            }
        }
        Tensor::from_parts(vec![1, c, h, w], out)
    }

    /// Converts image `index` of an NCHW batch, clamping into [0, 1].
    pub fn from_nchw(t: &Tensor<f32>, index: usize) -> Result<Self> {
        let [n, c, h, w] = match t.dims() {
            &[n, c, h, w] => [n, c, h, w],
            d => return Err(Error::Shape(format!("expected NCHW tensor, got {d:?}"))),
        };
        if index >= n {
            return Err(Error::Shape(format!("batch index {index} out of {n}")));
        }
        let src = &t.values()[index * c * h * w..][..c * h * w];
        let mut data = vec![0.0; c * h * w];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data[(y * w + x) * c + ch] = src[(ch * h + y) * w + x];
                }
            }
        }
        Self::from_clamped(h, w, c, data)
    }

    /// Stacks same-shape images into an `N x C x H x W` batch.
    pub fn batch(images: &[&ImageTensor]) -> Result<Tensor<f32>> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (c, h, w) = (first.channels, first.height, first.width);
        let mut values = Vec::with_capacity(images.len() * c * h * w);
        for img in images {
            if !img.same_shape(first) {
                return Err(Error::Shape("batch images differ in shape".into()));
            }
            values.extend_from_slice(img.to_nchw().values());
        }
        Ok(Tensor::from_parts(vec![images.len(), c, h, w], values))
    }

    /// Min-max rescale of a raw field into a 1-channel image.
    pub fn from_field_rescaled(height: usize, width: usize, field: &[f64]) -> Result<Self> {
        let (lo, hi) = field
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(hi - lo).is_finite() || hi - lo <= 0.0 {
            return Err(Error::ZeroVariance);
        }
        let data = field.iter().map(|&v| ((v - lo) / (hi - lo)) as f32).collect();
        Self::from_clamped(height, width, 1, data)
    }
}

/// A low-resolution input with its 4x high-resolution label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPair {
    pub lr: ImageTensor,
    pub hr: ImageTensor,
}

impl LabeledPair {
    pub fn new(lr: ImageTensor, hr: ImageTensor) -> Result<Self> {
        if hr.height != 4 * lr.height || hr.width != 4 * lr.width || hr.channels != lr.channels {
            return Err(Error::Shape(format!(
                "HR {}x{}x{} is not 4x LR {}x{}x{}",
                hr.height, hr.width, hr.channels, lr.height, lr.width, lr.channels
            )));
        }
        Ok(Self { lr, hr })
    }

    /// Derives the LR side from `hr` with [`downsample_4x`].
    pub fn from_hr(hr: ImageTensor) -> Result<Self> {
        let lr = downsample_4x(&hr)?;
        Ok(Self { lr, hr })
    }
}

/// 4x4 box-mean downsampling, per channel.
pub fn downsample_4x(hr: &ImageTensor) -> Result<ImageTensor> {
    let (h, w, c) = (hr.height, hr.width, hr.channels);
    if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!("{h}x{w} is not divisible by 4")));
    }
    let (oh, ow) = (h / 4, w / 4);
    let mut out = vec![0.0f32; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut acc = 0.0f64;
                for dy in 0..4 {
                    for dx in 0..4 {
                        acc += hr.get(oy * 4 + dy, ox * 4 + dx, ch) as f64;
                    }
                }
                out[(oy * ow + ox) * c + ch] = (acc / 16.0) as f32;
            }
        }
    }
    ImageTensor::from_clamped(oh, ow, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageTensor {
        let mut r = rng::stream(seed);
        ImageTensor::new(h, w, c, (0..h * w * c).map(|_| r.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageTensor::filled(64, 64, 3, 0.37).unwrap();
        let lr = downsample_4x(&img).unwrap();
        assert_eq!((lr.height(), lr.width(), lr.channels()), (16, 16, 3));
        assert!(lr.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn checkerboard_averages_to_half() {
        let data = (0..16 * 16).map(|i| ((i / 16 + i % 16) % 2) as f32).collect();
        let img = ImageTensor::new(16, 16, 1, data).unwrap();
        let lr = downsample_4x(&img).unwrap();
        assert!(lr.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn indivisible_rejected() {
        let img = ImageTensor::filled(63, 64, 1, 0.0).unwrap();
        assert!(matches!(downsample_4x(&img), Err(Error::Shape(_))));
    }

    #[test]
    fn pair_shape_law() {
        let hr = random_image(32, 16, 3, 1);
        let pair = LabeledPair::from_hr(hr.clone()).unwrap();
        assert_eq!((pair.lr.height(), pair.lr.width()), (8, 4));
        assert!(LabeledPair::new(hr.clone(), hr).is_err());
    }

    #[test]
    fn nchw_round_trip() {
        let img = random_image(5, 7, 3, 2);
        let t = img.to_nchw();
        assert_eq!(t.dims(), &[1, 3, 5, 7]);
        assert_eq!(ImageTensor::from_nchw(&t, 0).unwrap(), img);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(ImageTensor::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageTensor::new(1, 1, 2, vec![0.5, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn downsample_commutes_with_affine(seed in 0u64..1000, alpha in 0.0f32..0.5, beta in 0.0f32..0.5) {
            let img = random_image(16, 8, 3, seed);
            let mapped = ImageTensor::new(16, 8, 3, img.data().iter().map(|v| alpha * v + beta).collect()).unwrap();
            let lhs = downsample_4x(&mapped).unwrap();
            let rhs = downsample_4x(&img).unwrap();
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((a - (alpha * b + beta)).abs() < 1e-6);
            }
        }
    }
}
