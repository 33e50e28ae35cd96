use rand::Rng;

use super::ColorHistParams;
use crate::data::ImageTensor;
use crate::error::{Error, Result};

fn luminance(c: &[f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// Palette indices sorted by ascending luminance (ties by index).
fn luminance_order(c: &ColorHistParams) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.palette.len()).collect();
    order.sort_by(|&a, &b| luminance(&c.palette[a]).total_cmp(&luminance(&c.palette[b])).then(a.cmp(&b)));
    order
}

/// Palette index assigned to every pixel of a gray image.
///
/// Pixels are ranked by gray level; the rank axis is cut into consecutive
/// bins whose widths are the palette weights, with palette entries taken in
/// ascending luminance. Equal gray levels share a bin.
pub fn palette_bins(gray: &ImageTensor, c: &ColorHistParams) -> Result<Vec<usize>> {
    c.validate()?;
    if gray.channels() != 1 {
        return Err(Error::Shape(format!("apply_color needs a 1-channel image, got {}", gray.channels())));
    }
    let order = luminance_order(c);
    let mut edges = Vec::with_capacity(order.len());
    let mut cum = 0.0;
    for &i in &order {
        cum += c.weights[i];
        edges.push(cum);
    }
    let values = gray.data();
    let n = values.len();
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut bins = vec![0usize; n];
    let mut below = 0usize;
    let mut k = 0;
    while k < n {
        // group of equal gray levels starting at sorted[k]
        let v = values[sorted[k]];
        let mut end = k;
        while end < n && values[sorted[end]] == v {
            end += 1;
        }
        let u = below as f64 / n as f64;
        let slot = edges.iter().position(|&e| u < e).unwrap_or(order.len() - 1);
        for &idx in &sorted[k..end] {
            bins[idx] = order[slot];
        }
        below = end;
        k = end;
    }
    Ok(bins)
}

/// Maps a gray image onto a palette, adding uniform jitter in
/// `[-jitter, jitter]` per channel and clipping to [0, 1].
pub fn apply_color(gray: &ImageTensor, c: &ColorHistParams, rng: &mut impl Rng) -> Result<ImageTensor> {
    let bins = palette_bins(gray, c)?;
    let mut data = Vec::with_capacity(bins.len() * 3);
    for &b in &bins {
        for ch in 0..3 {
            let noise = if c.jitter > 0.0 { rng.random_range(-c.jitter..=c.jitter) } else { 0.0 };
            data.push((c.palette[b][ch] + noise) as f32);
        }
    }
    ImageTensor::from_clamped(gray.height(), gray.width(), 3, data)
}
