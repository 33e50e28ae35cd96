use crate::data::LabeledPair;
use crate::error::{Error, Result};
use crate::model::{forward, NetworkParams};

pub const HISTOGRAM_BINS: usize = 50;
/// Minimum prominence of a histogram mode, as a fraction of the tallest bin.
pub const MODE_MIN_PROMINENCE: f64 = 0.1;

/// Per-sample mean uncertainty against per-sample error.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyDiagnostics {
    pub mean_uncertainty: Vec<f64>,
    pub mse: Vec<f64>,
    /// Upper edge of the histogram range; the lower edge is 0.
    pub histogram_max: f64,
    pub histogram: Vec<usize>,
    /// Spearman correlation; `None` when either list is constant.
    pub rank_correlation: Option<f64>,
}

/// Mid-ranks (1-based), ties sharing their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            out[k] = r;
        }
        i = j;
    }
    out
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation. Errors below three samples; `None` when an
/// input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::Undefined(format!("rank correlation needs 3 samples, got {}", a.len())));
    }
    Ok(pearson(&ranks(a), &ranks(b)))
}

/// Uniform bins over `[0, max]`; the maximum falls in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> (f64, Vec<usize>) {
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut counts = vec![0; bins];
    for &v in values {
        let b = if max > 0.0 { ((v / max) * bins as f64) as usize } else { 0 };
        counts[b.min(bins - 1)] += 1;
    }
    (max, counts)
}

/// Centered moving average; windows are truncated at the ends.
pub fn smooth(counts: &[usize], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..counts.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(counts.len());
            counts[lo..hi].iter().sum::<usize>() as f64 / (hi - lo) as f64
        })
        .collect()
}

/// Indices of local maxima of a sequence; a plateau counts once, at its
/// first index, and the ends count when they exceed their only neighbour.
pub fn modes(values: &[f64]) -> Vec<usize> {
    let mut runs: Vec<(usize, f64)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if runs.last().is_none_or(|&(_, u)| u != v) {
            runs.push((i, v));
        }
    }
    (0..runs.len())
        .filter(|&k| {
            let v = runs[k].1;
            let left = k == 0 || runs[k - 1].1 < v;
            let right = k + 1 == runs.len() || runs[k + 1].1 < v;
            left && right && runs.len() > 1
        })
        .map(|k| runs[k].0)
        .collect()
}

/// Topographic prominence of the peak at `i`: its height above the higher of
/// the lowest points separating it from a taller peak (or the edge) on
/// either side.
pub fn prominence(values: &[f64], i: usize) -> f64 {
    let v = values[i];
    let base = |range: &mut dyn Iterator<Item = usize>| {
        let mut low = v;
        for j in range {
            if values[j] > v {
                break;
            }
            low = low.min(values[j]);
        }
        low
    };
    let left = base(&mut (0..i).rev());
    let right = base(&mut (i + 1..values.len()));
    v - left.max(right)
}

/// Local maxima whose prominence is at least `min_fraction` of the largest
/// value.
pub fn prominent_modes(values: &[f64], min_fraction: f64) -> Vec<usize> {
    let top = values.iter().copied().fold(0.0, f64::max);
    modes(values).into_iter().filter(|&i| prominence(values, i) >= min_fraction * top).collect()
}

impl UncertaintyDiagnostics {
    pub fn from_samples(mean_uncertainty: Vec<f64>, mse: Vec<f64>) -> Result<Self> {
        let rank_correlation = spearman(&mean_uncertainty, &mse)?;
        let (histogram_max, histogram) = histogram(&mean_uncertainty, HISTOGRAM_BINS);
        Ok(Self {
            mean_uncertainty,
            mse,
            histogram_max,
            histogram,
            rank_correlation,
        })
    }

    /// Prominent modes of the histogram after smoothing with `window`.
    pub fn smoothed_modes(&self, window: usize) -> Vec<usize> {
        prominent_modes(&smooth(&self.histogram, window), MODE_MIN_PROMINENCE)
    }

    /// A single prominent mode that is not in the first or last bin.
    pub fn is_unimodal(&self, window: usize) -> bool {
        match self.smoothed_modes(window).as_slice() {
            [m] => *m > 0 && *m + 1 < self.histogram.len(),
            _ => false,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# uncertainty diagnostics\n");
        s.push_str(&format!("samples={}\n", self.mse.len()));
        match self.rank_correlation {
            Some(r) => s.push_str(&format!("spearman={r:.9}\n")),
            None => s.push_str("spearman=undefined (degenerate ordering)\n"),
        }
        s.push_str(&format!("histogram_range=0,{:e}\n", self.histogram_max));
        let counts: Vec<String> = self.histogram.iter().map(usize::to_string).collect();
        s.push_str(&format!("histogram_counts={}\n", counts.join(",")));
        s.push_str("id,mean_uncertainty,mse\n");
        for (i, (u, e)) in self.mean_uncertainty.iter().zip(&self.mse).enumerate() {
            s.push_str(&format!("{i},{u:e},{e:e}\n"));
        }
        s
    }
}

/// Runs the network over a labeled set and gathers diagnostics.
pub fn uncertainty_diagnostics(params: &NetworkParams, eval_set: &[LabeledPair]) -> Result<UncertaintyDiagnostics> {
    let mut unc = Vec::with_capacity(eval_set.len());
    let mut err = Vec::with_capacity(eval_set.len());
    for pair in eval_set {
        let out = forward(params, &pair.lr)?;
        unc.push(out.mean_variance(0));
        err.push(super::mse(&out.mean_image(0)?, &pair.hr)?);
    }
    UncertaintyDiagnostics::from_samples(unc, err)
}
