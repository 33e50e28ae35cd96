//! Procedural target-domain corpora standing in for real datasets, plus a
//! directory-ingest path for user-supplied images.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use super::{
    downsample_4x, load_image, save_image, split_manifest, DatasetManifest, ImageTensor,
    ManifestEntry, Split,
};
use crate::error::{Error, Result};
use crate::rng;

/// Fraction of a domain corpus assigned to the unlabeled pool; the rest is test.
pub const POOL_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    /// Sums of oriented sinusoids.
    Textures,
    /// Smooth linear and radial color ramps.
    Gradients,
    /// Flat-colored Voronoi polygons.
    Mosaics,
    /// Each image draws one of the three kinds uniformly.
    Mixed,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKind::Textures => "textures",
            DomainKind::Gradients => "gradients",
            DomainKind::Mosaics => "mosaics",
            DomainKind::Mixed => "mixed",
        })
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "textures" => Ok(DomainKind::Textures),
            "gradients" => Ok(DomainKind::Gradients),
            "mosaics" => Ok(DomainKind::Mosaics),
            "mixed" => Ok(DomainKind::Mixed),
            other => Err(Error::InvalidArgument(format!("unknown domain kind {other:?}"))),
        }
    }
}

fn random_color(r: &mut impl Rng) -> [f64; 3] {
    [r.random(), r.random(), r.random()]
}

/// Renders one `size x size` RGB image of `kind`; returns the concrete kind
/// used (relevant for [`DomainKind::Mixed`]).
pub fn render_domain_image(kind: DomainKind, size: usize, r: &mut impl Rng) -> Result<(DomainKind, ImageTensor)> {
    let kind = match kind {
        DomainKind::Mixed => [DomainKind::Textures, DomainKind::Gradients, DomainKind::Mosaics][r.random_range(0..3)],
        k => k,
    };
    let n = size as f64;
    let mut data = vec![0.0f32; size * size * 3];
    match kind {
        DomainKind::Textures => {
            let base = random_color(r);
            let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..r.random_range(2..=4))
                .map(|_| {
                    let freq = r.random_range(2.0..(n / 8.0).max(3.0));
                    let theta = r.random_range(0.0..PI);
                    let phase = r.random_range(0.0..2.0 * PI);
                    let amp = r.random_range(0.1..0.3);
                    let tint = [0; 3].map(|_| amp * r.random_range(-1.0..1.0));
                    (freq, theta, phase, tint)
                })
                .collect();
            for y in 0..size {
                for x in 0..size {
                    let mut px = base;
                    for &(freq, theta, phase, tint) in &waves {
                        let t = (x as f64 * theta.cos() + y as f64 * theta.sin()) / n;
                        let s = (2.0 * PI * freq * t + phase).sin();
                        for c in 0..3 {
                            px[c] += tint[c] * s;
                        }
                    }
                    for c in 0..3 {
                        data[(y * size + x) * 3 + c] = px[c] as f32;
                    }
                }
            }
        }
        DomainKind::Gradients => {
            let (c0, c1) = (random_color(r), random_color(r));
            let radial = r.random_bool(0.5);
            let theta = r.random_range(0.0..2.0 * PI);
            let (cx, cy) = (r.random_range(0.0..n), r.random_range(0.0..n));
            for y in 0..size {
                for x in 0..size {
                    let t = if radial {
                        ((x as f64 - cx).hypot(y as f64 - cy) / (n * 1.2)).min(1.0)
                    } else {
                        let p = ((x as f64 - n / 2.0) * theta.cos() + (y as f64 - n / 2.0) * theta.sin()) / n;
                        (p + 0.5).clamp(0.0, 1.0)
                    };
                    let t = t * t * (3.0 - 2.0 * t);
                    for c in 0..3 {
                        data[(y * size + x) * 3 + c] = (c0[c] * (1.0 - t) + c1[c] * t) as f32;
                    }
                }
            }
        }
        DomainKind::Mosaics => {
            let sites: Vec<(f64, f64, [f64; 3])> = (0..r.random_range(6..=24))
                .map(|_| (r.random_range(0.0..n), r.random_range(0.0..n), random_color(r)))
                .collect();
            for y in 0..size {
                for x in 0..size {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let nearest = sites
                        .iter()
                        .min_by(|a, b| {
                            let da = (a.0 - px).powi(2) + (a.1 - py).powi(2);
                            let db = (b.0 - px).powi(2) + (b.1 - py).powi(2);
                            da.total_cmp(&db)
                        })
                        .expect("at least six sites");
                    for c in 0..3 {
                        data[(y * size + x) * 3 + c] = nearest.2[c] as f32;
                    }
                }
            }
        }
        DomainKind::Mixed => unreachable!(),
    }
    Ok((kind, ImageTensor::from_clamped(size, size, 3, data)?))
}

/// Writes one HR/LR pair under `out_dir` and returns the manifest-relative
/// raw paths.
pub(crate) fn write_pair(out_dir: &Path, id: u64, hr: &ImageTensor) -> Result<(PathBuf, PathBuf)> {
    let lr = downsample_4x(hr)?;
    let lr_rel = PathBuf::from(format!("lr/{id:06}.udt"));
    let hr_rel = PathBuf::from(format!("hr/{id:06}.udt"));
    save_image(&out_dir.join(lr_rel.with_extension("png")), &lr, true)?;
    save_image(&out_dir.join(hr_rel.with_extension("png")), hr, true)?;
    Ok((lr_rel, hr_rel))
}

/// Generates `count` target-domain HR images with derived LR inputs under
/// `out_dir`, split into pool and test, and writes `out_dir/manifest.csv`.
pub fn make_domain_corpus(
    kind: DomainKind,
    count: usize,
    size: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if size == 0 || !size.is_multiple_of(4) {
        return Err(Error::InvalidArgument(format!("size {size} is not divisible by 4")));
    }
    let mut entries = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let image_seed = rng::mix(seed, i);
        let (used, hr) = render_domain_image(kind, size, &mut rng::stream(image_seed))?;
        let (lr, hr) = write_pair(out_dir, i, &hr)?;
        entries.push(ManifestEntry {
            id: i,
            split: Split::Pool,
            lr,
            hr: Some(hr),
            seed: image_seed,
            source: format!("domain:{used}"),
        });
    }
    let all = DatasetManifest::new(out_dir, entries)?;
    let parts = split_manifest(&all, &[(Split::Pool, POOL_FRACTION), (Split::Test, 1.0 - POOL_FRACTION)], seed)?;
    let mut entries: Vec<ManifestEntry> = parts.into_iter().flat_map(|p| p.entries).collect();
    entries.sort_by_key(|e| e.id);
    let manifest = DatasetManifest::new(out_dir, entries)?;
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Ingests every PNG in `dir` (sorted by name) as a labeled pool entry.
///
/// Images are cropped to the top-left region divisible by 4 and converted to
/// RGB; LR inputs are derived with the 4x box filter.
pub fn make_pool_from_dir(dir: &Path, out_dir: &Path) -> Result<DatasetManifest> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let mut entries = Vec::with_capacity(files.len());
    for (i, path) in files.iter().enumerate() {
        let img = load_image(path)?.to_rgb();
        let (h, w) = (img.height() / 4 * 4, img.width() / 4 * 4);
        if h == 0 || w == 0 {
            return Err(Error::Shape(format!("{} is smaller than 4x4", path.display())));
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend((0..3).map(|c| img.get(y, x, c)));
            }
        }
        let hr = ImageTensor::new(h, w, 3, data)?;
        let (lr, hr) = write_pair(out_dir, i as u64, &hr)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        entries.push(ManifestEntry {
            id: i as u64,
            split: Split::Pool,
            lr,
            hr: Some(hr),
            seed: 0,
            source: format!("dir:{name}"),
        });
    }
    let manifest = DatasetManifest::new(out_dir, entries)?;
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
