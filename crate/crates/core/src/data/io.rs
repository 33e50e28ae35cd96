//! PNG and raw-tensor ("UDT1") image files.
//!
//! Raw layout: magic `UDT1`, rank `u8`, `rank` little-endian `u32` dims
//! (`H, W, C`), then `H*W*C` little-endian `f32` samples.

use std::fs::{self, File};
use std::io::{BufReader, Cursor, Write};
use std::path::Path;

use super::ImageTensor;
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"UDT1";

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = File::create(tmp).map_err(|e| Error::io(tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(tmp, e))?;
    f.sync_all().map_err(|e| Error::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

fn is_raw(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("udt"))
}

/// Loads an 8-bit PNG (values `v / 255`) or a raw sidecar (exact).
pub fn load_image(path: &Path) -> Result<ImageTensor> {
    if is_raw(path) {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_raw(&bytes).map_err(|reason| Error::corrupt(path, reason))
    } else {
        load_png(path)
    }
}

/// Saves `img` at `path`. A `.udt` path writes the raw tensor only; any other
/// path writes an 8-bit PNG, plus a `.udt` sidecar next to it when `lossless`.
pub fn save_image(path: &Path, img: &ImageTensor, lossless: bool) -> Result<()> {
    if is_raw(path) {
        return write_atomic(path, &encode_raw(img));
    }
    write_atomic(path, &encode_png(img)?)?;
    if lossless {
        write_atomic(&path.with_extension("udt"), &encode_raw(img))?;
    }
    Ok(())
}

fn encode_raw(img: &ImageTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + img.data().len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    out.push(3);
    for d in [img.height(), img.width(), img.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_raw(bytes: &[u8]) -> std::result::Result<ImageTensor, String> {
    if bytes.len() < 5 || &bytes[..4] != RAW_MAGIC {
        return Err("bad magic".into());
    }
    let rank = bytes[4] as usize;
    if rank != 3 {
        return Err(format!("expected rank 3, got {rank}"));
    }
    let header = 5 + 4 * rank;
    if bytes.len() < header {
        return Err("truncated header".into());
    }
    let dims: Vec<usize> = bytes[5..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n = dims.iter().product::<usize>();
    if bytes.len() != header + 4 * n {
        return Err(format!("expected {} payload bytes, got {}", 4 * n, bytes.len() - header));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageTensor::new(dims[0], dims[1], dims[2], data).map_err(|e| e.to_string())
}

fn encode_png(img: &ImageTensor) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        let bytes: Vec<u8> = img.data().iter().map(|v| (v * 255.0).round() as u8).collect();
        let mut w = enc
            .write_header()
            .map_err(|e| Error::InvalidArgument(format!("png encode: {e}")))?;
        w.write_image_data(&bytes)
            .map_err(|e| Error::InvalidArgument(format!("png encode: {e}")))?;
    }
    Ok(buf)
}

fn load_png(path: &Path) -> Result<ImageTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let (color, depth) = (reader.info().color_type, reader.info().bit_depth);
    if depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedDepth(depth as u8));
    }
    let (in_ch, keep) = match color {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => {
            return Err(Error::corrupt(path, "indexed-color PNG is not supported"))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::corrupt(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * keep);
    for row in buf[..info.buffer_size()].chunks_exact(info.line_size) {
        for px in row[..w * in_ch].chunks_exact(in_ch) {
            data.extend(px[..keep].iter().map(|&b| b as f32 / 255.0));
        }
    }
    ImageTensor::new(h, w, keep, data)
}
