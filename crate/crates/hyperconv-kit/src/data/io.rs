//! On-disk formats for paired datasets: PNG (8/16-bit) and a raw f32 blob
//! with a one-line text header.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{DegradationParams, PairedSample};

const BLOB_MAGIC: &str = "HCF32";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png8,
    Png16,
    /// `HCF32 f32 C H W\n` header followed by little-endian f32 payload.
    F32Blob,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png8 | ImageFormat::Png16 => "png",
            ImageFormat::F32Blob => "f32",
        }
    }
}

/// Sidecar written next to the image pairs by `write_dataset`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub ids: Vec<String>,
    pub degradation: Option<DegradationParams>,
}

/// Writes a (C, H, W) tensor with values in [0,1] to `path`. PNG output
/// maps C=1/3/4 to Luma/RGB/RGBA; the blob format takes any C.
pub fn write_image(path: &Path, t: &Tensor<f32>, format: ImageFormat) -> Result<()> {
    let s = t.shape();
    if s.len() != 3 {
        return Err(Error::invalid(
            "write_image",
            format!("expected (C, H, W), got {:?}", s),
        ));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    match format {
        ImageFormat::F32Blob => {
            let mut buf = format!("{BLOB_MAGIC} f32 {c} {h} {w}\n").into_bytes();
            for v in t.data().iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            let mut f = fs::File::create(path)?;
            f.write_all(&buf)?;
            Ok(())
        }
        ImageFormat::Png8 | ImageFormat::Png16 => {
            let src = t.data();
            let plane = h * w;
            // channel-planar -> interleaved
            let img = if format == ImageFormat::Png8 {
                let px: Vec<u8> = (0..plane)
                    .flat_map(|i| (0..c).map(move |ch| quant8(src[ch * plane + i])))
                    .collect();
                dynamic_from_u8(c, h as u32, w as u32, px)?
            } else {
                let px: Vec<u16> = (0..plane)
                    .flat_map(|i| (0..c).map(move |ch| quant16(src[ch * plane + i])))
                    .collect();
                dynamic_from_u16(c, h as u32, w as u32, px)?
            };
            img.save(path)?;
            Ok(())
        }
    }
}

fn quant8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quant16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn dynamic_from_u8(c: usize, h: u32, w: u32, px: Vec<u8>) -> Result<DynamicImage> {
    let img = match c {
        1 => DynamicImage::ImageLuma8(image::ImageBuffer::from_vec(w, h, px).unwrap()),
        3 => DynamicImage::ImageRgb8(image::ImageBuffer::from_vec(w, h, px).unwrap()),
        4 => DynamicImage::ImageRgba8(image::ImageBuffer::from_vec(w, h, px).unwrap()),
        _ => {
            return Err(Error::invalid(
                "write_image",
                format!("PNG output needs 1, 3, or 4 channels, got {c}"),
            ))
        }
    };
    Ok(img)
}

fn dynamic_from_u16(c: usize, h: u32, w: u32, px: Vec<u16>) -> Result<DynamicImage> {
    let img = match c {
        1 => DynamicImage::ImageLuma16(image::ImageBuffer::from_vec(w, h, px).unwrap()),
        3 => DynamicImage::ImageRgb16(image::ImageBuffer::from_vec(w, h, px).unwrap()),
        4 => DynamicImage::ImageRgba16(image::ImageBuffer::from_vec(w, h, px).unwrap()),
        _ => {
            return Err(Error::invalid(
                "write_image",
                format!("PNG output needs 1, 3, or 4 channels, got {c}"),
            ))
        }
    };
    Ok(img)
}

/// Reads a (C, H, W) f32 tensor from a `.png` (8- or 16-bit) or `.f32`
/// blob, dispatching on the file extension.
pub fn read_image(path: &Path) -> Result<Tensor<f32>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "f32" => read_blob(path),
        "png" => read_png(path),
        other => Err(Error::Dataset(format!(
            "{}: unsupported extension {other:?} (expected png or f32)",
            path.display()
        ))),
    }
}

fn read_blob(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Dataset(format!("{}: {msg}", path.display()));
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != BLOB_MAGIC || fields[1] != "f32" {
        return Err(bad("header must be `HCF32 f32 C H W`"));
    }
    let dims: Vec<usize> = fields[2..]
        .iter()
        .map(|f| f.parse().map_err(|_| bad("non-numeric shape field")))
        .collect::<Result<_>>()?;
    let numel = dims.iter().product::<usize>();
    let payload = &bytes[nl + 1..];
    if payload.len() != numel * 4 {
        return Err(bad(&format!(
            "payload is {} bytes, shape {:?} needs {}",
            payload.len(),
            dims,
            numel * 4
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    Tensor::from_vec(data, &dims)
}

fn read_png(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (c, data): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().iter().map(|&v| v as f32 / 255.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().iter().map(|&v| v as f32 / 255.0).collect()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw().iter().map(|&v| v as f32 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgba16(b) => (4, b.into_raw().iter().map(|&v| v as f32 / 65535.0).collect()),
        other => {
            return Err(Error::Dataset(format!(
                "{}: unsupported PNG pixel layout {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    // interleaved -> channel-planar
    let plane = h * w;
    let mut planar = vec![0.0f32; c * plane];
    for i in 0..plane {
        for ch in 0..c {
            planar[ch * plane + i] = data[i * c + ch];
        }
    }
    Tensor::from_vec(planar, &[c, h, w])
}

/// Writes `<id>_raw.<ext>` / `<id>_target.<ext>` for every sample plus a
/// `manifest.json` sidecar.
pub fn write_dataset(
    dir: &Path,
    samples: &[PairedSample],
    format: ImageFormat,
    degradation: Option<&DegradationParams>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ext = format.extension();
    for s in samples {
        s.validate()?;
        write_image(&dir.join(format!("{}_raw.{ext}", s.id)), &s.raw, format)?;
        write_image(&dir.join(format!("{}_target.{ext}", s.id)), &s.target, format)?;
    }
    let manifest = DatasetManifest {
        ids: samples.iter().map(|s| s.id.clone()).collect(),
        degradation: degradation.cloned(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Loads every `<id>_raw.*` / `<id>_target.*` pair from a directory,
/// sorted by id. Ids with only one half present are an error.
pub fn load_pair_dir(dir: &Path) -> Result<Vec<PairedSample>> {
    let mut raws: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut targets: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let stem = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s,
            None => continue,
        };
        if let Some(id) = stem.strip_suffix("_raw") {
            raws.insert(id.to_string(), path.clone());
        } else if let Some(id) = stem.strip_suffix("_target") {
            targets.insert(id.to_string(), path.clone());
        }
    }
    let orphans: Vec<String> = raws
        .keys()
        .filter(|id| !targets.contains_key(*id))
        .chain(targets.keys().filter(|id| !raws.contains_key(*id)))
        .cloned()
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: unpaired ids: {}",
            dir.display(),
            orphans.join(", ")
        )));
    }
    let mut out = Vec::with_capacity(raws.len());
    for (id, raw_path) in &raws {
        let sample = PairedSample {
            raw: read_image(raw_path)?,
            target: read_image(&targets[id])?,
            id: id.clone(),
        };
        sample.validate().map_err(|e| {
            Error::Dataset(format!("{}: {e}", raw_path.display()))
        })?;
        out.push(sample);
    }
    Ok(out)
}
