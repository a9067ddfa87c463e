use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::pnm::{read_mask, read_pnm, write_pnm};
use crate::data::{FovStrategy, GrayImage};
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 3] = ["pgm", "ppm", "pnm"];

#[derive(Default)]
struct Files {
    image: Option<PathBuf>,
    label: Option<PathBuf>,
    fov: Option<PathBuf>,
}

fn load_mask(path: &Path, image: &GrayImage) -> Result<Vec<bool>> {
    let (w, h, mask) = read_mask(path)?;
    if (w, h) != (image.width, image.height) {
        return Err(Error::Data(format!(
            "{}: mask is {w}x{h}, image `{}` is {}x{}",
            path.display(),
            image.name,
            image.width,
            image.height
        )));
    }
    Ok(mask)
}

/// Images in `dir` paired by stem: `<stem>_img.*`, optional `<stem>_label.*` and
/// `<stem>_fov.*`. Sorted by stem; each image is named by its stem.
pub fn load_dataset(dir: &Path, fov: &dyn FovStrategy, require_labels: bool) -> Result<Vec<GrayImage>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems: BTreeMap<String, Files> = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext_ok = path.extension().and_then(|e| e.to_str()).is_some_and(|e| IMAGE_EXTENSIONS.contains(&e));
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()).filter(|_| ext_ok) else {
            continue;
        };
        let Some((base, role)) = stem.rsplit_once('_') else {
            continue;
        };
        let files = stems.entry(base.to_string()).or_default();
        match role {
            "img" => files.image = Some(path),
            "label" => files.label = Some(path),
            "fov" => files.fov = Some(path),
            _ => {}
        }
    }
    let mut images = Vec::new();
    for (stem, files) in stems {
        let Some(image_path) = files.image else {
            continue;
        };
        let mut img = read_pnm(&image_path)?;
        img.name = stem.clone();
        match files.label {
            Some(p) => img.label = Some(load_mask(&p, &img)?),
            None if require_labels => {
                return Err(Error::Data(format!("image `{stem}` in {} has no `{stem}_label` mask", dir.display())))
            }
            None => {}
        }
        let provided = files.fov.map(|p| load_mask(&p, &img)).transpose()?;
        img.fov = fov.resolve(&img, provided);
        images.push(img);
    }
    if images.is_empty() {
        return Err(Error::Data(format!("no `*_img` images found in {}", dir.display())));
    }
    Ok(images)
}

/// `<stem>_prob.pgm` (8-bit preview) and `<stem>_prob.f32` (raw little-endian floats).
pub fn write_probability_map(dir: &Path, stem: &str, width: usize, height: usize, probs: &[f64]) -> Result<PathBuf> {
    let img = GrayImage::new(stem, width, height, probs.iter().map(|p| p.clamp(0.0, 1.0)).collect())?;
    write_pnm(&img, &dir.join(format!("{stem}_prob.pgm")))?;
    let sidecar = dir.join(format!("{stem}_prob.f32"));
    let bytes: Vec<u8> = probs.iter().flat_map(|&p| (p as f32).to_le_bytes()).collect();
    fs::write(&sidecar, bytes).map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}

pub fn read_f32_sidecar(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Data(format!(
            "{}: {} bytes, expected {} floats",
            path.display(),
            bytes.len(),
            expected
        )));
    }
    Ok(bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect())
}
