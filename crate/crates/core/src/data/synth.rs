//! Synthetic vessel images: bright curves on a noisy disk-shaped field of view, with exact
//! vessel and field-of-view masks.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::pnm::{write_mask, write_pnm};
use crate::data::GrayImage;
use crate::error::{Error, Result};

pub const SYNTH_SIZE: usize = 64;
pub const FOV_RADIUS: f64 = 30.0;
pub const BACKGROUND: f64 = 0.3;
pub const VESSEL: f64 = 0.5;
pub const NOISE_SIGMA: f64 = 0.1;
pub const CURVES: std::ops::RangeInclusive<usize> = 3..=6;
pub const WIDTHS: std::ops::RangeInclusive<usize> = 1..=3;
pub const CURVE_SEGMENTS: usize = 32;
pub const TRAIN_FRACTION: f64 = 0.9;

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn in_fov(row: usize, col: usize) -> bool {
    let c = (SYNTH_SIZE as f64 - 1.0) / 2.0;
    (row as f64 - c).powi(2) + (col as f64 - c).powi(2) <= FOV_RADIUS * FOV_RADIUS
}

/// Image `index` of the synthetic set drawn from `seed`; independent of the set size.
pub fn synth_image(seed: u64, index: u64) -> GrayImage {
    let n = SYNTH_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut vessel = vec![false; n * n];
    let point = |rng: &mut ChaCha8Rng| (rng.random_range(0.0..n as f64), rng.random_range(0.0..n as f64));
    for _ in 0..rng.random_range(CURVES) {
        let (p0, p1, p2) = (point(&mut rng), point(&mut rng), point(&mut rng));
        let half = rng.random_range(WIDTHS) as f64 / 2.0;
        let at = |t: f64| {
            let u = 1.0 - t;
            (u * u * p0.0 + 2.0 * u * t * p1.0 + t * t * p2.0, u * u * p0.1 + 2.0 * u * t * p1.1 + t * t * p2.1)
        };
        for k in 0..CURVE_SEGMENTS {
            let a = at(k as f64 / CURVE_SEGMENTS as f64);
            let b = at((k + 1) as f64 / CURVE_SEGMENTS as f64);
            let r0 = (a.1.min(b.1) - half).floor().max(0.0) as usize;
            let r1 = ((a.1.max(b.1) + half).ceil() as usize).min(n - 1);
            let c0 = (a.0.min(b.0) - half).floor().max(0.0) as usize;
            let c1 = ((a.0.max(b.0) + half).ceil() as usize).min(n - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    if segment_distance((c as f64 + 0.5, r as f64 + 0.5), a, b) <= half {
                        vessel[r * n + c] = true;
                    }
                }
            }
        }
    }
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let mut pixels = vec![0.0; n * n];
    let mut fov = vec![false; n * n];
    for i in 0..n * n {
        if in_fov(i / n, i % n) {
            fov[i] = true;
            let base = if vessel[i] { VESSEL } else { BACKGROUND };
            pixels[i] = (base + noise.sample(&mut rng)).clamp(0.0, 1.0);
        } else {
            vessel[i] = false;
        }
    }
    let mut img = GrayImage::new(format!("synth{index:05}"), n, n, pixels).expect("synthetic pixels in range");
    img.label = Some(vessel);
    img.fov = Some(fov);
    img
}

/// Write `count` synthetic images to `out/train` (first 90%) and `out/test`.
/// Returns the (train, test) counts.
pub fn write_synthetic(out: &Path, count: usize, seed: u64) -> Result<(usize, usize)> {
    if count == 0 {
        return Err(Error::Data("synthetic set needs at least one image".into()));
    }
    let train = ((count as f64 * TRAIN_FRACTION).round() as usize).clamp(1, count);
    for split in ["train", "test"] {
        let d = out.join(split);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for i in 0..count {
        let img = synth_image(seed, i as u64);
        let dir = out.join(if i < train { "train" } else { "test" });
        write_pnm(&img, &dir.join(format!("{}_img.pgm", img.name)))?;
        write_mask(img.label.as_ref().unwrap(), img.width, img.height, &dir.join(format!("{}_label.pgm", img.name)))?;
        write_mask(img.fov.as_ref().unwrap(), img.width, img.height, &dir.join(format!("{}_fov.pgm", img.name)))?;
    }
    Ok((train, count - train))
}
