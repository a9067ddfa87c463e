use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{GrayImage, Normalization};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const PATCH_SIZE: usize = 48;
pub const VAL_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Origin {
    /// Index into the image list the set was sampled from.
    pub image: usize,
    pub top: usize,
    pub left: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Square intensity patches with their label windows, flattened patch-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub size: usize,
    pub intensities: Vec<f64>,
    pub labels: Vec<u8>,
    pub origins: Vec<Origin>,
    pub splits: Vec<Split>,
}

/// `size`×`size` window of `values` (row-major, `width` wide) at (`top`, `left`).
pub fn extract<V: Copy>(values: &[V], width: usize, top: usize, left: usize, size: usize) -> Vec<V> {
    let mut out = Vec::with_capacity(size * size);
    for r in top..top + size {
        out.extend_from_slice(&values[r * width + left..r * width + left + size]);
    }
    out
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn area(&self) -> usize {
        self.size * self.size
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.intensities[i * self.area()..(i + 1) * self.area()]
    }

    pub fn label(&self, i: usize) -> &[u8] {
        &self.labels[i * self.area()..(i + 1) * self.area()]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Normalized `[n, 1, size, size]` batch and its `n·size²` labels.
    pub fn batch<T: Real>(&self, indices: &[usize], norm: &Normalization) -> (Tensor<T>, Vec<u8>) {
        let mut data = Vec::with_capacity(indices.len() * self.area());
        let mut labels = Vec::with_capacity(indices.len() * self.area());
        for &i in indices {
            data.extend(self.patch(i).iter().map(|&v| T::from_f64(norm.apply(v))));
            labels.extend_from_slice(self.label(i));
        }
        let t = Tensor::new(&[indices.len(), 1, self.size, self.size], data).expect("batch shape");
        (t, labels)
    }

    /// Append one window of `image`, tagged `split`.
    pub fn push(&mut self, images: &[GrayImage], origin: Origin, split: Split) -> Result<()> {
        let img = &images[origin.image];
        let label = img.label()?;
        self.intensities.extend(extract(&img.pixels, img.width, origin.top, origin.left, self.size));
        self.labels.extend(extract(label, img.width, origin.top, origin.left, self.size).iter().map(|&b| u8::from(b)));
        self.origins.push(origin);
        self.splits.push(split);
        Ok(())
    }
}

/// Draw `count` windows: image uniformly, then top-left uniformly over valid positions.
/// The last `round(val_fraction · count)` draws are tagged validation.
pub fn sample_patches(images: &[GrayImage], count: usize, size: usize, seed: u64, val_fraction: f64) -> Result<PatchSet> {
    if images.is_empty() {
        return Err(Error::Data("no images to sample patches from".into()));
    }
    for img in images {
        if img.width < size || img.height < size {
            return Err(Error::Data(format!(
                "image `{}` is {}x{}, smaller than the {size}x{size} patch",
                img.name, img.width, img.height
            )));
        }
        img.label()?;
    }
    let val = (count as f64 * val_fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = PatchSet {
        size,
        intensities: Vec::with_capacity(count * size * size),
        labels: Vec::with_capacity(count * size * size),
        origins: Vec::with_capacity(count),
        splits: Vec::with_capacity(count),
    };
    for k in 0..count {
        let image = rng.random_range(0..images.len());
        let img = &images[image];
        let top = rng.random_range(0..=img.height - size);
        let left = rng.random_range(0..=img.width - size);
        let split = if k + val >= count { Split::Val } else { Split::Train };
        set.push(images, Origin { image, top, left }, split)?;
    }
    Ok(set)
}

/// Top-left corners of a grid with step `stride` that covers a `height`×`width` image;
/// the last row and column are pinned to the far edge.
pub fn tile_origins(height: usize, width: usize, size: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if height < size || width < size || stride == 0 {
        return Err(Error::Data(format!("cannot tile {height}x{width} with {size}x{size} patches, stride {stride}")));
    }
    let axis = |extent: usize| {
        let mut v: Vec<usize> = (0..=extent - size).step_by(stride).collect();
        if *v.last().unwrap() != extent - size {
            v.push(extent - size);
        }
        v
    };
    let rows = axis(height);
    let cols = axis(width);
    Ok(rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect())
}

/// Average the vessel-class channel of `probs` (`[P, classes, s, s]`) over every patch
/// covering each pixel.
pub fn stitch_predictions(probs: &Tensor<f64>, origins: &[(usize, usize)], height: usize, width: usize) -> Result<Vec<f64>> {
    let [p, classes, s, s2] = probs.dims4("stitch")?;
    if s != s2 || p != origins.len() || classes < 2 {
        return Err(Error::Data(format!(
            "stitch: {p} patches of {classes}x{s}x{s2} for {} origins",
            origins.len()
        )));
    }
    let mut sum = vec![0.0; height * width];
    let mut hits = vec![0u32; height * width];
    let d = probs.data();
    for (k, &(top, left)) in origins.iter().enumerate() {
        if top + s > height || left + s > width {
            return Err(Error::Data(format!("stitch: patch at ({top}, {left}) leaves the {height}x{width} image")));
        }
        let base = (k * classes + 1) * s * s;
        for r in 0..s {
            for c in 0..s {
                let i = (top + r) * width + left + c;
                sum[i] += d[base + r * s + c];
                hits[i] += 1;
            }
        }
    }
    if let Some(i) = hits.iter().position(|&h| h == 0) {
        return Err(Error::Data(format!("stitch: pixel ({}, {}) is not covered by any patch", i / width, i % width)));
    }
    Ok(sum.iter().zip(&hits).map(|(s, &h)| s / f64::from(h)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(name: &str, w: usize, h: usize) -> GrayImage {
        let px = (0..w * h).map(|i| (i % 251) as f64 / 250.0).collect();
        GrayImage::new(name, w, h, px).unwrap().with_label((0..w * h).map(|i| i % 3 == 0).collect()).unwrap()
    }

    #[test]
    fn default_split_counts() {
        let count = 190_000;
        let val = (count as f64 * VAL_FRACTION).round() as usize;
        assert_eq!((count - val, val), (171_000, 19_000));
    }

    #[test]
    fn origins_stay_inside_and_repeat_under_seed() {
        let images = vec![labeled("a", 60, 50), labeled("b", 48, 48)];
        let s1 = sample_patches(&images, 200, 48, 3, 0.1).unwrap();
        let s2 = sample_patches(&images, 200, 48, 3, 0.1).unwrap();
        assert_eq!(s1.origins, s2.origins);
        for o in &s1.origins {
            let img = &images[o.image];
            assert!(o.top + 48 <= img.height && o.left + 48 <= img.width);
        }
        assert_eq!(s1.indices(Split::Val).len(), 20);
        assert_eq!(s1.indices(Split::Val)[0], 180);
    }

    #[test]
    fn small_image_is_named() {
        let err = sample_patches(&[labeled("tiny", 20, 60)], 1, 48, 0, 0.1).unwrap_err();
        assert!(err.to_string().contains("tiny"));
    }

    #[test]
    fn exact_tiling_reassembles() {
        let (h, w, s) = (4, 6, 2);
        let origins = tile_origins(h, w, s, s).unwrap();
        assert_eq!(origins.len(), 6);
        let values: Vec<f64> = (0..h * w).map(|i| i as f64 / 24.0).collect();
        let mut probs = Vec::new();
        for &(t, l) in &origins {
            let win = extract(&values, w, t, l, s);
            probs.extend(win.iter().map(|v| 1.0 - v));
            probs.extend(win);
        }
        let probs = Tensor::new(&[origins.len(), 2, s, s], probs).unwrap();
        assert_eq!(stitch_predictions(&probs, &origins, h, w).unwrap(), values);
    }

    #[test]
    fn overlap_averages_and_gaps_are_reported() {
        let probs = Tensor::new(&[2, 2, 2, 2], vec![0.8, 0.8, 0.8, 0.8, 0.2, 0.2, 0.2, 0.2, 0.4, 0.4, 0.4, 0.4, 0.6, 0.6, 0.6, 0.6]).unwrap();
        let map = stitch_predictions(&probs, &[(0, 0), (0, 1)], 2, 3).unwrap();
        assert!((map[1] - 0.4).abs() < 1e-15 && map[0] == 0.2 && map[2] == 0.6);
        let err = stitch_predictions(&probs, &[(0, 1), (0, 1)], 2, 3).unwrap_err();
        assert!(err.to_string().contains("(0, 0)"), "{err}");
    }

    #[test]
    fn tiling_covers_odd_sizes() {
        let o = tile_origins(50, 61, 48, 16).unwrap();
        assert!(o.contains(&(2, 13)));
        assert!(tile_origins(40, 61, 48, 16).is_err());
    }
}
