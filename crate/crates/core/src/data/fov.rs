use std::collections::VecDeque;

use crate::data::GrayImage;
use crate::error::{Error, Result};

pub const DEFAULT_FOV_THRESHOLD: f64 = 0.05;

/// Pixels brighter than `threshold`, reduced to the largest 4-connected component.
/// A simple stand-in for full fundus-mask estimation; ties keep the component found first
/// in row-major order.
pub fn generate_fov_mask(image: &GrayImage, threshold: f64) -> Vec<bool> {
    let (w, h) = (image.width, image.height);
    let bright: Vec<bool> = image.pixels.iter().map(|&v| v > threshold).collect();
    let mut component = vec![0u32; w * h];
    let mut best = (0u32, 0usize);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !bright[start] || component[start] != 0 {
            continue;
        }
        next += 1;
        component[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if bright[j] && component[j] == 0 {
                    component[j] = next;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
        if size > best.1 {
            best = (next, size);
        }
    }
    component.iter().map(|&c| c != 0 && c == best.0).collect()
}

/// Where the field-of-view mask of an image comes from.
pub trait FovStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    /// Mask for `image`, given the `_fov` file found beside it, if any.
    fn resolve(&self, image: &GrayImage, provided: Option<Vec<bool>>) -> Option<Vec<bool>>;
}

/// Provided mask when present, generated otherwise.
pub struct AutoFov;
/// Always generated from the image.
pub struct GeneratedFov;
/// No mask: every pixel is scored.
pub struct NoFov;

impl FovStrategy for AutoFov {
    fn name(&self) -> &'static str {
        "auto"
    }
    fn resolve(&self, image: &GrayImage, provided: Option<Vec<bool>>) -> Option<Vec<bool>> {
        provided.or_else(|| Some(generate_fov_mask(image, DEFAULT_FOV_THRESHOLD)))
    }
}

impl FovStrategy for GeneratedFov {
    fn name(&self) -> &'static str {
        "generate"
    }
    fn resolve(&self, image: &GrayImage, _: Option<Vec<bool>>) -> Option<Vec<bool>> {
        Some(generate_fov_mask(image, DEFAULT_FOV_THRESHOLD))
    }
}

impl FovStrategy for NoFov {
    fn name(&self) -> &'static str {
        "none"
    }
    fn resolve(&self, _: &GrayImage, _: Option<Vec<bool>>) -> Option<Vec<bool>> {
        None
    }
}

static FOV_STRATEGIES: [&dyn FovStrategy; 3] = [&AutoFov, &GeneratedFov, &NoFov];

pub fn fov_strategy(name: &str) -> Result<&'static dyn FovStrategy> {
    FOV_STRATEGIES.iter().copied().find(|s| s.name() == name).ok_or_else(|| {
        let known: Vec<_> = FOV_STRATEGIES.iter().map(|s| s.name()).collect();
        Error::Data(format!("fov_mode: unknown mode `{name}`; expected one of {known:?}"))
    })
}
