use crate::data::GrayImage;
use crate::error::{Error, Result};

/// Affine intensity map `(v − mean) / std` applied to every patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    pub const IDENTITY: Self = Self { mean: 0.0, std: 1.0 };

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// How the patch normalization is derived from the training images.
pub trait NormalizeStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, images: &[GrayImage]) -> Result<Normalization>;
}

/// Global mean and standard deviation over all training pixels.
pub struct Standardize;
/// Intensities left in [0, 1].
pub struct Unit;

impl NormalizeStrategy for Standardize {
    fn name(&self) -> &'static str {
        "standardize"
    }

    fn fit(&self, images: &[GrayImage]) -> Result<Normalization> {
        let n: usize = images.iter().map(GrayImage::len).sum();
        if n < 2 {
            return Err(Error::Data("standardize needs at least two training pixels".into()));
        }
        let mean = images.iter().flat_map(|i| &i.pixels).sum::<f64>() / n as f64;
        let var = images.iter().flat_map(|i| &i.pixels).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var <= 0.0 {
            return Err(Error::Data("standardize: training pixels are constant".into()));
        }
        Ok(Normalization { mean, std: var.sqrt() })
    }
}

impl NormalizeStrategy for Unit {
    fn name(&self) -> &'static str {
        "unit"
    }

    fn fit(&self, _: &[GrayImage]) -> Result<Normalization> {
        Ok(Normalization::IDENTITY)
    }
}

static NORMALIZERS: [&dyn NormalizeStrategy; 2] = [&Standardize, &Unit];

pub fn normalize_strategy(name: &str) -> Result<&'static dyn NormalizeStrategy> {
    NORMALIZERS.iter().copied().find(|s| s.name() == name).ok_or_else(|| {
        let known: Vec<_> = NORMALIZERS.iter().map(|s| s.name()).collect();
        Error::Data(format!("normalize_mode: unknown mode `{name}`; expected one of {known:?}"))
    })
}
