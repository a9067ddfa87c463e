use crate::error::{Error, Result};

/// Grayscale image with intensities in [0, 1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub fov: Option<Vec<bool>>,
    /// Vessel = true.
    pub label: Option<Vec<bool>>,
}

impl GrayImage {
    pub fn new(name: impl Into<String>, width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Data(format!(
                "{name}: {} intensities for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!(
                "{name}: intensity {} at ({}, {}) outside [0, 1]",
                pixels[i],
                i / width,
                i % width
            )));
        }
        Ok(Self { name, width, height, pixels, fov: None, label: None })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    fn check_mask(&self, kind: &str, mask: &[bool]) -> Result<()> {
        if mask.len() != self.len() {
            return Err(Error::Data(format!(
                "{}: {kind} mask has {} pixels, image has {}",
                self.name,
                mask.len(),
                self.len()
            )));
        }
        Ok(())
    }

    pub fn with_label(mut self, label: Vec<bool>) -> Result<Self> {
        self.check_mask("label", &label)?;
        self.label = Some(label);
        Ok(self)
    }

    pub fn with_fov(mut self, fov: Vec<bool>) -> Result<Self> {
        self.check_mask("fov", &fov)?;
        self.fov = Some(fov);
        Ok(self)
    }

    pub fn label(&self) -> Result<&[bool]> {
        self.label.as_deref().ok_or_else(|| Error::Data(format!("{}: no label mask", self.name)))
    }
}
