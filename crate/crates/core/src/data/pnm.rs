//! Netpbm gray and color maps: P2/P5 (gray), P3/P6 (color, converted to luminance on read).

use std::fs;
use std::path::Path;

use crate::data::GrayImage;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoding {
    Ascii,
    Binary,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Reader<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::PnmEof(format!("{}: missing {what}", self.name)));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token(what)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::PnmHeader(format!("{}: {what} `{}` is not a number", self.name, String::from_utf8_lossy(tok)))
            })
    }
}

/// Decode an in-memory PNM file. `name` is used in error messages and as the image name.
pub fn decode_pnm(bytes: &[u8], name: &str) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(Error::PnmEof(format!("{name}: missing magic number")));
    }
    let magic = &bytes[..2];
    let (channels, encoding) = match magic {
        b"P2" => (1, Encoding::Ascii),
        b"P5" => (1, Encoding::Binary),
        b"P3" => (3, Encoding::Ascii),
        b"P6" => (3, Encoding::Binary),
        _ => return Err(Error::PnmMagic(String::from_utf8_lossy(magic).into_owned())),
    };
    let mut r = Reader { bytes, pos: 2, name };
    let width = r.number("width")? as usize;
    let height = r.number("height")? as usize;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::PnmHeader(format!("{name}: header: zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::PnmHeader(format!("{name}: header: maxval {maxval} outside 1..=65535")));
    }
    let count = width * height * channels;
    let mut samples = Vec::with_capacity(count);
    match encoding {
        Encoding::Ascii => {
            for _ in 0..count {
                samples.push(r.number("sample")?);
            }
        }
        Encoding::Binary => {
            // exactly one whitespace byte separates the header from the raster
            if !r.bytes.get(r.pos).is_some_and(u8::is_ascii_whitespace) {
                return Err(Error::PnmEof(format!("{name}: missing raster")));
            }
            r.pos += 1;
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            let raster = &bytes[r.pos..];
            if raster.len() < need {
                return Err(Error::PnmEof(format!("{name}: raster has {} of {need} bytes", raster.len())));
            }
            if wide {
                samples.extend(raster[..need].chunks_exact(2).map(|c| u32::from(u16::from_be_bytes([c[0], c[1]]))));
            } else {
                samples.extend(raster[..need].iter().map(|&b| u32::from(b)));
            }
        }
    }
    if let Some(s) = samples.iter().find(|&&s| s > maxval) {
        return Err(Error::PnmHeader(format!("{name}: sample {s} exceeds maxval {maxval}")));
    }
    let scale = f64::from(maxval);
    let pixels = if channels == 1 {
        samples.iter().map(|&s| f64::from(s) / scale).collect()
    } else {
        samples.chunks_exact(3).map(|p| luminance(p[0], p[1], p[2]) / scale).collect()
    };
    GrayImage::new(name, width, height, pixels)
}

/// `0.299 R + 0.587 G + 0.114 B`, exact on gray pixels.
fn luminance(r: u32, g: u32, b: u32) -> f64 {
    if r == g && g == b {
        return f64::from(r);
    }
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)).min(f64::from(r.max(g).max(b)))
}

pub fn read_pnm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    decode_pnm(&bytes, &name).map_err(|e| match e {
        Error::PnmMagic(m) => Error::PnmMagic(format!("{m}` in `{}", path.display())),
        other => other,
    })
}

/// Intensity to an 8-bit sample: `floor(v * 255 + 0.5)`, clamped.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// P5, maxval 255.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| quantize(v)));
    out
}

pub fn write_pnm(image: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(image.width, image.height, &image.pixels)).map_err(|e| Error::io(path, e))
}

pub fn write_mask(mask: &[bool], width: usize, height: usize, path: &Path) -> Result<()> {
    let values: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    fs::write(path, encode_pgm(width, height, &values)).map_err(|e| Error::io(path, e))
}

/// Binary mask from a PNM file: a pixel is set when its intensity is at least one half.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = read_pnm(path)?;
    Ok((img.width, img.height, img.pixels.iter().map(|&v| v >= 0.5).collect()))
}
