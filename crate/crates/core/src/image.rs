//! Binary PGM (P5) and PPM (P6) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An 8-bit image, channel-interleaved, with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: 1,
        msg: msg.into(),
    }
}

impl Image {
    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        Self {
            width,
            height,
            channels: 1,
            pixels,
        }
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Option<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token().ok_or_else(|| parse_err(path, "empty file"))?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(parse_err(path, format!("unsupported magic {other:?}, expected P5 or P6"))),
        };
        let mut num = |what: &str| -> Result<usize> {
            token()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(path, format!("missing or invalid {what}")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(parse_err(path, format!("maxval {maxval} not in 1..=255")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let len = width * height * channels;
        if width == 0 || height == 0 || bytes.len() < start + len {
            return Err(parse_err(path, "truncated raster"));
        }
        let pixels = bytes[start..start + len]
            .iter()
            .map(|&b| ((b as usize * 255 + maxval / 2) / maxval) as u8)
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?, path)
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    /// `[3, H, W]` in `[0, 1]`; gray images are replicated over channels.
    pub fn to_tensor(&self) -> Tensor {
        let (h, w, c) = (self.height, self.width, self.channels);
        Tensor::from_fn(&[3, h, w], |i| {
            let (ch, pix) = (i / (h * w), i % (h * w));
            let src = if c == 1 { 0 } else { ch };
            self.pixels[pix * c + src] as f64 / 255.0
        })
    }
}
