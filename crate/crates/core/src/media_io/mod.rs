//! Frames on disk: the binary PNM codec, the dataset manifest, the synthetic
//! dataset generator and the multi-threaded frame loader with its benchmark.

mod bench;
mod loader;
mod manifest;
mod pnm;
pub mod synthetic;

pub use bench::{bench_loader, BenchReport, BenchRow};
pub use loader::{load_frames_parallel, load_frames_sequential, LoaderConfig};
pub use manifest::{
    load_manifest, DatasetManifest, ObjectEntry, UserEntry, VideoKind, VideoRecord,
};
pub use pnm::{decode_pnm, encode_pnm, read_pnm, write_pnm};
pub use synthetic::{generate_synthetic_dataset, SyntheticSpec, BLANK_SIDECAR, MANIFEST_FILE};

use crate::{Error, Result};

/// A decoded 8-bit raster, row-major with interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::UnsupportedChannels(channels));
        }
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "empty frame {width}x{height}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height}x{channels} frame",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// A frame where every pixel has the same value. `color` must hold
    /// `channels` samples.
    pub fn filled(width: usize, height: usize, color: &[u8]) -> Result<Self> {
        let pixels = color
            .iter()
            .copied()
            .cycle()
            .take(width * height * color.len())
            .collect();
        Self::new(width, height, color.len(), pixels)
    }

    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Sample `c` of the pixel at column `x`, row `y`.
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn transpose(&self) -> Frame {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for x in 0..self.width {
            for y in 0..self.height {
                for c in 0..self.channels {
                    pixels.push(self.sample(x, y, c));
                }
            }
        }
        Frame {
            width: self.height,
            height: self.width,
            channels: self.channels,
            pixels,
        }
    }
}
