//! Raster plumbing: PNG decoding, thresholding, nearest-neighbour resizing and
//! connected-component isolation for binary lesion masks.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage as LumaBuffer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default threshold separating background from foreground in stored masks.
pub const DEFAULT_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("failed to write {path}: {reason}")]
    Encode { path: PathBuf, reason: String },
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer has {actual} entries, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("mask pixels must be 0 or 1, found {0}")]
    NonBinary(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "4" | "four" => Some(Connectivity::Four),
            "8" | "eight" => Some(Connectivity::Eight),
            _ => None,
        }
    }

    pub fn as_number(self) -> u8 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Decoded 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Binary raster: 0 is background, 1 is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    source: Option<PathBuf>,
}

impl MaskImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if let Some(&bad) = pixels.iter().find(|&&p| p > 1) {
            return Err(ImageError::NonBinary(bad));
        }
        Ok(Self {
            width,
            height,
            pixels,
            source: None,
        })
    }

    /// All-background mask.
    pub fn empty(width: usize, height: usize) -> Result<Self, ImageError> {
        Self::new(width, height, vec![0; width * height])
    }

    /// Builds a mask from a predicate evaluated at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(u8::from(f(x, y)));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn with_source(mut self, source: impl Into<PathBuf>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] != 0
    }

    /// Bounds-checked lookup with signed coordinates; outside reads as background.
    #[inline]
    pub fn at(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.pixels[y as usize * self.width + x as usize] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.pixels[y * self.width + x] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0)
    }

    /// First foreground pixel in row-major order.
    pub fn first_foreground(&self) -> Option<(usize, usize)> {
        self.pixels
            .iter()
            .position(|&p| p != 0)
            .map(|i| (i % self.width, i / self.width))
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    /// Rotates 90° clockwise on screen: (x, y) -> (h - 1 - y, x).
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let nx = h - 1 - y;
                let ny = x;
                out[ny * h + nx] = self.pixels[y * w + x];
            }
        }
        Self {
            width: h,
            height: w,
            pixels: out,
            source: self.source.clone(),
        }
    }

    /// Pixel replication by an integer factor.
    pub fn upscale(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let (w, h) = (self.width * factor, self.height * factor);
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = self.pixels[(y / factor) * self.width + x / factor];
            }
        }
        Self {
            width: w,
            height: h,
            pixels: out,
            source: self.source.clone(),
        }
    }

    /// Renders as an 8-bit image with foreground at 255.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| p * 255).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        save_gray_png(&self.to_gray(), path)
    }
}

/// Decodes a PNG into luminance.
///
/// Colour inputs are reduced with Rec. 601 weights and rounded; grey inputs
/// pass through unchanged (16-bit grey keeps its high byte). Alpha is ignored.
/// PNG stores RGB, so no channel reordering is needed before the reduction.
pub fn decode_gray(path: &Path) -> Result<GrayImage, ImageError> {
    let img = image::open(path).map_err(|e| ImageError::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| (p.0[0] >> 8) as u8).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| (p.0[0] >> 8) as u8).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| rec601_luma(p.0[0], p.0[1], p.0[2]))
            .collect(),
    };
    GrayImage::new(width, height, pixels)
}

/// Rec. 601 luma, rounded to nearest.
pub fn rec601_luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<(), ImageError> {
    let buf = LumaBuffer::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
        .expect("buffer size checked at construction");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ImageError::Encode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Pixel at or above `threshold` becomes foreground.
pub fn binarize(img: &GrayImage, threshold: u8) -> MaskImage {
    MaskImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| u8::from(p >= threshold)).collect(),
        source: None,
    }
}

/// Nearest-neighbour resampling; source index is `floor(dst * src_len / dst_len)`.
pub fn resize_nearest(mask: &MaskImage, width: usize, height: usize) -> Result<MaskImage, ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions { width, height });
    }
    if width == mask.width && height == mask.height {
        return Ok(mask.clone());
    }
    let xs: Vec<usize> = (0..width).map(|x| x * mask.width / width).collect();
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy = y * mask.height / height;
        let row = &mask.pixels[sy * mask.width..(sy + 1) * mask.width];
        pixels.extend(xs.iter().map(|&sx| row[sx]));
    }
    Ok(MaskImage {
        width,
        height,
        pixels,
        source: mask.source.clone(),
    })
}

/// Labels foreground components; returns the label image (0 = background)
/// and per-label pixel counts (index 0 unused). Labels follow row-major order
/// of each component's first pixel.
pub fn label_components(mask: &MaskImage, connectivity: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if mask.pixels[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0usize;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.pixels[j] != 0 && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest connected component. Ties go to the component whose
/// first pixel comes first in row-major order.
pub fn largest_component(mask: &MaskImage, connectivity: Connectivity) -> MaskImage {
    let (labels, sizes) = label_components(mask, connectivity);
    let mut best = 0usize;
    for (label, &size) in sizes.iter().enumerate().skip(1) {
        if size > sizes[best] {
            best = label;
        }
    }
    let pixels = if best == 0 {
        vec![0; mask.pixels.len()]
    } else {
        labels.iter().map(|&l| u8::from(l as usize == best)).collect()
    };
    MaskImage {
        width: mask.width,
        height: mask.height,
        pixels,
        source: mask.source.clone(),
    }
}

/// Fills background regions not reachable from the image border. Background
/// connectivity is the dual of the foreground connectivity.
pub fn fill_holes(mask: &MaskImage, foreground: Connectivity) -> MaskImage {
    let (w, h) = (mask.width, mask.height);
    let background = match foreground {
        Connectivity::Eight => Connectivity::Four,
        Connectivity::Four => Connectivity::Eight,
    };
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && mask.pixels[y * w + x] == 0 {
                outside[y * w + x] = true;
                queue.push_back(y * w + x);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for &(dx, dy) in background.offsets() {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if mask.pixels[j] == 0 && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    MaskImage {
        width: w,
        height: h,
        pixels: outside.iter().map(|&o| u8::from(!o)).collect(),
        source: mask.source.clone(),
    }
}
