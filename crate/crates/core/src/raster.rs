//! Pixel grids: binary vessel masks, probability maps, and their PNG/PGM I/O.
//!
//! Coordinates follow image convention: `x` is the column, `y` the row, and
//! pixels are stored row-major. Foreground is `true`.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stenosis::{Grade, StenosisFinding};

/// Default foreground threshold for 8-bit sources.
pub const DEFAULT_THRESHOLD: u8 = 128;

/// Radius of the filled disk drawn for each finding in an overlay.
pub const MARKER_RADIUS: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

/// Row-major: by `y`, then `x`.
impl Ord for PixelPoint {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.row_major().cmp(&other.row_major())
    }
}

impl PartialOrd for PixelPoint {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl PixelPoint {
    pub const fn new(x: u32, y: u32) -> Self {
        PixelPoint { x, y }
    }

    /// Row-major ordering key, `(y, x)`.
    pub fn row_major(self) -> (u32, u32) {
        (self.y, self.x)
    }

    pub fn distance(self, other: PixelPoint) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx.hypot(dy)
    }

    pub fn is_adjacent8(self, other: PixelPoint) -> bool {
        self != other && self.x.abs_diff(other.x) <= 1 && self.y.abs_diff(other.y) <= 1
    }
}

/// Offsets of the 8-neighborhood, clockwise from north.
pub(crate) const NEIGHBORS8: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    pixels: Vec<bool>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroArea { width, height });
        }
        Ok(BinaryMask {
            width,
            height,
            pixels: vec![false; width as usize * height as usize],
        })
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroArea { width, height });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::BufferSize { expected, actual: pixels.len() });
        }
        Ok(BinaryMask { width, height, pixels })
    }

    /// Binarizes 8-bit intensities: foreground iff `value >= threshold`.
    pub fn from_gray(width: u32, height: u32, values: &[u8], threshold: u8) -> Result<Self> {
        let pixels = values.iter().map(|&v| v >= threshold).collect();
        Self::from_pixels(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.pixels[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.pixels[i] = value;
    }

    /// Signed lookup; anything outside the grid reads as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return false;
        }
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub(crate) fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn count_foreground(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Foreground pixels in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = PixelPoint> + '_ {
        let w = self.width as usize;
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(move |(i, _)| PixelPoint::new((i % w) as u32, (i / w) as u32))
    }

    /// Number of foreground pixels in the 8-neighborhood of `(x, y)`.
    pub fn neighbor_count(&self, x: u32, y: u32) -> usize {
        NEIGHBORS8
            .iter()
            .filter(|(dx, dy)| self.get_signed(x as i64 + dx, y as i64 + dy))
            .count()
    }

    /// `true` when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self.pixels.iter().zip(&other.pixels).all(|(&a, &b)| !a || b)
    }

    /// Dilation by the 3x3 square structuring element.
    pub fn dilate8(&self) -> BinaryMask {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    continue;
                }
                let hit = NEIGHBORS8
                    .iter()
                    .any(|(dx, dy)| self.get_signed(x as i64 + dx, y as i64 + dy));
                out.set(x, y, hit);
            }
        }
        out
    }

    /// 0/255 encoding, row-major.
    pub fn to_gray(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| if p { 255 } else { 0 }).collect()
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width, self.height, self.to_gray())
            .expect("buffer length matches dimensions")
    }

    /// Decodes an in-memory PNG or PGM.
    pub fn decode(bytes: &[u8], threshold: u8) -> Result<Self> {
        let reader = image::ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| Error::Decode { path: "<memory>".into(), message: e.to_string() })?;
        let img = reader
            .decode()
            .map_err(|e| Error::Decode { path: "<memory>".into(), message: e.to_string() })?;
        Self::from_dynamic(img, threshold)
    }

    fn from_dynamic(img: DynamicImage, threshold: u8) -> Result<Self> {
        let (width, height) = (img.width(), img.height());
        if width == 0 || height == 0 {
            return Err(Error::ZeroArea { width, height });
        }
        let gray = match img {
            DynamicImage::ImageLuma8(g) => g,
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
                img.to_luma8()
            }
            other => return Err(Error::UnsupportedFormat(format!("{:?}", other.color()))),
        };
        Self::from_gray(width, height, gray.as_raw(), threshold)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        write_image(path.as_ref(), &DynamicImage::ImageLuma8(self.to_image()), ImageFormat::Png)
    }

    /// Binary (P5) PGM with maxval 255.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        bytes.extend(self.to_gray());
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// PNG-encoded bytes of the 0/255 rendering.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        encode_png(&DynamicImage::ImageLuma8(self.to_image()))
    }
}

/// Per-pixel foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ProbMask {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroArea { width, height });
        }
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::BufferSize { expected, actual: values.len() });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Probability { index, value });
        }
        Ok(ProbMask { width, height, values })
    }

    /// 8-bit intensities scaled by 1/255.
    pub fn from_gray(width: u32, height: u32, values: &[u8]) -> Result<Self> {
        Self::new(width, height, values.iter().map(|&v| v as f64 / 255.0).collect())
    }

    /// Hard 0/1 probabilities taken from a binary mask.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        ProbMask {
            width: mask.width,
            height: mask.height,
            values: mask.pixels.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Loads an 8-bit PNG or PGM and binarizes it at `threshold`.
///
/// Multi-channel images are reduced to luma first. 16-bit and floating point
/// sources are rejected.
pub fn load_mask(path: impl AsRef<Path>, threshold: u8) -> Result<BinaryMask> {
    let img = decode_file(path.as_ref())?;
    BinaryMask::from_dynamic(img, threshold)
}

/// Loads an 8-bit raster as probabilities (intensity / 255).
pub fn load_prob(path: impl AsRef<Path>) -> Result<ProbMask> {
    let img = decode_file(path.as_ref())?;
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Err(Error::ZeroArea { width: w, height: h });
    }
    let gray = match img {
        DynamicImage::ImageLuma8(g) => g,
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            img.to_luma8()
        }
        other => return Err(Error::UnsupportedFormat(format!("{:?}", other.color()))),
    };
    ProbMask::from_gray(w, h, gray.as_raw())
}

fn decode_file(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let reader = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader
        .decode()
        .map_err(|e| Error::Decode { path: path.to_path_buf(), message: e.to_string() })
}

fn encode_png(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

fn write_image(path: &Path, img: &DynamicImage, format: ImageFormat) -> Result<()> {
    let bytes = match format {
        ImageFormat::Png => encode_png(img)?,
        other => return Err(Error::Encode(format!("unsupported output format {other:?}"))),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn grade_color(grade: Grade) -> Rgb<u8> {
    match grade {
        Grade::Mild => Rgb([0, 0, 255]),
        Grade::Moderate => Rgb([0, 255, 0]),
        Grade::Severe => Rgb([255, 0, 0]),
    }
}

/// Grayscale rendering of `mask` with one filled disk per finding, colored by
/// grade (blue mild, green moderate, red severe). Severe markers are drawn last.
pub fn render_overlay(mask: &BinaryMask, findings: &[StenosisFinding]) -> Result<RgbImage> {
    for f in findings {
        if !mask.contains(f.location) {
            return Err(Error::OutOfBounds {
                x: f.location.x as i64,
                y: f.location.y as i64,
                width: mask.width,
                height: mask.height,
            });
        }
    }
    let mut img = RgbImage::from_fn(mask.width, mask.height, |x, y| {
        let v = if mask.get(x, y) { 255 } else { 0 };
        Rgb([v, v, v])
    });

    let mut order: Vec<&StenosisFinding> = findings.iter().collect();
    order.sort_by_key(|f| f.grade);
    let r2 = MARKER_RADIUS * MARKER_RADIUS;
    for f in order {
        let color = grade_color(f.grade);
        let (cx, cy) = (f.location.x as i64, f.location.y as i64);
        for dy in -MARKER_RADIUS..=MARKER_RADIUS {
            for dx in -MARKER_RADIUS..=MARKER_RADIUS {
                let (x, y) = (cx + dx, cy + dy);
                if dx * dx + dy * dy > r2 || x < 0 || y < 0 {
                    continue;
                }
                if x < mask.width as i64 && y < mask.height as i64 {
                    img.put_pixel(x as u32, y as u32, color);
                }
            }
        }
    }
    Ok(img)
}

pub fn save_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    write_image(path.as_ref(), &DynamicImage::ImageRgb8(img.clone()), ImageFormat::Png)
}
