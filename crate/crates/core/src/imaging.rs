//! Raster primitives: RGB buffers, binary tamper masks, boxes and the
//! fused-mask renderer shown to the annotator.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mask value marking a tampered pixel.
pub const TAMPERED: u8 = 255;

/// Default minimum component area kept by [`mask_to_boxes`].
pub const DEFAULT_MIN_AREA: usize = 4;

/// Default weights of the fused-mask prompt.
pub const DEFAULT_FUSE_WEIGHTS: (f64, f64) = (0.5, 0.5);

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    Dimension {
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("out of bounds: {0}")]
    Bounds(String),
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

/// Round half away from zero and clamp into the byte range.
#[inline]
pub fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Row-major 8-bit RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuf {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for ImageBuf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageBuf")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageBuf {
    pub const CHANNELS: usize = 3;

    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidBuffer(format!(
                "empty image {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * Self::CHANNELS;
        if data.len() != expected {
            return Err(ImagingError::InvalidBuffer(format!(
                "expected {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Uniformly colored image. Panics on zero dimensions.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.offset(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.offset(x, y);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn bounds(&self) -> BBox {
        BBox {
            x_min: 0,
            y_min: 0,
            x_max: self.width,
            y_max: self.height,
        }
    }

    /// Decodes any PNG or JPEG file into RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImagingError> {
        let img = image::open(path)?.into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ImagingError> {
        let img = image::load_from_memory(bytes)?.into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImagingError> {
        let mut out = std::io::Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )?;
        Ok(out.into_inner())
    }

    pub(crate) fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length is validated at construction")
    }

    pub(crate) fn from_rgb_image(img: image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw()).expect("image crate buffers are well formed")
    }
}

/// Single-channel tamper annotation; every value is 0 or 255.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("foreground", &self.foreground_count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidBuffer(format!(
                "empty mask {width}x{height}"
            )));
        }
        if data.len() != width as usize * height as usize {
            return Err(ImagingError::InvalidBuffer(format!(
                "expected {} mask values, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v != 0 && v != TAMPERED) {
            return Err(ImagingError::InvalidBuffer(format!(
                "mask value {v} is not 0 or 255"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    /// Mask with every listed rectangle filled. Rectangles are clipped to the frame.
    pub fn from_boxes(width: u32, height: u32, boxes: &[BBox]) -> Self {
        let mut mask = Self::empty(width, height);
        for b in boxes {
            for y in b.y_min..b.y_max.min(height) {
                for x in b.x_min..b.x_max.min(width) {
                    mask.set(x, y, true);
                }
            }
        }
        mask
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize] == TAMPERED
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, tampered: bool) {
        self.data[y as usize * self.width as usize + x as usize] =
            if tampered { TAMPERED } else { 0 };
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == TAMPERED).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImagingError> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width,
            self.height,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }

    pub(crate) fn to_gray_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length is validated at construction")
    }
}

/// Axis-aligned box, half-open on both axes: `[x_min, x_max) x [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    /// Panics unless `x_min < x_max` and `y_min < y_max`.
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        assert!(
            x_min < x_max && y_min < y_max,
            "degenerate box ({x_min},{y_min},{x_max},{y_max})"
        );
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn try_new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, ImagingError> {
        if x_min < x_max && y_min < y_max {
            Ok(Self {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            Err(ImagingError::Bounds(format!(
                "degenerate box ({x_min},{y_min},{x_max},{y_max})"
            )))
        }
    }

    pub fn from_origin(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self::new(x, y, x + width, y + height)
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.is_valid() && self.x_max <= width && self.y_max <= height
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_min < x_max && y_min < y_max).then_some(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn to_array(&self) -> [u32; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub(crate) fn check_in(&self, width: u32, height: u32) -> Result<(), ImagingError> {
        if self.fits_in(width, height) {
            Ok(())
        } else {
            Err(ImagingError::Bounds(format!(
                "box {:?} outside {width}x{height} frame",
                self.to_array()
            )))
        }
    }
}

impl Serialize for BBox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x_min, y_min, x_max, y_max] = <[u32; 4]>::deserialize(d)?;
        BBox::try_new(x_min, y_min, x_max, y_max).map_err(serde::de::Error::custom)
    }
}

/// Fused-mask prompt: `out = clamp(round(lambda1 * I + lambda2 * M))`, with the
/// single-channel mask added to every color channel.
pub fn render_fused_mask(
    image: &ImageBuf,
    mask: &BinaryMask,
    lambda1: f64,
    lambda2: f64,
) -> Result<ImageBuf, ImagingError> {
    if image.dims() != mask.dims() {
        return Err(ImagingError::Dimension {
            expected: image.dims(),
            found: mask.dims(),
        });
    }
    for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(0.0..=1.0).contains(&l) {
            return Err(ImagingError::InvalidParameter(format!(
                "{name} = {l} outside [0, 1]"
            )));
        }
    }
    let data = image
        .data
        .chunks_exact(3)
        .zip(&mask.data)
        .flat_map(|(px, &m)| {
            let m = lambda2 * m as f64;
            [
                to_byte(lambda1 * px[0] as f64 + m),
                to_byte(lambda1 * px[1] as f64 + m),
                to_byte(lambda1 * px[2] as f64 + m),
            ]
        })
        .collect();
    Ok(ImageBuf {
        width: image.width,
        height: image.height,
        data,
    })
}

/// Bounding boxes of the 4-connected tampered components with at least
/// `min_area` pixels, ordered by `(y_min, x_min)`.
pub fn mask_to_boxes(mask: &BinaryMask, min_area: usize) -> Vec<BBox> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut boxes = Vec::new();

    for start in 0..w * h {
        if seen[start] || mask.data[start] != TAMPERED {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0usize;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            area += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if !seen[j] && mask.data[j] == TAMPERED {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if area >= min_area {
            boxes.push(BBox::new(
                x0 as u32,
                y0 as u32,
                x1 as u32 + 1,
                y1 as u32 + 1,
            ));
        }
    }
    boxes.sort_by_key(|b| (b.y_min, b.x_min));
    boxes
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

pub fn crop(image: &ImageBuf, region: &BBox) -> Result<ImageBuf, ImagingError> {
    region.check_in(image.width, image.height)?;
    let row_len = region.width() as usize * 3;
    let mut data = Vec::with_capacity(row_len * region.height() as usize);
    for y in region.y_min..region.y_max {
        let start = image.offset(region.x_min, y);
        data.extend_from_slice(&image.data[start..start + row_len]);
    }
    ImageBuf::new(region.width(), region.height(), data)
}

/// Copy of `dst` with `patch` written at `(x, y)`.
pub fn paste(dst: &ImageBuf, patch: &ImageBuf, x: u32, y: u32) -> Result<ImageBuf, ImagingError> {
    let mut out = dst.clone();
    paste_in_place(&mut out, patch, x, y)?;
    Ok(out)
}

pub(crate) fn paste_in_place(
    dst: &mut ImageBuf,
    patch: &ImageBuf,
    x: u32,
    y: u32,
) -> Result<(), ImagingError> {
    let region = BBox::from_origin(x, y, patch.width, patch.height);
    region.check_in(dst.width, dst.height)?;
    let row_len = patch.width as usize * 3;
    for row in 0..patch.height {
        let src = patch.offset(0, row);
        let out = dst.offset(x, y + row);
        dst.data[out..out + row_len].copy_from_slice(&patch.data[src..src + row_len]);
    }
    Ok(())
}
