use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} image needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite pixel {} at index {pos}",
                data[pos]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        assert!(value.is_finite());
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Builds an image from f64 values, rounding each to f32.
    pub fn from_f64(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        Self::new(height, width, values.iter().map(|&v| v as f32).collect())
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width) {
            data.extend(row.iter().rev());
        }
        Self { data, ..*self }
    }

    /// Mirror top-bottom.
    pub fn flip_vertical(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width).rev() {
            data.extend_from_slice(row);
        }
        Self { data, ..*self }
    }
}

/// Non-empty, shape-homogeneous list of images.
///
/// `origin_seed` is provenance only: it is not persisted in NSST files and
/// does not take part in equality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Batch {
    images: Vec<Image>,
    origin_seed: u64,
}

impl Batch {
    pub fn new(images: Vec<Image>, origin_seed: u64) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Validation("batch must contain at least one image".into()))?;
        let shape = first.shape();
        if let Some((i, img)) = images
            .iter()
            .enumerate()
            .find(|(_, im)| im.shape() != shape)
        {
            return Err(Error::Shape(format!(
                "image {i} is {}x{}, batch shape is {}x{}",
                img.height(),
                img.width(),
                shape.0,
                shape.1
            )));
        }
        Ok(Self {
            images,
            origin_seed,
        })
    }

    #[inline]
    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn into_images(self) -> Vec<Image> {
        self.images
    }

    #[inline]
    pub fn origin_seed(&self) -> u64 {
        self.origin_seed
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.images.len()
    }

    /// Always false; kept for API symmetry with `len`.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// (height, width) shared by every image.
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.images[0].shape()
    }

    pub fn pixels_per_image(&self) -> usize {
        let (h, w) = self.shape();
        h * w
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Image> {
        self.images.iter()
    }
}

impl PartialEq for Batch {
    fn eq(&self, other: &Self) -> bool {
        self.images == other.images
    }
}

impl<'a> IntoIterator for &'a Batch {
    type Item = &'a Image;
    type IntoIter = std::slice::Iter<'a, Image>;

    fn into_iter(self) -> Self::IntoIter {
        self.images.iter()
    }
}
