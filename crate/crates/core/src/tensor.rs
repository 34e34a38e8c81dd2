//! Dense f64 tensors and the image tensor type used throughout the crate.
//!
//! All model math runs in f64 so gradient checks against central finite
//! differences are meaningful at tight tolerances.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// An H x W x 3 image with pixel values in [0, 1], stored channel-last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    /// Length = height * width * 3, layout (y, x, c).
    pub pixels: Vec<f64>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;
    pub const MIN_SIDE: usize = 16;

    pub fn zeros(height: usize, width: usize) -> Self {
        ImageTensor {
            height,
            width,
            pixels: vec![0.0; height * width * Self::CHANNELS],
        }
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * Self::CHANNELS + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.pixels[(y * self.width + x) * Self::CHANNELS + c] = v;
    }

    /// Checks the image invariants: sides at least 16, pixels within [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.height < Self::MIN_SIDE || self.width < Self::MIN_SIDE {
            return Err(Error::invariant(
                "images",
                format!(
                    "image sides must be at least {}, got {}x{}",
                    Self::MIN_SIDE,
                    self.height,
                    self.width
                ),
            ));
        }
        if self.pixels.len() != self.height * self.width * Self::CHANNELS {
            return Err(Error::invariant(
                "images",
                "pixel buffer length does not match dimensions",
            ));
        }
        if self.pixels.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invariant("images", "pixel values outside [0, 1]"));
        }
        Ok(())
    }

    /// Converts to a [3, H, W] channel-first tensor for the vision encoder.
    pub fn to_chw(&self) -> Tensor {
        let (h, w) = (self.height, self.width);
        let mut data = vec![0.0; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    data[c * h * w + y * w + x] = self.get(y, x, c);
                }
            }
        }
        Tensor::from_vec(&[3, h, w], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_roundtrip_and_item() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(Tensor::scalar(7.5).item(), 7.5);
    }

    #[test]
    fn image_validation_rejects_small_and_out_of_range() {
        let small = ImageTensor::zeros(8, 32);
        assert!(small.validate().is_err());

        let mut img = ImageTensor::zeros(16, 16);
        assert!(img.validate().is_ok());
        img.set(0, 0, 0, 1.5);
        assert!(img.validate().is_err());
    }

    #[test]
    fn chw_layout_matches_hwc() {
        let mut img = ImageTensor::zeros(16, 16);
        img.set(2, 3, 1, 0.25);
        let chw = img.to_chw();
        assert_eq!(chw.data()[16 * 16 + 2 * 16 + 3], 0.25);
    }
}
