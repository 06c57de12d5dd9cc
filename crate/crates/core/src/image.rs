//! Planar grayscale or RGB images with values in `[0, 1]`.

use crate::density::{crop_rows, flip_rows};
use crate::error::{config_err, Result};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Channel-major (CHW) samples.
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_planar(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !(channels == 1 || channels == 3) {
            return Err(config_err!("images have 1 or 3 channels, got {channels}"));
        }
        if data.len() != width * height * channels {
            return Err(config_err!(
                "{width}x{height}x{channels} image needs {} samples, got {}",
                width * height * channels,
                data.len()
            ));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    fn plane(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[c * self.plane() + y * self.width + x]
    }

    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        let p = self.plane();
        self.data[c * p + y * self.width + x] = v;
    }

    pub fn flip_horizontal(&self) -> Self {
        let data = self
            .data
            .chunks(self.plane().max(1))
            .flat_map(|plane| flip_rows(plane, self.width))
            .collect();
        Image { data, ..self.clone() }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(w * h * self.channels);
        for plane in self.data.chunks(self.plane().max(1)) {
            data.extend(crop_rows(plane, self.width, self.height, x0, y0, w, h)?);
        }
        Ok(Image {
            width: w,
            height: h,
            channels: self.channels,
            data,
        })
    }

    /// 1xCxHxW tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_float(v)).collect();
        Tensor::from_vec(Shape::new(1, self.channels, self.height, self.width), data)
            .expect("image dims")
    }
}
