//! Signal ingestion and output: 8-bit PNG images and raw `.f32` range
//! images, plus the PSNR metric.

use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use thiserror::Error;

/// Reported in place of an infinite PSNR (identical signals).
pub const PSNR_SENTINEL_DB: f64 = 99.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {message}")]
    Decode { path: String, message: String },
    #[error("{path}: unsupported image layout {layout} (need 8-bit gray or RGB)")]
    UnsupportedLayout { path: String, layout: String },
    #[error("{path}: range image needs {expected} bytes for {height}x{width}, file has {actual}")]
    RangeLength {
        path: String,
        height: usize,
        width: usize,
        expected: usize,
        actual: usize,
    },
    #[error("signal shape {height}x{width}x{channels} needs {expected} values, got {actual}")]
    Shape {
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("signal value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("signal is empty")]
    Empty,
    #[error("channel count {0} not supported (need 1 or 3)")]
    Channels(usize),
    #[error("signals differ in shape: {a:?} vs {b:?}")]
    DimMismatch {
        a: (usize, usize, usize),
        b: (usize, usize, usize),
    },
    #[error("cannot write {what} with {channels} channels")]
    Unwritable { what: &'static str, channels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueDomain {
    /// 8-bit image scaled into `[0, 1]`.
    U8Image,
    /// Floating-point measurements such as LiDAR ranges.
    FloatRange,
}

/// `H × W × C` samples, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    domain: ValueDomain,
}

impl SignalTensor {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        domain: ValueDomain,
    ) -> Result<Self, DataError> {
        if height == 0 || width == 0 {
            return Err(DataError::Empty);
        }
        if channels != 1 && channels != 3 {
            return Err(DataError::Channels(channels));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(DataError::Shape {
                height,
                width,
                channels,
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            domain,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Load an 8-bit grayscale or RGB PNG, scaled to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<SignalTensor, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let img =
        image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
            DataError::Decode {
                path: path.display().to_string(),
                message: e.to_string(),
            }
        })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(DataError::UnsupportedLayout {
                path: path.display().to_string(),
                layout: format!("{:?}", other.color()),
            })
        }
    };
    let data = raw.into_iter().map(|v| v as f32 / 255.0).collect();
    SignalTensor::new(h, w, channels, data, ValueDomain::U8Image)
}

/// Write as an 8-bit PNG; values are clamped to `[0, 1]` and rounded.
pub fn save_image(signal: &SignalTensor, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let raw: Vec<u8> = signal
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (w, h) = (signal.width as u32, signal.height as u32);
    let img = match signal.channels {
        1 => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("buffer sized from dims"),
        ),
        3 => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("buffer sized from dims"),
        ),
        c => {
            return Err(DataError::Unwritable {
                what: "PNG",
                channels: c,
            })
        }
    };
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| DataError::Decode {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

/// Load a raw little-endian fp32 range image of `height × width` samples.
pub fn load_range_image(
    path: impl AsRef<Path>,
    height: usize,
    width: usize,
) -> Result<SignalTensor, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = 4 * height * width;
    if bytes.len() != expected {
        return Err(DataError::RangeLength {
            path: path.display().to_string(),
            height,
            width,
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    SignalTensor::new(height, width, 1, data, ValueDomain::FloatRange)
}

pub fn save_range_image(signal: &SignalTensor, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    if signal.channels != 1 {
        return Err(DataError::Unwritable {
            what: "range image",
            channels: signal.channels,
        });
    }
    let bytes: Vec<u8> = signal.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(io_err(path))
}

/// Peak used by [`psnr`]: 1.0 for 8-bit images, the reference's dynamic
/// range for float data (1.0 if the reference is constant).
pub fn psnr_peak(reference: &SignalTensor) -> f64 {
    match reference.domain {
        ValueDomain::U8Image => 1.0,
        ValueDomain::FloatRange => {
            let (lo, hi) = reference
                .data
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v as f64), hi.max(v as f64))
                });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        }
    }
}

/// `10·log10(peak² / MSE)` with the peak from `reference`; identical inputs
/// give [`PSNR_SENTINEL_DB`].
pub fn psnr(reference: &SignalTensor, test: &SignalTensor) -> Result<f64, DataError> {
    if reference.dims() != test.dims() {
        return Err(DataError::DimMismatch {
            a: reference.dims(),
            b: test.dims(),
        });
    }
    let mse = reference
        .data
        .iter()
        .zip(&test.data)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        / reference.data.len() as f64;
    Ok(psnr_from_mse(mse, psnr_peak(reference)))
}

/// PSNR in dB for a given MSE and peak, capped at [`PSNR_SENTINEL_DB`].
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_SENTINEL_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_SENTINEL_DB)
}

/// Smooth diagonal ramp `(r + c) / (H + W − 2)` quantized to 8 bits.
pub fn linear_gradient(height: usize, width: usize) -> SignalTensor {
    let span = (height + width).saturating_sub(2).max(1) as f32;
    let data = (0..height)
        .flat_map(|r| (0..width).map(move |c| ((r + c) as f32 / span * 255.0).round() / 255.0))
        .collect();
    SignalTensor::new(height, width, 1, data, ValueDomain::U8Image).expect("valid synthetic shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, data: Vec<f32>) -> SignalTensor {
        SignalTensor::new(h, w, 1, data, ValueDomain::U8Image).unwrap()
    }

    #[test]
    fn tensor_validation() {
        assert!(matches!(
            SignalTensor::new(2, 2, 1, vec![0.0; 3], ValueDomain::U8Image),
            Err(DataError::Shape { .. })
        ));
        assert!(matches!(
            SignalTensor::new(0, 2, 1, vec![], ValueDomain::U8Image),
            Err(DataError::Empty)
        ));
        assert!(matches!(
            SignalTensor::new(1, 1, 2, vec![0.0; 2], ValueDomain::U8Image),
            Err(DataError::Channels(2))
        ));
        assert!(matches!(
            SignalTensor::new(1, 2, 1, vec![0.0, f32::NAN], ValueDomain::FloatRange),
            Err(DataError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn psnr_formula_and_sentinel() {
        let a = gray(2, 2, vec![0.2, 0.4, 0.6, 0.8]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_SENTINEL_DB);
        let b = gray(2, 2, vec![0.3, 0.5, 0.7, 0.9]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        let c = gray(1, 4, vec![0.0; 4]);
        assert!(matches!(psnr(&a, &c), Err(DataError::DimMismatch { .. })));
    }

    #[test]
    fn range_peak_is_dynamic_range() {
        let a = SignalTensor::new(1, 3, 1, vec![2.0, 4.0, 6.0], ValueDomain::FloatRange).unwrap();
        assert_eq!(psnr_peak(&a), 4.0);
        let flat = SignalTensor::new(1, 2, 1, vec![5.0, 5.0], ValueDomain::FloatRange).unwrap();
        assert_eq!(psnr_peak(&flat), 1.0);
    }

    #[test]
    fn gradient_fixture_spans_unit_range() {
        let g = linear_gradient(16, 16);
        assert_eq!(g.get(0, 0, 0), 0.0);
        assert_eq!(g.get(15, 15, 0), 1.0);
        assert_eq!(linear_gradient(1, 1).data(), &[0.0]);
    }
}
