//! Ground-truth density maps from point annotations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Default Gaussian bandwidth in source pixels.
pub const DEFAULT_SIGMA: f64 = 4.0;

/// Kernels are truncated at this many standard deviations.
pub const TRUNCATION_RADIUS: f64 = 3.0;

/// Tile edge of the fixed accumulation order used by [`sum_count`].
const SUM_TILE: usize = 8;

/// Point annotations for one image, in pixels with the origin at the top-left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// Image path (or identifier for synthetic scenes).
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub points: Vec<[f64; 2]>,
}

impl Annotation {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// Every point must lie in `[0, width) × [0, height)`.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Annotation {
                image: self.image.clone(),
                detail: format!("image extents must be positive, got {}x{}", self.width, self.height),
            });
        }
        for (i, &[x, y]) in self.points.iter().enumerate() {
            let inside = x.is_finite()
                && y.is_finite()
                && (0.0..self.width as f64).contains(&x)
                && (0.0..self.height as f64).contains(&y);
            if !inside {
                return Err(Error::Annotation {
                    image: self.image.clone(),
                    detail: format!(
                        "point #{i} ({x}, {y}) lies outside the {}x{} image",
                        self.width, self.height
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Non-negative map whose element sum is a person count.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    /// `[height, width]`.
    pub values: Tensor,
    /// Downsampling factor relative to the source image.
    pub scale: usize,
}

impl DensityMap {
    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn count(&self) -> f64 {
        sum_count(self)
    }
}

/// Places one truncated Gaussian per point. Each kernel is renormalized after
/// truncation and border clipping, so the map sums to the point count.
pub fn generate_density(ann: &Annotation, sigma: f64) -> Result<DensityMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Contract(format!("sigma must be positive, got {sigma}")));
    }
    ann.validate()?;
    let (h, w) = (ann.height, ann.width);
    let mut map = vec![0.0 as Float; h * w];
    let radius = TRUNCATION_RADIUS * sigma;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let mut kernel: Vec<(usize, f64)> = Vec::new();

    for &[x, y] in &ann.points {
        kernel.clear();
        let x_lo = ((x - radius - 0.5).floor().max(0.0)) as usize;
        let x_hi = ((x + radius - 0.5).ceil().max(0.0) as usize).min(w - 1);
        let y_lo = ((y - radius - 0.5).floor().max(0.0)) as usize;
        let y_hi = ((y + radius - 0.5).ceil().max(0.0) as usize).min(h - 1);
        let mut total = 0.0;
        for py in y_lo..=y_hi {
            let dy = py as f64 + 0.5 - y;
            for px in x_lo..=x_hi {
                let dx = px as f64 + 0.5 - x;
                let d2 = dx * dx + dy * dy;
                if d2 <= radius * radius {
                    let v = (-d2 * inv_two_var).exp();
                    total += v;
                    kernel.push((py * w + px, v));
                }
            }
        }
        if kernel.is_empty() || total <= 0.0 {
            // bandwidth narrower than a pixel: all mass on the containing pixel
            map[y as usize * w + x as usize] += 1.0;
            continue;
        }
        for &(idx, v) in &kernel {
            map[idx] += (v / total) as Float;
        }
    }
    Ok(DensityMap {
        values: Tensor::new(&[h, w], map)?,
        scale: 1,
    })
}

/// Sums each `factor×factor` block (row-major within the block).
pub fn downsample_sum(map: &DensityMap, factor: usize) -> Result<DensityMap> {
    let (h, w) = (map.height(), map.width());
    if factor == 0 {
        return Err(Error::Contract("downsample factor must be positive".into()));
    }
    for (axis, extent) in [("height", h), ("width", w)] {
        if extent % factor != 0 {
            return Err(Error::dim(
                "downsample_sum",
                axis,
                format!("extent {extent} is not divisible by {factor}"),
            ));
        }
    }
    let values = block_sums(map.values.data(), h, w, factor);
    Ok(DensityMap {
        values: Tensor::new(&[h / factor, w / factor], values)?,
        scale: map.scale * factor,
    })
}

/// Block sums with partial blocks at the bottom/right edges.
fn block_sums(data: &[Float], h: usize, w: usize, f: usize) -> Vec<Float> {
    let (bh, bw) = (h.div_ceil(f), w.div_ceil(f));
    let mut out = Vec::with_capacity(bh * bw);
    for by in 0..bh {
        for bx in 0..bw {
            let mut acc: Float = 0.0;
            for y in by * f..((by + 1) * f).min(h) {
                for x in bx * f..((bx + 1) * f).min(w) {
                    acc += data[y * w + x];
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Element sum of a map.
///
/// Accumulation runs over 8×8 tiles, then recursively over the grid of tile
/// sums. Because [`downsample_sum`] with factor 8 produces exactly those tile
/// sums, the count of a map and of its 8× downsampling agree bit for bit.
pub fn sum_count(map: &DensityMap) -> f64 {
    tiled_sum(map.values.data(), map.height(), map.width()) as f64
}

/// Tile-recursive sum of a row-major `h×w` slice.
pub fn tiled_sum(data: &[Float], h: usize, w: usize) -> Float {
    if h * w == 1 {
        return data[0];
    }
    let partial = block_sums(data, h, w, SUM_TILE);
    tiled_sum(&partial, h.div_ceil(SUM_TILE), w.div_ceil(SUM_TILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(w: usize, h: usize, points: &[[f64; 2]]) -> Annotation {
        Annotation {
            image: "test".into(),
            width: w,
            height: h,
            points: points.to_vec(),
        }
    }

    #[test]
    fn single_point_sums_to_one() {
        let m = generate_density(&ann(64, 64, &[[32.0, 32.0]]), 4.0).unwrap();
        assert!((sum_count(&m) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn five_points_sum_to_five_even_at_borders() {
        let pts = [[0.0, 0.0], [63.9, 63.9], [0.2, 40.0], [31.0, 0.1], [12.5, 50.5]];
        let m = generate_density(&ann(64, 64, &pts), 4.0).unwrap();
        assert!((sum_count(&m) - 5.0).abs() <= 5e-6);
    }

    #[test]
    fn coincident_points_double_the_peak() {
        let single = generate_density(&ann(32, 32, &[[10.3, 20.7]]), 3.0).unwrap();
        let double = generate_density(&ann(32, 32, &[[10.3, 20.7], [10.3, 20.7]]), 3.0).unwrap();
        assert!((sum_count(&double) - 2.0).abs() <= 2e-6);
        for (a, b) in single.values.data().iter().zip(double.values.data()) {
            assert!((2.0 * a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn out_of_bounds_point_is_named() {
        let err = generate_density(&ann(16, 16, &[[1.0, 1.0], [16.0, 3.0]]), 2.0).unwrap_err();
        assert!(err.to_string().contains("point #1"), "{err}");
    }

    #[test]
    fn tiny_sigma_puts_mass_on_one_pixel() {
        let m = generate_density(&ann(8, 8, &[[3.9, 2.1]]), 0.05).unwrap();
        assert_eq!(m.values.data()[2 * 8 + 3], 1.0);
        assert_eq!(sum_count(&m), 1.0);
    }

    #[test]
    fn downsample_all_ones() {
        let m = DensityMap {
            values: Tensor::full(&[4, 4], 1.0),
            scale: 1,
        };
        let d = downsample_sum(&m, 2).unwrap();
        assert_eq!(d.values.data(), &[4.0; 4]);
        assert_eq!(d.scale, 2);
        assert_eq!(sum_count(&d), 16.0);
        assert_eq!(downsample_sum(&m, 1).unwrap().values, m.values);
        assert!(downsample_sum(&m, 3).is_err());
    }

    #[test]
    fn factor_eight_preserves_count_bitwise() {
        let pts: Vec<[f64; 2]> = (0..37).map(|i| [(i * 13 % 64) as f64 + 0.37, (i * 29 % 48) as f64 + 0.81]).collect();
        let m = generate_density(&ann(64, 48, &pts), 2.5).unwrap();
        let d = downsample_sum(&m, 8).unwrap();
        assert_eq!(sum_count(&m), sum_count(&d));
    }

    #[test]
    fn sum_count_adds_constant_per_cell() {
        let zero = DensityMap {
            values: Tensor::zeros(&[5, 7]),
            scale: 1,
        };
        assert_eq!(sum_count(&zero), 0.0);
        let eps = DensityMap {
            values: Tensor::full(&[5, 7], 0.25),
            scale: 1,
        };
        assert_eq!(sum_count(&eps), 0.25 * 35.0);
    }
}
