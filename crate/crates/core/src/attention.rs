use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major heatmap with values in `[0, 1]`; higher means more attended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl AttentionMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParams("attention map must be at least 1x1".into()));
        }
        if values.len() != width as usize * height as usize {
            return Err(Error::InvalidParams(format!(
                "attention map {}x{} needs {} values, got {}",
                width,
                height,
                width as usize * height as usize,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParams(format!("attention value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    pub fn constant(width: u32, height: u32, value: f32) -> Self {
        Self::new(width, height, vec![value; width as usize * height as usize]).expect("constant map within bounds")
    }

    /// Min-max normalize raw scores into `[0, 1]`; a constant map becomes all 0.5.
    pub fn from_raw(width: u32, height: u32, raw: &[f64]) -> Result<Self> {
        let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let values = if hi - lo > 0.0 {
            raw.iter().map(|&v| ((v - lo) / (hi - lo)) as f32).collect()
        } else {
            vec![0.5; raw.len()]
        };
        Self::new(width, height, values)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Binary mask of pixels strictly below `threshold` (the low-attention pixels).
    pub fn low_mask(&self, threshold: f32) -> Vec<bool> {
        self.values.iter().map(|&v| v < threshold).collect()
    }
}

/// Source coordinate for output index `i` under half-pixel-center alignment,
/// returned as (lower index, upper index, weight of upper).
#[inline]
pub(crate) fn bilinear_tap(i: u32, src_len: u32, dst_len: u32) -> (u32, u32, f64) {
    let s = (i as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
    let s = s.clamp(0.0, (src_len - 1) as f64);
    let lo = s.floor() as u32;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, s - lo as f64)
}

/// Bilinear upsampling of a heatmap to image resolution.
pub fn upsample_heatmap(h: &AttentionMap, target_w: u32, target_h: u32) -> Result<AttentionMap> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidParams("target size must be positive".into()));
    }
    let xs: Vec<_> = (0..target_w).map(|x| bilinear_tap(x, h.width, target_w)).collect();
    let mut values = Vec::with_capacity(target_w as usize * target_h as usize);
    for y in 0..target_h {
        let (y0, y1, wy) = bilinear_tap(y, h.height, target_h);
        for &(x0, x1, wx) in &xs {
            let top = h.get(x0, y0) as f64 * (1.0 - wx) + h.get(x1, y0) as f64 * wx;
            let bot = h.get(x0, y1) as f64 * (1.0 - wx) + h.get(x1, y1) as f64 * wx;
            let v = top * (1.0 - wy) + bot * wy;
            values.push((v as f32).clamp(0.0, 1.0));
        }
    }
    AttentionMap::new(target_w, target_h, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_map_stays_constant() {
        let h = AttentionMap::constant(16, 16, 0.5);
        let up = upsample_heatmap(&h, 256, 256).unwrap();
        assert_eq!((up.width(), up.height()), (256, 256));
        assert!(up.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_sample_extends() {
        let h = AttentionMap::new(1, 1, vec![0.3]).unwrap();
        let up = upsample_heatmap(&h, 7, 5).unwrap();
        assert!(up.values().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn two_by_two_column_ramp() {
        // Per-pixel bilinear formula written out independently:
        // src_x = (x + 0.5) * 2 / 4 - 0.5 clamped to [0, 1]; value = src_x for this map.
        let h = AttentionMap::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = upsample_heatmap(&h, 4, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let sx = ((x as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                assert!((up.get(x, y) as f64 - sx).abs() < 1e-7, "({x},{y})");
            }
        }
        let row: Vec<f32> = (0..4).map(|x| up.get(x, 2)).collect();
        assert_eq!(row, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn rejects_bad_maps() {
        assert!(AttentionMap::new(2, 2, vec![0.0; 3]).is_err());
        assert!(AttentionMap::new(1, 1, vec![1.5]).is_err());
        assert!(AttentionMap::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn from_raw_normalizes() {
        let m = AttentionMap::from_raw(3, 1, &[2.0, 4.0, 3.0]).unwrap();
        assert_eq!(m.values(), &[0.0, 1.0, 0.5]);
        let c = AttentionMap::from_raw(2, 1, &[7.0, 7.0]).unwrap();
        assert_eq!(c.values(), &[0.5, 0.5]);
    }
}
