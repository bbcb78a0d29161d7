//! Low-attention region detection: sliding-window scan of an image-resolution
//! heatmap, keeping every window whose mean attention falls below the threshold.

use crate::attention::AttentionMap;
use crate::geometry::BBox;
use crate::params::PipelineParams;

/// Summed-area table over an attention map, accumulated in `f64`.
struct IntegralImage {
    width: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    fn new(h: &AttentionMap) -> Self {
        let (w, ht) = (h.width() as usize, h.height() as usize);
        let stride = w + 1;
        let mut sums = vec![0.0f64; stride * (ht + 1)];
        for y in 0..ht {
            let mut row = 0.0;
            for x in 0..w {
                row += h.values()[y * w + x] as f64;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { width: stride, sums }
    }

    fn sum(&self, b: &BBox) -> f64 {
        let at = |x: i64, y: i64| self.sums[y as usize * self.width + x as usize];
        at(b.x1, b.y1) - at(b.x0, b.y1) - at(b.x1, b.y0) + at(b.x0, b.y0)
    }
}

/// Window offsets along one axis: `0, stride, 2·stride, …` plus a final offset
/// flush with the far edge when the regular grid falls short of it.
pub fn window_offsets(len: u32, kernel: u32, stride: u32) -> Vec<u32> {
    if len <= kernel {
        return vec![0];
    }
    let last = len - kernel;
    let mut offs: Vec<u32> = (0..=last).step_by(stride as usize).collect();
    if *offs.last().unwrap() != last {
        offs.push(last);
    }
    offs
}

/// Every window the scan evaluates, in row-major order.
pub fn windows(width: u32, height: u32, kernel: u32, stride: u32) -> Vec<BBox> {
    let kw = kernel.min(width) as i64;
    let kh = kernel.min(height) as i64;
    let xs = window_offsets(width, kernel, stride);
    let ys = window_offsets(height, kernel, stride);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| BBox::from_origin(x as i64, y as i64, kw, kh)))
        .collect()
}

/// Candidate low-attention boxes: windows whose mean attention is strictly below `T`.
pub fn lard(h: &AttentionMap, params: &PipelineParams) -> Vec<BBox> {
    let integral = IntegralImage::new(h);
    windows(h.width(), h.height(), params.kernel, params.stride)
        .into_iter()
        .filter(|b| integral.sum(b) / (b.area() as f64) < params.threshold)
        .collect()
}
