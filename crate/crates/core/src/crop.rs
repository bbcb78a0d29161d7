//! Crop extraction and resizing shared by the low-attention pipeline and the
//! grid baseline.

use image::{Rgb, RgbImage};

use crate::attention::bilinear_tap;
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Bilinear resize with half-pixel-center alignment and edge clamping.
pub fn resize_bilinear(src: &RgbImage, out_w: u32, out_h: u32) -> RgbImage {
    let xs: Vec<_> = (0..out_w).map(|x| bilinear_tap(x, src.width(), out_w)).collect();
    let mut out = RgbImage::new(out_w, out_h);
    for y in 0..out_h {
        let (y0, y1, wy) = bilinear_tap(y, src.height(), out_h);
        for (x, &(x0, x1, wx)) in xs.iter().enumerate() {
            let (a, b) = (src.get_pixel(x0, y0).0, src.get_pixel(x1, y0).0);
            let (c, d) = (src.get_pixel(x0, y1).0, src.get_pixel(x1, y1).0);
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let top = a[ch] as f64 * (1.0 - wx) + b[ch] as f64 * wx;
                let bot = c[ch] as f64 * (1.0 - wx) + d[ch] as f64 * wx;
                px[ch] = (top * (1.0 - wy) + bot * wy).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x as u32, y, Rgb(px));
        }
    }
    out
}

fn copy_region(frame: &RgbImage, b: &BBox) -> RgbImage {
    image::imageops::crop_imm(frame, b.x0 as u32, b.y0 as u32, b.width() as u32, b.height() as u32).to_image()
}

/// Clamp `region` to the frame, copy it out, and stretch it to a square of
/// side `resolution`.
pub fn lace(region: &BBox, frame: &RgbImage, resolution: u32) -> Result<RgbImage> {
    let clamped = region
        .clamp_to(frame.width(), frame.height())
        .ok_or(Error::EmptyCrop(*region))?;
    Ok(resize_bilinear(&copy_region(frame, &clamped), resolution, resolution))
}

/// Boundaries of `parts` equal cells along an axis of length `len`; the last
/// cell absorbs the remainder.
fn partition(len: u32, parts: u32) -> Vec<(u32, u32)> {
    let step = len / parts;
    (0..parts)
        .map(|i| {
            let start = i * step;
            let end = if i + 1 == parts { len } else { start + step };
            (start, end)
        })
        .collect()
}

/// Row-major `rows × cols` partition of a `width × height` frame.
pub fn grid_cells(width: u32, height: u32, rows: u32, cols: u32) -> Vec<BBox> {
    let xs = partition(width, cols);
    let ys = partition(height, rows);
    ys.iter()
        .flat_map(|&(y0, y1)| {
            xs.iter()
                .map(move |&(x0, x1)| BBox::new(x0 as i64, y0 as i64, x1 as i64, y1 as i64))
        })
        .collect()
}

/// Equal-cell crops of the whole frame, each resized like [`lace`].
pub fn grid_crops(frame: &RgbImage, rows: u32, cols: u32, resolution: u32) -> Result<Vec<(BBox, RgbImage)>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParams("grid needs at least one row and column".into()));
    }
    grid_cells(
        frame.width(),
        frame.height(),
        rows.min(frame.height()),
        cols.min(frame.width()),
    )
    .into_iter()
    .map(|cell| Ok((cell, lace(&cell, frame, resolution)?)))
    .collect()
}
