//! Channel-first image tensors and the pixel-level primitives shared by the
//! data builders and the view transforms.

use ndarray::{Array2, Array3, ArrayView3, Axis};

/// A `(channels, height, width)` image with real-valued pixels.
pub type Image = Array3<f64>;

/// Bilinear resize with half-pixel centers (the usual "align corners = false"
/// convention). A same-size resize returns an exact copy.
pub fn resize_bilinear(img: ArrayView3<'_, f64>, out_h: usize, out_w: usize) -> Image {
    let (_, h, w) = img.dim();
    if h == out_h && w == out_w {
        return img.to_owned();
    }
    crop_resize(img, 0.0, 0.0, h as f64, w as f64, out_h, out_w)
}

/// Sample the window `[top, top+crop_h) x [left, left+crop_w)` (in source pixel
/// units, fractional allowed) onto an `out_h x out_w` grid with bilinear
/// interpolation and edge clamping.
pub fn crop_resize(
    img: ArrayView3<'_, f64>,
    top: f64,
    left: f64,
    crop_h: f64,
    crop_w: f64,
    out_h: usize,
    out_w: usize,
) -> Image {
    let (c, h, w) = img.dim();
    let mut out = Image::zeros((c, out_h, out_w));
    let sy = crop_h / out_h as f64;
    let sx = crop_w / out_w as f64;
    for oy in 0..out_h {
        let fy = (top + (oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = (left + (ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let top_row = img[[ch, y0, x0]] * (1.0 - wx) + img[[ch, y0, x1]] * wx;
                let bottom_row = img[[ch, y1, x0]] * (1.0 - wx) + img[[ch, y1, x1]] * wx;
                out[[ch, oy, ox]] = top_row * (1.0 - wy) + bottom_row * wy;
            }
        }
    }
    out
}

pub fn hflip(img: ArrayView3<'_, f64>) -> Image {
    let mut out = img.to_owned();
    out.invert_axis(Axis(2));
    out.as_standard_layout().to_owned()
}

/// Luma for 3-channel images (ITU-R 601 weights), channel mean otherwise.
pub fn luminance(img: ArrayView3<'_, f64>) -> Array2<f64> {
    let (c, h, w) = img.dim();
    if c == 3 {
        let r = img.index_axis(Axis(0), 0);
        let g = img.index_axis(Axis(0), 1);
        let b = img.index_axis(Axis(0), 2);
        &r * 0.299 + &g * 0.587 + &b * 0.114
    } else {
        img.mean_axis(Axis(0))
            .unwrap_or_else(|| Array2::zeros((h, w)))
    }
}

/// Separable Gaussian blur with edge clamping. The kernel is normalized so
/// constant images are fixed points.
pub fn gaussian_blur(img: ArrayView3<'_, f64>, sigma: f64, radius: usize) -> Image {
    let (c, h, w) = img.dim();
    if sigma <= 0.0 || radius == 0 {
        return img.to_owned();
    }
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let r = radius as isize;

    let mut horiz = Image::zeros((c, h, w));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sx = (x as isize + ki as isize - r).clamp(0, w as isize - 1) as usize;
                    acc += k * img[[ch, y, sx]];
                }
                horiz[[ch, y, x]] = acc;
            }
        }
    }
    let mut out = Image::zeros((c, h, w));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sy = (y as isize + ki as isize - r).clamp(0, h as isize - 1) as usize;
                    acc += k * horiz[[ch, sy, x]];
                }
                out[[ch, y, x]] = acc;
            }
        }
    }
    out
}
