//! Image preparation: optional resize, grayscale conversion and local
//! histogram equalization that leaves the white background untouched.
//!
//! Input images are RGB photographs of cross-sections over a background
//! segmented to pure white (255 on every channel). Equalization would smear
//! that background into the histogram, so it is swapped for the mean
//! foreground intensity first and restored afterwards.

use image::{imageops, GrayImage, RgbImage};

use crate::geometry::Point;
use crate::{Error, Result};

/// Intensity that marks background pixels throughout the pipeline.
pub const BACKGROUND: u8 = 255;

/// Contrast limit handed to the equalizer.
pub const CLAHE_CLIP_LIMIT: f64 = 10.0;

/// Equalizer tile grid (columns, rows).
pub const CLAHE_GRID: (u32, u32) = (8, 8);

/// Sizing and pith placement for [`preprocess`].
#[derive(Debug, Clone)]
pub struct PreprocessParams {
    /// Pith position in input-image coordinates.
    pub pith: Point,
    /// Target height; `None` keeps the native size. Must be paired with
    /// `width`.
    pub height: Option<u32>,
    /// Target width; `None` keeps the native size.
    pub width: Option<u32>,
}

/// Result of [`preprocess`]: the working grayscale image plus the pith
/// rescaled into it.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub gray: GrayImage,
    pub pith: Point,
    /// Working-to-input scale factors, used to map results back.
    pub scale_x: f64,
    pub scale_y: f64,
}

/// Resizes (when requested), converts to grayscale and equalizes.
pub fn preprocess(rgb: &RgbImage, params: &PreprocessParams) -> Result<Preprocessed> {
    if rgb.width() == 0 || rgb.height() == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let (in_w, in_h) = (rgb.width(), rgb.height());
    let resized;
    let rgb = match (params.width, params.height) {
        (Some(w), Some(h)) if (w, h) != (in_w, in_h) => {
            if w == 0 || h == 0 {
                return Err(Error::InvalidParam("target size must be positive".into()));
            }
            resized = imageops::resize(rgb, w, h, imageops::FilterType::Lanczos3);
            &resized
        }
        (Some(_), Some(_)) => rgb,
        (None, None) => rgb,
        _ => {
            return Err(Error::InvalidParam(
                "height and width must be given together".into(),
            ));
        }
    };
    let scale_x = rgb.width() as f64 / in_w as f64;
    let scale_y = rgb.height() as f64 / in_h as f64;
    let pith = Point::new(params.pith.x * scale_x, params.pith.y * scale_y);
    let (w, h) = (rgb.width() as f64 - 1.0, rgb.height() as f64 - 1.0);
    if !(pith.x > 0.0 && pith.x < w && pith.y > 0.0 && pith.y < h) {
        return Err(Error::PithOutOfBounds {
            cy: pith.y,
            cx: pith.x,
            height: rgb.height(),
            width: rgb.width(),
        });
    }
    let gray = to_gray_601(rgb);
    let gray = equalize(&gray);
    Ok(Preprocessed {
        gray,
        pith,
        scale_x,
        scale_y,
    })
}

/// ITU-R 601 luma: `0.299 R + 0.587 G + 0.114 B`, rounded.
pub fn to_gray_601(rgb: &RgbImage) -> GrayImage {
    GrayImage::from_fn(rgb.width(), rgb.height(), |x, y| {
        let p = rgb.get_pixel(x, y).0;
        let luma = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
        image::Luma([luma.round().min(255.0) as u8])
    })
}

/// Contrast-limited adaptive equalization with background handling.
///
/// Pixels at exactly [`BACKGROUND`] are treated as background: they are
/// replaced by the mean foreground intensity while the equalizer runs and
/// forced back to 255 afterwards, so the background set of the input is
/// preserved verbatim. An all-background image is returned unchanged.
pub fn equalize(gray: &GrayImage) -> GrayImage {
    let mask: Vec<bool> = gray.pixels().map(|p| p.0[0] == BACKGROUND).collect();
    let mut sum = 0u64;
    let mut count = 0u64;
    for (p, bg) in gray.pixels().zip(&mask) {
        if !bg {
            sum += p.0[0] as u64;
            count += 1;
        }
    }
    if count == 0 {
        return gray.clone();
    }
    let mean = ((sum as f64 / count as f64).round() as u8).min(254);
    let mut work = gray.clone();
    for (p, bg) in work.pixels_mut().zip(&mask) {
        if *bg {
            p.0[0] = mean;
        }
    }
    let mut out = clahe(&work, CLAHE_CLIP_LIMIT, CLAHE_GRID);
    for (p, bg) in out.pixels_mut().zip(&mask) {
        if *bg {
            p.0[0] = BACKGROUND;
        }
    }
    out
}

/// Reflects an index into `[0, n)` without repeating the border sample.
fn reflect101(i: i64, n: i64) -> i64 {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i
}

/// Contrast-limited adaptive histogram equalization over a tile grid.
///
/// The image is virtually extended with reflected borders to a size
/// divisible by the grid, per-tile mapping functions are built from clipped
/// histograms, and every output pixel blends the four surrounding tile
/// mappings bilinearly.
pub fn clahe(gray: &GrayImage, clip_limit: f64, grid: (u32, u32)) -> GrayImage {
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    let (gw, gh) = (grid.0 as i64, grid.1 as i64);
    assert!(gw > 0 && gh > 0 && clip_limit > 0.0);
    let tile_w = (w + gw - 1) / gw;
    let tile_h = (h + gh - 1) / gh;
    let tile_area = (tile_w * tile_h) as f64;
    let clip = ((clip_limit * tile_area / 256.0) as i64).max(1);

    let sample = |x: i64, y: i64| -> u8 {
        let x = reflect101(x, w);
        let y = reflect101(y, h);
        gray.get_pixel(x as u32, y as u32).0[0]
    };

    // One 256-entry lookup table per tile.
    let mut luts = vec![[0u8; 256]; (gw * gh) as usize];
    for ty in 0..gh {
        for tx in 0..gw {
            let mut hist = [0i64; 256];
            for y in ty * tile_h..(ty + 1) * tile_h {
                for x in tx * tile_w..(tx + 1) * tile_w {
                    hist[sample(x, y) as usize] += 1;
                }
            }
            let mut clipped = 0i64;
            for bin in hist.iter_mut() {
                if *bin > clip {
                    clipped += *bin - clip;
                    *bin = clip;
                }
            }
            let batch = clipped / 256;
            let mut residual = clipped - batch * 256;
            for bin in hist.iter_mut() {
                *bin += batch;
            }
            if residual > 0 {
                let step = (256 / residual).max(1) as usize;
                let mut i = 0;
                while i < 256 && residual > 0 {
                    hist[i] += 1;
                    residual -= 1;
                    i += step;
                }
            }
            let lut = &mut luts[(ty * gw + tx) as usize];
            let scale = 255.0 / tile_area;
            let mut cum = 0i64;
            for (value, bin) in hist.iter().enumerate() {
                cum += bin;
                lut[value] = (cum as f64 * scale).round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    let mut out = GrayImage::new(gray.width(), gray.height());
    for y in 0..h {
        let tyf = y as f64 / tile_h as f64 - 0.5;
        let ty0 = tyf.floor() as i64;
        let fy = tyf - ty0 as f64;
        let ty0c = ty0.clamp(0, gh - 1);
        let ty1c = (ty0 + 1).clamp(0, gh - 1);
        for x in 0..w {
            let txf = x as f64 / tile_w as f64 - 0.5;
            let tx0 = txf.floor() as i64;
            let fx = txf - tx0 as f64;
            let tx0c = tx0.clamp(0, gw - 1);
            let tx1c = (tx0 + 1).clamp(0, gw - 1);
            let v = gray.get_pixel(x as u32, y as u32).0[0] as usize;
            let p00 = luts[(ty0c * gw + tx0c) as usize][v] as f64;
            let p01 = luts[(ty0c * gw + tx1c) as usize][v] as f64;
            let p10 = luts[(ty1c * gw + tx0c) as usize][v] as f64;
            let p11 = luts[(ty1c * gw + tx1c) as usize][v] as f64;
            let top = p00 * (1.0 - fx) + p01 * fx;
            let bottom = p10 * (1.0 - fx) + p11 * fx;
            let blended = top * (1.0 - fy) + bottom * fy;
            out.put_pixel(x as u32, y as u32, image::Luma([blended.round() as u8]));
        }
    }
    out
}
