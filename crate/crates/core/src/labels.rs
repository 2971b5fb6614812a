//! Binary region masks and the patch-level pseudo-labels derived from them.

use crate::encoder::{ImageGrid, CHANNELS};
use crate::error::CoreError;
use crate::rng::SplitRng;
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Per-pixel binary mask. Values are strictly 0 or 1, row-major.
#[derive(Clone, Debug)]
pub struct MaskRaster {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MaskRaster {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<MaskRaster> {
        if width == 0 || height == 0 {
            return Err(CoreError::Shape(String::from("mask dims must be positive")));
        }
        if data.len() != width * height {
            return Err(CoreError::Shape(format!(
                "mask data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|&b| b > 1) {
            return Err(CoreError::Data(String::from("mask values must be 0 or 1")));
        }
        Ok(MaskRaster { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b == 1).count()
    }

    /// Inclusive bounding box (x0, y0, x1, y1) of the set pixels, if any.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut found = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.at(x, y) == 1 {
                    let (x0, y0, x1, y1) = found.unwrap_or((x, y, x, y));
                    found = Some((x0.min(x), y0.min(y), x1.max(x), y1.max(y)));
                }
            }
        }
        found
    }
}

/// One label per patch in row-major patch order: 1.0 when at least one mask
/// pixel inside the patch is set, else 0.0.
pub fn patch_labels(mask: &MaskRaster, p: usize) -> Result<Vec<f64>> {
    patch_labels_min(mask, p, 1)
}

/// Threshold variant: a patch is positive when at least `min_pixels` of its
/// mask pixels are set. `min_pixels = 1` is the any-overlap rule.
pub fn patch_labels_min(mask: &MaskRaster, p: usize, min_pixels: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(CoreError::Config(String::from("patch size must be positive")));
    }
    if min_pixels == 0 || min_pixels > p * p {
        return Err(CoreError::Config(format!(
            "min_pixels {min_pixels} outside 1..={}",
            p * p
        )));
    }
    if mask.height % p != 0 || mask.width % p != 0 {
        return Err(CoreError::Data(format!(
            "mask {}x{} not divisible by patch size {}",
            mask.width, mask.height, p
        )));
    }
    let rows = mask.height / p;
    let cols = mask.width / p;
    let mut labels = Vec::with_capacity(rows * cols);
    for pr in 0..rows {
        for pc in 0..cols {
            let mut count = 0usize;
            for dy in 0..p {
                for dx in 0..p {
                    count += mask.at(pc * p + dx, pr * p + dy) as usize;
                }
            }
            labels.push(if count >= min_pixels { 1.0 } else { 0.0 });
        }
    }
    Ok(labels)
}

/// Parameters for the synthetic bright-rectangle-on-noise samples.
#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub min_rect: usize,
    pub max_rect: usize,
    pub bg_level: f64,
    pub fg_level: f64,
    pub noise: f64,
}

impl SynthConfig {
    pub fn desk() -> SynthConfig {
        SynthConfig {
            width: 32,
            height: 32,
            min_rect: 8,
            max_rect: 16,
            bg_level: 0.2,
            fg_level: 0.9,
            noise: 0.05,
        }
    }
}

/// One synthetic sample: a bright axis-aligned rectangle over a dim noisy
/// background, plus the exact rectangle mask.
pub fn synth_sample(cfg: &SynthConfig, rng: &mut SplitRng) -> Result<(ImageGrid, MaskRaster)> {
    if cfg.min_rect == 0 || cfg.min_rect > cfg.max_rect {
        return Err(CoreError::Config(String::from("empty rectangle size range")));
    }
    if cfg.max_rect > cfg.width || cfg.max_rect > cfg.height {
        return Err(CoreError::Config(String::from(
            "rectangle larger than the image",
        )));
    }
    let span = cfg.max_rect - cfg.min_rect + 1;
    let rw = cfg.min_rect + rng.next_below(span);
    let rh = cfg.min_rect + rng.next_below(span);
    let x0 = rng.next_below(cfg.width - rw + 1);
    let y0 = rng.next_below(cfg.height - rh + 1);

    let mut mask = alloc::vec![0u8; cfg.width * cfg.height];
    for y in y0..y0 + rh {
        for x in x0..x0 + rw {
            mask[y * cfg.width + x] = 1;
        }
    }
    let mask = MaskRaster::new(cfg.width, cfg.height, mask)?;

    let mut pixels = Vec::with_capacity(cfg.width * cfg.height * CHANNELS);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let base = if mask.at(x, y) == 1 { cfg.fg_level } else { cfg.bg_level };
            for _ in 0..CHANNELS {
                let jitter = (rng.next_f64() * 2.0 - 1.0) * cfg.noise;
                pixels.push((base + jitter).clamp(0.0, 1.0));
            }
        }
    }
    Ok((ImageGrid::new(cfg.width, cfg.height, pixels)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_validation() {
        assert!(MaskRaster::new(2, 2, alloc::vec![0, 1, 1, 0]).is_ok());
        assert!(MaskRaster::new(2, 2, alloc::vec![0, 2, 0, 0]).is_err());
        assert!(MaskRaster::new(2, 2, alloc::vec![0; 3]).is_err());
    }

    #[test]
    fn single_pixel_labels_one_patch() {
        // 4x4 mask, p=2: set pixel (3, 0) -> patch (0, 1) only
        let mut data = alloc::vec![0u8; 16];
        data[3] = 1;
        let mask = MaskRaster::new(4, 4, data).unwrap();
        let labels = patch_labels(&mask, 2).unwrap();
        assert_eq!(labels, alloc::vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn full_and_empty_masks() {
        let full = MaskRaster::new(4, 4, alloc::vec![1; 16]).unwrap();
        assert_eq!(patch_labels(&full, 2).unwrap(), alloc::vec![1.0; 4]);
        let empty = MaskRaster::new(4, 4, alloc::vec![0; 16]).unwrap();
        assert_eq!(patch_labels(&empty, 2).unwrap(), alloc::vec![0.0; 4]);
    }

    #[test]
    fn min_pixel_threshold_gates_single_pixel_patches() {
        let mut data = alloc::vec![0u8; 16];
        data[0] = 1; // one pixel in patch (0,0)
        data[2] = 1;
        data[3] = 1; // two pixels in patch (0,1)
        let mask = MaskRaster::new(4, 4, data).unwrap();
        assert_eq!(
            patch_labels_min(&mask, 2, 2).unwrap(),
            alloc::vec![0.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn bbox_and_count() {
        let mut data = alloc::vec![0u8; 16];
        data[5] = 1; // (1,1)
        data[10] = 1; // (2,2)
        let mask = MaskRaster::new(4, 4, data).unwrap();
        assert_eq!(mask.bbox(), Some((1, 1, 2, 2)));
        assert_eq!(mask.count_ones(), 2);
        let empty = MaskRaster::new(2, 2, alloc::vec![0; 4]).unwrap();
        assert_eq!(empty.bbox(), None);
    }

    #[test]
    fn synth_sample_mask_matches_bright_region() {
        let cfg = SynthConfig::desk();
        let mut rng = SplitRng::new(99);
        let (img, mask) = synth_sample(&cfg, &mut rng).unwrap();
        let (x0, y0, x1, y1) = mask.bbox().unwrap();
        let rect_w = x1 - x0 + 1;
        let rect_h = y1 - y0 + 1;
        assert!(rect_w >= cfg.min_rect && rect_w <= cfg.max_rect);
        assert!(rect_h >= cfg.min_rect && rect_h <= cfg.max_rect);
        assert_eq!(mask.count_ones(), rect_w * rect_h);

        let mut fg_sum = 0.0;
        let mut bg_sum = 0.0;
        let mut fg_n = 0.0;
        let mut bg_n = 0.0;
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let v = img.pixel(x, y, 0);
                if mask.at(x, y) == 1 {
                    fg_sum += v;
                    fg_n += 1.0;
                } else {
                    bg_sum += v;
                    bg_n += 1.0;
                }
            }
        }
        assert!(fg_sum / fg_n > bg_sum / bg_n + 0.3);
    }

    #[test]
    fn synth_sample_is_deterministic() {
        let cfg = SynthConfig::desk();
        let (img_a, mask_a) = synth_sample(&cfg, &mut SplitRng::new(5)).unwrap();
        let (img_b, mask_b) = synth_sample(&cfg, &mut SplitRng::new(5)).unwrap();
        assert_eq!(img_a.data(), img_b.data());
        assert_eq!(mask_a.data(), mask_b.data());
    }
}
