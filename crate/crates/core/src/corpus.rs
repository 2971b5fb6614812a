//! Synthetic desk-scale corpus: rectangle images with two-word captions
//! (quadrant + size) and multi-image instruction samples.
//!
//! Text-id layout inside the base vocabulary (size 64 by default):
//! quadrant words at 10..14, size words at 20..23, the instruction trigger
//! at 30, a separator at 62, and EOS at the top id. Ids 40..56 stay reserved
//! for free-form filler text.

use crate::encoder::ImageGrid;
use crate::error::CoreError;
use crate::labels::{synth_sample, MaskRaster, SynthConfig};
use crate::rng::SplitRng;
use crate::vocab::UnifiedVocab;
use crate::Result;
use alloc::format;
use alloc::vec::Vec;

pub const QUAD_WORDS: [usize; 4] = [10, 11, 12, 13];
pub const SIZE_WORDS: [usize; 3] = [20, 21, 22];
pub const INSTR_WORD: usize = 30;
pub const SEP_WORD: usize = 62;

/// Minimum base vocabulary that fits the fixed word layout.
pub const MIN_N_TEXT: usize = 64;

/// Quadrant of the mask's bounding-box center: 0 top-left, 1 top-right,
/// 2 bottom-left, 3 bottom-right. Centers on the midline round right/down.
pub fn quadrant(mask: &MaskRaster) -> Result<usize> {
    let (x0, y0, x1, y1) = mask
        .bbox()
        .ok_or_else(|| CoreError::Data(alloc::string::String::from("empty mask has no quadrant")))?;
    let right = (x0 + x1) >= mask.width();
    let bottom = (y0 + y1) >= mask.height();
    Ok((bottom as usize) * 2 + right as usize)
}

/// Size bucket by mask area, tuned for 8..16-pixel rectangles on a 32x32
/// grid: 0 small (<= 110 px), 1 medium (<= 190 px), 2 large.
pub fn size_bucket(mask: &MaskRaster) -> usize {
    let area = mask.count_ones();
    if area <= 110 {
        0
    } else if area <= 190 {
        1
    } else {
        2
    }
}

/// Two-word caption: quadrant word then size word.
pub fn caption_ids(mask: &MaskRaster) -> Result<Vec<usize>> {
    Ok(alloc::vec![
        QUAD_WORDS[quadrant(mask)?],
        SIZE_WORDS[size_bucket(mask)]
    ])
}

/// One captioned image.
pub struct Sample {
    pub image: ImageGrid,
    pub mask: MaskRaster,
    pub caption: Vec<usize>,
}

pub fn make_samples(synth: &SynthConfig, n: usize, rng: &mut SplitRng) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (image, mask) = synth_sample(synth, rng)?;
        let caption = caption_ids(&mask)?;
        out.push(Sample { image, mask, caption });
    }
    Ok(out)
}

/// Multi-image instruction task: given 1..=max_images images and the
/// instruction word, answer with each image's quadrant word in order.
pub struct InstructionSample {
    pub images: Vec<(ImageGrid, MaskRaster)>,
    pub prompt: Vec<usize>,
    /// Quadrant word per image; EOS is appended by the trainer.
    pub response: Vec<usize>,
}

pub fn make_instruction_samples(
    synth: &SynthConfig,
    n: usize,
    max_images: usize,
    rng: &mut SplitRng,
) -> Result<Vec<InstructionSample>> {
    if max_images == 0 {
        return Err(CoreError::Config(alloc::string::String::from(
            "max_images must be positive",
        )));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = 1 + rng.next_below(max_images);
        let mut images = Vec::with_capacity(k);
        let mut response = Vec::with_capacity(k);
        for _ in 0..k {
            let (image, mask) = synth_sample(synth, rng)?;
            response.push(QUAD_WORDS[quadrant(&mask)?]);
            images.push((image, mask));
        }
        out.push(InstructionSample {
            images,
            prompt: alloc::vec![INSTR_WORD],
            response,
        });
    }
    Ok(out)
}

/// The fixed word layout assumes the ids above fit under n_text.
pub fn check_vocab_fits(vocab: &UnifiedVocab) -> Result<()> {
    if vocab.n_text() < MIN_N_TEXT {
        return Err(CoreError::Config(format!(
            "base vocab {} too small for the text layout (need {MIN_N_TEXT})",
            vocab.n_text()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> MaskRaster {
        let mut data = alloc::vec![0u8; w * h];
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                data[y * w + x] = 1;
            }
        }
        MaskRaster::new(w, h, data).unwrap()
    }

    #[test]
    fn quadrants_cover_all_four_corners() {
        assert_eq!(quadrant(&rect_mask(32, 32, 0, 0, 4, 4)).unwrap(), 0);
        assert_eq!(quadrant(&rect_mask(32, 32, 27, 0, 4, 4)).unwrap(), 1);
        assert_eq!(quadrant(&rect_mask(32, 32, 0, 27, 4, 4)).unwrap(), 2);
        assert_eq!(quadrant(&rect_mask(32, 32, 27, 27, 4, 4)).unwrap(), 3);
    }

    #[test]
    fn size_buckets_partition_areas() {
        assert_eq!(size_bucket(&rect_mask(32, 32, 0, 0, 8, 8)), 0); // 64
        assert_eq!(size_bucket(&rect_mask(32, 32, 0, 0, 12, 12)), 1); // 144
        assert_eq!(size_bucket(&rect_mask(32, 32, 0, 0, 16, 16)), 2); // 256
    }

    #[test]
    fn captions_are_quadrant_then_size() {
        let mask = rect_mask(32, 32, 20, 2, 10, 10);
        let cap = caption_ids(&mask).unwrap();
        assert_eq!(cap, alloc::vec![QUAD_WORDS[1], SIZE_WORDS[0]]);
    }

    #[test]
    fn samples_are_deterministic_and_well_formed() {
        let synth = SynthConfig::desk();
        let a = make_samples(&synth, 4, &mut SplitRng::new(30)).unwrap();
        let b = make_samples(&synth, 4, &mut SplitRng::new(30)).unwrap();
        assert_eq!(a.len(), 4);
        for (sa, sb) in a.iter().zip(b.iter()) {
            assert_eq!(sa.caption, sb.caption);
            assert_eq!(sa.image.data(), sb.image.data());
            assert_eq!(sa.caption.len(), 2);
            assert!(QUAD_WORDS.contains(&sa.caption[0]));
            assert!(SIZE_WORDS.contains(&sa.caption[1]));
        }
    }

    #[test]
    fn instruction_samples_answer_one_word_per_image() {
        let synth = SynthConfig::desk();
        let samples = make_instruction_samples(&synth, 6, 3, &mut SplitRng::new(31)).unwrap();
        for s in &samples {
            assert!(!s.images.is_empty() && s.images.len() <= 3);
            assert_eq!(s.response.len(), s.images.len());
            assert_eq!(s.prompt, alloc::vec![INSTR_WORD]);
            for (i, (_, mask)) in s.images.iter().enumerate() {
                assert_eq!(s.response[i], QUAD_WORDS[quadrant(mask).unwrap()]);
            }
        }
    }

    #[test]
    fn vocab_layout_check() {
        let ok = UnifiedVocab::new(64, 4).unwrap();
        check_vocab_fits(&ok).unwrap();
        let small = UnifiedVocab::new(32, 4).unwrap();
        assert!(check_vocab_fits(&small).is_err());
    }
}
