//! Color-based outlier detection for frames that show mostly background.

use thiserror::Error;

use super::ppm::{RawImage, Rgb};

/// Average color of spruce board surfaces.
pub const WOOD_COLOR: Rgb = Rgb::new(190, 161, 125);
pub const DEFAULT_TOLERANCE: u8 = 5;
pub const DEFAULT_MIN_FRACTION: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("wood-pixel fraction is undefined for an empty image")]
    EmptyImage,
    #[error("min_fraction must lie in (0, 1), got {0}")]
    MinFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameDecision {
    Keep,
    Remove,
}

impl FrameDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameDecision::Keep => "keep",
            FrameDecision::Remove => "remove",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierFilter {
    pub reference: Rgb,
    /// Inclusive per-channel deviation bound.
    pub tolerance: u8,
    pub min_fraction: f64,
}

impl Default for OutlierFilter {
    fn default() -> Self {
        Self {
            reference: WOOD_COLOR,
            tolerance: DEFAULT_TOLERANCE,
            min_fraction: DEFAULT_MIN_FRACTION,
        }
    }
}

fn is_close(p: Rgb, reference: Rgb, tolerance: u8) -> bool {
    p.0.iter()
        .zip(reference.0.iter())
        .all(|(&c, &r)| c.abs_diff(r) <= tolerance)
}

/// Fraction of pixels whose every channel lies within `tolerance` of `reference`.
pub fn wood_pixel_fraction(img: &RawImage, reference: Rgb, tolerance: u8) -> Result<f64, FilterError> {
    if img.is_empty() {
        return Err(FilterError::EmptyImage);
    }
    let close = img
        .pixels()
        .iter()
        .filter(|&&p| is_close(p, reference, tolerance))
        .count();
    Ok(close as f64 / img.pixels().len() as f64)
}

impl OutlierFilter {
    /// Returns the wood fraction and whether the frame is kept.
    ///
    /// A frame is removed only when strictly fewer than `min_fraction` of its pixels match.
    pub fn evaluate(&self, img: &RawImage) -> Result<(f64, FrameDecision), FilterError> {
        if !(self.min_fraction > 0.0 && self.min_fraction < 1.0) {
            return Err(FilterError::MinFraction(self.min_fraction));
        }
        let fraction = wood_pixel_fraction(img, self.reference, self.tolerance)?;
        let decision = if fraction < self.min_fraction {
            FrameDecision::Remove
        } else {
            FrameDecision::Keep
        };
        Ok((fraction, decision))
    }
}

pub fn filter_outlier(
    img: &RawImage,
    reference: Rgb,
    tolerance: u8,
    min_fraction: f64,
) -> Result<FrameDecision, FilterError> {
    OutlierFilter {
        reference,
        tolerance,
        min_fraction,
    }
    .evaluate(img)
    .map(|(_, d)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(p: Rgb) -> RawImage {
        RawImage::filled(1, 1, p)
    }

    /// 100-pixel image with `wood` pixels of exact wood color, rest black.
    fn mixed(wood: usize) -> RawImage {
        let mut img = RawImage::filled(10, 10, Rgb::new(0, 0, 0));
        for p in img.pixels_mut().iter_mut().take(wood) {
            *p = WOOD_COLOR;
        }
        img
    }

    #[test]
    fn fraction_cases() {
        let all = RawImage::filled(4, 3, WOOD_COLOR);
        assert_eq!(wood_pixel_fraction(&all, WOOD_COLOR, 5).unwrap(), 1.0);
        assert_eq!(wood_pixel_fraction(&one(Rgb::new(184, 161, 125)), WOOD_COLOR, 5).unwrap(), 0.0);
        assert_eq!(wood_pixel_fraction(&one(Rgb::new(185, 166, 120)), WOOD_COLOR, 5).unwrap(), 1.0);
        assert_eq!(wood_pixel_fraction(&one(Rgb::new(195, 156, 130)), WOOD_COLOR, 5).unwrap(), 1.0);
        assert_eq!(wood_pixel_fraction(&one(Rgb::new(190, 161, 131)), WOOD_COLOR, 5).unwrap(), 0.0);
    }

    #[test]
    fn empty_image_is_an_error() {
        let img = RawImage::new(0, 0, vec![]).unwrap();
        assert_eq!(wood_pixel_fraction(&img, WOOD_COLOR, 5), Err(FilterError::EmptyImage));
    }

    #[test]
    fn threshold_is_strict() {
        let f = OutlierFilter::default();
        assert_eq!(f.evaluate(&mixed(4)).unwrap().1, FrameDecision::Remove);
        assert_eq!(f.evaluate(&mixed(5)).unwrap().1, FrameDecision::Keep);
        assert_eq!(f.evaluate(&mixed(6)).unwrap().1, FrameDecision::Keep);
        assert_eq!(f.evaluate(&mixed(0)).unwrap().1, FrameDecision::Remove);
    }

    #[test]
    fn min_fraction_must_be_open_unit() {
        let img = mixed(5);
        assert!(filter_outlier(&img, WOOD_COLOR, 5, 0.0).is_err());
        assert!(filter_outlier(&img, WOOD_COLOR, 5, 1.0).is_err());
    }

    fn arb_image() -> impl Strategy<Value = RawImage> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(
                (180u8..200, 150u8..172, 115u8..135).prop_map(|(r, g, b)| Rgb::new(r, g, b)),
                w * h,
            )
            .prop_map(move |px| RawImage::new(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn fraction_monotone_in_tolerance(img in arb_image(), t in 0u8..20) {
            let lo = wood_pixel_fraction(&img, WOOD_COLOR, t).unwrap();
            let hi = wood_pixel_fraction(&img, WOOD_COLOR, t + 1).unwrap();
            prop_assert!(lo <= hi);
        }

        #[test]
        fn decision_invariant_under_permutation(img in arb_image(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = img.clone();
            shuffled.pixels_mut().shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let f = OutlierFilter::default();
            prop_assert_eq!(f.evaluate(&img).unwrap(), f.evaluate(&shuffled).unwrap());
        }
    }
}
