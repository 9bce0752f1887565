//! Deterministic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textforge_core::imaging::{BBox, BinaryMask, ImageBuf};

pub fn noise_image(width: u32, height: u32, seed: u64) -> ImageBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageBuf::from_fn(width, height, |_, _| rng.gen())
}

/// A mask with `count` scattered rectangles.
pub fn scattered_mask(width: u32, height: u32, count: usize, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes: Vec<BBox> = (0..count)
        .map(|_| {
            let w = rng.gen_range(4..=width / 8);
            let h = rng.gen_range(4..=height / 8);
            BBox::from_origin(rng.gen_range(0..width - w), rng.gen_range(0..height - h), w, h)
        })
        .collect();
    BinaryMask::from_boxes(width, height, &boxes)
}

pub fn sentence(words: usize, seed: u64) -> String {
    const POOL: &[&str] = &["the", "font", "edge", "is", "thicker", "blurred", "ink", "background", "halo", "text"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..words).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect::<Vec<_>>().join(" ")
}
