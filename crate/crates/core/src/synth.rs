//! Seeded synthetic text-line images with known word positions, used as
//! forging material when no real document images are at hand.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::imaging::{BBox, ImageBuf};

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
const SCALE: u32 = 2;
const ADVANCE: u32 = (GLYPH_W + 1) * SCALE;
const PAD: u32 = 2;
const MARGIN: u32 = 6;
const LINE_PITCH: u32 = 34;
const LINES: u32 = 2;

/// Longest word the layout reserves room for.
pub const MAX_WORD_LEN: usize = 7;

/// Canvas size of every page.
pub const PAGE_WIDTH: u32 = 2 * slot_width() + 3 * MARGIN;
pub const PAGE_HEIGHT: u32 = LINES * LINE_PITCH + MARGIN;

const fn slot_width() -> u32 {
    MAX_WORD_LEN as u32 * ADVANCE - SCALE + 2 * PAD
}

const VOCABULARY: &[&str] = &[
    "TOTAL", "DATE", "PRICE", "NAME", "CASH", "PAID", "DUE", "SALE", "ITEM", "TAX", "LOT", "CARD", "BANK",
    "CODE", "FEE", "NET", "QTY", "REF", "SHOP", "STORE", "OPEN", "CLOSE", "ORDER", "BILL", "RENT", "FOOD",
    "MENU", "HOTEL", "ROOM", "CITY", "ROAD", "PARK", "EXIT", "GATE", "FARE", "TICKET", "MARKET", "OFFICE",
    "LIMIT", "CREDIT", "DEBIT", "AMOUNT", "INVOICE", "RECEIPT",
];

fn glyph(c: char) -> Option<[u8; 7]> {
    Some(match c {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        ' ' => [0; 7],
        _ => return None,
    })
}

/// Whether every character of `text` has a glyph.
pub fn is_renderable(text: &str) -> bool {
    text.chars().all(|c| glyph(c).is_some())
}

/// Pixel box a word of `len` characters occupies when drawn at `(x, y)`, padding included.
pub fn word_box(x: u32, y: u32, len: usize) -> BBox {
    let w = (len as u32 * ADVANCE).saturating_sub(SCALE).max(1);
    BBox::from_origin(x - PAD, y - PAD, w + 2 * PAD, GLYPH_H * SCALE + 2 * PAD)
}

/// Draws `text` with its top-left glyph corner at `(x, y)`. Returns the padded box.
pub fn draw_text(img: &mut ImageBuf, text: &str, x: u32, y: u32, ink: [u8; 3]) -> BBox {
    for (i, c) in text.chars().enumerate() {
        let rows = glyph(c).unwrap_or_else(|| panic!("no glyph for {c:?}"));
        let gx = x + i as u32 * ADVANCE;
        for (r, bits) in rows.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (0x10 >> col) == 0 {
                    continue;
                }
                for dy in 0..SCALE {
                    for dx in 0..SCALE {
                        img.set_pixel(gx + col * SCALE + dx, y + r as u32 * SCALE + dy, ink);
                    }
                }
            }
        }
    }
    word_box(x, y, text.chars().count())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub text: String,
    pub bbox: BBox,
}

/// A rendered page: one word at the left of each line and an empty slot at
/// the right of each line where a forged word can go.
#[derive(Debug, Clone)]
pub struct SynthPage {
    pub image: ImageBuf,
    pub words: Vec<Word>,
    pub slots: Vec<BBox>,
}

impl SynthPage {
    /// Top-left corner of slot `i`, where a word box of any length can be pasted.
    pub fn slot_origin(&self, i: usize) -> (u32, u32) {
        (self.slots[i].x_min, self.slots[i].y_min)
    }
}

pub fn random_word<R: Rng + ?Sized>(rng: &mut R) -> String {
    if rng.gen_bool(0.25) {
        let n = rng.gen_range(2..=5);
        (0..n).map(|_| char::from(b'0' + rng.gen_range(0..10))).collect()
    } else {
        VOCABULARY.choose(rng).expect("vocabulary is not empty").to_string()
    }
}

/// Renders a page with a light, slightly noisy background and dark ink.
pub fn render_page<R: Rng + ?Sized>(rng: &mut R) -> SynthPage {
    let base = [rng.gen_range(190..=245u8), rng.gen_range(190..=245u8), rng.gen_range(190..=245u8)];
    let mut image = ImageBuf::from_fn(PAGE_WIDTH, PAGE_HEIGHT, |_, _| {
        base.map(|c| c.saturating_add(rng.gen_range(0..=8)))
    });
    let ink = [rng.gen_range(0..=60u8), rng.gen_range(0..=60u8), rng.gen_range(0..=60u8)];
    let mut words = Vec::new();
    let mut slots = Vec::new();
    for line in 0..LINES {
        let y = MARGIN + PAD + line * LINE_PITCH;
        let text = random_word(rng);
        let bbox = draw_text(&mut image, &text, MARGIN + PAD, y, ink);
        words.push(Word { text, bbox });
        slots.push(BBox::from_origin(
            2 * MARGIN + slot_width(),
            y - PAD,
            slot_width(),
            GLYPH_H * SCALE + 2 * PAD,
        ));
    }
    SynthPage { image, words, slots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_vocabulary_word_fits_a_slot() {
        for w in VOCABULARY {
            assert!(is_renderable(w));
            assert!(w.len() <= MAX_WORD_LEN, "{w}");
        }
        assert!(glyph('a').is_none());
    }

    #[test]
    fn layout_stays_inside_the_page() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let page = render_page(&mut rng);
            assert_eq!(page.image.dims(), (PAGE_WIDTH, PAGE_HEIGHT));
            for w in &page.words {
                assert!(w.bbox.fits_in(PAGE_WIDTH, PAGE_HEIGHT));
                for s in &page.slots {
                    assert!(w.bbox.intersection(s).is_none());
                    let b = word_box(s.x_min + PAD, s.y_min + PAD, w.text.len());
                    assert!(b.fits_in(PAGE_WIDTH, PAGE_HEIGHT));
                    assert_eq!(b.height(), w.bbox.height());
                }
            }
        }
    }

    #[test]
    fn glyph_pixels_land_inside_word_box() {
        let mut img = ImageBuf::filled(100, 30, [255, 255, 255]);
        let b = draw_text(&mut img, "W8", 4, 4, [0, 0, 0]);
        for y in 0..30 {
            for x in 0..100 {
                if img.pixel(x, y) == [0, 0, 0] {
                    assert!(b.contains(x, y));
                }
            }
        }
        assert_eq!(b, BBox::new(2, 2, 4 + 22 + 2, 4 + 14 + 2));
    }

    #[test]
    fn seeded_pages_repeat() {
        let a = render_page(&mut ChaCha8Rng::seed_from_u64(9));
        let b = render_page(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.image, b.image);
        assert_eq!(a.words, b.words);
    }
}
