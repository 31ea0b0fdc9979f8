//! Fixture helpers shared by the unit tests: deterministic synthetic frames
//! whose pairwise metrics land where the tests need them.
//!
//! A state frame is a striped pattern whose base color, stripe color and
//! stripe geometry all derive from the state name's digest, plus a blocky
//! label strip along the top. Frames of the same state differ only by a
//! global channel shift in 0..=3 (all-dark frames drop out of the SSIM
//! equal band beyond a spread of 3), which keeps them inside the Tier-1
//! equal band; frames of different states disagree on a large pixel
//! fraction and land in the distinct band.

use crate::equivalence::{ClassifierPolicy, EquivalenceClassifier, EquivalenceThresholds};
use crate::judge::MockJudge;
use crate::trace::{ActionRecord, Digest, StateObservation, Trace, TraceRole};
use image::{Rgb, RgbImage};
use std::io::Cursor;

pub const FRAME_SIDE: u32 = 96;

pub fn png_of(img: RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    image::DynamicImage::ImageRgb8(img)
        .write_to(&mut out, image::ImageFormat::Png)
        .unwrap();
    out.into_inner()
}

fn quant(b: u8) -> u8 {
    (b / 32) * 32 + 16
}

/// Distinct deterministic pattern per state name; `shift` in 0..=12 is the
/// per-trace cosmetic jitter (added to every channel, never clamping).
pub fn state_frame(name: &str, shift: u8) -> RgbImage {
    let hex = Digest::of_bytes(name.as_bytes()).to_hex();
    let byte = |i: usize| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap();
    let base = [quant(byte(0)), quant(byte(1)), quant(byte(2))];
    let stripe = [quant(byte(3)), quant(byte(4)), quant(byte(5))];
    let period = 8 + u32::from(byte(6) % 4) * 4;
    let horizontal = byte(7) % 2 == 0;

    let mut img = RgbImage::from_fn(FRAME_SIDE, FRAME_SIDE, |x, y| {
        let coord = if horizontal { y } else { x };
        if (coord / (period / 2)) % 2 == 0 {
            Rgb(base)
        } else {
            Rgb(stripe)
        }
    });

    // Blocky "label text": one 8x8 block per name byte along the top edge.
    for (i, b) in name.bytes().enumerate() {
        let x0 = (i as u32) * 8;
        if x0 + 8 > FRAME_SIDE {
            break;
        }
        let shade = quant(b.wrapping_mul(37));
        for y in 0..8 {
            for x in x0..x0 + 8 {
                img.put_pixel(x, y, Rgb([shade, shade, shade.wrapping_add(64)]));
            }
        }
    }

    if shift > 0 {
        for p in img.pixels_mut() {
            for c in p.0.iter_mut() {
                *c += shift; // channels are quantized to <= 240, no clamping
            }
        }
    }
    img
}

pub fn obs(name: &str, shift: u8, index: usize) -> StateObservation {
    StateObservation::from_png_bytes(index, png_of(state_frame(name, shift)), Some(name.into()))
}

/// A trace over the named states with uniform "click" actions.
pub fn trace_of(id: &str, names: &[&str], shift: u8) -> Trace {
    trace_with_role(id, names, shift, TraceRole::Training)
}

pub fn trace_with_role(id: &str, names: &[&str], shift: u8, role: TraceRole) -> Trace {
    let states: Vec<StateObservation> = names
        .iter()
        .enumerate()
        .map(|(i, n)| obs(n, shift, i))
        .collect();
    let actions = (0..names.len().saturating_sub(1))
        .map(|i| ActionRecord {
            kind: "click".into(),
            params: Default::default(),
            from_index: i,
            to_index: i + 1,
        })
        .collect();
    Trace::new(id.into(), role, states, actions).unwrap()
}

pub fn learning_classifier() -> EquivalenceClassifier {
    EquivalenceClassifier::new(
        EquivalenceThresholds::default(),
        Box::new(MockJudge::default()),
        ClassifierPolicy::learning(),
    )
    .unwrap()
}

pub fn validation_classifier() -> EquivalenceClassifier {
    EquivalenceClassifier::new(
        EquivalenceThresholds::default(),
        Box::new(MockJudge::default()),
        ClassifierPolicy::validation(),
    )
    .unwrap()
}
