use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spv_core::phosphene::{
    apply_overlays, decode_frame, encode_frame, render_dots, sample_and_quantize, PhospheneFrame, PhospheneLayout, PhospheneParams,
    HEADER_LEN, MAX_LEVEL,
};

fn default_layout() -> PhospheneLayout {
    PhospheneLayout::from_params(&PhospheneParams::default(), 256, 256).unwrap()
}

/// Scalar reference: floor(mean * 8) clamped to 7.
fn oracle_level(mean: f64) -> u8 {
    let l = (mean * 8.0).floor();
    if l > 7.0 {
        7
    } else {
        l as u8
    }
}

fn random_image(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn random_mask(seed: u64, n: usize, density: f64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..n).map(|_| rng.random_bool(density)).collect()
}

#[test]
fn uniform_images_quantize_exactly() {
    let l = default_layout();
    for (value, level) in [(1.0, 7), (0.0, 0), (0.5, 4)] {
        let f = sample_and_quantize(&vec![value; 256 * 256], &l, 0);
        assert_eq!(f.levels.len(), 1024);
        assert!(f.levels.iter().all(|&x| x == level), "{value}");
        assert_eq!(level, oracle_level(value));
    }
}

#[test]
fn levels_match_scalar_oracle() {
    let l = default_layout();
    let img = random_image(3, 256 * 256);
    let f = sample_and_quantize(&img, &l, 9);
    assert_eq!(f.tick, 9);
    for i in 0..l.len() {
        let px = l.receptive_pixels(i);
        let mean = px.iter().map(|&p| img[p as usize]).sum::<f64>() / px.len() as f64;
        assert_eq!(f.levels[i], oracle_level(mean), "phosphene {i}");
    }
}

#[test]
fn overlay_examples() {
    let l = default_layout();
    let f = sample_and_quantize(&random_image(4, 256 * 256), &l, 0);
    let empty = vec![false; 256 * 256];
    assert_eq!(apply_overlays(&f, &l, &[&empty]), f);
    assert_eq!(apply_overlays(&f, &l, &[]), f);
    let full = vec![true; 256 * 256];
    assert!(apply_overlays(&f, &l, &[&full]).levels.iter().all(|&x| x == MAX_LEVEL));

    let dark = PhospheneFrame::blank(&l, 0);
    let (cx, cy) = l.centers[5 * 32 + 7];
    let mut one = empty.clone();
    one[cy as usize * 256 + cx as usize] = true;
    let out = apply_overlays(&dark, &l, &[&one]);
    let lit: Vec<usize> = (0..l.len()).filter(|&i| out.levels[i] == MAX_LEVEL).collect();
    assert_eq!(lit, vec![5 * 32 + 7]);
    assert!(out.levels.iter().all(|&x| x == 0 || x == MAX_LEVEL));
}

#[test]
fn dot_rendering_examples() {
    let l = default_layout();
    let black = render_dots(&PhospheneFrame::blank(&l, 0), &l);
    assert!(black.iter().all(|&v| v == 0.0));

    let i = 10 * 32 + 12;
    let mut single = PhospheneFrame::blank(&l, 0);
    single.levels[i] = 7;
    let img = render_dots(&single, &l);
    let (cx, cy) = l.centers[i];
    let at = |x: f64, y: f64| img[y as usize * 256 + x as usize];
    let max = img.iter().cloned().fold(0.0, f64::max);
    assert_eq!(at(cx, cy), max);
    let ray: Vec<f64> = (0..8).map(|k| at(cx + k as f64, cy)).collect();
    assert!(ray.windows(2).all(|w| w[1] <= w[0]), "{ray:?}");

    let mut pair = single.clone();
    pair.levels[i + 1] = 7;
    let both = render_dots(&pair, &l);
    let mid = (cy as usize) * 256 + (cx + 4.0) as usize;
    assert!(both[mid] >= img[mid]);
    assert!(both[mid] > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn overlays_dominate_scene(seed in any::<u64>(), density in 0.0001f64..0.01) {
        let l = default_layout();
        let f = sample_and_quantize(&random_image(seed, 256 * 256), &l, 0);
        let mask = random_mask(seed, 256 * 256, density);
        let out = apply_overlays(&f, &l, &[&mask]);
        for i in 0..l.len() {
            let hit = l.receptive_pixels(i).iter().any(|&p| mask[p as usize]);
            if hit {
                prop_assert_eq!(out.levels[i], MAX_LEVEL);
            } else {
                prop_assert_eq!(out.levels[i], f.levels[i]);
            }
        }
    }

    #[test]
    fn brighter_scene_never_lowers_levels(seed in any::<u64>(), gain in 0.0f64..0.5) {
        let l = default_layout();
        let a = random_image(seed, 256 * 256);
        let bump = random_image(seed.wrapping_add(1), 256 * 256);
        let b: Vec<f64> = a.iter().zip(&bump).map(|(x, d)| (x + gain * d).min(1.0)).collect();
        let (fa, fb) = (sample_and_quantize(&a, &l, 0), sample_and_quantize(&b, &l, 0));
        for (la, lb) in fa.levels.iter().zip(&fb.levels) {
            prop_assert!(lb >= la);
        }
    }

    #[test]
    fn wire_round_trips(tick in any::<u64>(), rows in 1u16..48, cols in 1u16..48, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = PhospheneFrame {
            tick,
            rows,
            cols,
            levels: (0..rows as usize * cols as usize).map(|_| rng.random_range(0..=MAX_LEVEL)).collect(),
        };
        let bytes = encode_frame(&frame);
        prop_assert_eq!(bytes.len(), HEADER_LEN + frame.levels.len());
        let back = decode_frame(&bytes).unwrap();
        prop_assert_eq!(&back, &frame);
        prop_assert_eq!(encode_frame(&back), bytes);
    }
}
