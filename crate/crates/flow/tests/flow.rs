use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rc3d_flow::{farneback_flow, flow_hue, flow_to_motion_image, image_gradients, FarnebackParams, FlowField, IntensityFrame};

/// Periodic sum of random low-frequency waves, shifted by `(dx, dy)` with wrap.
fn texture(n: usize, seed: u64, dx: i32, dy: i32) -> IntensityFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f32, f32, f32, f32)> = (0..6)
        .map(|_| (rng.random_range(-4..=4) as f32, rng.random_range(1..=4) as f32, rng.random_range(0.0..6.3), rng.random_range(0.03..0.08)))
        .collect();
    let t = std::f32::consts::TAU / n as f32;
    IntensityFrame::from_fn(n, n, |x, y| {
        let x = (x as i32 - dx).rem_euclid(n as i32) as f32;
        let y = (y as i32 - dy).rem_euclid(n as i32) as f32;
        0.5 + waves.iter().map(|&(fx, fy, ph, a)| a * (t * (fx * x + fy * y) + ph).sin()).sum::<f32>()
    })
    .unwrap()
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

fn interior(flow: &FlowField, margin: usize) -> (Vec<f32>, Vec<f32>) {
    let (mut u, mut v) = (Vec::new(), Vec::new());
    for y in margin..flow.height - margin {
        for x in margin..flow.width - margin {
            let (a, b) = flow.at(x, y);
            u.push(a);
            v.push(b);
        }
    }
    (u, v)
}

fn presets() -> Vec<FarnebackParams> {
    let d = FarnebackParams::default();
    vec![
        d,
        FarnebackParams { pyramid_levels: 1, iterations: 1, ..d },
        FarnebackParams { window_size: 9, poly_n: 7, poly_sigma: 1.5, ..d },
        FarnebackParams { pyramid_levels: 4, pyramid_scale: 0.6, iterations: 5, ..d },
    ]
}

#[test]
fn zero_motion_for_every_preset() {
    for (i, p) in presets().iter().enumerate() {
        let f = texture(48, i as u64, 0, 0);
        let flow = farneback_flow(&f, &f, p).unwrap();
        let m = median(flow.magnitudes());
        println!("preset {i}: median |flow| {m:.2e}");
        assert!(m < 0.05);
    }
}

#[test]
fn integer_translations_are_recovered() {
    let start = Instant::now();
    let p = FarnebackParams::default();
    let mut worst = 0.0f32;
    for dx in -3i32..=3 {
        for dy in -3i32..=3 {
            if dx.abs().max(dy.abs()) == 0 {
                continue;
            }
            let seed = (dx + 10 * dy + 100) as u64;
            let flow = farneback_flow(&texture(64, seed, 0, 0), &texture(64, seed, dx, dy), &p).unwrap();
            let (u, v) = interior(&flow, 12);
            let (mu, mv) = (median(u), median(v));
            worst = worst.max((mu - dx as f32).abs()).max((mv - dy as f32).abs());
            assert!((mu - dx as f32).abs() < 0.5 && (mv - dy as f32).abs() < 0.5, "shift ({dx},{dy}): median ({mu},{mv})");
        }
    }
    println!("48 shifts at 64x64: worst median error {worst:.3} px in {:?}", start.elapsed());
}

#[test]
fn brightness_constancy_on_linear_ramps() {
    for (a, b, c) in [(0.004f32, 0.002f32, 0.02f32), (-0.003, 0.005, -0.01), (0.006, 0.0, 0.03), (0.0, -0.004, 0.015)] {
        let offset = 0.4;
        let prev = IntensityFrame::from_fn(64, 64, |x, y| offset + a * (x as f32 - 32.0) + b * (y as f32 - 32.0)).unwrap();
        let next = IntensityFrame::from_fn(64, 64, |x, y| offset + a * (x as f32 - 32.0) + b * (y as f32 - 32.0) + c).unwrap();
        let flow = farneback_flow(&prev, &next, &FarnebackParams::default()).unwrap();
        let g = image_gradients(&prev, &next).unwrap();
        let mut worst = 0.0f32;
        for y in 8..56 {
            for x in 8..56 {
                let (fx, fy, ft) = g.at(x, y);
                let (u, v) = flow.at(x, y);
                worst = worst.max((fx * u + fy * v + ft).abs());
            }
        }
        println!("ramp ({a},{b},{c}): max |fx u + fy v + ft| = {worst:.2e}");
        assert!(worst < 0.05);
    }
}

#[test]
fn gradients_match_direct_indexing() {
    let prev = texture(20, 5, 0, 0);
    let next = texture(20, 5, 1, 0);
    let g = image_gradients(&prev, &next).unwrap();
    let avg = |x: usize, y: usize| 0.5 * (prev.at(x, y) + next.at(x, y));
    for y in 1..19 {
        for x in 1..19 {
            let (fx, fy, ft) = g.at(x, y);
            assert!((fx - (avg(x + 1, y) - avg(x - 1, y)) / 2.0).abs() < 1e-6);
            assert!((fy - (avg(x, y + 1) - avg(x, y - 1)) / 2.0).abs() < 1e-6);
            assert_eq!(ft, next.at(x, y) - prev.at(x, y));
        }
    }
    let (fx0, _, _) = g.at(0, 3);
    assert!((fx0 - (avg(1, 3) - avg(0, 3))).abs() < 1e-6);
}

#[test]
fn translated_clip_renders_one_dominant_hue() {
    let flow = farneback_flow(&texture(48, 9, 0, 0), &texture(48, 9, 2, 0), &FarnebackParams::default()).unwrap();
    let (u, v) = interior(&flow, 10);
    let hues: Vec<f64> = u.iter().zip(&v).map(|(&a, &b)| flow_hue(a as f64, b as f64)).collect();
    let near_zero = hues.iter().filter(|&&h| !(0.05..=0.95).contains(&h)).count();
    assert!(near_zero as f64 > 0.9 * hues.len() as f64, "{near_zero} of {}", hues.len());
    let img = flow_to_motion_image(&flow);
    assert_eq!(img.shape(), &[3, 48, 48]);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn motion_image_stays_in_unit_cube(field in prop::collection::vec((-5.0f32..5.0, -5.0f32..5.0), 12)) {
        let flow = FlowField {
            width: 4,
            height: 3,
            u: field.iter().map(|p| p.0).collect(),
            v: field.iter().map(|p| p.1).collect(),
        };
        let img = flow_to_motion_image(&flow);
        prop_assert!(img.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
        for (i, (u, v)) in field.iter().enumerate() {
            if *u == 0.0 && *v == 0.0 {
                prop_assert!((0..3).all(|c| img.data()[c * 12 + i] == 0.0));
            }
        }
    }
}
