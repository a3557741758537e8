use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{AffineParams, AnimationTrack, Sprite, Texture, TrackEntry};

fn random_composition(rng: &mut ChaCha8Rng, k: usize, frames: usize) -> Composition {
    let (tex, canvas) = (8, 16);
    let sprites = (0..k)
        .map(|i| {
            let rgba = (0..tex * tex * 4)
                .map(|j| {
                    if i == 0 && j % 4 == 3 {
                        1.0
                    } else {
                        rng.random::<f32>()
                    }
                })
                .collect();
            let frames = (0..frames)
                .map(|_| {
                    if i == 0 {
                        TrackEntry::IDENTITY
                    } else {
                        TrackEntry {
                            affine: AffineParams::from_box(
                                rng.random_range(-0.5..0.5),
                                rng.random_range(-0.5..0.5),
                                rng.random_range(0.3..0.8),
                                rng.random_range(0.3..0.8),
                            ),
                            opacity: rng.random(),
                        }
                    }
                })
                .collect();
            Sprite {
                texture: Texture::new(tex, tex, rgba).unwrap(),
                track: AnimationTrack { frames },
                label: None,
            }
        })
        .collect();
    Composition {
        sprites,
        canvas_width: canvas,
        canvas_height: canvas,
        fps: 10.0,
    }
}

/// Scalar oracles on interleaved loops, independent of the planar code.
fn oracle_rgb(p: &[f32], g: &[f32]) -> f64 {
    let n = p.len() / 4;
    let mut s = 0.0;
    for i in 0..n {
        let mut d = 0.0;
        for c in 0..3 {
            d += (f64::from(p[c * n + i]) - f64::from(g[c * n + i])).abs();
        }
        s += d / 3.0 * f64::from(g[3 * n + i]);
    }
    s / n as f64
}

fn oracle_alpha(p: &[f32], g: &[f32]) -> f64 {
    let n = p.len() / 4;
    (0..n)
        .map(|i| (f64::from(p[3 * n + i]) - f64::from(g[3 * n + i])).abs())
        .sum::<f64>()
        / n as f64
}

/// Renders every assignment from scratch and returns the best one.
fn brute_force(pred: &Composition, gt: &Composition) -> (Vec<usize>, f64, f64) {
    let k = gt.num_sprites();
    let nt = gt.num_frames();
    let canvas = gt.canvas();
    let mut best: Option<(f64, Vec<usize>, f64, f64)> = None;
    for perm in permutations(&(1..k).collect::<Vec<_>>()) {
        let sigma: Vec<usize> = std::iter::once(0).chain(perm).collect();
        let (mut rgb, mut alpha) = (0.0, 0.0);
        for (j, &sj) in sigma.iter().enumerate() {
            let (mut r, mut a) = (0.0, 0.0);
            for t in 0..nt {
                let ps = &pred.sprites[sj];
                let gs = &gt.sprites[j];
                let p = render_sprite_isolated(&ps.texture, &ps.track.frames[t], canvas)
                    .rgba
                    .into_data();
                let g = render_sprite_isolated(&gs.texture, &gs.track.frames[t], canvas)
                    .rgba
                    .into_data();
                r += oracle_rgb(&p, &g);
                a += oracle_alpha(&p, &g);
            }
            rgb += r / nt as f64;
            alpha += a / nt as f64;
        }
        let obj = rgb + alpha;
        if best.as_ref().is_none_or(|b| obj < b.0) {
            best = Some((obj, sigma, rgb / k as f64, alpha / k as f64));
        }
    }
    let b = best.unwrap();
    (b.1, b.2, b.3)
}

#[test]
fn permutation_search_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..12 {
        let k = 2 + trial % 3;
        let gt = random_composition(&mut rng, k, 3);
        let pred = random_composition(&mut rng, k, 3);
        let got = sprite_error(&pred, &gt).unwrap();
        let (sigma, rgb, alpha) = brute_force(&pred, &gt);
        assert_eq!(got.assignment, sigma);
        assert!((got.rgb_l1 - rgb).abs() < 1e-12);
        assert!((got.alpha_l1 - alpha).abs() < 1e-12);
    }
}

#[test]
fn self_error_is_zero_with_identity_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = random_composition(&mut rng, 4, 3);
    let r = sprite_error(&c, &c).unwrap();
    assert_eq!((r.rgb_l1, r.alpha_l1), (0.0, 0.0));
    assert_eq!(r.assignment, vec![0, 1, 2, 3]);
}

#[test]
fn swapped_foreground_gives_identical_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gt = random_composition(&mut rng, 4, 3);
    let pred = random_composition(&mut rng, 4, 3);
    let mut swapped = pred.clone();
    swapped.sprites.swap(1, 3);
    let (a, b) = (
        sprite_error(&pred, &gt).unwrap(),
        sprite_error(&swapped, &gt).unwrap(),
    );
    assert_eq!(a.rgb_l1, b.rgb_l1);
    assert_eq!(a.alpha_l1, b.alpha_l1);
    let back: Vec<usize> = a.assignment.iter().map(|&i| [0, 3, 2, 1][i]).collect();
    assert_eq!(back, b.assignment);
}

#[test]
fn sprite_count_mismatch_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_composition(&mut rng, 3, 2);
    let b = random_composition(&mut rng, 2, 2);
    assert!(matches!(
        sprite_error(&a, &b),
        Err(Error::SpriteCount { pred: 3, gt: 2 })
    ));
}

#[test]
fn six_sprites_search_is_fast() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gt = random_composition(&mut rng, 6, 50);
    let pred = random_composition(&mut rng, 6, 50);
    let t = std::time::Instant::now();
    sprite_error(&pred, &gt).unwrap();
    assert!(t.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn rgb_error_examples() {
    // One pixel: pred red, target black and opaque.
    assert!(
        (rgb_error(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0]).unwrap() - 1.0 / 3.0).abs()
            < 1e-15
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p: Vec<f32> = (0..4 * 30).map(|_| rng.random()).collect();
    let mut g: Vec<f32> = (0..4 * 30).map(|_| rng.random()).collect();
    assert!((rgb_error(&p, &g).unwrap() - oracle_rgb(&p, &g)).abs() < 1e-9);
    assert!((alpha_error(&p, &g).unwrap() - oracle_alpha(&p, &g)).abs() < 1e-9);
    for a in &mut g[90..] {
        *a = 0.0;
    }
    assert_eq!(rgb_error(&p, &g).unwrap(), 0.0);
    assert!(rgb_error(&p, &g[..8]).is_err());
}

fn video(rng: &mut ChaCha8Rng, hi: f32) -> Video {
    Video {
        width: 5,
        height: 3,
        fps: 10.0,
        frames: (0..4)
            .map(|_| (0..45).map(|_| rng.random_range(0.0..hi)).collect())
            .collect(),
    }
}

#[test]
fn frame_error_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = video(&mut rng, 0.9);
    assert_eq!(video_l1(&a, &a).unwrap(), 0.0);
    let mut shifted = a.clone();
    for f in &mut shifted.frames {
        for v in f {
            *v += 0.1;
        }
    }
    assert!((video_l1(&shifted, &a).unwrap() - 0.1).abs() < 1e-6);
    let b = video(&mut rng, 1.0);
    let mut oracle = 0.0;
    for t in 0..4 {
        for y in 0..3 {
            for x in 0..5 {
                let (p, q) = (a.pixel(t, x, y), b.pixel(t, x, y));
                for c in 0..3 {
                    oracle += f64::from((p[c] - q[c]).abs());
                }
            }
        }
    }
    oracle /= 4.0 * 3.0 * 5.0 * 3.0;
    assert!((video_l1(&a, &b).unwrap() - oracle).abs() < 1e-9);
    assert_eq!(video_l1(&a, &b).unwrap(), video_l1(&b, &a).unwrap());
    let mut small = b.clone();
    small.width = 4;
    assert!(video_l1(&a, &small).is_err());
}

#[test]
fn convergence_rule() {
    let decreasing: Vec<f64> = (0..500).map(|i| 1.0 / (i + 1) as f64).collect();
    for n in 1..=decreasing.len() {
        assert!(!converged(&decreasing[..n]).unwrap().0);
    }
    let mut h = vec![1.0; 401];
    h[100] = 0.5;
    assert_eq!(converged(&h), Some((true, 100)));
    assert_eq!(converged(&h[..131]), Some((false, 100)));
    assert_eq!(converged(&[]), None);
}
