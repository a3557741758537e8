use super::*;
use crate::datagen::{
    benchmark_suite, generate_composition, mask_box, simulate_prompt, visibility, AnimationSpec,
    AnimationType, Direction, Placement, PromptNoiseConfig, SceneSpec, SpriteSpec, TextureKind,
    Variant,
};
use crate::render::{render_video, warp_sprite};
use crate::track::{track_all, TrackConfig};

fn one_sprite(seed: u64, kind: AnimationType, p: Placement) -> SceneSpec {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut s = SceneSpec::with_animations(seed, &[], &mut rng);
    s.sprites = vec![SpriteSpec {
        texture: TextureKind::Shape,
        texture_seed: seed + 1,
        placement: p,
        animation: AnimationSpec {
            kind,
            variant: Variant::In,
            delay: 0,
            direction: Direction::Right,
        },
    }];
    s
}

/// Tracker output built from the generator's own visibility.
fn oracle_track(c: &Composition) -> TrackResult {
    let vis = visibility(c);
    let masks: Vec<MaskSequence> = vis[1..].to_vec();
    let boxes = masks
        .iter()
        .map(|m| {
            m.frames
                .iter()
                .map(|f| mask_box(f, m.width, m.height).unwrap_or(BBox::new(0.0, 0.0, 1.0, 1.0)))
                .collect()
        })
        .collect();
    TrackResult {
        sprite_ids: (2..=c.num_sprites()).collect(),
        keyframes: vec![0; c.num_sprites() - 1],
        boxes,
        masks,
    }
}

#[test]
fn affine_maps_box_edges_to_texture_edges() {
    let (w, h) = (128usize, 96usize);
    let b = BBox::new(10.0, 20.0, 74.0, 50.0);
    let a = init_affine(&b, (w, h)).unwrap();
    let to_u = |x: f32, n: usize| 2.0 * f64::from(x) / n as f64 - 1.0;
    let (s0, t0) = a.apply(to_u(b.x0, w), to_u(b.y0, h));
    let (s1, t1) = a.apply(to_u(b.x1, w), to_u(b.y1, h));
    for (got, want) in [(s0, -1.0), (t0, -1.0), (s1, 1.0), (t1, 1.0)] {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
    let full = init_affine(&BBox::new(0.0, 0.0, 128.0, 96.0), (w, h)).unwrap();
    assert_eq!(full, AffineParams::IDENTITY);
}

#[test]
fn static_sprite_colours_are_recovered() {
    let p = Placement {
        cx: 0.05,
        cy: -0.1,
        hx: 0.35,
        hy: 0.3,
    };
    let spec = one_sprite(9, AnimationType::None, p);
    let (c, video) = generate_composition(&spec).unwrap();
    let init = initialize(&video, &oracle_track(&c), &InitConfig::default()).unwrap();
    let e = c.sprites[1].track.frames[0];
    let gt = warp_sprite(&c.sprites[1].texture, &e, (128, 128));
    let got = warp_sprite(
        &init.sprites[1].texture,
        &init.sprites[1].track.frames[0],
        (128, 128),
    );
    let vis = &visibility(&c)[1].frames[0];
    let n = 128 * 128;
    let mut checked = 0;
    for y in 2..126 {
        for x in 2..126 {
            // Interior pixels only: the 5×5 neighbourhood is fully opaque.
            let interior =
                (y - 2..=y + 2).all(|yy| (x - 2..=x + 2).all(|xx| vis[yy * 128 + xx] > 0.999));
            if !interior {
                continue;
            }
            for ch in 0..3 {
                let d = (gt.rgba.data()[ch * n + y * 128 + x]
                    - got.rgba.data()[ch * n + y * 128 + x])
                    .abs();
                assert!(d <= 2.0 / 255.0, "({x},{y}) channel {ch}: {d}");
            }
            checked += 1;
        }
    }
    assert!(checked > 500, "{checked}");
}

#[test]
fn background_psnr_with_moving_sprite() {
    let p = Placement {
        cx: 0.0,
        cy: 0.2,
        hx: 0.25,
        hy: 0.25,
    };
    let spec = one_sprite(13, AnimationType::Slide, p);
    let (c, video) = generate_composition(&spec).unwrap();
    let init = initialize(&video, &oracle_track(&c), &InitConfig::default()).unwrap();
    let (a, b) = (init.sprites[0].texture.rgba(), c.sprites[0].texture.rgba());
    let mut mse = 0.0f64;
    let mut n = 0.0;
    for (x, y) in a.chunks(4).zip(b.chunks(4)) {
        for ch in 0..3 {
            mse += f64::from(x[ch] - y[ch]).powi(2);
            n += 1.0;
        }
        assert_eq!(x[3], 1.0);
    }
    let psnr = 10.0 * (1.0 / (mse / n)).log10();
    assert!(psnr >= 25.0, "PSNR {psnr}");
}

#[test]
fn initial_frames_are_close_to_the_video() {
    for spec in benchmark_suite().iter().take(6) {
        let (c, video) = generate_composition(spec).unwrap();
        let anns = simulate_prompt(&c, &PromptNoiseConfig::default()).unwrap();
        let track = track_all(&video, &anns, &TrackConfig::default()).unwrap();
        let init = initialize(&video, &track, &InitConfig::default()).unwrap();
        let rendered = render_video(&init).unwrap();
        let mut l1 = 0.0f64;
        let mut n = 0.0;
        for (a, b) in rendered.frames.iter().zip(&video.frames) {
            for (x, y) in a.iter().zip(b) {
                l1 += f64::from((x - y).abs());
                n += 1.0;
            }
        }
        let l1 = l1 / n;
        assert!(l1 <= 0.15, "scene {}: L1 {l1}", spec.seed);
    }
}

#[test]
fn zero_masks_give_zero_alpha() {
    let video = Video {
        width: 16,
        height: 16,
        fps: 10.0,
        frames: vec![vec![0.3; 16 * 16 * 3]; 4],
    };
    let boxes = vec![BBox::new(2.0, 2.0, 10.0, 12.0); 4];
    let tex = init_foreground_texture(
        &video,
        &boxes,
        &MaskSequence::zeros(16, 16, 4),
        &InitConfig {
            texture_size: 8,
            mask_weighted_rgb: false,
        },
    )
    .unwrap();
    assert!(tex
        .rgba()
        .chunks(4)
        .all(|p| p[3] == 0.0 && (p[0] - 0.3).abs() < 1e-6));
}

#[test]
fn degenerate_box_is_rejected() {
    assert!(init_affine(&BBox::new(3.0, 3.0, 3.0, 9.0), (16, 16)).is_err());
}
