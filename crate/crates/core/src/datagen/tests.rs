use super::*;
use crate::model::{AffineParams, Texture};
use crate::render::render_frame;
use proptest::prelude::*;
use rand::Rng;

fn spec(kind: AnimationType, variant: Variant, delay: usize) -> AnimationSpec {
    AnimationSpec {
        kind,
        variant,
        delay,
        direction: Direction::Left,
    }
}

#[test]
fn fade_in_is_linear_from_zero() {
    let t = 50;
    let track = animation_preset(
        &spec(AnimationType::Fade, Variant::In, 0),
        &Placement::FULL,
        t,
    )
    .unwrap();
    for (i, e) in track.frames.iter().enumerate() {
        assert!((e.opacity - i as f32 / (t - 1) as f32).abs() < 1e-6);
        assert_eq!(e.affine, AffineParams::IDENTITY);
    }
}

#[test]
fn zoom_in_ends_at_identity() {
    let track = animation_preset(
        &spec(AnimationType::Zoom, Variant::In, 3),
        &Placement::FULL,
        50,
    )
    .unwrap();
    assert_eq!(track.frames[49].affine, AffineParams::IDENTITY);
    assert_eq!(track.frames[49].opacity, 1.0);
    // Scale starts at the floor.
    assert!((track.frames[0].affine.0[0] - (1.0 / MIN_SCALE) as f32).abs() < 1e-3);
}

#[test]
fn slide_in_starts_fully_off_canvas() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (bg, mean) = background_texture(&mut rng, 32, 32);
    let fg = sprite_texture(&mut rng, TextureKind::Shape, 32, mean);
    for dir in [
        Direction::Left,
        Direction::Right,
        Direction::Up,
        Direction::Down,
    ] {
        let pl = Placement {
            cx: 0.3,
            cy: -0.2,
            hx: 0.4,
            hy: 0.3,
        };
        let a = AnimationSpec {
            direction: dir,
            ..spec(AnimationType::Slide, Variant::In, 0)
        };
        let track = animation_preset(&a, &pl, 20).unwrap();
        let with = render_frame(
            &[(&bg, TrackEntry::IDENTITY), (&fg, track.frames[0])],
            (40, 48),
        )
        .unwrap();
        let without = render_frame(&[(&bg, TrackEntry::IDENTITY)], (40, 48)).unwrap();
        assert_eq!(with, without, "{dir:?}");
        let rest = AnimationTrack::constant(track.frames[19], 1);
        let end = render_frame(
            &[(&bg, TrackEntry::IDENTITY), (&fg, rest.frames[0])],
            (40, 48),
        )
        .unwrap();
        assert_ne!(end, without);
    }
}

#[test]
fn delayed_frames_hold_the_start_state() {
    for kind in AnimationType::ALL {
        for variant in [Variant::In, Variant::Out, Variant::Both] {
            let track = animation_preset(&spec(kind, variant, 7), &Placement::FULL, 30).unwrap();
            assert!(
                track.frames[..=7].iter().all(|e| *e == track.frames[0]),
                "{kind:?}"
            );
        }
    }
}

#[test]
fn both_variant_reaches_rest_state_at_midpoint() {
    let pl = Placement {
        cx: -0.2,
        cy: 0.1,
        hx: 0.3,
        hy: 0.35,
    };
    for kind in [
        AnimationType::Slide,
        AnimationType::Scale,
        AnimationType::Fade,
        AnimationType::Zoom,
    ] {
        let both = animation_preset(&spec(kind, Variant::Both, 0), &pl, 51).unwrap();
        let into = animation_preset(&spec(kind, Variant::In, 0), &pl, 51).unwrap();
        assert_eq!(both.frames[25], into.frames[50], "{kind:?}");
        let out = animation_preset(&spec(kind, Variant::Out, 0), &pl, 51).unwrap();
        assert_eq!(both.frames[50], out.frames[50], "{kind:?}");
    }
}

#[test]
fn oscillating_presets_follow_their_closed_forms() {
    let t = 41;
    let flash = animation_preset(
        &spec(AnimationType::Flash, Variant::In, 0),
        &Placement::FULL,
        t,
    )
    .unwrap();
    for (i, e) in flash.frames.iter().enumerate() {
        let p = i as f64 / (t - 1) as f64;
        let want = 0.5 * (1.0 + (std::f64::consts::TAU * FLASH_CYCLES * p).cos());
        assert!((f64::from(e.opacity) - want).abs() < 1e-6);
    }
    let shake = animation_preset(
        &spec(AnimationType::Shake, Variant::In, 0),
        &Placement::FULL,
        t,
    )
    .unwrap();
    let max_shift = shake
        .frames
        .iter()
        .map(|e| (e.affine.0[2]).abs())
        .fold(0.0f32, f32::max);
    assert!((f64::from(max_shift) - SHAKE_AMPLITUDE).abs() < 1e-3);
    let spin = animation_preset(
        &spec(AnimationType::Spin, Variant::In, 0),
        &Placement::FULL,
        t,
    )
    .unwrap();
    // Half a turn mirrors the sprite horizontally.
    assert!((spin.frames[20].affine.0[0] + 1.0).abs() < 1e-5);
    assert!(spin.frames.iter().all(|e| e.affine.0[4] == 1.0));
}

#[test]
fn delay_must_be_below_frame_count() {
    assert!(animation_preset(
        &spec(AnimationType::Fade, Variant::In, 50),
        &Placement::FULL,
        50
    )
    .is_err());
    assert!("wobble".parse::<AnimationType>().is_err());
    assert_eq!(
        "zoom".parse::<AnimationType>().unwrap(),
        AnimationType::Zoom
    );
}

fn arb_anim() -> impl Strategy<Value = (AnimationSpec, Placement, usize)> {
    (
        0usize..8,
        0usize..3,
        0usize..4,
        1usize..60,
        -0.9f64..0.9,
        -0.9f64..0.9,
        0.05f64..1.0,
        0.05f64..1.0,
        any::<prop::sample::Index>(),
    )
        .prop_map(|(k, v, d, t, cx, cy, hx, hy, delay)| {
            (
                AnimationSpec {
                    kind: AnimationType::ALL[k],
                    variant: [Variant::In, Variant::Out, Variant::Both][v],
                    delay: delay.index(t),
                    direction: [
                        Direction::Left,
                        Direction::Right,
                        Direction::Up,
                        Direction::Down,
                    ][d],
                },
                Placement { cx, cy, hx, hy },
                t,
            )
        })
}

proptest! {
    #[test]
    fn presets_satisfy_track_invariants((a, pl, t) in arb_anim()) {
        let track = animation_preset(&a, &pl, t).unwrap();
        prop_assert_eq!(track.len(), t);
        for e in &track.frames {
            prop_assert!((0.0..=1.0).contains(&e.opacity));
            prop_assert!(e.affine.is_finite());
            prop_assert_eq!(e.affine.0[1], 0.0);
            prop_assert_eq!(e.affine.0[3], 0.0);
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let s = SceneSpec::random(17, 3);
    let (c1, v1) = generate_composition(&s).unwrap();
    let (c2, v2) = generate_composition(&s).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(v1, v2);
}

#[test]
fn minimal_scene_has_background_and_one_sprite() {
    let (c, v) = generate_composition(&SceneSpec::random(3, 2)).unwrap();
    assert_eq!(c.num_sprites(), 2);
    assert_eq!(c.sprites[0].track.frames[0], TrackEntry::IDENTITY);
    assert_eq!(v.num_frames(), DEFAULT_FRAMES);
    assert_eq!((v.width, v.height), (DEFAULT_CANVAS, DEFAULT_CANVAS));
    assert_eq!(c.fps, 10.0);
    assert!(generate_composition(&SceneSpec::random(3, 1)).is_err());
    assert!(generate_composition(&SceneSpec::random(3, 7)).is_err());
}

#[test]
fn generated_video_is_the_rendered_composition() {
    let (c, v) = generate_composition(&SceneSpec::random(5, 4)).unwrap();
    assert_eq!(render_video(&c).unwrap(), v);
}

#[test]
fn suite_covers_every_animation_type() {
    let suite = benchmark_suite();
    assert_eq!(suite.len(), 20);
    let mut seen = std::collections::BTreeSet::new();
    for s in &suite {
        assert!((2..=4).contains(&s.num_sprites()));
        assert_eq!((s.frames, s.canvas_height.min(s.canvas_width)), (50, 128));
        seen.extend(s.sprites.iter().map(|x| x.animation.kind));
    }
    assert_eq!(seen.len(), 8);
    assert_eq!(suite, benchmark_suite());
}

fn lone_sprite(track: AnimationTrack) -> Composition {
    let t = track.len();
    Composition {
        sprites: vec![
            Sprite {
                texture: Texture::filled(8, 8, [0.1, 0.1, 0.1, 1.0]),
                track: AnimationTrack::constant(TrackEntry::IDENTITY, t),
                label: None,
            },
            Sprite {
                texture: Texture::filled(8, 8, [0.9, 0.5, 0.1, 1.0]),
                track,
                label: None,
            },
        ],
        canvas_width: 32,
        canvas_height: 32,
        fps: 10.0,
    }
}

#[test]
fn static_sprite_prompt_is_its_footprint_on_the_first_frame() {
    // Box covering pixel columns 8..24 and rows 4..20.
    let e = TrackEntry {
        affine: AffineParams::from_box(0.0, -0.25, 0.5, 0.5),
        opacity: 1.0,
    };
    let c = lone_sprite(AnimationTrack::constant(e, 6));
    let ann = simulate_prompt(&c, &PromptNoiseConfig::default()).unwrap();
    assert_eq!(ann.len(), 1);
    assert_eq!(ann[0].sprite_id, 2);
    assert_eq!(ann[0].keyframe, 0);
    assert_eq!(ann[0].bbox, BBox::new(8.0, 4.0, 24.0, 20.0));
}

#[test]
fn fade_in_prompt_uses_the_most_opaque_frame() {
    let pl = Placement {
        cx: 0.0,
        cy: 0.0,
        hx: 0.5,
        hy: 0.5,
    };
    let track = animation_preset(&spec(AnimationType::Fade, Variant::In, 0), &pl, 12).unwrap();
    let ann = simulate_prompt(&lone_sprite(track), &PromptNoiseConfig::default()).unwrap();
    assert_eq!(ann[0].keyframe, 11);
}

#[test]
fn invisible_sprite_is_an_error() {
    let e = TrackEntry {
        affine: AffineParams::IDENTITY,
        opacity: 0.0,
    };
    let c = lone_sprite(AnimationTrack::constant(e, 3));
    assert!(matches!(
        simulate_prompt(&c, &PromptNoiseConfig::default()),
        Err(Error::NeverVisible(2))
    ));
}

#[test]
fn zero_jitter_keeps_the_box() {
    let b = BBox::new(3.0, 4.0, 20.0, 30.0);
    assert_eq!(jitter_box(&b, 0.0, 99, (64, 64)), b);
}

#[test]
fn jitter_matches_direct_formula() {
    let b = BBox::new(10.0, 20.0, 50.0, 40.0);
    for seed in 0..20 {
        let got = jitter_box(&b, 0.3, seed, (128, 128));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f32> = (0..4).map(|_| rng.random_range(-0.3f32..=0.3)).collect();
        let (w, h) = (40.0, 20.0);
        let (l, t, rr, bb) = (
            10.0 + w * r[0],
            20.0 + h * r[1],
            50.0 + w * r[2],
            40.0 + h * r[3],
        );
        let want = BBox::new(l.min(rr), t.min(bb), l.max(rr), t.max(bb)).clamped(128, 128);
        assert_eq!(got, want);
        assert!(got.is_valid_in(128, 128));
    }
}

#[test]
fn extreme_jitter_still_gives_a_valid_box() {
    let b = BBox::new(0.0, 0.0, 1.0, 1.0);
    for seed in 0..200 {
        let j = jitter_box(&b, 5.0, seed, (16, 12));
        assert!(j.is_valid_in(16, 12), "{j:?}");
        assert!(j.width() >= 1.0 && j.height() >= 1.0);
    }
}

#[test]
fn scene_batches_are_seeded_and_bounded() {
    let a = scene_batch(7, 6);
    assert_eq!(a, scene_batch(7, 6));
    assert_eq!(a[..3], scene_batch(7, 3)[..]);
    assert_ne!(a, scene_batch(8, 6));
    for s in &a {
        s.check().unwrap();
        assert!((2..=6).contains(&s.num_sprites()));
    }
}
