use super::*;
use proptest::prelude::*;

fn sample(k: usize, t: usize) -> Composition {
    let sprites = (0..k)
        .map(|i| Sprite {
            texture: Texture::filled(8, 6, [0.2 * i as f32, 0.5, 0.25, 1.0]),
            track: AnimationTrack::constant(TrackEntry::IDENTITY, t),
            label: Some(format!("s{i}")),
        })
        .collect();
    Composition {
        sprites,
        canvas_width: 16,
        canvas_height: 12,
        fps: 10.0,
    }
}

#[test]
fn valid_composition_has_no_diagnostics() {
    assert!(validate(&sample(3, 4), SpriteBounds::GENERATED).is_empty());
}

#[test]
fn non_finite_affine_cites_sprite_and_frame() {
    let mut c = sample(2, 5);
    c.sprites[1].track.frames[3].affine.0[2] = f32::NAN;
    assert_eq!(
        validate(&c, SpriteBounds::ANY),
        vec![Diagnostic::NonFiniteAffine {
            sprite: 2,
            frame: 4
        }]
    );
}

#[test]
fn single_sprite_violates_generated_bound() {
    let c = sample(1, 3);
    let d = validate(&c, SpriteBounds::GENERATED);
    assert!(matches!(
        d.as_slice(),
        [Diagnostic::SpriteCount { count: 1, .. }]
    ));
    assert!(validate(&c, SpriteBounds::ANY).is_empty());
}

#[test]
fn box_affine_closed_form() {
    assert_eq!(
        AffineParams::from_box(0.0, 0.0, 1.0, 1.0),
        AffineParams::IDENTITY
    );
    assert_eq!(
        AffineParams::from_box(0.5, 0.0, 0.5, 1.0).0,
        [2.0, 0.0, -1.0, 0.0, 1.0, 0.0]
    );
}

#[test]
fn affine_inverse_round_trips() {
    let a = AffineParams([1.5, 0.25, -0.3, -0.1, 0.8, 0.2]);
    let id = a.then_after(&a.inverse().unwrap());
    for (x, y) in id.0.iter().zip(AffineParams::IDENTITY.0) {
        assert!((x - y).abs() < 1e-6);
    }
    assert!(AffineParams([0.0; 6]).inverse().is_none());
}

#[test]
fn planar_conversion_round_trips() {
    let data: Vec<f32> = (0..3 * 2 * 4).map(|i| i as f32 / 24.0).collect();
    let tex = Texture::new(3, 2, data).unwrap();
    let back = Texture::from_planar(3, 2, &tex.to_planar()).unwrap();
    assert_eq!(tex, back);
    assert_eq!(tex.to_planar()[6], tex.pixel(0, 0)[1]);
}

#[test]
fn bbox_clamp_keeps_one_pixel() {
    let b = BBox::new(-5.0, 10.0, -2.0, 10.2).clamped(16, 12);
    assert!(b.is_valid_in(16, 12));
    assert!(b.width() >= 1.0 && b.height() >= 1.0);
}

#[test]
fn iou_of_identical_boxes_is_one() {
    let b = BBox::new(1.0, 2.0, 5.0, 7.0);
    assert_eq!(b.iou(&b), 1.0);
    assert_eq!(b.iou(&BBox::new(6.0, 2.0, 8.0, 7.0)), 0.0);
}

fn arb_composition() -> impl Strategy<Value = Composition> {
    (2usize..5, 1usize..6, 1usize..6, 1usize..5, any::<u64>()).prop_flat_map(|(k, w, h, t, _)| {
        let tex = prop::collection::vec(0.0f32..=1.0, w * h * 4);
        let entry =
            (prop::array::uniform6(-1e4f32..1e4), 0.0f32..=1.0).prop_map(|(a, o)| TrackEntry {
                affine: AffineParams(a),
                opacity: o,
            });
        let sprite =
            (tex, prop::collection::vec(entry, t)).prop_map(move |(rgba, frames)| Sprite {
                texture: Texture::new(w, h, rgba).unwrap(),
                track: AnimationTrack { frames },
                label: None,
            });
        (
            prop::collection::vec(sprite, k),
            1usize..64,
            1usize..64,
            1.0f32..60.0,
        )
            .prop_map(|(sprites, cw, ch, fps)| Composition {
                sprites,
                canvas_width: cw,
                canvas_height: ch,
                fps,
            })
    })
}

#[derive(Clone, Debug)]
enum Mutation {
    None,
    Opacity(f32),
    Affine(f32),
    Texel(f32),
    DropFrame,
    Fps(f32),
    Canvas,
    Count,
}

fn arb_mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        Just(Mutation::None),
        prop_oneof![1.0001f32..5.0, -5.0f32..-0.0001].prop_map(Mutation::Opacity),
        prop_oneof![Just(f32::NAN), Just(f32::INFINITY), Just(f32::NEG_INFINITY)]
            .prop_map(Mutation::Affine),
        prop_oneof![1.0001f32..5.0, -5.0f32..-0.0001, Just(f32::NAN)].prop_map(Mutation::Texel),
        Just(Mutation::DropFrame),
        prop_oneof![Just(0.0f32), Just(-1.0), Just(f32::NAN)].prop_map(Mutation::Fps),
        Just(Mutation::Canvas),
        Just(Mutation::Count),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn save_load_round_trip(c in arb_composition()) {
        let dir = tempfile::tempdir().unwrap();
        let manifest = save_composition(&c, dir.path()).unwrap();
        let back = load_composition(&manifest).unwrap();
        prop_assert_eq!(back.canvas_width, c.canvas_width);
        prop_assert_eq!(back.canvas_height, c.canvas_height);
        prop_assert_eq!(back.fps.to_bits(), c.fps.to_bits());
        for (a, b) in c.sprites.iter().zip(&back.sprites) {
            for (x, y) in a.track.frames.iter().zip(&b.track.frames) {
                prop_assert_eq!(x.opacity.to_bits(), y.opacity.to_bits());
                for (p, q) in x.affine.0.iter().zip(y.affine.0) {
                    prop_assert_eq!(p.to_bits(), q.to_bits());
                }
            }
            for (p, q) in a.texture.rgba().iter().zip(b.texture.rgba()) {
                prop_assert!((p - q).abs() <= 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn validate_flags_exactly_the_mutations(
        c in arb_composition(),
        m in arb_mutation(),
        pick in any::<prop::sample::Index>(),
    ) {
        let mut c = c;
        let k = pick.index(c.sprites.len());
        let t = pick.index(c.num_frames());
        match m {
            Mutation::None => {}
            Mutation::Opacity(v) => c.sprites[k].track.frames[t].opacity = v,
            Mutation::Affine(v) => c.sprites[k].track.frames[t].affine.0[pick.index(6)] = v,
            Mutation::Texel(v) => {
                let n = c.sprites[k].texture.rgba.len();
                c.sprites[k].texture.rgba[pick.index(n)] = v;
            }
            Mutation::DropFrame => {
                c.sprites.last_mut().unwrap().track.frames.push(TrackEntry::IDENTITY);
            }
            Mutation::Fps(v) => c.fps = v,
            Mutation::Canvas => c.canvas_width = 0,
            Mutation::Count => c.sprites.truncate(1),
        }
        let diags = validate(&c, SpriteBounds::GENERATED);
        prop_assert_eq!(diags.is_empty(), matches!(m, Mutation::None), "{:?}", diags);
    }
}

#[test]
fn missing_texture_names_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_composition(&sample(2, 3), dir.path()).unwrap();
    let gone = dir.path().join("textures/sprite_02.png");
    std::fs::remove_file(&gone).unwrap();
    match load_composition(&manifest) {
        Err(Error::MissingTexture(p)) => assert_eq!(p, gone),
        other => panic!("unexpected {other:?}"),
    }
}

fn edit_manifest(f: impl FnOnce(&mut serde_json::Value)) -> Error {
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_composition(&sample(2, 50), dir.path()).unwrap();
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    f(&mut doc);
    std::fs::write(&manifest, doc.to_string()).unwrap();
    load_composition(&manifest).unwrap_err()
}

#[test]
fn short_track_is_a_length_error() {
    let e = edit_manifest(|d| {
        d["sprites"][1]["track"].as_array_mut().unwrap().pop();
    });
    assert!(
        matches!(
            e,
            Error::TrackLength {
                sprite: 2,
                len: 49,
                expected: 50
            }
        ),
        "{e}"
    );
}

#[test]
fn opacity_above_one_is_a_range_error() {
    let e = edit_manifest(|d| d["sprites"][1]["track"][7]["o"] = 1.2.into());
    assert!(
        matches!(
            e,
            Error::OpacityRange {
                sprite: 2,
                frame: 8,
                ..
            }
        ),
        "{e}"
    );
}

#[test]
fn unknown_field_is_a_schema_error() {
    let e = edit_manifest(|d| d["extra"] = 1.into());
    assert!(matches!(e, Error::Schema { .. }), "{e}");
}

#[test]
fn manifest_records_fps_and_track_entries() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_composition(&sample(2, 50), dir.path()).unwrap();
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(doc["fps"], 10.0);
    assert_eq!(doc["sprites"][0]["track"].as_array().unwrap().len(), 50);
    assert_eq!(doc["canvas"]["w"], 16);
}

#[test]
fn video_annotations_and_masks_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let v = Video {
        width: 5,
        height: 3,
        fps: 10.0,
        frames: (0..4)
            .map(|t| (0..45).map(|i| ((i + t) % 7) as f32 / 6.0).collect())
            .collect(),
    };
    save_video(&v, &dir.path().join("video")).unwrap();
    let back = load_video(&dir.path().join("video")).unwrap();
    assert_eq!(back.num_frames(), 4);
    for (a, b) in v.frames.iter().flatten().zip(back.frames.iter().flatten()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
    }

    let ann = vec![BoxAnnotation {
        sprite_id: 2,
        keyframe: 0,
        bbox: BBox::new(0.5, 1.0, 4.0, 3.0),
    }];
    let path = dir.path().join("ann.json");
    save_annotations(&ann, &path).unwrap();
    assert!(std::fs::read_to_string(&path)
        .unwrap()
        .contains("\"keyframe\": 1"));
    assert_eq!(load_annotations(&path).unwrap(), ann);

    let mut m = MaskSequence::zeros(5, 3, 2);
    m.frames[1][4] = 1.0;
    save_masks(&m, &dir.path().join("masks/2")).unwrap();
    assert_eq!(load_masks(&dir.path().join("masks/2"), 2).unwrap(), m);
    assert!(matches!(
        load_masks(&dir.path().join("masks/2"), 3),
        Err(Error::MissingFrame(_))
    ));
}
