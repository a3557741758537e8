//! On-disk formats. Textures, frames and masks are 8-bit PNGs; numbers
//! that must survive exactly (affines, opacities) live in JSON.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use super::{
    validate, AnimationTrack, BBox, BoxAnnotation, Composition, MaskSequence, Sprite, SpriteBounds,
    Texture, TrackEntry, Video,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VIDEO_MANIFEST_FILE: &str = "video.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanvasDoc {
    w: usize,
    h: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpriteDoc {
    label: Option<String>,
    texture: String,
    track: Vec<TrackEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    canvas: CanvasDoc,
    fps: f32,
    sprites: Vec<SpriteDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoDoc {
    fps: f32,
    count: usize,
    w: usize,
    h: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationDoc {
    sprite_id: usize,
    keyframe: usize,
    #[serde(rename = "box")]
    bbox: [f32; 4],
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dequantize(v: u8) -> f32 {
    f32::from(v) / 255.0
}

fn write_png(path: &Path, w: usize, h: usize, data: &[u8], color: ExtendedColorType) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let enc = PngEncoder::new_with_quality(
        BufWriter::new(file),
        CompressionType::Default,
        FilterType::Adaptive,
    );
    enc.write_image(data, w as u32, h as u32, color)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn read_png(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn save_texture(tex: &Texture, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = tex.rgba().iter().map(|&v| quantize(v)).collect();
    write_png(
        path,
        tex.width(),
        tex.height(),
        &bytes,
        ExtendedColorType::Rgba8,
    )
}

/// Reads any PNG as a straight-alpha RGBA texture.
pub fn load_texture(path: &Path) -> Result<Texture> {
    let img = read_png(path)?.to_rgba8();
    let (w, h) = img.dimensions();
    let rgba = img.into_raw().into_iter().map(dequantize).collect();
    Texture::new(w as usize, h as usize, rgba)
}

fn frame_name(t: usize) -> String {
    format!("frame_{:04}.png", t + 1)
}

/// Writes `dir/manifest.json` and one PNG per texture under `dir/textures`.
pub fn save_composition(c: &Composition, dir: &Path) -> Result<PathBuf> {
    let diags = validate(c, SpriteBounds::ANY);
    if !diags.is_empty() {
        return Err(Error::Invalid(diags));
    }
    let tex_dir = dir.join("textures");
    create_dir(&tex_dir)?;
    let mut sprites = Vec::with_capacity(c.sprites.len());
    for (k, s) in c.sprites.iter().enumerate() {
        let rel = format!("textures/sprite_{:02}.png", k + 1);
        save_texture(&s.texture, &dir.join(&rel))?;
        sprites.push(SpriteDoc {
            label: s.label.clone(),
            texture: rel,
            track: s.track.frames.clone(),
        });
    }
    let doc = ManifestDoc {
        canvas: CanvasDoc {
            w: c.canvas_width,
            h: c.canvas_height,
        },
        fps: c.fps,
        sprites,
    };
    let path = dir.join(MANIFEST_FILE);
    write_json(&path, &doc)?;
    Ok(path)
}

/// Reads a manifest written by [`save_composition`] and validates it.
pub fn load_composition(manifest: &Path) -> Result<Composition> {
    let doc: ManifestDoc = read_json(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let expected = doc.sprites.first().map_or(0, |s| s.track.len());
    for (k, s) in doc.sprites.iter().enumerate() {
        if s.track.len() != expected || s.track.is_empty() {
            return Err(Error::TrackLength {
                sprite: k + 1,
                len: s.track.len(),
                expected,
            });
        }
        for (t, e) in s.track.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.opacity) {
                return Err(Error::OpacityRange {
                    sprite: k + 1,
                    frame: t + 1,
                    value: e.opacity,
                });
            }
        }
    }
    let mut sprites = Vec::with_capacity(doc.sprites.len());
    for s in doc.sprites {
        let path = base.join(&s.texture);
        if !path.is_file() {
            return Err(Error::MissingTexture(path));
        }
        sprites.push(Sprite {
            texture: load_texture(&path)?,
            track: AnimationTrack { frames: s.track },
            label: s.label,
        });
    }
    let c = Composition {
        sprites,
        canvas_width: doc.canvas.w,
        canvas_height: doc.canvas.h,
        fps: doc.fps,
    };
    let diags = validate(&c, SpriteBounds::ANY);
    if diags.is_empty() {
        Ok(c)
    } else {
        Err(Error::Invalid(diags))
    }
}

/// Writes numbered RGB frames plus `video.json` into `dir`.
pub fn save_video(v: &Video, dir: &Path) -> Result<()> {
    v.validate()?;
    create_dir(dir)?;
    for (t, f) in v.frames.iter().enumerate() {
        let bytes: Vec<u8> = f.iter().map(|&x| quantize(x)).collect();
        write_png(
            &dir.join(frame_name(t)),
            v.width,
            v.height,
            &bytes,
            ExtendedColorType::Rgb8,
        )?;
    }
    write_json(
        &dir.join(VIDEO_MANIFEST_FILE),
        &VideoDoc {
            fps: v.fps,
            count: v.frames.len(),
            w: v.width,
            h: v.height,
        },
    )
}

pub fn load_video(dir: &Path) -> Result<Video> {
    let doc: VideoDoc = read_json(&dir.join(VIDEO_MANIFEST_FILE))?;
    let mut frames = Vec::with_capacity(doc.count);
    for t in 0..doc.count {
        let path = dir.join(frame_name(t));
        if !path.is_file() {
            return Err(Error::MissingFrame(path));
        }
        let img = read_png(&path)?.to_rgb8();
        let got = (img.width() as usize, img.height() as usize);
        if got != (doc.w, doc.h) {
            return Err(Error::SizeMismatch {
                expected: (doc.w, doc.h),
                got,
            });
        }
        frames.push(img.into_raw().into_iter().map(dequantize).collect());
    }
    let v = Video {
        width: doc.w,
        height: doc.h,
        fps: doc.fps,
        frames,
    };
    v.validate()?;
    Ok(v)
}

/// Keyframes are written 1-based.
pub fn save_annotations(ann: &[BoxAnnotation], path: &Path) -> Result<()> {
    let docs: Vec<AnnotationDoc> = ann
        .iter()
        .map(|a| AnnotationDoc {
            sprite_id: a.sprite_id,
            keyframe: a.keyframe + 1,
            bbox: [a.bbox.x0, a.bbox.y0, a.bbox.x1, a.bbox.y1],
        })
        .collect();
    write_json(path, &docs)
}

pub fn load_annotations(path: &Path) -> Result<Vec<BoxAnnotation>> {
    let docs: Vec<AnnotationDoc> = read_json(path)?;
    docs.into_iter()
        .map(|d| {
            if d.keyframe == 0 {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    message: "keyframe is 1-based".into(),
                });
            }
            let [x0, y0, x1, y1] = d.bbox;
            Ok(BoxAnnotation {
                sprite_id: d.sprite_id,
                keyframe: d.keyframe - 1,
                bbox: BBox::new(x0, y0, x1, y1),
            })
        })
        .collect()
}

/// Writes grayscale mask frames into `dir` (one directory per sprite).
pub fn save_masks(m: &MaskSequence, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    for (t, f) in m.frames.iter().enumerate() {
        let bytes: Vec<u8> = f.iter().map(|&x| quantize(x)).collect();
        write_png(
            &dir.join(frame_name(t)),
            m.width,
            m.height,
            &bytes,
            ExtendedColorType::L8,
        )?;
    }
    Ok(())
}

/// Reads `frames` consecutive mask PNGs from `dir`.
pub fn load_masks(dir: &Path, frames: usize) -> Result<MaskSequence> {
    let mut out: Option<MaskSequence> = None;
    for t in 0..frames {
        let path = dir.join(frame_name(t));
        if !path.is_file() {
            return Err(Error::MissingFrame(path));
        }
        let img = read_png(&path)?.to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let seq = out.get_or_insert_with(|| MaskSequence {
            width: w,
            height: h,
            frames: Vec::with_capacity(frames),
        });
        if (seq.width, seq.height) != (w, h) {
            return Err(Error::SizeMismatch {
                expected: (seq.width, seq.height),
                got: (w, h),
            });
        }
        seq.frames
            .push(img.into_raw().into_iter().map(dequantize).collect());
    }
    out.ok_or_else(|| Error::MissingFrame(dir.join(frame_name(0))))
}
