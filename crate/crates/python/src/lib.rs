//! Python module `spritedecomp`: scene generation, decomposition,
//! evaluation and editing over the Rust core.
//!
//! Sprite indices are 0-based with the background at 0. Frames and
//! textures cross the boundary as flat `bytes` of little-endian `f32`.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use sprite_decomp::datagen::{
    benchmark_suite, generate_composition, simulate_prompt as sim, PromptNoiseConfig, SceneSpec,
};
use sprite_decomp::edit::{self, Modifier};
use sprite_decomp::metrics;
use sprite_decomp::model::{self, BBox, BoxAnnotation, Texture};
use sprite_decomp::optim::{self, OptimConfig};
use sprite_decomp::render::render_video;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn f32_bytes<'py>(py: Python<'py>, data: &[f32]) -> Bound<'py, PyBytes> {
    let raw: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    PyBytes::new(py, &raw)
}

/// Layered sprite composition: background first, back to front.
#[pyclass(name = "Composition", module = "spritedecomp", from_py_object)]
#[derive(Clone)]
struct PyComposition(model::Composition);

#[pymethods]
impl PyComposition {
    #[getter]
    fn num_sprites(&self) -> usize {
        self.0.num_sprites()
    }

    #[getter]
    fn num_frames(&self) -> usize {
        self.0.num_frames()
    }

    /// `(width, height)` in pixels.
    #[getter]
    fn canvas(&self) -> (usize, usize) {
        (self.0.canvas_width, self.0.canvas_height)
    }

    /// Per-frame `(affine, opacity)` of sprite `k`; the affine maps
    /// normalized canvas coordinates to texture coordinates.
    fn track(&self, k: usize) -> PyResult<Vec<([f32; 6], f32)>> {
        let s = self
            .0
            .sprites
            .get(k)
            .ok_or_else(|| err(format!("no sprite {k}")))?;
        Ok(s.track
            .frames
            .iter()
            .map(|e| (e.affine.0, e.opacity))
            .collect())
    }

    /// `(width, height, rgba)` of sprite `k`, straight alpha, row-major.
    fn texture<'py>(
        &self,
        py: Python<'py>,
        k: usize,
    ) -> PyResult<(usize, usize, Bound<'py, PyBytes>)> {
        let s = self
            .0
            .sprites
            .get(k)
            .ok_or_else(|| err(format!("no sprite {k}")))?;
        Ok((
            s.texture.width(),
            s.texture.height(),
            f32_bytes(py, s.texture.rgba()),
        ))
    }

    fn render(&self, py: Python<'_>) -> PyResult<PyVideo> {
        let c = self.0.clone();
        py.detach(move || render_video(&c))
            .map(PyVideo)
            .map_err(err)
    }

    /// Writes the manifest and textures into `dir`; returns the manifest path.
    fn save(&self, dir: PathBuf) -> PyResult<PathBuf> {
        model::save_composition(&self.0, &dir).map_err(err)
    }

    #[staticmethod]
    fn load(manifest: PathBuf) -> PyResult<Self> {
        let path = if manifest.is_dir() {
            manifest.join(model::MANIFEST_FILE)
        } else {
            manifest
        };
        model::load_composition(&path).map(Self).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Composition(sprites={}, frames={}, canvas={}x{})",
            self.0.num_sprites(),
            self.0.num_frames(),
            self.0.canvas_width,
            self.0.canvas_height
        )
    }
}

/// RGB video in `[0, 1]`.
#[pyclass(name = "Video", module = "spritedecomp", from_py_object)]
#[derive(Clone)]
struct PyVideo(model::Video);

#[pymethods]
impl PyVideo {
    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    #[getter]
    fn num_frames(&self) -> usize {
        self.0.num_frames()
    }

    /// Frame `t` as interleaved `[height][width][3]` f32 bytes.
    fn frame<'py>(&self, py: Python<'py>, t: usize) -> PyResult<Bound<'py, PyBytes>> {
        let f = self
            .0
            .frames
            .get(t)
            .ok_or_else(|| err(format!("no frame {t}")))?;
        Ok(f32_bytes(py, f))
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        model::save_video(&self.0, &dir).map_err(err)
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        model::load_video(&dir).map(Self).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Video({}x{}, {} frames)",
            self.0.width,
            self.0.height,
            self.0.num_frames()
        )
    }
}

/// Box prompt for one foreground sprite. `keyframe` is 0-based and `bbox`
/// is `(x0, y0, x1, y1)` in pixels.
#[pyclass(
    name = "Annotation",
    module = "spritedecomp",
    get_all,
    set_all,
    from_py_object
)]
#[derive(Clone)]
struct PyAnnotation {
    sprite_id: usize,
    keyframe: usize,
    bbox: (f32, f32, f32, f32),
}

#[pymethods]
impl PyAnnotation {
    #[new]
    fn new(sprite_id: usize, keyframe: usize, bbox: (f32, f32, f32, f32)) -> Self {
        Self {
            sprite_id,
            keyframe,
            bbox,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Annotation(sprite_id={}, keyframe={}, bbox={:?})",
            self.sprite_id, self.keyframe, self.bbox
        )
    }
}

impl From<&BoxAnnotation> for PyAnnotation {
    fn from(a: &BoxAnnotation) -> Self {
        Self {
            sprite_id: a.sprite_id,
            keyframe: a.keyframe,
            bbox: (a.bbox.x0, a.bbox.y0, a.bbox.x1, a.bbox.y1),
        }
    }
}

impl From<&PyAnnotation> for BoxAnnotation {
    fn from(a: &PyAnnotation) -> Self {
        let (x0, y0, x1, y1) = a.bbox;
        Self {
            sprite_id: a.sprite_id,
            keyframe: a.keyframe,
            bbox: BBox::new(x0, y0, x1, y1),
        }
    }
}

fn generated(spec: &SceneSpec) -> PyResult<(PyComposition, PyVideo)> {
    let (c, v) = generate_composition(spec).map_err(err)?;
    Ok((PyComposition(c), PyVideo(v)))
}

/// Random synthetic scene with `sprites` layers including the background.
#[pyfunction]
fn generate_scene(seed: u64, sprites: usize) -> PyResult<(PyComposition, PyVideo)> {
    let spec = SceneSpec::random(seed, sprites);
    spec.check().map_err(err)?;
    generated(&spec)
}

/// Scene `index` of the fixed 20-scene benchmark.
#[pyfunction]
fn benchmark_scene(index: usize) -> PyResult<(PyComposition, PyVideo)> {
    let suite = benchmark_suite();
    let spec = suite
        .get(index)
        .ok_or_else(|| err(format!("benchmark has {} scenes", suite.len())))?;
    generated(spec)
}

/// Box prompts drawn on the `m`-th most visible frame, jittered by `r_max`.
#[pyfunction]
#[pyo3(signature = (composition, m = 1, r_max = 0.0, seed = 0))]
fn simulate_prompt(
    composition: &PyComposition,
    m: usize,
    r_max: f32,
    seed: u64,
) -> PyResult<Vec<PyAnnotation>> {
    let anns = sim(&composition.0, &PromptNoiseConfig { m, r_max, seed }).map_err(err)?;
    Ok(anns.iter().map(PyAnnotation::from).collect())
}

/// Optimization trace of one decomposition.
#[pyclass(name = "History", module = "spritedecomp")]
struct PyHistory(optim::History);

#[pymethods]
impl PyHistory {
    #[getter]
    fn losses(&self) -> Vec<f64> {
        self.0.records.iter().map(|r| r.loss).collect()
    }

    /// `(iteration, from, to)` for every accepted order change.
    #[getter]
    fn order_changes(&self) -> Vec<(usize, Vec<usize>, Vec<usize>)> {
        self.0
            .order_changes
            .iter()
            .map(|o| (o.iteration, o.from.clone(), o.to.clone()))
            .collect()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn __len__(&self) -> usize {
        self.0.records.len()
    }
}

/// Decomposes `video` from box prompts. `config` is a JSON object of
/// overrides, with unknown keys rejected.
#[pyfunction]
#[pyo3(signature = (video, annotations, config = None))]
fn decompose(
    py: Python<'_>,
    video: &PyVideo,
    annotations: Vec<PyAnnotation>,
    config: Option<&str>,
) -> PyResult<(PyComposition, PyHistory)> {
    let cfg: OptimConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(err)?,
        None => OptimConfig::default(),
    };
    let anns: Vec<BoxAnnotation> = annotations.iter().map(BoxAnnotation::from).collect();
    let v = video.0.clone();
    let (c, h) = py
        .detach(move || optim::optimize(&v, &anns, &cfg))
        .map_err(err)?;
    Ok((PyComposition(c), PyHistory(h)))
}

/// Frame and sprite errors of `pred` against `gt` as a dict.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    pred: &PyComposition,
    gt: &PyComposition,
) -> PyResult<Bound<'py, PyAny>> {
    let (p, g) = (pred.0.clone(), gt.0.clone());
    let report = py.detach(move || metrics::evaluate(&p, &g)).map_err(err)?;
    json_to_py(py, &report)
}

#[pyfunction]
fn remove_sprite(composition: &PyComposition, k: usize) -> PyResult<PyComposition> {
    edit::remove_sprite(&composition.0, k)
        .map(PyComposition)
        .map_err(err)
}

/// Replaces the texture of sprite `k` with `rgba` (`width·height·4` floats).
#[pyfunction]
fn replace_texture(
    composition: &PyComposition,
    k: usize,
    width: usize,
    height: usize,
    rgba: Vec<f32>,
) -> PyResult<PyComposition> {
    let tex = Texture::new(width, height, rgba).map_err(err)?;
    edit::replace_texture(&composition.0, k, tex)
        .map(PyComposition)
        .map_err(err)
}

/// Adds an in-place spin of `rate` radians per frame to sprite `k`.
#[pyfunction]
fn rotate(composition: &PyComposition, k: usize, rate: f32) -> PyResult<PyComposition> {
    edit::insert_animation(&composition.0, k, &Modifier::Rotation { rate })
        .map(PyComposition)
        .map_err(err)
}

/// Multiplies the opacity of sprite `k` by one factor per frame.
#[pyfunction]
fn scale_opacity(
    composition: &PyComposition,
    k: usize,
    factors: Vec<f32>,
) -> PyResult<PyComposition> {
    edit::insert_animation(&composition.0, k, &Modifier::OpacityCurve(factors))
        .map(PyComposition)
        .map_err(err)
}

#[pymodule]
fn spritedecomp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyComposition>()?;
    m.add_class::<PyVideo>()?;
    m.add_class::<PyAnnotation>()?;
    m.add_class::<PyHistory>()?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_scene, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(remove_sprite, m)?)?;
    m.add_function(wrap_pyfunction!(replace_texture, m)?)?;
    m.add_function(wrap_pyfunction!(rotate, m)?)?;
    m.add_function(wrap_pyfunction!(scale_opacity, m)?)?;
    Ok(())
}
