//! `sprite-decomp` command surface: generate, decompose, eval, edit, render.
//!
//! [`run`] parses an argument vector and returns the process exit code:
//! 0 on success, 2 on usage errors, 1 when the command itself fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sprite_decomp::datagen::{
    benchmark_suite, generate_composition, scene_batch, simulate_prompt, visibility,
    PromptNoiseConfig, SceneSpec,
};
use sprite_decomp::edit::{insert_animation, remove_sprite, replace_texture, Modifier};
use sprite_decomp::metrics::evaluate;
use sprite_decomp::model::{
    load_annotations, load_composition, load_texture, load_video, save_annotations,
    save_composition, save_masks, save_video, Composition, MANIFEST_FILE,
};
use sprite_decomp::optim::{optimize_tracked, OptimConfig};
use sprite_decomp::render::render_video;
use sprite_decomp::track::{load_external_masks, track_all};
use sprite_decomp::Error;

#[derive(Debug, Parser)]
#[command(
    name = "sprite-decomp",
    version,
    about = "Decompose animated graphics into sprites"
)]
struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log every iteration instead of every 50th.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic scenes with ground truth, video, prompts and masks.
    Generate(GenerateArgs),
    /// Fit a sprite composition to a video.
    Decompose(DecomposeArgs),
    /// Compare a predicted composition with the ground truth.
    Eval(EvalArgs),
    /// Edit a composition.
    Edit(EditArgs),
    /// Render a composition to PNG frames.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Write the fixed 20-scene benchmark instead of random scenes.
    #[arg(long, conflicts_with = "count")]
    suite: bool,
    /// Keyframe rank of the simulated prompts (1 = most visible frame).
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Box jitter bound as a fraction of the box size.
    #[arg(long, default_value_t = 0.0)]
    rmax: f32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    /// Directory of PNG frames with video.json.
    #[arg(long)]
    video: PathBuf,
    /// Box prompts, one per foreground sprite.
    #[arg(long, required_unless_present = "masks")]
    annotations: Option<PathBuf>,
    /// Per-sprite mask directories; replaces tracking when given.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// JSON overrides of the optimizer defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted manifest (file or directory).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth manifest (file or directory).
    #[arg(long)]
    gt: PathBuf,
    /// Report file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EditOp {
    Remove,
    Replace,
    Rotate,
}

#[derive(Debug, Args)]
struct EditArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    op: EditOp,
    /// 1-based sprite index; 1 is the background.
    #[arg(long)]
    sprite: usize,
    /// PNG texture for `replace`.
    #[arg(long, required_if_eq("op", "replace"))]
    texture: Option<PathBuf>,
    /// Radians per frame for `rotate`.
    #[arg(long, required_if_eq("op", "rotate"), allow_hyphen_values = true)]
    rate: Option<f32>,
    /// Output directory for the edited manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output frame directory.
    #[arg(long)]
    out: PathBuf,
}

type CliResult<T> = Result<T, Error>;

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            log::error!("thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            1
        }
    }
}

fn init_logging(verbose: bool) {
    let level = if verbose { "debug" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .format_target(false)
        .try_init();
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate(a) => generate(&a),
        Command::Decompose(a) => decompose(&a),
        Command::Eval(a) => eval(&a),
        Command::Edit(a) => edit(&a),
        Command::Render(a) => render(&a),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// A manifest file, or the manifest inside a directory.
fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn generate(a: &GenerateArgs) -> CliResult<()> {
    let specs: Vec<SceneSpec> = if a.suite {
        benchmark_suite()
    } else {
        scene_batch(a.seed, a.count)
    };
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    for (i, spec) in specs.iter().enumerate() {
        let dir = a.out.join(format!("scene-{i:03}"));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let (c, video) = generate_composition(spec)?;
        let noise = PromptNoiseConfig {
            m: a.m,
            r_max: a.rmax,
            seed: spec.seed,
        };
        let anns = simulate_prompt(&c, &noise)?;
        write_json(&dir.join("scene.json"), spec)?;
        save_composition(&c, &dir.join("gt"))?;
        save_video(&video, &dir.join("video"))?;
        save_annotations(&anns, &dir.join("annotations.json"))?;
        for (k, m) in visibility(&c).iter().enumerate().skip(1) {
            save_masks(m, &dir.join("masks").join((k + 1).to_string()))?;
        }
        log::info!("wrote {} ({} sprites)", dir.display(), c.num_sprites());
    }
    Ok(())
}

/// Defaults overridden by the JSON file, then by `--seed`.
fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<OptimConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| Error::Schema {
                path: p.to_path_buf(),
                message: e.to_string(),
            })?
        }
        None => OptimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.check()?;
    Ok(cfg)
}

fn decompose(a: &DecomposeArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let video = load_video(&a.video)?;
    log::info!(
        "video {}x{}, {} frames",
        video.width,
        video.height,
        video.num_frames()
    );
    let track = match (&a.masks, &a.annotations) {
        (Some(m), _) => load_external_masks(m, &video)?,
        (None, Some(p)) => track_all(&video, &load_annotations(p)?, &cfg.track)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    log::info!("tracked {} sprites", track.sprite_ids.len());
    let (pred, history) = optimize_tracked(&video, &track, &cfg, None)?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    save_composition(&pred, &a.out)?;
    let csv = a.out.join("history.csv");
    fs::write(&csv, history.to_csv()).map_err(io_err(&csv))?;
    write_json(&a.out.join("history.json"), &history.without_timing())?;
    write_json(&a.out.join("config.json"), &cfg)?;
    log::info!(
        "done: {} iterations, final loss {:.6e}",
        history.records.len(),
        history.final_loss().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let pred = load_composition(&manifest_path(&a.pred))?;
    let gt = load_composition(&manifest_path(&a.gt))?;
    let report = evaluate(&pred, &gt)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    write_json(&a.out, &report)?;
    log::info!(
        "frame_l1={:.5} sprite_rgb_l1={:.5} sprite_alpha_l1={:.5}",
        report.frame_l1,
        report.sprite_rgb_l1,
        report.sprite_alpha_l1
    );
    Ok(())
}

fn edit(a: &EditArgs) -> CliResult<()> {
    let c: Composition = load_composition(&manifest_path(&a.input))?;
    let k = a.sprite.checked_sub(1).ok_or(Error::SpriteIndex {
        index: 0,
        count: c.num_sprites(),
    })?;
    let out = match a.op {
        EditOp::Remove => remove_sprite(&c, k)?,
        EditOp::Replace => {
            let path = a.texture.as_deref().expect("clap requires --texture");
            replace_texture(&c, k, load_texture(path)?)?
        }
        EditOp::Rotate => {
            let rate = a.rate.expect("clap requires --rate");
            insert_animation(&c, k, &Modifier::Rotation { rate })?
        }
    };
    save_composition(&out, &a.out)?;
    Ok(())
}

fn render(a: &RenderArgs) -> CliResult<()> {
    let c = load_composition(&manifest_path(&a.input))?;
    save_video(&render_video(&c)?, &a.out)?;
    Ok(())
}
