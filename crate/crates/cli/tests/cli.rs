use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sprite-decomp");

/// Just enough optimization to exercise every stage quickly.
const TINY: &str = r#"{"max_iters": 3, "n_warm": 1, "prior": {"levels": 2, "channels": 4}}"#;

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn generate(dir: &Path, seed: u64, count: usize) {
    let code = sprite_decomp_cli::run([
        "sprite-decomp",
        "generate",
        "--seed",
        &seed.to_string(),
        "--count",
        &count.to_string(),
        "--out",
        s(dir),
    ]);
    assert_eq!(code, 0);
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, 7, 3);
    generate(&b, 7, 3);
    let names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 3);
    for i in 0..3 {
        let scene = a.join(format!("scene-{i:03}"));
        for f in [
            "scene.json",
            "annotations.json",
            "gt/manifest.json",
            "video/video.json",
        ] {
            assert!(scene.join(f).is_file(), "{f}");
        }
        assert!(scene.join("masks/2").is_dir());
    }
    assert_eq!(tree(&a), tree(&b));
    let c = tmp.path().join("c");
    generate(&c, 8, 3);
    assert_ne!(tree(&a), tree(&c));
}

#[test]
fn decompose_then_eval_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 7, 1);
    let scene = data.join("scene-000");
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("pred");
    let code = sprite_decomp_cli::run([
        "sprite-decomp",
        "decompose",
        "--video",
        s(&scene.join("video")),
        "--annotations",
        s(&scene.join("annotations.json")),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    for f in [
        "manifest.json",
        "history.csv",
        "history.json",
        "config.json",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("iteration,loss,wall_ms"));
    assert_eq!(csv.lines().count(), 4);

    let report = tmp.path().join("eval/report.json");
    let code = sprite_decomp_cli::run([
        "sprite-decomp",
        "eval",
        "--pred",
        s(&out),
        "--gt",
        s(&scene.join("gt")),
        "--out",
        s(&report),
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    for key in ["frame_l1", "sprite_rgb_l1", "sprite_alpha_l1"] {
        let x = v[key].as_f64().unwrap_or_else(|| panic!("{key}"));
        assert!((0.0..0.2).contains(&x), "{key} = {x}");
    }
    assert_eq!(v["assignment"][0], 0);
}

#[test]
fn runs_are_byte_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 3, 1);
    let scene = data.join("scene-000");
    let cfg = tiny_config(tmp.path());
    let mut trees = Vec::new();
    for (run, threads) in [(0, "1"), (1, "1"), (2, "4")] {
        let out = tmp.path().join(format!("run{run}"));
        let o = cli(&[
            "--threads",
            threads,
            "decompose",
            "--video",
            s(&scene.join("video")),
            "--annotations",
            s(&scene.join("annotations.json")),
            "--config",
            s(&cfg),
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let report = out.join("report.json");
        let o = cli(&[
            "eval",
            "--pred",
            s(&out),
            "--gt",
            s(&scene.join("gt")),
            "--out",
            s(&report),
        ]);
        assert!(o.status.success());
        let mut t = tree(&out);
        // the CSV carries wall-clock timings
        t.remove(Path::new("history.csv"));
        trees.push(t);
    }
    assert!(trees[0].contains_key(Path::new("history.json")));
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[0], trees[2]);
}

#[test]
fn external_masks_replace_tracking() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 7, 1);
    let scene = data.join("scene-000");
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("pred");
    let o = cli(&[
        "decompose",
        "--video",
        s(&scene.join("video")),
        "--masks",
        s(&scene.join("masks")),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn usage_errors_exit_with_two() {
    let o = cli(&["decompose", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(cli(&[]).status.code(), Some(2));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
    // neither prompts nor masks
    assert_eq!(
        cli(&["decompose", "--video", "v", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cli(&["edit", "--in", "m", "--op", "replace", "--sprite", "2", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        cli(&["--threads", "0", "render", "--in", "m", "--out", "o"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    assert_eq!(
        cli(&["render", "--in", s(&missing), "--out", s(&missing)])
            .status
            .code(),
        Some(1)
    );

    let data = tmp.path().join("data");
    generate(&data, 7, 1);
    let scene = data.join("scene-000");
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"max_iters": 1, "learning_rate": 0.1}"#).unwrap();
    let o = cli(&[
        "decompose",
        "--video",
        s(&scene.join("video")),
        "--annotations",
        s(&scene.join("annotations.json")),
        "--config",
        s(&bad),
        "--out",
        s(&tmp.path().join("pred")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
    assert!(!tmp.path().join("pred").exists());

    let gt = scene.join("gt");
    let o = cli(&[
        "edit",
        "--in",
        s(&gt),
        "--op",
        "remove",
        "--sprite",
        "1",
        "--out",
        s(&tmp.path().join("e")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn edit_and_render_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, 7, 1);
    let gt = data.join("scene-000/gt");
    let rotated = tmp.path().join("rotated");
    let o = cli(&[
        "edit",
        "--in",
        s(&gt),
        "--op",
        "rotate",
        "--sprite",
        "2",
        "--rate",
        "-0.2",
        "--out",
        s(&rotated),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let removed = tmp.path().join("removed");
    let o = cli(&[
        "edit",
        "--in",
        s(&gt),
        "--op",
        "remove",
        "--sprite",
        "2",
        "--out",
        s(&removed),
    ]);
    assert!(o.status.success());
    let replaced = tmp.path().join("replaced");
    let tex = gt
        .join("textures")
        .read_dir()
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let o = cli(&[
        "edit",
        "--in",
        s(&gt),
        "--op",
        "replace",
        "--sprite",
        "2",
        "--texture",
        s(&tex),
        "--out",
        s(&replaced),
    ]);
    assert!(o.status.success());

    let frames = tmp.path().join("frames");
    let o = cli(&[
        "render",
        "--in",
        s(&removed.join("manifest.json")),
        "--out",
        s(&frames),
    ]);
    assert!(o.status.success());
    let pngs = fs::read_dir(&frames)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "png")
        })
        .count();
    assert_eq!(pngs, 50);
    // the edited scene is background only, so every frame equals the first
    let v = sprite_decomp::model::load_video(&frames).unwrap();
    assert!(v.frames.iter().all(|f| f == &v.frames[0]));
}
