use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use condkit_core::conditioning::{compute, ConditioningVector, Variant, ViewerDepth};
use condkit_core::dataset::{ingest_scene_dir, write_scene_dir, SceneRecord};
use condkit_core::depth::QuantileMethod;
use condkit_core::Config;
use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scene")
}

fn condkit(args: &[&str]) -> Output {
    condkit_env(args, &[])
}

fn condkit_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_condkit"));
    cmd.args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("CONDKIT_")) {
        cmd.env_remove(k);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "status {:?}\nstderr: {}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_lines(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_exists_for_every_subcommand() {
    for args in [
        vec!["--help"],
        vec!["shard", "build", "--help"],
        vec!["shard", "inspect", "--help"],
        vec!["stream", "bench", "--help"],
        vec!["conditioning", "--help"],
        vec!["preprocess", "--help"],
        vec!["plan", "distill", "--help"],
        vec!["eval", "--help"],
        vec!["config", "dump", "--help"],
    ] {
        let out = condkit(&args);
        assert!(out.status.success(), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("--seed"), "{args:?}");
    }
}

#[test]
fn same_view_gives_identity_pose_block() {
    let out = stdout(&condkit(&["conditioning", "--scene", p(&fixture()), "--i", "0", "--j", "0", "--variant", "sixdof"]));
    let lines = json_lines(&out);
    assert_eq!(lines[0]["format"], "condkit-conditioning");
    assert_eq!(lines[0]["version"], 1);
    let entries: Vec<f64> = serde_json::from_value(lines[1]["entries"].clone()).unwrap();
    let identity = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
    for (a, b) in entries[..16].iter().zip(identity) {
        assert!((a - b).abs() < 1e-12, "{entries:?}");
    }
    assert_eq!(&entries[16..], &[0.8, 0.8f64.sin(), 0.8f64.cos()]);
}

#[test]
fn viewer_vector_matches_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("v.bin");
    let out = stdout(&condkit(&[
        "conditioning",
        "--scene",
        p(&fixture()),
        "--i",
        "0",
        "--j",
        "2",
        "--variant",
        "sixdof_viewer",
        "--out",
        p(&bin),
    ]));

    let record = ingest_scene_dir(&fixture()).unwrap();
    let scene = record.scene_view(0, 2).unwrap();
    let d = scene.depths()[0].downsample(Config::default().depth.downsample);
    let expected = compute(Variant::SixdofViewer, &scene, ViewerDepth::Infilled(&d), QuantileMethod::Linear).unwrap();

    assert_eq!(std::fs::read(&bin).unwrap(), expected.to_bytes());
    let lines = json_lines(&out);
    let entries: Vec<f64> = serde_json::from_value(lines[1]["entries"].clone()).unwrap();
    assert_eq!(
        entries.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        expected.entries.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn all_variants_have_expected_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("all.bin");
    let out = stdout(&condkit(&[
        "conditioning", "--scene", p(&fixture()), "--i", "1", "--j", "2", "--variant", "all", "--out", p(&bin),
    ]));
    let lines = json_lines(&out);
    let lengths: Vec<u64> = lines[1..].iter().map(|l| l["length"].as_u64().unwrap()).collect();
    assert_eq!(lengths, vec![3, 19, 19, 19, 19]);
    let names: Vec<&str> = lines[1..].iter().map(|l| l["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["zero123", "sixdof", "sixdof_norm", "sixdof_agg", "sixdof_viewer"]);

    let bytes = std::fs::read(&bin).unwrap();
    let mut at = 0;
    let mut decoded = Vec::new();
    while at < bytes.len() {
        let (v, used) = ConditioningVector::from_bytes(&bytes[at..]).unwrap();
        decoded.push(v.len());
        at += used;
    }
    assert_eq!(decoded, vec![3, 19, 19, 19, 19]);
}

#[test]
fn error_classes_map_to_exit_codes() {
    let scene = fixture();
    let bad_index = condkit(&["conditioning", "--scene", p(&scene), "--i", "0", "--j", "7"]);
    assert_eq!(bad_index.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&bad_index.stderr);
    assert!(msg.contains("view index 7"), "{msg}");

    let missing = condkit(&["conditioning", "--scene", "/nonexistent/scene", "--i", "0", "--j", "1"]);
    assert_eq!(missing.status.code(), Some(4));

    let unknown = condkit(&["--set", "dataset.bogus=1", "config", "dump"]);
    assert_eq!(unknown.status.code(), Some(2));
    let bad_flag = condkit(&["conditioning", "--nope"]);
    assert_eq!(bad_flag.status.code(), Some(2));
    let bad_variant = condkit(&["conditioning", "--scene", p(&scene), "--i", "0", "--j", "1", "--variant", "sixdof_x"]);
    assert_eq!(bad_variant.status.code(), Some(2));
}

#[test]
fn config_dump_round_trips_and_layers() {
    let dir = tempfile::tempdir().unwrap();
    let first = stdout(&condkit(&["config", "dump"]));
    assert!(first.starts_with("# condkit-config v1\n"));
    let path = dir.path().join("c.toml");
    std::fs::write(&path, &first).unwrap();
    let second = stdout(&condkit(&["--config", p(&path), "config", "dump"]));
    assert_eq!(first, second);
    assert_eq!(Config::from_toml(&first).unwrap(), Config::default());

    let file = dir.path().join("layer.toml");
    std::fs::write(&file, "seed = 1\n[dataset]\nrate = 2.0\nworkers = 3\n").unwrap();
    let rate = |text: &str| Config::from_toml(text).unwrap().dataset.rate;
    let from_file = stdout(&condkit(&["--config", p(&file), "config", "dump"]));
    assert_eq!(rate(&from_file), 2.0);
    let with_flag = stdout(&condkit(&["--config", p(&file), "--set", "dataset.rate=3.0", "config", "dump"]));
    assert_eq!(rate(&with_flag), 3.0);
    let with_env = stdout(&condkit_env(
        &["--config", p(&file), "--set", "dataset.rate=3.0", "config", "dump"],
        &[("CONDKIT_DATASET_RATE", "5.0")],
    ));
    let c = Config::from_toml(&with_env).unwrap();
    assert_eq!((c.dataset.rate, c.dataset.workers, c.seed), (5.0, 3, 1));
    let seeded = stdout(&condkit(&["--config", p(&file), "--seed", "8", "config", "dump"]));
    assert_eq!(Config::from_toml(&seeded).unwrap().seed, 8);

    std::fs::write(&file, "[dataset]\nrat = 2.0\n").unwrap();
    assert_eq!(condkit(&["--config", p(&file), "config", "dump"]).status.code(), Some(2));
}

fn scene_tree(dir: &Path, n: usize) -> PathBuf {
    let base: SceneRecord = ingest_scene_dir(&fixture()).unwrap();
    let root = dir.join("scenes");
    for k in 0..n {
        let mut s = base.clone();
        s.scene_id = format!("scene-{k:03}");
        s.views.rotate_left(k % 3);
        write_scene_dir(&s, &root.join(&s.scene_id)).unwrap();
    }
    root
}

#[test]
fn shard_build_inspect_and_stream() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = scene_tree(dir.path(), 7);
    let shards = dir.path().join("shards");
    let built = stdout(&condkit(&["shard", "build", "--input", p(&scenes), "--out", p(&shards), "--scenes-per-shard", "3"]));
    let built = json_lines(&built);
    assert_eq!(built.iter().map(|b| b["scenes"].as_u64().unwrap()).collect::<Vec<_>>(), vec![3, 3, 1]);

    let inspected = stdout(&condkit(&["shard", "inspect", p(&shards.join("shard-000000.tar")), "--verify"]));
    assert!(inspected.contains("\"scene_count\": 3"));
    assert_eq!(inspected.matches("\"status\":\"ok\"").count(), 3);

    let glob = format!("{}/*.tar", shards.display());
    let run = |workers: &str, seed: &str, dump: &Path| {
        let out = stdout(&condkit(&[
            "stream", "bench", "--shards", &glob, "--workers", workers, "--rate", "2.5", "--seconds", "60",
            "--one-epoch", "--seed", seed, "--dump", p(dump),
        ]));
        let report: Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(report["format"], "condkit-stream-bench");
        assert!(report["samples_per_sec"].as_f64().unwrap() > 0.0);
        assert!(report["bytes_per_sec"].as_f64().unwrap() > 0.0);
        assert!(report["peak_rss_bytes"].as_u64().unwrap() > 0);
        let text = std::fs::read_to_string(dump).unwrap();
        let lines = json_lines(&text);
        assert_eq!(lines[0]["format"], "condkit-stream-dump");
        assert_eq!(lines[0]["version"], 1);
        lines[1..].iter().map(|l| l["sample_id"].as_str().unwrap().to_string()).collect::<Vec<_>>()
    };
    let a = run("1", "4", &dir.path().join("a.ndjson"));
    let b = run("1", "4", &dir.path().join("b.ndjson"));
    assert_eq!(a, b);
    let mut c = run("3", "4", &dir.path().join("c.ndjson"));
    let mut a_sorted = a.clone();
    a_sorted.sort();
    c.sort();
    assert_eq!(a_sorted, c);
    assert_ne!(a, run("1", "5", &dir.path().join("d.ndjson")));
}

#[test]
fn corrupt_shard_fails_inspect_verify() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = scene_tree(dir.path(), 2);
    let shards = dir.path().join("shards");
    stdout(&condkit(&["shard", "build", "--input", p(&scenes), "--out", p(&shards)]));
    let path = shards.join("shard-000000.tar");
    let mut bytes = std::fs::read(&path).unwrap();
    // Second 512-byte block is the first scene's meta.json payload.
    bytes[512 + 3] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();
    let out = condkit(&["shard", "inspect", p(&path), "--verify"]);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("checksum mismatch"));
    assert_eq!(text.matches("\"status\":\"ok\"").count(), 1);
}

#[test]
fn plan_distill_is_seeded_and_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plan.toml");
    std::fs::write(&cfg, "[anchoring]\ntotal_steps = 300\n").unwrap();
    let plan = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        stdout(&condkit(&["plan", "distill", "--config", p(&cfg), "--out", p(&out), "--seed", seed]));
        std::fs::read_to_string(out).unwrap()
    };
    let a = plan("1", "a.ndjson");
    assert_eq!(a, plan("1", "b.ndjson"));
    assert_ne!(a, plan("2", "c.ndjson"));
    let lines = json_lines(&a);
    assert_eq!(lines[0]["format"], "condkit-plan");
    assert_eq!(lines[0]["version"], 1);
    assert_eq!(lines[0]["config"]["ddim_steps"], 500);
    assert_eq!(lines[0]["config"]["guidance_scale"], 3.0);
    let offsets: Vec<f64> = lines[0]["anchors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["offset_deg"].as_f64().unwrap())
        .collect();
    assert_eq!(offsets, vec![120.0, 240.0]);
    assert_eq!(lines.len(), 301);
}

#[test]
fn preprocess_square_and_letterbox() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sq");
    let summary: Value =
        serde_json::from_str(stdout(&condkit(&["preprocess", "--input", p(&fixture()), "--out", p(&out), "--size", "8"])).trim())
            .unwrap();
    assert_eq!((summary["width"].as_u64(), summary["height"].as_u64()), (Some(8), Some(8)));
    let s = ingest_scene_dir(&out).unwrap();
    assert_eq!((s.views[0].depth.width, s.views[0].depth.height), (8, 8));
    let img = image::load_from_memory(&s.views[0].image_png).unwrap();
    assert_eq!((img.width(), img.height()), (8, 8));
    // 16×12 at fov 0.8: cropping to 12×12 narrows the view.
    let f = 16.0 / (2.0 * (0.4f64).tan());
    assert!((s.fov - 2.0 * (6.0 / f).atan()).abs() < 1e-12);

    let lb = dir.path().join("lb");
    stdout(&condkit(&["preprocess", "--input", p(&fixture()), "--out", p(&lb), "--dtu"]));
    let s = ingest_scene_dir(&lb).unwrap();
    let img = image::load_from_memory(&s.views[1].image_png).unwrap();
    assert_eq!((img.width(), img.height()), (400, 300));
    assert_eq!((s.views[1].depth.width, s.views[1].depth.height), (400, 300));
}

fn write_png(path: &Path, value: u8) {
    image::RgbImage::from_pixel(16, 16, image::Rgb([value, value, value])).save(path).unwrap();
}

#[test]
fn eval_writes_versioned_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    write_png(&gt.join("a.png"), 100);
    write_png(&pred.join("a.png"), 100);
    write_png(&gt.join("b.png"), 0);
    write_png(&pred.join("b.png"), 51);

    let out = stdout(&condkit(&[
        "eval", "--pred", p(&pred), "--gt", p(&gt), "--metrics", "psnr,ssim,lpips", "--lpips-cmd", "echo 0.25",
    ]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "# condkit-eval v1");
    assert_eq!(lines[1], "image,psnr,ssim,lpips");
    assert!(lines[2].starts_with("a.png,inf,1,0.25"), "{}", lines[2]);
    let b: Vec<f64> = lines[3].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    // 51/255 = 0.2 → MSE 0.04 → 10·log10(1/0.04).
    assert!((b[0] - 10.0 * 25f64.log10()).abs() < 1e-9);
    assert!(lines[4].starts_with("mean,inf,"));

    let no_template = condkit(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--metrics", "lpips"]);
    assert_eq!(no_template.status.code(), Some(2));
    let missing_tool = condkit(&[
        "eval", "--pred", p(&pred), "--gt", p(&gt), "--metrics", "lpips", "--lpips-cmd", "/nonexistent/lpips {a} {b}",
    ]);
    assert_eq!(missing_tool.status.code(), Some(5));
    std::fs::remove_file(pred.join("b.png")).unwrap();
    let missing_pred = condkit(&["eval", "--pred", p(&pred), "--gt", p(&gt)]);
    assert_eq!(missing_pred.status.code(), Some(3));
}
