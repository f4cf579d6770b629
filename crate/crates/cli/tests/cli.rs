use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use recfield_cli::{EXIT_DATA, EXIT_USAGE};

const TINY: &str = r#"
seed = 0

[data]
category = "table"
count = 4
voxel_dim = 16
sample_resolution = 16
holdout = 1

[network]
levels = 2
code_dim = 8
input_dim = 16
encoder_channels = [4, 8, 8]
fd_hidden = 16
pd_hidden = [16, 16]

[train]
stage_iterations = 3
points_per_iteration = 256

[eval]
mc_resolution = 16
surface_points = 256

[svr]
iterations = 4
batch_shapes = 2
channels = [4, 8, 8]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_recfield"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) -> String {
    let (code, _, err) = run(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    err
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

struct Setup {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
}

fn setup() -> Setup {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let config = root.join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let data = root.join("data");
    ok(&["gen-data", "--config", s(&config), "--out", s(&data)]);
    Setup {
        _tmp: tmp,
        root,
        config,
        data,
    }
}

#[test]
fn gen_data_count_and_determinism() {
    let st = setup();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(st.data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["shape_count"], 4);
    assert!(st.data.join("resolved_gen_data.toml").exists());
    let again = st.root.join("data2");
    ok(&["gen-data", "--config", s(&st.config), "--out", s(&again)]);
    assert_eq!(tree_bytes(&st.data), tree_bytes(&again));

    let other = st.root.join("data3");
    ok(&["gen-data", "--config", s(&st.config), "--seed", "1", "--out", s(&other)]);
    assert_ne!(tree_bytes(&st.data), tree_bytes(&other));
}

#[test]
fn gen_data_count_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    ok(&["gen-data", "--count", "3", "--category", "chair", "--out", s(&out)]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["shape_count"], 3);
    assert_eq!(manifest["category_names"][0], "chair");
}

#[test]
fn invalid_category_fails_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "gen-data",
        "--category",
        "sofa",
        "--count",
        "2",
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("sofa"), "{err}");
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["train"]).0, EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(
        run(&["train", "--data", "x", "--head", "cube", "--out", "y"]).0,
        EXIT_USAGE
    );
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[network]\nlevels = \"x\"\n").unwrap();
    assert_eq!(
        run(&["gen-data", "--config", s(&bad), "--out", s(&tmp.path().join("o"))]).0,
        EXIT_USAGE
    );
    assert_eq!(run(&["gen-data", "--count", "1"]).0, EXIT_USAGE);
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "eval",
        "--data",
        s(&tmp.path().join("nope")),
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(code, EXIT_DATA, "{err}");
}

#[test]
fn eval_identity_reference() {
    let st = setup();
    let out = st.root.join("eval");
    ok(&[
        "eval",
        "--config",
        s(&st.config),
        "--data",
        s(&st.data),
        "--out",
        s(&out),
    ]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["entries"]["table/cd/1"], 0.0);
    assert_eq!(m["entries"]["table/iou/1"], 1.0);
    assert!(out.join("metrics.txt").exists());
    assert!(out.join("resolved_eval.toml").exists());
}

#[test]
fn train_extract_segment_svr_pipeline() {
    let st = setup();
    let run_dir = st.root.join("run");
    let cfg = s(&st.config);
    ok(&[
        "train",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--levels",
        "3",
        "--out",
        s(&run_dir),
    ]);
    let log = fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert_eq!(
        log.lines().next().unwrap(),
        "iteration,stage,recon_1,recon_2,recon_3,hie,total"
    );
    assert_eq!(log.lines().count(), 1 + 4 * 3);
    let resolved = fs::read_to_string(run_dir.join("resolved_train.toml")).unwrap();
    assert!(resolved.contains("levels = 3"));
    let ckpt = run_dir.join("checkpoint");

    ok(&[
        "extract",
        "--config",
        cfg,
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&st.data),
        "--shape",
        "table-00001",
        "--out",
        s(&run_dir),
    ]);
    let shape_dir = run_dir.join("table-00001");
    for j in 1..=3 {
        assert!(shape_dir.join(format!("level_{j}.obj")).exists());
    }
    let h: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(shape_dir.join("hierarchy.json")).unwrap()).unwrap();
    assert_eq!(h["levels"], 3);

    let single = st.root.join("single");
    ok(&[
        "extract",
        "--config",
        cfg,
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&st.data),
        "--shape",
        "table-00001",
        "--level",
        "2",
        "--out",
        s(&single),
    ]);
    assert!(single.join("table-00001/level_2.obj").exists());
    assert!(!single.join("table-00001/level_1.obj").exists());
    let (code, _, _) = run(&[
        "extract",
        "--config",
        cfg,
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&st.data),
        "--shape",
        "table-00001",
        "--level",
        "4",
        "--out",
        s(&single),
    ]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = run(&[
        "extract",
        "--config",
        cfg,
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&st.data),
        "--shape",
        "chair-00000",
        "--out",
        s(&single),
    ]);
    assert_eq!(code, EXIT_USAGE);

    ok(&[
        "eval",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&run_dir),
    ]);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("metrics.json")).unwrap()).unwrap();
    assert!(m["entries"]["table/iou/3"].is_number());
    assert!(m["mean_decomposition"].is_number());

    ok(&[
        "segment",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&run_dir),
    ]);
    let labels = fs::read(run_dir.join("segmentation/table-00003.u32")).unwrap();
    assert_eq!(labels.len(), 4 * 16 * 16 * 16);
    assert!(labels
        .chunks_exact(4)
        .all(|c| u32::from_le_bytes(c.try_into().unwrap()) < 8));
    let seg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("segmentation.json")).unwrap()).unwrap();
    assert_eq!(seg["leaves"], 8);

    let svr = st.root.join("svr");
    ok(&[
        "svr-train",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&svr),
    ]);
    assert!(svr.join("image_encoder/svr.json").exists());
    assert!(svr.join("images/manifest.json").exists());
    assert_eq!(fs::read_to_string(svr.join("svr_log.csv")).unwrap().lines().count(), 5);
    let enc = svr.join("image_encoder");
    ok(&[
        "svr-infer",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--checkpoint",
        s(&ckpt),
        "--encoder",
        s(&enc),
        "--out",
        s(&svr),
    ]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(svr.join("svr_infer.json")).unwrap()).unwrap();
    assert_eq!(r["shapes"].as_array().unwrap().len(), 1);
    ok(&[
        "svr-infer",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--checkpoint",
        s(&ckpt),
        "--encoder",
        s(&enc),
        "--shape",
        "table-00000",
        "--out",
        s(&svr),
    ]);
    assert!(svr.join("table-00000/level_3.obj").exists());
}

#[test]
fn resumed_training_matches_unbroken_run() {
    let st = setup();
    let cfg = s(&st.config);
    let full = st.root.join("full");
    ok(&["train", "--config", cfg, "--data", s(&st.data), "--out", s(&full)]);

    let part = st.root.join("part");
    ok(&[
        "train",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--max-iters",
        "4",
        "--out",
        s(&part),
    ]);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(part.join("checkpoint/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["iteration"], 4);
    assert_eq!(meta["stage"], "level2");
    ok(&[
        "train",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--resume",
        "--out",
        s(&part),
    ]);
    assert_eq!(
        tree_bytes(&full.join("checkpoint")),
        tree_bytes(&part.join("checkpoint"))
    );
    assert_eq!(
        fs::read(full.join("train_log.csv")).unwrap(),
        fs::read(part.join("train_log.csv")).unwrap()
    );

    let before = tree_bytes(&full.join("checkpoint"));
    ok(&[
        "train",
        "--config",
        cfg,
        "--data",
        s(&st.data),
        "--resume",
        "--out",
        s(&full),
    ]);
    assert_eq!(before, tree_bytes(&full.join("checkpoint")));
    assert_eq!(
        fs::read_to_string(full.join("train_log.csv")).unwrap().lines().count(),
        1 + 3 * 3
    );
}

#[test]
fn help_lists_every_documented_flag() {
    let (code, top, _) = run(&["--help"]);
    assert_eq!(code, 0);
    for cmd in [
        "gen-data",
        "train",
        "eval",
        "extract",
        "segment",
        "svr-train",
        "svr-infer",
    ] {
        assert!(top.contains(cmd), "top-level help lacks {cmd}");
    }
    let mut all = top.clone();
    for cmd in [
        "gen-data",
        "train",
        "eval",
        "extract",
        "segment",
        "svr-train",
        "svr-infer",
    ] {
        let (code, text, _) = run(&[cmd, "--help"]);
        assert_eq!(code, 0);
        for global in ["--config", "--seed", "--out"] {
            assert!(text.contains(global), "{cmd} help lacks {global}");
        }
        all.push_str(&text);
    }
    let (_, train, _) = run(&["train", "--help"]);
    for flag in [
        "--levels",
        "--head",
        "--flat-branches",
        "--no-decomposition-loss",
        "--no-progressive",
        "--stage-iters",
        "--resume",
        "--max-iters",
    ] {
        assert!(train.contains(flag), "train help lacks {flag}");
    }
    assert!(train.contains("gaussian") && train.contains("sphere") && train.contains("point"));
    let readme = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap_or_default();
    for flag in readme
        .lines()
        .map(|l| l.split("cargo ").next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == '`' || c == '|' || c == ','))
        .filter(|w| w.starts_with("--") && w.len() > 2)
    {
        let flag = flag.trim_end_matches(|c: char| !c.is_ascii_alphanumeric());
        assert!(
            all.contains(flag),
            "README documents {flag} but no help output lists it"
        );
    }
}
