use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_langfield");

const TINY: &[&str] = &[
    "hash.levels=2",
    "hash.features=2",
    "hash.table_log2=8",
    "hash.base_res=4",
    "hash.finest_res=8",
    "mlp.layers=2",
    "mlp.width=16",
    "mlp.feature_dim=8",
    "train.rays=64",
    "train.iters=5",
    "train.samples=8",
    "render.samples=8",
];

fn run(args: &[&str], sets: &[String]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--threads").arg("1");
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn tiny_sets(root: &Path) -> Vec<String> {
    let mut v: Vec<String> = TINY.iter().map(|s| s.to_string()).collect();
    v.push(format!("data.dir={}", root.join("data/train").display()));
    v.push(format!("out.dir={}", root.join("run").display()));
    v
}

fn scene_with_d8(root: &Path) -> std::path::PathBuf {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenes/desk.txt")).unwrap();
    let text: String = text
        .lines()
        .map(|l| if l.trim_start().starts_with("feature_dim") { "feature_dim = 8" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let path = root.join("scene.txt");
    std::fs::write(&path, text).unwrap();
    path
}

/// synth, train, segment and eval on a tiny configuration; returns the eval table.
fn pipeline(root: &Path) -> String {
    let sets = tiny_sets(root);
    let scene = scene_with_d8(root);
    let data = root.join("data");
    ok(&run(
        &[
            "synth",
            "--scene",
            scene.to_str().unwrap(),
            "--out",
            data.to_str().unwrap(),
            "--train",
            "3",
            "--test",
            "2",
            "--width",
            "12",
            "--height",
            "8",
            "--focal",
            "10",
        ],
        &[],
    ));
    ok(&run(&["train"], &sets));
    let ckpt = root.join("run/checkpoint.vlfc");
    assert!(ckpt.is_file());
    assert!(root.join("run/train_log.tsv").is_file());
    let seg = root.join("seg");
    ok(&run(
        &[
            "segment",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--labels",
            data.join("labels.tsv").to_str().unwrap(),
            "--data",
            data.join("test").to_str().unwrap(),
            "--out",
            seg.to_str().unwrap(),
        ],
        &sets,
    ));
    assert!(seg.join("frame_00000.class.vlft").is_file());
    assert!(seg.join("frame_00001.class.ppm").is_file());
    ok(&run(
        &[
            "eval",
            "--pred",
            seg.to_str().unwrap(),
            "--truth",
            data.join("test").to_str().unwrap(),
            "--labels",
            data.join("labels.tsv").to_str().unwrap(),
        ],
        &[],
    ))
}

#[test]
fn pipeline_runs_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let table_a = pipeline(a.path());
    let table_b = pipeline(b.path());
    assert!(table_a.contains("miou"), "{table_a}");
    assert_eq!(table_a, table_b);
    for f in ["run/checkpoint.vlfc", "run/train_log.tsv", "seg/frame_00000.class.vlft"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }

    let ckpt = a.path().join("run/checkpoint.vlfc");
    let render_dir = a.path().join("render");
    ok(&run(
        &[
            "render",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--view",
            "0",
            "--out",
            render_dir.to_str().unwrap(),
        ],
        &tiny_sets(a.path()),
    ));
    for f in ["rgb.vlft", "depth.vlft", "feature.vlft", "rgb.ppm"] {
        assert!(render_dir.join(f).is_file(), "missing {f}");
    }
    let heat = a.path().join("ball.vlft");
    ok(&run(
        &[
            "query",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--view",
            "0",
            "--label",
            "ball",
            "--labels",
            a.path().join("data/labels.tsv").to_str().unwrap(),
            "--out",
            heat.to_str().unwrap(),
        ],
        &tiny_sets(a.path()),
    ));
    assert!(heat.is_file());
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = run(&["segment", "--labels", "x.tsv"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_fails() {
    let out = run(&["train"], &["train.bogus=1".to_string()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.bogus"));
}

#[test]
fn missing_data_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["train"], &[format!("data.dir={}", dir.path().join("none").display())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let out = run(&["gradcheck"], &[]);
    let text = ok(&out);
    assert!(text.to_lowercase().contains("pass"), "{text}");
}

#[test]
fn keys_lists_defaults() {
    let text = ok(&run(&["keys"], &[]));
    assert!(text.contains("hash.levels"));
    assert!(text.contains("loss.w_vl"));
}
