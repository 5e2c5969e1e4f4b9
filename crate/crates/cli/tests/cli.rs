use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cogesture::bvh::parse_bvh;

const BIN: &str = env!("CARGO_BIN_EXE_cogesture");

/// One joint, 80-frame windows, a very small model and a short chain so
/// that the end-to-end paths run in a second or two.
const SMALL_TOML: &str = r#"
[data]
window_frames = 80
seed_frames = 8
joint_count = 1
speech_dim = 16
text_dim = 8

[model]
hidden = 16
layers = 1
heads = 2
ffn_dim = 32
window = 4

[diffusion]
steps = 5
beta_end = 0.3

[training]
steps = 6
batch_size = 2
parallel = false
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "off").output().expect("spawn cli")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    /// 160-frame clips at 20 fps, i.e. 8 s of audio each.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("small.toml"), SMALL_TOML).unwrap();
        let f = Self { dir };
        let corpus = f.path("corpus");
        assert_code(&run(&["synth", "--out", p(&corpus), "--clips", "3", "--frames", "160", "--joints", "1"]), 0);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> PathBuf {
        self.path("small.toml")
    }

    fn preprocess(&self) -> PathBuf {
        let data = self.path("data");
        assert_code(
            &run(&["preprocess", "--corpus", p(&self.path("corpus")), "--out", p(&data), "--config", p(&self.config())]),
            0,
        );
        data
    }

    fn train(&self, data: &Path, out: &str, extra: &[&str]) -> PathBuf {
        let ck = self.path(out);
        let cfg = self.config();
        let mut args = vec!["train", "--data", p(data), "--out", p(&ck), "--config", p(&cfg)];
        args.extend_from_slice(extra);
        assert_code(&run(&args), 0);
        ck
    }
}

fn manifest(data: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap()
}

fn log_losses(ck: &Path) -> Vec<(u64, f64)> {
    std::fs::read_to_string(ck.join("train_log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["step"].as_u64().unwrap(), v["loss"].as_f64().unwrap())
        })
        .collect()
}

#[test]
fn preprocess_writes_manifest_and_dry_run_writes_nothing() {
    let f = Fixture::new();
    let data = f.preprocess();
    let m = manifest(&data);
    assert_eq!(m["entries"].as_array().unwrap().len(), 3);
    // floor(160 / 80) windows per clip
    assert!(m["entries"].as_array().unwrap().iter().all(|e| e["windows"].as_array().unwrap().len() == 2));

    let dry = f.path("dry");
    let out = run(&["preprocess", "--corpus", p(&f.path("corpus")), "--out", p(&dry), "--config", p(&f.config()), "--dry-run"]);
    assert_code(&out, 0);
    assert!(!dry.exists() || std::fs::read_dir(&dry).unwrap().next().is_none());
}

#[test]
fn missing_textgrid_is_an_input_error_naming_the_file() {
    let f = Fixture::new();
    let victim = f.path("corpus").join("002_Sad_0_x_1_0.TextGrid");
    std::fs::remove_file(&victim).unwrap();
    let out = run(&["preprocess", "--corpus", p(&f.path("corpus")), "--out", p(&f.path("data")), "--config", p(&f.config())]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("002_Sad_0_x_1_0.TextGrid"));
}

#[test]
fn missing_inputs_and_bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_code(&run(&["train", "--data", p(&missing), "--out", p(&dir.path().join("ck"))]), 2);
    assert_code(&run(&["sample", "--checkpoint", p(&missing)]), 2);
    assert_code(&run(&["frobnicate"]), 2);
}

#[test]
fn zero_steps_writes_checkpoint_and_resume_continues_the_trajectory() {
    let f = Fixture::new();
    let data = f.preprocess();

    let zero = f.train(&data, "ck0", &["--steps", "0"]);
    assert!(zero.join("manifest.json").exists());
    assert!(zero.join("tensors.bin").exists());

    let full = f.train(&data, "full", &["--steps", "6"]);
    let half = f.train(&data, "half", &["--steps", "3"]);
    let resumed = f.train(&data, "resumed", &["--steps", "6", "--resume", p(&half)]);
    let a = log_losses(&full);
    let b = log_losses(&resumed);
    assert_eq!(a.len(), 6);
    assert_eq!(b.iter().map(|x| x.0).collect::<Vec<_>>(), vec![4, 5, 6]);
    assert_eq!(&a[3..], &b[..]);
    assert_eq!(
        std::fs::read(full.join("tensors.bin")).unwrap(),
        std::fs::read(resumed.join("tensors.bin")).unwrap()
    );
}

#[test]
fn sampling_eight_seconds_gives_160_frames_and_guidance_path_works() {
    let f = Fixture::new();
    let data = f.preprocess();
    let ck = f.train(&data, "ck", &[]);
    let corpus = f.path("corpus");
    let wav = corpus.join("001_Neutral_0_x_1_0.wav");
    let tg = corpus.join("001_Neutral_0_x_1_0.TextGrid");

    let out = f.path("gen/a.bvh");
    let res = run(&[
        "sample", "--checkpoint", p(&ck), "--wav", p(&wav), "--textgrid", p(&tg), "--emotion", "happy", "--seed", "3",
        "--out", p(&out),
    ]);
    assert_code(&res, 0);
    let clip = parse_bvh(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(clip.num_frames(), 160);
    assert!((clip.frame_time - 0.05).abs() < 1e-9);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("gen/a.bvh.json")).unwrap()).unwrap();
    assert_eq!(side["seed"], 3);
    assert_eq!(side["frames"], 160);

    let mixed = f.path("gen/b.bvh");
    let res = run(&[
        "sample", "--checkpoint", p(&ck), "--wav", p(&wav), "--textgrid", p(&tg), "--emotion", "happy", "--emotion2",
        "sad", "--gamma", "0.5", "--out", p(&mixed),
    ]);
    assert_code(&res, 0);
    assert_eq!(parse_bvh(&std::fs::read_to_string(&mixed).unwrap()).unwrap().num_frames(), 160);

    let bad = run(&[
        "sample", "--checkpoint", p(&ck), "--wav", p(&wav), "--textgrid", p(&tg), "--emotion", "bored", "--out",
        p(&f.path("gen/c.bvh")),
    ]);
    assert_code(&bad, 2);
}

#[test]
fn untrained_checkpoint_is_refused_unless_allowed() {
    let f = Fixture::new();
    let data = f.preprocess();
    let ck = f.train(&data, "ck0", &["--steps", "0"]);
    let corpus = f.path("corpus");
    let base = [
        "sample".to_string(),
        "--checkpoint".into(),
        p(&ck).into(),
        "--wav".into(),
        p(&corpus.join("003_Happy_0_x_1_0.wav")).into(),
        "--textgrid".into(),
        p(&corpus.join("003_Happy_0_x_1_0.TextGrid")).into(),
        "--emotion".into(),
        "neutral".into(),
        "--out".into(),
        p(&f.path("u.bvh")).into(),
    ];
    let args: Vec<&str> = base.iter().map(String::as_str).collect();
    assert_code(&run(&args), 2);
    let mut allowed = args.clone();
    allowed.push("--allow-untrained");
    assert_code(&run(&allowed), 0);
}

#[test]
fn eval_against_itself_is_zero_and_dimension_mismatch_is_rejected() {
    let f = Fixture::new();
    let data = f.preprocess();
    let report = f.path("fgd.json");
    assert_code(
        &run(&["eval", "--real", p(&data), "--generated", p(&data), "--paired", "--out", p(&report)]),
        0,
    );
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let metrics = r["metrics"].as_array().unwrap();
    let fgd = metrics.iter().find(|m| m["metric"] == "fgd").unwrap();
    assert!(fgd["value"].as_f64().unwrap() <= 1e-8);
    assert_eq!(fgd["dim"], 31);
    let mse = metrics.iter().find(|m| m["metric"] == "mse").unwrap();
    assert_eq!(mse["value"].as_f64().unwrap(), 0.0);

    assert_code(
        &run(&[
            "eval", "--real", p(&data), "--generated", p(&data), "--representation", "rotations", "--out", p(&report),
        ]),
        0,
    );
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["metrics"][0]["dim"], 3);

    // A 2-joint dataset has D = 46, not 31.
    let other = f.path("corpus2");
    assert_code(&run(&["synth", "--out", p(&other), "--clips", "2", "--frames", "160", "--joints", "2"]), 0);
    let data2 = f.path("data2");
    assert_code(
        &run(&["preprocess", "--corpus", p(&other), "--out", p(&data2), "--config", p(&f.config()), "--joints", "2"]),
        0,
    );
    assert_code(&run(&["eval", "--real", p(&data), "--generated", p(&data2), "--out", p(&report)]), 2);
}

#[test]
fn selfcheck_passes_and_detects_injected_fault() {
    let ok = run(&["selfcheck"]);
    assert_code(&ok, 0);
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS"));
    let bad = run(&["selfcheck", "--inject-attention-fault"]);
    assert_code(&bad, 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FAIL"));
}

#[test]
fn config_command_prints_resolved_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, SMALL_TOML).unwrap();
    let out = run(&["config", "--config", p(&cfg)]);
    assert_code(&out, 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("window_frames = 80"));
    std::fs::write(&cfg, "[model]\nwidth = 3\n").unwrap();
    assert_code(&run(&["config", "--config", p(&cfg)]), 2);
}
