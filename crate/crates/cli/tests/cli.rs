use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn exvo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exvo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn exvo")
}

fn ok(cmd: &str, config: &Path) -> String {
    let out = exvo(&[cmd, config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const EMBEDDER: &str = r#"
[embedder]
task = "er"
hidden_dim = 6
max_epochs = 2
conv_stack = [{ out_channels = 4, kernel_len = 30, stride = 10 }, { out_channels = 4, kernel_len = 5, stride = 4 }]
"#;

const DATA: &str = r#"
[data]
manifest = "corpus/manifest.csv"
wav_dir = "corpus/wav"
allow_any_age = true
"#;

#[test]
fn stepwise_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    let cfg = write(d, "synth.toml", "out_dir = \"corpus\"\nseed = 3\n[synth]\nn_utterances = 24\nn_speakers = 8\n");
    ok("synth", &cfg);
    let manifest = fs::read_to_string(d.join("corpus/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 25);
    assert_eq!(fs::read_dir(d.join("corpus/wav")).unwrap().count(), 24);

    let cfg = write(
        d,
        "emb.toml",
        &format!("out_model = \"emb.bmtl\"\nhistory = \"emb_history.csv\"\n{DATA}{EMBEDDER}"),
    );
    ok("train-embedder", &cfg);
    let hist = fs::read_to_string(d.join("emb_history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 3);

    let cfg = write(d, "extract.toml", &format!("model = \"emb.bmtl\"\nout = \"frames.bemb\"\n{DATA}{EMBEDDER}"));
    ok("extract", &cfg);
    let cfg = write(d, "pool.toml", "input = \"frames.bemb\"\nout = \"pooled.bemb\"\n");
    assert!(ok("pool", &cfg).contains("dim 12"));

    let cfg = write(d, "early.toml", "inputs = [\"pooled.bemb\", \"pooled.bemb\"]\nout = \"fused.bemb\"\n");
    assert!(ok("fuse-early", &cfg).contains("dim 24"));

    let mtl = "[mtl]\nhidden1 = 16\nhidden2 = 8\nmax_epochs = 3\n";
    let cfg = write(
        d,
        "mtl.toml",
        &format!("features = \"fused.bemb\"\nout_model = \"mtl.bmtl\"\nhistory = \"mtl_history.csv\"\n{DATA}{mtl}"),
    );
    ok("train-mtl", &cfg);

    let cfg = write(
        d,
        "eval.toml",
        &format!(
            "model = \"mtl.bmtl\"\nfeatures = \"fused.bemb\"\nsplit = \"val\"\npredictions = \"val.csv\"\nreport = \"val.txt\"\n{DATA}"
        ),
    );
    let printed = ok("evaluate", &cfg);
    assert_eq!(printed, fs::read_to_string(d.join("val.txt")).unwrap());
    assert!(printed.contains("s_mtl"), "{printed}");

    let cfg = write(
        d,
        "hybrid.toml",
        &format!(
            "out = \"hybrid.csv\"\nreport = \"hybrid.txt\"\n[hybrid]\nemotion_source = \"a\"\nage_source = \"b\"\ncountry_source = \"a\"\n[systems]\na = \"val.csv\"\nb = \"val.csv\"\n{DATA}"
        ),
    );
    ok("fuse-hybrid", &cfg);
    assert_eq!(
        fs::read_to_string(d.join("hybrid.txt")).unwrap(),
        fs::read_to_string(d.join("val.txt")).unwrap()
    );

    let cfg = write(d, "plot.toml", "model = \"emb.bmtl\"\nout = \"plot/filters.csv\"\nn_fft = 64\n");
    ok("filter-plot", &cfg);
    let plot = fs::read_to_string(d.join("plot/filters.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 33);
    assert_eq!(plot.lines().last().unwrap().split(',').next().unwrap(), "8000");
}

#[test]
fn run_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write(
        d,
        "run.toml",
        r#"
output_dir = "out"
seeds = [7]
[data.synth]
n_utterances = 24
n_speakers = 8
[mtl]
hidden1 = 8
hidden2 = 4
max_epochs = 2
[[systems]]
name = "raw_er"
features = [{ embedder = { task = "er", hidden_dim = 4, max_epochs = 1, conv_stack = [{ out_channels = 2, kernel_len = 30, stride = 10 }] } }]
"#,
    );
    let printed = ok("run", &cfg);
    let summary = fs::read_to_string(d.join("out/summary.txt")).unwrap();
    assert_eq!(printed, summary);
    assert!(summary.contains("raw_er,val,8,"), "{summary}");
    for f in ["config.toml", "seed_7/manifest.csv", "seed_7/raw_er/mtl.bmtl", "seed_7/raw_er/test_report.txt"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn unknown_key_fails_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "pool.toml", "input = \"a\"\nout = \"b\"\nextra = 1\n");
    let out = exvo(&["pool", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("extra"), "{err}");
}

#[test]
fn missing_config_fails() {
    let out = exvo(&["run", "/nonexistent/run.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn pool_rejects_pooled_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = write(d, "synth.toml", "out_dir = \"c\"\n[synth]\nn_utterances = 8\nn_speakers = 4\n");
    ok("synth", &cfg);
    let cfg = write(
        d,
        "run.toml",
        "output_dir = \"o\"\nseeds = [1]\n[data]\nmanifest = \"c/manifest.csv\"\nwav_dir = \"c/wav\"\nallow_any_age = true\n[mtl]\nhidden1 = 4\nhidden2 = 2\nmax_epochs = 1\n[[systems]]\nname = \"s\"\nfeatures = [{ embedder = { hidden_dim = 2, max_epochs = 1, conv_stack = [{ out_channels = 2, kernel_len = 30, stride = 10 }] } }]\n",
    );
    ok("run", &cfg);
    let cfg = write(d, "pool.toml", "input = \"o/seed_1/s/features.bemb\"\nout = \"x.bemb\"\n");
    let out = exvo(&["pool", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("already utterance-level"));
}
