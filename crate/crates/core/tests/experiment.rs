mod common;

use exvo::embedder::{write_embedding_file, EmbeddingFile, UtteranceEmbedding};
use exvo::experiment::{run_experiment, ExperimentConfig};
use exvo::mtl::read_mtl_header;

fn tiny(output_dir: &std::path::Path, seeds: &str, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        r#"
output_dir = "{}"
seeds = {seeds}
{extra}
[data.synth]
n_utterances = 24
n_speakers = 8
[mtl]
max_epochs = 3
[[systems]]
name = "raw_er"
features = [{{ embedder = {{ hidden_dim = 4, max_epochs = 2, conv_stack = [{{ out_channels = 2, kernel_len = 30, stride = 10 }}] }} }}]
"#,
        output_dir.display()
    ))
    .unwrap()
}

#[test]
fn repeated_run_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sa = run_experiment(&tiny(&a, "[3]", "")).unwrap();
    let sb = run_experiment(&tiny(&b, "[3]", "")).unwrap();
    assert_eq!(sa, sb);
    for f in ["summary.txt", "seed_3/raw_er/val_report.txt", "seed_3/raw_er/test_predictions.csv", "seed_3/raw_er/mtl.bmtl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(sa.systems[0].val_s_mtl().1, 0.0);
}

#[test]
fn identical_seeds_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_experiment(&tiny(dir.path(), "[5, 5]", "")).unwrap();
    let runs = &s.systems[0].runs;
    assert_eq!(runs[0].val, runs[1].val);
    assert_eq!(s.systems[0].val_s_mtl().1, 0.0);
}

#[test]
fn sys2_doubles_hidden_sizes() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&tiny(dir.path(), "[1]", "preset = \"sys2\"")).unwrap();
    let bytes = std::fs::read(dir.path().join("seed_1/raw_er/mtl.bmtl")).unwrap();
    let h = read_mtl_header(&bytes).unwrap();
    assert_eq!((h.input_dim, h.hidden1, h.hidden2), (8, 256, 128));
}

#[test]
fn missing_feature_file_names_stage_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(&format!(
        "output_dir = \"{}\"\nseeds = [2]\n[data.synth]\nn_utterances = 8\nn_speakers = 4\n[[systems]]\nname = \"ext\"\nfeatures = [{{ file = \"/nonexistent.bemb\" }}]\n",
        dir.path().display()
    ))
    .unwrap();
    let e = run_experiment(&cfg).unwrap_err().to_string();
    assert!(e.contains("seed 2") && e.contains("ext/features[0]"), "{e}");
}

#[test]
fn external_features_and_hybrid() {
    let dir = tempfile::tempdir().unwrap();
    // Features for the synthetic ids of seed 1: index-based random vectors.
    let ids: Vec<String> = (0..24).map(|i| format!("utt_{i:05}")).collect();
    let mk = |dim: usize, salt: f64| {
        ids.iter()
            .enumerate()
            .map(|(i, id)| UtteranceEmbedding {
                utterance_id: id.clone(),
                vector: (0..dim).map(|j| ((i * 7 + j) as f64 * salt).sin() as f32 as f64).collect(),
            })
            .collect::<Vec<_>>()
    };
    let fa = dir.path().join("a.bemb");
    let fb = dir.path().join("b.bemb");
    write_embedding_file(&fa, &EmbeddingFile::UtteranceLevel(mk(6, 0.37))).unwrap();
    write_embedding_file(&fb, &EmbeddingFile::UtteranceLevel(mk(4, 1.13))).unwrap();
    let cfg = ExperimentConfig::from_toml_str(&format!(
        r#"
output_dir = "{out}"
seeds = [1]
[data.synth]
n_utterances = 24
n_speakers = 8
[mtl]
max_epochs = 2
[[systems]]
name = "a"
features = [{{ file = "{a}" }}]
[[systems]]
name = "ab"
features = [{{ file = "{a}" }}, {{ file = "{b}" }}]
[hybrid]
emotion_source = "a"
age_source = "ab"
country_source = "a"
"#,
        out = dir.path().join("out").display(),
        a = fa.display(),
        b = fb.display()
    ))
    .unwrap();
    let s = run_experiment(&cfg).unwrap();
    let dims: Vec<_> = s.systems.iter().map(|x| (x.name.as_str(), x.feature_dim)).collect();
    assert_eq!(dims, vec![("a", Some(6)), ("ab", Some(10)), ("hybrid", None)]);
    let (a, ab, h) = (&s.systems[0].runs[0].val, &s.systems[1].runs[0].val, &s.systems[2].runs[0].val);
    assert_eq!(h.mean_ccc, a.mean_ccc);
    assert_eq!(h.uar, a.uar);
    assert_eq!(h.mae_years, ab.mae_years);
}
