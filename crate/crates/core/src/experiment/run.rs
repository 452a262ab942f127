use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DataConfig, ExperimentConfig, FeatureSource, SystemConfig, HYBRID_SYSTEM};
use crate::data::{
    parse_manifest_with, synth_dataset, write_manifest, LabelRecord, ManifestOptions, Split,
};
use crate::embedder::{
    extract_frame_embeddings, load_external_embeddings, pool_functionals, speaker_split,
    train_embedder, write_embedding_file, EmbedderConfig, EmbedderHistory, EmbeddingFile,
    LabeledFrames, UtteranceEmbedding,
};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::mtl::{
    early_fuse, hybrid_fuse, join_examples, save_mtl, score_predictions, train_mtl,
    write_predictions, MtlHistory, MtlModel, Predictions,
};
use crate::nn::{save_network, Network};
use crate::signal::{read_wav, Waveform};

/// Labels with their audio (when the experiment needs audio).
#[derive(Debug, Clone)]
pub struct Corpus {
    pub records: Vec<LabelRecord>,
    /// Keyed by utterance id; empty when no embedder is trained.
    pub waveforms: HashMap<String, Waveform>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<LabelRecord> {
        self.records.iter().filter(|r| r.split == split).cloned().collect()
    }

    fn waveform(&self, id: &str) -> Result<&Waveform> {
        self.waveforms
            .get(id)
            .ok_or_else(|| Error::MissingIds(vec![id.to_string()]))
    }
}

/// Independent generator for one named stage of one run, so stages do not
/// perturb each other's random streams.
pub fn stage_rng(seed: u64, stage: &str) -> ChaCha8Rng {
    // FNV-1a: stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

/// Loads or generates the corpus for one seed.
pub fn load_corpus(data: &DataConfig, seed: u64, need_audio: bool) -> Result<Corpus> {
    if let Some(synth) = &data.synth {
        let corpus = synth_dataset(synth, &mut stage_rng(seed, "synth"))?;
        let waveforms = corpus
            .records
            .iter()
            .map(|r| r.utterance_id.clone())
            .zip(corpus.waveforms)
            .collect();
        return Ok(Corpus {
            records: corpus.records,
            waveforms,
        });
    }
    let manifest = data
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("no data source".into()))?;
    let records = parse_manifest_with(
        manifest,
        ManifestOptions {
            allow_any_age: data.allow_any_age,
        },
    )?;
    let mut waveforms = HashMap::new();
    if need_audio {
        let dir = data
            .wav_dir
            .as_ref()
            .ok_or_else(|| Error::Config("`data.wav_dir` is required".into()))?;
        for r in &records {
            let w = read_wav(dir.join(format!("{}.wav", r.utterance_id)))?;
            waveforms.insert(r.utterance_id.clone(), w);
        }
    }
    Ok(Corpus { records, waveforms })
}

fn labeled(cfg: &EmbedderConfig, corpus: &Corpus, records: &[LabelRecord]) -> Result<Vec<LabeledFrames>> {
    records
        .iter()
        .map(|r| {
            Ok(LabeledFrames {
                frames: cfg.prepare_frames(corpus.waveform(&r.utterance_id)?, &r.utterance_id)?,
                label: cfg.task.label(r)?,
            })
        })
        .collect()
}

/// Trains an embedder on the training split, holding out a
/// speaker-disjoint cross-validation subset.
pub fn train_embedder_on_corpus<R: Rng + ?Sized>(
    cfg: &EmbedderConfig,
    corpus: &Corpus,
    rng: &mut R,
) -> Result<(Network, EmbedderHistory)> {
    let train_all = corpus.split(Split::Train);
    let (train, crossval) = speaker_split(&train_all, cfg.train_ratio, rng)?;
    let train = labeled(cfg, corpus, &train)?;
    let crossval = labeled(cfg, corpus, &crossval)?;
    train_embedder(cfg, &train, &crossval, rng)
}

/// Pooled (mean+std) pre-activation embeddings for every utterance.
pub fn embed_corpus(net: &Network, cfg: &EmbedderConfig, corpus: &Corpus) -> Result<Vec<UtteranceEmbedding>> {
    corpus
        .records
        .iter()
        .map(|r| {
            let frames = cfg.prepare_frames(corpus.waveform(&r.utterance_id)?, &r.utterance_id)?;
            pool_functionals(&extract_frame_embeddings(net, &frames)?)
        })
        .collect()
}

/// Scores of one system on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub val: MetricReport,
    /// `None` when the corpus has no test split.
    pub test: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSummary {
    pub name: String,
    pub feature_dim: Option<usize>,
    pub runs: Vec<SeedResult>,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SystemSummary {
    pub fn val_s_mtl(&self) -> (f64, f64) {
        mean_std(&self.runs.iter().map(|r| r.val.s_mtl).collect::<Vec<_>>())
    }

    pub fn test_s_mtl(&self) -> Option<(f64, f64)> {
        let v: Option<Vec<f64>> = self.runs.iter().map(|r| r.test.as_ref().map(|t| t.s_mtl)).collect();
        v.map(|v| mean_std(&v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub seeds: Vec<u64>,
    pub systems: Vec<SystemSummary>,
}

impl ExperimentSummary {
    /// Table with one row per system and split, then per-seed rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        let _ = writeln!(s, "system,split,dim,emo_ccc,cou_uar,age_mae,s_mtl_mean,s_mtl_std");
        for sys in &self.systems {
            let dim = sys.feature_dim.map_or("-".to_string(), |d| d.to_string());
            let mut line = |split: &str, reps: Vec<&MetricReport>, ms: (f64, f64)| {
                let avg = |f: fn(&MetricReport) -> f64| reps.iter().map(|r| f(r)).sum::<f64>() / reps.len() as f64;
                let _ = writeln!(
                    s,
                    "{},{split},{dim},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    sys.name,
                    avg(|r| r.mean_ccc),
                    avg(|r| r.uar),
                    avg(|r| r.mae_years),
                    ms.0,
                    ms.1
                );
            };
            line("val", sys.runs.iter().map(|r| &r.val).collect(), sys.val_s_mtl());
            if let Some(ms) = sys.test_s_mtl() {
                line("test", sys.runs.iter().filter_map(|r| r.test.as_ref()).collect(), ms);
            }
        }
        let _ = writeln!(s, "\nseed,system,split,{}", MetricReport::ROW_HEADER);
        for sys in &self.systems {
            for r in &sys.runs {
                let _ = writeln!(s, "{},{},val,{}", r.seed, sys.name, r.val.to_row());
                if let Some(t) = &r.test {
                    let _ = writeln!(s, "{},{},test,{}", r.seed, sys.name, t.to_row());
                }
            }
        }
        s
    }
}

fn stage<T>(name: &str, seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name.to_string(),
        seed,
        source: Box::new(e),
    })
}

struct SystemOutcome {
    dim: usize,
    val: Predictions,
    test: Predictions,
}

fn predict_split(model: &MtlModel, features: &[UtteranceEmbedding], records: &[LabelRecord]) -> Result<Predictions> {
    let ids: std::collections::HashSet<&str> = records.iter().map(|r| r.utterance_id.as_str()).collect();
    let subset: Vec<UtteranceEmbedding> = features
        .iter()
        .filter(|e| ids.contains(e.utterance_id.as_str()))
        .cloned()
        .collect();
    model.predict_all(&subset)
}

/// Per-epoch training history as CSV blocks (embedder first, then MTL).
pub fn history_csv(emb: Option<&EmbedderHistory>, mtl: Option<&MtlHistory>) -> String {
    let mut s = String::new();
    if let Some(h) = emb {
        let _ = writeln!(s, "embedder_epoch,train_loss,crossval_loss,learning_rate");
        for (i, e) in h.epochs.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{},{}", e.train_loss, e.crossval_loss, e.learning_rate);
        }
    }
    if let Some(h) = mtl {
        let _ = writeln!(s, "mtl_epoch,train_loss,val_loss,val_s_mtl");
        for (i, e) in h.epochs.iter().enumerate() {
            let sm = e.val_s_mtl.map_or("nan".to_string(), |v| v.to_string());
            let _ = writeln!(s, "{i},{},{},{sm}", e.train_loss, e.val_loss);
        }
    }
    s
}

fn run_system(
    sys: &SystemConfig,
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    seed: u64,
    dir: &Path,
) -> Result<SystemOutcome> {
    fs::create_dir_all(dir)?;
    let mut sets = Vec::with_capacity(sys.features.len());
    let mut emb_history = None;
    for (j, src) in sys.features.iter().enumerate() {
        let label = format!("{}/features[{j}]", sys.name);
        let set = match src {
            FeatureSource::Embedder(ecfg) => {
                let mut rng = stage_rng(seed, &format!("embedder:{label}"));
                let (net, hist) = stage(
                    &format!("{label}: train embedder"),
                    seed,
                    train_embedder_on_corpus(ecfg, corpus, &mut rng),
                )?;
                save_network(dir.join(format!("embedder_{j}.bmtl")), &net)?;
                emb_history = Some(hist);
                stage(&format!("{label}: extract"), seed, embed_corpus(&net, ecfg, corpus))?
            }
            FeatureSource::File(path) => stage(
                &format!("{label}: load {}", path.display()),
                seed,
                load_external_embeddings(path),
            )?,
        };
        sets.push(set);
    }
    let features = if sets.len() == 1 {
        sets.pop().unwrap()
    } else {
        stage(&format!("{}: early fusion", sys.name), seed, early_fuse(&sets))?
    };
    write_embedding_file(
        dir.join("features.bemb"),
        &EmbeddingFile::UtteranceLevel(features.clone()),
    )?;
    let dim = features.first().map_or(0, |e| e.vector.len());

    let mtl_stage = format!("{}: train mtl", sys.name);
    let train = stage(&mtl_stage, seed, join_examples(&features, &corpus.records, Some(Split::Train)))?;
    let val = stage(&mtl_stage, seed, join_examples(&features, &corpus.records, Some(Split::Val)))?;
    let mut rng = stage_rng(seed, &format!("mtl:{}", sys.name));
    let (model, mtl_hist) = stage(&mtl_stage, seed, train_mtl(&cfg.mtl_config(), &train, &val, &mut rng))?;
    save_mtl(dir.join("mtl.bmtl"), &model)?;
    fs::write(dir.join("history.csv"), history_csv(emb_history.as_ref(), Some(&mtl_hist)))?;

    let pred_stage = format!("{}: predict", sys.name);
    let val = stage(&pred_stage, seed, predict_split(&model, &features, &corpus.split(Split::Val)))?;
    let test = stage(&pred_stage, seed, predict_split(&model, &features, &corpus.split(Split::Test)))?;
    Ok(SystemOutcome { dim, val, test })
}

fn score_and_write(
    dir: &Path,
    preds: &Predictions,
    records: &[LabelRecord],
    split: &str,
) -> Result<MetricReport> {
    write_predictions(dir.join(format!("{split}_predictions.csv")), preds)?;
    let report = score_predictions(preds, records)?;
    fs::write(dir.join(format!("{split}_report.txt")), report.to_text())?;
    Ok(report)
}

/// Runs every seed: features, MTL training, prediction, scoring, and the
/// optional hybrid. Writes per-seed artifacts under `output_dir/seed_<n>`
/// and `summary.txt` with mean and standard deviation of S_MTL.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml_string()?)?;
    let need_audio = cfg
        .systems
        .iter()
        .flat_map(|s| &s.features)
        .any(|f| matches!(f, FeatureSource::Embedder(_)));

    let mut names: Vec<String> = cfg.systems.iter().map(|s| s.name.clone()).collect();
    if cfg.hybrid.is_some() {
        names.push(HYBRID_SYSTEM.to_string());
    }
    let mut summaries: Vec<SystemSummary> = names
        .iter()
        .map(|n| SystemSummary {
            name: n.clone(),
            feature_dim: None,
            runs: Vec::new(),
        })
        .collect();

    for &seed in &cfg.seeds {
        let seed_dir = cfg.output_dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&seed_dir)?;
        let corpus = stage("load data", seed, load_corpus(&cfg.data, seed, need_audio))?;
        write_manifest(seed_dir.join("manifest.csv"), &corpus.records)?;
        let val_records = corpus.split(Split::Val);
        let test_records = corpus.split(Split::Test);

        let mut val_preds = BTreeMap::new();
        let mut test_preds = BTreeMap::new();
        let mut outcomes: Vec<(PathBuf, Option<usize>, Predictions, Predictions)> = Vec::new();
        for sys in &cfg.systems {
            log::info!("seed {seed}: system {}", sys.name);
            let dir = seed_dir.join(&sys.name);
            let out = run_system(sys, cfg, &corpus, seed, &dir)?;
            val_preds.insert(sys.name.clone(), out.val.clone());
            test_preds.insert(sys.name.clone(), out.test.clone());
            outcomes.push((dir, Some(out.dim), out.val, out.test));
        }
        if let Some(h) = &cfg.hybrid {
            let dir = seed_dir.join(HYBRID_SYSTEM);
            fs::create_dir_all(&dir)?;
            let v = stage("hybrid fusion", seed, hybrid_fuse(h, &val_preds))?;
            let t = stage("hybrid fusion", seed, hybrid_fuse(h, &test_preds))?;
            outcomes.push((dir, None, v, t));
        }
        for ((dir, dim, v, t), summary) in outcomes.into_iter().zip(&mut summaries) {
            let name = summary.name.clone();
            let val = stage(&format!("{name}: score"), seed, score_and_write(&dir, &v, &val_records, "val"))?;
            let test = if test_records.is_empty() {
                None
            } else {
                Some(stage(
                    &format!("{name}: score"),
                    seed,
                    score_and_write(&dir, &t, &test_records, "test"),
                )?)
            };
            summary.feature_dim = dim;
            summary.runs.push(SeedResult { seed, val, test });
        }
    }
    let summary = ExperimentSummary {
        seeds: cfg.seeds.clone(),
        systems: summaries,
    };
    fs::write(cfg.output_dir.join("summary.txt"), summary.to_text())?;
    Ok(summary)
}
