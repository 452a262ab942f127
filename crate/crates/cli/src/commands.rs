//! One TOML-configured handler per subcommand. Relative paths in a config
//! file are resolved against the file's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use exvo::data::{write_manifest, synth_dataset, LabelRecord, Split, SynthConfig};
use exvo::embedder::{
    extract_frame_embeddings, load_external_embeddings, pool_functionals, read_embedding_file,
    write_embedding_file, EmbedderConfig, EmbeddingFile, DEFAULT_N_FFT,
};
use exvo::experiment::{
    emit_filter_plot, history_csv, load_corpus, run_experiment, stage_rng,
    train_embedder_on_corpus, DataConfig, ExperimentConfig, MtlOverrides,
};
use exvo::mtl::{
    early_fuse, hybrid_fuse, join_examples, load_mtl, read_predictions, save_mtl,
    score_predictions, train_mtl, write_predictions, HybridSpec, MtlConfig, MtlPreset, Predictions,
};
use exvo::nn::{load_network, save_network};
use exvo::signal::write_wav;

fn fix(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn fix_data(base: &Path, d: &mut DataConfig) {
    if let Some(p) = d.manifest.as_mut() {
        fix(base, p);
    }
    if let Some(p) = d.wav_dir.as_mut() {
        fix(base, p);
    }
}

fn default_seed() -> u64 {
    1
}

fn default_split() -> Split {
    Split::Test
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Records whose ids appear in `predictions`.
fn covered(records: &[LabelRecord], predictions: &Predictions) -> Vec<LabelRecord> {
    records
        .iter()
        .filter(|r| predictions.contains_key(&r.utterance_id))
        .cloned()
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthCmd {
    out_dir: PathBuf,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    synth: SynthConfig,
}

/// Writes `manifest.csv` and `wav/<utterance_id>.wav` under `out_dir`.
pub fn synth(config: &Path) -> Result<()> {
    let mut c: SynthCmd = load(config)?;
    fix(&base_dir(config), &mut c.out_dir);
    let corpus = synth_dataset(&c.synth, &mut stage_rng(c.seed, "synth"))?;
    let wav_dir = c.out_dir.join("wav");
    fs::create_dir_all(&wav_dir)?;
    for (r, w) in corpus.records.iter().zip(&corpus.waveforms) {
        write_wav(wav_dir.join(format!("{}.wav", r.utterance_id)), w)?;
    }
    write_manifest(c.out_dir.join("manifest.csv"), &corpus.records)?;
    println!("wrote {} utterances to {}", corpus.records.len(), c.out_dir.display());
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainEmbedderCmd {
    #[serde(default = "default_seed")]
    seed: u64,
    data: DataConfig,
    #[serde(default)]
    embedder: EmbedderConfig,
    out_model: PathBuf,
    history: Option<PathBuf>,
}

pub fn train_embedder(config: &Path) -> Result<()> {
    let mut c: TrainEmbedderCmd = load(config)?;
    let base = base_dir(config);
    fix_data(&base, &mut c.data);
    fix(&base, &mut c.out_model);
    if let Some(p) = c.history.as_mut() {
        fix(&base, p);
    }
    c.embedder.validate()?;
    let corpus = load_corpus(&c.data, c.seed, true)?;
    let mut rng = stage_rng(c.seed, "embedder");
    let (net, hist) = train_embedder_on_corpus(&c.embedder, &corpus, &mut rng)?;
    for w in &hist.warnings {
        log::warn!("{w}");
    }
    ensure_parent(&c.out_model)?;
    save_network(&c.out_model, &net)?;
    if let Some(p) = &c.history {
        ensure_parent(p)?;
        fs::write(p, history_csv(Some(&hist), None))?;
    }
    match (hist.best_epoch, hist.best_crossval_loss()) {
        (Some(e), Some(l)) => println!("best epoch {e}, crossval loss {l:.6}"),
        _ => println!("no training epochs run"),
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtractCmd {
    model: PathBuf,
    #[serde(default = "default_seed")]
    seed: u64,
    data: DataConfig,
    /// Framing and input settings; must match those used in training.
    #[serde(default)]
    embedder: EmbedderConfig,
    out: PathBuf,
}

/// Writes frame-level embeddings for every manifest utterance.
pub fn extract(config: &Path) -> Result<()> {
    let mut c: ExtractCmd = load(config)?;
    let base = base_dir(config);
    fix_data(&base, &mut c.data);
    fix(&base, &mut c.model);
    fix(&base, &mut c.out);
    let net = load_network(&c.model)?;
    let corpus = load_corpus(&c.data, c.seed, true)?;
    let seqs = corpus
        .records
        .iter()
        .map(|r| {
            let w = &corpus.waveforms[&r.utterance_id];
            extract_frame_embeddings(&net, &c.embedder.prepare_frames(w, &r.utterance_id)?)
        })
        .collect::<exvo::Result<Vec<_>>>()?;
    ensure_parent(&c.out)?;
    write_embedding_file(&c.out, &EmbeddingFile::FrameLevel(seqs))?;
    println!("wrote {} frame sequences to {}", corpus.records.len(), c.out.display());
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolCmd {
    input: PathBuf,
    out: PathBuf,
}

/// Mean+std pools a frame-level embedding file.
pub fn pool(config: &Path) -> Result<()> {
    let mut c: PoolCmd = load(config)?;
    let base = base_dir(config);
    fix(&base, &mut c.input);
    fix(&base, &mut c.out);
    let pooled = match read_embedding_file(&c.input)? {
        EmbeddingFile::FrameLevel(seqs) => seqs
            .iter()
            .map(pool_functionals)
            .collect::<exvo::Result<Vec<_>>>()?,
        EmbeddingFile::UtteranceLevel(_) => bail!("{} is already utterance-level", c.input.display()),
    };
    let dim = pooled.first().map_or(0, |e| e.vector.len());
    ensure_parent(&c.out)?;
    write_embedding_file(&c.out, &EmbeddingFile::UtteranceLevel(pooled))?;
    println!("pooled to dim {dim}: {}", c.out.display());
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainMtlCmd {
    #[serde(default = "default_seed")]
    seed: u64,
    data: DataConfig,
    features: PathBuf,
    #[serde(default)]
    preset: Option<MtlPreset>,
    #[serde(default)]
    mtl: MtlOverrides,
    out_model: PathBuf,
    history: Option<PathBuf>,
}

pub fn train_mtl_cmd(config: &Path) -> Result<()> {
    let mut c: TrainMtlCmd = load(config)?;
    let base = base_dir(config);
    fix_data(&base, &mut c.data);
    fix(&base, &mut c.features);
    fix(&base, &mut c.out_model);
    if let Some(p) = c.history.as_mut() {
        fix(&base, p);
    }
    let cfg: MtlConfig = c.mtl.apply(MtlConfig::preset(c.preset.unwrap_or(MtlPreset::Sys1)));
    cfg.validate()?;
    let corpus = load_corpus(&c.data, c.seed, false)?;
    let features = load_external_embeddings(&c.features)?;
    let train = join_examples(&features, &corpus.records, Some(Split::Train))?;
    let val = join_examples(&features, &corpus.records, Some(Split::Val))?;
    let (model, hist) = train_mtl(&cfg, &train, &val, &mut stage_rng(c.seed, "mtl"))?;
    ensure_parent(&c.out_model)?;
    save_mtl(&c.out_model, &model)?;
    if let Some(p) = &c.history {
        ensure_parent(p)?;
        fs::write(p, history_csv(None, Some(&hist)))?;
    }
    match (hist.best_epoch, hist.best_val_loss()) {
        (Some(e), Some(l)) => println!("best epoch {e}, val loss {l:.6}"),
        _ => println!("no training epochs run"),
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateCmd {
    model: PathBuf,
    features: PathBuf,
    #[serde(default = "default_seed")]
    seed: u64,
    data: DataConfig,
    #[serde(default = "default_split")]
    split: Split,
    predictions: Option<PathBuf>,
    report: Option<PathBuf>,
}

/// Predicts one split and prints its metric report.
pub fn evaluate(config: &Path) -> Result<()> {
    let mut c: EvaluateCmd = load(config)?;
    let base = base_dir(config);
    fix_data(&base, &mut c.data);
    fix(&base, &mut c.model);
    fix(&base, &mut c.features);
    for p in [c.predictions.as_mut(), c.report.as_mut()].into_iter().flatten() {
        fix(&base, p);
    }
    let model = load_mtl(&c.model)?;
    let corpus = load_corpus(&c.data, c.seed, false)?;
    let records = corpus.split(c.split);
    if records.is_empty() {
        bail!("split `{}` is empty", c.split);
    }
    let ids: HashSet<&str> = records.iter().map(|r| r.utterance_id.as_str()).collect();
    let subset: Vec<_> = load_external_embeddings(&c.features)?
        .into_iter()
        .filter(|e| ids.contains(e.utterance_id.as_str()))
        .collect();
    let predictions = model.predict_all(&subset)?;
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !predictions.contains_key(&r.utterance_id))
        .map(|r| r.utterance_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(exvo::Error::MissingIds(missing).into());
    }
    let report = score_predictions(&predictions, &records)?;
    if let Some(p) = &c.predictions {
        ensure_parent(p)?;
        write_predictions(p, &predictions)?;
    }
    if let Some(p) = &c.report {
        ensure_parent(p)?;
        fs::write(p, report.to_text())?;
    }
    print!("{}", report.to_text());
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FuseEarlyCmd {
    inputs: Vec<PathBuf>,
    out: PathBuf,
}

/// Concatenates utterance-level embedding files.
pub fn fuse_early(config: &Path) -> Result<()> {
    let mut c: FuseEarlyCmd = load(config)?;
    let base = base_dir(config);
    c.inputs.iter_mut().for_each(|p| fix(&base, p));
    fix(&base, &mut c.out);
    let sets = c
        .inputs
        .iter()
        .map(load_external_embeddings)
        .collect::<exvo::Result<Vec<_>>>()?;
    let fused = early_fuse(&sets)?;
    let dim = fused.first().map_or(0, |e| e.vector.len());
    ensure_parent(&c.out)?;
    write_embedding_file(&c.out, &EmbeddingFile::UtteranceLevel(fused))?;
    println!("fused to dim {dim}: {}", c.out.display());
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FuseHybridCmd {
    hybrid: HybridSpec,
    /// System name to predictions CSV.
    systems: BTreeMap<String, PathBuf>,
    out: PathBuf,
    /// When given, the fused predictions are scored against it.
    data: Option<DataConfig>,
    #[serde(default = "default_seed")]
    seed: u64,
    report: Option<PathBuf>,
}

/// Takes each task's outputs from its designated system.
pub fn fuse_hybrid(config: &Path) -> Result<()> {
    let mut c: FuseHybridCmd = load(config)?;
    let base = base_dir(config);
    c.systems.values_mut().for_each(|p| fix(&base, p));
    fix(&base, &mut c.out);
    if let Some(d) = c.data.as_mut() {
        fix_data(&base, d);
    }
    if let Some(p) = c.report.as_mut() {
        fix(&base, p);
    }
    let systems = c
        .systems
        .iter()
        .map(|(name, p)| Ok((name.clone(), read_predictions(p)?)))
        .collect::<exvo::Result<BTreeMap<_, _>>>()?;
    let fused = hybrid_fuse(&c.hybrid, &systems)?;
    ensure_parent(&c.out)?;
    write_predictions(&c.out, &fused)?;
    println!("wrote {} fused predictions to {}", fused.len(), c.out.display());
    if let Some(d) = &c.data {
        let corpus = load_corpus(d, c.seed, false)?;
        let report = score_predictions(&fused, &covered(&corpus.records, &fused))?;
        if let Some(p) = &c.report {
            ensure_parent(p)?;
            fs::write(p, report.to_text())?;
        }
        print!("{}", report.to_text());
    }
    Ok(())
}

fn default_n_fft() -> usize {
    DEFAULT_N_FFT
}

fn default_sample_rate() -> u32 {
    16_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterPlotCmd {
    model: PathBuf,
    out: PathBuf,
    #[serde(default = "default_n_fft")]
    n_fft: usize,
    #[serde(default = "default_sample_rate")]
    sample_rate_hz: u32,
}

pub fn filter_plot(config: &Path) -> Result<()> {
    let mut c: FilterPlotCmd = load(config)?;
    let base = base_dir(config);
    fix(&base, &mut c.model);
    fix(&base, &mut c.out);
    ensure_parent(&c.out)?;
    let r = emit_filter_plot(&c.model, &c.out, c.n_fft, c.sample_rate_hz)?;
    println!("wrote {} bins to {}", r.magnitude.len(), c.out.display());
    Ok(())
}

/// Full pipeline over every configured seed.
pub fn run(config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let summary = run_experiment(&cfg)?;
    print!("{}", summary.to_text());
    Ok(())
}
