use super::embedding_prefix_len;
use super::train::{frame_tensor, LabeledFrames};
use crate::error::{invalid, Error, Result};
use crate::metrics::{self, ConfusionMatrix};
use crate::nn::Network;
use crate::signal::FrameSet;

/// Per-frame pre-activation hidden outputs for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddingSequence {
    pub utterance_id: String,
    /// `n_frames x dim`, row-major.
    pub embeddings: Vec<Vec<f64>>,
}

impl FrameEmbeddingSequence {
    pub fn new(utterance_id: impl Into<String>, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        let utterance_id = utterance_id.into();
        let dim = embeddings.first().map_or(0, Vec::len);
        if embeddings.is_empty() || dim == 0 {
            return Err(invalid(format!("{utterance_id}: empty frame embedding sequence")));
        }
        if embeddings.iter().any(|r| r.len() != dim) {
            return Err(invalid(format!("{utterance_id}: ragged frame embeddings")));
        }
        if embeddings.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{utterance_id} frame embeddings")));
        }
        Ok(Self {
            utterance_id,
            embeddings,
        })
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn n_frames(&self) -> usize {
        self.embeddings.len()
    }
}

/// Fixed-length utterance representation.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceEmbedding {
    pub utterance_id: String,
    pub vector: Vec<f64>,
}

/// Hidden-layer outputs *before* their ReLU, one row per frame.
pub fn extract_frame_embeddings(net: &Network, frames: &FrameSet) -> Result<FrameEmbeddingSequence> {
    let prefix = embedding_prefix_len(net)?;
    let want = net.input_shape()[1];
    if frames.frame_len_samples() != want {
        return Err(Error::ShapeMismatch {
            context: format!("{} frames", frames.source_id),
            expected: vec![want],
            actual: vec![frames.frame_len_samples()],
        });
    }
    let rows = frames
        .frames()
        .iter()
        .map(|f| net.forward_prefix(&frame_tensor(f), prefix).map(|t| t.into_data()))
        .collect::<Result<Vec<_>>>()?;
    FrameEmbeddingSequence::new(frames.source_id.clone(), rows)
}

/// Mean of each coordinate followed by its population standard deviation.
pub fn pool_functionals(seq: &FrameEmbeddingSequence) -> Result<UtteranceEmbedding> {
    if seq.embeddings.is_empty() {
        return Err(invalid(format!("{}: no frames to pool", seq.utterance_id)));
    }
    let n = seq.n_frames() as f64;
    let dim = seq.dim();
    let mut vector = vec![0.0; 2 * dim];
    for row in &seq.embeddings {
        for (m, v) in vector[..dim].iter_mut().zip(row) {
            *m += v;
        }
    }
    vector[..dim].iter_mut().for_each(|m| *m /= n);
    for j in 0..dim {
        let mean = vector[j];
        let var = seq
            .embeddings
            .iter()
            .map(|r| (r[j] - mean) * (r[j] - mean))
            .sum::<f64>()
            / n;
        vector[dim + j] = var.sqrt();
    }
    Ok(UtteranceEmbedding {
        utterance_id: seq.utterance_id.clone(),
        vector,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub uar: f64,
    pub war: f64,
    pub confusion: ConfusionMatrix,
}

/// Utterance-level classification: argmax of the mean softmax over frames.
pub fn classify_eval(net: &Network, utterances: &[LabeledFrames]) -> Result<ClassificationReport> {
    let n_classes = net.output_shape().iter().product::<usize>();
    let mut pred = Vec::with_capacity(utterances.len());
    let mut truth = Vec::with_capacity(utterances.len());
    for u in utterances {
        if u.label >= n_classes {
            return Err(invalid(format!(
                "{}: unknown label {} for {n_classes} classes",
                u.frames.source_id, u.label
            )));
        }
        if u.frames.n_frames() == 0 {
            return Err(invalid(format!("{}: no frames", u.frames.source_id)));
        }
        let mut mean = vec![0.0; n_classes];
        for f in u.frames.frames() {
            let p = net.predict(&frame_tensor(f))?;
            for (m, v) in mean.iter_mut().zip(p.data()) {
                *m += v;
            }
        }
        pred.push(metrics::argmax(&mean));
        truth.push(u.label);
    }
    let confusion = metrics::confusion_matrix(&pred, &truth, n_classes)?;
    Ok(ClassificationReport {
        uar: metrics::uar(&confusion)?,
        war: metrics::war(&confusion)?,
        confusion,
    })
}

/// Random unit-scale vector, used by tests to probe embeddings.
#[cfg(test)]
pub(crate) fn random_frame<R: rand::Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::{build_embedder, ConvSpec, EmbedderConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(rows: Vec<Vec<f64>>) -> FrameEmbeddingSequence {
        FrameEmbeddingSequence::new("u", rows).unwrap()
    }

    #[test]
    fn pooling_example() {
        let p = pool_functionals(&seq(vec![vec![1.0, 3.0], vec![3.0, 5.0]])).unwrap();
        assert_eq!(p.vector, vec![2.0, 4.0, 1.0, 1.0]);
    }

    #[test]
    fn single_frame_has_zero_std() {
        let p = pool_functionals(&seq(vec![vec![0.5, -2.0, 7.0]])).unwrap();
        assert_eq!(p.vector, vec![0.5, -2.0, 7.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        assert!(FrameEmbeddingSequence::new("u", vec![]).is_err());
        let bad = FrameEmbeddingSequence {
            utterance_id: "u".into(),
            embeddings: vec![],
        };
        assert!(pool_functionals(&bad).is_err());
    }

    fn small_cfg() -> EmbedderConfig {
        EmbedderConfig {
            conv_stack: vec![ConvSpec::new(4, 40, 20), ConvSpec::new(4, 5, 4)],
            ..Default::default()
        }
    }

    #[test]
    fn extraction_shape_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = build_embedder(&small_cfg(), &mut rng).unwrap();
        let f = random_frame(&mut rng, 4000);
        let frames = FrameSet::new(vec![f; 7], 4000, 1600, "u").unwrap();
        let e = extract_frame_embeddings(&net, &frames).unwrap();
        assert_eq!((e.n_frames(), e.dim()), (7, 10));
        assert!(e.embeddings.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn extraction_rejects_wrong_frame_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = build_embedder(&small_cfg(), &mut rng).unwrap();
        let frames = FrameSet::new(vec![vec![0.0; 3999]], 3999, 1600, "u").unwrap();
        assert!(extract_frame_embeddings(&net, &frames).is_err());
    }

    #[test]
    fn embeddings_are_taken_before_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut saw_negative = false;
        for _ in 0..100 {
            let net = build_embedder(&small_cfg(), &mut rng).unwrap();
            let frames = FrameSet::new(vec![random_frame(&mut rng, 4000)], 4000, 1600, "u").unwrap();
            let e = extract_frame_embeddings(&net, &frames).unwrap();
            if e.embeddings[0].iter().any(|&v| v < 0.0) {
                saw_negative = true;
                break;
            }
        }
        assert!(saw_negative);
    }

    #[test]
    fn classify_single_frame_matches_frame_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = build_embedder(&small_cfg(), &mut rng).unwrap();
        let utts: Vec<LabeledFrames> = (0..12)
            .map(|i| LabeledFrames {
                frames: FrameSet::new(vec![random_frame(&mut rng, 4000)], 4000, 1600, format!("u{i}"))
                    .unwrap(),
                label: i % 10,
            })
            .collect();
        let report = classify_eval(&net, &utts).unwrap();
        let frame_pred: Vec<usize> = utts
            .iter()
            .map(|u| metrics::argmax(net.predict(&frame_tensor(&u.frames.frames()[0])).unwrap().data()))
            .collect();
        let truth: Vec<usize> = utts.iter().map(|u| u.label).collect();
        let cm = metrics::confusion_matrix(&frame_pred, &truth, 10).unwrap();
        assert_eq!(report.confusion, cm);
    }

    #[test]
    fn classify_rejects_unknown_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = build_embedder(&small_cfg(), &mut rng).unwrap();
        let u = LabeledFrames {
            frames: FrameSet::new(vec![vec![0.0; 4000]], 4000, 1600, "u").unwrap(),
            label: 10,
        };
        assert!(classify_eval(&net, &[u]).is_err());
    }
}
