//! Challenge scoring: CCC, MAE, UAR/WAR, confusion matrices and the
//! harmonic-mean S_MTL score.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const N_EMOTIONS: usize = 10;
pub const N_COUNTRIES: usize = 4;

/// Lower bound applied to MAE before computing S_MTL, so a perfect age
/// prediction still yields a finite score.
pub const MAE_FLOOR: f64 = 1e-6;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Concordance correlation coefficient with population (ddof 0) statistics.
///
/// When the denominator vanishes (both sequences constant with equal means)
/// the result is 1 if the sequences are identical and 0 otherwise.
pub fn ccc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(invalid(format!(
            "ccc: length mismatch ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(invalid("ccc: need at least two items"));
    }
    let (mp, mt) = (mean(pred), mean(truth));
    let n = pred.len() as f64;
    let (mut vp, mut vt, mut cov) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dp, dt) = (p - mp, t - mt);
        vp += dp * dp;
        vt += dt * dt;
        cov += dp * dt;
    }
    let (vp, vt, cov) = (vp / n, vt / n, cov / n);
    let denom = vp + vt + (mp - mt) * (mp - mt);
    if denom == 0.0 {
        return Ok(if pred == truth { 1.0 } else { 0.0 });
    }
    Ok((2.0 * cov / denom).clamp(-1.0, 1.0))
}

/// Mean of exactly ten per-emotion coefficients.
pub fn mean_ccc(per_emotion: &[f64]) -> Result<f64> {
    if per_emotion.len() != N_EMOTIONS {
        return Err(invalid(format!(
            "mean_ccc: expected {N_EMOTIONS} values, got {}",
            per_emotion.len()
        )));
    }
    Ok(per_emotion.iter().sum::<f64>() / N_EMOTIONS as f64)
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(invalid(format!(
            "mae: need equal non-empty lengths ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(invalid("confusion matrix must be square and non-empty"));
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Recall of each class, `None` for classes without true items.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let support: u64 = row.iter().sum();
                (support > 0).then(|| row[i] as f64 / support as f64)
            })
            .collect()
    }
}

pub fn confusion_matrix(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(invalid("confusion_matrix: length mismatch"));
    }
    if n_classes == 0 {
        return Err(invalid("confusion_matrix: need at least one class"));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        if p >= n_classes || t >= n_classes {
            return Err(invalid(format!(
                "confusion_matrix: item {i} has class ({t}, {p}) outside 0..{n_classes}"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Unweighted average recall; classes with no true items are left out.
pub fn uar(cm: &ConfusionMatrix) -> Result<f64> {
    let recalls: Vec<f64> = cm.recalls().into_iter().flatten().collect();
    if recalls.is_empty() {
        return Err(invalid("uar: empty confusion matrix"));
    }
    Ok(mean(&recalls))
}

/// Weighted average recall, i.e. accuracy.
pub fn war(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(invalid("war: empty confusion matrix"));
    }
    let trace: u64 = (0..cm.n_classes()).map(|i| cm.counts[i][i]).sum();
    Ok(trace as f64 / total as f64)
}

/// `3 / (1/ccc + mae + 1/uar)`.
pub fn s_mtl(ccc: f64, uar: f64, mae_years: f64) -> Result<f64> {
    if !(ccc > 0.0 && uar > 0.0 && mae_years > 0.0) {
        return Err(Error::UndefinedScore(format!(
            "S_MTL needs positive ccc, uar and mae (got {ccc}, {uar}, {mae_years})"
        )));
    }
    Ok(3.0 / (1.0 / ccc + mae_years + 1.0 / uar))
}

/// Scores for one prediction set against its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_emotion_ccc: Vec<f64>,
    pub mean_ccc: f64,
    pub uar: f64,
    pub war: f64,
    pub mae_years: f64,
    /// 0 when the mean CCC is not positive (the limit of the harmonic mean).
    pub s_mtl: f64,
    pub confusion: ConfusionMatrix,
}

/// Predicted and reference values for one utterance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredItem<'a> {
    pub id: &'a str,
    pub pred_emotions: &'a [f64; N_EMOTIONS],
    pub pred_age: f64,
    pub pred_country_probs: &'a [f64; N_COUNTRIES],
    pub true_emotions: &'a [f64; N_EMOTIONS],
    pub true_age: f64,
    pub true_country: usize,
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Computes every report field. Items are scored in utterance-id order so
/// the result does not depend on input order.
pub fn full_report(items: &[ScoredItem<'_>]) -> Result<MetricReport> {
    if items.len() < 2 {
        return Err(invalid("full_report: need at least two utterances"));
    }
    let mut items = items.to_vec();
    items.sort_by(|a, b| a.id.cmp(b.id));
    let per_emotion_ccc = (0..N_EMOTIONS)
        .map(|k| {
            let p: Vec<f64> = items.iter().map(|it| it.pred_emotions[k]).collect();
            let t: Vec<f64> = items.iter().map(|it| it.true_emotions[k]).collect();
            ccc(&p, &t)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_ccc = mean_ccc(&per_emotion_ccc)?;
    let pred_age: Vec<f64> = items.iter().map(|it| it.pred_age).collect();
    let true_age: Vec<f64> = items.iter().map(|it| it.true_age).collect();
    let mae_years = mae(&pred_age, &true_age)?;
    let pred_c: Vec<usize> = items.iter().map(|it| argmax(it.pred_country_probs)).collect();
    let true_c: Vec<usize> = items.iter().map(|it| it.true_country).collect();
    let confusion = confusion_matrix(&pred_c, &true_c, N_COUNTRIES)?;
    let uar = uar(&confusion)?;
    let war = war(&confusion)?;
    let s = if mean_ccc > 0.0 && uar > 0.0 {
        s_mtl(mean_ccc, uar, mae_years.max(MAE_FLOOR))?
    } else {
        0.0
    };
    Ok(MetricReport {
        per_emotion_ccc,
        mean_ccc,
        uar,
        war,
        mae_years,
        s_mtl: s,
        confusion,
    })
}

impl MetricReport {
    /// Key/value text form, one field per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in crate::data::EMOTIONS.iter().zip(&self.per_emotion_ccc) {
            let _ = writeln!(s, "ccc_{k} = {v:.6}");
        }
        let _ = writeln!(s, "emo_ccc = {:.6}", self.mean_ccc);
        let _ = writeln!(s, "cou_uar = {:.6}", self.uar);
        let _ = writeln!(s, "cou_war = {:.6}", self.war);
        let _ = writeln!(s, "age_mae = {:.6}", self.mae_years);
        let _ = writeln!(s, "s_mtl = {:.6}", self.s_mtl);
        s
    }

    pub const ROW_HEADER: &'static str = "emo_ccc,cou_uar,age_mae,s_mtl";

    /// Delimited row in the Emo-CCC, Cou-UAR, Age-MAE, S_MTL column order.
    pub fn to_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6}",
            self.mean_ccc, self.uar, self.mae_years, self.s_mtl
        )
    }
}
