use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MtlPrediction;
use crate::data::{COUNTRIES, EMOTIONS};
use crate::embedder::UtteranceEmbedding;
use crate::error::{invalid, Error, Result};
use crate::metrics::{N_COUNTRIES, N_EMOTIONS};

/// Per-utterance predictions keyed by utterance id.
pub type Predictions = BTreeMap<String, MtlPrediction>;

/// Concatenates per-utterance vectors across sets, in set order. Output
/// follows the utterance order of the first set.
pub fn early_fuse(sets: &[Vec<UtteranceEmbedding>]) -> Result<Vec<UtteranceEmbedding>> {
    let Some(first) = sets.first() else {
        return Err(invalid("early_fuse needs at least one embedding set"));
    };
    let mut lookups = Vec::with_capacity(sets.len());
    for (k, set) in sets.iter().enumerate() {
        let mut map = HashMap::with_capacity(set.len());
        for e in set {
            if map.insert(e.utterance_id.as_str(), e.vector.as_slice()).is_some() {
                return Err(invalid(format!("set {k}: duplicate utterance id {}", e.utterance_id)));
            }
        }
        lookups.push(map);
    }
    let first_ids: HashSet<&str> = first.iter().map(|e| e.utterance_id.as_str()).collect();
    let mut missing: Vec<String> = Vec::new();
    for map in &lookups[1..] {
        missing.extend(first_ids.iter().filter(|id| !map.contains_key(*id)).map(|s| s.to_string()));
        missing.extend(map.keys().filter(|id| !first_ids.contains(*id)).map(|s| s.to_string()));
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingIds(missing));
    }
    Ok(first
        .iter()
        .map(|e| UtteranceEmbedding {
            utterance_id: e.utterance_id.clone(),
            vector: lookups
                .iter()
                .flat_map(|m| m[e.utterance_id.as_str()].iter().copied())
                .collect(),
        })
        .collect())
}

/// Which system supplies each task's predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridSpec {
    pub emotion_source: String,
    pub age_source: String,
    pub country_source: String,
}

/// Copies each task's predictions from its source system.
pub fn hybrid_fuse(spec: &HybridSpec, systems: &BTreeMap<String, Predictions>) -> Result<Predictions> {
    let get = |name: &str| {
        systems
            .get(name)
            .ok_or_else(|| invalid(format!("hybrid source `{name}` not found")))
    };
    let emo = get(&spec.emotion_source)?;
    let age = get(&spec.age_source)?;
    let cou = get(&spec.country_source)?;
    let mut missing = Vec::new();
    for other in [age, cou] {
        missing.extend(emo.keys().filter(|id| !other.contains_key(*id)).cloned());
        missing.extend(other.keys().filter(|id| !emo.contains_key(*id)).cloned());
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingIds(missing));
    }
    Ok(emo
        .iter()
        .map(|(id, e)| {
            let p = MtlPrediction {
                emotions: e.emotions,
                age_years: age[id].age_years,
                country_probs: cou[id].country_probs,
            };
            (id.clone(), p)
        })
        .collect())
}

fn header() -> Vec<String> {
    let mut h = vec!["utterance_id".to_string()];
    h.extend(EMOTIONS.iter().map(|e| e.to_string()));
    h.push("age".into());
    h.extend(COUNTRIES.iter().map(|c| format!("p_{c}")));
    h
}

/// Writes `utterance_id`, the 10 emotions, `age` and `p_<country>` columns.
pub fn write_predictions(path: impl AsRef<Path>, predictions: &Predictions) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())?;
    for (id, p) in predictions {
        let mut row = vec![id.clone()];
        row.extend(p.emotions.iter().map(f64::to_string));
        row.push(p.age_years.to_string());
        row.extend(p.country_probs.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Predictions> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let err = |row: usize, message: String| Error::Manifest {
        path: shown.clone(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != header() {
        return Err(err(1, format!("unexpected header {got:?}")));
    }
    let mut out = Predictions::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(row, format!("column {k}: `{}` is not a finite number", &rec[k])))
        };
        let mut emotions = [0.0; N_EMOTIONS];
        for (k, e) in emotions.iter_mut().enumerate() {
            *e = num(1 + k)?;
        }
        let age_years = num(1 + N_EMOTIONS)?;
        let mut country_probs = [0.0; N_COUNTRIES];
        for (k, c) in country_probs.iter_mut().enumerate() {
            *c = num(2 + N_EMOTIONS + k)?;
        }
        let sum: f64 = country_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(err(row, format!("country probabilities sum to {sum}")));
        }
        let id = rec[0].to_string();
        let p = MtlPrediction {
            emotions,
            age_years,
            country_probs,
        };
        if out.insert(id.clone(), p).is_some() {
            return Err(err(row, format!("duplicate utterance id {id}")));
        }
    }
    Ok(out)
}
