use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EMOTIONS;
use crate::error::{Error, Result};
use crate::metrics::{N_COUNTRIES, N_EMOTIONS};

/// Speaker ages covered by the corpus.
pub const AGE_RANGE_YEARS: (f64, f64) = (18.0, 39.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Targets for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub split: Split,
    pub country: usize,
    pub age_years: f64,
    /// Emotion intensities in [0, 1], in [`EMOTIONS`] order.
    pub intensities: [f64; N_EMOTIONS],
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ManifestOptions {
    /// Accept ages outside [`AGE_RANGE_YEARS`] (synthetic corpora only).
    pub allow_any_age: bool,
}

const FIXED_COLUMNS: [&str; 5] = ["utterance_id", "speaker_id", "split", "country", "age"];

pub fn parse_manifest(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>> {
    parse_manifest_with(path, ManifestOptions::default())
}

/// Reads a manifest CSV. Columns are located by header name; any extra
/// columns are ignored. Errors carry the 1-based line number.
pub fn parse_manifest_with(path: impl AsRef<Path>, opts: ManifestOptions) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let err = |row: usize, message: String| Error::Manifest {
        path: shown.clone(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(1, format!("missing column `{name}`")))
    };
    let fixed = FIXED_COLUMNS.map(col);
    let fixed: Vec<usize> = fixed.into_iter().collect::<Result<_>>()?;
    let emo: Vec<usize> = EMOTIONS.iter().map(|e| col(e)).collect::<Result<_>>()?;

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize, what: &str| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| err(row, format!("{what}: `{}` is not a number", field(i))))?;
            if !v.is_finite() {
                return Err(err(row, format!("{what}: non-finite value")));
            }
            Ok(v)
        };
        let utterance_id = field(fixed[0]).to_string();
        if utterance_id.is_empty() {
            return Err(err(row, "empty utterance_id".into()));
        }
        if !seen.insert(utterance_id.clone()) {
            return Err(err(row, format!("duplicate utterance_id `{utterance_id}`")));
        }
        let speaker_id = field(fixed[1]).to_string();
        if speaker_id.is_empty() {
            return Err(err(row, "empty speaker_id".into()));
        }
        let split: Split = field(fixed[2]).parse().map_err(|m| err(row, m))?;
        let country: usize = field(fixed[3])
            .parse()
            .map_err(|_| err(row, format!("country `{}` is not a class id", field(fixed[3]))))?;
        if country >= N_COUNTRIES {
            return Err(err(row, format!("country {country} outside 0..{N_COUNTRIES}")));
        }
        let age_years = num(fixed[4], "age")?;
        let (lo, hi) = AGE_RANGE_YEARS;
        if !opts.allow_any_age && !(lo..=hi).contains(&age_years) {
            return Err(err(row, format!("age {age_years} outside [{lo}, {hi}]")));
        }
        let mut intensities = [0.0; N_EMOTIONS];
        for (k, &c) in emo.iter().enumerate() {
            let v = num(c, EMOTIONS[k])?;
            if !(0.0..=1.0).contains(&v) {
                return Err(err(row, format!("{} intensity {v} outside [0, 1]", EMOTIONS[k])));
            }
            intensities[k] = v;
        }
        out.push(LabelRecord {
            utterance_id,
            speaker_id,
            split,
            country,
            age_years,
            intensities,
        });
    }
    Ok(out)
}

/// Writes records in the canonical column order. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_manifest(path: impl AsRef<Path>, records: &[LabelRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
    header.extend(EMOTIONS);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.utterance_id.clone(),
            r.speaker_id.clone(),
            r.split.to_string(),
            r.country.to_string(),
            r.age_years.to_string(),
        ];
        row.extend(r.intensities.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
