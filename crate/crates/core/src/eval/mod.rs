//! Screening heads trained on precomputed feature vectors, with ranking
//! metrics and stratified cross-validation.

pub mod linear;
pub mod mlp;

use std::io::Read;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::EvalError;
use crate::rng;

pub use linear::{train_linear, LinearModel};
pub use mlp::{train_mlp, MlpModel};

pub const FEATURE_DIM: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainSynthetic,
    TestReal,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train_synthetic" => Some(Split::TrainSynthetic),
            "test_real" => Some(Split::TestReal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::TrainSynthetic => "train_synthetic",
            Split::TestReal => "test_real",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub split: Split,
    /// 0 healthy, 1 suspect.
    pub label: u8,
    pub vector: Vec<f64>,
}

/// Parses the comma-separated feature table. Row numbers in errors are
/// 1-based data rows (the header is row 0).
pub fn parse_features<R: Read>(reader: R) -> Result<Vec<FeatureRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let schema = |row: usize, message: String| EvalError::Schema { row, message };
    let header = rdr.headers().map_err(|e| schema(0, e.to_string()))?.clone();
    let expected = 3 + FEATURE_DIM;
    let header_ok = header.len() == expected
        && header.get(0) == Some("id")
        && header.get(1) == Some("split")
        && header.get(2) == Some("label")
        && header
            .iter()
            .skip(3)
            .enumerate()
            .all(|(i, h)| h == format!("f{i}"));
    if !header_ok {
        return Err(schema(
            0,
            format!("expected header id,split,label,f0..f{}", FEATURE_DIM - 1),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| schema(row, e.to_string()))?;
        if rec.len() != expected {
            return Err(schema(
                row,
                format!(
                    "{} features, expected {FEATURE_DIM}",
                    rec.len().saturating_sub(3)
                ),
            ));
        }
        let split = Split::parse(rec[1].trim())
            .ok_or_else(|| schema(row, format!("unknown split {:?}", &rec[1])))?;
        let label = match rec[2].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(schema(row, format!("label {other:?} is not 0 or 1"))),
        };
        let vector = rec
            .iter()
            .skip(3)
            .enumerate()
            .map(|(j, v)| match v.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(schema(row, format!("f{j}: {v:?} is not a finite number"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(FeatureRecord {
            id: rec[0].to_string(),
            split,
            label,
            vector,
        });
    }
    Ok(out)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureRecord>, EvalError> {
    parse_features(std::fs::File::open(path)?)
}

/// Writes records in the format read by [`parse_features`].
pub fn write_features<W: std::io::Write>(
    out: W,
    records: &[FeatureRecord],
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "split".into(), "label".into()];
    header.extend((0..FEATURE_DIM).map(|i| format!("f{i}")));
    let io = |e: csv::Error| EvalError::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(io)?;
    for r in records {
        let mut row = vec![r.id.clone(), r.split.as_str().into(), r.label.to_string()];
        row.extend(r.vector.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn file_sha256(path: &Path) -> Result<String, EvalError> {
    let bytes = std::fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Stacks records into a design matrix and a 0/1 label vector.
pub fn design(records: &[&FeatureRecord]) -> (Array2<f64>, Array1<f64>) {
    let d = records.first().map_or(FEATURE_DIM, |r| r.vector.len());
    let mut x = Array2::zeros((records.len(), d));
    for (mut row, r) in x.axis_iter_mut(Axis(0)).zip(records) {
        row.assign(&ArrayView1::from(&r.vector[..]));
    }
    let y = records.iter().map(|r| r.label as f64).collect();
    (x, y)
}

/// Balanced weights `n / (2 n_c)` per row.
pub fn class_weights(y: ArrayView1<'_, f64>) -> Result<Array1<f64>, EvalError> {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v == 1.0).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(EvalError::Degenerate(format!(
            "{pos} positive and {neg} negative examples"
        )));
    }
    Ok(y.mapv(|v| {
        if v == 1.0 {
            n / (2.0 * pos)
        } else {
            n / (2.0 * neg)
        }
    }))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub hidden_units: usize,
    pub l2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Gradient-norm stopping tolerance for the linear head.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl HeadConfig {
    pub fn linear() -> Self {
        Self {
            kind: HeadKind::Linear,
            hidden_units: 256,
            l2: 1e-4,
            lr: 1e-3,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            tolerance: 1e-6,
            max_iter: 20_000,
        }
    }

    pub fn mlp() -> Self {
        Self {
            kind: HeadKind::Mlp,
            ..Self::linear()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        match self {
            Model::Linear(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }
}

pub fn train(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    cfg: &HeadConfig,
) -> Result<Model, EvalError> {
    Ok(match cfg.kind {
        HeadKind::Linear => Model::Linear(train_linear(x, y, cfg)?),
        HeadKind::Mlp => Model::Mlp(train_mlp(x, y, cfg)?),
    })
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize), EvalError> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::Degenerate(format!(
            "{pos} positive and {neg} negative labels"
        )));
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUROC with half credit for ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), labels.len());
    let (pos, neg) = class_counts(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::Degenerate("NaN score".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives, with midranks for tied groups
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let p = idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += p * twice_mid;
        i = j + 1;
    }
    let (pos, neg) = (pos as u128, neg as u128);
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// Per-class recall at a score threshold: (specificity, sensitivity).
pub fn class_recalls(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<(f64, f64), EvalError> {
    assert_eq!(scores.len(), labels.len());
    let (pos, neg) = class_counts(labels)?;
    let (mut tp, mut tn) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        tp += (predicted && l == 1) as usize;
        tn += (!predicted && l == 0) as usize;
    }
    Ok((tn as f64 / neg as f64, tp as f64 / pos as f64))
}

pub fn balanced_accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64, EvalError> {
    let (spec, sens) = class_recalls(scores, labels, threshold)?;
    Ok(0.5 * (spec + sens))
}

/// Stratified fold assignment. Each class is shuffled separately and dealt
/// round-robin, with the dealing position carried over between classes so
/// total fold sizes stay within one of each other.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if k < 2 {
        return Err(EvalError::Degenerate(format!("k = {k}")));
    }
    let (pos, neg) = class_counts(labels)?;
    if pos < k || neg < k {
        return Err(EvalError::Degenerate(format!(
            "class counts {neg}/{pos} below k = {k}"
        )));
    }
    let mut rng = rng::seeded(rng::derive_seed(seed, "kfold"));
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn kfold_cv(
    records: &[&FeatureRecord],
    k: usize,
    cfg: &HeadConfig,
    seed: u64,
) -> Result<CvResult, EvalError> {
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let fold = stratified_folds(&labels, k, seed)?;
    let folds = (0..k)
        .into_par_iter()
        .map(|f| {
            let fit: Vec<&FeatureRecord> = records
                .iter()
                .zip(&fold)
                .filter(|(_, &g)| g != f)
                .map(|(r, _)| *r)
                .collect();
            let test: Vec<&FeatureRecord> = records
                .iter()
                .zip(&fold)
                .filter(|(_, &g)| g == f)
                .map(|(r, _)| *r)
                .collect();
            let (xt, yt) = design(&fit);
            let (xv, _) = design(&test);
            let model = train(xt.view(), yt.view(), cfg)?;
            let scores = model.predict(xv.view()).to_vec();
            let lv: Vec<u8> = test.iter().map(|r| r.label).collect();
            auroc(&scores, &lv)
        })
        .collect::<Result<Vec<f64>, EvalError>>()?;
    let mean = folds.iter().sum::<f64>() / k as f64;
    let std = (folds.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    Ok(CvResult { folds, mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub head: HeadKind,
    pub auroc: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub recall_healthy: Option<f64>,
    pub recall_suspect: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub cv_mean: Option<f64>,
    pub cv_std: Option<f64>,
    pub cv_folds: Option<Vec<f64>>,
    pub features_sha256: Option<String>,
    pub seed: u64,
    pub config: HeadConfig,
}

/// Trains on the synthetic split and scores the real split when present.
/// `cv` runs k-fold cross-validation over the synthetic split.
pub fn evaluate(
    records: &[FeatureRecord],
    cfg: &HeadConfig,
    cv: Option<usize>,
) -> Result<EvalReport, EvalError> {
    let train_set: Vec<&FeatureRecord> = records
        .iter()
        .filter(|r| r.split == Split::TrainSynthetic)
        .collect();
    let test_set: Vec<&FeatureRecord> = records
        .iter()
        .filter(|r| r.split == Split::TestReal)
        .collect();
    let (x, y) = design(&train_set);
    let model = train(x.view(), y.view(), cfg)?;
    let mut report = EvalReport {
        head: cfg.kind,
        auroc: None,
        balanced_accuracy: None,
        recall_healthy: None,
        recall_suspect: None,
        n_train: train_set.len(),
        n_test: test_set.len(),
        cv_mean: None,
        cv_std: None,
        cv_folds: None,
        features_sha256: None,
        seed: cfg.seed,
        config: cfg.clone(),
    };
    if !test_set.is_empty() {
        let (xt, _) = design(&test_set);
        let scores = model.predict(xt.view()).to_vec();
        let labels: Vec<u8> = test_set.iter().map(|r| r.label).collect();
        let (spec, sens) = class_recalls(&scores, &labels, 0.5)?;
        report.auroc = Some(auroc(&scores, &labels)?);
        report.balanced_accuracy = Some(0.5 * (spec + sens));
        report.recall_healthy = Some(spec);
        report.recall_suspect = Some(sens);
    }
    if let Some(k) = cv {
        let res = kfold_cv(&train_set, k, cfg, cfg.seed)?;
        report.cv_mean = Some(res.mean);
        report.cv_std = Some(res.std);
        report.cv_folds = Some(res.folds);
    }
    Ok(report)
}
