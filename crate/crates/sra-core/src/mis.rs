//! Magnitude Instructor Score: per-sample difficulty from model predictions.
//!
//! The score of a sample is cos(p, label)^gamma, which for one-hot labels is
//! (p_target / ||p||)^gamma. High score = easy sample = heavier deformation
//! when it is reused as the refinement magnitude. gamma = epsilon / ln(c)
//! makes the score of a uniform prediction the same for every class count.

use crate::error::{Error, Result};

/// Probability vector over `c` classes: nonnegative, sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities(Vec<f64>);

impl Probabilities {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Contract("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Probabilities(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    CosineGamma,
    Euclidean,
    Jaccard,
}

impl ScorerKind {
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::CosineGamma => "cosine_gamma",
            ScorerKind::Euclidean => "euclidean",
            ScorerKind::Jaccard => "jaccard",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "cosine_gamma" => Some(ScorerKind::CosineGamma),
            "euclidean" => Some(ScorerKind::Euclidean),
            "jaccard" => Some(ScorerKind::Jaccard),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisConfig {
    pub scorer: ScorerKind,
    pub epsilon: f64,
    pub class_count: usize,
}

impl MisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::Contract(format!("epsilon {} < 0", self.epsilon)));
        }
        if self.class_count < 2 {
            return Err(Error::Contract("class_count must be >= 2".into()));
        }
        Ok(())
    }
}

/// gamma = epsilon / ln(c): same score for a uniform prediction at any c.
pub fn gamma_for_task(epsilon: f64, class_count: usize) -> Result<f64> {
    if class_count < 2 {
        return Err(Error::Contract(format!("class_count {class_count} < 2")));
    }
    if epsilon < 0.0 {
        return Err(Error::Contract(format!("epsilon {epsilon} < 0")));
    }
    Ok(epsilon / (class_count as f64).ln())
}

/// (p_target / ||p||)^gamma, clamped to [0,1]. 0^0 = 1 by convention.
pub fn cosine_mis(p: &Probabilities, target: usize, gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::Contract(format!("gamma {gamma} < 0")));
    }
    if target >= p.len() {
        return Err(Error::Contract("target out of range".into()));
    }
    let norm = p.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = p.as_slice()[target] / norm;
    let score = if gamma == 0.0 { 1.0 } else { cos.powf(gamma) };
    Ok(score.clamp(0.0, 1.0))
}

/// 1 - ||p - onehot|| / sqrt(2); sqrt(2) is the maximum possible distance.
pub fn euclidean_mis(p: &Probabilities, target: usize) -> Result<f64> {
    if target >= p.len() {
        return Err(Error::Contract("target out of range".into()));
    }
    let dist2: f64 = p
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let l = if i == target { 1.0 } else { 0.0 };
            (x - l) * (x - l)
        })
        .sum();
    Ok((1.0 - dist2.sqrt() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

/// Weighted Jaccard against the one-hot label: p_target / (2 - p_target).
pub fn jaccard_mis(p: &Probabilities, target: usize) -> Result<f64> {
    if target >= p.len() {
        return Err(Error::Contract("target out of range".into()));
    }
    let pt = p.as_slice()[target];
    Ok((pt / (2.0 - pt)).clamp(0.0, 1.0))
}

/// Max-subtracted softmax in double precision.
pub fn softmax(logits: &[f64]) -> Probabilities {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Probabilities(exps.into_iter().map(|e| e / sum).collect())
}

/// Score raw logits with the configured scorer.
pub fn compute_mis(logits: &[f64], target: usize, cfg: &MisConfig) -> Result<f64> {
    if logits.len() != cfg.class_count {
        return Err(Error::Contract(format!(
            "logit length {} != class_count {}",
            logits.len(),
            cfg.class_count
        )));
    }
    cfg.validate()?;
    let p = softmax(logits);
    match cfg.scorer {
        ScorerKind::CosineGamma => {
            let gamma = gamma_for_task(cfg.epsilon, cfg.class_count)?;
            cosine_mis(&p, target, gamma)
        }
        ScorerKind::Euclidean => euclidean_mis(&p, target),
        ScorerKind::Jaccard => jaccard_mis(&p, target),
    }
}
