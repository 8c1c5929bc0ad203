//! Comparison metrics: CLIP-S, RefCLIP-S, RefMID, negative InfoNCE,
//! R-Precision and FID.
//!
//! Cosine-based metrics normalize internally; callers pass raw features.

use crate::error::{Error, Result};
use crate::matstat::{dot, sym_eig, Matrix};

/// Reference caption features for one item.
#[derive(Clone, Debug)]
pub struct ReferenceSet {
    embeddings: Matrix,
}

impl ReferenceSet {
    pub fn new(embeddings: Matrix) -> Result<Self> {
        if embeddings.rows() == 0 {
            return Err(Error::invalid("reference set needs at least one reference"));
        }
        Ok(ReferenceSet { embeddings })
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `max(max_r cos(r, y), 0)`.
    pub fn max_cosine(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.embeddings.cols() {
            return Err(Error::DimensionMismatch {
                what: "reference width",
                expected: self.embeddings.cols(),
                actual: y.len(),
            });
        }
        let mut best = 0.0f64;
        for r in self.embeddings.row_iter() {
            best = best.max(cosine(r, y)?);
        }
        Ok(best)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub clip_s_weight: f64,
    pub refmid_alpha: f64,
    pub infonce_temperature: f64,
    pub rprecision_candidates: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            clip_s_weight: 2.5,
            refmid_alpha: 3e2,
            infonce_temperature: 100.0,
            rprecision_candidates: 100,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.clip_s_weight > 0.0
            && self.refmid_alpha >= 0.0
            && self.infonce_temperature > 0.0
            && self.rprecision_candidates >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid baseline configuration {self:?}")))
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "cosine operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `w · max(cos(x, y), 0)`.
pub fn clip_s(x: &[f64], y: &[f64], cfg: &BaselineConfig) -> Result<f64> {
    Ok(cfg.clip_s_weight * cosine(x, y)?.max(0.0))
}

/// Harmonic mean, zero when either term is zero.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn ref_clip_s(x: &[f64], y: &[f64], refs: &ReferenceSet, cfg: &BaselineConfig) -> Result<f64> {
    Ok(harmonic_mean(clip_s(x, y, cfg)?, refs.max_cosine(y)?))
}

/// `½(mid_score + α · max(max_r cos(r, y), 0))`.
pub fn ref_mid(mid_score: f64, y: &[f64], refs: &ReferenceSet, cfg: &BaselineConfig) -> Result<f64> {
    Ok(0.5 * (mid_score + cfg.refmid_alpha * refs.max_cosine(y)?))
}

/// Log-softmax of the matched candidate under logits `τ · cos(x, c_k)`.
pub fn info_nce_score(
    x: &[f64],
    matched: usize,
    candidates: &Matrix,
    cfg: &BaselineConfig,
) -> Result<f64> {
    if candidates.rows() == 0 {
        return Err(Error::invalid("InfoNCE needs at least one candidate"));
    }
    if matched >= candidates.rows() {
        return Err(Error::invalid(format!(
            "matched index {matched} out of range for {} candidates",
            candidates.rows()
        )));
    }
    let logits = candidates
        .row_iter()
        .map(|c| Ok(cfg.infonce_temperature * cosine(x, c)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(log_softmax_at(&logits, matched))
}

pub(crate) fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits[k] - max - lse
}

/// True when the true caption strictly beats every distractor by cosine.
pub fn r_precision(x: &[f64], true_y: &[f64], distractors: &Matrix) -> Result<bool> {
    if distractors.rows() == 0 {
        return Err(Error::invalid("R-Precision needs at least one distractor"));
    }
    let target = cosine(x, true_y)?;
    for d in distractors.row_iter() {
        if cosine(x, d)? >= target {
            return Ok(false);
        }
    }
    Ok(true)
}

const PSD_TOLERANCE: f64 = -1e-8;

/// Symmetric PSD square root, clamping eigenvalues in `[-1e-8·scale, 0)` to 0.
fn psd_sqrt(a: &Matrix, what: &str) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    let scale = eig.eigenvalues.last().map_or(1.0, |l| l.abs().max(1.0));
    if let Some((index, &l)) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .find(|(_, &l)| l < PSD_TOLERANCE * scale)
    {
        return Err(Error::invalid(format!(
            "{what} is not positive semi-definite (eigenvalue {l:e} at index {index})"
        )));
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Fréchet distance between two Gaussians:
/// `‖μa−μb‖² + tr(Σa + Σb − 2(Σa Σb)^{1/2})`.
pub fn fid(a_mean: &[f64], a_cov: &Matrix, b_mean: &[f64], b_cov: &Matrix) -> Result<f64> {
    let d = a_mean.len();
    for (what, got) in [
        ("fid second mean", b_mean.len()),
        ("fid first covariance", a_cov.rows()),
        ("fid second covariance", b_cov.rows()),
    ] {
        if got != d {
            return Err(Error::DimensionMismatch {
                what,
                expected: d,
                actual: got,
            });
        }
    }
    let mean_term: f64 = a_mean.iter().zip(b_mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let a_half = psd_sqrt(a_cov, "first covariance")?;
    psd_sqrt(b_cov, "second covariance")?;
    let inner = a_half.matmul(b_cov)?.matmul(&a_half)?.symmetrized()?;
    let cross = psd_sqrt(&inner, "covariance product")?.trace();
    Ok((mean_term + a_cov.trace() + b_cov.trace() - 2.0 * cross).max(0.0))
}
