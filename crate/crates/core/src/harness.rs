//! Synthetic data with a known answer, and the experiment drivers: shuffle
//! curve, reference parsimony and foil sensitivity.
//!
//! Every driver is a pure function of its inputs and seed. Repeats draw from
//! independent ChaCha streams of the same seed and are aggregated in repeat
//! order.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evalstats::{JudgmentRow, JudgmentTable, TauVariant};
use crate::gaussmi::{fit_reference_matrices, mid, GaussianJointModel, PairBatch};
use crate::matstat::{sym_eig, Matrix};
use crate::store::{EmbeddingSet, Modality};

/// Pairs with unit marginals and cross-correlation `rho` on every dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub rho: f64,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn closed_form_mi(&self) -> f64 {
        -0.5 * self.dim as f64 * (-self.rho * self.rho).ln_1p()
    }

    fn validate(&self) -> Result<()> {
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return Err(Error::invalid(format!("|rho| must be < 1, got {}", self.rho)));
        }
        if self.dim == 0 || self.n == 0 {
            return Err(Error::invalid("synthetic dim and n must be positive"));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` pairs `x ~ N(0, I)`, `y = ρx + √(1−ρ²)·e`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(EmbeddingSet, EmbeddingSet)> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (1.0 - spec.rho * spec.rho).sqrt();
    let mut xs = Vec::with_capacity(spec.n * d);
    let mut ys = Vec::with_capacity(spec.n * d);
    let mut x = vec![0.0; d];
    for _ in 0..spec.n {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for &xv in &x {
            let e: f64 = rng.sample(StandardNormal);
            ys.push(spec.rho * xv + noise * e);
        }
        xs.extend_from_slice(&x);
    }
    let x = EmbeddingSet::new(Modality::Image, "synthetic", Matrix::from_vec(spec.n, d, xs)?)?;
    let y = EmbeddingSet::new(Modality::Text, "synthetic", Matrix::from_vec(spec.n, d, ys)?)?;
    Ok((x, y))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Collapses per-repeat curves (same x grid) into mean ± stderr points.
pub fn summarize(curves: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            let vals: Vec<f64> = curves.iter().map(|c| c[i].value).collect();
            let (value, stderr) = mean_stderr(&vals);
            CurvePoint {
                x: first[i].x,
                value,
                stderr,
            }
        })
        .collect()
}

/// Number of shuffled rows for ratio `r` of `m`. A single row cannot be
/// deranged, so 1 is raised to 2.
fn shuffle_count(r: f64, m: usize) -> usize {
    let k = (r * m as f64).round() as usize;
    if k == 1 {
        2
    } else {
        k.min(m)
    }
}

/// Moves the y-side of `k` randomly chosen rows along a single random cycle.
/// Returns, for each row, the row whose y it now carries.
fn derangement_sources(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut src: Vec<usize> = (0..m).collect();
    if k < 2 {
        return src;
    }
    let mut selected = index::sample(rng, m, k).into_vec();
    selected.sort_unstable();
    // Sattolo: a uniformly random k-cycle, so no selected row keeps its own y
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.random_range(0..i);
        perm.swap(i, j);
    }
    for (i, &row) in selected.iter().enumerate() {
        src[row] = selected[perm[i]];
    }
    src
}

fn check_ratios(ratios: &[f64], m: usize) -> Result<()> {
    for &r in ratios {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid(format!("shuffle ratio {r} is outside [0, 1]")));
        }
        if r > 0.0 && m < 2 {
            return Err(Error::invalid(format!(
                "shuffling needs at least 2 pairs, batch has {m}"
            )));
        }
    }
    Ok(())
}

fn shuffle_curve_with(
    model: &GaussianJointModel,
    batch: &PairBatch,
    ratios: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CurvePoint>> {
    let m = batch.len();
    ratios
        .iter()
        .map(|&r| {
            let k = if r > 0.0 { shuffle_count(r, m) } else { 0 };
            let value = if k == 0 {
                mid(model, batch)?.mid
            } else {
                let src = derangement_sources(m, k, rng);
                let shuffled = PairBatch::new(batch.x_hat().clone(), batch.y_hat().select_rows(&src))?;
                mid(model, &shuffled)?.mid
            };
            Ok(CurvePoint {
                x: r,
                value,
                stderr: 0.0,
            })
        })
        .collect()
}

/// MID after deranging the y-side of a seeded `r`-fraction of pairs, for
/// each ratio.
pub fn shuffle_curve(
    model: &GaussianJointModel,
    batch: &PairBatch,
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    check_ratios(ratios, batch.len())?;
    shuffle_curve_with(model, batch, ratios, &mut stream_rng(seed, 0))
}

/// One shuffle curve per repeat; repeat `j` uses stream `j` of `seed`.
pub fn shuffle_curves(
    model: &GaussianJointModel,
    batch: &PairBatch,
    ratios: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<CurvePoint>>> {
    check_ratios(ratios, batch.len())?;
    if repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    (0..repeats as u64)
        .into_par_iter()
        .map(|j| shuffle_curve_with(model, batch, ratios, &mut stream_rng(seed, j)))
        .collect()
}

/// PMI of every evaluation item under a model refitted on the chosen
/// reference rows.
pub fn subset_pmi_scores(
    ref_x: &Matrix,
    ref_y: &Matrix,
    subset: &[usize],
    items: &PairBatch,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let model = fit_reference_matrices(&ref_x.select_rows(subset), &ref_y.select_rows(subset), epsilon)?;
    Ok(mid(&model, items)?.pmi)
}

/// Rank correlation against `judgments` as the reference set shrinks.
///
/// For each fraction `f`, `round(f·K)` whole reference items are drawn
/// without replacement, `scores_fn` scores every judged item from that
/// subset, and τ is taken against the judgments. Fraction 1 uses the full
/// set once.
#[allow(clippy::too_many_arguments)]
pub fn parsimony_curve<F>(
    scores_fn: F,
    n_refs: usize,
    fractions: &[f64],
    judgments: &JudgmentTable,
    tau: TauVariant,
    repeats: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    let human = judgments.judgments();
    let score_tau = |subset: &[usize]| -> Result<f64> {
        let scores = scores_fn(subset)?;
        if scores.len() != human.len() {
            return Err(Error::DimensionMismatch {
                what: "scored items vs judgments",
                expected: human.len(),
                actual: scores.len(),
            });
        }
        tau.compute(&scores, &human)
    };
    let mut curve = Vec::with_capacity(fractions.len());
    for (fi, &f) in fractions.iter().enumerate() {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::invalid(format!("reference fraction {f} is outside (0, 1]")));
        }
        let size = (f * n_refs as f64).round() as usize;
        if size < 2 {
            return Err(Error::invalid(format!(
                "fraction {f} of {n_refs} references leaves {size}, need at least 2"
            )));
        }
        if size >= n_refs {
            let full: Vec<usize> = (0..n_refs).collect();
            curve.push(CurvePoint {
                x: f,
                value: score_tau(&full)?,
                stderr: 0.0,
            });
            continue;
        }
        let taus: Vec<f64> = (0..repeats as u64)
            .into_par_iter()
            .map(|j| {
                let mut rng = stream_rng(seed, (fi as u64) << 32 | j);
                let mut subset = index::sample(&mut rng, n_refs, size).into_vec();
                subset.sort_unstable();
                score_tau(&subset)
            })
            .collect::<Result<_>>()?;
        let (value, stderr) = mean_stderr(&taus);
        curve.push(CurvePoint { x: f, value, stderr });
    }
    Ok(curve)
}

/// Reference pairs plus judged items at graded alignment levels.
#[derive(Clone, Debug)]
pub struct ParsimonyFixture {
    pub ref_x: Matrix,
    pub ref_y: Matrix,
    pub items: PairBatch,
    pub judgments: JudgmentTable,
}

/// Item `i` sits at level `ℓ = i mod levels` and is drawn with
/// cross-correlation `ρ·ℓ/(levels−1)`; its judgment is `ℓ+1`.
pub fn parsimony_fixture(
    dim: usize,
    rho: f64,
    n_refs: usize,
    n_items: usize,
    levels: usize,
    seed: u64,
) -> Result<ParsimonyFixture> {
    if levels < 2 {
        return Err(Error::invalid("need at least 2 judgment levels"));
    }
    let (rx, ry) = gen_synthetic(&SyntheticSpec {
        dim,
        rho,
        n: n_refs,
        seed,
    })?;
    let mut rng = stream_rng(seed, 1);
    let mut xs = Vec::with_capacity(n_items * dim);
    let mut ys = Vec::with_capacity(n_items * dim);
    let mut rows = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let level = i % levels;
        let r = rho * level as f64 / (levels - 1) as f64;
        let noise = (1.0 - r * r).sqrt();
        for _ in 0..dim {
            let x: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            xs.push(x);
            ys.push(r * x + noise * e);
        }
        rows.push(JudgmentRow {
            id: format!("item{i}"),
            score: 0.0,
            judgment: (level + 1) as f64,
        });
    }
    Ok(ParsimonyFixture {
        ref_x: rx.into_data(),
        ref_y: ry.into_data(),
        items: PairBatch::new(Matrix::from_vec(n_items, dim, xs)?, Matrix::from_vec(n_items, dim, ys)?)?,
        judgments: JudgmentTable::new(rows)?,
    })
}

/// Which canonical directions a foil shift follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoilPlacement {
    /// The most correlated directions.
    Correlated,
    /// The least correlated directions.
    Orthogonal,
}

/// Canonical directions of `y` in whitened coordinates (columns), ordered from
/// most to least correlated with `x`, with their squared canonical
/// correlations.
pub fn canonical_directions(model: &GaussianJointModel) -> Result<(Matrix, Vec<f64>)> {
    let d = model.dim();
    let eps = model.epsilon();
    let wy = model.y_marg().eig().reconstruct_with(|l| 1.0 / (l + eps).sqrt());
    let cxy = model.z_joint().cov().block(0, d, d, d);
    let cyx = cxy.transpose();
    let m = wy
        .matmul(&cyx)?
        .matmul(model.x_marg().precision())?
        .matmul(&cxy)?
        .matmul(&wy)?
        .symmetrized()?;
    let eig = sym_eig(&m)?;
    let order: Vec<usize> = (0..d).rev().collect();
    let mut cols = Matrix::zeros(d, d).into_data();
    for (c, &k) in order.iter().enumerate() {
        for r in 0..d {
            cols[r * d + c] = eig.eigenvectors.get(r, k);
        }
    }
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    Ok((Matrix::from_vec(d, d, cols)?, values))
}

/// PMI of every pair before and after a foil shift of the y-side.
///
/// Each row moves by `shift_sigma` standard deviations along each of
/// `subspace_dim` canonical directions, with a seeded random sign per row and
/// direction.
pub fn foil_fixture(
    model: &GaussianJointModel,
    batch: &PairBatch,
    shift_sigma: f64,
    subspace_dim: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    foil_fixture_placed(model, batch, shift_sigma, subspace_dim, seed, FoilPlacement::Correlated)
}

pub fn foil_fixture_placed(
    model: &GaussianJointModel,
    batch: &PairBatch,
    shift_sigma: f64,
    subspace_dim: usize,
    seed: u64,
    placement: FoilPlacement,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = model.dim();
    if subspace_dim == 0 || subspace_dim > d {
        return Err(Error::invalid(format!(
            "foil subspace dimension {subspace_dim} must be in 1..={d}"
        )));
    }
    if !shift_sigma.is_finite() || shift_sigma < 0.0 {
        return Err(Error::invalid(format!("foil shift must be finite and >= 0, got {shift_sigma}")));
    }
    let (dirs, _) = canonical_directions(model)?;
    let picked: Vec<usize> = match placement {
        FoilPlacement::Correlated => (0..subspace_dim).collect(),
        FoilPlacement::Orthogonal => (d - subspace_dim..d).collect(),
    };
    // columns of Σy^{1/2}·U map whitened unit shifts back to feature space
    let eps = model.epsilon();
    let root = model.y_marg().eig().reconstruct_with(|l| (l + eps).sqrt());
    let basis = root.matmul(&dirs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signs: Vec<f64> = (0..batch.len() * subspace_dim)
        .map(|_| if rng.random_bool(0.5) { shift_sigma } else { -shift_sigma })
        .collect();
    let foiled_y = batch.y_hat().map_rows(|i, row, out| {
        out.copy_from_slice(row);
        for (k, &col) in picked.iter().enumerate() {
            let s = signs[i * subspace_dim + k];
            for (r, o) in out.iter_mut().enumerate() {
                *o += s * basis.get(r, col);
            }
        }
    })?;
    let gt = mid(model, batch)?.pmi;
    let foil = mid(model, &PairBatch::new(batch.x_hat().clone(), foiled_y)?)?.pmi;
    Ok((gt, foil))
}
