//! Gaussian mutual information between paired embeddings and the
//! divergence built from it.
//!
//! A [`GaussianJointModel`] holds the reference moments of the condition
//! features `x`, the generation features `y` and their concatenation
//! `z = [x; y]`. From these:
//!
//! * the mutual information `I = ½(log det Σx + log det Σy − log det Σz)`,
//! * the point-wise score `PMI(x̂, ŷ) = I + ½(SMDx + SMDy − SMDz)`,
//! * MID, the mean PMI over a batch of evaluation pairs.
//!
//! Log-determinants come from eigenvalues and every covariance is shifted by
//! the same `εI` before inversion.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matstat::{covariance, mean, trace_of_product_sym, Matrix, RegularizedGaussian};
use crate::store::EmbeddingSet;

/// Covariance shift used unless a run asks otherwise.
pub const DEFAULT_EPSILON: f64 = 5e-4;
/// Shift used for the hallucination (FOIL) protocol.
pub const FOIL_EPSILON: f64 = 1e-15;

/// Named ε settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsilonPreset {
    Default,
    Foil,
}

impl EpsilonPreset {
    pub fn value(self) -> f64 {
        match self {
            EpsilonPreset::Default => DEFAULT_EPSILON,
            EpsilonPreset::Foil => FOIL_EPSILON,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(EpsilonPreset::Default),
            "foil" => Ok(EpsilonPreset::Foil),
            other => Err(Error::invalid(format!("unknown epsilon preset '{other}'"))),
        }
    }
}

/// Reference statistics for paired features.
#[derive(Clone, Debug)]
pub struct GaussianJointModel {
    dim: usize,
    x_marg: RegularizedGaussian,
    y_marg: RegularizedGaussian,
    z_joint: RegularizedGaussian,
    epsilon: f64,
    mi: f64,
    n_ref: usize,
}

impl GaussianJointModel {
    /// Builds the model from the joint moments of `z = [x; y]`; the marginals
    /// are the diagonal blocks.
    pub fn from_joint_moments(
        dim: usize,
        z_mean: Vec<f64>,
        z_cov: Matrix,
        epsilon: f64,
        n_ref: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model dimension must be positive"));
        }
        if z_mean.len() != 2 * dim || z_cov.rows() != 2 * dim || z_cov.cols() != 2 * dim {
            return Err(Error::DimensionMismatch {
                what: "joint moments",
                expected: 2 * dim,
                actual: z_mean.len(),
            });
        }
        let x_marg =
            RegularizedGaussian::new(z_mean[..dim].to_vec(), z_cov.block(0, 0, dim, dim), epsilon)?;
        let y_marg =
            RegularizedGaussian::new(z_mean[dim..].to_vec(), z_cov.block(dim, dim, dim, dim), epsilon)?;
        let z_joint = RegularizedGaussian::new(z_mean, z_cov, epsilon)?;
        let mi = 0.5 * (x_marg.logdet() + y_marg.logdet() - z_joint.logdet());
        if !mi.is_finite() {
            return Err(Error::invalid(format!("mutual information is not finite ({mi})")));
        }
        Ok(GaussianJointModel {
            dim,
            x_marg,
            y_marg,
            z_joint,
            epsilon,
            mi,
            n_ref,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x_marg(&self) -> &RegularizedGaussian {
        &self.x_marg
    }

    pub fn y_marg(&self) -> &RegularizedGaussian {
        &self.y_marg
    }

    pub fn z_joint(&self) -> &RegularizedGaussian {
        &self.z_joint
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mi(&self) -> f64 {
        self.mi
    }

    pub fn n_ref(&self) -> usize {
        self.n_ref
    }

    /// `(SMDx, SMDy, SMDz)` for one pair.
    fn smds(&self, x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let mut dz = Vec::with_capacity(2 * self.dim);
        dz.extend(x.iter().zip(self.x_marg.mean()).map(|(a, m)| a - m));
        dz.extend(y.iter().zip(self.y_marg.mean()).map(|(a, m)| a - m));
        let sx = self.x_marg.smd_centered(&dz[..self.dim]);
        let sy = self.y_marg.smd_centered(&dz[self.dim..]);
        let sz = self.z_joint.smd_centered(&dz);
        (sx, sy, sz)
    }
}

/// Fits reference moments on aligned feature sets.
pub fn fit_reference(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    epsilon: f64,
) -> Result<GaussianJointModel> {
    fit_reference_matrices(x.data(), y.data(), epsilon)
}

pub fn fit_reference_matrices(x: &Matrix, y: &Matrix, epsilon: f64) -> Result<GaussianJointModel> {
    if x.rows() != y.rows() {
        return Err(Error::invalid(format!(
            "reference sets are not aligned: x has {} rows, y has {} rows",
            x.rows(),
            y.rows()
        )));
    }
    if x.cols() != y.cols() {
        return Err(Error::DimensionMismatch {
            what: "reference feature width",
            expected: x.cols(),
            actual: y.cols(),
        });
    }
    if x.rows() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 reference pairs, got {}",
            x.rows()
        )));
    }
    let z = Matrix::hstack(x, y)?;
    let mu = mean(&z)?;
    let cov = covariance(&z, &mu)?;
    GaussianJointModel::from_joint_moments(x.cols(), mu, cov, epsilon, x.rows())
}

/// `½(log det Σx + log det Σy − log det Σz)` with the model's ε.
pub fn mutual_information(model: &GaussianJointModel) -> f64 {
    model.mi
}

fn check_pair_dims(model: &GaussianJointModel, x: usize, y: usize) -> Result<()> {
    for (what, got) in [("x features", x), ("y features", y)] {
        if got != model.dim {
            return Err(Error::DimensionMismatch {
                what,
                expected: model.dim,
                actual: got,
            });
        }
    }
    Ok(())
}

/// Point-wise mutual information of one pair. Negative values are returned
/// as they are.
pub fn pmi(model: &GaussianJointModel, x_hat: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair_dims(model, x_hat.len(), y_hat.len())?;
    let (sx, sy, sz) = model.smds(x_hat, y_hat);
    Ok(model.mi + 0.5 * (sx + sy - sz))
}

/// Evaluation pairs, aligned by row.
#[derive(Clone, Debug)]
pub struct PairBatch {
    x_hat: Matrix,
    y_hat: Matrix,
}

impl PairBatch {
    pub fn new(x_hat: Matrix, y_hat: Matrix) -> Result<Self> {
        if x_hat.rows() != y_hat.rows() {
            return Err(Error::invalid(format!(
                "evaluation pairs are not aligned: x has {} rows, y has {} rows",
                x_hat.rows(),
                y_hat.rows()
            )));
        }
        if x_hat.cols() != y_hat.cols() {
            return Err(Error::DimensionMismatch {
                what: "evaluation feature width",
                expected: x_hat.cols(),
                actual: y_hat.cols(),
            });
        }
        Ok(PairBatch { x_hat, y_hat })
    }

    pub fn from_sets(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<Self> {
        PairBatch::new(x.data().clone(), y.data().clone())
    }

    pub fn len(&self) -> usize {
        self.x_hat.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x_hat.cols()
    }

    pub fn x_hat(&self) -> &Matrix {
        &self.x_hat
    }

    pub fn y_hat(&self) -> &Matrix {
        &self.y_hat
    }

    pub fn into_parts(self) -> (Matrix, Matrix) {
        (self.x_hat, self.y_hat)
    }
}

/// Per-pair PMI together with the batch aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub pmi: Vec<f64>,
    pub mid: f64,
    pub mean_smd_x: f64,
    pub mean_smd_y: f64,
    pub mean_smd_z: f64,
    pub mi: f64,
}

/// Mean PMI of the batch under the reference model.
///
/// Pairs are scored in parallel; the means are summed sequentially in row
/// order, so the report is bit-identical for any thread count.
pub fn mid(model: &GaussianJointModel, batch: &PairBatch) -> Result<ScoreReport> {
    if batch.is_empty() {
        return Err(Error::invalid("empty evaluation batch"));
    }
    check_pair_dims(model, batch.dim(), batch.dim())?;
    let smds: Vec<(f64, f64, f64)> = (0..batch.len())
        .into_par_iter()
        .map(|i| model.smds(batch.x_hat.row(i), batch.y_hat.row(i)))
        .collect();

    let n = smds.len() as f64;
    let (mut sum_x, mut sum_y, mut sum_z, mut sum_pmi) = (0.0, 0.0, 0.0, 0.0);
    let mut scores = Vec::with_capacity(smds.len());
    for &(sx, sy, sz) in &smds {
        let p = model.mi + 0.5 * (sx + sy - sz);
        sum_x += sx;
        sum_y += sy;
        sum_z += sz;
        sum_pmi += p;
        scores.push(p);
    }
    Ok(ScoreReport {
        pmi: scores,
        mid: sum_pmi / n,
        mean_smd_x: sum_x / n,
        mean_smd_y: sum_y / n,
        mean_smd_z: sum_z / n,
        mi: model.mi,
    })
}

/// Mean squared Mahalanobis distance split into mean shift and spread terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmdDecomposition {
    /// `(μ̂−μ)ᵀ P (μ̂−μ)`.
    pub bias: f64,
    /// `tr(P (Σ̂ − (Σ+εI)))`.
    pub var_trace: f64,
    pub dim: usize,
    pub total: f64,
}

/// Closed-form mean SMD of `eval_samples` under `reference`, from the sample
/// moments alone. `P = (Σ+εI)⁻¹`; with ε = 0 the spread term is
/// `tr(Σ⁻¹(Σ̂−Σ))`.
pub fn smd_expectation_decomposition(
    reference: &RegularizedGaussian,
    eval_samples: &Matrix,
) -> Result<SmdDecomposition> {
    if eval_samples.cols() != reference.dim() {
        return Err(Error::DimensionMismatch {
            what: "evaluation sample width",
            expected: reference.dim(),
            actual: eval_samples.cols(),
        });
    }
    let mu_hat = mean(eval_samples)?;
    let cov_hat = covariance(eval_samples, &mu_hat)?;
    let shift: Vec<f64> = mu_hat.iter().zip(reference.mean()).map(|(a, b)| a - b).collect();
    let bias = reference.smd_centered(&shift);
    let dim = reference.dim();
    // tr(P (Σ+εI)) is exactly D
    let var_trace = trace_of_product_sym(reference.precision(), &cov_hat) - dim as f64;
    Ok(SmdDecomposition {
        bias,
        var_trace,
        dim,
        total: bias + var_trace + dim as f64,
    })
}

/// `KL(N(μ₀, Σ₀+ε₀I) ‖ N(μ₁, Σ₁+ε₁I))` with `p_hat = (μ₀, Σ₀)` and
/// `p_ref = (μ₁, Σ₁)`.
pub fn kl_gaussian(p_hat: &RegularizedGaussian, p_ref: &RegularizedGaussian) -> Result<f64> {
    if p_hat.dim() != p_ref.dim() {
        return Err(Error::DimensionMismatch {
            what: "gaussian dimension for KL",
            expected: p_ref.dim(),
            actual: p_hat.dim(),
        });
    }
    let shift: Vec<f64> = p_hat.mean().iter().zip(p_ref.mean()).map(|(a, b)| a - b).collect();
    let trace = trace_of_product_sym(p_ref.precision(), &p_hat.effective_cov());
    let quad = p_ref.smd_centered(&shift);
    Ok(0.5 * (trace - p_hat.dim() as f64 + quad + p_ref.logdet() - p_hat.logdet()))
}

/// MID through Gaussian KL divergences:
///
/// `Î + KL(x̂‖x) + KL(ŷ‖y) − KL(ẑ‖z) − ½ε(tr Px + tr Py − tr Pz)`
///
/// where `Î` is the mutual information of the evaluation model and `P` are
/// the reference precisions. The last term is zero for ε = 0; for ε > 0 it
/// accounts for the evaluation samples being raw while the KL terms use
/// `Σ̂+εI`. When `eval_model` is fitted on a batch, this equals
/// `mid(reference, batch).mid`.
pub fn mid_via_kl(reference: &GaussianJointModel, eval_model: &GaussianJointModel) -> Result<f64> {
    if reference.dim != eval_model.dim {
        return Err(Error::DimensionMismatch {
            what: "model dimension",
            expected: reference.dim,
            actual: eval_model.dim,
        });
    }
    if reference.epsilon != eval_model.epsilon {
        return Err(Error::EpsilonMismatch {
            reference: reference.epsilon,
            evaluation: eval_model.epsilon,
        });
    }
    let kl_x = kl_gaussian(&eval_model.x_marg, &reference.x_marg)?;
    let kl_y = kl_gaussian(&eval_model.y_marg, &reference.y_marg)?;
    let kl_z = kl_gaussian(&eval_model.z_joint, &reference.z_joint)?;
    let correction = 0.5
        * reference.epsilon
        * (reference.x_marg.precision().trace() + reference.y_marg.precision().trace()
            - reference.z_joint.precision().trace());
    Ok(eval_model.mi + kl_x + kl_y - kl_z - correction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Model with unit marginals and cross-correlation `rho` on every
    /// dimension, built directly from moments.
    fn correlated_model(dim: usize, rho: f64, eps: f64) -> GaussianJointModel {
        let mut cov = Matrix::identity(2 * dim).into_data();
        for i in 0..dim {
            cov[i * 2 * dim + dim + i] = rho;
            cov[(dim + i) * 2 * dim + i] = rho;
        }
        let cov = Matrix::from_vec(2 * dim, 2 * dim, cov).unwrap();
        GaussianJointModel::from_joint_moments(dim, vec![0.0; 2 * dim], cov, eps, 0).unwrap()
    }

    fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
            .unwrap()
    }

    #[test]
    fn mutual_information_closed_forms() {
        assert_abs_diff_eq!(mutual_information(&correlated_model(2, 0.0, 0.0)), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            mutual_information(&correlated_model(1, 0.8, 0.0)),
            0.5108256237659907,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mutual_information(&correlated_model(4, 0.5, 0.0)),
            0.5753641449035618,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pmi_examples() {
        let model = correlated_model(1, 0.8, 0.0);
        assert_eq!(pmi(&model, &[0.0], &[0.0]).unwrap(), model.mi());
        assert_abs_diff_eq!(pmi(&model, &[1.0], &[1.0]).unwrap(), 0.9552700682104351, epsilon = 1e-12);
        assert!(matches!(pmi(&model, &[1.0, 2.0], &[1.0]), Err(Error::DimensionMismatch { .. })));

        let sym = correlated_model(3, 0.4, 0.0);
        let (a, b) = ([0.3, -1.2, 0.5], [1.1, 0.2, -0.7]);
        assert_abs_diff_eq!(pmi(&sym, &a, &b).unwrap(), pmi(&sym, &b, &a).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn pmi_can_be_negative() {
        let model = correlated_model(1, 0.8, 0.0);
        assert!(pmi(&model, &[2.0], &[-2.0]).unwrap() < 0.0);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        let one = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(fit_reference_matrices(&one, &one, 0.0).is_err());
        let a = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(fit_reference_matrices(&a, &b, 0.0).is_err());
    }

    #[test]
    fn fit_blocks_match_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = normal_matrix(&mut rng, 50, 3);
        let y = normal_matrix(&mut rng, 50, 3);
        let model = fit_reference_matrices(&x, &y, 5e-4).unwrap();
        let zc = model.z_joint().cov();
        assert_eq!(&zc.block(0, 0, 3, 3), model.x_marg().cov());
        assert_eq!(&zc.block(3, 3, 3, 3), model.y_marg().cov());
        let mut mu = model.x_marg().mean().to_vec();
        mu.extend_from_slice(model.y_marg().mean());
        assert_eq!(mu, model.z_joint().mean());
    }

    #[test]
    fn identical_modalities_stay_finite_with_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = normal_matrix(&mut rng, 200, 4);
        let model = fit_reference_matrices(&x, &x, DEFAULT_EPSILON).unwrap();
        assert!(model.mi().is_finite() && model.mi() > 0.0);
        assert!(fit_reference_matrices(&x, &x, 0.0).is_err());
    }

    #[test]
    fn independent_samples_have_near_zero_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = normal_matrix(&mut rng, 1_000_000, 1);
        let y = normal_matrix(&mut rng, 1_000_000, 1);
        let model = fit_reference_matrices(&x, &y, 0.0).unwrap();
        assert!(model.mi().abs() < 1e-2);
    }

    #[test]
    fn mid_on_reference_batch_is_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = normal_matrix(&mut rng, 300, 3);
        let noise = normal_matrix(&mut rng, 300, 3);
        let y = x.map_rows(|i, r, out| {
            for j in 0..3 {
                out[j] = 0.7 * r[j] + noise.get(i, j);
            }
        })
        .unwrap();
        let model = fit_reference_matrices(&x, &y, 0.0).unwrap();
        let report = mid(&model, &PairBatch::new(x, y).unwrap()).unwrap();
        assert!(((report.mid - model.mi()) / model.mi()).abs() < 1e-9);
        let recomposed =
            report.mi + 0.5 * (report.mean_smd_x + report.mean_smd_y - report.mean_smd_z);
        assert_abs_diff_eq!(report.mid, recomposed, epsilon = 1e-12);
    }

    #[test]
    fn single_pair_mid_equals_pmi() {
        let model = correlated_model(2, 0.6, 5e-4);
        let x = Matrix::from_rows(&[[0.4, -1.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.5, 0.2]]).unwrap();
        let report = mid(&model, &PairBatch::new(x.clone(), y.clone()).unwrap()).unwrap();
        assert_eq!(report.mid, pmi(&model, x.row(0), y.row(0)).unwrap());
        let empty = PairBatch::new(Matrix::zeros(0, 2), Matrix::zeros(0, 2)).unwrap();
        assert!(mid(&model, &empty).is_err());
    }

    #[test]
    fn mid_on_independent_pairs_converges() {
        let model = correlated_model(1, 0.8, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = normal_matrix(&mut rng, 1_000_000, 1);
        let y = normal_matrix(&mut rng, 1_000_000, 1);
        let report = mid(&model, &PairBatch::new(x, y).unwrap()).unwrap();
        assert!((report.mid - (-1.266952154011787)).abs() < 0.02, "{}", report.mid);
    }

    #[test]
    fn decomposition_on_fitting_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = normal_matrix(&mut rng, 400, 4);
        let g = RegularizedGaussian::fit(&x, 0.0).unwrap();
        let d = smd_expectation_decomposition(&g, &x).unwrap();
        assert_eq!(d.bias, 0.0);
        assert_abs_diff_eq!(d.var_trace, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(d.total, 4.0, epsilon = 1e-10);
        assert_eq!(d.dim, 4);
    }

    #[test]
    fn decomposition_shift_and_scale() {
        let unit = RegularizedGaussian::new(vec![0.0], Matrix::identity(1), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = normal_matrix(&mut rng, 1_000_000, 1);
        let shifted = base.map_rows(|_, r, o| o[0] = r[0] + 2.0).unwrap();
        let scaled = base.map_rows(|_, r, o| o[0] = 3.0 * r[0]).unwrap();
        let d = smd_expectation_decomposition(&unit, &shifted).unwrap();
        assert!((d.total - 5.0).abs() < 0.02, "{d:?}");
        let d = smd_expectation_decomposition(&unit, &scaled).unwrap();
        assert!((d.total - 9.0).abs() < 0.02, "{d:?}");
        assert!(d.bias >= 0.0);
    }

    #[test]
    fn kl_closed_forms() {
        let g = |m: f64, v: f64| RegularizedGaussian::new(vec![m], Matrix::from_diag(&[v]).unwrap(), 0.0).unwrap();
        assert_abs_diff_eq!(kl_gaussian(&g(0.3, 2.0), &g(0.3, 2.0)).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_gaussian(&g(1.0, 1.0), &g(0.0, 1.0)).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            kl_gaussian(&g(0.0, 4.0), &g(0.0, 1.0)).unwrap(),
            0.8068528194400547,
            epsilon = 1e-12
        );
        let two = RegularizedGaussian::new(vec![0.0; 2], Matrix::identity(2), 0.0).unwrap();
        assert!(kl_gaussian(&g(0.0, 1.0), &two).is_err());
    }

    #[test]
    fn mid_via_kl_of_reference_is_mi() {
        let model = correlated_model(3, 0.5, 0.0);
        assert_abs_diff_eq!(mid_via_kl(&model, &model).unwrap(), model.mi(), epsilon = 1e-12);
        let other = correlated_model(3, 0.5, 1e-3);
        assert!(matches!(mid_via_kl(&model, &other), Err(Error::EpsilonMismatch { .. })));
    }

    #[test]
    fn mid_via_kl_matches_direct_route_with_regularization() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = normal_matrix(&mut rng, 500, 3);
        let y = x.map_rows(|_, r, o| {
            for j in 0..3 {
                o[j] = 0.5 * r[j] + 0.1 * j as f64;
            }
        })
        .unwrap();
        let noise = normal_matrix(&mut rng, 500, 3);
        let y = y.map_rows(|i, r, o| {
            for j in 0..3 {
                o[j] = r[j] + noise.get(i, j);
            }
        })
        .unwrap();
        let reference = fit_reference_matrices(&x, &y, 5e-4).unwrap();
        let ex = normal_matrix(&mut rng, 100, 3);
        let ey = normal_matrix(&mut rng, 100, 3);
        let direct = mid(&reference, &PairBatch::new(ex.clone(), ey.clone()).unwrap()).unwrap().mid;
        let eval_model = fit_reference_matrices(&ex, &ey, 5e-4).unwrap();
        let via_kl = mid_via_kl(&reference, &eval_model).unwrap();
        assert!(((direct - via_kl) / direct).abs() < 1e-8, "{direct} vs {via_kl}");
    }

    #[test]
    fn identical_conditions_have_zero_condition_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cond = normal_matrix(&mut rng, 200, 2);
        let gen = normal_matrix(&mut rng, 200, 2);
        let gen2 = normal_matrix(&mut rng, 200, 2);
        // condition features play the role of y here, shared between both fits
        let reference = fit_reference_matrices(&gen, &cond, 0.0).unwrap();
        let eval_model = fit_reference_matrices(&gen2, &cond, 0.0).unwrap();
        let kl = kl_gaussian(eval_model.y_marg(), reference.y_marg()).unwrap();
        assert_abs_diff_eq!(kl, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn presets() {
        assert_eq!(EpsilonPreset::parse("foil").unwrap().value(), 1e-15);
        assert_eq!(EpsilonPreset::Default.value(), 5e-4);
        assert!(EpsilonPreset::parse("nope").is_err());
    }
}
