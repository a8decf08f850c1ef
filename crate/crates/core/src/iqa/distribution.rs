use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{FeatureSet, IqaError, MetricReport};

/// Sample count below which FID estimates are flagged as biased.
pub const FID_SMALL_SAMPLE: usize = 2048;

/// Relative magnitude of a negative eigenvalue that triggers a warning.
const NEGATIVE_EIGEN_WARN: f64 = 1e-3;

fn check_pair(a: &FeatureSet, b: &FeatureSet, min: usize) -> Result<usize, IqaError> {
    a.validate()?;
    b.validate()?;
    if a.len() < min || b.len() < min {
        return Err(IqaError::TooFewSamples(format!(
            "need at least {min} samples per set, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.dim() != b.dim() {
        return Err(IqaError::Dimension(a.dim(), b.dim()));
    }
    if a.provider_name != b.provider_name {
        return Err(IqaError::Features(format!(
            "sets come from different providers (`{}` vs `{}`)",
            a.provider_name, b.provider_name
        )));
    }
    Ok(a.dim())
}

/// Warnings about sample sizes for distribution metrics.
pub fn sample_warnings(n_a: usize, n_b: usize, dim: usize) -> Vec<String> {
    let mut out = Vec::new();
    let n = n_a.min(n_b);
    if n < dim + 1 {
        out.push(format!(
            "{n} samples for {dim}-dimensional features: covariance is rank deficient"
        ));
    }
    if n < FID_SMALL_SAMPLE {
        out.push(format!(
            "small sample ({n} < {FID_SMALL_SAMPLE}): FID is biased upwards"
        ));
    }
    out
}

fn to_matrix(s: &FeatureSet) -> DMatrix<f64> {
    let (n, d) = (s.len(), s.dim());
    DMatrix::from_fn(n, d, |i, j| s.vectors()[i].0[j])
}

fn mean_and_cov(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = (centered.transpose() * &centered) / (n - 1.0);
    (mean, cov)
}

/// Eigenvalues of a symmetric matrix with negatives clamped to 0; reports
/// the most negative eigenvalue relative to the largest magnitude.
fn clamped_eigen(m: DMatrix<f64>) -> (SymmetricEigen<f64, nalgebra::Dyn>, f64) {
    let sym = (&m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let worst = eig.eigenvalues.iter().fold(0.0f64, |acc, &v| acc.min(v));
    for v in eig.eigenvalues.iter_mut() {
        *v = v.max(0.0);
    }
    let rel = if scale > 0.0 { -worst / scale } else { 0.0 };
    (eig, rel)
}

fn sqrt_psd(m: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (eig, rel) = clamped_eigen(m);
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    (&eig.eigenvectors * root * eig.eigenvectors.transpose(), rel)
}

fn fid_inner(a: &FeatureSet, b: &FeatureSet) -> Result<(f64, Vec<String>), IqaError> {
    let dim = check_pair(a, b, 2)?;
    let mut warnings = sample_warnings(a.len(), b.len(), dim);
    let (mu_a, cov_a) = mean_and_cov(&to_matrix(a));
    let (mu_b, cov_b) = mean_and_cov(&to_matrix(b));
    // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2), which is symmetric PSD
    let (root_a, rel_a) = sqrt_psd(cov_a.clone());
    let (eig, rel_m) = clamped_eigen(&root_a * &cov_b * &root_a);
    let trace_root: f64 = eig.eigenvalues.iter().map(|v| v.sqrt()).sum();
    for rel in [rel_a, rel_m] {
        if rel > NEGATIVE_EIGEN_WARN {
            let msg = format!("clamped negative eigenvalue of relative magnitude {rel:.3e}");
            log::warn!("fid: {msg}");
            warnings.push(msg);
        }
    }
    let diff = mu_a - mu_b;
    let value = diff.dot(&diff) + cov_a.trace() + cov_b.trace() - 2.0 * trace_root;
    Ok((value.max(0.0), warnings))
}

/// Fréchet distance between Gaussian fits of two feature sets (unbiased
/// covariances).
pub fn fid(a: &FeatureSet, b: &FeatureSet) -> Result<f64, IqaError> {
    fid_inner(a, b).map(|(v, _)| v)
}

pub fn fid_report(a: &FeatureSet, b: &FeatureSet) -> Result<MetricReport, IqaError> {
    let (value, warnings) = fid_inner(a, b)?;
    for w in &warnings {
        log::warn!("fid: {w}");
    }
    let mut r = MetricReport::new("fid", value);
    r.sample_sizes = vec![a.len(), b.len()];
    r.params.insert("provider".into(), a.provider_name.clone().into());
    r.params.insert("dim".into(), a.dim().into());
    r.warnings = warnings;
    Ok(r)
}

/// Rows packed contiguously for the kernel loops.
fn packed(s: &FeatureSet) -> Vec<f64> {
    s.vectors().iter().flat_map(|v| v.0.iter().copied()).collect()
}

fn poly_kernel(x: &[f64], y: &[f64], inv_d: f64) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let t = dot * inv_d + 1.0;
    t * t * t
}

/// Sum of `k(x_i, x_j)` over ordered pairs `i != j`.
fn within_sum(x: &[f64], n: usize, d: usize, inv_d: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for j in i + 1..n {
            s += poly_kernel(xi, &x[j * d..(j + 1) * d], inv_d);
        }
    }
    2.0 * s
}

/// Unbiased squared MMD with the cubic polynomial kernel
/// `k(x, y) = (x·y / d + 1)^3`, over the full sets. May be slightly negative.
pub fn kid(a: &FeatureSet, b: &FeatureSet) -> Result<f64, IqaError> {
    let d = check_pair(a, b, 2)?;
    let (m, n) = (a.len(), b.len());
    let (xa, xb) = (packed(a), packed(b));
    let inv_d = 1.0 / d as f64;
    let kaa = within_sum(&xa, m, d, inv_d);
    let kbb = within_sum(&xb, n, d, inv_d);
    let mut kab = 0.0;
    for i in 0..m {
        let ai = &xa[i * d..(i + 1) * d];
        for j in 0..n {
            kab += poly_kernel(ai, &xb[j * d..(j + 1) * d], inv_d);
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    Ok(kaa / (mf * (mf - 1.0)) + kbb / (nf * (nf - 1.0)) - 2.0 * kab / (mf * nf))
}

pub fn kid_report(a: &FeatureSet, b: &FeatureSet) -> Result<MetricReport, IqaError> {
    let value = kid(a, b)?;
    let mut r = MetricReport::new("kid", value);
    r.sample_sizes = vec![a.len(), b.len()];
    r.params.insert("provider".into(), a.provider_name.clone().into());
    r.params.insert("kernel".into(), "poly3".into());
    Ok(r)
}
