use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::iqa::FeatureSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub ids: Vec<String>,
    /// `coords[i][c]`: sample `i` on component `c`.
    pub coords: Vec<Vec<f64>>,
    /// Unit loading vectors, one per component.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Loadings below this magnitude count as zero for the sign convention.
const SIGN_EPS: f64 = 1e-12;

/// Projects mean-centred features onto the top `k` eigenvectors of the
/// sample covariance. Each component's first non-negligible loading is
/// made positive.
pub fn pca_project(f: &FeatureSet, k: usize) -> Result<PcaProjection, PipelineError> {
    f.validate().map_err(|e| PipelineError::Pca(e.to_string()))?;
    let (n, d) = (f.len(), f.dim());
    if n < 2 {
        return Err(PipelineError::Pca(format!("need at least 2 samples, got {n}")));
    }
    if k == 0 || k > d {
        return Err(PipelineError::Pca(format!("k = {k} outside 1..={d}")));
    }
    let x = DMatrix::from_fn(n, d, |i, j| f.vectors()[i].0[j]);
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        let mean = x.column(j).sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let total = cov.trace();
    let eig = SymmetricEigen::new((&cov + cov.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut warnings = Vec::new();
    let mut components = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    for &c in &order[..k] {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        if v.iter().find(|x| x.abs() > SIGN_EPS).is_some_and(|&x| x < 0.0) {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        ratios.push(if total > 0.0 {
            (eig.eigenvalues[c].max(0.0) / total).min(1.0)
        } else {
            0.0
        });
    }
    if total <= 0.0 {
        let msg = "all feature vectors identical: zero variance".to_string();
        log::warn!("pca: {msg}");
        warnings.push(msg);
    }
    let coords = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|v| centered.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        ids: f.ids().to_vec(),
        coords,
        components,
        explained_variance_ratio: ratios,
        warnings,
    })
}

/// `id,pc1,pc2,dataset_label` rows; `labels[i]` marks sample `i`'s group.
pub fn write_pca_csv(w: impl Write, p: &PcaProjection, labels: &[String]) -> Result<(), PipelineError> {
    if labels.len() != p.ids.len() {
        return Err(PipelineError::Pca(format!(
            "{} labels for {} samples",
            labels.len(),
            p.ids.len()
        )));
    }
    if p.components.len() < 2 {
        return Err(PipelineError::Pca("CSV export needs two components".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["id", "pc1", "pc2", "dataset_label"])?;
    for (i, id) in p.ids.iter().enumerate() {
        out.write_record([
            id.as_str(),
            &p.coords[i][0].to_string(),
            &p.coords[i][1].to_string(),
            &labels[i],
        ])?;
    }
    out.flush().map_err(|e| PipelineError::Pca(e.to_string()))?;
    Ok(())
}
