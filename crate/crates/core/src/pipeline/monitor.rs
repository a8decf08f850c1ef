use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    LowerIsBetter,
    HigherIsBetter,
}

impl Polarity {
    /// Polarity of the FR/DB metrics this crate produces.
    pub fn for_metric(name: &str) -> Polarity {
        let base = name.strip_prefix("cropped_").unwrap_or(name);
        match base {
            "psnr" | "ssim" => Polarity::HigherIsBetter,
            _ => Polarity::LowerIsBetter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointPoint {
    pub step: u64,
    pub value: f64,
}

/// Metric value per training step; steps strictly increase and values are
/// finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSeries {
    pub metric_name: String,
    pub polarity: Polarity,
    #[serde(default)]
    pub points: Vec<CheckpointPoint>,
}

impl CheckpointSeries {
    pub fn new(metric_name: impl Into<String>, polarity: Polarity) -> Self {
        Self {
            metric_name: metric_name.into(),
            polarity,
            points: Vec::new(),
        }
    }

    pub fn from_points(
        metric_name: impl Into<String>,
        polarity: Polarity,
        points: &[(u64, f64)],
    ) -> Result<Self, PipelineError> {
        let mut s = Self::new(metric_name, polarity);
        for &(step, value) in points {
            s.push(step, value)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, step: u64, value: f64) -> Result<(), PipelineError> {
        if !value.is_finite() {
            return Err(PipelineError::Series(format!(
                "{}: value at step {step} is not finite",
                self.metric_name
            )));
        }
        if let Some(last) = self.points.last() {
            if step <= last.step {
                return Err(PipelineError::Series(format!(
                    "{}: step {step} does not follow step {}",
                    self.metric_name, last.step
                )));
            }
        }
        self.points.push(CheckpointPoint { step, value });
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut copy = Self::new(self.metric_name.clone(), self.polarity);
        for p in &self.points {
            copy.push(p.step, p.value)?;
        }
        Ok(())
    }
}

/// Step with the best value; ties go to the earliest step.
pub fn select_best_checkpoint(s: &CheckpointSeries) -> Result<u64, PipelineError> {
    let mut best: Option<CheckpointPoint> = None;
    for &p in &s.points {
        let better = match best {
            None => true,
            Some(b) => match s.polarity {
                Polarity::LowerIsBetter => p.value < b.value,
                Polarity::HigherIsBetter => p.value > b.value,
            },
        };
        if better {
            best = Some(p);
        }
    }
    best.map(|p| p.step)
        .ok_or_else(|| PipelineError::Series(format!("{}: empty series", s.metric_name)))
}

/// Reads `step,value` rows (header optional).
pub fn load_series_csv(
    path: impl AsRef<Path>,
    metric_name: &str,
    polarity: Polarity,
) -> Result<CheckpointSeries, PipelineError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut series = CheckpointSeries::new(metric_name, polarity);
    for (n, row) in reader.records().enumerate() {
        let row = row?;
        let (Some(step), Some(value)) = (row.get(0), row.get(1)) else {
            return Err(PipelineError::Series(format!(
                "{}: row {} needs step,value",
                path.display(),
                n + 1
            )));
        };
        if n == 0 && step.parse::<u64>().is_err() {
            continue;
        }
        let step = step
            .parse()
            .map_err(|_| PipelineError::Series(format!("{}: row {}: bad step `{step}`", path.display(), n + 1)))?;
        let value = value
            .parse()
            .map_err(|_| PipelineError::Series(format!("{}: row {}: bad value `{value}`", path.display(), n + 1)))?;
        series.push(step, value)?;
    }
    Ok(series)
}

/// Named series collected over validation passes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorLog {
    pub series: BTreeMap<String, CheckpointSeries>,
}

impl MonitorLog {
    pub fn record(&mut self, metric: &str, step: u64, value: f64) -> Result<(), PipelineError> {
        self.series
            .entry(metric.to_string())
            .or_insert_with(|| CheckpointSeries::new(metric, Polarity::for_metric(metric)))
            .push(step, value)
    }

    pub fn best_steps(&self) -> BTreeMap<String, u64> {
        self.series
            .iter()
            .filter_map(|(k, s)| select_best_checkpoint(s).ok().map(|step| (k.clone(), step)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_step_cases() {
        let lower = Polarity::LowerIsBetter;
        let s = CheckpointSeries::from_points("lpips", lower, &[(100, 0.5), (200, 0.3), (300, 0.4)]).unwrap();
        assert_eq!(select_best_checkpoint(&s).unwrap(), 200);
        let s = CheckpointSeries::from_points("lpips", lower, &[(7, 0.9)]).unwrap();
        assert_eq!(select_best_checkpoint(&s).unwrap(), 7);
        let s = CheckpointSeries::from_points("lpips", lower, &[(100, 0.3), (200, 0.3)]).unwrap();
        assert_eq!(select_best_checkpoint(&s).unwrap(), 100);
        let s =
            CheckpointSeries::from_points("ssim", Polarity::HigherIsBetter, &[(1, 0.2), (2, 0.8), (3, 0.8)]).unwrap();
        assert_eq!(select_best_checkpoint(&s).unwrap(), 2);
        assert!(select_best_checkpoint(&CheckpointSeries::new("x", lower)).is_err());
    }

    #[test]
    fn invariants_enforced() {
        let mut s = CheckpointSeries::new("x", Polarity::LowerIsBetter);
        s.push(10, 1.0).unwrap();
        assert!(s.push(10, 1.0).is_err());
        assert!(s.push(5, 1.0).is_err());
        assert!(s.push(20, f64::NAN).is_err());
        assert!(s.push(20, f64::INFINITY).is_err());
        assert_eq!(s.points.len(), 1);
    }

    #[test]
    fn polarity_by_name() {
        assert_eq!(Polarity::for_metric("cropped_ssim"), Polarity::HigherIsBetter);
        assert_eq!(Polarity::for_metric("psnr"), Polarity::HigherIsBetter);
        assert_eq!(Polarity::for_metric("fid"), Polarity::LowerIsBetter);
        assert_eq!(Polarity::for_metric("embed_distance"), Polarity::LowerIsBetter);
    }

    #[test]
    fn csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "step,value\n50,0.4\n100, 0.2\n150,0.3\n").unwrap();
        let s = load_series_csv(&p, "lpips", Polarity::LowerIsBetter).unwrap();
        assert_eq!(s.points.len(), 3);
        assert_eq!(select_best_checkpoint(&s).unwrap(), 100);
    }
}
