use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{DatasetManifest, ImageRecord, Provenance, Split};

/// Size of the normal and of the transferred training set.
pub const BASE_TRAIN_SIZE: usize = 50;

/// Generated-image counts of the augmented plans `c..g`.
pub const GENERATED_COUNTS: [usize; 5] = [50, 100, 250, 500, 1000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    NormalTrain,
    TransferredTrain,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSource {
    pub kind: SourceKind,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationSource {
    Normal,
    Transferred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub label: String,
    pub sources: Vec<PlanSource>,
    pub target_total: usize,
    pub generated_count: usize,
    pub validation: ValidationSource,
    pub validation_members: Vec<String>,
}

impl AugmentationPlan {
    pub fn member_ids(&self) -> impl Iterator<Item = &str> {
        self.sources.iter().flat_map(|s| s.members.iter().map(String::as_str))
    }

    /// Training manifest for this plan, records in member order.
    pub fn training_manifest(&self, base: &DatasetManifest) -> Result<DatasetManifest, PipelineError> {
        let records = self
            .member_ids()
            .map(|id| {
                base.record(id)
                    .cloned()
                    .ok_or_else(|| PipelineError::Plan(format!("plan {}: member `{id}` not in base", self.label)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DatasetManifest::new(base.domains.clone(), records))
    }
}

fn ids_where(base: &DatasetManifest, keep: impl Fn(&ImageRecord) -> bool) -> Vec<String> {
    let mut ids: Vec<String> = base.records.iter().filter(|r| keep(r)).map(|r| r.id.clone()).collect();
    ids.sort();
    ids
}

fn take(label: &str, mut ids: Vec<String>, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>, PipelineError> {
    if ids.len() < n {
        return Err(PipelineError::Plan(format!(
            "{label}: need {n} records, base has {}",
            ids.len()
        )));
    }
    if ids.len() > n {
        ids.shuffle(rng);
        ids.truncate(n);
        ids.sort();
    }
    Ok(ids)
}

/// Builds the seven training plans `a..g`.
///
/// * `a`: the 50 real training images, validated on the real validation set;
/// * `b`: the 50 style-transferred training images;
/// * `c..g`: `b` plus 50, 100, 250, 500 and 1000 generated images.
///
/// `b..g` are validated on the transferred validation set. Generated
/// members are nested prefixes of a single seeded shuffle, so each plan
/// extends the previous one.
pub fn build_plans(base: &DatasetManifest, seed: u64) -> Result<Vec<AugmentationPlan>, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let is = |prov: Provenance, split: Split| move |r: &ImageRecord| r.provenance == prov && r.split == split;
    let normal = take(
        "normal training set",
        ids_where(base, is(Provenance::Real, Split::Train)),
        BASE_TRAIN_SIZE,
        &mut rng,
    )?;
    let transferred = take(
        "transferred training set",
        ids_where(base, is(Provenance::Transferred, Split::Train)),
        BASE_TRAIN_SIZE,
        &mut rng,
    )?;
    let mut generated = ids_where(base, |r| {
        r.provenance == Provenance::Generated && r.split != Split::Test
    });
    let needed = *GENERATED_COUNTS.last().unwrap();
    if generated.len() < needed {
        return Err(PipelineError::Plan(format!(
            "generated pool: need {needed} records, base has {}",
            generated.len()
        )));
    }
    generated.shuffle(&mut rng);
    let normal_val = ids_where(base, is(Provenance::Real, Split::Val));
    let transferred_val = ids_where(base, is(Provenance::Transferred, Split::Val));

    let mut plans = vec![
        AugmentationPlan {
            label: "a".into(),
            target_total: normal.len(),
            sources: vec![PlanSource {
                kind: SourceKind::NormalTrain,
                members: normal,
            }],
            generated_count: 0,
            validation: ValidationSource::Normal,
            validation_members: normal_val,
        },
        AugmentationPlan {
            label: "b".into(),
            target_total: transferred.len(),
            sources: vec![PlanSource {
                kind: SourceKind::TransferredTrain,
                members: transferred.clone(),
            }],
            generated_count: 0,
            validation: ValidationSource::Transferred,
            validation_members: transferred_val.clone(),
        },
    ];
    for (label, &n) in ["c", "d", "e", "f", "g"].iter().zip(&GENERATED_COUNTS) {
        let mut members = generated[..n].to_vec();
        members.sort();
        plans.push(AugmentationPlan {
            label: label.to_string(),
            target_total: transferred.len() + n,
            sources: vec![
                PlanSource {
                    kind: SourceKind::TransferredTrain,
                    members: transferred.clone(),
                },
                PlanSource {
                    kind: SourceKind::Generated,
                    members,
                },
            ],
            generated_count: n,
            validation: ValidationSource::Transferred,
            validation_members: transferred_val.clone(),
        });
    }
    Ok(plans)
}
