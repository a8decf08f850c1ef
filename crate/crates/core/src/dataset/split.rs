use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{DatasetManifest, ImageRecord, Provenance, Split};
use super::DatasetError;

/// Randomly partitions the real, annotated records of `m` into a train and a
/// validation manifest.
///
/// The train half receives `round(fraction * N)` records, rounding halves
/// up, so a single record always lands in train. Records are ordered by id
/// before shuffling, which makes the result depend only on the record set
/// and the seed. Records outside the eligible set are dropped from both
/// halves.
pub fn split_manifest(
    m: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::BadFraction(fraction));
    }
    let mut eligible: Vec<&ImageRecord> = m
        .records
        .iter()
        .filter(|r| r.provenance == Provenance::Real && !r.annotations.is_empty())
        .collect();
    if eligible.is_empty() {
        return Err(DatasetError::NothingToSplit);
    }
    eligible.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);

    let n_train = (fraction * eligible.len() as f64 + 0.5).floor() as usize;
    let n_train = n_train.min(eligible.len());
    let relabel = |r: &ImageRecord, split: Split| ImageRecord { split, ..r.clone() };
    let train = eligible[..n_train].iter().map(|r| relabel(r, Split::Train)).collect();
    let val = eligible[n_train..].iter().map(|r| relabel(r, Split::Val)).collect();
    Ok((
        DatasetManifest::new(m.domains.clone(), train),
        DatasetManifest::new(m.domains.clone(), val),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BBox, DomainTag, ShootAnnotation};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn manifest(n: usize) -> DatasetManifest {
        let records = (0..n)
            .map(|i| ImageRecord {
                id: format!("r{i:04}"),
                path: format!("{i}.png"),
                width: 512,
                height: 512,
                domain: "night".into(),
                split: Split::Pool,
                provenance: Provenance::Real,
                annotations: vec![ShootAnnotation::new(BBox::new(0.0, 0.0, 10.0, 10.0), vec![])],
            })
            .collect();
        DatasetManifest::new(vec![DomainTag::new("night", "night")], records)
    }

    fn ids(m: &DatasetManifest) -> BTreeSet<String> {
        m.records.iter().map(|r| r.id.clone()).collect()
    }

    #[test]
    fn hundred_into_fifty_fifty() {
        let (a, b) = split_manifest(&manifest(100), 0.5, 7).unwrap();
        assert_eq!(a.records.len(), 50);
        assert_eq!(b.records.len(), 50);
        assert!(a.records.iter().all(|r| r.split == Split::Train));
        assert!(b.records.iter().all(|r| r.split == Split::Val));
    }

    #[test]
    fn single_record_rounds_half_up() {
        let (a, b) = split_manifest(&manifest(1), 0.5, 0).unwrap();
        assert_eq!((a.records.len(), b.records.len()), (1, 0));
    }

    #[test]
    fn deterministic_for_seed() {
        let m = manifest(40);
        let first = split_manifest(&m, 0.3, 11).unwrap();
        let second = split_manifest(&m, 0.3, 11).unwrap();
        assert_eq!(first, second);
        let other = split_manifest(&m, 0.3, 12).unwrap();
        assert_ne!(ids(&first.0), ids(&other.0));
    }

    #[test]
    fn fraction_bounds() {
        let m = manifest(4);
        for f in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(split_manifest(&m, f, 0), Err(DatasetError::BadFraction(_))));
        }
    }

    #[test]
    fn only_real_annotated_records_split() {
        let mut m = manifest(6);
        m.records[0].provenance = Provenance::Generated;
        m.records[1].annotations.clear();
        let (a, b) = split_manifest(&m, 0.5, 3).unwrap();
        assert_eq!(a.records.len() + b.records.len(), 4);
        assert!(matches!(
            split_manifest(&manifest(0), 0.5, 0),
            Err(DatasetError::NothingToSplit)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn split_is_partition(n in 1usize..1000, fraction in 0.01f64..0.99, seed in any::<u64>()) {
            let m = manifest(n);
            let (a, b) = split_manifest(&m, fraction, seed).unwrap();
            let (ia, ib) = (ids(&a), ids(&b));
            prop_assert!(ia.is_disjoint(&ib));
            let union: BTreeSet<_> = ia.union(&ib).cloned().collect();
            prop_assert_eq!(union, ids(&m));
            prop_assert_eq!(a.records.len(), (fraction * n as f64 + 0.5).floor() as usize);
        }
    }
}
