use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::cloud_io::{DatasetManifest, ManifestEntry, PepperColour};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratify {
    #[default]
    None,
    Trip,
    Colour,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_by: Stratify,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            seed: 0,
            stratify_by: Stratify::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum StratumKey {
    All,
    Trip(u32),
    Colour(PepperColour),
}

/// Seeded shuffle then prefix split of each stratum at
/// `round(train_fraction * n)`, clamped so both sides of every stratum are
/// non-empty. Both halves keep manifest order.
pub fn split_dataset(
    manifest: &DatasetManifest,
    spec: &SplitSpec,
) -> Result<(DatasetManifest, DatasetManifest), EvalError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(EvalError::InvalidSplit(format!(
            "train_fraction {} must be in (0, 1)",
            spec.train_fraction
        )));
    }
    if manifest.len() < 2 {
        return Err(EvalError::InvalidSplit("need at least two entries to split".into()));
    }
    let mut strata: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        let key = match spec.stratify_by {
            Stratify::None => StratumKey::All,
            Stratify::Trip => StratumKey::Trip(e.trip),
            Stratify::Colour => StratumKey::Colour(e.colour),
        };
        strata.entry(key).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_train = vec![false; manifest.len()];
    for (key, mut members) in strata {
        let n = members.len();
        if n < 2 {
            return Err(EvalError::EmptyStratum(format!("{key:?} has {n} entry; both sides need one")));
        }
        members.shuffle(&mut rng);
        let k = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        for &i in &members[..k] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<ManifestEntry>, Vec<ManifestEntry>) = {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (e, t) in manifest.entries.iter().zip(in_train) {
            if t {
                train.push(e.clone());
            } else {
                test.push(e.clone());
            }
        }
        (train, test)
    };
    Ok((manifest.with_entries(train), manifest.with_entries(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::path::PathBuf;

    fn manifest_72() -> DatasetManifest {
        let entries = (0..72)
            .map(|i| ManifestEntry {
                path: PathBuf::from(format!("s{i}.cloud")),
                scene_id: i.to_string(),
                trip: if i < 28 { 1 } else { 2 },
                colour: match i % 9 {
                    0 => PepperColour::Green,
                    1 if i > 28 => PepperColour::Mixed,
                    _ => PepperColour::Red,
                },
            })
            .collect();
        DatasetManifest {
            entries,
            base_dir: PathBuf::new(),
        }
    }

    fn check_partition(m: &DatasetManifest, a: &DatasetManifest, b: &DatasetManifest) {
        let pa: HashSet<_> = a.entries.iter().map(|e| e.path.clone()).collect();
        let pb: HashSet<_> = b.entries.iter().map(|e| e.path.clone()).collect();
        assert!(pa.is_disjoint(&pb));
        let all: HashSet<_> = m.entries.iter().map(|e| e.path.clone()).collect();
        assert_eq!(&pa | &pb, all);
    }

    #[test]
    fn even_and_uneven_counts() {
        let m = manifest_72();
        for stratify_by in [Stratify::None, Stratify::Trip] {
            let (a, b) = split_dataset(&m, &SplitSpec { train_fraction: 0.5, seed: 1, stratify_by }).unwrap();
            assert_eq!((a.len(), b.len()), (36, 36));
            check_partition(&m, &a, &b);
        }
        let (a, b) = split_dataset(&m, &SplitSpec { train_fraction: 0.79, seed: 1, stratify_by: Stratify::None }).unwrap();
        assert_eq!((a.len(), b.len()), (57, 15));
        check_partition(&m, &a, &b);
    }

    #[test]
    fn trip_strata_are_split_separately() {
        let m = manifest_72();
        let (a, _) = split_dataset(&m, &SplitSpec { train_fraction: 0.5, seed: 3, stratify_by: Stratify::Trip }).unwrap();
        assert_eq!(a.entries.iter().filter(|e| e.trip == 1).count(), 14);
        assert_eq!(a.entries.iter().filter(|e| e.trip == 2).count(), 22);
    }

    #[test]
    fn seeded_and_deterministic() {
        let m = manifest_72();
        let spec = SplitSpec { train_fraction: 0.5, seed: 11, stratify_by: Stratify::Colour };
        assert_eq!(split_dataset(&m, &spec).unwrap(), split_dataset(&m, &spec).unwrap());
        let other = SplitSpec { seed: 12, ..spec };
        assert_ne!(split_dataset(&m, &spec).unwrap().0, split_dataset(&m, &other).unwrap().0);
    }

    #[test]
    fn degenerate_inputs() {
        let m = manifest_72();
        let one = m.with_entries(m.entries[..1].to_vec());
        assert!(split_dataset(&one, &SplitSpec::default()).is_err());
        assert!(split_dataset(&m, &SplitSpec { train_fraction: 1.0, ..SplitSpec::default() }).is_err());
        let mut lonely = m.clone();
        lonely.entries[0].trip = 3;
        assert!(matches!(
            split_dataset(&lonely, &SplitSpec { stratify_by: Stratify::Trip, ..SplitSpec::default() }),
            Err(EvalError::EmptyStratum(_))
        ));
    }
}
