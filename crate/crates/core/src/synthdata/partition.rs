use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

use super::RadioSample;

/// Indices into the sample list: one shard per client plus the withheld
/// validation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub shards: Vec<Vec<usize>>,
    pub validation: Vec<usize>,
}

/// Map-level split: `val_maps` maps are withheld first, the remaining maps
/// are shuffled and dealt round-robin to `k` clients. All realizations of a
/// map travel together.
pub fn partition_clients<R: Rng + ?Sized>(
    samples: &[RadioSample],
    k: usize,
    val_maps: usize,
    rng: &mut R,
) -> Result<Partition> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one client".into()));
    }
    let mut maps: Vec<u16> = samples
        .iter()
        .map(|s| s.map_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if maps.len() < k + val_maps {
        return Err(Error::TooFewMaps {
            needed: k + val_maps,
            available: maps.len(),
        });
    }
    maps.shuffle(rng);
    let (val, train) = maps.split_at(val_maps);
    let mut owner = vec![None; u16::MAX as usize + 1];
    for (i, &m) in train.iter().enumerate() {
        owner[m as usize] = Some(i % k);
    }
    let val: BTreeSet<u16> = val.iter().copied().collect();
    let mut shards = vec![Vec::new(); k];
    let mut validation = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if val.contains(&s.map_id) {
            validation.push(i);
        } else if let Some(c) = owner[s.map_id as usize] {
            shards[c].push(i);
        }
    }
    Ok(Partition { shards, validation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use crate::synthdata::{generate_dataset, MapSpec};
    use std::collections::BTreeMap;

    fn maps_per_shard(samples: &[RadioSample], p: &Partition) -> Vec<usize> {
        p.shards
            .iter()
            .map(|s| s.iter().map(|&i| samples[i].map_id).collect::<BTreeSet<_>>().len())
            .collect()
    }

    #[test]
    fn one_map_per_client() {
        let samples = generate_dataset(1, &MapSpec::default(), 14, 2).unwrap();
        let p = partition_clients(&samples, 14, 0, &mut stream(1, Purpose::Test)).unwrap();
        assert_eq!(maps_per_shard(&samples, &p), vec![1; 14]);
        assert!(p.validation.is_empty());
    }

    #[test]
    fn balanced_when_uneven() {
        let samples = generate_dataset(1, &MapSpec::default(), 15, 1).unwrap();
        let p = partition_clients(&samples, 14, 0, &mut stream(2, Purpose::Test)).unwrap();
        let mut counts = maps_per_shard(&samples, &p);
        counts.sort();
        assert_eq!(counts, [vec![1; 13], vec![2]].concat());
    }

    #[test]
    fn too_few_maps() {
        let samples = generate_dataset(1, &MapSpec::default(), 5, 1).unwrap();
        assert!(matches!(
            partition_clients(&samples, 6, 0, &mut stream(1, Purpose::Test)),
            Err(Error::TooFewMaps { .. })
        ));
        assert!(partition_clients(&samples, 4, 2, &mut stream(1, Purpose::Test)).is_err());
    }

    #[test]
    fn partition_is_map_disjoint_and_complete() {
        let samples = generate_dataset(9, &MapSpec::default(), 56, 5).unwrap();
        for seed in 0..20 {
            let p = partition_clients(&samples, 14, 8, &mut stream(seed, Purpose::Test)).unwrap();
            let mut seen = vec![0usize; samples.len()];
            let mut map_owner: BTreeMap<u16, usize> = BTreeMap::new();
            for (owner, idxs) in p.shards.iter().chain(std::iter::once(&p.validation)).enumerate() {
                for &i in idxs {
                    seen[i] += 1;
                    let prev = map_owner.insert(samples[i].map_id, owner);
                    assert!(prev.is_none() || prev == Some(owner));
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
            let counts = maps_per_shard(&samples, &p);
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            assert_eq!(p.validation.len(), 8 * 5);
        }
    }
}
