use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{CubeDataset, FieldCube, Role};
use crate::error::{Error, Result};
use crate::rng;

/// Seeded permutation split of `0..n` into `(train, test)` index lists, each
/// ascending. The test share is `round(test_fraction · n)`.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(alloc::format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::seeded(seed, rng::stream::SPLIT));
    let (test, train) = perm.split_at(n_test.min(n));
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(
    cubes: Vec<FieldCube>,
    test_fraction: f64,
    seed: u64,
) -> Result<(CubeDataset, CubeDataset)> {
    let (train_idx, test_idx) = split_indices(cubes.len(), test_fraction, seed)?;
    let norm = None;
    let mut slots: Vec<Option<FieldCube>> = cubes.into_iter().map(Some).collect();
    let mut take = |idx: &[usize]| {
        idx.iter()
            .map(|&i| slots[i].take().expect("indices are disjoint"))
            .collect::<Vec<_>>()
    };
    let train = take(&train_idx);
    let test = take(&test_idx);
    Ok((
        CubeDataset::new(train, norm, Role::Train)?,
        CubeDataset::new(test, norm, Role::Test)?,
    ))
}
