use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{items_by_user, CrossDomainDataset, Pair};
use crate::seed::component_rng;

/// Per-user train/validation(/test) partitions: 8:2 for the source domain,
/// 8:1:1 for the target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub dataset: CrossDomainDataset,
    pub source_train: Vec<Pair>,
    pub source_val: Vec<Pair>,
    pub target_train: Vec<Pair>,
    pub target_val: Vec<Pair>,
    pub target_test: Vec<Pair>,
    /// Sorted training items per target user.
    pub target_train_items: Vec<Vec<usize>>,
    pub target_val_items: Vec<Vec<usize>>,
    pub target_test_items: Vec<Vec<usize>>,
    pub source_train_items: Vec<Vec<usize>>,
}

impl SplitDataset {
    pub fn is_target_train_positive(&self, user: usize, item: usize) -> bool {
        self.target_train_items[user].binary_search(&item).is_ok()
    }

    pub fn is_source_train_positive(&self, user: usize, item: usize) -> bool {
        self.source_train_items[user].binary_search(&item).is_ok()
    }

    /// Same split with the source domain emptied (target-only training).
    pub fn without_source(&self) -> SplitDataset {
        let mut out = self.clone();
        out.source_train.clear();
        out.source_val.clear();
        for items in &mut out.source_train_items {
            items.clear();
        }
        out
    }
}

/// Shuffles each user's interactions with `seed` and carves off
/// `floor(n * ratio)` items for each held-out part; training keeps the rest.
pub fn split_per_user(ds: &CrossDomainDataset, seed: u64) -> SplitDataset {
    let mut rng = component_rng(seed, "split/source");
    let src = split_domain(&ds.interactions_source, ds.n_users_source, &[2], &mut rng);
    let mut rng = component_rng(seed, "split/target");
    let tgt = split_domain(&ds.interactions_target, ds.n_users_target, &[1, 1], &mut rng);

    let [source_train, source_val] = <[Vec<Pair>; 2]>::try_from(src).unwrap();
    let [target_train, target_val, target_test] = <[Vec<Pair>; 3]>::try_from(tgt).unwrap();
    SplitDataset {
        target_train_items: items_by_user(&target_train, ds.n_users_target),
        target_val_items: items_by_user(&target_val, ds.n_users_target),
        target_test_items: items_by_user(&target_test, ds.n_users_target),
        source_train_items: items_by_user(&source_train, ds.n_users_source),
        dataset: ds.clone(),
        source_train,
        source_val,
        target_train,
        target_val,
        target_test,
    }
}

/// `held_out` are tenths; returns `[train, held_out...]`.
fn split_domain(pairs: &[Pair], n_users: usize, held_out: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<Pair>> {
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for &(u, i) in pairs {
        by_user[u].push(i);
    }
    let mut parts = vec![Vec::new(); held_out.len() + 1];
    for (u, items) in by_user.iter_mut().enumerate() {
        items.shuffle(rng);
        let n = items.len();
        let sizes: Vec<usize> = held_out.iter().map(|tenths| n * tenths / 10).collect();
        let n_train = n - sizes.iter().sum::<usize>();
        let mut rest = &items[..];
        let (train, tail) = rest.split_at(n_train);
        parts[0].extend(train.iter().map(|&i| (u, i)));
        rest = tail;
        for (k, size) in sizes.iter().enumerate() {
            let (chunk, tail) = rest.split_at(*size);
            parts[k + 1].extend(chunk.iter().map(|&i| (u, i)));
            rest = tail;
        }
    }
    parts
}
