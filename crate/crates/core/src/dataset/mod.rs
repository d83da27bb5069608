//! Two-domain implicit-feedback data: types, TSV ingestion, per-user
//! splitting and a seeded synthetic generator.

mod io;
mod split;
mod synth;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_attributes, load_interactions, write_attributes, write_interactions, Attributes, Interactions};
pub use split::{split_per_user, SplitDataset};
pub use synth::{generate_synthetic, generate_world, SynthConfig, SyntheticWorld};

/// Binary sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    G0,
    G1,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::G0, Group::G1];

    pub fn index(self) -> usize {
        match self {
            Group::G0 => 0,
            Group::G1 => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Group> {
        match i {
            0 => Some(Group::G0),
            1 => Some(Group::G1),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::G0 => "g0",
            Group::G1 => "g1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

/// A `(user, item)` implicit positive, both dense indices.
pub type Pair = (usize, usize);

/// Raw identifiers behind the dense indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMaps {
    pub users_source: Vec<String>,
    pub users_target: Vec<String>,
    pub items_source: Vec<String>,
    pub items_target: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossDomainDataset {
    pub n_users_source: usize,
    pub n_users_target: usize,
    pub n_items_source: usize,
    pub n_items_target: usize,
    /// Target user -> source user, for overlapping users.
    pub overlap: Vec<Option<usize>>,
    pub interactions_source: Vec<Pair>,
    pub interactions_target: Vec<Pair>,
    /// Group of every target user.
    pub groups: Vec<Group>,
    /// Group of source users, where known.
    pub groups_source: Vec<Option<Group>>,
    pub ids: IdMaps,
}

impl CrossDomainDataset {
    pub fn validate(&self) -> Result<()> {
        check_pairs("source", &self.interactions_source, self.n_users_source, self.n_items_source)?;
        check_pairs("target", &self.interactions_target, self.n_users_target, self.n_items_target)?;
        if self.overlap.len() != self.n_users_target {
            return Err(Error::Data("overlap map must cover every target user".into()));
        }
        let mut seen = vec![false; self.n_users_source];
        for s in self.overlap.iter().flatten() {
            if *s >= self.n_users_source {
                return Err(Error::Data(format!("overlap maps to unknown source user {s}")));
            }
            if std::mem::replace(&mut seen[*s], true) {
                return Err(Error::Data(format!("overlap is not injective at source user {s}")));
            }
        }
        if self.groups.len() != self.n_users_target {
            return Err(Error::Data("every target user needs a group".into()));
        }
        if !self.groups.contains(&Group::G0) || !self.groups.contains(&Group::G1) {
            return Err(Error::Data("target users must span exactly two groups".into()));
        }
        if self.groups_source.len() != self.n_users_source {
            return Err(Error::Data("source group table has wrong length".into()));
        }
        for (t, s) in self.overlap.iter().enumerate() {
            if let Some(s) = s {
                if let Some(g) = self.groups_source[*s] {
                    if g != self.groups[t] {
                        return Err(Error::Data(format!(
                            "overlapping user {t} has different groups across domains"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Target users that also exist in the source domain, ascending.
    pub fn overlapping_users(&self) -> Vec<usize> {
        self.overlap
            .iter()
            .enumerate()
            .filter_map(|(t, s)| s.map(|_| t))
            .collect()
    }

    pub fn n_overlap(&self) -> usize {
        self.overlap.iter().filter(|s| s.is_some()).count()
    }

    pub fn group_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for g in &self.groups {
            c[g.index()] += 1;
        }
        c
    }

    /// Reads source/target interaction files and the attribute file, matching
    /// users across domains by raw id.
    pub fn from_files(source: &Path, target: &Path, attributes: &Path) -> Result<Self> {
        let src = load_interactions(source, true)?;
        let tgt = load_interactions(target, true)?;
        let attrs = load_attributes(attributes)?;

        let source_index: HashMap<&str, usize> = src
            .user_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let overlap = tgt
            .user_ids
            .iter()
            .map(|id| source_index.get(id.as_str()).copied())
            .collect();
        let groups = tgt
            .user_ids
            .iter()
            .map(|id| {
                attrs.groups.get(id).copied().ok_or_else(|| {
                    Error::Data(format!("target user `{id}` missing from {}", attributes.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let groups_source = src.user_ids.iter().map(|id| attrs.groups.get(id).copied()).collect();

        let ds = CrossDomainDataset {
            n_users_source: src.user_ids.len(),
            n_users_target: tgt.user_ids.len(),
            n_items_source: src.item_ids.len(),
            n_items_target: tgt.item_ids.len(),
            overlap,
            interactions_source: src.pairs,
            interactions_target: tgt.pairs,
            groups,
            groups_source,
            ids: IdMaps {
                users_source: src.user_ids,
                users_target: tgt.user_ids,
                items_source: src.item_ids,
                items_target: tgt.item_ids,
            },
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn check_pairs(domain: &str, pairs: &[Pair], n_users: usize, n_items: usize) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &(u, i) in pairs {
        if u >= n_users || i >= n_items {
            return Err(Error::Data(format!(
                "{domain} interaction ({u}, {i}) out of range ({n_users} users, {n_items} items)"
            )));
        }
        if !seen.insert((u, i)) {
            return Err(Error::Data(format!("duplicate {domain} interaction ({u}, {i})")));
        }
    }
    Ok(())
}

/// Items per user, each list sorted ascending.
pub fn items_by_user(pairs: &[Pair], n_users: usize) -> Vec<Vec<usize>> {
    let mut by_user = vec![Vec::new(); n_users];
    for &(u, i) in pairs {
        by_user[u].push(i);
    }
    for items in &mut by_user {
        items.sort_unstable();
    }
    by_user
}
