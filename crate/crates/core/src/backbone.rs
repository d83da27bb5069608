//! Embedding backbones and the inner-product scoring function.
//!
//! User embeddings live in a single row table addressed through per-domain
//! row maps. In [`SharingMode::SharedUser`] an overlapping user's target and
//! source identities map to the same row, so reads agree and gradients from
//! either domain land on the same storage. In [`SharingMode::Dual`] every
//! identity owns its row and the domains only meet through the gain module.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::CrossDomainDataset;
use crate::error::{Error, Result};

pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SharingMode {
    /// Collective matrix factorization: overlapping users share one row.
    SharedUser,
    /// Independent user tables per domain.
    Dual,
}

impl std::str::FromStr for SharingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared-user" | "shared" | "cmf" => Ok(SharingMode::SharedUser),
            "dual" => Ok(SharingMode::Dual),
            other => Err(Error::Config(format!("unknown backbone mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for SharingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SharingMode::SharedUser => "shared-user",
            SharingMode::Dual => "dual",
        })
    }
}

/// The three parameter tables of a backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Users,
    ItemsSource,
    ItemsTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub mode: SharingMode,
    pub dim: usize,
    pub users: Array2<f64>,
    pub items_source: Array2<f64>,
    pub items_target: Array2<f64>,
    target_row: Vec<usize>,
    source_row: Vec<usize>,
    overlap: Vec<Option<usize>>,
}

impl Backbone {
    pub fn init(ds: &CrossDomainDataset, dim: usize, mode: SharingMode, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        let (target_row, source_row, n_rows) = row_layout(ds, mode);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let mut draw = |rows: usize| Array2::from_shape_simple_fn((rows, dim), || normal.sample(&mut rng));
        let users = draw(n_rows);
        let items_source = draw(ds.n_items_source);
        let items_target = draw(ds.n_items_target);
        Ok(Self {
            mode,
            dim,
            users,
            items_source,
            items_target,
            target_row,
            source_row,
            overlap: ds.overlap.clone(),
        })
    }

    pub fn n_users_target(&self) -> usize {
        self.target_row.len()
    }

    pub fn n_users_source(&self) -> usize {
        self.source_row.len()
    }

    pub fn n_items_target(&self) -> usize {
        self.items_target.nrows()
    }

    pub fn n_items_source(&self) -> usize {
        self.items_source.nrows()
    }

    /// Row of a target user in [`Backbone::users`].
    #[inline]
    pub fn target_row(&self, user: usize) -> usize {
        self.target_row[user]
    }

    /// Row of a source user in [`Backbone::users`].
    #[inline]
    pub fn source_row(&self, user: usize) -> usize {
        self.source_row[user]
    }

    /// Row holding the source-domain view of a target user.
    pub fn source_view_row(&self, target_user: usize) -> Result<usize> {
        self.check_target_user(target_user)?;
        self.overlap[target_user]
            .map(|s| self.source_row[s])
            .ok_or(Error::NotOverlapping(target_user))
    }

    pub fn is_overlapping(&self, target_user: usize) -> bool {
        self.overlap.get(target_user).is_some_and(|s| s.is_some())
    }

    fn check_target_user(&self, user: usize) -> Result<()> {
        if user >= self.target_row.len() {
            return Err(Error::OutOfRange {
                what: "target user",
                id: user,
                size: self.target_row.len(),
            });
        }
        Ok(())
    }

    pub fn user_target_vector(&self, user: usize) -> Result<ArrayView1<'_, f64>> {
        self.check_target_user(user)?;
        Ok(self.users.row(self.target_row[user]))
    }

    pub fn user_source_vector(&self, target_user: usize) -> Result<ArrayView1<'_, f64>> {
        let row = self.source_view_row(target_user)?;
        Ok(self.users.row(row))
    }

    pub fn item_target_vector(&self, item: usize) -> Result<ArrayView1<'_, f64>> {
        if item >= self.items_target.nrows() {
            return Err(Error::OutOfRange {
                what: "target item",
                id: item,
                size: self.items_target.nrows(),
            });
        }
        Ok(self.items_target.row(item))
    }

    /// Inner product of a target user and a target item.
    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        let u = self.user_target_vector(user)?;
        let i = self.item_target_vector(item)?;
        Ok(u.dot(&i))
    }

    /// Inner product of a source user and a source item.
    pub fn score_source(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.source_row.len() {
            return Err(Error::OutOfRange {
                what: "source user",
                id: user,
                size: self.source_row.len(),
            });
        }
        if item >= self.items_source.nrows() {
            return Err(Error::OutOfRange {
                what: "source item",
                id: item,
                size: self.items_source.nrows(),
            });
        }
        Ok(self.users.row(self.source_row[user]).dot(&self.items_source.row(item)))
    }

    /// Unchecked target score for hot loops.
    #[inline]
    pub fn score_unchecked(&self, user: usize, item: usize) -> f64 {
        dot(
            self.users.row(self.target_row[user]).as_slice().unwrap(),
            self.items_target.row(item).as_slice().unwrap(),
        )
    }

    pub fn table(&self, t: Table) -> &Array2<f64> {
        match t {
            Table::Users => &self.users,
            Table::ItemsSource => &self.items_source,
            Table::ItemsTarget => &self.items_target,
        }
    }

    pub fn table_mut(&mut self, t: Table) -> &mut Array2<f64> {
        match t {
            Table::Users => &mut self.users,
            Table::ItemsSource => &mut self.items_source,
            Table::ItemsTarget => &mut self.items_target,
        }
    }

    pub fn all_finite(&self) -> bool {
        [&self.users, &self.items_source, &self.items_target]
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Fingerprint over the exact bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h = Fingerprint::default();
        for t in [&self.users, &self.items_source, &self.items_target] {
            h.write_all(t.iter());
        }
        h.finish()
    }

    /// Target-view user matrix (`U_t x d`).
    pub fn target_user_matrix(&self) -> Array2<f64> {
        self.users.select(ndarray::Axis(0), &self.target_row)
    }

    /// Source-domain user matrix (`U_s x d`).
    pub fn source_user_matrix(&self) -> Array2<f64> {
        self.users.select(ndarray::Axis(0), &self.source_row)
    }

    pub fn to_snapshot(&self) -> Snapshot {
        let f = |a: &Array2<f64>| a.mapv(|x| x as f32);
        Snapshot {
            user_emb_source: f(&self.source_user_matrix()),
            user_emb_target: f(&self.target_user_matrix()),
            item_emb_source: f(&self.items_source),
            item_emb_target: f(&self.items_target),
        }
    }

    /// Rebuilds a backbone from snapshot tables. In shared mode the target
    /// view is authoritative for overlapping rows.
    pub fn from_snapshot(snap: &Snapshot, ds: &CrossDomainDataset, mode: SharingMode) -> Result<Self> {
        let dim = snap.user_emb_target.ncols();
        let expect = [
            ("user_emb_source", &snap.user_emb_source, ds.n_users_source),
            ("user_emb_target", &snap.user_emb_target, ds.n_users_target),
            ("item_emb_source", &snap.item_emb_source, ds.n_items_source),
            ("item_emb_target", &snap.item_emb_target, ds.n_items_target),
        ];
        for (name, t, rows) in expect {
            if t.nrows() != rows || t.ncols() != dim {
                return Err(Error::Snapshot(format!(
                    "{name} is {}x{}, dataset needs {rows}x{dim}",
                    t.nrows(),
                    t.ncols()
                )));
            }
        }
        let (target_row, source_row, n_rows) = row_layout(ds, mode);
        let mut users = Array2::zeros((n_rows, dim));
        for (s, &r) in source_row.iter().enumerate() {
            users.row_mut(r).assign(&snap.user_emb_source.row(s).mapv(f64::from));
        }
        for (t, &r) in target_row.iter().enumerate() {
            users.row_mut(r).assign(&snap.user_emb_target.row(t).mapv(f64::from));
        }
        Ok(Self {
            mode,
            dim,
            users,
            items_source: snap.item_emb_source.mapv(f64::from),
            items_target: snap.item_emb_target.mapv(f64::from),
            target_row,
            source_row,
            overlap: ds.overlap.clone(),
        })
    }
}

fn row_layout(ds: &CrossDomainDataset, mode: SharingMode) -> (Vec<usize>, Vec<usize>, usize) {
    let target_row: Vec<usize> = (0..ds.n_users_target).collect();
    let mut source_row = vec![usize::MAX; ds.n_users_source];
    let mut next = ds.n_users_target;
    if mode == SharingMode::SharedUser {
        for (t, s) in ds.overlap.iter().enumerate() {
            if let Some(s) = s {
                source_row[*s] = t;
            }
        }
    }
    for r in source_row.iter_mut() {
        if *r == usize::MAX {
            *r = next;
            next += 1;
        }
    }
    (target_row, source_row, next)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// FNV-1a over f64 bit patterns.
#[derive(Debug, Clone)]
pub struct Fingerprint(u64);

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint(0xcbf2_9ce4_8422_2325)
    }
}

impl Fingerprint {
    pub fn write_all<'a>(&mut self, values: impl Iterator<Item = &'a f64>) {
        for v in values {
            for b in v.to_bits().to_le_bytes() {
                self.0 ^= u64::from(b);
                self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Row-sparse gradient accumulator shaped like one parameter table.
#[derive(Debug, Clone)]
pub struct RowGrad {
    pub data: Array2<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

impl RowGrad {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: Array2::zeros((rows, cols)),
            touched: Vec::new(),
            mark: vec![false; rows],
        }
    }

    pub fn like(a: &Array2<f64>) -> Self {
        Self::zeros(a.nrows(), a.ncols())
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        if !self.mark[row] {
            self.mark[row] = true;
            self.touched.push(row);
        }
        self.data.row_mut(row).into_slice().unwrap()
    }

    /// `row += scale * v`.
    #[inline]
    pub fn add_scaled(&mut self, row: usize, scale: f64, v: &[f64]) {
        for (g, x) in self.row_mut(row).iter_mut().zip(v) {
            *g += scale * x;
        }
    }

    /// Touched rows in ascending order.
    pub fn touched(&self) -> Vec<usize> {
        let mut t = self.touched.clone();
        t.sort_unstable();
        t
    }

    pub fn scale(&mut self, factor: f64) {
        for &r in &self.touched {
            self.data.row_mut(r).mapv_inplace(|x| x * factor);
        }
    }

    pub fn clear(&mut self) {
        for &r in &self.touched {
            self.data.row_mut(r).fill(0.0);
            self.mark[r] = false;
        }
        self.touched.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.touched.is_empty()
    }
}

/// Gradients for all backbone tables.
#[derive(Debug, Clone)]
pub struct BackboneGrads {
    pub users: RowGrad,
    pub items_source: RowGrad,
    pub items_target: RowGrad,
}

impl BackboneGrads {
    pub fn for_backbone(b: &Backbone) -> Self {
        Self {
            users: RowGrad::like(&b.users),
            items_source: RowGrad::like(&b.items_source),
            items_target: RowGrad::like(&b.items_target),
        }
    }

    pub fn table(&self, t: Table) -> &RowGrad {
        match t {
            Table::Users => &self.users,
            Table::ItemsSource => &self.items_source,
            Table::ItemsTarget => &self.items_target,
        }
    }

    pub fn clear(&mut self) {
        self.users.clear();
        self.items_source.clear();
        self.items_target.clear();
    }

    pub fn scale(&mut self, factor: f64) {
        self.users.scale(factor);
        self.items_source.scale(factor);
        self.items_target.scale(factor);
    }
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CDFA";
pub const SNAPSHOT_VERSION: u32 = 1;

/// On-disk embedding snapshot: the four tables in 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub user_emb_source: Array2<f32>,
    pub user_emb_target: Array2<f32>,
    pub item_emb_source: Array2<f32>,
    pub item_emb_target: Array2<f32>,
}

impl Snapshot {
    pub fn tables(&self) -> [&Array2<f32>; 4] {
        [
            &self.user_emb_source,
            &self.user_emb_target,
            &self.item_emb_source,
            &self.item_emb_target,
        ]
    }

    /// Little-endian: magic, version u32, then per table rows u64, cols u64
    /// and row-major f32 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        for t in self.tables() {
            out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
            for x in t.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut bytes, &mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(take::<4>(&mut bytes)?);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let mut tables = Vec::with_capacity(4);
        for _ in 0..4 {
            let rows = u64::from_le_bytes(take::<8>(&mut bytes)?) as usize;
            let cols = u64::from_le_bytes(take::<8>(&mut bytes)?) as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| Error::Snapshot("truncated table".into()))?;
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(f32::from_le_bytes(take::<4>(&mut bytes)?));
            }
            tables.push(Array2::from_shape_vec((rows, cols), values).expect("sized"));
        }
        if !bytes.is_empty() {
            return Err(Error::Snapshot("trailing bytes".into()));
        }
        let mut it = tables.into_iter();
        Ok(Snapshot {
            user_emb_source: it.next().unwrap(),
            user_emb_target: it.next().unwrap(),
            item_emb_source: it.next().unwrap(),
            item_emb_target: it.next().unwrap(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut buf = Vec::new();
        BufReader::new(file).read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

fn read_exact(bytes: &mut &[u8], out: &mut [u8]) -> Result<()> {
    if bytes.len() < out.len() {
        return Err(Error::Snapshot("unexpected end of data".into()));
    }
    out.copy_from_slice(&bytes[..out.len()]);
    *bytes = &bytes[out.len()..];
    Ok(())
}

fn take<const N: usize>(bytes: &mut &[u8]) -> Result<[u8; N]> {
    let mut out = [0u8; N];
    read_exact(bytes, &mut out)?;
    Ok(out)
}
