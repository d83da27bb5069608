use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Group, Pair};
use crate::error::{Error, Result};

/// Deduplicated interactions with the raw identifiers of each dense index.
#[derive(Debug, Clone, PartialEq)]
pub struct Interactions {
    pub pairs: Vec<Pair>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attributes {
    pub groups: BTreeMap<String, Group>,
    /// Raw attribute value behind `g0` and `g1`.
    pub labels: [String; 2],
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_tsv(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::NoInteractions(path.to_path_buf())),
    };
    let header = header.trim_end_matches('\r').split('\t').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        rows.push((idx + 1, line.split('\t').map(|s| s.to_string()).collect()));
    }
    Ok(Table { header, rows })
}

fn column(table: &Table, name: &str, path: &Path) -> Result<usize> {
    table.header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("missing column `{name}`"),
    })
}

fn field<'a>(row: &'a [String], col: usize, name: &str, line: usize, path: &Path) -> Result<&'a str> {
    match row.get(col).map(|s| s.trim()) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("missing `{name}` field"),
        }),
    }
}

/// Reads a `user_id`/`item_id` TSV. Extra columns are ignored and repeated
/// pairs dropped. With `id_remap` the raw ids are densified in first-seen
/// order; without it they must already be non-negative integers.
pub fn load_interactions(path: &Path, id_remap: bool) -> Result<Interactions> {
    let table = read_tsv(path)?;
    let ucol = column(&table, "user_id", path)?;
    let icol = column(&table, "item_id", path)?;

    let mut users: Densifier = Densifier::default();
    let mut items: Densifier = Densifier::default();
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (line, row) in &table.rows {
        let u = field(row, ucol, "user_id", *line, path)?;
        let i = field(row, icol, "item_id", *line, path)?;
        let pair = if id_remap {
            (users.index(u), items.index(i))
        } else {
            (parse_index(u, *line, path)?, parse_index(i, *line, path)?)
        };
        if seen.insert(pair) {
            pairs.push(pair);
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoInteractions(path.to_path_buf()));
    }
    let (user_ids, item_ids) = if id_remap {
        (users.ids, items.ids)
    } else {
        let nu = pairs.iter().map(|p| p.0).max().unwrap_or(0) + 1;
        let ni = pairs.iter().map(|p| p.1).max().unwrap_or(0) + 1;
        ((0..nu).map(|i| i.to_string()).collect(), (0..ni).map(|i| i.to_string()).collect())
    };
    Ok(Interactions {
        pairs,
        user_ids,
        item_ids,
    })
}

fn parse_index(raw: &str, line: usize, path: &Path) -> Result<usize> {
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("`{raw}` is not a dense integer id"),
    })
}

#[derive(Default)]
struct Densifier {
    index: HashMap<String, usize>,
    ids: Vec<String>,
}

impl Densifier {
    fn index(&mut self, raw: &str) -> usize {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(raw.to_string(), i);
        self.ids.push(raw.to_string());
        i
    }
}

/// Writes pairs with their raw ids, in the given order.
pub fn write_interactions(path: &Path, pairs: &[Pair], user_ids: &[String], item_ids: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "user_id\titem_id")?;
        for &(u, i) in pairs {
            writeln!(w, "{}\t{}", user_ids[u], item_ids[i])?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

/// Reads a `user_id`/`attribute` TSV. The attribute must take exactly two
/// values; the lexicographically smaller one becomes `g0`.
pub fn load_attributes(path: &Path) -> Result<Attributes> {
    let table = read_tsv(path)?;
    let ucol = column(&table, "user_id", path)?;
    let acol = column(&table, "attribute", path)?;

    let mut raw: BTreeMap<String, String> = BTreeMap::new();
    for (line, row) in &table.rows {
        let u = field(row, ucol, "user_id", *line, path)?;
        let a = field(row, acol, "attribute", *line, path)?;
        if let Some(prev) = raw.get(u) {
            if prev != a {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: *line,
                    msg: format!("user `{u}` listed with conflicting attributes `{prev}` and `{a}`"),
                });
            }
        } else {
            raw.insert(u.to_string(), a.to_string());
        }
    }
    let values: BTreeSet<&String> = raw.values().collect();
    if values.len() != 2 {
        return Err(Error::Data(format!(
            "{}: attribute must take exactly 2 distinct values, found {}",
            path.display(),
            values.len()
        )));
    }
    let mut it = values.into_iter();
    let labels = [it.next().unwrap().clone(), it.next().unwrap().clone()];
    let groups = raw
        .iter()
        .map(|(u, a)| (u.clone(), if *a == labels[0] { Group::G0 } else { Group::G1 }))
        .collect();
    Ok(Attributes { groups, labels })
}

pub fn write_attributes(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "user_id\tattribute")?;
        for (u, a) in rows {
            writeln!(w, "{u}\t{a}")?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn dedups_and_densifies_first_seen() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "i.tsv", "user_id\titem_id\nu1\ti1\nu1\ti1\nu2\ti3\n");
        let got = load_interactions(&p, true).unwrap();
        assert_eq!(got.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(got.user_ids, vec!["u1", "u2"]);
        assert_eq!(got.item_ids, vec!["i1", "i3"]);
    }

    #[test]
    fn empty_body_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "i.tsv", "user_id\titem_id\n");
        let err = load_interactions(&p, true).unwrap_err();
        assert!(err.to_string().contains("no interactions"), "{err}");
    }

    #[test]
    fn extra_columns_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let body = "timestamp\tuser_id\trating\titem_id\n100\ta\t5\tx\n101\tb\t3\ty\n102\ta\t1\ty\n";
        let p = write(&dir, "i.tsv", body);
        let got = load_interactions(&p, true).unwrap();
        // manual parse of the same rows
        let expected: Vec<(usize, usize)> = vec![(0, 0), (1, 1), (0, 1)];
        assert_eq!(got.pairs, expected);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "i.tsv", "user_id\titem_id\n1\t2\n3\n");
        match load_interactions(&p, false).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let p = write(&dir, "j.tsv", "user_id\titem_id\n1\tx\n");
        assert!(matches!(load_interactions(&p, false), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn attributes_lexicographic_groups() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "user_id\tattribute\nb\tM\na\tF\n");
        let attrs = load_attributes(&p).unwrap();
        assert_eq!(attrs.groups["a"], Group::G0);
        assert_eq!(attrs.groups["b"], Group::G1);
        assert_eq!(attrs.labels, ["F".to_string(), "M".to_string()]);
    }

    #[test]
    fn attribute_conflict_and_cardinality_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.tsv", "user_id\tattribute\na\tF\na\tM\n");
        assert!(load_attributes(&p).unwrap_err().to_string().contains("conflicting"));

        let mut body = String::from("user_id\tattribute\n");
        for u in 0..100 {
            body.push_str(&format!("u{u}\t{}\n", ["x", "y", "z"][u % 3]));
        }
        let p = write(&dir, "b.tsv", &body);
        assert!(load_attributes(&p).unwrap_err().to_string().contains("exactly 2"));

        let p = write(&dir, "c.tsv", "user_id\tattribute\na\tF\nb\tF\n");
        assert!(load_attributes(&p).is_err());
    }

    proptest! {
        #[test]
        fn write_then_load_is_identity(raw in proptest::collection::btree_set((0usize..20, 0usize..30), 1..60)) {
            let pairs: Vec<Pair> = raw.into_iter().collect();
            let nu = pairs.iter().map(|p| p.0).max().unwrap() + 1;
            let ni = pairs.iter().map(|p| p.1).max().unwrap() + 1;
            let uids: Vec<String> = (0..nu).map(|i| i.to_string()).collect();
            let iids: Vec<String> = (0..ni).map(|i| i.to_string()).collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.tsv");
            write_interactions(&p, &pairs, &uids, &iids).unwrap();
            let back = load_interactions(&p, false).unwrap();
            prop_assert_eq!(back.pairs, pairs);
            prop_assert_eq!(back.user_ids, uids);
            prop_assert_eq!(back.item_ids, iids);
        }
    }
}
