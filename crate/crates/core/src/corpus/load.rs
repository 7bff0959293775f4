use std::fs;
use std::path::Path;

use super::{IdMap, Interaction, Interactions};
use crate::error::{Error, Result};

/// Column layout of a delimited interaction file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub delimiter: char,
    pub user: usize,
    pub item: usize,
    pub timestamp: usize,
    pub has_header: bool,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            delimiter: '\t',
            user: 0,
            item: 1,
            timestamp: 2,
            has_header: false,
        }
    }
}

impl ColumnSpec {
    /// Parses a column order such as `user,item,timestamp` or `user,item,rating,timestamp`.
    /// Unrecognised column names are skipped.
    pub fn from_order(order: &str, delimiter: char, has_header: bool) -> Result<Self> {
        let cols: Vec<&str> = order.split(',').map(str::trim).collect();
        let find = |name: &str| {
            cols.iter()
                .position(|c| *c == name)
                .ok_or_else(|| Error::config("columns", format!("missing `{name}` column")))
        };
        Ok(ColumnSpec {
            delimiter,
            user: find("user")?,
            item: find("item")?,
            timestamp: find("timestamp")?,
            has_header,
        })
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_timestamp(field: &str) -> Option<i64> {
    if let Ok(t) = field.parse::<i64>() {
        return Some(t);
    }
    let f: f64 = field.parse().ok()?;
    (f.is_finite() && f.fract() == 0.0).then_some(f as i64)
}

/// Reads user/item/timestamp rows, interning raw IDs in order of first appearance.
pub fn load_interactions(path: &Path, spec: &ColumnSpec) -> Result<Interactions> {
    let text = read(path)?;
    let mut out = Interactions::default();
    let needed = spec.user.max(spec.item).max(spec.timestamp) + 1;

    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && spec.has_header {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(spec.delimiter).collect();
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        if fields.len() < needed {
            return Err(parse_err(format!(
                "expected at least {needed} fields, found {}",
                fields.len()
            )));
        }
        let ts_field = fields[spec.timestamp].trim();
        let timestamp = parse_timestamp(ts_field)
            .ok_or_else(|| parse_err(format!("bad timestamp `{ts_field}`")))?;
        let user = out.users.intern(fields[spec.user].trim());
        let item = out.items.intern(fields[spec.item].trim());
        out.records.push(Interaction {
            user,
            item,
            timestamp,
        });
    }

    if out.records.is_empty() {
        return Err(Error::Data("no interactions".into()));
    }
    Ok(out)
}

/// Reads `item<TAB>text` lines and aligns them to `items`; items without a line get "".
/// Lines for unknown items are ignored.
pub fn load_item_text(path: &Path, items: &IdMap) -> Result<Vec<String>> {
    let text = read(path)?;
    let mut out = vec![String::new(); items.len()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (id, body) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: "expected `item<TAB>text`".into(),
        })?;
        if let Some(i) = items.get(id.trim()) {
            out[i] = body.to_string();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataRow {
    pub item: String,
    pub attribute: String,
    pub value: String,
}

/// Reads `item<TAB>attribute_name<TAB>value` rows.
pub fn load_metadata(path: &Path) -> Result<Vec<MetadataRow>> {
    read_three_columns(path).map(|rows| {
        rows.into_iter()
            .map(|[item, attribute, value]| MetadataRow {
                item,
                attribute,
                value,
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceRow {
    pub head: String,
    pub tail: String,
    pub relation: String,
}

/// Reads `item<TAB>item<TAB>relation_name` rows.
pub fn load_cooccurrence(path: &Path) -> Result<Vec<CooccurrenceRow>> {
    read_three_columns(path).map(|rows| {
        rows.into_iter()
            .map(|[head, tail, relation]| CooccurrenceRow {
                head,
                tail,
                relation,
            })
            .collect()
    })
}

fn read_three_columns(path: &Path) -> Result<Vec<[String; 3]>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => rows.push([
                a.trim().to_string(),
                b.trim().to_string(),
                c.trim().to_string(),
            ]),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: "expected three tab-separated fields".into(),
                })
            }
        }
    }
    Ok(rows)
}
