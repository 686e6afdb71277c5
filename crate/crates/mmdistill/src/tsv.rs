//! Interaction lists: one `user<TAB>item` pair of non-negative integers per
//! line. Blank lines and lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{IoError, IoResult};

pub fn parse_interactions(text: &str, path: &Path) -> IoResult<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| IoError::Parse { path: path.into(), line: n + 1, message };
        let mut fields = line.split('\t');
        let (Some(u), Some(i), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected 'user<TAB>item', got {line:?}")));
        };
        let u = u.parse().map_err(|_| err(format!("bad user index {u:?}")))?;
        let i = i.parse().map_err(|_| err(format!("bad item index {i:?}")))?;
        out.push((u, i));
    }
    Ok(out)
}

pub fn load_interactions(path: &Path) -> IoResult<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_interactions(&text, path)
}

pub fn format_interactions(pairs: impl IntoIterator<Item = (usize, usize)>) -> String {
    let mut out = String::new();
    for (u, i) in pairs {
        writeln!(out, "{u}\t{i}").expect("writing to a String");
    }
    out
}

pub fn save_interactions(path: &Path, pairs: impl IntoIterator<Item = (usize, usize)>) -> IoResult<()> {
    std::fs::write(path, format_interactions(pairs)).map_err(|e| IoError::io(path, e))
}
