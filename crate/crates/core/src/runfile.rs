//! TREC-style run files: `query_id Q0 item_id rank score tag`, one line per
//! retrieved item.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Entry, ItemId, QueryId, RankedList};

pub type Run = BTreeMap<QueryId, RankedList>;

pub fn load_run_file(path: impl AsRef<Path>) -> Result<Run> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text, path)
}

/// Parses run text; `origin` only labels error messages.
pub fn parse_run(text: &str, origin: &Path) -> Result<Run> {
    let malformed = |line: usize, message: String| Error::Malformed {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut tag: Option<String> = None;
    let mut rows: BTreeMap<QueryId, Vec<(usize, Entry, usize)>> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(malformed(lineno, format!("expected 6 columns, found {}", cols.len())));
        }
        let query = QueryId::new(cols[0]).map_err(|e| malformed(lineno, e.to_string()))?;
        let item = ItemId::new(cols[2]).map_err(|e| malformed(lineno, e.to_string()))?;
        let rank: usize = cols[3]
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| malformed(lineno, format!("rank {:?} is not a positive integer", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| malformed(lineno, format!("score {:?} is not a finite number", cols[4])))?;
        match &tag {
            None => tag = Some(cols[5].to_string()),
            Some(t) if t != cols[5] => {
                return Err(Error::NonUniformTag {
                    first: t.clone(),
                    other: cols[5].to_string(),
                })
            }
            Some(_) => {}
        }
        rows.entry(query)
            .or_default()
            .push((rank, Entry { item, score: Some(score) }, lineno));
    }

    let tag = tag.unwrap_or_default();
    let mut run = Run::new();
    for (query, mut entries) in rows {
        entries.sort_by_key(|(rank, _, _)| *rank);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(malformed(
                    pair[1].2,
                    format!("rank {} repeated for query {query}", pair[1].0),
                ));
            }
        }
        let list = RankedList::new(tag.clone(), query.clone(), entries.into_iter().map(|(_, e, _)| e).collect())?;
        run.insert(query, list);
    }
    Ok(run)
}

/// Renders lists in query order. Unscored lists get a descending synthetic
/// score `n - rank + 1` so the file stays well-formed.
pub fn render_run<'a>(lists: impl IntoIterator<Item = &'a RankedList>) -> String {
    let mut out = String::new();
    for list in lists {
        let n = list.len();
        for (pos, e) in list.entries().iter().enumerate() {
            let rank = pos + 1;
            let score = e.score.unwrap_or((n - pos) as f64);
            let _ = writeln!(
                out,
                "{} Q0 {} {} {} {}",
                list.query(),
                e.item,
                rank,
                score,
                list.retriever_tag()
            );
        }
    }
    out
}

pub fn write_run_file(path: impl AsRef<Path>, run: &Run) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_run(run.values())).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn parse(text: &str) -> Result<Run> {
        parse_run(text, &PathBuf::from("test.run"))
    }

    #[test]
    fn single_line() {
        let run = parse("q1 Q0 vid7 1 0.91 vast\n").unwrap();
        let list = &run[&QueryId::new("q1").unwrap()];
        assert_eq!(list.retriever_tag(), "vast");
        assert_eq!(list.entries(), &[Entry { item: ItemId::new("vid7").unwrap(), score: Some(0.91) }]);
    }

    #[test]
    fn entries_sorted_by_rank_column() {
        let run = parse("q1 Q0 b 2 0.5 t\nq1 Q0 a 1 0.9 t\n").unwrap();
        let items: Vec<_> = run[&QueryId::new("q1").unwrap()].items().map(|i| i.to_string()).collect();
        assert_eq!(items, ["a", "b"]);
    }

    #[test]
    fn duplicate_item_rejected() {
        let err = parse("q1 Q0 vid7 1 0.9 a\nq1 Q0 vid7 3 0.5 a\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateItem { .. }), "{err}");
    }

    #[test]
    fn mixed_tags_rejected() {
        let err = parse("q1 Q0 a 1 0.9 x\nq1 Q0 b 2 0.5 y\n").unwrap_err();
        assert!(matches!(err, Error::NonUniformTag { .. }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("q1 Q0 a 1 0.9 x\n\nq1 Q0 b two 0.5 x\n").unwrap_err();
        match err {
            Error::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        assert!(parse("q1 Q0 a 1 0.9\n").is_err());
        assert!(parse("q1 Q0 a 0 0.9 x\n").is_err());
        assert!(parse("q1 Q0 a 1 NaN x\n").is_err());
        assert!(parse("q1 Q0 a 1 0.9 x\nq1 Q0 b 1 0.8 x\n").is_err());
    }

    #[test]
    fn unscored_lists_render_descending_scores() {
        let q = QueryId::new("q").unwrap();
        let items = ["a", "b"].iter().map(|s| ItemId::new(*s).unwrap()).collect();
        let list = RankedList::from_items("vic", q, items).unwrap();
        assert_eq!(render_run([&list]), "q Q0 a 1 2 vic\nq Q0 b 2 1 vic\n");
    }
}
