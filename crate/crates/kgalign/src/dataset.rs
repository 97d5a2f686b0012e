//! Dataset ingestion and persistence.
//!
//! The on-disk layout follows the OpenEA convention: two triple files
//! (`rel_triples_1`, `rel_triples_2`) and a link file (`ent_links`), all
//! UTF-8 text with TAB-separated fields, one record per line. Split files
//! (`train_links`, `valid_links`, `test_links`) use the link format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::graph::{AlignmentSet, EntityId, GraphBuilder, KnowledgeGraph};
use crate::{seed, Error, Result};

pub const REL_TRIPLES_1: &str = "rel_triples_1";
pub const REL_TRIPLES_2: &str = "rel_triples_2";
pub const ENT_LINKS: &str = "ent_links";
pub const TRAIN_LINKS: &str = "train_links";
pub const VALID_LINKS: &str = "valid_links";
pub const TEST_LINKS: &str = "test_links";

/// Read one triple file into a graph. Duplicate lines are dropped and
/// counted on the returned graph.
pub fn load_triples(path: &Path) -> Result<KnowledgeGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut builder = GraphBuilder::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None) if !h.is_empty() && !t.is_empty() => {
                builder.triple(h, r, t);
            }
            _ => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    "expected exactly three TAB-separated fields",
                ));
            }
        }
    }
    Ok(builder.build())
}

/// Read a link file as label pairs.
pub fn load_links(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                pairs.push((a.to_owned(), b.to_owned()));
            }
            _ => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    "expected exactly two TAB-separated fields",
                ));
            }
        }
    }
    Ok(pairs)
}

fn resolve_links(
    path: &Path,
    labels: &[(String, String)],
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
) -> Result<Vec<(EntityId, EntityId)>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let e1 = g1.entity_id(a).ok_or_else(|| {
                Error::parse(path, i + 1, format!("unknown source entity label '{a}'"))
            })?;
            let e2 = g2.entity_id(b).ok_or_else(|| {
                Error::parse(path, i + 1, format!("unknown target entity label '{b}'"))
            })?;
            Ok((e1, e2))
        })
        .collect()
}

/// Deterministically shuffle `gold` and slice it into train/valid/test.
///
/// `fractions` are the (train, valid) shares; the remainder is the test set.
pub fn split_alignment(
    gold: &[(EntityId, EntityId)],
    fractions: (f64, f64),
    split_seed: u64,
) -> Result<AlignmentSet> {
    let (ft, fv) = fractions;
    if ft <= 0.0 || fv <= 0.0 || ft + fv >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "split fractions must be positive and sum below 1, got ({ft}, {fv})"
        )));
    }
    let mut pairs: Vec<_> = gold.to_vec();
    pairs.shuffle(&mut seed::rng(split_seed));
    let n = pairs.len();
    // ft + fv < 1 guarantees n_train + n_valid < n.
    let n_train = ((n as f64) * ft + 1e-9).floor() as usize;
    let n_valid = ((n as f64) * fv + 1e-9).floor() as usize;
    let test = pairs.split_off(n_train + n_valid);
    let valid = pairs.split_off(n_train);
    let set = AlignmentSet {
        train: pairs,
        valid,
        test,
    };
    set.validate()?;
    Ok(set)
}

/// Load an OpenEA-layout dataset and split its gold links.
///
/// The split is a seeded shuffle, so the same `split_seed` and fractions
/// always produce the same sets.
pub fn load_dataset(
    dir: &Path,
    fractions: (f64, f64),
    split_seed: u64,
) -> Result<(KnowledgeGraph, KnowledgeGraph, AlignmentSet)> {
    let g1 = load_triples(&dir.join(REL_TRIPLES_1))?;
    let g2 = load_triples(&dir.join(REL_TRIPLES_2))?;
    let links_path = dir.join(ENT_LINKS);
    let labels = load_links(&links_path)?;
    let gold = resolve_links(&links_path, &labels, &g1, &g2)?;
    if g1.duplicates_dropped > 0 || g2.duplicates_dropped > 0 {
        log::info!(
            "dropped {} + {} duplicate triples while loading {}",
            g1.duplicates_dropped,
            g2.duplicates_dropped,
            dir.display()
        );
    }
    let align = if gold.is_empty() {
        AlignmentSet::default()
    } else {
        split_alignment(&gold, fractions, split_seed)?
    };
    Ok((g1, g2, align))
}

/// Load split files written by [`write_split`], resolving labels to ids.
pub fn load_split(
    dir: &Path,
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
) -> Result<AlignmentSet> {
    let mut sets = Vec::with_capacity(3);
    for name in [TRAIN_LINKS, VALID_LINKS, TEST_LINKS] {
        let path = dir.join(name);
        let labels = load_links(&path)?;
        sets.push(resolve_links(&path, &labels, g1, g2)?);
    }
    let test = sets.pop().unwrap();
    let valid = sets.pop().unwrap();
    let train = sets.pop().unwrap();
    let set = AlignmentSet { train, valid, test };
    set.validate()?;
    Ok(set)
}

fn write_links(
    path: &Path,
    pairs: &[(EntityId, EntityId)],
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for &(a, b) in pairs {
        writeln!(w, "{}\t{}", g1.entity_label(a), g2.entity_label(b))
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Persist the three split files beside the dataset in `dir`.
pub fn write_split(
    dir: &Path,
    align: &AlignmentSet,
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
) -> Result<()> {
    write_links(&dir.join(TRAIN_LINKS), &align.train, g1, g2)?;
    write_links(&dir.join(VALID_LINKS), &align.valid, g1, g2)?;
    write_links(&dir.join(TEST_LINKS), &align.test, g1, g2)?;
    Ok(())
}

/// Write a graph back to the triple format, preserving triple order.
pub fn write_triples(path: &Path, g: &KnowledgeGraph) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in g.triples() {
        writeln!(
            w,
            "{}\t{}\t{}",
            g.entity_label(t.head),
            g.relation_label(t.relation),
            g.entity_label(t.tail)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Write the full gold link file (all splits concatenated in split order).
pub fn write_links_file(
    path: &Path,
    align: &AlignmentSet,
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for set in [&align.train, &align.valid, &align.test] {
        for &(a, b) in set {
            writeln!(w, "{}\t{}", g1.entity_label(a), g2.entity_label(b))
                .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, contents: &str) {
        fs::write(dir.join(name), contents).unwrap();
    }

    #[test]
    fn split_fractions_match_spec_counts() {
        let gold: Vec<_> = (0..100).map(|i| (EntityId(i), EntityId(i))).collect();
        let set = split_alignment(&gold, (0.3, 0.1), 7).unwrap();
        assert_eq!(set.train.len(), 30);
        assert_eq!(set.valid.len(), 10);
        assert_eq!(set.test.len(), 60);
    }

    #[test]
    fn split_is_deterministic() {
        let gold: Vec<_> = (0..57).map(|i| (EntityId(i), EntityId(56 - i))).collect();
        let a = split_alignment(&gold, (0.3, 0.1), 9).unwrap();
        let b = split_alignment(&gold, (0.3, 0.1), 9).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.valid, b.valid);
        assert_eq!(a.test, b.test);
        let c = split_alignment(&gold, (0.3, 0.1), 10).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn empty_links_file_gives_empty_sets() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), REL_TRIPLES_1, "a\tr\tb\n");
        write(dir.path(), REL_TRIPLES_2, "x\tp\ty\n");
        write(dir.path(), ENT_LINKS, "");
        let (_, _, align) = load_dataset(dir.path(), (0.3, 0.1), 1).unwrap();
        assert_eq!(align.total(), 0);
    }

    #[test]
    fn duplicate_lines_are_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        let body = "a\tr\tb\nb\tr\tc\na\tr\tb\na\tr\tc\nb\tr\tc\n";
        // Independent count of distinct lines.
        let distinct: std::collections::HashSet<&str> =
            body.lines().filter(|l| !l.is_empty()).collect();
        write(dir.path(), REL_TRIPLES_1, body);
        let g = load_triples(&dir.path().join(REL_TRIPLES_1)).unwrap();
        assert_eq!(g.triples().len(), distinct.len());
        assert_eq!(g.duplicates_dropped, 5 - distinct.len());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), REL_TRIPLES_1, "a\tr\tb\nbad line\n");
        let err = load_triples(&dir.path().join(REL_TRIPLES_1)).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_link_label_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), REL_TRIPLES_1, "a\tr\tb\n");
        write(dir.path(), REL_TRIPLES_2, "x\tp\ty\n");
        write(dir.path(), ENT_LINKS, "a\tx\nmissing\ty\n");
        let err = load_dataset(dir.path(), (0.3, 0.1), 1).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path(), (0.3, 0.1), 1),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn triple_round_trip_preserves_identifier_structure() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), REL_TRIPLES_1, "b\tr\ta\na\tr\tc\nc\ts\tb\n");
        let g = load_triples(&dir.path().join(REL_TRIPLES_1)).unwrap();
        let out = dir.path().join("rewritten");
        write_triples(&out, &g).unwrap();
        let g2 = load_triples(&out).unwrap();
        assert_eq!(g.triples(), g2.triples());
        assert_eq!(g.entity_count(), g2.entity_count());
        for i in 0..g.entity_count() {
            assert_eq!(
                g.entity_label(EntityId(i as u32)),
                g2.entity_label(EntityId(i as u32))
            );
        }
    }
}
