//! Terms, terminologies and taxonomies, plus their on-disk formats.
//!
//! Every surface string is canonicalized on entry: lowercased, underscores
//! mapped to spaces and runs of whitespace collapsed to a single space. Two
//! terms are equal iff their canonical forms are equal.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase, map `_` to a space and collapse whitespace runs.
///
/// Idempotent: `canonicalize(&canonicalize(s)) == canonicalize(s)`.
pub fn canonicalize(surface: &str) -> String {
    let lowered = surface.to_lowercase().replace('_', " ");
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// A domain concept, identified by its canonical surface string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Term(String);

impl Term {
    pub fn new(surface: &str) -> Result<Self> {
        let canonical = canonicalize(surface);
        if canonical.is_empty() {
            return Err(Error::EmptyTerm);
        }
        Ok(Term(canonical))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Term::new(s)
    }
}

impl TryFrom<String> for Term {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Term::new(&s)
    }
}

impl From<Term> for String {
    fn from(term: Term) -> String {
        term.0
    }
}

impl AsRef<str> for Term {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// An insertion-ordered set of distinct terms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Terminology {
    terms: IndexSet<Term>,
}

impl Terminology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a term, returning `false` if it was already present.
    pub fn insert(&mut self, term: Term) -> bool {
        self.terms.insert(term)
    }

    pub fn contains(&self, term: &Term) -> bool {
        self.terms.contains(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &Term> + DoubleEndedIterator {
        self.terms.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Term> {
        self.terms.get_index(index)
    }
}

impl FromIterator<Term> for Terminology {
    fn from_iter<I: IntoIterator<Item = Term>>(iter: I) -> Self {
        Terminology {
            terms: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Terminology {
    type Item = &'a Term;
    type IntoIter = indexmap::set::Iter<'a, Term>;

    fn into_iter(self) -> Self::IntoIter {
        self.terms.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermFormat {
    /// One term per non-blank line.
    #[default]
    Plain,
    /// `id<TAB>term` rows; the term is the second column.
    TsvIdTerm,
}

impl FromStr for TermFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "plain" => Ok(TermFormat::Plain),
            "tsv-id-term" => Ok(TermFormat::TsvIdTerm),
            other => Err(format!(
                "unknown terminology format `{other}` (expected plain or tsv-id-term)"
            )),
        }
    }
}

/// A loaded terminology together with the number of lines that collapsed
/// onto an earlier term.
#[derive(Debug, Clone)]
pub struct TerminologyLoad {
    pub terminology: Terminology,
    pub duplicates: usize,
}

pub fn load_terminology(path: impl AsRef<Path>, format: TermFormat) -> Result<TerminologyLoad> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut terminology = Terminology::new();
    let mut duplicates = 0;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let surface = match format {
            TermFormat::Plain => line,
            TermFormat::TsvIdTerm => {
                let columns: Vec<&str> = line.split('\t').collect();
                if columns.len() < 2 {
                    return Err(Error::MalformedRow {
                        path: path.to_path_buf(),
                        row: idx + 1,
                        columns: columns.len(),
                        expected: "2",
                    });
                }
                columns[1]
            }
        };
        let Ok(term) = Term::new(surface) else {
            continue;
        };
        if !terminology.insert(term) {
            duplicates += 1;
        }
    }
    if terminology.is_empty() {
        return Err(Error::EmptyTerminology {
            path: path.to_path_buf(),
        });
    }
    if duplicates > 0 {
        log::info!(
            "{}: collapsed {duplicates} duplicate term(s)",
            path.display()
        );
    }
    Ok(TerminologyLoad {
        terminology,
        duplicates,
    })
}

/// A directed is-a edge. Ordered by hyponym, then hypernym.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaxonomyEdge {
    hyponym: Term,
    hypernym: Term,
}

impl TaxonomyEdge {
    pub fn new(hyponym: Term, hypernym: Term) -> Result<Self> {
        if hyponym == hypernym {
            return Err(Error::SelfLoop(hyponym.0));
        }
        Ok(TaxonomyEdge { hyponym, hypernym })
    }

    pub fn hyponym(&self) -> &Term {
        &self.hyponym
    }

    pub fn hypernym(&self) -> &Term {
        &self.hypernym
    }
}

/// A set of is-a edges. Vertices are derived from edge endpoints.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    edges: BTreeSet<TaxonomyEdge>,
}

impl Taxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an edge, returning `false` if it was already present.
    pub fn insert(&mut self, edge: TaxonomyEdge) -> bool {
        self.edges.insert(edge)
    }

    pub fn contains(&self, edge: &TaxonomyEdge) -> bool {
        self.edges.contains(edge)
    }

    /// Edges in (hyponym, hypernym) order.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = &TaxonomyEdge> + Clone {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn vertices(&self) -> BTreeSet<&Term> {
        self.edges
            .iter()
            .flat_map(|e| [&e.hyponym, &e.hypernym])
            .collect()
    }

    /// Distinct hyponyms, in sorted order.
    pub fn hyponyms(&self) -> BTreeSet<&Term> {
        self.edges.iter().map(|e| &e.hyponym).collect()
    }

    /// Gold hypernyms of `term`.
    pub fn hypernyms_of<'a>(&'a self, term: &'a Term) -> impl Iterator<Item = &'a Term> + 'a {
        self.edges
            .iter()
            .filter(move |e| &e.hyponym == term)
            .map(|e| &e.hypernym)
    }

    pub fn intersection_count(&self, other: &Taxonomy) -> usize {
        let (small, large) = if self.edges.len() <= other.edges.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.edges.iter().filter(|e| large.contains(e)).count()
    }

    pub fn retain(&mut self, keep: impl FnMut(&TaxonomyEdge) -> bool) {
        self.edges.retain(keep);
    }
}

impl FromIterator<TaxonomyEdge> for Taxonomy {
    fn from_iter<I: IntoIterator<Item = TaxonomyEdge>>(iter: I) -> Self {
        Taxonomy {
            edges: iter.into_iter().collect(),
        }
    }
}

impl Extend<TaxonomyEdge> for Taxonomy {
    fn extend<I: IntoIterator<Item = TaxonomyEdge>>(&mut self, iter: I) {
        self.edges.extend(iter);
    }
}

#[derive(Debug, Clone)]
pub struct TaxonomyLoad {
    pub taxonomy: Taxonomy,
    pub duplicates: usize,
}

/// Reads a tab-separated taxonomy. Rows carry `hyponym, hypernym` or
/// `id, hyponym, hypernym`; blank lines are skipped.
pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<TaxonomyLoad> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut taxonomy = Taxonomy::new();
    let mut duplicates = 0;
    let mut self_loops = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let columns: Vec<&str> = line.split('\t').collect();
        let (hypo, hyper) = match columns.as_slice() {
            [hypo, hyper] => (*hypo, *hyper),
            [_, hypo, hyper] => (*hypo, *hyper),
            _ => {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    row,
                    columns: columns.len(),
                    expected: "2 or 3",
                })
            }
        };
        let malformed = || Error::MalformedRow {
            path: path.to_path_buf(),
            row,
            columns: columns.len(),
            expected: "2 or 3 non-empty",
        };
        let hypo = Term::new(hypo).map_err(|_| malformed())?;
        let hyper = Term::new(hyper).map_err(|_| malformed())?;
        match TaxonomyEdge::new(hypo, hyper) {
            Ok(edge) => {
                if !taxonomy.insert(edge) {
                    duplicates += 1;
                }
            }
            Err(_) => self_loops.push(row),
        }
    }
    if !self_loops.is_empty() {
        return Err(Error::SelfLoopRows {
            path: path.to_path_buf(),
            rows: self_loops,
        });
    }
    if duplicates > 0 {
        log::info!(
            "{}: collapsed {duplicates} duplicate edge(s)",
            path.display()
        );
    }
    Ok(TaxonomyLoad {
        taxonomy,
        duplicates,
    })
}

/// Serializes edges as `hyponym<TAB>hypernym` lines, sorted.
pub fn taxonomy_to_tsv(taxonomy: &Taxonomy) -> String {
    let mut out = String::new();
    for edge in taxonomy.edges() {
        out.push_str(edge.hyponym.as_str());
        out.push('\t');
        out.push_str(edge.hypernym.as_str());
        out.push('\n');
    }
    out
}

pub fn write_taxonomy(taxonomy: &Taxonomy, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(taxonomy_to_tsv(taxonomy).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Term {
        Term::new(s).unwrap()
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(canonicalize("  Rainbow_Trout \t"), "rainbow trout");
        assert_eq!(canonicalize("a__b"), "a b");
        assert_eq!(canonicalize("a \n b"), "a b");
        assert!(Term::new(" _ ").is_err());
        assert_eq!(t("Physics"), t("physics"));
    }

    #[test]
    fn duplicate_terms_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "terms.txt", "Physics\nscience\nphysics\n\n");
        let loaded = load_terminology(&path, TermFormat::Plain).unwrap();
        let surfaces: Vec<&str> = loaded.terminology.iter().map(Term::as_str).collect();
        assert_eq!(surfaces, ["physics", "science"]);
        assert_eq!(loaded.duplicates, 1);
    }

    #[test]
    fn underscore_terms_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "terms.txt", "a_b\na b\n");
        let loaded = load_terminology(&path, TermFormat::Plain).unwrap();
        assert_eq!(loaded.terminology.len(), 1);
        assert_eq!(loaded.terminology.get(0).unwrap().as_str(), "a b");
    }

    #[test]
    fn tsv_id_term_reads_second_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "terms.tsv", "1\tfish\n2\tanimal\n");
        let loaded = load_terminology(&path, TermFormat::TsvIdTerm).unwrap();
        assert_eq!(loaded.terminology.len(), 2);

        let bad = write(&dir, "bad.tsv", "1\tfish\n2\n");
        match load_terminology(&bad, TermFormat::TsvIdTerm) {
            Err(Error::MalformedRow { row: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_terminology_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "empty.txt", "\n  \n");
        assert!(matches!(
            load_terminology(&path, TermFormat::Plain),
            Err(Error::EmptyTerminology { .. })
        ));
        assert!(matches!(
            load_terminology(dir.path().join("missing"), TermFormat::Plain),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn taxonomy_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "gold.tsv", "trout\tfish\nfish\tanimal\n");
        let tax = load_taxonomy(&path).unwrap().taxonomy;
        assert_eq!(tax.vertices().len(), 3);
        assert_eq!(tax.edge_count(), 2);
    }

    #[test]
    fn taxonomy_with_id_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "gold.taxo", "1\ttrout\tfish\n2\tfish\tanimal\n3\tTrout\tFish\n");
        let loaded = load_taxonomy(&path).unwrap();
        assert_eq!(loaded.taxonomy.edge_count(), 2);
        assert_eq!(loaded.duplicates, 1);
    }

    #[test]
    fn self_loop_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "gold.tsv", "fish\tfish\ntrout\tfish\nA\ta\n");
        match load_taxonomy(&path) {
            Err(Error::SelfLoopRows { rows, .. }) => assert_eq!(rows, vec![1, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "gold.tsv", "trout\tfish\njust-one\n");
        match load_taxonomy(&path) {
            Err(Error::MalformedRow { row, columns, .. }) => assert_eq!((row, columns), (2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_sorted_lines() {
        let dir = tempfile::tempdir().unwrap();
        let tax: Taxonomy = [("trout", "fish"), ("fish", "animal")]
            .into_iter()
            .map(|(a, b)| TaxonomyEdge::new(t(a), t(b)).unwrap())
            .collect();
        let path = dir.path().join("out.tsv");
        write_taxonomy(&tax, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "fish\tanimal\ntrout\tfish\n");

        let empty = dir.path().join("empty.tsv");
        write_taxonomy(&Taxonomy::new(), &empty).unwrap();
        assert_eq!(fs::read_to_string(&empty).unwrap(), "");
    }

    fn surface() -> impl Strategy<Value = String> {
        "[A-Za-z_ ]{0,4}[a-z][A-Za-z_ ]{0,4}"
    }

    proptest! {
        #[test]
        fn canonicalize_is_idempotent(s in "\\PC{0,20}") {
            let once = canonicalize(&s);
            prop_assert_eq!(canonicalize(&once), once);
        }

        #[test]
        fn write_then_load_is_identity(pairs in prop::collection::vec((surface(), surface()), 0..20)) {
            let tax: Taxonomy = pairs
                .iter()
                .filter_map(|(a, b)| TaxonomyEdge::new(t(a), t(b)).ok())
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("tax.tsv");
            write_taxonomy(&tax, &path).unwrap();
            let loaded = load_taxonomy(&path).unwrap().taxonomy;
            prop_assert!(loaded.vertices().len() <= 2 * loaded.edge_count());
            prop_assert_eq!(loaded, tax);
        }
    }
}
