//! Plain-text interchange formats.
//!
//! | file | line format |
//! |------|-------------|
//! | class list | `class_id<TAB>display name<TAB>seen\|unseen` |
//! | taxonomy | `parent_id<TAB>child_id` |
//! | word vectors | `token v1 ... vd` (space separated) |
//! | graph export | JSON header line, then `i<TAB>j<TAB>value` |
//! | classifiers, embeddings | `class_id<TAB>v1 ... vD` |
//! | features | `sample_id<TAB>class_id<TAB>v1 ... vD` |
//!
//! Blank lines and lines starting with `#` are skipped in every format.
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is exact.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    merge_graphs_with, ClassIndex, EmbeddingTable, GraphBundle, MergeRule, NormMode, TaxonomyEdge, WordVectors,
};
use crate::harness::EvalSet;
use crate::tensor::{DenseMatrix, SparseAdjacency};

/// Content lines of `text` with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::parse(path, 0, "file not found"),
        _ => Error::Io(e),
    })
}

fn parse_floats<'a>(
    path: &Path,
    line: usize,
    fields: impl Iterator<Item = &'a str>,
) -> Result<Vec<f64>> {
    fields
        .map(|f| {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, line, format!("`{f}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(path, line, format!("non-finite value `{f}`")))
            }
        })
        .collect()
}

fn join_floats(values: &[f64], sep: &str) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for l in lines {
        out.write_all(l.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- class list

/// Seen classes keep their file order and come first, then unseen ones.
pub fn parse_class_list(text: &str, path: &Path) -> Result<ClassIndex> {
    let mut seen = Vec::new();
    let mut unseen = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, line, "expected `class_id<TAB>name<TAB>seen|unseen`"));
        }
        let entry = (fields[0].trim().to_string(), fields[1].trim().to_string());
        if entry.0.is_empty() {
            return Err(Error::parse(path, line, "empty class id"));
        }
        match fields[2].trim() {
            "seen" => seen.push(entry),
            "unseen" => unseen.push(entry),
            other => return Err(Error::parse(path, line, format!("split must be seen or unseen, got `{other}`"))),
        }
    }
    ClassIndex::new(seen, unseen)
}

pub fn read_class_list(path: impl AsRef<Path>) -> Result<ClassIndex> {
    let path = path.as_ref();
    parse_class_list(&read_text(path)?, path)
}

pub fn write_class_list(path: impl AsRef<Path>, index: &ClassIndex) -> Result<()> {
    write_lines(
        path.as_ref(),
        (0..index.len()).map(|i| {
            let split = if index.is_seen(i) { "seen" } else { "unseen" };
            format!("{}\t{}\t{split}", index.id(i), index.name(i))
        }),
    )
}

// ------------------------------------------------------------------ taxonomy

pub fn parse_taxonomy(text: &str, path: &Path) -> Result<Vec<TaxonomyEdge>> {
    content_lines(text)
        .map(|(line, l)| {
            let mut it = l.split('\t');
            match (it.next(), it.next(), it.next()) {
                (Some(p), Some(c), None) if !p.trim().is_empty() && !c.trim().is_empty() => {
                    Ok(TaxonomyEdge::new(p.trim(), c.trim(), line))
                }
                _ => Err(Error::parse(path, line, "expected `parent_id<TAB>child_id`")),
            }
        })
        .collect()
}

pub fn read_taxonomy(path: impl AsRef<Path>) -> Result<Vec<TaxonomyEdge>> {
    let path = path.as_ref();
    parse_taxonomy(&read_text(path)?, path)
}

pub fn write_taxonomy(path: impl AsRef<Path>, edges: &[TaxonomyEdge]) -> Result<()> {
    write_lines(path.as_ref(), edges.iter().map(|e| format!("{}\t{}", e.parent, e.child)))
}

// -------------------------------------------------------------- word vectors

/// GloVe text format. The dimension is taken from the first entry.
pub fn parse_word_vectors(text: &str, path: &Path) -> Result<WordVectors> {
    let mut words: Option<WordVectors> = None;
    for (line, l) in content_lines(text) {
        let mut fields = l.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().ok_or_else(|| Error::parse(path, line, "missing token"))?;
        let values = parse_floats(path, line, fields)?;
        if values.is_empty() {
            return Err(Error::parse(path, line, format!("token `{token}` has no values")));
        }
        let table = words.get_or_insert_with(|| WordVectors::new(values.len()));
        if values.len() != table.dim() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} values, found {}", table.dim(), values.len()),
            ));
        }
        table.insert(token, values)?;
    }
    words.ok_or_else(|| Error::parse(path, 0, "no word vectors"))
}

pub fn read_word_vectors(path: impl AsRef<Path>) -> Result<WordVectors> {
    let path = path.as_ref();
    parse_word_vectors(&read_text(path)?, path)
}

/// Writes `(token, vector)` pairs in the given order.
pub fn write_word_vectors<'a>(path: impl AsRef<Path>, entries: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> Result<()> {
    write_lines(
        path.as_ref(),
        entries.into_iter().map(|(t, v)| format!("{t} {}", join_floats(v, " "))),
    )
}

// -------------------------------------------------------------- graph export

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphHeader {
    pub n: usize,
    pub norm_mode: NormMode,
    pub k: usize,
    pub alpha: f64,
}

impl GraphHeader {
    pub fn of(bundle: &GraphBundle) -> Self {
        Self {
            n: bundle.n(),
            norm_mode: bundle.norm_mode,
            k: bundle.k,
            alpha: bundle.alpha,
        }
    }
}

pub fn write_graph(path: impl AsRef<Path>, header: &GraphHeader, adj: &SparseAdjacency) -> Result<()> {
    let head = serde_json::to_string(header)?;
    write_lines(
        path.as_ref(),
        std::iter::once(head).chain(adj.triplets().map(|(i, j, v)| format!("{i}\t{j}\t{v}"))),
    )
}

pub fn parse_graph(text: &str, path: &Path) -> Result<(GraphHeader, SparseAdjacency)> {
    let mut lines = content_lines(text);
    let (_, head) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing JSON header"))?;
    let header: GraphHeader =
        serde_json::from_str(head).map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
    let mut entries = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, line, "expected `i<TAB>j<TAB>value`"));
        }
        let idx = |s: &str| -> Result<usize> {
            let i: usize = s.parse().map_err(|_| Error::parse(path, line, format!("`{s}` is not a node index")))?;
            if i >= header.n {
                return Err(Error::parse(path, line, format!("node {i} out of range for n={}", header.n)));
            }
            Ok(i)
        };
        let (i, j) = (idx(fields[0])?, idx(fields[1])?);
        let v = parse_floats(path, line, std::iter::once(fields[2]))?[0];
        entries.push((i, j, v));
    }
    Ok((header, SparseAdjacency::from_triplets(header.n, entries)?))
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<(GraphHeader, SparseAdjacency)> {
    let path = path.as_ref();
    parse_graph(&read_text(path)?, path)
}

// ------------------------------------------------- id-keyed matrices

/// Rows of `class_id<TAB>v1 ... vD`, returned in file order.
pub fn parse_id_rows(text: &str, path: &Path) -> Result<Vec<(usize, String, Vec<f64>)>> {
    let mut rows: Vec<(usize, String, Vec<f64>)> = Vec::new();
    for (line, l) in content_lines(text) {
        let (id, rest) = l
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line, "expected `class_id<TAB>v1 ... vD`"))?;
        let values = parse_floats(path, line, rest.split_whitespace())?;
        if let Some((_, _, first)) = rows.first() {
            if first.len() != values.len() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {} values, found {}", first.len(), values.len()),
                ));
            }
        }
        if values.is_empty() {
            return Err(Error::parse(path, line, "no values"));
        }
        rows.push((line, id.trim().to_string(), values));
    }
    Ok(rows)
}

/// Places id-keyed rows at their class positions. `wanted` lists the class
/// indices that must be present (exactly once); any other id is an error.
fn place_rows(
    path: &Path,
    rows: Vec<(usize, String, Vec<f64>)>,
    index: &ClassIndex,
    wanted: std::ops::Range<usize>,
) -> Result<DenseMatrix> {
    let dim = rows.first().map_or(0, |r| r.2.len());
    let mut out = DenseMatrix::zeros(wanted.len(), dim);
    let mut filled = HashSet::new();
    for (line, id, values) in rows {
        let pos = index
            .position(&id)
            .filter(|p| wanted.contains(p))
            .ok_or_else(|| Error::UnknownId { line, id: id.clone() })?;
        if !filled.insert(pos) {
            return Err(Error::parse(path, line, format!("class `{id}` listed twice")));
        }
        out.row_mut(pos - wanted.start).copy_from_slice(&values);
    }
    let missing: Vec<&str> = wanted.clone().filter(|p| !filled.contains(p)).map(|p| index.id(p)).collect();
    if !missing.is_empty() {
        return Err(Error::parse(path, 0, format!("missing rows for: {}", missing.join(", "))));
    }
    Ok(out)
}

/// Ground-truth classifiers: one row per seen class, any order. `D` is the
/// number of values per line.
pub fn read_classifiers(path: impl AsRef<Path>, index: &ClassIndex) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let rows = parse_id_rows(&read_text(path)?, path)?;
    place_rows(path, rows, index, index.seen())
}

/// One row per class (seen and unseen), any order, returned in index order.
pub fn read_class_rows(path: impl AsRef<Path>, index: &ClassIndex) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let rows = parse_id_rows(&read_text(path)?, path)?;
    place_rows(path, rows, index, 0..index.len())
}

/// Class embeddings: one row per class, any order.
pub fn read_embeddings(path: impl AsRef<Path>, index: ClassIndex) -> Result<EmbeddingTable> {
    let vectors = read_class_rows(path, &index)?;
    EmbeddingTable::new(index, vectors)
}

/// Writes `rows[i]` under `index.id(offset + i)`.
pub fn write_id_rows(path: impl AsRef<Path>, index: &ClassIndex, offset: usize, rows: &DenseMatrix) -> Result<()> {
    write_lines(
        path.as_ref(),
        (0..rows.rows()).map(|r| format!("{}\t{}", index.id(offset + r), join_floats(rows.row(r), " "))),
    )
}

// ------------------------------------------------------------------ features

pub fn parse_features(text: &str, path: &Path, index: &ClassIndex) -> Result<EvalSet> {
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (line, l) in content_lines(text) {
        let mut fields = l.splitn(3, '\t');
        let (Some(sample), Some(class), Some(rest)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, line, "expected `sample_id<TAB>class_id<TAB>v1 ... vD`"));
        };
        let class = class.trim();
        let label = index.position(class).ok_or_else(|| Error::UnknownId {
            line,
            id: class.to_string(),
        })?;
        let values = parse_floats(path, line, rest.split_whitespace())?;
        match dim {
            None if values.is_empty() => return Err(Error::parse(path, line, "no values")),
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(path, line, format!("expected {d} values, found {}", values.len())))
            }
            Some(_) => {}
        }
        ids.push(sample.trim().to_string());
        labels.push(label);
        data.extend(values);
    }
    let dim = dim.ok_or_else(|| Error::parse(path, 0, "no samples"))?;
    EvalSet::new(ids, DenseMatrix::from_vec(labels.len(), dim, data)?, labels)
}

pub fn read_features(path: impl AsRef<Path>, index: &ClassIndex) -> Result<EvalSet> {
    let path = path.as_ref();
    parse_features(&read_text(path)?, path, index)
}

pub fn write_features(path: impl AsRef<Path>, index: &ClassIndex, eval: &EvalSet) -> Result<()> {
    write_lines(
        path.as_ref(),
        (0..eval.len()).map(|i| {
            format!(
                "{}\t{}\t{}",
                eval.ids[i],
                index.id(eval.labels[i]),
                join_floats(eval.features.row(i), " ")
            )
        }),
    )
}

// ---------------------------------------------------------- graph directory

/// Summary written next to a graph export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n: usize,
    pub n_seen: usize,
    pub n_unseen: usize,
    /// Undirected edges, self-loops excluded.
    pub edges_a: usize,
    pub edges_b: usize,
    pub edges_c: usize,
    pub k: usize,
    pub alpha: f64,
    pub norm_mode: NormMode,
    pub merge_rule: MergeRule,
    /// Classes whose only neighbour in `C` is themselves.
    pub isolated: Vec<String>,
    pub warnings: Vec<String>,
}

impl GraphStats {
    pub fn of(bundle: &GraphBundle, index: &ClassIndex) -> Self {
        let isolated: Vec<String> = bundle.isolated_nodes().into_iter().map(|i| index.id(i).to_string()).collect();
        let mut warnings = Vec::new();
        if bundle.a.undirected_edge_count() == 0 {
            warnings.push("taxonomy has no edges; A holds self-loops only".to_string());
        }
        if !isolated.is_empty() {
            warnings.push(format!("{} isolated class(es): {}", isolated.len(), isolated.join(", ")));
        }
        Self {
            n: bundle.n(),
            n_seen: index.seen_count(),
            n_unseen: index.unseen_count(),
            edges_a: bundle.a.undirected_edge_count(),
            edges_b: bundle.b.undirected_edge_count(),
            edges_c: bundle.c.undirected_edge_count(),
            k: bundle.k,
            alpha: bundle.alpha,
            norm_mode: bundle.norm_mode,
            merge_rule: bundle.merge_rule,
            isolated,
            warnings,
        }
    }
}

/// File names inside a graph directory.
pub mod graph_dir {
    pub const A: &str = "A.tsv";
    pub const B: &str = "B.tsv";
    pub const C: &str = "C.tsv";
    pub const A_HAT: &str = "A_hat.tsv";
    pub const CLASSES: &str = "classes.tsv";
    pub const EMBEDDINGS: &str = "embeddings.tsv";
    pub const STATS: &str = "stats.json";
}

/// Writes the four graph exports, the class list, the class embeddings and
/// `stats.json` into `dir` (created if needed). Returns the stats.
pub fn write_graph_dir(dir: impl AsRef<Path>, bundle: &GraphBundle, table: &EmbeddingTable) -> Result<GraphStats> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let header = GraphHeader::of(bundle);
    write_graph(dir.join(graph_dir::A), &header, &bundle.a)?;
    write_graph(dir.join(graph_dir::B), &header, &bundle.b)?;
    write_graph(dir.join(graph_dir::C), &header, &bundle.c)?;
    write_graph(dir.join(graph_dir::A_HAT), &header, &bundle.a_hat)?;
    write_class_list(dir.join(graph_dir::CLASSES), &table.index)?;
    write_id_rows(dir.join(graph_dir::EMBEDDINGS), &table.index, 0, &table.vectors)?;
    let stats = GraphStats::of(bundle, &table.index);
    fs::write(dir.join(graph_dir::STATS), serde_json::to_string_pretty(&stats)? + "\n")?;
    Ok(stats)
}

/// Reads a directory written by [`write_graph_dir`]. `C` and `Â` are
/// checked against `A` and `B`.
pub fn read_graph_dir(dir: impl AsRef<Path>) -> Result<(GraphBundle, EmbeddingTable)> {
    let dir = dir.as_ref();
    let index = read_class_list(dir.join(graph_dir::CLASSES))?;
    let table = read_embeddings(dir.join(graph_dir::EMBEDDINGS), index)?;
    let (header, a) = read_graph(dir.join(graph_dir::A))?;
    let (_, b) = read_graph(dir.join(graph_dir::B))?;
    let c_path: PathBuf = dir.join(graph_dir::C);
    let (_, c) = read_graph(&c_path)?;
    if header.n != table.index.len() {
        return Err(Error::parse(
            dir.join(graph_dir::A),
            1,
            format!("graph has {} nodes, class list has {}", header.n, table.index.len()),
        ));
    }
    let merge_rule = [MergeRule::Binary, MergeRule::Sum]
        .into_iter()
        .find(|&rule| merge_graphs_with(&a, &b, rule).is_ok_and(|m| m == c))
        .ok_or_else(|| Error::parse(&c_path, 0, "C is neither the binary nor the summed merge of A and B"))?;
    let bundle = GraphBundle::assemble(a, b, header.k, header.alpha, header.norm_mode, merge_rule)?;
    let (_, a_hat) = read_graph(dir.join(graph_dir::A_HAT))?;
    if a_hat != bundle.a_hat {
        return Err(Error::parse(dir.join(graph_dir::A_HAT), 0, "does not match normalized C"));
    }
    Ok((bundle, table))
}
