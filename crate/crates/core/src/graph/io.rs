//! Line-oriented text format for graphs.
//!
//! ```text
//! GRAPH v1
//! N <num_nodes> D <num_features> C <num_classes>
//! FEATURES
//! <N lines of D numbers>
//! LABELS
//! <N lines, one integer each>
//! EDGES <M>
//! <M lines "u v">
//! MASKS
//! <N lines: train | val | test | none>
//! ```
//!
//! `#` starts a comment. Condensed graphs add a `CONDENSED client <id>
//! ratio <r>` line after the version line and store weighted edges
//! `u v w` with `u <= v`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EdgeCleanup, Graph, Split};
use crate::error::GraphError;
use crate::tensor::Tensor;

/// Warnings collected while loading a graph file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_self_loops: usize,
    pub dropped_duplicates: usize,
}

/// A condensed subgraph as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedFile {
    pub client: usize,
    pub ratio: f64,
    pub num_classes: usize,
    pub features: Tensor,
    pub labels: Vec<usize>,
    /// Upper-triangular entries (including the diagonal) of the
    /// thresholded adjacency.
    pub edges: Vec<(usize, usize, f64)>,
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self {
            inner: it.peekable(),
            last_line: 0,
        }
    }

    fn next(&mut self, expecting: &str) -> Result<(usize, &'a str), GraphError> {
        match self.inner.next() {
            Some((n, l)) => {
                self.last_line = n;
                Ok((n, l))
            }
            None => Err(err(self.last_line + 1, format!("unexpected end of file, expected {expecting}"))),
        }
    }

    fn peek(&mut self) -> Option<&(usize, &'a str)> {
        self.inner.peek()
    }
}

fn err(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T, GraphError> {
    tok.parse()
        .map_err(|_| err(line, format!("invalid {what} '{tok}'")))
}

fn expect_keyword(lines: &mut Lines<'_>, keyword: &str, section: &str) -> Result<Vec<String>, GraphError> {
    let (n, l) = lines.next(keyword)?;
    let mut toks = l.split_whitespace();
    if toks.next() != Some(keyword) {
        return Err(err(
            n,
            format!("expected {keyword}, found '{l}' (section {section} length disagrees with header)"),
        ));
    }
    Ok(toks.map(str::to_string).collect())
}

struct Document {
    condensed: Option<(usize, f64)>,
    num_classes: usize,
    features: Tensor,
    labels: Vec<usize>,
    edges: Vec<(usize, usize, f64, usize)>,
    splits: Vec<Split>,
}

fn parse_document(text: &str) -> Result<Document, GraphError> {
    let mut lines = Lines::new(text);
    let (n0, first) = lines.next("GRAPH v1")?;
    if first.split_whitespace().collect::<Vec<_>>() != ["GRAPH", "v1"] {
        return Err(err(n0, format!("malformed header '{first}', expected 'GRAPH v1'")));
    }

    let mut condensed = None;
    if let Some(&(n, l)) = lines.peek() {
        if l.starts_with("CONDENSED") {
            lines.next("CONDENSED")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 5 || toks[1] != "client" || toks[3] != "ratio" {
                return Err(err(n, format!("malformed condensed header '{l}'")));
            }
            condensed = Some((parse_num(n, toks[2], "client id")?, parse_num(n, toks[4], "ratio")?));
        }
    }

    let (nh, header) = lines.next("N <n> D <d> C <c>")?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 6 || toks[0] != "N" || toks[2] != "D" || toks[4] != "C" {
        return Err(err(nh, format!("malformed header '{header}', expected 'N <n> D <d> C <c>'")));
    }
    let n: usize = parse_num(nh, toks[1], "node count")?;
    let d: usize = parse_num(nh, toks[3], "feature count")?;
    let c: usize = parse_num(nh, toks[5], "class count")?;

    expect_keyword(&mut lines, "FEATURES", "header")?;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let (ln, l) = lines.next("feature row")?;
        let row: Vec<&str> = l.split_whitespace().collect();
        if row.len() != d {
            return Err(err(ln, format!("expected {d} features, found {} (FEATURES section length disagrees with header)", row.len())));
        }
        for tok in row {
            data.push(parse_num::<f64>(ln, tok, "feature")?);
        }
    }
    let features = Tensor::new(n, d, data).map_err(|e| err(nh, e.to_string()))?;

    expect_keyword(&mut lines, "LABELS", "FEATURES")?;
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = lines.next("label")?;
        let y: usize = parse_num(ln, l, "label")?;
        if y >= c {
            return Err(err(ln, format!("label {y} out of range for {c} classes")));
        }
        labels.push(y);
    }

    let rest = expect_keyword(&mut lines, "EDGES", "LABELS")?;
    let en = lines.last_line;
    if rest.len() != 1 {
        return Err(err(en, "expected 'EDGES <M>'"));
    }
    let m: usize = parse_num(en, &rest[0], "edge count")?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, l) = lines.next("edge")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let want = if condensed.is_some() { 3 } else { 2 };
        if toks.len() != want {
            return Err(err(ln, format!("expected {want} fields per edge (EDGES section length disagrees with header)")));
        }
        let u: usize = parse_num(ln, toks[0], "node id")?;
        let v: usize = parse_num(ln, toks[1], "node id")?;
        if u >= n || v >= n {
            return Err(err(ln, format!("edge ({u}, {v}) index out of range for {n} nodes")));
        }
        let w = if want == 3 { parse_num(ln, toks[2], "weight")? } else { 1.0 };
        edges.push((u, v, w, ln));
    }

    expect_keyword(&mut lines, "MASKS", "EDGES")?;
    let mut splits = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = lines.next("mask")?;
        let s = Split::parse(l).ok_or_else(|| err(ln, format!("unknown mask '{l}'")))?;
        splits.push(s);
    }
    if let Some(&(ln, l)) = lines.peek() {
        return Err(err(ln, format!("trailing content '{l}' (MASKS section length disagrees with header)")));
    }

    Ok(Document {
        condensed,
        num_classes: c,
        features,
        labels,
        edges,
        splits,
    })
}

/// Parses a plain graph document.
pub fn parse_graph(text: &str) -> Result<(Graph, LoadReport), GraphError> {
    let doc = parse_document(text)?;
    if doc.condensed.is_some() {
        return Err(err(2, "condensed graph file; use read_condensed"));
    }
    let (graph, cleanup): (Graph, EdgeCleanup) = Graph::with_cleanup(
        doc.num_classes,
        doc.features,
        doc.labels,
        doc.edges.iter().map(|&(u, v, _, _)| (u, v)),
        doc.splits,
    )?;
    Ok((
        graph,
        LoadReport {
            dropped_self_loops: cleanup.self_loops,
            dropped_duplicates: cleanup.duplicates,
        },
    ))
}

pub fn load_graph_with_report(path: &Path) -> Result<(Graph, LoadReport), GraphError> {
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_graph(&text)
}

/// Loads a graph file, logging a warning for dropped edges.
pub fn load_graph(path: &Path) -> Result<Graph, GraphError> {
    let (g, report) = load_graph_with_report(path)?;
    if report.dropped_self_loops + report.dropped_duplicates > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            path.display(),
            report.dropped_self_loops,
            report.dropped_duplicates
        );
    }
    Ok(g)
}

fn write_body(
    out: &mut String,
    features: &Tensor,
    labels: &[usize],
    num_classes: usize,
    edge_lines: &[String],
    splits: impl Iterator<Item = Split>,
) {
    let _ = writeln!(out, "N {} D {} C {}", features.rows(), features.cols(), num_classes);
    out.push_str("FEATURES\n");
    for r in 0..features.rows() {
        let row: Vec<String> = features.row(r).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out.push_str("LABELS\n");
    for y in labels {
        let _ = writeln!(out, "{y}");
    }
    let _ = writeln!(out, "EDGES {}", edge_lines.len());
    for l in edge_lines {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str("MASKS\n");
    for s in splits {
        out.push_str(s.as_str());
        out.push('\n');
    }
}

/// Serializes a graph. Floats use Rust's shortest round-trip formatting,
/// so loading the output reproduces the graph exactly.
pub fn write_graph(g: &Graph) -> String {
    let mut out = String::from("GRAPH v1\n");
    let edges: Vec<String> = g.edges().iter().map(|(u, v)| format!("{u} {v}")).collect();
    write_body(
        &mut out,
        g.features(),
        g.labels(),
        g.num_classes(),
        &edges,
        g.splits().iter().copied(),
    );
    out
}

pub fn write_condensed(c: &CondensedFile) -> String {
    let mut out = String::from("GRAPH v1\n");
    let _ = writeln!(out, "CONDENSED client {} ratio {:?}", c.client, c.ratio);
    let edges: Vec<String> = c
        .edges
        .iter()
        .map(|(u, v, w)| format!("{u} {v} {w:?}"))
        .collect();
    write_body(
        &mut out,
        &c.features,
        &c.labels,
        c.num_classes,
        &edges,
        std::iter::repeat_n(Split::Train, c.labels.len()),
    );
    out
}

pub fn read_condensed(text: &str) -> Result<CondensedFile, GraphError> {
    let doc = parse_document(text)?;
    let (client, ratio) = doc
        .condensed
        .ok_or_else(|| err(2, "missing CONDENSED header line"))?;
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (u, v, w, ln) in doc.edges {
        if u > v {
            return Err(err(ln, format!("condensed edge ({u}, {v}) must have u <= v")));
        }
        edges.push((u, v, w));
    }
    Ok(CondensedFile {
        client,
        ratio,
        num_classes: doc.num_classes,
        features: doc.features,
        labels: doc.labels,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PATH3: &str = "\
GRAPH v1
# a three node path
N 3 D 2 C 2
FEATURES
1 0
0 1
1 1
LABELS
0
1
0
EDGES 2
0 1
1 2
MASKS
train
val
test
";

    #[test]
    fn path_fixture_loads() {
        let (g, report) = parse_graph(PATH3).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(report, LoadReport::default());
        assert_eq!(g.splits(), &[Split::Train, Split::Val, Split::Test]);
    }

    #[test]
    fn self_loop_dropped_with_warning_count() {
        let text = "GRAPH v1\nN 6 D 1 C 1\nFEATURES\n0\n0\n0\n0\n0\n0\nLABELS\n0\n0\n0\n0\n0\n0\n\
EDGES 2\n5 5\n0 1\nMASKS\nnone\nnone\nnone\nnone\nnone\nnone\n";
        let (g, report) = parse_graph(text).unwrap();
        assert_eq!(report.dropped_self_loops, 1);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn short_feature_section_rejected_with_line() {
        let text = PATH3.replace("1 1\nLABELS", "LABELS");
        let e = parse_graph(&text).unwrap_err();
        match e {
            GraphError::Parse { line, msg } => {
                assert_eq!(line, 7, "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edge_count_mismatch_rejected() {
        let text = PATH3.replace("EDGES 2", "EDGES 3");
        assert!(matches!(parse_graph(&text), Err(GraphError::Parse { .. })));
        let text = PATH3.replace("EDGES 2", "EDGES 1");
        assert!(matches!(parse_graph(&text), Err(GraphError::Parse { .. })));
    }

    #[test]
    fn out_of_range_index_rejected() {
        let text = PATH3.replace("1 2\nMASKS", "1 3\nMASKS");
        let e = parse_graph(&text).unwrap_err().to_string();
        assert!(e.contains("line 14"), "{e}");
    }

    #[test]
    fn malformed_header_rejected() {
        assert!(parse_graph(&PATH3.replace("GRAPH v1", "GRAPH v2")).is_err());
        assert!(parse_graph(&PATH3.replace("N 3 D 2 C 2", "N 3 D 2")).is_err());
    }

    #[test]
    fn bad_label_rejected() {
        assert!(parse_graph(&PATH3.replace("LABELS\n0\n1", "LABELS\n0\n7")).is_err());
    }

    #[test]
    fn write_then_parse_round_trips() {
        let (g, _) = parse_graph(PATH3).unwrap();
        let (back, _) = parse_graph(&write_graph(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn condensed_round_trip() {
        let c = CondensedFile {
            client: 4,
            ratio: 0.25,
            num_classes: 3,
            features: Tensor::from_rows(&[[0.1, -2.5], [1.0 / 3.0, 7.0]]),
            labels: vec![2, 0],
            edges: vec![(0, 0, 0.75), (0, 1, 0.5000001)],
        };
        let text = write_condensed(&c);
        assert!(text.contains("CONDENSED client 4 ratio 0.25"));
        assert_eq!(read_condensed(&text).unwrap(), c);
        assert!(parse_graph(&text).is_err());
    }
}
