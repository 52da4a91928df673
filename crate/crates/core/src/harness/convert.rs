//! Conversion of citation datasets in the plain `.content` / `.cites`
//! format: one node per content line (`id f_1 … f_d label`) and one
//! citation per cites line (`cited citing`).

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{stratified_split, write_graph, Graph, SplitFractions};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvertReport {
    pub nodes: usize,
    pub features: usize,
    pub classes: usize,
    /// Undirected edges after dropping self-loops and duplicates.
    pub edges: usize,
    /// Citation lines naming a paper absent from the content file.
    pub dangling_citations: usize,
    pub class_names: Vec<String>,
}

fn find_with_extension(dir: &Path, ext: &str) -> Result<PathBuf> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    found.sort();
    found.into_iter().next().ok_or_else(|| {
        Error::Invalid(format!("no .{ext} file in {}", dir.display()))
    })
}

/// Parses the two files' contents into a graph with a stratified split
/// drawn from `split_seed`.
pub fn parse_citation_dataset(
    content: &str,
    cites: &str,
    split_seed: u64,
) -> Result<(Graph, ConvertReport)> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<&str> = Vec::new();
    for (ln, line) in content.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(Error::Invalid(format!("content line {}: too few fields", ln + 1)));
        }
        let feats = fields[1..fields.len() - 1]
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("content line {}: bad value '{v}'", ln + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(Error::Invalid(format!(
                    "content line {}: {} features, expected {}",
                    ln + 1,
                    feats.len(),
                    first.len()
                )));
            }
        }
        if ids.insert(fields[0], rows.len()).is_some() {
            return Err(Error::Invalid(format!("content line {}: duplicate id {}", ln + 1, fields[0])));
        }
        rows.push(feats);
        raw_labels.push(fields[fields.len() - 1]);
    }
    if rows.is_empty() {
        return Err(Error::Invalid("content file has no nodes".into()));
    }
    let class_names: Vec<String> = raw_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| class_names.iter().position(|c| c == l).expect("collected above"))
        .collect();

    let mut edges = Vec::new();
    let mut dangling = 0;
    for line in cites.lines() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            continue;
        }
        match (ids.get(fields[0]), ids.get(fields[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => dangling += 1,
        }
    }

    let n = rows.len();
    let d = rows[0].len();
    let features = Tensor::new(n, d, rows.into_iter().flatten().collect())?;
    let mut split_rng = rng::stream(split_seed, "convert-split", &[]);
    let splits = stratified_split(&labels, class_names.len(), SplitFractions::default(), &mut split_rng);
    let g = Graph::new(class_names.len(), features, labels, edges, splits)?;
    let report = ConvertReport {
        nodes: n,
        features: d,
        classes: class_names.len(),
        edges: g.num_edges(),
        dangling_citations: dangling,
        class_names,
    };
    Ok((g, report))
}

/// Reads the `.content` and `.cites` files in `raw_dir` and writes the
/// graph text format to `out`.
pub fn convert_planetoid(raw_dir: &Path, out: &Path) -> Result<ConvertReport> {
    let content_path = find_with_extension(raw_dir, "content")?;
    let cites_path = find_with_extension(raw_dir, "cites")?;
    let content = fs::read_to_string(&content_path).map_err(|e| Error::io(&content_path, e))?;
    let cites = fs::read_to_string(&cites_path).map_err(|e| Error::io(&cites_path, e))?;
    let (g, report) = parse_citation_dataset(&content, &cites, 0)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(out, write_graph(&g)).map_err(|e| Error::io(out, e))?;
    log::info!(
        "N {} D {} C {} undirected edges {} ({} dangling citations dropped)",
        report.nodes,
        report.features,
        report.classes,
        report.edges,
        report.dangling_citations
    );
    Ok(report)
}
