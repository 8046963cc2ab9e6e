//! Dataset I/O, train/val/test splits, and embedding persistence.
//!
//! File formats are plain text so external datasets can be dropped in:
//! * edge list — one `u v` pair per line, whitespace-separated, undirected,
//!   0-indexed;
//! * features — CSV, row `i` holds node `i`'s values;
//! * labels — one integer per line;
//! * depth — one integer per line (ground-truth tree level);
//! * embedding — header `model=<poincare|lorentz|flat> kappa=<f64>
//!   dim=<int> n=<int>`, then `n` whitespace-separated coordinate rows.
//!   Coordinates are written as shortest round-trip decimals, so a
//!   save/load cycle is bitwise lossless.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::manifold::{on_manifold, project, Embedding, Model, Space};

/// Edge split for link prediction. Positive partitions are disjoint;
/// negatives are true non-edges, disjoint between val and test, with
/// `|val_neg| = |val_pos|` and `|test_neg| = |test_pos|`.
#[derive(Debug, Clone)]
pub struct LinkSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub ratios: (f64, f64, f64),
}

/// Node split for classification; masks are disjoint.
#[derive(Debug, Clone)]
pub struct NodeSplit {
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl NodeSplit {
    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter_map(|(i, &m)| if m { Some(i) } else { None }).collect()
    }
}

/// Node split scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeScheme {
    /// Shuffle nodes, take fractions.
    Ratio { train: f64, val: f64, test: f64 },
    /// Fixed count of labeled examples per class for training; the rest is
    /// split evenly between validation and test.
    PerClass { count: usize },
}

fn parse_line_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line: line + 1, msg: msg.into() }
}

fn read_edge_file(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let u: usize = it
            .next()
            .ok_or_else(|| parse_line_err(i, "missing source node"))?
            .parse()
            .map_err(|e| parse_line_err(i, format!("bad node id: {e}")))?;
        let v: usize = it
            .next()
            .ok_or_else(|| parse_line_err(i, "missing target node"))?
            .parse()
            .map_err(|e| parse_line_err(i, format!("bad node id: {e}")))?;
        if it.next().is_some() {
            return Err(parse_line_err(i, "expected exactly two node ids"));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_int_column(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(line.parse().map_err(|e| parse_line_err(i, format!("bad integer: {e}")))?);
    }
    Ok(out)
}

fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| tok.trim().parse().map_err(|e| parse_line_err(i, format!("bad value: {e}"))))
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_line_err(i, "ragged CSV row"));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat)
        .map_err(|e| Error::invalid(format!("csv shape: {e}")))
}

/// Load a graph from an edge-list file plus optional features, labels and
/// depth files. Node count is the largest id seen plus one; auxiliary
/// files must cover exactly that many nodes.
pub fn load_dataset(
    edges_path: &Path,
    features_path: Option<&Path>,
    labels_path: Option<&Path>,
    depth_path: Option<&Path>,
) -> Result<Graph> {
    let raw = read_edge_file(edges_path)?;
    let mut n = 0usize;
    let mut seen = HashSet::new();
    let mut edges = Vec::with_capacity(raw.len());
    for (u, v) in raw {
        if u == v {
            continue; // self-loops are materialized at use sites, never stored
        }
        n = n.max(u + 1).max(v + 1);
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    let mut g = Graph::new(n, edges)?;
    if let Some(p) = features_path {
        let f = read_csv_matrix(p)?;
        if f.nrows() != n {
            return Err(Error::invalid(format!(
                "feature rows {} != node count {n}",
                f.nrows()
            )));
        }
        g.features = Some(f);
    }
    if let Some(p) = labels_path {
        let l = read_int_column(p)?;
        if l.len() != n {
            return Err(Error::invalid(format!("label count {} != node count {n}", l.len())));
        }
        g.labels = Some(l);
    }
    if let Some(p) = depth_path {
        let d = read_int_column(p)?;
        if d.len() != n {
            return Err(Error::invalid(format!("depth count {} != node count {n}", d.len())));
        }
        g.depth = Some(d);
    }
    g.validate()?;
    Ok(g)
}

/// Write a graph to `<dir>/graph.edges` plus `features.csv`, `labels.txt`
/// and `depth.txt` for whichever parts are present.
pub fn save_graph(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("graph.edges"))?;
    for &(u, v) in &g.edges {
        writeln!(f, "{u} {v}")?;
    }
    if let Some(feat) = &g.features {
        let mut f = fs::File::create(dir.join("features.csv"))?;
        for row in feat.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(f, "{}", cells.join(","))?;
        }
    }
    if let Some(labels) = &g.labels {
        let mut f = fs::File::create(dir.join("labels.txt"))?;
        for l in labels {
            writeln!(f, "{l}")?;
        }
    }
    if let Some(depth) = &g.depth {
        let mut f = fs::File::create(dir.join("depth.txt"))?;
        for d in depth {
            writeln!(f, "{d}")?;
        }
    }
    Ok(())
}

/// Load a graph directory written by [`save_graph`].
pub fn load_graph_dir(dir: &Path) -> Result<Graph> {
    let opt = |name: &str| {
        let p = dir.join(name);
        if p.exists() { Some(p) } else { None }
    };
    let features = opt("features.csv");
    let labels = opt("labels.txt");
    let depth = opt("depth.txt");
    load_dataset(
        &dir.join("graph.edges"),
        features.as_deref(),
        labels.as_deref(),
        depth.as_deref(),
    )
}

fn sample_non_edges(
    n: usize,
    forbidden: &mut HashSet<(usize, usize)>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let max_pairs = n * (n - 1) / 2;
    if forbidden.len() + count > max_pairs {
        return Err(Error::invalid("not enough non-edges to sample negatives"));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if forbidden.insert(key) {
            out.push(key);
        }
    }
    Ok(out)
}

/// Shuffle edges by seed and split into train/val/test positives; sample
/// an equal number of validation and test negatives from the non-edges,
/// disjoint from each other.
pub fn split_links(g: &Graph, ratios: (f64, f64, f64), seed: u64) -> Result<LinkSplit> {
    let (tr, va, te) = ratios;
    if (tr + va + te - 1.0).abs() > 1e-9 || tr <= 0.0 || va < 0.0 || te < 0.0 {
        return Err(Error::invalid("link split ratios must be nonnegative and sum to 1"));
    }
    let m = g.edges.len();
    let n_val = (va * m as f64).round() as usize;
    let n_test = (te * m as f64).round() as usize;
    if n_val + n_test >= m {
        return Err(Error::invalid("link split leaves no training edges"));
    }
    let n_train = m - n_val - n_test;
    if n_train == 0 || (va > 0.0 && n_val == 0) || (te > 0.0 && n_test == 0) {
        return Err(Error::invalid("link split produced an empty partition"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = g.edges.clone();
    edges.shuffle(&mut rng);
    let val_pos: Vec<_> = edges[..n_val].to_vec();
    let test_pos: Vec<_> = edges[n_val..n_val + n_test].to_vec();
    let train_pos: Vec<_> = edges[n_val + n_test..].to_vec();

    let mut forbidden: HashSet<(usize, usize)> =
        g.edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    let val_neg = sample_non_edges(g.n, &mut forbidden, val_pos.len(), &mut rng)?;
    let test_neg = sample_non_edges(g.n, &mut forbidden, test_pos.len(), &mut rng)?;

    Ok(LinkSplit { train_pos, val_pos, test_pos, val_neg, test_neg, ratios })
}

/// Split labeled nodes into disjoint train/val/test masks.
pub fn split_nodes(g: &Graph, scheme: NodeScheme, seed: u64) -> Result<NodeSplit> {
    let labels = g.labels.as_ref().ok_or_else(|| Error::invalid("node split needs labels"))?;
    let n = g.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = vec![false; n];
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    match scheme {
        NodeScheme::Ratio { train: tr, val: va, test: te } => {
            if (tr + va + te - 1.0).abs() > 1e-9 || tr <= 0.0 || va < 0.0 || te < 0.0 {
                return Err(Error::invalid("node split ratios must be nonnegative and sum to 1"));
            }
            let mut ids: Vec<usize> = (0..n).collect();
            ids.shuffle(&mut rng);
            let n_train = (tr * n as f64).round() as usize;
            let n_val = (va * n as f64).round() as usize;
            if n_train == 0 || n_train + n_val >= n {
                return Err(Error::invalid("node split produced an empty partition"));
            }
            for &i in &ids[..n_train] {
                train[i] = true;
            }
            for &i in &ids[n_train..n_train + n_val] {
                val[i] = true;
            }
            for &i in &ids[n_train + n_val..] {
                test[i] = true;
            }
        }
        NodeScheme::PerClass { count } => {
            let mut classes: Vec<usize> = labels.clone();
            classes.sort_unstable();
            classes.dedup();
            let mut rest = Vec::new();
            for &c in &classes {
                let mut members: Vec<usize> =
                    (0..n).filter(|&i| labels[i] == c).collect();
                if members.len() < count {
                    return Err(Error::invalid(format!(
                        "class {c} has {} nodes, fewer than {count} per-class examples",
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                for &i in &members[..count] {
                    train[i] = true;
                }
                rest.extend_from_slice(&members[count..]);
            }
            rest.sort_unstable();
            rest.shuffle(&mut rng);
            let half = rest.len() / 2;
            for &i in &rest[..half] {
                val[i] = true;
            }
            for &i in &rest[half..] {
                test[i] = true;
            }
        }
    }
    Ok(NodeSplit { train_mask: train, val_mask: val, test_mask: test })
}

/// Write an embedding with its space header; coordinates round-trip
/// bitwise.
pub fn save_embedding(emb: &Embedding, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "model={} kappa={:?} dim={} n={}",
        emb.space.model.as_str(),
        emb.space.kappa(),
        emb.dim(),
        emb.n()
    )?;
    for row in emb.coords.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(f, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// Read an embedding written by [`save_embedding`]. Lorentz rows that
/// violate the hyperboloid constraint are projected with a warning.
pub fn load_embedding(path: &Path) -> Result<Embedding> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_line_err(0, "empty embedding file"))?;
    let mut model = None;
    let mut kappa = None;
    let mut dim = None;
    let mut n = None;
    for tok in header.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_line_err(0, format!("bad header token `{tok}`")))?;
        match key {
            "model" => model = Some(Model::parse(value)?),
            "kappa" => {
                kappa = Some(value.parse::<f64>().map_err(|e| parse_line_err(0, e.to_string()))?)
            }
            "dim" => dim = Some(value.parse::<usize>().map_err(|e| parse_line_err(0, e.to_string()))?),
            "n" => n = Some(value.parse::<usize>().map_err(|e| parse_line_err(0, e.to_string()))?),
            other => return Err(parse_line_err(0, format!("unknown header key `{other}`"))),
        }
    }
    let model = model.ok_or_else(|| parse_line_err(0, "header missing model"))?;
    let kappa = kappa.ok_or_else(|| parse_line_err(0, "header missing kappa"))?;
    let dim = dim.ok_or_else(|| parse_line_err(0, "header missing dim"))?;
    let n = n.ok_or_else(|| parse_line_err(0, "header missing n"))?;
    let space = Space::new(model, kappa)?;
    let width = space.ambient_dim(dim);

    let mut coords = Array2::zeros((n, width));
    let mut count = 0usize;
    for (li, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if count >= n {
            return Err(parse_line_err(li, "more rows than header n"));
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| tok.parse().map_err(|e| parse_line_err(li, format!("bad value: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != width {
            return Err(parse_line_err(
                li,
                format!("expected {width} coordinates, got {}", vals.len()),
            ));
        }
        for (j, v) in vals.into_iter().enumerate() {
            coords[[count, j]] = v;
        }
        count += 1;
    }
    if count != n {
        return Err(Error::invalid(format!("expected {n} rows, got {count}")));
    }
    let mut emb = Embedding::new(space, coords);
    if model == Model::Lorentz {
        let mut warned = false;
        for i in 0..emb.n() {
            let p = emb.point(i);
            if !on_manifold(&p, 1e-6) {
                if !warned {
                    eprintln!(
                        "warning: row {i} violates the hyperboloid constraint; projecting"
                    );
                    warned = true;
                }
                emb.coords.row_mut(i).assign(&project(&p).coords);
            }
        }
    }
    Ok(emb)
}
