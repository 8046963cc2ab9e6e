//! Graph structure, synthetic TREE-L/TREE-H generation, homophily and
//! centrality baselines.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Undirected graph with optional features, labels and ground-truth tree
/// depth. Edges are stored deduplicated as `u < v`, without self-loops.
#[derive(Debug, Clone)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub features: Option<Array2<f64>>,
    pub labels: Option<Vec<usize>>,
    pub depth: Option<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Graph> {
        let g = Graph { n, edges, features: None, labels: None, depth: None };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in &self.edges {
            if u >= self.n || v >= self.n {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) references a node >= n = {}",
                    self.n
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop stored at node {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::invalid(format!("duplicate edge ({u}, {v})")));
            }
        }
        if let Some(f) = &self.features {
            if f.nrows() != self.n {
                return Err(Error::invalid(format!(
                    "feature rows {} != node count {}",
                    f.nrows(),
                    self.n
                )));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != self.n {
                return Err(Error::invalid("label count != node count"));
            }
        }
        if let Some(d) = &self.depth {
            if d.len() != self.n {
                return Err(Error::invalid("depth count != node count"));
            }
            let roots = d.iter().filter(|&&x| x == 0).count();
            if roots != 1 {
                return Err(Error::invalid(format!("expected exactly one depth-0 node, got {roots}")));
            }
        }
        Ok(())
    }

    /// Neighbor lists, sorted ascending, without self-loops.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }

    pub fn degree(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Number of distinct labels.
    pub fn num_classes(&self) -> usize {
        match &self.labels {
            Some(l) => {
                let mut set: Vec<usize> = l.clone();
                set.sort_unstable();
                set.dedup();
                set.len()
            }
            None => 0,
        }
    }

    /// Whether an undirected edge exists (linear scan of the neighbor set;
    /// callers needing many queries should build their own set).
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let key = (u.min(v), u.max(v));
        self.edges.iter().any(|&(a, b)| (a.min(b), a.max(b)) == key)
    }
}

/// Label scheme of the synthetic trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeVariant {
    /// Low homophily: nodes at the same level share a label; the top four
    /// levels are merged into one class so there are four classes.
    L,
    /// High homophily: each largest subtree is one class, the root is a
    /// fourth class.
    H,
}

impl TreeVariant {
    pub fn parse(s: &str) -> Result<TreeVariant> {
        match s.to_ascii_uppercase().as_str() {
            "L" => Ok(TreeVariant::L),
            "H" => Ok(TreeVariant::H),
            other => Err(Error::invalid(format!("unknown tree variant `{other}`"))),
        }
    }
}

/// Complete `branching`-ary tree filled level by level until `node_budget`
/// nodes, with class labels per `variant` and Gaussian features whose mean
/// is the class index (variance 1). Structure, labels and depth depend only
/// on the shape arguments; the seed only drives the features.
///
/// The default preset (`branching = 3`, `node_budget = 1093`,
/// `feature_dim = 32`) gives 1093 nodes, 1092 edges, four classes and
/// depths 0..=6.
pub fn gen_tree(
    branching: usize,
    node_budget: usize,
    variant: TreeVariant,
    feature_dim: usize,
    seed: u64,
) -> Result<Graph> {
    if branching < 2 {
        return Err(Error::invalid("branching must be >= 2"));
    }
    if node_budget < 1 {
        return Err(Error::invalid("node budget must be >= 1"));
    }
    let n = node_budget;
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut depth = vec![0usize; n];
    for i in 1..n {
        let parent = (i - 1) / branching;
        edges.push((parent, i));
        depth[i] = depth[parent] + 1;
    }
    let max_depth = depth.iter().copied().max().unwrap_or(0);

    let labels: Vec<usize> = (0..n)
        .map(|i| match variant {
            TreeVariant::H => {
                if i == 0 {
                    0
                } else {
                    // Index of the depth-1 ancestor picks the subtree class.
                    let mut a = i;
                    while depth[a] > 1 {
                        a = (a - 1) / branching;
                    }
                    a // depth-1 nodes are 1..=branching
                }
            }
            TreeVariant::L => {
                // Merge the top levels into class 0 so at most four classes
                // remain.
                let merged = max_depth.saturating_sub(3);
                depth[i].saturating_sub(merged)
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let mut features = Array2::zeros((n, feature_dim));
    for i in 0..n {
        let mean = labels[i] as f64;
        for j in 0..feature_dim {
            features[[i, j]] = mean + normal.sample(&mut rng);
        }
    }

    let g = Graph { n, edges, features: Some(features), labels: Some(labels), depth: Some(depth) };
    g.validate()?;
    Ok(g)
}

/// Mean over nodes of the fraction of same-label neighbors. Isolated nodes
/// are excluded with a warning.
pub fn homophily(g: &Graph) -> Result<f64> {
    let labels = g.labels.as_ref().ok_or_else(|| Error::invalid("homophily needs labels"))?;
    let adj = g.adjacency();
    let mut total = 0.0;
    let mut counted = 0usize;
    for v in 0..g.n {
        if adj[v].is_empty() {
            eprintln!("warning: homophily skips isolated node {v}");
            continue;
        }
        let same = adj[v].iter().filter(|&&u| labels[u] == labels[v]).count();
        total += same as f64 / adj[v].len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::invalid("homophily: all nodes isolated"));
    }
    Ok(total / g.n as f64)
}

/// Centrality baselines used as alternative root indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentralityKind {
    Degree,
    Betweenness,
    Closeness,
}

impl CentralityKind {
    pub fn parse(s: &str) -> Result<CentralityKind> {
        match s {
            "degree" => Ok(CentralityKind::Degree),
            "betweenness" => Ok(CentralityKind::Betweenness),
            "closeness" => Ok(CentralityKind::Closeness),
            other => Err(Error::invalid(format!("unknown centrality `{other}`"))),
        }
    }
}

/// Node centralities. Degree is the plain degree; betweenness is the exact
/// Brandes accumulation over unordered pairs (unnormalized); closeness is
/// `(n - 1) / sum of shortest-path distances`. Betweenness and closeness
/// require a connected graph.
pub fn centrality(g: &Graph, kind: CentralityKind) -> Result<Vec<f64>> {
    match kind {
        CentralityKind::Degree => Ok(g.degree().into_iter().map(|d| d as f64).collect()),
        CentralityKind::Betweenness => betweenness(g),
        CentralityKind::Closeness => closeness(g),
    }
}

fn bfs_dist(adj: &[Vec<usize>], s: usize) -> Vec<i64> {
    let mut dist = vec![-1i64; adj.len()];
    dist[s] = 0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(s);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] < 0 {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

fn require_connected(adj: &[Vec<usize>], what: &str) -> Result<()> {
    if adj.is_empty() {
        return Err(Error::invalid("empty graph"));
    }
    let dist = bfs_dist(adj, 0);
    if dist.iter().any(|&d| d < 0) {
        return Err(Error::invalid(format!("{what} requires a connected graph")));
    }
    Ok(())
}

/// Brandes' algorithm. Each unordered pair is counted once.
fn betweenness(g: &Graph) -> Result<Vec<f64>> {
    let adj = g.adjacency();
    require_connected(&adj, "betweenness")?;
    let n = g.n;
    let mut score = vec![0.0f64; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![-1i64; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                score[w] += delta[w];
            }
        }
    }
    // The loop over sources counts each unordered {s, t} pair twice.
    for x in &mut score {
        *x /= 2.0;
    }
    Ok(score)
}

fn closeness(g: &Graph) -> Result<Vec<f64>> {
    let adj = g.adjacency();
    require_connected(&adj, "closeness")?;
    let n = g.n;
    let mut score = vec![0.0f64; n];
    for (v, s) in score.iter_mut().enumerate() {
        let dist = bfs_dist(&adj, v);
        let total: i64 = dist.iter().sum();
        *s = if n > 1 { (n as f64 - 1.0) / total as f64 } else { 0.0 };
    }
    Ok(score)
}

/// Argmax node of a centrality vector, ties broken by lowest index.
pub fn argmax_node(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn preset_tree_counts() {
        for variant in [TreeVariant::H, TreeVariant::L] {
            let g = gen_tree(3, 1093, variant, 32, 0).unwrap();
            assert_eq!(g.n, 1093);
            assert_eq!(g.edges.len(), 1092);
            assert_eq!(g.num_classes(), 4);
            let depth = g.depth.as_ref().unwrap();
            assert_eq!(*depth.iter().max().unwrap(), 6);
            assert_eq!(*depth.iter().min().unwrap(), 0);
            assert_eq!(g.features.as_ref().unwrap().ncols(), 32);
        }
    }

    #[test]
    fn tiny_tree_is_a_path_of_root_plus_children() {
        let g = gen_tree(2, 3, TreeVariant::H, 4, 1).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (0, 2)]);
        assert_eq!(g.depth.as_ref().unwrap(), &vec![0, 1, 1]);
    }

    #[test]
    fn preset_homophily_three_decimals() {
        let h = gen_tree(3, 1093, TreeVariant::H, 32, 0).unwrap();
        let hm = homophily(&h).unwrap();
        assert_abs_diff_eq!((hm * 1000.0).round() / 1000.0, 0.998, epsilon = 1e-12);

        let l = gen_tree(3, 1093, TreeVariant::L, 32, 0).unwrap();
        let lm = homophily(&l).unwrap();
        assert_abs_diff_eq!((lm * 1000.0).round() / 1000.0, 0.018, epsilon = 1e-12);
    }

    #[test]
    fn homophily_is_one_for_single_label() {
        let mut g = Graph::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        g.labels = Some(vec![7, 7, 7, 7]);
        assert_abs_diff_eq!(homophily(&g).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn homophily_ignores_features() {
        let mut a = gen_tree(3, 40, TreeVariant::L, 8, 0).unwrap();
        let b = gen_tree(3, 40, TreeVariant::L, 8, 999).unwrap();
        assert_ne!(a.features, b.features);
        let ha = homophily(&a).unwrap();
        a.features = b.features.clone();
        assert_eq!(ha, homophily(&a).unwrap());
    }

    #[test]
    fn gen_tree_deterministic_given_seed() {
        let a = gen_tree(3, 200, TreeVariant::H, 16, 42).unwrap();
        let b = gen_tree(3, 200, TreeVariant::H, 16, 42).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn gen_tree_structure_is_seed_independent() {
        let a = gen_tree(3, 200, TreeVariant::L, 16, 1).unwrap();
        let b = gen_tree(3, 200, TreeVariant::L, 16, 2).unwrap();
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.depth, b.depth);
        assert_ne!(a.features, b.features);
    }

    #[test]
    fn star_centralities() {
        // K_{1,4}: center is node 0.
        let g = Graph::new(5, vec![(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let deg = centrality(&g, CentralityKind::Degree).unwrap();
        assert_eq!(deg[0], 4.0);
        assert_eq!(deg[1], 1.0);

        let b = centrality(&g, CentralityKind::Betweenness).unwrap();
        assert_abs_diff_eq!(b[0], 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[1], 0.0, epsilon = 1e-12);

        let c = centrality(&g, CentralityKind::Closeness).unwrap();
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-12);
        // Leaves: distances 1 + 2+2+2 = 7, so 4/7.
        assert_abs_diff_eq!(c[1], 4.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn path_endpoint_degree() {
        let g = Graph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let deg = centrality(&g, CentralityKind::Degree).unwrap();
        assert_eq!(deg, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn centrality_rejects_disconnected() {
        let g = Graph::new(4, vec![(0, 1), (2, 3)]).unwrap();
        assert!(centrality(&g, CentralityKind::Betweenness).is_err());
        assert!(centrality(&g, CentralityKind::Closeness).is_err());
        assert!(centrality(&g, CentralityKind::Degree).is_ok());
    }

    /// Brute-force betweenness: enumerate all shortest paths by DFS over
    /// the BFS DAG, count pass-throughs.
    fn brute_betweenness(g: &Graph) -> Vec<f64> {
        let adj = g.adjacency();
        let n = g.n;
        let mut score = vec![0.0f64; n];
        for s in 0..n {
            for t in (s + 1)..n {
                let dist = bfs_dist(&adj, s);
                // Count shortest paths through each node by enumerating all
                // shortest s-t paths recursively.
                let mut paths: Vec<Vec<usize>> = Vec::new();
                let mut current = vec![t];
                enumerate_paths(&adj, &dist, s, t, &mut current, &mut paths);
                let total = paths.len() as f64;
                if total == 0.0 {
                    continue;
                }
                let mut through = vec![0.0f64; n];
                for p in &paths {
                    for &v in p {
                        if v != s && v != t {
                            through[v] += 1.0;
                        }
                    }
                }
                for v in 0..n {
                    score[v] += through[v] / total;
                }
            }
        }
        score
    }

    fn enumerate_paths(
        adj: &[Vec<usize>],
        dist: &[i64],
        s: usize,
        cur: usize,
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur == s {
            out.push(stack.clone());
            return;
        }
        for &p in &adj[cur] {
            if dist[p] == dist[cur] - 1 {
                stack.push(p);
                enumerate_paths(adj, dist, s, p, stack, out);
                stack.pop();
            }
        }
    }

    fn random_connected_graph(n: usize, rng: &mut impl Rng) -> Graph {
        let mut edges = Vec::new();
        for i in 1..n {
            let p = rng.random_range(0..i);
            edges.push((p, i));
        }
        // Sprinkle extra edges.
        for _ in 0..n {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v {
                let key = (u.min(v), u.max(v));
                if !edges.iter().any(|&(a, b)| (a, b) == key) {
                    edges.push(key);
                }
            }
        }
        Graph::new(n, edges).unwrap()
    }

    #[test]
    fn betweenness_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let n = rng.random_range(4..=14);
            let g = random_connected_graph(n, &mut rng);
            let fast = centrality(&g, CentralityKind::Betweenness).unwrap();
            let slow = brute_betweenness(&g);
            for v in 0..n {
                assert_abs_diff_eq!(fast[v], slow[v], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_node(&[1.0, 3.0, 3.0, 2.0]), 1);
    }

    #[test]
    fn validation_catches_bad_graphs() {
        assert!(Graph::new(2, vec![(0, 2)]).is_err());
        assert!(Graph::new(2, vec![(0, 0)]).is_err());
        assert!(Graph::new(3, vec![(0, 1), (1, 0)]).is_err());
        let mut g = Graph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        g.depth = Some(vec![0, 0, 1]);
        assert!(g.validate().is_err());
    }
}
