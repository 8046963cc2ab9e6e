//! Shallow embedding model: a trainable per-node coordinate table and the
//! softmax-style distance objective over edges with sampled non-neighbor
//! negatives.

use std::collections::HashSet;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamSpace, Parameter, Var};
use crate::diffgeo::DiffSpace;
use crate::error::{Error, Result};
use crate::manifold::{Model, Space};

/// Trainable node table. In the Poincaré ball the rows are ball points
/// updated Riemannianly; on the Lorentz model (and for network inputs) the
/// rows are tangent coordinates at the origin mapped through `exp_o`; the
/// flat model stores plain coordinates.
#[derive(Debug, Clone)]
pub struct ShallowEmbedding {
    pub table: Parameter,
    pub space: Space,
}

impl ShallowEmbedding {
    /// Small uniform init in `[-scale, scale]`.
    pub fn init(space: Space, n: usize, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let value = Array2::from_shape_fn((n, dim), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale);
        let param_space = match space.model {
            Model::Poincare => ParamSpace::RiemannianPoincare,
            Model::Lorentz => ParamSpace::TangentAtOrigin,
            Model::Flat => ParamSpace::Euclidean,
        };
        ShallowEmbedding { table: Parameter::new("embedding", value, param_space), space }
    }

    /// Decode the table leaf into manifold points on the tape.
    pub fn decode<'t>(&self, geo: &DiffSpace, table: Var<'t>) -> Var<'t> {
        match self.table.space {
            ParamSpace::RiemannianPoincare => geo.project(table),
            ParamSpace::TangentAtOrigin => geo.exp_o_spatial(table),
            ParamSpace::Euclidean => table,
        }
    }
}

/// Sample `k` uniform non-neighbors of `i` for each edge `(i, j)`.
/// An edge whose source has no valid negatives is skipped with a warning
/// (its slot holds an empty list).
pub fn sample_negatives(
    adjacency: &[Vec<usize>],
    edges: &[(usize, usize)],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let neighbor_sets: Vec<HashSet<usize>> =
        adjacency.iter().map(|row| row.iter().copied().collect()).collect();
    edges
        .iter()
        .map(|&(i, _)| {
            if neighbor_sets[i].len() + 1 >= n {
                eprintln!("warning: node {i} has no valid negatives; skipping edge");
                return Vec::new();
            }
            let mut out = Vec::with_capacity(k);
            while out.len() < k {
                let u = rng.random_range(0..n);
                if u != i && !neighbor_sets[i].contains(&u) {
                    out.push(u);
                }
            }
            out
        })
        .collect()
}

/// Distance-softmax objective over edges, negated for minimization:
/// per edge, `d(x_i, x_j) + log(1 + sum_k exp(-d(x_i, x_{j'_k})))`.
///
/// The denominator runs over the sampled non-neighbors of `i` plus `i`
/// itself; the self term `d(x_i, x_i) = 0` contributes the constant 1.
/// Edges whose negative list is empty are skipped.
pub fn shallow_loss_diff<'t>(
    geo: &DiffSpace,
    z: Var<'t>,
    edges: &[(usize, usize)],
    negatives: &[Vec<usize>],
) -> Result<Var<'t>> {
    if edges.len() != negatives.len() {
        return Err(Error::DimMismatch(edges.len(), negatives.len()));
    }
    let kept: Vec<usize> = (0..edges.len()).filter(|&e| !negatives[e].is_empty()).collect();
    if kept.is_empty() {
        return Err(Error::invalid("no edges with valid negatives"));
    }
    let k = negatives[kept[0]].len();
    if kept.iter().any(|&e| negatives[e].len() != k) {
        return Err(Error::invalid("negative lists must share one length"));
    }
    let src: Vec<usize> = kept.iter().map(|&e| edges[e].0).collect();
    let dst: Vec<usize> = kept.iter().map(|&e| edges[e].1).collect();
    let zi = z.gather_rows(&src);
    let d_pos = geo.dist(zi, z.gather_rows(&dst));

    let tape = z.tape();
    // Self term exp(-d(x_i, x_i)) = 1.
    let mut denom = tape.constant(Array2::from_elem((kept.len(), 1), 1.0));
    for slot in 0..k {
        let ids: Vec<usize> = kept.iter().map(|&e| negatives[e][slot]).collect();
        let d_neg = geo.dist(zi, z.gather_rows(&ids));
        denom = denom + (-d_neg).exp();
    }
    Ok((d_pos + denom.ln()).mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tape};
    use crate::manifold::{ManifoldPoint, Space};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;

    /// Direct enumeration of the objective for one edge.
    fn oracle(d_pos: f64, d_negs: &[f64]) -> f64 {
        let denom = 1.0 + d_negs.iter().map(|d| (-d).exp()).sum::<f64>();
        d_pos + denom.ln()
    }

    fn embedding_at(points: &[[f64; 2]]) -> crate::manifold::Embedding {
        let s = Space::poincare(-1.0).unwrap();
        let pts: Vec<ManifoldPoint> =
            points.iter().map(|p| ManifoldPoint::new(s, array![p[0], p[1]])).collect();
        crate::manifold::Embedding::from_points(&pts).unwrap()
    }

    #[test]
    fn all_coincident_gives_ln_two() {
        // One edge, one negative, all three distances zero: the softmax
        // denominator is the self term plus one unit negative, so ln 2.
        let emb = embedding_at(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let geo = DiffSpace::new(emb.space);
        let tape = Tape::new();
        let z = tape.leaf(emb.coords.clone());
        let loss = shallow_loss_diff(&geo, z, &[(0, 1)], &[vec![2]]).unwrap();
        // The tape path floors acosh arguments at 1 + 1e-15, so coincident
        // pairs read as ~5e-8 rather than exactly 0.
        assert_abs_diff_eq!(loss.scalar_value(), 2f64.ln(), epsilon = 1e-7);
        assert_abs_diff_eq!(loss.scalar_value(), oracle(0.0, &[0.0]), epsilon = 1e-7);
    }

    #[test]
    fn distant_negatives_drive_loss_to_the_positive_distance() {
        // With the positive pair coincident and the negative pushed to the
        // boundary, the denominator decays to the persistent self term and
        // the loss follows the direct-enumeration oracle toward zero.
        let far = 1.0 - 2e-5;
        let emb = embedding_at(&[[0.0, 0.0], [0.0, 0.0], [far, 0.0]]);
        let geo = DiffSpace::new(emb.space);
        let tape = Tape::new();
        let z = tape.leaf(emb.coords.clone());
        let loss = shallow_loss_diff(&geo, z, &[(0, 1)], &[vec![2]]).unwrap().scalar_value();
        let d_far = crate::manifold::dist(&emb.point(0), &emb.point(2)).unwrap();
        assert_abs_diff_eq!(loss, oracle(0.0, &[d_far]), epsilon = 1e-7);
        assert!(loss < 1e-4, "loss {loss}");

        // Monotone: pushing the negative further shrinks the loss.
        let nearer = embedding_at(&[[0.0, 0.0], [0.0, 0.0], [0.6, 0.0]]);
        let tape2 = Tape::new();
        let z2 = tape2.leaf(nearer.coords.clone());
        let worse = shallow_loss_diff(&geo, z2, &[(0, 1)], &[vec![2]]).unwrap().scalar_value();
        assert!(worse > loss);
    }

    #[test]
    fn mixed_edges_match_direct_enumeration() {
        let emb = embedding_at(&[[0.1, 0.0], [0.0, 0.2], [-0.3, 0.1], [0.4, -0.2], [0.0, -0.5]]);
        let geo = DiffSpace::new(emb.space);
        let edges = vec![(0, 1), (2, 3)];
        let negatives = vec![vec![3, 4], vec![0, 4]];
        let tape = Tape::new();
        let z = tape.leaf(emb.coords.clone());
        let loss =
            shallow_loss_diff(&geo, z, &edges, &negatives).unwrap().scalar_value();

        let d = |a: usize, b: usize| {
            crate::manifold::dist(&emb.point(a), &emb.point(b)).unwrap()
        };
        let want = 0.5
            * (oracle(d(0, 1), &[d(0, 3), d(0, 4)]) + oracle(d(2, 3), &[d(2, 0), d(2, 4)]));
        assert_abs_diff_eq!(loss, want, epsilon = 1e-9);
    }

    #[test]
    fn skipped_edges_are_dropped() {
        let emb = embedding_at(&[[0.1, 0.0], [0.0, 0.2], [-0.3, 0.1]]);
        let geo = DiffSpace::new(emb.space);
        let tape = Tape::new();
        let z = tape.leaf(emb.coords.clone());
        // Second edge has no negatives: only the first contributes.
        let loss = shallow_loss_diff(&geo, z, &[(0, 1), (1, 2)], &[vec![2], vec![]])
            .unwrap()
            .scalar_value();
        let tape2 = Tape::new();
        let z2 = tape2.leaf(emb.coords.clone());
        let only_first =
            shallow_loss_diff(&geo, z2, &[(0, 1)], &[vec![2]]).unwrap().scalar_value();
        assert_abs_diff_eq!(loss, only_first, epsilon = 1e-12);

        let tape3 = Tape::new();
        let z3 = tape3.leaf(emb.coords.clone());
        assert!(shallow_loss_diff(&geo, z3, &[(0, 1)], &[vec![]]).is_err());
    }

    #[test]
    fn sampler_avoids_neighbors_and_self() {
        let adjacency = vec![vec![1, 2], vec![0], vec![0], vec![], vec![]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let negs = sample_negatives(&adjacency, &[(0, 1), (1, 0)], 4, &mut rng);
        for &u in &negs[0] {
            assert!(u != 0 && u != 1 && u != 2);
        }
        for &u in &negs[1] {
            assert!(u != 1 && u != 0);
        }

        // Fully connected node has no negatives.
        let full = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let negs = sample_negatives(&full, &[(0, 1)], 2, &mut rng);
        assert!(negs[0].is_empty());
    }

    #[test]
    fn gradient_passes_fd_on_six_node_toy() {
        let geo = DiffSpace::new(Space::poincare(-1.0).unwrap());
        let edges = vec![(0, 1), (1, 2), (3, 4)];
        let negatives = vec![vec![3, 5], vec![4, 5], vec![0, 2]];
        let u0 = Array2::from_shape_fn((6, 3), |(i, j)| {
            0.12 * ((i as f64) - 2.4) * ((j as f64) - 1.3)
        });
        let report = grad_check(
            move |_t, vars| {
                let z = geo.exp_o_spatial(vars[0]);
                shallow_loss_diff(&geo, z, &edges, &negatives)
            },
            &[u0],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {:.3e}", report.max_rel_err);
    }

    #[test]
    fn riemannian_table_decodes_inside_ball() {
        let space = Space::poincare(-1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let emb = ShallowEmbedding::init(space, 10, 4, 0.01, &mut rng);
        assert_eq!(emb.table.space, ParamSpace::RiemannianPoincare);
        let geo = DiffSpace::new(space);
        let tape = Tape::new();
        let t = tape.leaf(emb.table.value.clone());
        let z = emb.decode(&geo, t).value();
        for i in 0..10 {
            let norm: f64 = z.row(i).dot(&z.row(i));
            assert!(norm < 1.0);
        }
    }
}
