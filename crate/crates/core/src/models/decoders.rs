//! Decoders and task losses: the Fermi-Dirac edge-probability function,
//! link-prediction binary cross-entropy, the tangent-affine class decoder,
//! and masked node-classification cross-entropy.

use ndarray::{Array1, Array2};

use crate::autodiff::Var;
use crate::diffgeo::DiffSpace;
use crate::error::{Error, Result};
use crate::manifold::{dist, Embedding};

/// Fermi-Dirac decoder parameters; `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FermiDiracParams {
    pub r: f64,
    pub t: f64,
}

impl Default for FermiDiracParams {
    fn default() -> Self {
        FermiDiracParams { r: 2.0, t: 1.0 }
    }
}

impl FermiDiracParams {
    pub fn new(r: f64, t: f64) -> Result<FermiDiracParams> {
        if t <= 0.0 {
            return Err(Error::invalid("fermi-dirac temperature t must be > 0"));
        }
        Ok(FermiDiracParams { r, t })
    }
}

/// Edge probability `1 / (exp((d^2 - r)/t) + 1)`, strictly decreasing in
/// the squared distance.
pub fn fermi_dirac(d_sq: f64, p: &FermiDiracParams) -> f64 {
    let u = (p.r - d_sq) / p.t;
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Tape version of [`fermi_dirac`] on a column of squared distances.
pub fn fd_prob_diff<'t>(d_sq: Var<'t>, p: &FermiDiracParams) -> Var<'t> {
    ((-d_sq + p.r) / p.t).sigmoid()
}

/// Fermi-Dirac edge scores for plain embeddings (used by evaluation).
pub fn lp_scores(emb: &Embedding, edges: &[(usize, usize)], p: &FermiDiracParams) -> Result<Vec<f64>> {
    edges
        .iter()
        .map(|&(u, v)| {
            let d = dist(&emb.point(u), &emb.point(v))?;
            Ok(fermi_dirac(d * d, p))
        })
        .collect()
}

/// Link-prediction loss: `mean(-log p)` over positives plus
/// `mean(-log(1 - p))` over negatives, in the overflow-safe softplus form.
pub fn lp_loss_diff<'t>(
    geo: &DiffSpace,
    z: Var<'t>,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
    fd: &FermiDiracParams,
) -> Result<Var<'t>> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("lp loss needs nonempty edge lists"));
    }
    let logits = |edges: &[(usize, usize)]| {
        let i: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let j: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let d_sq = geo.dist_sq(z.gather_rows(&i), z.gather_rows(&j));
        (-d_sq + fd.r) / fd.t
    };
    // -log sigmoid(u) = softplus(-u); -log(1 - sigmoid(u)) = softplus(u).
    let pos_term = (-logits(pos)).softplus().mean();
    let neg_term = logits(neg).softplus().mean();
    Ok(pos_term + neg_term)
}

/// Affine class decoder on tangent coordinates: `w` is `C x d`, `b` is a
/// length-`C` bias.
#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DecoderParams {
    pub fn zeros(classes: usize, dim: usize) -> DecoderParams {
        DecoderParams { w: Array2::zeros((classes, dim)), b: Array1::zeros(classes) }
    }

    pub fn classes(&self) -> usize {
        self.w.nrows()
    }
}

/// Per-node class logits from an affine map of `log_o(z)`.
pub fn nc_decode(emb: &Embedding, decoder: &DecoderParams) -> Result<Array2<f64>> {
    if decoder.w.ncols() != emb.dim() {
        return Err(Error::DimMismatch(decoder.w.ncols(), emb.dim()));
    }
    let o = emb.space.origin(emb.dim());
    let mut logits = Array2::zeros((emb.n(), decoder.classes()));
    for i in 0..emb.n() {
        let v = crate::manifold::log_map(&o, &emb.point(i))?;
        let spatial = match emb.space.model {
            crate::manifold::Model::Lorentz => v.vec.slice(ndarray::s![1..]).to_owned(),
            _ => v.vec,
        };
        logits.row_mut(i).assign(&(decoder.w.dot(&spatial) + &decoder.b));
    }
    Ok(logits)
}

/// Tape version of [`nc_decode`]: `w` is a `C x d` leaf, `b` a `1 x C` row.
pub fn nc_decode_diff<'t>(geo: &DiffSpace, z: Var<'t>, w: Var<'t>, b: Var<'t>) -> Var<'t> {
    geo.log_o_spatial(z).matmul(w.transpose()) + b
}

/// Mean negative log-likelihood over the masked rows.
pub fn ce_loss<'t>(logits: Var<'t>, labels: &[usize], mask: &[bool]) -> Result<Var<'t>> {
    let (n, classes) = logits.shape();
    if labels.len() != n || mask.len() != n {
        return Err(Error::DimMismatch(labels.len(), n));
    }
    let idx: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::invalid("cross-entropy over an empty mask"));
    }
    let mut one_hot = Array2::zeros((idx.len(), classes));
    for (row, &i) in idx.iter().enumerate() {
        if labels[i] >= classes {
            return Err(Error::invalid(format!(
                "label {} at node {i} out of range for {classes} classes",
                labels[i]
            )));
        }
        one_hot[[row, labels[i]]] = 1.0;
    }
    let picked = logits.gather_rows(&idx);
    // Stable log-softmax: the row-max shift cancels out of the function
    // exactly, so treating it as a constant leaves gradients untouched
    // while keeping every entry finite even for extreme logits.
    let shift = {
        let v = picked.value();
        let maxes = ndarray::Array2::from_shape_fn((idx.len(), 1), |(i, _)| {
            v.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        });
        logits.tape().constant(maxes)
    };
    let shifted = picked - shift;
    let log_probs = shifted - shifted.exp().sum_axis(1).ln();
    let hot = logits.tape().constant(one_hot);
    Ok(-(log_probs * hot).sum() / idx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tape};
    use crate::manifold::{random_point, ManifoldPoint, Space};
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fermi_dirac_fixed_points() {
        let p = FermiDiracParams::default();
        assert_abs_diff_eq!(fermi_dirac(p.r, &p), 0.5, epsilon = 1e-12);
        assert!(fermi_dirac(1e9, &p) < 1e-12);
        // r=2, t=1, d_sq = 2 + ln 3 gives 1/(3 + 1).
        let p = FermiDiracParams::new(2.0, 1.0).unwrap();
        assert_abs_diff_eq!(fermi_dirac(2.0 + 3f64.ln(), &p), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn fermi_dirac_is_monotone_decreasing() {
        let p = FermiDiracParams::new(1.5, 0.7).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let v = fermi_dirac(i as f64 * 0.3, &p);
            assert!(v < prev);
            assert!(v > 0.0 && v < 1.0);
            prev = v;
        }
    }

    fn ring_embedding(n: usize, seed: u64) -> Embedding {
        let space = Space::poincare(-1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<ManifoldPoint> =
            (0..n).map(|_| random_point(space, 3, 1.5, &mut rng)).collect();
        Embedding::from_points(&pts).unwrap()
    }

    #[test]
    fn lp_loss_balanced_half_probabilities() {
        // Distances zero and r chosen so every p = 0.5: loss = 2 ln 2.
        let space = Space::poincare(-1.0).unwrap();
        let o = space.origin(2);
        let emb = Embedding::from_points(&[o.clone(), o.clone(), o.clone(), o]).unwrap();
        let fd = FermiDiracParams::new(0.0, 1.0).unwrap();
        let geo = DiffSpace::new(space);
        let tape = Tape::new();
        let z = tape.leaf(emb.coords.clone());
        let loss = lp_loss_diff(&geo, z, &[(0, 1)], &[(2, 3)], &fd).unwrap();
        assert_abs_diff_eq!(loss.scalar_value(), 2.0 * 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn lp_loss_perfect_scores_approach_zero() {
        let space = Space::poincare(-1.0).unwrap();
        let s = Space::poincare(-1.0).unwrap();
        let near = ManifoldPoint::new(s, ndarray::array![1e-6, 0.0]);
        let far = ManifoldPoint::new(s, ndarray::array![0.999989, 0.0]);
        let emb = Embedding::from_points(&[
            s.origin(2),
            near,
            s.origin(2),
            far,
        ])
        .unwrap();
        let fd = FermiDiracParams::new(2.0, 0.1).unwrap();
        let geo = DiffSpace::new(space);
        let tape = Tape::new();
        let z = tape.leaf(emb.coords.clone());
        let loss = lp_loss_diff(&geo, z, &[(0, 1)], &[(2, 3)], &fd).unwrap();
        assert!(loss.scalar_value() < 1e-6, "loss {}", loss.scalar_value());
    }

    #[test]
    fn lp_loss_decreases_when_positive_pair_shrinks() {
        let space = Space::poincare(-1.0).unwrap();
        let geo = DiffSpace::new(space);
        let fd = FermiDiracParams::default();
        let eval = |x: f64| {
            let s = Space::poincare(-1.0).unwrap();
            let emb = Embedding::from_points(&[
                s.origin(2),
                ManifoldPoint::new(s, ndarray::array![x, 0.0]),
                s.origin(2),
                ManifoldPoint::new(s, ndarray::array![0.5, 0.5]),
            ])
            .unwrap();
            let tape = Tape::new();
            let z = tape.leaf(emb.coords.clone());
            lp_loss_diff(&geo, z, &[(0, 1)], &[(2, 3)], &fd).unwrap().scalar_value()
        };
        assert!(eval(0.3) < eval(0.5));
        assert!(eval(0.1) < eval(0.3));
    }

    #[test]
    fn lp_loss_rejects_empty() {
        let geo = DiffSpace::new(Space::poincare(-1.0).unwrap());
        let emb = ring_embedding(4, 1);
        let tape = Tape::new();
        let z = tape.leaf(emb.coords.clone());
        assert!(lp_loss_diff(&geo, z, &[], &[(0, 1)], &FermiDiracParams::default()).is_err());
    }

    #[test]
    fn lp_loss_gradient_passes_fd() {
        // 8-node toy on tangent parametrization.
        let space = Space::poincare(-1.0).unwrap();
        let geo = DiffSpace::new(space);
        let fd = FermiDiracParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u0 = Array2::from_shape_fn((8, 3), |_| {
            use rand::Rng;
            0.8 * (rng.random::<f64>() - 0.5)
        });
        let pos = vec![(0, 1), (2, 3), (4, 5)];
        let neg = vec![(0, 7), (1, 6), (2, 5)];
        let report = grad_check(
            move |_t, vars| {
                let z = geo.exp_o_spatial(vars[0]);
                lp_loss_diff(&geo, z, &pos, &neg, &fd)
            },
            &[u0],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {:.3e}", report.max_rel_err);
    }

    #[test]
    fn zero_decoder_gives_uniform_probabilities() {
        let emb = ring_embedding(5, 2);
        let dec = DecoderParams::zeros(4, 3);
        let logits = nc_decode(&emb, &dec).unwrap();
        let tape = Tape::new();
        let l = tape.constant(logits);
        let probs = l.softmax_rows().value();
        for v in probs.iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn diff_decoder_matches_plain() {
        let emb = ring_embedding(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let dec = DecoderParams {
            w: Array2::from_shape_fn((4, 3), |_| rng.random::<f64>() - 0.5),
            b: ndarray::Array1::from_shape_fn(4, |_| rng.random::<f64>() - 0.5),
        };
        let plain = nc_decode(&emb, &dec).unwrap();
        let geo = DiffSpace::new(emb.space);
        let tape = Tape::new();
        let z = tape.leaf(emb.coords.clone());
        let w = tape.leaf(dec.w.clone());
        let b = tape.leaf(dec.b.clone().into_shape_with_order((1, 4)).unwrap());
        let diff = nc_decode_diff(&geo, z, w, b).value();
        for (a, b) in diff.iter().zip(plain.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn ce_loss_uniform_logits_is_ln_c() {
        let tape = Tape::new();
        let logits = tape.leaf(Array2::zeros((3, 5)));
        let loss = ce_loss(logits, &[0, 3, 4], &[true, true, true]).unwrap();
        assert_abs_diff_eq!(loss.scalar_value(), 5f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn ce_loss_goes_to_zero_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0] {
            let tape = Tape::new();
            let mut a = Array2::zeros((2, 3));
            a[[0, 1]] = margin;
            a[[1, 2]] = margin;
            let logits = tape.leaf(a);
            let loss = ce_loss(logits, &[1, 2], &[true, true]).unwrap().scalar_value();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn ce_loss_matches_hand_computed_nll() {
        // 3-node toy, mask drops the middle node.
        let tape = Tape::new();
        let logits = tape.leaf(arr2(&[[2.0, 0.0], [5.0, 5.0], [0.0, 1.0]]));
        let loss = ce_loss(logits, &[0, 0, 1], &[true, false, true]).unwrap();
        let p0 = (2f64.exp()) / (2f64.exp() + 1.0);
        let p2 = (1f64.exp()) / (1f64.exp() + 1.0);
        let want = -(p0.ln() + p2.ln()) / 2.0;
        assert_abs_diff_eq!(loss.scalar_value(), want, epsilon = 1e-12);
    }

    #[test]
    fn ce_loss_rejects_empty_mask_and_bad_labels() {
        let tape = Tape::new();
        let logits = tape.leaf(Array2::zeros((2, 2)));
        assert!(ce_loss(logits, &[0, 1], &[false, false]).is_err());
        let logits = tape.leaf(Array2::zeros((2, 2)));
        assert!(ce_loss(logits, &[0, 5], &[true, true]).is_err());
    }

    #[test]
    fn nc_gradient_passes_fd() {
        let space = Space::lorentz(-1.0).unwrap();
        let geo = DiffSpace::new(space);
        let labels = vec![0, 1, 2, 0, 1];
        let mask = vec![true, true, false, true, true];
        let u0 = Array2::from_shape_fn((5, 3), |(i, j)| 0.2 * ((i + j) as f64 - 3.0));
        let w0 = Array2::from_shape_fn((3, 3), |(i, j)| 0.3 * ((i * 3 + j) as f64 - 4.0) / 4.0);
        let b0 = Array2::zeros((1, 3));
        let report = grad_check(
            move |_t, vars| {
                let z = geo.exp_o_spatial(vars[0]);
                let logits = nc_decode_diff(&geo, z, vars[1], vars[2]);
                ce_loss(logits, &labels, &mask)
            },
            &[u0, w0, b0],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {:.3e}", report.max_rel_err);
    }
}
