//! Differentiable manifold formulas over [`autodiff::Var`] batches.
//!
//! Rows are points. These mirror the closed forms in [`crate::manifold`]
//! and [`crate::center`] but run on the tape so losses can backpropagate
//! through geometry. acosh arguments are clamped to `>= 1 + 1e-15` and
//! artanh arguments to `<= 1 - 1e-15`, which bounds gradients near the
//! boundary; point-producing maps project their outputs exactly like the
//! plain operations do.

use ndarray::{Array1, Array2};

use crate::autodiff::Var;
use crate::manifold::{Model, Space, ACOSH_EPS, ARTANH_EPS, BALL_EPS, MIN_NORM};

/// Hyperbolic radius cap for the Lorentz exponential maps: keeps
/// `cosh`/`sinh` (and their pairwise Minkowski products) finite in f64.
const MAX_LORENTZ_ARG: f64 = 300.0;

/// Rowwise differentiable geometry for one space.
#[derive(Debug, Clone, Copy)]
pub struct DiffSpace {
    pub space: Space,
}

impl DiffSpace {
    pub fn new(space: Space) -> DiffSpace {
        DiffSpace { space }
    }

    fn kappa(&self) -> f64 {
        self.space.kappa()
    }

    fn sqrt_c(&self) -> f64 {
        self.space.curvature.sqrt_c()
    }

    /// Rowwise dot product, an `n x 1` column (broadcasts `1 x d` inputs).
    fn row_dot<'t>(x: Var<'t>, y: Var<'t>) -> Var<'t> {
        (x * y).sum_axis(1)
    }

    fn sumsq(x: Var<'_>) -> Var<'_> {
        (x * x).sum_axis(1)
    }

    /// Conformal factor `lambda_x = 2 / (1 + kappa ||x||^2)`, `n x 1`.
    fn lambda<'t>(&self, x: Var<'t>) -> Var<'t> {
        let denom = (Self::sumsq(x) * self.kappa() + 1.0).clamp(MIN_NORM, f64::INFINITY);
        denom.recip_via_div() * 2.0
    }

    /// Time column of a Lorentz batch.
    fn time<'t>(&self, x: Var<'t>) -> Var<'t> {
        x.slice_cols(0, 1)
    }

    /// Spatial columns of a Lorentz batch.
    fn spatial<'t>(&self, x: Var<'t>) -> Var<'t> {
        let (_, w) = x.shape();
        x.slice_cols(1, w)
    }

    fn minkowski_rows<'t>(&self, x: Var<'t>, y: Var<'t>) -> Var<'t> {
        let dot = Self::row_dot(x, y);
        let t = self.time(x) * self.time(y);
        dot - t * 2.0
    }

    /// Stability projection; identity for in-ball/flat inputs.
    pub fn project<'t>(&self, x: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Flat => x,
            Model::Poincare => {
                let max_norm = (1.0 - BALL_EPS) / self.sqrt_c();
                let n = x.norm_rows().clamp(MIN_NORM, f64::INFINITY);
                let scale = (n.recip_via_div() * max_norm).clamp(0.0, 1.0);
                x * scale
            }
            Model::Lorentz => {
                // Recompute the time coordinate; also cap the hyperbolic
                // radius so repeated exponential maps cannot overflow f64.
                let xs = self.spatial(x);
                let c = self.space.curvature.c();
                let sc = self.sqrt_c();
                let limit = (sc * MAX_LORENTZ_ARG).sinh() / sc;
                let nn = xs.norm_rows().clamp(MIN_NORM, f64::INFINITY);
                let scale = (nn.recip_via_div() * limit).clamp(0.0, 1.0);
                let xs = xs * scale;
                let x0 = (Self::sumsq(xs) + 1.0 / c).sqrt();
                x0.concat_cols(xs)
            }
        }
    }

    /// Zero-pad spatial tangent coordinates to ambient width (Lorentz adds
    /// a zero time column; other models pass through).
    pub fn pad_spatial<'t>(&self, u: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Lorentz => {
                let (n, _) = u.shape();
                let zeros = u.tape().constant(Array2::zeros((n, 1)));
                zeros.concat_cols(u)
            }
            _ => u,
        }
    }

    /// Spatial tangent coordinates of `log_o(x)`, an `n x d` block.
    pub fn log_o_spatial<'t>(&self, x: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Flat => x,
            Model::Poincare => {
                // (1/sqrt(c)) artanh(sqrt(c) ||x||) x / ||x||
                let sc = self.sqrt_c();
                let a = (x.norm_rows() * sc).clamp(MIN_NORM, 1.0 - ARTANH_EPS);
                x * (a.artanh() / a)
            }
            Model::Lorentz => {
                let sc = self.sqrt_c();
                let beta = (self.time(x) * sc).clamp(1.0 + ACOSH_EPS, f64::INFINITY);
                let alpha = beta.acosh();
                let coef = alpha / (beta * beta - 1.0).sqrt();
                self.spatial(x) * coef
            }
        }
    }

    /// `exp_o` applied to spatial tangent coordinates; returns ambient
    /// points (projected).
    ///
    /// The norm is floored before entering both the numerator and the
    /// denominator so the scale factor tends to 1 at zero vectors and the
    /// gradient there stays the identity instead of collapsing to 0.
    pub fn exp_o_spatial<'t>(&self, u: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Flat => u,
            Model::Poincare => {
                let sc = self.sqrt_c();
                let a = (u.norm_rows() * sc).clamp(MIN_NORM, f64::INFINITY);
                let out = u * (a.tanh() / a);
                self.project(out)
            }
            Model::Lorentz => {
                let sc = self.sqrt_c();
                let a = (u.norm_rows() * sc).clamp(MIN_NORM, MAX_LORENTZ_ARG);
                let x0 = a.cosh() * (1.0 / sc);
                let xs = u * (a.sinh() / a);
                x0.concat_cols(xs)
            }
        }
    }

    /// Möbius addition, rowwise (Poincaré only); `y` may be a `1 x d` row.
    pub fn mobius_add<'t>(&self, x: Var<'t>, y: Var<'t>) -> Var<'t> {
        assert_eq!(self.space.model, Model::Poincare, "mobius_add needs Poincare");
        let k = self.kappa();
        let x2 = Self::sumsq(x);
        let y2 = Self::sumsq(y);
        let xy = Self::row_dot(x, y);
        let a = -(xy * (2.0 * k)) - y2 * k + 1.0;
        let b = x2 * k + 1.0;
        let den = -(xy * (2.0 * k)) + x2 * y2 * (k * k) + 1.0;
        (x * a + y * b) / den
    }

    /// Parallel transport of ambient tangents from the origin to `x`.
    pub fn pt_from_origin<'t>(&self, x: Var<'t>, v: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Flat => v,
            Model::Poincare => {
                // lambda_o / lambda_x = 1 + kappa ||x||^2.
                let scale = Self::sumsq(x) * self.kappa() + 1.0;
                v * scale
            }
            Model::Lorentz => {
                let sc = self.sqrt_c();
                let d = self.space.manifold_dim(x.shape().1);
                let mut o = Array1::zeros(d + 1);
                o[0] = 1.0 / sc;
                let o = x.tape().row(o);
                let coef = (self.minkowski_rows(x, v) * self.kappa())
                    / (self.time(x) * sc + 1.0);
                v - (x + o) * coef
            }
        }
    }

    /// Exponential map at base points `x` (rows broadcast), projected.
    pub fn exp_at<'t>(&self, x: Var<'t>, v: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Flat => x + v,
            Model::Poincare => {
                let sc = self.sqrt_c();
                let lam = self.lambda(x);
                let a = (v.norm_rows() * sc).clamp(MIN_NORM, f64::INFINITY);
                let t = (lam * a * 0.5).tanh() / a;
                let out = self.mobius_add(x, v * t);
                self.project(out)
            }
            Model::Lorentz => {
                let sc = self.sqrt_c();
                let q = self.minkowski_rows(v, v).clamp(1e-30, f64::INFINITY);
                let a = (q.sqrt() * sc).clamp(MIN_NORM, MAX_LORENTZ_ARG);
                let out = x * a.cosh() + v * (a.sinh() / a);
                self.project(out)
            }
        }
    }

    /// Geodesic distance, an `n x 1` column.
    pub fn dist<'t>(&self, x: Var<'t>, y: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Flat => (x - y).norm_rows(),
            Model::Poincare => {
                let k = self.kappa();
                let num = Self::sumsq(x - y);
                let den = (Self::sumsq(x) * k + 1.0) * (Self::sumsq(y) * k + 1.0);
                let arg = (-(num / den) * (2.0 * k) + 1.0).clamp(1.0 + ACOSH_EPS, f64::INFINITY);
                arg.acosh() * (1.0 / self.sqrt_c())
            }
            Model::Lorentz => {
                let arg = (self.minkowski_rows(x, y) * self.kappa())
                    .clamp(1.0 + ACOSH_EPS, f64::INFINITY);
                arg.acosh() * (1.0 / self.sqrt_c())
            }
        }
    }

    pub fn dist_sq<'t>(&self, x: Var<'t>, y: Var<'t>) -> Var<'t> {
        let d = self.dist(x, y);
        d * d
    }

    /// Distance to the origin (HDO), an `n x 1` column.
    pub fn hdo<'t>(&self, x: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Flat => x.norm_rows(),
            Model::Poincare => {
                let sc = self.sqrt_c();
                let u = (x.norm_rows() * sc).clamp(0.0, 1.0 - ARTANH_EPS);
                u.artanh() * (2.0 / sc)
            }
            Model::Lorentz => {
                let sc = self.sqrt_c();
                let arg = (self.time(x) * sc).clamp(1.0 + ACOSH_EPS, f64::INFINITY);
                arg.acosh() * (1.0 / sc)
            }
        }
    }

    /// Weighted hyperbolic center of the rows, a `1 x ambient` row:
    /// gyromidpoint (Poincaré), Lorentzian centroid (Lorentz), mean (flat).
    pub fn center<'t>(&self, x: Var<'t>, weights: Option<&Array1<f64>>) -> Var<'t> {
        let (n, _) = x.shape();
        let w = match weights {
            Some(w) => {
                assert_eq!(w.len(), n, "weight length mismatch");
                let col = w.clone().into_shape_with_order((n, 1)).expect("weights column");
                x.tape().constant(col)
            }
            None => x.tape().constant(Array2::from_elem((n, 1), 1.0)),
        };
        match self.space.model {
            Model::Flat => (x * w).sum_axis(0) / w.sum(),
            Model::Poincare => {
                let sc = self.sqrt_c();
                let lam = self.lambda(x);
                let num = (x * (lam * w)).sum_axis(0);
                let den = ((lam - 1.0) * w).sum_axis(0);
                let u = num / den;
                // (1/2) ⊗_kappa u
                let nu = u.norm_rows();
                let theta = (nu * sc).clamp(0.0, 1.0 - ARTANH_EPS).artanh();
                let denom = (nu * sc).clamp(MIN_NORM, f64::INFINITY);
                let mid = u * ((theta * 0.5).tanh() / denom);
                self.project(mid)
            }
            Model::Lorentz => {
                let s = (x * w).sum_axis(0);
                let norm = self.minkowski_rows(s, s).abs().clamp(1e-30, f64::INFINITY).sqrt();
                s / (norm * self.sqrt_c())
            }
        }
    }

    /// Root alignment: translate rows so `center` moves to the origin.
    /// Poincaré uses `z ⊕ (-z_c)`; Lorentz boosts through the inverse of
    /// the center; flat subtracts. Outputs are projected.
    pub fn align<'t>(&self, x: Var<'t>, center: Var<'t>) -> Var<'t> {
        match self.space.model {
            Model::Flat => x - center,
            Model::Poincare => {
                let out = self.mobius_add(x, -center);
                self.project(out)
            }
            Model::Lorentz => {
                let inv = self.exp_o_spatial(-self.log_o_spatial(center));
                let v = self.pad_spatial(self.log_o_spatial(x));
                let moved = self.pt_from_origin(inv, v);
                self.exp_at(inv, moved)
            }
        }
    }
}

trait VarExt<'t> {
    fn recip_via_div(self) -> Var<'t>;
}

impl<'t> VarExt<'t> for Var<'t> {
    fn recip_via_div(self) -> Var<'t> {
        let one = self.tape().scalar(1.0);
        one / self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tape};
    use crate::center::{align_root, hyperbolic_center};
    use crate::manifold::{
        self, random_point, Embedding, ManifoldPoint, TangentVector,
    };
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(space: Space, n: usize, radius: f64, seed: u64) -> Embedding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<ManifoldPoint> =
            (0..n).map(|_| random_point(space, 3, radius, &mut rng)).collect();
        Embedding::from_points(&pts).unwrap()
    }

    fn spaces() -> Vec<Space> {
        vec![
            Space::poincare(-1.0).unwrap(),
            Space::poincare(-0.5).unwrap(),
            Space::lorentz(-1.0).unwrap(),
            Space::lorentz(-2.0).unwrap(),
            Space::flat(),
        ]
    }

    #[test]
    fn diff_dist_and_hdo_match_plain() {
        for space in spaces() {
            let geo = DiffSpace::new(space);
            let a = batch(space, 12, 2.0, 1);
            let b = batch(space, 12, 2.0, 2);
            let tape = Tape::new();
            let x = tape.leaf(a.coords.clone());
            let y = tape.leaf(b.coords.clone());
            let d = geo.dist(x, y).value();
            let h = geo.hdo(x).value();
            let o = space.origin(3);
            for i in 0..12 {
                let plain = manifold::dist(&a.point(i), &b.point(i)).unwrap();
                assert_abs_diff_eq!(d[[i, 0]], plain, epsilon = 1e-9);
                let plain_h = manifold::dist(&a.point(i), &o).unwrap();
                assert_abs_diff_eq!(h[[i, 0]], plain_h, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn diff_log_exp_match_plain_and_round_trip() {
        for space in spaces() {
            let geo = DiffSpace::new(space);
            let a = batch(space, 10, 1.5, 3);
            let tape = Tape::new();
            let x = tape.leaf(a.coords.clone());
            let u = geo.log_o_spatial(x);
            let back = geo.exp_o_spatial(u).value();
            for (have, want) in back.iter().zip(a.coords.iter()) {
                assert_abs_diff_eq!(have, want, epsilon = 1e-9);
            }

            let o = space.origin(3);
            let uv = u.value();
            for i in 0..10 {
                let plain = manifold::log_map(&o, &a.point(i)).unwrap();
                let spatial_offset = if space.model == Model::Lorentz { 1 } else { 0 };
                for j in 0..3 {
                    assert_abs_diff_eq!(
                        uv[[i, j]],
                        plain.vec[j + spatial_offset],
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn diff_exp_at_and_pt_match_plain() {
        for space in spaces() {
            let geo = DiffSpace::new(space);
            let a = batch(space, 8, 1.5, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let o = space.origin(3);
            let amb = space.ambient_dim(3);
            let mut vs = ndarray::Array2::zeros((8, amb));
            for i in 0..8 {
                let t = manifold::random_tangent(&o, 1.0, &mut rng);
                vs.row_mut(i).assign(&t.vec);
            }
            let tape = Tape::new();
            let x = tape.leaf(a.coords.clone());
            let v = tape.leaf(vs.clone());
            let moved = geo.pt_from_origin(x, v);
            let out = geo.exp_at(x, moved).value();
            for i in 0..8 {
                let t = TangentVector::new(o.clone(), vs.row(i).to_owned()).unwrap();
                let pt = manifold::parallel_transport(&o, &a.point(i), &t).unwrap();
                let want = manifold::exp_map(&a.point(i), &pt).unwrap();
                for j in 0..amb {
                    assert_abs_diff_eq!(out[[i, j]], want.coords[j], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn diff_center_and_align_match_plain() {
        for space in spaces() {
            let geo = DiffSpace::new(space);
            let a = batch(space, 15, 1.8, 6);
            let tape = Tape::new();
            let x = tape.leaf(a.coords.clone());
            let c = geo.center(x, None);
            let plain_c = hyperbolic_center(&a).unwrap();
            let cv = c.value();
            for j in 0..cv.ncols() {
                assert_abs_diff_eq!(cv[[0, j]], plain_c.coords[j], epsilon = 1e-9);
            }

            let aligned = geo.align(x, c).value();
            let plain_aligned = align_root(&a, &plain_c).unwrap();
            for (have, want) in aligned.iter().zip(plain_aligned.coords.iter()) {
                assert_abs_diff_eq!(have, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn dist_sq_of_exp_gradient_passes_fd() {
        // loss = dist^2(exp_o(v), o) on the Poincare ball at kappa = -1.
        let space = Space::poincare(-1.0).unwrap();
        let geo = DiffSpace::new(space);
        let v = ndarray::arr2(&[[0.3, -0.4, 0.8], [1.2, 0.1, -0.5]]);
        let report = grad_check(
            move |tape, vars| {
                let x = geo.exp_o_spatial(vars[0]);
                let o = tape.constant(ndarray::Array2::zeros((1, 3)));
                Ok(geo.dist_sq(x, o).sum())
            },
            &[v],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {:.3e}", report.max_rel_err);
    }

    #[test]
    fn lorentz_alignment_gradient_passes_fd() {
        let space = Space::lorentz(-1.0).unwrap();
        let geo = DiffSpace::new(space);
        let emb = batch(space, 5, 1.5, 9);
        // Parametrize by spatial tangent coordinates so FD stays on-manifold.
        let tape = Tape::new();
        let x0 = tape.leaf(emb.coords.clone());
        let u0 = geo.log_o_spatial(x0).value();
        let report = grad_check(
            move |_tape, vars| {
                let x = geo.exp_o_spatial(vars[0]);
                let c = geo.center(x, None);
                let aligned = geo.align(x, c);
                Ok(geo.hdo(aligned).mean())
            },
            &[u0],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {:.3e}", report.max_rel_err);
    }
}
