//! Curvature instrumentation for the architecture parameters.
//!
//! Hessian-vector products of the validation loss w.r.t. α are taken by
//! central differences of the analytic α-gradient; power iteration on that
//! operator gives the dominant eigenvalue tracked during the search.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{BdpError, Result};
use crate::numcore::{argmax, norm2, power_iteration, Mat64, RngStream, Vec64};
use crate::supernet::{ArchParams, Genotype, OpKind, SpaceConfig, Supernet};

pub const EIGEN_MAX_ITERS: usize = 50;
pub const EIGEN_TOL: f64 = 1e-4;

/// One row of the search trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub remaining_train: usize,
    pub remaining_val: usize,
    pub balance_train: f64,
    pub balance_val: f64,
    pub eig_max: Option<f64>,
}

/// Finite-difference step used for the α Hessian: `1e-3 (‖α‖ + 1)`.
pub fn hvp_step(alpha: &[f64]) -> f64 {
    1e-3 * (norm2(alpha) + 1.0)
}

/// `(∇L(α + h v̂) − ∇L(α − h v̂)) / 2h · ‖v‖` with `v̂ = v / ‖v‖`.
pub fn hvp<F>(mut grad: F, alpha: &[f64], v: &[f64], h: f64) -> Result<Vec64>
where
    F: FnMut(&[f64]) -> Result<Vec64>,
{
    if v.len() != alpha.len() {
        return Err(BdpError::LengthMismatch {
            expected: alpha.len(),
            actual: v.len(),
        });
    }
    let nv = norm2(v);
    if !(nv >= 1e-12) {
        return Err(BdpError::InvalidConfig("hvp direction has (near) zero norm".into()));
    }
    if !(h > 0.0) {
        return Err(BdpError::InvalidConfig("hvp step must be positive".into()));
    }
    let probe = |sign: f64| -> Vec64 { alpha.iter().zip(v).map(|(a, vi)| a + sign * h * vi / nv).collect() };
    let gp = grad(&probe(1.0))?;
    let gm = grad(&probe(-1.0))?;
    if gp.len() != alpha.len() || gm.len() != alpha.len() {
        return Err(BdpError::LengthMismatch {
            expected: alpha.len(),
            actual: gp.len(),
        });
    }
    if gp.iter().chain(&gm).any(|g| !g.is_finite()) {
        return Err(BdpError::NonFiniteGradient("hvp probe".into()));
    }
    Ok(gp.iter().zip(&gm).map(|(p, m)| (p - m) / (2.0 * h) * nv).collect())
}

/// Dominant eigenvalue of the Hessian of an arbitrary loss given its
/// gradient, by power iteration over [`hvp`].
pub fn dominant_eigenvalue_of<F>(mut grad: F, alpha: &[f64], rng: &mut RngStream) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec64>,
{
    let h = hvp_step(alpha);
    let (lambda, _) = power_iteration(
        |v| hvp(&mut grad, alpha, v, h),
        alpha.len(),
        EIGEN_MAX_ITERS,
        EIGEN_TOL,
        rng,
    )?;
    Ok(lambda)
}

/// ∇α of the mean validation loss over `val_ids`, as a flat vector.
pub fn val_alpha_gradient<'a>(
    net: &'a Supernet,
    data: &'a Dataset,
    val_ids: &[usize],
    rows: usize,
    cols: usize,
) -> impl FnMut(&[f64]) -> Result<Vec64> + 'a {
    let xs: Vec<&[f64]> = val_ids.iter().map(|&i| data.x(i)).collect();
    let ys: Vec<usize> = val_ids.iter().map(|&i| data.labels[i]).collect();
    move |flat: &[f64]| {
        let alpha = ArchParams {
            alpha: Mat64::from_vec(rows, cols, flat.to_vec())?,
        };
        Ok(net.batch_gradients(&alpha, &xs, &ys)?.grad_alpha.into_vec())
    }
}

/// Dominant eigenvalue of ∇²α L_val over the full active validation set.
pub fn dominant_eigenvalue(
    net: &Supernet,
    alpha: &ArchParams,
    data: &Dataset,
    val_ids: &[usize],
    rng: &mut RngStream,
) -> Result<f64> {
    if val_ids.is_empty() {
        return Err(BdpError::SetExhausted("validation"));
    }
    let (rows, cols) = alpha.alpha.shape();
    let grad = val_alpha_gradient(net, data, val_ids, rows, cols);
    dominant_eigenvalue_of(grad, alpha.alpha.as_slice(), rng)
}

/// Space in which the discretization distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSpace {
    /// One-hot rows against softmax(α*) rows.
    #[default]
    Softmax,
    /// One-hot rows against raw α* rows.
    Raw,
}

/// `|λ| · ‖α̂ − α*‖²_F` with α̂ the one-hot encoding of `genotype`.
pub fn taylor_bound(eig: f64, alpha_star: &ArchParams, genotype: &Genotype, space: BoundSpace) -> Result<f64> {
    let (rows, cols) = alpha_star.alpha.shape();
    if genotype.chosen_op.len() != rows {
        return Err(BdpError::ShapeMismatch {
            expected: (rows, cols),
            actual: (genotype.chosen_op.len(), cols),
        });
    }
    if genotype.chosen_op.iter().any(|&k| k >= cols) {
        return Err(BdpError::InvalidGenotype("op index outside α columns".into()));
    }
    let reference = match space {
        BoundSpace::Softmax => alpha_star.betas()?,
        BoundSpace::Raw => alpha_star.alpha.clone(),
    };
    let mut dist2 = 0.0;
    for (r, &k) in genotype.chosen_op.iter().enumerate() {
        for (c, &v) in reference.row(r).iter().enumerate() {
            let hot = if c == k { 1.0 } else { 0.0 };
            dist2 += (hot - v) * (hot - v);
        }
    }
    Ok(eig.abs() * dist2)
}

/// β per edge with the argmax column marked.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub edges: Vec<String>,
    pub ops: Vec<OpKind>,
    pub betas: Mat64,
    pub chosen: Vec<usize>,
}

pub fn export_heatmap(alpha: &ArchParams, space: &SpaceConfig) -> Result<Heatmap> {
    let want = (space.total_edges(), space.num_ops());
    if alpha.alpha.shape() != want {
        return Err(BdpError::ShapeMismatch {
            expected: want,
            actual: alpha.alpha.shape(),
        });
    }
    let betas = alpha.betas()?;
    let chosen = (0..betas.rows()).map(|r| argmax(alpha.alpha.row(r))).collect();
    Ok(Heatmap {
        edges: space.edges().iter().map(ToString::to_string).collect(),
        ops: space.candidate_ops.clone(),
        betas,
        chosen,
    })
}

impl Heatmap {
    /// `edge,<op names…>,chosen` with β to 6 decimals, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("edge");
        for op in &self.ops {
            s.push(',');
            s.push_str(op.name());
        }
        s.push_str(",chosen\n");
        for (r, edge) in self.edges.iter().enumerate() {
            s.push_str(edge);
            for v in self.betas.row(r) {
                s.push_str(&format!(",{v:.6}"));
            }
            s.push(',');
            s.push_str(self.ops[self.chosen[r]].name());
            s.push('\n');
        }
        s
    }
}
