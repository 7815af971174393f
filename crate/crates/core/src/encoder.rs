//! Permutation-invariant set encoder: a shared per-point feature stack, a
//! max-pool over the set, and an affine head down to the embedding width.
//! Pooling by max makes the output invariant to point order and duplication.

use crate::error::{Error, Result};
use crate::params::{affine_init, ParamId, ParamSet, TapeBinding};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorId};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct SetEncoder {
    point_layers: Vec<(ParamId, ParamId)>,
    head_layers: Vec<(ParamId, ParamId)>,
    pub in_dim: usize,
    pub out_dim: usize,
    pooled_width: usize,
}

impl SetEncoder {
    /// `point_widths` are the per-point feature widths, `head_widths` the
    /// hidden widths of the pooled head. The final head layer starts at zero
    /// so a fresh encoder maps every cloud to the zero embedding.
    pub fn new<S: Scalar>(
        params: &mut ParamSet<S>,
        prefix: &str,
        in_dim: usize,
        point_widths: &[usize],
        head_widths: &[usize],
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if point_widths.is_empty() {
            return Err(Error::InvalidArgument(
                "encoder needs at least one per-point layer".into(),
            ));
        }
        let mut point_layers = Vec::new();
        let mut prev = in_dim;
        for (i, &w) in point_widths.iter().enumerate() {
            let (wts, b) = affine_init(rng, prev, w);
            point_layers.push((
                params.alloc(format!("{prefix}.pt{i}.w"), vec![prev, w], wts),
                params.alloc(format!("{prefix}.pt{i}.b"), vec![w], b),
            ));
            prev = w;
        }
        let pooled_width = prev;
        let mut head_layers = Vec::new();
        for (i, &w) in head_widths.iter().enumerate() {
            let (wts, b) = affine_init(rng, prev, w);
            head_layers.push((
                params.alloc(format!("{prefix}.hd{i}.w"), vec![prev, w], wts),
                params.alloc(format!("{prefix}.hd{i}.b"), vec![w], b),
            ));
            prev = w;
        }
        head_layers.push((
            params.alloc(
                format!("{prefix}.out.w"),
                vec![prev, out_dim],
                vec![S::zero(); prev * out_dim],
            ),
            params.alloc(format!("{prefix}.out.b"), vec![out_dim], vec![S::zero(); out_dim]),
        ));
        Ok(SetEncoder {
            point_layers,
            head_layers,
            in_dim,
            out_dim,
            pooled_width,
        })
    }

    /// Encodes an [n, in_dim] cloud into a [1, out_dim] embedding row.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bind: &TapeBinding,
        points: TensorId,
    ) -> Result<TensorId> {
        let shape = tape.shape(points);
        if shape.len() != 2 || shape[1] != self.in_dim {
            return Err(Error::ShapeMismatch {
                op: "encoder",
                lhs: shape.to_vec(),
                rhs: vec![shape.first().copied().unwrap_or(0), self.in_dim],
            });
        }
        if shape[0] == 0 {
            return Err(Error::Data("encoder: empty cloud".into()));
        }
        let mut h = points;
        for &(w, b) in &self.point_layers {
            let a = tape.affine(h, bind.id(w), bind.id(b))?;
            h = tape.relu(a)?;
        }
        let pooled = tape.max(h, 0)?;
        let mut v = tape.reshape(pooled, vec![1, self.pooled_width])?;
        for (i, &(w, b)) in self.head_layers.iter().enumerate() {
            v = tape.affine(v, bind.id(w), bind.id(b))?;
            if i + 1 < self.head_layers.len() {
                v = tape.relu(v)?;
            }
        }
        Ok(v)
    }
}
