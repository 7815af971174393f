//! Affine coupling: the first `keep` coordinates pass through unchanged and
//! parameterize an elementwise scale and shift of the rest. The Jacobian is
//! triangular, so the log-determinant is just the sum of the log-scales.

use crate::error::{Error, Result};
use crate::params::{affine_init, ParamId, ParamSet, TapeBinding};
use crate::scalar::Scalar;
use crate::tensor::{Reduce, Tape, TensorId};
use rand::Rng;

/// Small MLP with additive skip connections. The final layer is
/// zero-initialized so a fresh network outputs exactly zero, which makes a
/// fresh coupling the identity map.
#[derive(Debug, Clone)]
pub struct ResidualMlp {
    input_w: ParamId,
    input_b: ParamId,
    /// Per block: (w1, b1, w2); block(h) = h + tanh(h*w1 + b1)*w2.
    blocks: Vec<(ParamId, ParamId, ParamId)>,
    head_w: ParamId,
    head_b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl ResidualMlp {
    pub fn new<S: Scalar>(
        params: &mut ParamSet<S>,
        prefix: &str,
        d_in: usize,
        width: usize,
        n_blocks: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let (w, b) = affine_init(rng, d_in, width);
        let input_w = params.alloc(format!("{prefix}.in.w"), vec![d_in, width], w);
        let input_b = params.alloc(format!("{prefix}.in.b"), vec![width], b);
        let mut blocks = Vec::with_capacity(n_blocks);
        for i in 0..n_blocks {
            let (w1, b1) = affine_init(rng, width, width);
            let (w2, _) = affine_init(rng, width, width);
            blocks.push((
                params.alloc(format!("{prefix}.res{i}.w1"), vec![width, width], w1),
                params.alloc(format!("{prefix}.res{i}.b1"), vec![width], b1),
                params.alloc(format!("{prefix}.res{i}.w2"), vec![width, width], w2),
            ));
        }
        let head_w = params.alloc(
            format!("{prefix}.head.w"),
            vec![width, d_out],
            vec![S::zero(); width * d_out],
        );
        let head_b = params.alloc(format!("{prefix}.head.b"), vec![d_out], vec![S::zero(); d_out]);
        ResidualMlp {
            input_w,
            input_b,
            blocks,
            head_w,
            head_b,
            d_in,
            d_out,
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bind: &TapeBinding,
        x: TensorId,
    ) -> Result<TensorId> {
        let pre = tape.affine(x, bind.id(self.input_w), bind.id(self.input_b))?;
        let mut h = tape.tanh(pre)?;
        for &(w1, b1, w2) in &self.blocks {
            let a = tape.affine(h, bind.id(w1), bind.id(b1))?;
            let t = tape.tanh(a)?;
            let d = tape.matmul(t, bind.id(w2))?;
            h = tape.add(h, d)?;
        }
        tape.affine(h, bind.id(self.head_w), bind.id(self.head_b))
    }
}

#[derive(Debug, Clone)]
pub struct Coupling {
    pub dim: usize,
    /// Width of the pass-through partition; the remaining `dim - keep`
    /// coordinates are transformed.
    pub keep: usize,
    pub cond_dim: usize,
    /// Raw scale-net outputs are squashed to (-clamp, clamp) before
    /// exponentiation, bounding each factor away from overflow.
    pub scale_clamp: f64,
    scale_net: ResidualMlp,
    shift_net: ResidualMlp,
}

impl Coupling {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar>(
        params: &mut ParamSet<S>,
        prefix: &str,
        dim: usize,
        keep: usize,
        cond_dim: usize,
        width: usize,
        resnet_blocks: usize,
        scale_clamp: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if keep == 0 || keep >= dim {
            return Err(Error::InvalidArgument(format!(
                "coupling: partition must leave both sides nonempty, keep={keep} dim={dim}"
            )));
        }
        if !(scale_clamp.is_finite() && scale_clamp > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coupling: scale clamp must be positive, got {scale_clamp}"
            )));
        }
        let d_in = keep + cond_dim;
        let d_out = dim - keep;
        let scale_net = ResidualMlp::new(params, &format!("{prefix}.scale"), d_in, width, resnet_blocks, d_out, rng);
        let shift_net = ResidualMlp::new(params, &format!("{prefix}.shift"), d_in, width, resnet_blocks, d_out, rng);
        Ok(Coupling {
            dim,
            keep,
            cond_dim,
            scale_clamp,
            scale_net,
            shift_net,
        })
    }

    /// Log-scales and shifts as functions of the pass-through part and the
    /// (already row-broadcast) conditioning input.
    fn scale_shift<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bind: &TapeBinding,
        kept: TensorId,
        cond: Option<TensorId>,
    ) -> Result<(TensorId, TensorId)> {
        let net_in = match cond {
            Some(c) => tape.concat(&[kept, c])?,
            None => kept,
        };
        let raw = self.scale_net.forward(tape, bind, net_in)?;
        let squashed = tape.tanh(raw)?;
        let s = tape.mul_scalar(squashed, S::from_f64(self.scale_clamp))?;
        let a = self.shift_net.forward(tape, bind, net_in)?;
        Ok((s, a))
    }

    /// Returns the transformed batch and the per-row log-determinant.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bind: &TapeBinding,
        y: TensorId,
        cond: Option<TensorId>,
    ) -> Result<(TensorId, TensorId)> {
        self.check_input(tape, y, cond)?;
        let kept = tape.slice_cols(y, 0, self.keep)?;
        let rest = tape.slice_cols(y, self.keep, self.dim - self.keep)?;
        let (s, a) = self.scale_shift(tape, bind, kept, cond)?;
        let scale = tape.exp(s)?;
        let scaled = tape.mul(rest, scale)?;
        let moved = tape.add(scaled, a)?;
        let out = tape.concat(&[kept, moved])?;
        let logdet = tape.sum(s, Reduce::Axis(1))?;
        Ok((out, logdet))
    }

    /// Exact inverse: the pass-through part reproduces the same scales and
    /// shifts, which are then undone.
    pub fn inverse<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bind: &TapeBinding,
        z: TensorId,
        cond: Option<TensorId>,
    ) -> Result<TensorId> {
        self.check_input(tape, z, cond)?;
        let kept = tape.slice_cols(z, 0, self.keep)?;
        let rest = tape.slice_cols(z, self.keep, self.dim - self.keep)?;
        let (s, a) = self.scale_shift(tape, bind, kept, cond)?;
        let neg_s = tape.mul_scalar(s, -S::one())?;
        let inv_scale = tape.exp(neg_s)?;
        let unmoved = tape.sub(rest, a)?;
        let unscaled = tape.mul(unmoved, inv_scale)?;
        tape.concat(&[kept, unscaled])
    }

    fn check_input<S: Scalar>(
        &self,
        tape: &Tape<S>,
        y: TensorId,
        cond: Option<TensorId>,
    ) -> Result<()> {
        let s = tape.shape(y);
        if s.len() != 2 || s[1] != self.dim {
            return Err(Error::ShapeMismatch {
                op: "coupling",
                lhs: s.to_vec(),
                rhs: vec![s.first().copied().unwrap_or(0), self.dim],
            });
        }
        match (self.cond_dim, cond) {
            (0, None) => Ok(()),
            (d, Some(c)) if tape.shape(c) == [s[0], d] => Ok(()),
            (d, Some(c)) => Err(Error::ShapeMismatch {
                op: "coupling conditioning",
                lhs: tape.shape(c).to_vec(),
                rhs: vec![s[0], d],
            }),
            (d, None) => Err(Error::InvalidArgument(format!(
                "coupling expects {d}-dim conditioning, got none"
            ))),
        }
    }
}
