//! Invertible flow stacks. A stack composes coupling blocks with fixed
//! permutations (and optionally rotations); forward maps data to the base
//! space accumulating per-row log-determinants, inverse maps base samples
//! back to data.

mod coupling;
mod rotation;

pub use coupling::{Coupling, ResidualMlp};
pub use rotation::{rotate_points, rotation_distance, rotation_matrix, RotationLayer};

use crate::error::{Error, Result};
use crate::params::{ParamSet, TapeBinding};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorId};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub enum Layer {
    Coupling(Coupling),
    /// Column permutation; contributes no log-determinant.
    Permutation(Vec<usize>),
    Rotation(RotationLayer),
}

/// Architecture knobs shared by both stacks in the model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StackShape {
    pub segments: usize,
    pub blocks_per_segment: usize,
    pub hidden_width: usize,
    pub resnet_blocks: usize,
    pub scale_clamp: f64,
}

#[derive(Debug, Clone)]
pub struct FlowStack {
    pub dim: usize,
    pub cond_dim: usize,
    pub layers: Vec<Layer>,
}

impl FlowStack {
    /// Builds `segments * blocks_per_segment` couplings, each followed by a
    /// seed-derived permutation. Partition widths alternate between
    /// floor(dim/2) and ceil(dim/2), so odd dims swap the narrow and wide
    /// sides block by block and even dims split in halves.
    pub fn new<S: Scalar>(
        params: &mut ParamSet<S>,
        prefix: &str,
        dim: usize,
        cond_dim: usize,
        shape: &StackShape,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "flow stack needs dim >= 2 to partition, got {dim}"
            )));
        }
        let mut layers = Vec::new();
        let mut index = 0;
        for seg in 0..shape.segments {
            for blk in 0..shape.blocks_per_segment {
                let keep = if index % 2 == 0 { dim / 2 } else { dim - dim / 2 };
                let coupling = Coupling::new(
                    params,
                    &format!("{prefix}.s{seg}.b{blk}"),
                    dim,
                    keep,
                    cond_dim,
                    shape.hidden_width,
                    shape.resnet_blocks,
                    shape.scale_clamp,
                    rng,
                )?;
                layers.push(Layer::Coupling(coupling));
                let mut perm: Vec<usize> = (0..dim).collect();
                perm.shuffle(rng);
                layers.push(Layer::Permutation(perm));
                index += 1;
            }
        }
        Ok(FlowStack {
            dim,
            cond_dim,
            layers,
        })
    }

    pub fn empty(dim: usize, cond_dim: usize) -> Self {
        FlowStack {
            dim,
            cond_dim,
            layers: Vec::new(),
        }
    }

    pub fn couplings(&self) -> impl Iterator<Item = &Coupling> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Coupling(c) => Some(c),
            _ => None,
        })
    }

    pub fn permutations(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Permutation(p) => Some(p.clone()),
                _ => None,
            })
            .collect()
    }

    /// Replaces permutation layers in order; used when restoring a model
    /// whose permutations are recorded externally.
    pub fn set_permutations(&mut self, perms: &[Vec<usize>]) -> Result<()> {
        let slots: Vec<&mut Layer> = self
            .layers
            .iter_mut()
            .filter(|l| matches!(l, Layer::Permutation(_)))
            .collect();
        if slots.len() != perms.len() {
            return Err(Error::InvalidArgument(format!(
                "stack has {} permutations, got {}",
                slots.len(),
                perms.len()
            )));
        }
        for (slot, perm) in slots.into_iter().zip(perms) {
            let mut seen = vec![false; self.dim];
            if perm.len() != self.dim || perm.iter().any(|&i| i >= self.dim || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::InvalidArgument(format!(
                    "not a permutation of 0..{}: {perm:?}",
                    self.dim
                )));
            }
            *slot = Layer::Permutation(perm.clone());
        }
        Ok(())
    }

    fn check_cond<S: Scalar>(&self, tape: &Tape<S>, cond: Option<TensorId>) -> Result<()> {
        match (self.cond_dim, cond) {
            (0, None) => Ok(()),
            (d, Some(c)) if tape.shape(c).len() == 1 && tape.shape(c)[0] == d => Ok(()),
            (d, Some(c)) => Err(Error::ShapeMismatch {
                op: "flow conditioning",
                lhs: tape.shape(c).to_vec(),
                rhs: vec![d],
            }),
            (d, None) => Err(Error::InvalidArgument(format!(
                "flow expects {d}-dim conditioning, got none"
            ))),
        }
    }

    /// Data to base. Returns the mapped batch and per-row log |det J|.
    /// `cond` is a rank-1 embedding broadcast across the batch.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bind: &TapeBinding,
        x: TensorId,
        cond: Option<TensorId>,
    ) -> Result<(TensorId, TensorId)> {
        self.check_cond(tape, cond)?;
        let shape = tape.shape(x);
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(Error::ShapeMismatch {
                op: "flow forward",
                lhs: shape.to_vec(),
                rhs: vec![shape.first().copied().unwrap_or(0), self.dim],
            });
        }
        let rows = shape[0];
        let cond_rows = match cond {
            Some(c) => Some(tape.broadcast_rows(c, rows)?),
            None => None,
        };
        let mut h = x;
        let mut logdet = tape.constant(vec![S::zero(); rows], vec![rows])?;
        for layer in &self.layers {
            match layer {
                Layer::Coupling(c) => {
                    let (out, ld) = c.forward(tape, bind, h, cond_rows)?;
                    h = out;
                    logdet = tape.add(logdet, ld)?;
                }
                Layer::Permutation(p) => {
                    h = tape.select_cols(h, p)?;
                }
                Layer::Rotation(r) => {
                    h = r.forward(tape, h)?;
                }
            }
        }
        Ok((h, logdet))
    }

    /// Base to data: layers undone in reverse order.
    pub fn inverse<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bind: &TapeBinding,
        z: TensorId,
        cond: Option<TensorId>,
    ) -> Result<TensorId> {
        self.check_cond(tape, cond)?;
        let shape = tape.shape(z);
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(Error::ShapeMismatch {
                op: "flow inverse",
                lhs: shape.to_vec(),
                rhs: vec![shape.first().copied().unwrap_or(0), self.dim],
            });
        }
        let rows = shape[0];
        let cond_rows = match cond {
            Some(c) => Some(tape.broadcast_rows(c, rows)?),
            None => None,
        };
        let mut h = z;
        for layer in self.layers.iter().rev() {
            match layer {
                Layer::Coupling(c) => {
                    h = c.inverse(tape, bind, h, cond_rows)?;
                }
                Layer::Permutation(p) => {
                    let mut inv = vec![0usize; p.len()];
                    for (i, &t) in p.iter().enumerate() {
                        inv[t] = i;
                    }
                    h = tape.select_cols(h, &inv)?;
                }
                Layer::Rotation(r) => {
                    h = r.inverse(tape, h)?;
                }
            }
        }
        Ok(h)
    }
}
