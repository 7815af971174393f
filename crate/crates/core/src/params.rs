//! Named parameter storage. Layers allocate parameters here at construction
//! and hold opaque handles; a forward pass binds the whole set onto a tape
//! as leaves and the training loop reads gradients back per handle.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorId};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet<S> {
    entries: Vec<Param<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
        }
    }

    /// Block names must be unique; they key the checkpoint format.
    pub fn alloc(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<S>) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.entries.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.entries.push(Param { name, shape, data });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.data.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param<S> {
        &self.entries[id.0]
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut Vec<S> {
        &mut self.entries[id.0].data
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.entries.iter_mut()
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Param<S>> {
        self.entries.iter_mut().find(|p| p.name == name)
    }

    /// All scalars in allocation order, for whole-model gradient checks.
    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.n_scalars());
        for p in &self.entries {
            out.extend_from_slice(&p.data);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.n_scalars() {
            return Err(Error::InvalidArgument(format!(
                "unflatten: expected {} scalars, got {}",
                self.n_scalars(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in &mut self.entries {
            let len = p.data.len();
            p.data.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Overwrites every parameter with uniform draws in (-scale, scale).
    /// Used by tests and gradient checks that want a non-identity model.
    pub fn randomize(&mut self, rng: &mut impl Rng, scale: f64) {
        for p in &mut self.entries {
            for v in &mut p.data {
                *v = S::from_f64(rng.random_range(-scale..scale));
            }
        }
    }
}

/// ParamId -> TensorId mapping for one tape.
pub struct TapeBinding {
    ids: Vec<TensorId>,
}

impl TapeBinding {
    pub fn id(&self, p: ParamId) -> TensorId {
        self.ids[p.0]
    }
}

/// Leafs every parameter onto `tape`. With `trainable` false nothing on the
/// tape requires gradients, so inference pays no backward bookkeeping.
pub fn bind<S: Scalar>(
    tape: &mut Tape<S>,
    params: &ParamSet<S>,
    trainable: bool,
) -> Result<TapeBinding> {
    let mut ids = Vec::with_capacity(params.len());
    for p in params.iter() {
        ids.push(tape.leaf(p.data.clone(), p.shape.clone(), trainable)?);
    }
    Ok(TapeBinding { ids })
}

/// Like [`bind`], but parameter `index` (in allocation order) is replaced by
/// `substitute`, an existing tensor of the same shape. Everything else goes
/// on the tape as a constant. This lets a finite-difference checker treat one
/// parameter tensor as the function input.
pub fn bind_substituting<S: Scalar>(
    tape: &mut Tape<S>,
    params: &ParamSet<S>,
    index: usize,
    substitute: TensorId,
) -> Result<TapeBinding> {
    if index >= params.len() {
        return Err(Error::InvalidArgument(format!(
            "bind: parameter index {index} out of range ({} parameters)",
            params.len()
        )));
    }
    if tape.shape(substitute) != params.iter().nth(index).expect("checked").shape {
        return Err(Error::ShapeMismatch {
            op: "bind substitute",
            lhs: params.iter().nth(index).expect("checked").shape.clone(),
            rhs: tape.shape(substitute).to_vec(),
        });
    }
    let mut ids = Vec::with_capacity(params.len());
    for (i, p) in params.iter().enumerate() {
        if i == index {
            ids.push(substitute);
        } else {
            ids.push(tape.leaf(p.data.clone(), p.shape.clone(), false)?);
        }
    }
    Ok(TapeBinding { ids })
}

/// Per-parameter gradients after a backward pass, zeros for parameters the
/// root did not depend on. Order matches the allocation order of `params`.
pub fn gradients<S: Scalar>(
    tape: &Tape<S>,
    binding: &TapeBinding,
    params: &ParamSet<S>,
) -> Vec<Vec<S>> {
    params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            tape.grad(binding.ids[i])
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![S::zero(); p.data.len()])
        })
        .collect()
}

/// Uniform Kaiming-style init for an affine layer: weights in
/// (-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias.
pub fn affine_init<S: Scalar>(
    rng: &mut impl Rng,
    fan_in: usize,
    fan_out: usize,
) -> (Vec<S>, Vec<S>) {
    let bound = (1.0 / fan_in as f64).sqrt();
    let w = (0..fan_in * fan_out)
        .map(|_| S::from_f64(rng.random_range(-bound..bound)))
        .collect();
    let b = vec![S::zero(); fan_out];
    (w, b)
}
