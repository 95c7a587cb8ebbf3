use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::{RngState, Tape, Tensor2, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor2>,
    lookup: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor2) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
        self.lookup.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor2> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn count_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Uniform in ±√(6 / (fan_in + fan_out)).
    Glorot,
}

/// Creates parameters (fresh initialization) or resolves them from an
/// existing store (checkpoint restore), checking shapes either way.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: Option<&'a mut RngState>,
}

impl<'a> ParamBuilder<'a> {
    pub fn init(store: &'a mut ParamStore, rng: &'a mut RngState) -> Self {
        Self { store, rng: Some(rng) }
    }

    pub fn restore(store: &'a mut ParamStore) -> Self {
        Self { store, rng: None }
    }

    pub fn param(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> Result<ParamId> {
        match self.rng.as_deref_mut() {
            Some(rng) => {
                let t = match init {
                    Init::Zeros => Tensor2::zeros(rows, cols),
                    Init::Glorot => {
                        let a = (6.0 / (rows + cols) as f64).sqrt();
                        Tensor2::from_raw(rows, cols, (0..rows * cols).map(|_| rng.uniform_range(-a, a)).collect())
                    }
                };
                self.store.insert(name, t)
            }
            None => {
                let id = self
                    .store
                    .id(name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
                let got = self.store.get(id).shape();
                if got != (rows, cols) {
                    return Err(Error::Checkpoint(format!(
                        "parameter `{name}` is {}x{}, model expects {rows}x{cols}",
                        got.0, got.1
                    )));
                }
                Ok(id)
            }
        }
    }
}

/// A tape bound to a parameter store. Parameters become leaves lazily, once
/// per graph, so shared weights accumulate gradient from every use.
pub struct Graph<'s> {
    pub tape: Tape,
    store: &'s ParamStore,
    bound: Vec<Option<Var>>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn input(&mut self, t: Tensor2) -> Var {
        self.tape.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        self.tape.value(v)
    }

    /// Gradients of `loss` for every parameter this graph touched.
    pub fn param_grads(&self, loss: Var) -> Vec<(ParamId, Tensor2)> {
        let mut grads = self.tape.backward(loss);
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let v = (*v)?;
                let g = grads
                    .take(v)
                    .unwrap_or_else(|| Tensor2::zeros(self.store.tensors[i].rows(), self.store.tensors[i].cols()));
                Some((ParamId(i), g))
            })
            .collect()
    }
}

/// Affine map `x · W + b` with `W: in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder<'_>, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Result<Self> {
        let w = pb.param(&format!("{name}.weight"), fan_in, fan_out, Init::Glorot)?;
        let b = if bias {
            Some(pb.param(&format!("{name}.bias"), 1, fan_out, Init::Zeros)?)
        } else {
            None
        };
        Ok(Self { w, b })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.w);
        let y = g.tape.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.tape.add_row(y, b)
            }
            None => y,
        }
    }
}

/// Inverted dropout: active only when an RNG is supplied.
pub fn dropout(g: &mut Graph<'_>, x: Var, p: f64, rng: Option<&mut RngState>) -> Var {
    let Some(rng) = rng else { return x };
    if p <= 0.0 {
        return x;
    }
    let (r, c) = g.value(x).shape();
    let keep = 1.0 / (1.0 - p);
    let mask = Tensor2::from_raw(r, c, (0..r * c).map(|_| if rng.uniform() < p { 0.0 } else { keep }).collect());
    g.tape.mul_const(x, mask)
}
