//! Per-context recurrent relational encoder.
//!
//! For one context, each history step runs multi-layer relational message
//! passing over that step's sub-graph, mixes the result with the previous
//! entity state through a sigmoid gate, and advances every relation's state
//! with a GRU fed by `[base relation; mean of incident entity states]`.
//!
//! Embeddings are row vectors, so a kernel `W` acts as `e · W`.

use std::collections::BTreeSet;

use rand::Rng;

use crate::event::EventQuintuple;
use crate::numerics::{xavier_init_from, Matrix, ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDims {
    pub entities: usize,
    /// Augmented relation count `|R'|`.
    pub relations: usize,
    pub dim: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GruParams {
    pub w_update: ParamId,
    pub w_reset: ParamId,
    pub w_candidate: ParamId,
    pub u_update: ParamId,
    pub u_reset: ParamId,
    pub u_candidate: ParamId,
    pub b_update: ParamId,
    pub b_reset: ParamId,
    pub b_candidate: ParamId,
}

/// Parameter handles of one context's encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextParams {
    pub entity: ParamId,
    pub relation: ParamId,
    pub neighbor: Vec<ParamId>,
    pub self_loop: Vec<ParamId>,
    pub gate_weight: ParamId,
    pub gate_bias: ParamId,
    pub gru: GruParams,
}

impl ContextParams {
    /// Registers Xavier-initialised weights (zero biases) under `prefix`.
    pub fn register(store: &mut ParamStore, prefix: &str, dims: EncoderDims, rng: &mut impl Rng) -> Result<Self> {
        if dims.layers == 0 || dims.dim == 0 || dims.entities == 0 || dims.relations == 0 {
            return Err(Error::validation(format!("invalid encoder dimensions {dims:?}")));
        }
        let d = dims.dim;
        let mut xavier = |store: &mut ParamStore, name: &str, r: usize, c: usize| {
            store.add(format!("{prefix}.{name}"), xavier_init_from(r, c, rng)?)
        };
        let entity = xavier(store, "entity", dims.entities, d)?;
        let relation = xavier(store, "relation", dims.relations, d)?;
        let mut neighbor = Vec::with_capacity(dims.layers);
        let mut self_loop = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            neighbor.push(xavier(store, &format!("layer{l}.neighbor"), d, d)?);
            self_loop.push(xavier(store, &format!("layer{l}.self"), d, d)?);
        }
        let gate_weight = xavier(store, "gate.weight", d, d)?;
        let w_update = xavier(store, "gru.w_update", 2 * d, d)?;
        let w_reset = xavier(store, "gru.w_reset", 2 * d, d)?;
        let w_candidate = xavier(store, "gru.w_candidate", 2 * d, d)?;
        let u_update = xavier(store, "gru.u_update", d, d)?;
        let u_reset = xavier(store, "gru.u_reset", d, d)?;
        let u_candidate = xavier(store, "gru.u_candidate", d, d)?;
        let mut zeros = |name: &str| store.add(format!("{prefix}.{name}"), Matrix::zeros(1, d));
        let gate_bias = zeros("gate.bias")?;
        let gru = GruParams {
            w_update,
            w_reset,
            w_candidate,
            u_update,
            u_reset,
            u_candidate,
            b_update: zeros("gru.b_update")?,
            b_reset: zeros("gru.b_reset")?,
            b_candidate: zeros("gru.b_candidate")?,
        };
        Ok(ContextParams {
            entity,
            relation,
            neighbor,
            self_loop,
            gate_weight,
            gate_bias,
            gru,
        })
    }

    /// Looks the handles up by name in a restored store.
    pub fn lookup(store: &ParamStore, prefix: &str, layers: usize) -> Result<Self> {
        let get = |name: &str| {
            let full = format!("{prefix}.{name}");
            store
                .id(&full)
                .ok_or_else(|| Error::Format(format!("missing tensor {full}")))
        };
        Ok(ContextParams {
            entity: get("entity")?,
            relation: get("relation")?,
            neighbor: (0..layers).map(|l| get(&format!("layer{l}.neighbor"))).collect::<Result<_>>()?,
            self_loop: (0..layers).map(|l| get(&format!("layer{l}.self"))).collect::<Result<_>>()?,
            gate_weight: get("gate.weight")?,
            gate_bias: get("gate.bias")?,
            gru: GruParams {
                w_update: get("gru.w_update")?,
                w_reset: get("gru.w_reset")?,
                w_candidate: get("gru.w_candidate")?,
                u_update: get("gru.u_update")?,
                u_reset: get("gru.u_reset")?,
                u_candidate: get("gru.u_candidate")?,
                b_update: get("gru.b_update")?,
                b_reset: get("gru.b_reset")?,
                b_candidate: get("gru.b_candidate")?,
            },
        })
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> ContextVars {
        let mut p = |id: ParamId| tape.param(store, id);
        ContextVars {
            entity: p(self.entity),
            relation: p(self.relation),
            layers: self
                .neighbor
                .iter()
                .zip(&self.self_loop)
                .map(|(&n, &s)| LayerVars {
                    neighbor: p(n),
                    self_loop: p(s),
                })
                .collect(),
            gate_weight: p(self.gate_weight),
            gate_bias: p(self.gate_bias),
            gru: GruVars {
                w_update: p(self.gru.w_update),
                w_reset: p(self.gru.w_reset),
                w_candidate: p(self.gru.w_candidate),
                u_update: p(self.gru.u_update),
                u_reset: p(self.gru.u_reset),
                u_candidate: p(self.gru.u_candidate),
                b_update: p(self.gru.b_update),
                b_reset: p(self.gru.b_reset),
                b_candidate: p(self.gru.b_candidate),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub neighbor: Var,
    pub self_loop: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_update: Var,
    pub w_reset: Var,
    pub w_candidate: Var,
    pub u_update: Var,
    pub u_reset: Var,
    pub u_candidate: Var,
    pub b_update: Var,
    pub b_reset: Var,
    pub b_candidate: Var,
}

/// [`ContextParams`] bound to a tape.
#[derive(Debug, Clone)]
pub struct ContextVars {
    pub entity: Var,
    pub relation: Var,
    pub layers: Vec<LayerVars>,
    pub gate_weight: Var,
    pub gate_bias: Var,
    pub gru: GruVars,
}

/// Evolved entity and relation tables of one context.
#[derive(Debug, Clone, Copy)]
pub struct ContextState {
    pub entities: Var,
    pub relations: Var,
}

fn check_ids(sub_graph: &[EventQuintuple], entities: usize, relations: usize) -> Result<()> {
    for e in sub_graph {
        if e.subject >= entities || e.object >= entities || e.relation >= relations {
            return Err(Error::validation(format!(
                "event {e:?} outside {entities} entities / {relations} relations"
            )));
        }
    }
    Ok(())
}

/// Multi-layer relational message passing; returns `Σ_{l=0..L} e^l`.
///
/// Layer `l` gives object `o` the value
/// `rrelu(mean_{(s,r)→o}(e_s + r) · W1 + e_o · W2)`; entities without
/// incoming events keep only the self term.
pub fn concurrent_encode(
    tape: &mut Tape,
    sub_graph: &[EventQuintuple],
    entity_in: Var,
    relation_in: Var,
    layers: &[LayerVars],
) -> Result<Var> {
    let (n_ent, d) = tape.value(entity_in).shape();
    let (n_rel, rd) = tape.value(relation_in).shape();
    if rd != d {
        return Err(Error::validation(format!(
            "entity width {d} differs from relation width {rd}"
        )));
    }
    check_ids(sub_graph, n_ent, n_rel)?;

    let mut in_degree = vec![0usize; n_ent];
    for e in sub_graph {
        in_degree[e.object] += 1;
    }
    let mean_entries: Vec<(usize, usize, f64)> = sub_graph
        .iter()
        .enumerate()
        .map(|(i, e)| (e.object, i, 1.0 / in_degree[e.object] as f64))
        .collect();
    let subjects: Vec<usize> = sub_graph.iter().map(|e| e.subject).collect();
    let relations: Vec<usize> = sub_graph.iter().map(|e| e.relation).collect();
    let rel_rows = if sub_graph.is_empty() {
        None
    } else {
        Some(tape.gather_rows(relation_in, relations)?)
    };

    let mut h = entity_in;
    let mut total = entity_in;
    for layer in layers {
        let self_term = tape.matmul(h, layer.self_loop)?;
        let pre = match rel_rows {
            Some(rel_rows) => {
                let subj = tape.gather_rows(h, subjects.clone())?;
                let msg = tape.add(subj, rel_rows)?;
                let mean = tape.sparse_rows(msg, mean_entries.clone(), n_ent)?;
                let neigh = tape.matmul(mean, layer.neighbor)?;
                tape.add(neigh, self_term)?
            }
            None => self_term,
        };
        h = tape.rrelu(pre);
        total = tape.add(total, h)?;
    }
    Ok(total)
}

/// `u ⊙ curr + (1 − u) ⊙ prev` with `u = sigmoid(prev · W + b)` per row.
pub fn temporal_gate(tape: &mut Tape, prev: Var, curr: Var, weight: Var, bias: Var) -> Result<Var> {
    if tape.value(prev).shape() != tape.value(curr).shape() {
        return Err(Error::validation("temporal gate inputs differ in shape"));
    }
    let lin = tape.matmul(prev, weight)?;
    let lin = tape.add_row(lin, bias)?;
    let u = tape.sigmoid(lin);
    let keep = tape.affine(u, -1.0, 1.0);
    let fresh = tape.mul(u, curr)?;
    let old = tape.mul(keep, prev)?;
    tape.add(fresh, old)
}

/// One GRU step: `z, r` gates, `h̃ = tanh(x·W + (r⊙h)·U + b)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_step(tape: &mut Tape, input: Var, hidden: Var, gru: &GruVars) -> Result<Var> {
    let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, h: Var| -> Result<Var> {
        let xw = tape.matmul(input, w)?;
        let hu = tape.matmul(h, u)?;
        let s = tape.add(xw, hu)?;
        tape.add_row(s, b)
    };
    let z = gate(tape, gru.w_update, gru.u_update, gru.b_update, hidden)?;
    let z = tape.sigmoid(z);
    let r = gate(tape, gru.w_reset, gru.u_reset, gru.b_reset, hidden)?;
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, hidden)?;
    let cand = gate(tape, gru.w_candidate, gru.u_candidate, gru.b_candidate, rh)?;
    let cand = tape.tanh(cand);
    let keep = tape.affine(z, -1.0, 1.0);
    let old = tape.mul(keep, hidden)?;
    let new = tape.mul(z, cand)?;
    tape.add(old, new)
}

/// Advances every relation state by one GRU step.
///
/// Relation `x` receives `[r_x; mean of entity_states over entities touching x]`
/// (zero pooled vector when `x` does not occur in `sub_graph`).
pub fn relation_step(
    tape: &mut Tape,
    sub_graph: &[EventQuintuple],
    relation_prev: Var,
    entity_states: Var,
    relation_base: Var,
    gru: &GruVars,
) -> Result<Var> {
    let (n_rel, d) = tape.value(relation_prev).shape();
    let (n_ent, ed) = tape.value(entity_states).shape();
    if tape.value(relation_base).shape() != (n_rel, d) || ed != d {
        return Err(Error::validation("relation step inputs differ in shape"));
    }
    check_ids(sub_graph, n_ent, n_rel)?;

    let mut touching: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_rel];
    for e in sub_graph {
        touching[e.relation].insert(e.subject);
        touching[e.relation].insert(e.object);
    }
    let entries = touching
        .iter()
        .enumerate()
        .flat_map(|(x, set)| {
            let w = 1.0 / set.len() as f64;
            set.iter().map(move |&v| (x, v, w))
        })
        .collect();
    let pooled = tape.sparse_rows(entity_states, entries, n_rel)?;
    let input = tape.concat_cols(relation_base, pooled)?;
    gru_step(tape, input, relation_prev, gru)
}

/// Runs the encoder over a context's history window (oldest first).
pub fn encode_context(tape: &mut Tape, history: &[&[EventQuintuple]], params: &ContextVars) -> Result<ContextState> {
    let mut entities = params.entity;
    let mut relations = params.relation;
    for sub_graph in history {
        let encoded = concurrent_encode(tape, sub_graph, entities, relations, &params.layers)?;
        entities = temporal_gate(tape, entities, encoded, params.gate_weight, params.gate_bias)?;
        relations = relation_step(tape, sub_graph, relations, entities, params.relation, &params.gru)?;
    }
    Ok(ContextState { entities, relations })
}
