//! Cross-context collaboration.
//!
//! Every entity (and relation) has one embedding per context. A hyperedge
//! joins the copies of the same id across the contexts it was observed in
//! during training; propagation repeatedly replaces each copy by the mean of
//! the *other* copies and sums all layers:
//!
//! ```text
//! layer_p(v, c) = 1/(|C_v| − 1) · Σ_{i ∈ C_v \ {c}} layer_{p−1}(v, i)   (|C_v| ≥ 2)
//! out(v, c)     = Σ_{p=0..P} layer_p(v, c)
//! ```
//!
//! Ids seen in fewer than two contexts receive no messages.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::event::{SnapshotSequence, Vocab};
use crate::numerics::{LinearMap, Matrix, Tape, Var};
use crate::{Error, Result};

/// Context sets per entity and per (augmented) relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperIncidence {
    pub contexts: usize,
    pub entity_contexts: Vec<Vec<usize>>,
    pub relation_contexts: Vec<Vec<usize>>,
}

impl HyperIncidence {
    /// Ids that never occur in the training data.
    pub fn unseen_entities(&self) -> Vec<usize> {
        unseen(&self.entity_contexts)
    }

    pub fn unseen_relations(&self) -> Vec<usize> {
        unseen(&self.relation_contexts)
    }
}

fn unseen(sets: &[Vec<usize>]) -> Vec<usize> {
    sets.iter()
        .enumerate()
        .filter(|(_, s)| s.is_empty())
        .map(|(i, _)| i)
        .collect()
}

/// Context sets from the training split.
pub fn build_incidence(train: &SnapshotSequence, vocab: &Vocab) -> HyperIncidence {
    let mut ent = vec![BTreeSet::new(); vocab.num_entities()];
    let mut rel = vec![BTreeSet::new(); vocab.num_relations_augmented()];
    for e in train.events() {
        ent[e.subject].insert(e.context);
        ent[e.object].insert(e.context);
        rel[e.relation].insert(e.context);
    }
    let collect = |sets: Vec<BTreeSet<usize>>| sets.into_iter().map(|s| s.into_iter().collect()).collect();
    HyperIncidence {
        contexts: vocab.num_contexts(),
        entity_contexts: collect(ent),
        relation_contexts: collect(rel),
    }
}

fn check_tables(tables: &[Matrix], sets: &[Vec<usize>]) -> Result<(usize, usize)> {
    let first = tables
        .first()
        .ok_or_else(|| Error::validation("propagate needs at least one context table"))?;
    let shape = first.shape();
    if tables.iter().any(|t| t.shape() != shape) {
        return Err(Error::validation("context tables differ in shape"));
    }
    if sets.len() != shape.0 {
        return Err(Error::validation(format!(
            "{} context sets for {} rows",
            sets.len(),
            shape.0
        )));
    }
    let k = tables.len();
    if sets.iter().flatten().any(|&c| c >= k) {
        return Err(Error::validation(format!("context set refers to a context >= K={k}")));
    }
    Ok(shape)
}

/// Runs `layers` propagation rounds over per-context tables.
pub fn propagate(tables: &[Matrix], sets: &[Vec<usize>], layers: usize) -> Result<Vec<Matrix>> {
    check_tables(tables, sets)?;
    Ok(run_layers(tables, sets, layers, forward_message))
}

/// Adjoint of [`propagate`] (used for backpropagation).
pub fn propagate_adjoint(grads: &[Matrix], sets: &[Vec<usize>], layers: usize) -> Result<Vec<Matrix>> {
    check_tables(grads, sets)?;
    Ok(run_layers(grads, sets, layers, adjoint_message))
}

type MessageFn = fn(&[Matrix], &[usize], usize, usize, &mut [f64]) -> bool;

fn run_layers(tables: &[Matrix], sets: &[Vec<usize>], layers: usize, message: MessageFn) -> Vec<Matrix> {
    let k = tables.len();
    let (rows, d) = tables[0].shape();
    let mut out = tables.to_vec();
    let mut prev = tables.to_vec();
    for _ in 0..layers {
        let mut next = vec![Matrix::zeros(rows, d); k];
        for (v, set) in sets.iter().enumerate() {
            if set.len() < 2 {
                continue;
            }
            for (c, layer) in next.iter_mut().enumerate() {
                if message(&prev, set, v, c, layer.row_mut(v)) {
                    for (o, m) in out[c].row_mut(v).iter_mut().zip(layer.row(v)) {
                        *o += m;
                    }
                }
            }
        }
        prev = next;
    }
    out
}

fn forward_message(prev: &[Matrix], set: &[usize], v: usize, c: usize, dst: &mut [f64]) -> bool {
    let w = 1.0 / (set.len() - 1) as f64;
    for &i in set.iter().filter(|&&i| i != c) {
        for (o, x) in dst.iter_mut().zip(prev[i].row(v)) {
            *o += w * x;
        }
    }
    true
}

// Transposed coefficient pattern: copy `c ∈ C_v` gathers from every other
// context (in or out of `C_v`); copies outside `C_v` send nothing backwards.
fn adjoint_message(prev: &[Matrix], set: &[usize], v: usize, c: usize, dst: &mut [f64]) -> bool {
    if !set.contains(&c) {
        return false;
    }
    let w = 1.0 / (set.len() - 1) as f64;
    for (_, table) in prev.iter().enumerate().filter(|&(i, _)| i != c) {
        for (o, x) in dst.iter_mut().zip(table.row(v)) {
            *o += w * x;
        }
    }
    true
}

/// Propagation over `K` tables stacked vertically, as a tape [`LinearMap`].
#[derive(Debug, Clone)]
pub struct HyperPropagation {
    sets: Arc<Vec<Vec<usize>>>,
    contexts: usize,
    layers: usize,
}

impl HyperPropagation {
    pub fn new(sets: Arc<Vec<Vec<usize>>>, contexts: usize, layers: usize) -> Self {
        HyperPropagation {
            sets,
            contexts,
            layers,
        }
    }

    fn split(&self, stacked: &Matrix) -> Result<Vec<Matrix>> {
        let (rows, d) = stacked.shape();
        if self.contexts == 0 || rows != self.contexts * self.sets.len() {
            return Err(Error::validation(format!(
                "stacked table has {rows} rows, expected {} x {}",
                self.contexts,
                self.sets.len()
            )));
        }
        let n = self.sets.len();
        stacked
            .as_slice()
            .chunks(n * d)
            .map(|chunk| Matrix::from_vec(n, d, chunk.to_vec()))
            .collect()
    }
}

fn stack(tables: Vec<Matrix>) -> Result<Matrix> {
    let (n, d) = tables[0].shape();
    let k = tables.len();
    let data = tables.into_iter().flat_map(Matrix::into_vec).collect();
    Matrix::from_vec(k * n, d, data)
}

impl LinearMap for HyperPropagation {
    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        stack(propagate(&self.split(x)?, &self.sets, self.layers)?)
    }

    fn apply_adjoint(&self, g: &Matrix) -> Result<Matrix> {
        stack(propagate_adjoint(&self.split(g)?, &self.sets, self.layers)?)
    }
}

/// Tape version of [`propagate`]; `tables[c]` is context `c`'s table.
pub fn collaborate(tape: &mut Tape, tables: &[Var], sets: Arc<Vec<Vec<usize>>>, layers: usize) -> Result<Vec<Var>> {
    let k = tables.len();
    let n = sets.len();
    let stacked = tape.concat_rows(tables.to_vec())?;
    let mixed = tape.linear_map(stacked, Arc::new(HyperPropagation::new(sets, k, layers)))?;
    (0..k).map(|c| tape.slice_rows(mixed, c * n, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::EventQuintuple;

    fn row(v: &[f64]) -> Matrix {
        Matrix::row_vector(v)
    }

    #[test]
    fn singleton_sets_pass_through() {
        let tables = vec![row(&[1.0, -0.0]), row(&[3.0, 4.0])];
        for p in 0..3 {
            let out = propagate(&tables, &[vec![1]], p).unwrap();
            assert_eq!(out, tables);
        }
    }

    #[test]
    fn two_context_hand_cases() {
        let (a, b) = (row(&[1.0, 2.0]), row(&[-3.0, 0.5]));
        let sets = [vec![0, 1]];
        let out = propagate(&[a.clone(), b.clone()], &sets, 1).unwrap();
        let ab = a.zip_map(&b, |x, y| x + y);
        assert!(out[0].max_abs_diff(&ab) < 1e-12);
        assert!(out[1].max_abs_diff(&ab) < 1e-12);
        let out = propagate(&[a.clone(), b.clone()], &sets, 2).unwrap();
        assert!(out[0].max_abs_diff(&a.zip_map(&b, |x, y| 2.0 * x + y)) < 1e-12);
        assert!(out[1].max_abs_diff(&b.zip_map(&a, |x, y| 2.0 * x + y)) < 1e-12);
    }

    #[test]
    fn contexts_outside_the_set_receive_the_set_mean() {
        let t = vec![row(&[1.0]), row(&[3.0]), row(&[100.0])];
        let out = propagate(&t, &[vec![0, 1]], 1).unwrap();
        assert_eq!(out[2].item(), 100.0 + 4.0);
    }

    #[test]
    fn adjoint_matches_dense_transpose() {
        // build the dense operator for one id by probing unit vectors
        let sets = vec![vec![0, 2, 3]];
        let k = 4;
        let layers = 2;
        let probe = |f: fn(&[Matrix], &[Vec<usize>], usize) -> Result<Vec<Matrix>>| {
            let mut dense = vec![vec![0.0; k]; k];
            for j in 0..k {
                let tables: Vec<Matrix> = (0..k).map(|c| row(&[if c == j { 1.0 } else { 0.0 }])).collect();
                let out = f(&tables, &sets, layers).unwrap();
                for (i, m) in out.iter().enumerate() {
                    dense[i][j] = m.item();
                }
            }
            dense
        };
        let fwd = probe(propagate);
        let adj = probe(propagate_adjoint);
        for i in 0..k {
            for j in 0..k {
                assert!((fwd[i][j] - adj[j][i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn incidence_from_training_events() {
        let vocab = Vocab::numbered(4, 1, 3).unwrap();
        let evs = [EventQuintuple::new(3, 0, 1, 0, 1), EventQuintuple::new(1, 1, 0, 0, 2), EventQuintuple::new(0, 0, 1, 1, 0)];
        let seq = SnapshotSequence::from_events(evs, 0, 2).unwrap();
        let inc = build_incidence(&seq, &vocab);
        assert_eq!(inc.entity_contexts[3], vec![1]);
        assert_eq!(inc.entity_contexts[1], vec![0, 1, 2]);
        assert_eq!(inc.entity_contexts[0], vec![0, 2]);
        assert_eq!(inc.unseen_entities(), vec![2]);
        assert_eq!(inc.relation_contexts[0], vec![0, 1]);
        assert_eq!(inc.unseen_relations(), Vec::<usize>::new());
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(propagate(&[], &[], 1).is_err());
        assert!(propagate(&[row(&[1.0]), Matrix::zeros(1, 2)], &[vec![0]], 1).is_err());
        assert!(propagate(&[row(&[1.0])], &[vec![0], vec![0]], 1).is_err());
        assert!(propagate(&[row(&[1.0])], &[vec![3]], 1).is_err());
    }
}
