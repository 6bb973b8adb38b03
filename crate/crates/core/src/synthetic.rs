//! Planted-context datasets and context-blind baselines.
//!
//! Every relation `r` gets a random entity permutation `σ_r` and every
//! `(r, c)` pair an offset; the planted object is
//! `f(s, r, c) = σ_r[(s + off(r, c)) mod |E|]`. Offsets of different contexts
//! are distinct, so a context-dependent pair has a different answer in every
//! context, and each `f(·, r, c)` is a bijection, which keeps the inverse
//! queries `(o, r⁻¹, ?, c)` deterministic as well.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index::sample, SliceRandom};
use rand::Rng;

use crate::config::KeyValues;
use crate::event::{DatasetSplits, EventQuintuple, SnapshotSequence, Vocab};
use crate::numerics::{derive_seed, seeded_rng};
use crate::{Error, Result};

pub const SPEC_KEYS: [&str; 8] = [
    "entities",
    "relations",
    "contexts",
    "timestamps",
    "events_per_timestamp",
    "noise",
    "context_dependence",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub entities: usize,
    pub relations: usize,
    pub contexts: usize,
    pub timestamps: usize,
    pub events_per_timestamp: usize,
    /// Fraction of events whose object is drawn uniformly at random.
    pub noise: f64,
    /// Fraction of `(s, r)` pairs whose answer depends on the context.
    pub context_dependence: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            entities: 50,
            relations: 5,
            contexts: 3,
            timestamps: 200,
            events_per_timestamp: 40,
            noise: 0.05,
            context_dependence: 1.0,
            seed: 7,
        }
    }
}

impl PlantedSpec {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, file, &SPEC_KEYS)?;
        let mut s = PlantedSpec::default();
        kv.apply("entities", &mut s.entities)?;
        kv.apply("relations", &mut s.relations)?;
        kv.apply("contexts", &mut s.contexts)?;
        kv.apply("timestamps", &mut s.timestamps)?;
        kv.apply("events_per_timestamp", &mut s.events_per_timestamp)?;
        kv.apply("noise", &mut s.noise)?;
        kv.apply("context_dependence", &mut s.context_dependence)?;
        kv.apply("seed", &mut s.seed)?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entities < 2 || self.relations == 0 || self.contexts == 0 || self.events_per_timestamp == 0 {
            return Err(Error::validation(format!(
                "need >= 2 entities and positive relation, context and event counts: {self:?}"
            )));
        }
        if self.contexts > self.entities {
            return Err(Error::validation("more contexts than entities leaves no distinct offsets"));
        }
        if self.timestamps < 3 {
            return Err(Error::validation("need at least 3 timestamps to split"));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::validation(format!("noise must lie in [0, 1), got {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.context_dependence) {
            return Err(Error::validation(format!(
                "context_dependence must lie in [0, 1], got {}",
                self.context_dependence
            )));
        }
        Ok(())
    }
}

/// The deterministic answer table of a planted dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedMap {
    entities: usize,
    permutations: Vec<Vec<usize>>,
    /// `offsets[r][c]`
    offsets: Vec<Vec<usize>>,
    /// `dependent[s * |R| + r]`
    dependent: Vec<bool>,
}

impl PlantedMap {
    pub fn new(spec: &PlantedSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded_rng(derive_seed(spec.seed, &[0]));
        let n = spec.entities;
        let mut permutations = Vec::with_capacity(spec.relations);
        let mut offsets = Vec::with_capacity(spec.relations);
        for _ in 0..spec.relations {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            permutations.push(p);
            offsets.push(sample(&mut rng, n, spec.contexts).into_vec());
        }
        let dependent = (0..n * spec.relations)
            .map(|_| rng.random::<f64>() < spec.context_dependence)
            .collect();
        Ok(PlantedMap {
            entities: n,
            permutations,
            offsets,
            dependent,
        })
    }

    /// `f(s, r, c)` for an original relation `r`.
    pub fn object(&self, subject: usize, relation: usize, context: usize) -> usize {
        let r = self.permutations.len();
        let c = if self.dependent[subject * r + relation] { context } else { 0 };
        self.permutations[relation][(subject + self.offsets[relation][c]) % self.entities]
    }

    pub fn is_dependent(&self, subject: usize, relation: usize) -> bool {
        self.dependent[subject * self.permutations.len() + relation]
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub spec: PlantedSpec,
    pub map: PlantedMap,
    pub vocab: Vocab,
    pub splits: DatasetSplits,
    /// Original events in generation order, with a noise flag each.
    pub events: Vec<(EventQuintuple, bool)>,
}

pub fn generate(spec: &PlantedSpec) -> Result<PlantedDataset> {
    let map = PlantedMap::new(spec)?;
    let mut rng = seeded_rng(derive_seed(spec.seed, &[1]));
    let mut events = Vec::with_capacity(spec.timestamps * spec.events_per_timestamp);
    for t in 0..spec.timestamps {
        for _ in 0..spec.events_per_timestamp {
            let s = rng.random_range(0..spec.entities);
            let r = rng.random_range(0..spec.relations);
            let c = rng.random_range(0..spec.contexts);
            let noisy = rng.random::<f64>() < spec.noise;
            let o = if noisy {
                rng.random_range(0..spec.entities)
            } else {
                map.object(s, r, c)
            };
            events.push((EventQuintuple::new(s, r, o, t, c), noisy));
        }
    }
    let vocab = Vocab::numbered(spec.entities, spec.relations, spec.contexts)?;
    let originals: Vec<EventQuintuple> = events.iter().map(|e| e.0).collect();
    let splits = DatasetSplits::from_original_events(&originals, &vocab, spec.timestamps, BTreeSet::new())?;
    Ok(PlantedDataset {
        spec: spec.clone(),
        map,
        vocab,
        splits,
        events,
    })
}

/// Test HIT@1 of the best constant predictor per key, fitted on train.
fn frequency_bound<K: Ord>(train: &SnapshotSequence, test: &SnapshotSequence, key: impl Fn(&EventQuintuple) -> K) -> Result<f64> {
    if test.num_events() == 0 {
        return Err(Error::validation("test split is empty"));
    }
    let mut counts: BTreeMap<K, BTreeMap<usize, usize>> = BTreeMap::new();
    for e in train.events() {
        *counts.entry(key(e)).or_default().entry(e.object).or_insert(0) += 1;
    }
    let best: BTreeMap<&K, usize> = counts
        .iter()
        .map(|(k, objs)| {
            // most frequent object, smallest id on ties
            let (&o, _) = objs
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .expect("non-empty counts");
            (k, o)
        })
        .collect();
    let hits = test
        .events()
        .filter(|e| best.get(&key(e)) == Some(&e.object))
        .count();
    Ok(hits as f64 / test.num_events() as f64)
}

/// Best test HIT@1 of any predictor that sees only `(s, r)`.
pub fn context_blind_bound(splits: &DatasetSplits) -> Result<f64> {
    frequency_bound(&splits.train, &splits.test, |e| (e.subject, e.relation))
}

/// The same frequency oracle keyed on `(s, r, c)`.
pub fn context_aware_bound(splits: &DatasetSplits) -> Result<f64> {
    frequency_bound(&splits.train, &splits.test, |e| (e.subject, e.relation, e.context))
}
