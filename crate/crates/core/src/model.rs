//! The assembled forecaster: `K` encoder/decoder branches plus collaboration.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::collab::{collaborate, HyperIncidence};
use crate::decoder::{batch_loss, DecoderDims, DecoderParams, EmbeddingState, Query, Scorer};
use crate::encoder::{encode_context, ContextParams, ContextState, EncoderDims};
use crate::event::{partition_by_context, EventQuintuple, Vocab, VocabFingerprint};
use crate::numerics::{seeded_rng, ParamStore, Tape, Var};
use crate::train::TrainConfig;
use crate::{Error, Result};

/// Which collaboration components are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Full,
    NoEntHg,
    NoRelHg,
    NoHg,
    /// Trained like `Full`; evaluated by averaging all context heads.
    AvrContext,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoEntHg,
        Variant::NoRelHg,
        Variant::NoHg,
        Variant::AvrContext,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoEntHg => "no-ent-hg",
            Variant::NoRelHg => "no-rel-hg",
            Variant::NoHg => "no-hg",
            Variant::AvrContext => "avr-context",
        }
    }

    pub fn entity_collaboration(self) -> bool {
        matches!(self, Variant::Full | Variant::NoRelHg | Variant::AvrContext)
    }

    pub fn relation_collaboration(self) -> bool {
        matches!(self, Variant::Full | Variant::NoEntHg | Variant::AvrContext)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown variant {s:?}")))
    }
}

/// Number of learnable scalars for the given sizes (`relations` is `|R'|`).
pub fn parameter_count(config: &TrainConfig, entities: usize, relations: usize) -> usize {
    let d = config.dim;
    let encoder = entities * d
        + relations * d
        + config.layers * 2 * d * d
        + (d * d + d)
        + 3 * (2 * d * d + d * d + d);
    let f = config.channels;
    let decoder = f * 2 * config.kernel_width + f + f * d * d + d;
    config.contexts * (encoder + decoder)
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: TrainConfig,
    pub store: ParamStore,
    pub encoders: Vec<ContextParams>,
    pub decoders: Vec<DecoderParams>,
    pub incidence: HyperIncidence,
    pub fingerprint: VocabFingerprint,
    entity_sets: Arc<Vec<Vec<usize>>>,
    relation_sets: Arc<Vec<Vec<usize>>>,
}

fn encoder_prefix(c: usize) -> String {
    format!("ctx{c}.enc")
}

fn decoder_prefix(c: usize) -> String {
    format!("ctx{c}.dec")
}

impl Model {
    /// Fresh parameters seeded from `config.seed`.
    pub fn new(config: TrainConfig, vocab: &Vocab, incidence: HyperIncidence) -> Result<Self> {
        config.validate()?;
        check_sizes(&config, vocab, &incidence)?;
        let mut rng = seeded_rng(config.seed);
        let mut store = ParamStore::new();
        let enc_dims = EncoderDims {
            entities: vocab.num_entities(),
            relations: vocab.num_relations_augmented(),
            dim: config.dim,
            layers: config.layers,
        };
        let dec_dims = decoder_dims(&config);
        let mut encoders = Vec::with_capacity(config.contexts);
        let mut decoders = Vec::with_capacity(config.contexts);
        for c in 0..config.contexts {
            encoders.push(ContextParams::register(&mut store, &encoder_prefix(c), enc_dims, &mut rng)?);
            decoders.push(DecoderParams::register(&mut store, &decoder_prefix(c), dec_dims, &mut rng)?);
        }
        Ok(Self::assemble(config, store, encoders, decoders, incidence, vocab.fingerprint()))
    }

    /// Rebuilds a model around a restored parameter store.
    pub fn from_store(
        config: TrainConfig,
        store: ParamStore,
        incidence: HyperIncidence,
        fingerprint: VocabFingerprint,
    ) -> Result<Self> {
        config.validate()?;
        if incidence.contexts != config.contexts
            || incidence.entity_contexts.len() as u64 != fingerprint.entities
            || incidence.relation_contexts.len() as u64 != 2 * fingerprint.relations
        {
            return Err(Error::Format("incidence tables disagree with the stored vocabulary".into()));
        }
        let mut encoders = Vec::with_capacity(config.contexts);
        let mut decoders = Vec::with_capacity(config.contexts);
        for c in 0..config.contexts {
            encoders.push(ContextParams::lookup(&store, &encoder_prefix(c), config.layers)?);
            decoders.push(DecoderParams::lookup(&store, &decoder_prefix(c))?);
        }
        let expected = parameter_count(
            &config,
            fingerprint.entities as usize,
            2 * fingerprint.relations as usize,
        );
        if store.scalar_count() != expected {
            return Err(Error::Format(format!(
                "checkpoint holds {} scalars, configuration implies {expected}",
                store.scalar_count()
            )));
        }
        Ok(Self::assemble(config, store, encoders, decoders, incidence, fingerprint))
    }

    fn assemble(
        config: TrainConfig,
        store: ParamStore,
        encoders: Vec<ContextParams>,
        decoders: Vec<DecoderParams>,
        incidence: HyperIncidence,
        fingerprint: VocabFingerprint,
    ) -> Self {
        let entity_sets = Arc::new(incidence.entity_contexts.clone());
        let relation_sets = Arc::new(incidence.relation_contexts.clone());
        Model {
            config,
            store,
            encoders,
            decoders,
            incidence,
            fingerprint,
            entity_sets,
            relation_sets,
        }
    }

    pub fn contexts(&self) -> usize {
        self.config.contexts
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn eval_tape(&self) -> Result<Tape> {
        Tape::eval(self.config.rrelu_lower, self.config.rrelu_upper)
    }

    /// Encodes a history window (oldest first) and applies collaboration.
    pub fn forward(&self, tape: &mut Tape, history: &[&[EventQuintuple]]) -> Result<Vec<ContextState>> {
        let k = self.contexts();
        let parts = history
            .iter()
            .map(|s| partition_by_context(s, k))
            .collect::<Result<Vec<_>>>()?;
        let mut states = Vec::with_capacity(k);
        for c in 0..k {
            let vars = self.encoders[c].bind(tape, &self.store);
            let sub: Vec<&[EventQuintuple]> = parts.iter().map(|p| p.sub_graphs[c].as_slice()).collect();
            states.push(encode_context(tape, &sub, &vars)?);
        }
        self.collaborate(tape, states)
    }

    fn collaborate(&self, tape: &mut Tape, states: Vec<ContextState>) -> Result<Vec<ContextState>> {
        let variant = self.config.variant;
        let p = self.config.hyper_layers;
        if states.len() < 2 || p == 0 {
            return Ok(states);
        }
        let mut ents: Vec<Var> = states.iter().map(|s| s.entities).collect();
        let mut rels: Vec<Var> = states.iter().map(|s| s.relations).collect();
        if variant.entity_collaboration() {
            ents = collaborate(tape, &ents, Arc::clone(&self.entity_sets), p)?;
        }
        if variant.relation_collaboration() {
            rels = collaborate(tape, &rels, Arc::clone(&self.relation_sets), p)?;
        }
        Ok(ents
            .into_iter()
            .zip(rels)
            .map(|(entities, relations)| ContextState { entities, relations })
            .collect())
    }

    /// Mean cross-entropy of the target events given their history.
    pub fn loss(&self, tape: &mut Tape, history: &[&[EventQuintuple]], targets: &[EventQuintuple]) -> Result<Var> {
        let states = self.forward(tape, history)?;
        let decoders: Vec<_> = self.decoders.iter().map(|d| d.bind(tape, &self.store)).collect();
        let queries: Vec<Query> = targets.iter().map(query_of).collect();
        batch_loss(tape, &queries, &states, &decoders)
    }

    /// Concrete collaborated tables for a history window (eval mode).
    pub fn embed(&self, history: &[&[EventQuintuple]]) -> Result<EmbeddingState> {
        let mut tape = self.eval_tape()?;
        let states = self.forward(&mut tape, history)?;
        Ok(EmbeddingState {
            entities: states.iter().map(|s| tape.value(s.entities).clone()).collect(),
            relations: states.iter().map(|s| tape.value(s.relations).clone()).collect(),
        })
    }

    pub fn scorer(&self) -> Scorer<'_> {
        Scorer {
            store: &self.store,
            decoders: &self.decoders,
            rrelu: (self.config.rrelu_lower, self.config.rrelu_upper),
        }
    }
}

pub fn query_of(e: &EventQuintuple) -> Query {
    Query {
        subject: e.subject,
        relation: e.relation,
        object: e.object,
        context: e.context,
    }
}

fn decoder_dims(config: &TrainConfig) -> DecoderDims {
    DecoderDims {
        dim: config.dim,
        channels: config.channels,
        kernel_width: config.kernel_width,
    }
}

fn check_sizes(config: &TrainConfig, vocab: &Vocab, incidence: &HyperIncidence) -> Result<()> {
    if config.contexts != vocab.num_contexts() {
        return Err(Error::Compatibility(format!(
            "configuration has K={} but the dataset has {} contexts",
            config.contexts,
            vocab.num_contexts()
        )));
    }
    if incidence.contexts != config.contexts
        || incidence.entity_contexts.len() != vocab.num_entities()
        || incidence.relation_contexts.len() != vocab.num_relations_augmented()
    {
        return Err(Error::validation("incidence tables do not match the vocabulary"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collab::build_incidence;
    use crate::event::SnapshotSequence;

    fn small() -> (TrainConfig, Vocab, SnapshotSequence) {
        let vocab = Vocab::numbered(5, 2, 2).unwrap();
        let evs = [
            EventQuintuple::new(0, 0, 1, 0, 0),
            EventQuintuple::new(1, 1, 2, 0, 1),
            EventQuintuple::new(3, 2, 4, 1, 0),
            EventQuintuple::new(0, 3, 4, 1, 1),
        ];
        let seq = SnapshotSequence::from_events(evs, 0, 2).unwrap();
        let config = TrainConfig {
            dim: 4,
            channels: 2,
            contexts: 2,
            ..TrainConfig::default()
        };
        (config, vocab, seq)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("no-such".parse::<Variant>().is_err());
    }

    #[test]
    fn parameter_count_matches_store() {
        let (config, vocab, seq) = small();
        let model = Model::new(config.clone(), &vocab, build_incidence(&seq, &vocab)).unwrap();
        assert_eq!(model.parameter_count(), parameter_count(&config, 5, 4));
    }

    #[test]
    fn context_count_must_match() {
        let (mut config, vocab, seq) = small();
        config.contexts = 3;
        let inc = build_incidence(&seq, &vocab);
        assert!(matches!(Model::new(config, &vocab, inc), Err(Error::Compatibility(_))));
    }

    #[test]
    fn scores_are_distributions() {
        let (config, vocab, seq) = small();
        let model = Model::new(config, &vocab, build_incidence(&seq, &vocab)).unwrap();
        let hist = seq.history_window(1, 3).unwrap();
        let state = model.embed(&hist).unwrap();
        for c in 0..2 {
            let p = model.scorer().score(&state, 2, 1, c).unwrap();
            assert_eq!(p.len(), 5);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
