//! The full residue scorer: sequence, retrieval and text modalities fused by
//! reliability-aware evidential weighting.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MeraError, Result};
use crate::merag::{
    init_gate, moe_gate_on_tape, prune_gate_expert, run_experts, ExpertKind, ExpertOutput,
    GATE_PREFIX,
};
use crate::metrics::EvalRecord;
use crate::numcore::{Matrix, Mlp2Names, ParameterStore, Tape, Var};
use crate::rmf::{init_head, read_bundle, rmf_on_tape, Modality, PredictionBundle, RmfVars};
use crate::store::{chain_key, NeighborSet, ProteinRecord, Store};
use crate::textguide::{cross_attend_on_tape, init_text_guide, W_K, W_Q};
use crate::training::{loss_on_tape, Checkpoint, Config, LossBreakdown, LossVars};

/// One protein as read from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub seq: Matrix,
    pub text: Option<Matrix>,
    pub labels: Vec<u8>,
    pub cluster: Option<String>,
    pub extras: BTreeMap<String, Matrix>,
}

impl Sample {
    pub fn new(id: impl Into<String>, seq: Matrix, labels: Vec<u8>) -> Result<Self> {
        let id = id.into();
        if seq.rows() != labels.len() {
            return Err(MeraError::Dimension(format!(
                "protein `{id}`: {} labels for {} residues",
                labels.len(),
                seq.rows()
            )));
        }
        if seq.rows() == 0 {
            return Err(MeraError::EmptyInput(format!(
                "protein `{id}` has no residues"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(MeraError::Ingestion(format!(
                "protein `{id}`: label {bad} is not binary"
            )));
        }
        Ok(Sample {
            id,
            seq,
            text: None,
            labels,
            cluster: None,
            extras: BTreeMap::new(),
        })
    }

    pub fn with_text(mut self, text: Matrix) -> Self {
        self.text = Some(text);
        self
    }

    pub fn with_cluster(mut self, cluster: impl Into<String>) -> Self {
        self.cluster = Some(cluster.into());
        self
    }

    pub fn len(&self) -> usize {
        self.seq.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.rows() == 0
    }

    /// The store entry for this protein.
    pub fn to_record(&self) -> Result<ProteinRecord> {
        let mut rec = ProteinRecord::from_labels(
            self.id.clone(),
            self.seq.clone(),
            self.labels.clone(),
            self.cluster.clone(),
        )?;
        for (name, block) in &self.extras {
            rec = rec.with_extra(name.clone(), block.clone())?;
        }
        Ok(rec)
    }
}

/// A sample with its retrieval done and expert outputs computed. Expert
/// outputs do not depend on trainable parameters, so this is reused across
/// epochs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub sample: Sample,
    pub neighbors: NeighborSet,
    pub experts: Vec<ExpertOutput>,
    /// No eligible neighbor existed; experts saw the query alone.
    pub retrieval_fallback: bool,
}

/// Tape nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub h_seq: Var,
    pub h_rag: Option<Var>,
    pub gates: Option<Var>,
    pub h_text: Option<Var>,
    pub attention: Option<Var>,
    pub rmf: RmfVars,
}

/// Scores plus the intermediate representations of one protein.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub id: String,
    pub bundle: PredictionBundle,
    pub h_rag: Option<Matrix>,
    pub h_text: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: Config,
    pub params: ParameterStore,
}

impl Model {
    /// Fresh parameters drawn from `config.seed`. Dimensions must be set.
    pub fn init(config: Config) -> Result<Model> {
        config.validate()?;
        if config.dim == 0 {
            return Err(MeraError::Config("embedding dimension is unset".into()));
        }
        if config.has(Modality::Text) && config.text_dim == 0 {
            return Err(MeraError::Config("text dimension is unset".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParameterStore::new();
        for m in Modality::ALL {
            if config.has(m) {
                init_head(&mut params, m, config.dim, config.head_hidden, &mut rng)?;
            }
        }
        if config.has(Modality::Rag) {
            init_gate(
                &mut params,
                config.gate_mode,
                config.experts.len(),
                config.dim,
                config.gate_hidden_width(),
                &mut rng,
            )?;
        }
        if config.has(Modality::Text) {
            init_text_guide(
                &mut params,
                config.dim,
                config.text_dim,
                config.attn_dim,
                &mut rng,
            )?;
        }
        Ok(Model { config, params })
    }

    /// Restores a model, checking parameter shapes against the configuration.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Model> {
        let model = Model {
            config: ckpt.config,
            params: ckpt.params,
        };
        model.check_shapes()?;
        Ok(model)
    }

    /// Parameters rounded to `f32`, as stored on disk.
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            params: self.params.round_to_f32(),
        }
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        for m in Modality::ALL.into_iter().filter(|&m| c.has(m)) {
            let w1 = self.params.value(&Mlp2Names::new(&m.head_prefix()).w1)?;
            if w1.rows() != c.dim {
                return Err(MeraError::Dimension(format!(
                    "head `{m}` expects width {}, config says {}",
                    w1.rows(),
                    c.dim
                )));
            }
        }
        if c.has(Modality::Rag) {
            let w1 = self.params.value(&Mlp2Names::new(GATE_PREFIX).w1)?;
            if w1.rows() != c.experts.len() * c.dim {
                return Err(MeraError::Dimension(format!(
                    "gate expects {} input columns, {} experts of width {} give {}",
                    w1.rows(),
                    c.experts.len(),
                    c.dim,
                    c.experts.len() * c.dim
                )));
            }
        }
        if c.has(Modality::Text) {
            let wq = self.params.value(W_Q)?;
            let wk = self.params.value(W_K)?;
            if wq.rows() != c.dim || wk.rows() != c.text_dim {
                return Err(MeraError::Dimension(format!(
                    "text attention is {}x{} / {}x{}, config says dim {} and text_dim {}",
                    wq.rows(),
                    wq.cols(),
                    wk.rows(),
                    wk.cols(),
                    c.dim,
                    c.text_dim
                )));
            }
        }
        Ok(())
    }

    /// Drops a modality; the survivors' masses renormalize.
    pub fn disable_modality(&mut self, m: Modality) -> Result<()> {
        if !self.config.has(m) {
            return Err(MeraError::Config(format!("modality `{m}` is not active")));
        }
        if self.config.modalities.len() == 1 {
            return Err(MeraError::Config("cannot disable every modality".into()));
        }
        self.config.modalities.retain(|&x| x != m);
        Ok(())
    }

    /// Drops an expert and the matching slices of the gate.
    pub fn disable_expert(&mut self, kind: &ExpertKind) -> Result<()> {
        let index = self
            .config
            .experts
            .iter()
            .position(|e| e == kind)
            .ok_or_else(|| MeraError::Config(format!("expert `{kind}` is not configured")))?;
        if self.config.experts.len() == 1 {
            return Err(MeraError::Config("cannot disable every expert".into()));
        }
        if self.params.contains(&Mlp2Names::new(GATE_PREFIX).w1) {
            prune_gate_expert(
                &mut self.params,
                self.config.gate_mode,
                self.config.experts.len(),
                self.config.dim,
                index,
            )?;
        }
        self.config.experts.remove(index);
        Ok(())
    }

    /// Retrieval plus expert outputs. The query's own id is always excluded;
    /// with no eligible neighbor the experts fall back to the query alone.
    pub fn prepare(&self, sample: &Sample, store: Option<&Store>) -> Result<Prepared> {
        let c = &self.config;
        if sample.seq.cols() != c.dim {
            return Err(MeraError::Dimension(format!(
                "protein `{}` has embedding width {}, model expects {}",
                sample.id,
                sample.seq.cols(),
                c.dim
            )));
        }
        if let Some(t) = &sample.text {
            if c.has(Modality::Text) && t.cols() != c.text_dim {
                return Err(MeraError::Dimension(format!(
                    "protein `{}` has text width {}, model expects {}",
                    sample.id,
                    t.cols(),
                    c.text_dim
                )));
            }
        }
        let mut prepared = Prepared {
            sample: sample.clone(),
            neighbors: NeighborSet::empty(sample.id.clone()),
            experts: Vec::new(),
            retrieval_fallback: false,
        };
        if !c.has(Modality::Rag) {
            return Ok(prepared);
        }
        let store =
            store.ok_or_else(|| MeraError::Config("the rag modality needs a store".into()))?;
        let key = chain_key(&sample.seq)?;
        match store.retrieve(&key, c.k, Some(&sample.id), sample.cluster.as_deref()) {
            Ok(n) => prepared.neighbors = n,
            Err(MeraError::Retrieval(msg)) => {
                log::warn!(
                    "protein `{}`: {msg}; experts use the query alone",
                    sample.id
                );
                prepared.retrieval_fallback = true;
            }
            Err(e) => return Err(e),
        }
        prepared.experts = run_experts(
            &c.experts,
            &sample.seq,
            store,
            &prepared.neighbors,
            c.intra_temperature,
        )?;
        Ok(prepared)
    }

    pub fn forward_on_tape(&self, tape: &mut Tape, p: &Prepared) -> Result<ForwardVars> {
        let c = &self.config;
        let h_seq = tape.constant(p.sample.seq.clone());
        let mut inputs = Vec::with_capacity(3);
        if c.has(Modality::Seq) {
            inputs.push((Modality::Seq, h_seq));
        }
        let (mut h_rag, mut gates) = (None, None);
        if c.has(Modality::Rag) {
            if p.experts.len() != c.experts.len() {
                return Err(MeraError::Contract(format!(
                    "protein `{}` was prepared with {} experts, model has {}",
                    p.sample.id,
                    p.experts.len(),
                    c.experts.len()
                )));
            }
            let (g, h) = moe_gate_on_tape(tape, &p.experts, &self.params, c.gate_mode)?;
            inputs.push((Modality::Rag, h));
            h_rag = Some(h);
            gates = Some(g);
        }
        let (mut h_text, mut attention) = (None, None);
        if c.has(Modality::Text) {
            if let Some(text) = p.sample.text.as_ref().filter(|t| t.rows() > 0) {
                let t = tape.constant(text.clone());
                let (a, h) = cross_attend_on_tape(tape, h_seq, t, &self.params)?;
                inputs.push((Modality::Text, h));
                h_text = Some(h);
                attention = Some(a);
            }
        }
        if inputs.is_empty() {
            return Err(MeraError::Config(format!(
                "protein `{}` has no usable modality",
                p.sample.id
            )));
        }
        let rmf = rmf_on_tape(tape, &inputs, &self.params)?;
        Ok(ForwardVars {
            h_seq,
            h_rag,
            gates,
            h_text,
            attention,
            rmf,
        })
    }

    pub fn loss_on_tape(&self, tape: &mut Tape, p: &Prepared) -> Result<(ForwardVars, LossVars)> {
        let fwd = self.forward_on_tape(tape, p)?;
        let bounded: Vec<(Modality, Var)> = fwd
            .rmf
            .modalities
            .iter()
            .copied()
            .zip(fwd.rmf.bounded_columns.iter().copied())
            .collect();
        let loss = loss_on_tape(
            tape,
            fwd.rmf.probability,
            &bounded,
            &p.sample.labels,
            self.config.reliability_weight,
            self.config.reliability_reduction,
        )?;
        Ok((fwd, loss))
    }

    /// Loss of one protein without touching gradients.
    pub fn loss(&self, p: &Prepared) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let (_, loss) = self.loss_on_tape(&mut tape, p)?;
        Ok(loss.read(&tape))
    }

    pub fn predict(&self, p: &Prepared) -> Result<Prediction> {
        let mut tape = Tape::new();
        let fwd = self.forward_on_tape(&mut tape, p)?;
        Ok(Prediction {
            id: p.sample.id.clone(),
            bundle: read_bundle(&tape, &fwd.rmf),
            h_rag: fwd.h_rag.map(|v| tape.value(v).clone()),
            h_text: fwd.h_text.map(|v| tape.value(v).clone()),
        })
    }

    pub fn eval_records(&self, prepared: &[Prepared]) -> Result<Vec<EvalRecord>> {
        prepared
            .iter()
            .map(|p| {
                let pred = self.predict(p)?;
                EvalRecord::new(
                    p.sample.id.clone(),
                    pred.bundle.probabilities,
                    p.sample.labels.clone(),
                )
            })
            .collect()
    }
}
