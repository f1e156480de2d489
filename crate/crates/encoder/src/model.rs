//! Encoder parameters, forward passes, and checkpoint IO.

use std::path::Path;
use std::sync::Arc;

use pharm_core::rng::derive_rng;
use pharm_core::{FeatureType, PharmGraph};
use rand::Rng;
use tensor_autodiff::{load_checkpoint_into, save_checkpoint, ParamSet, Tape, Var};

use crate::batch::BatchedGraphs;
use crate::{Embedding, EncoderConfig, Result, SkipKind};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Parameter indices of one convolution block.
#[derive(Debug, Clone, Copy)]
pub struct ConvLayerParams {
    pub theta: usize,
    pub edge_w1: usize,
    pub edge_b1: usize,
    pub edge_w2: usize,
    pub edge_b2: usize,
}

struct BnParams {
    gamma: usize,
    beta: usize,
    running_mean: usize,
    running_var: usize,
}

/// The trained artifact: config plus named parameters (including batch-norm
/// running statistics).
#[derive(Debug, Clone)]
pub struct EncoderModel {
    pub cfg: EncoderConfig,
    pub params: ParamSet,
}

fn uniform_init<R: Rng>(rng: &mut R, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl EncoderModel {
    /// Input width of convolution block `l`.
    fn conv_in_dim(cfg: &EncoderConfig, l: usize) -> usize {
        match cfg.skip {
            SkipKind::Dense => (l + 1) * cfg.conv_hidden,
            SkipKind::Residual | SkipKind::None => cfg.conv_hidden,
        }
    }

    /// Node feature width after all convolution blocks (= pooled width).
    pub fn readout_dim(cfg: &EncoderConfig) -> usize {
        Self::conv_in_dim(cfg, cfg.conv_layers)
    }

    /// Fresh model with seeded uniform initialization.
    pub fn init(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut rng = derive_rng(seed, 0x0e11c0de);
        let m = cfg.conv_hidden;
        let he = cfg.edge_hidden;
        let k = cfg.rbf_k;

        let mut linear = |params: &mut ParamSet, name: &str, fan_in: usize, rows: usize, cols: usize, rng: &mut _| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.add(name, vec![rows, cols], uniform_init(rng, rows * cols, bound), true)
        };
        let add_bn = |params: &mut ParamSet, prefix: &str, width: usize| {
            params.add(format!("{prefix}.gamma"), vec![1, width], vec![1.0; width], true);
            params.add(format!("{prefix}.beta"), vec![1, width], vec![0.0; width], true);
            params.add(format!("{prefix}.running_mean"), vec![1, width], vec![0.0; width], false);
            params.add(format!("{prefix}.running_var"), vec![1, width], vec![1.0; width], false);
        };

        linear(&mut params, "embed.w", FeatureType::COUNT, FeatureType::COUNT, m, &mut rng);
        linear(&mut params, "embed.b", FeatureType::COUNT, 1, m, &mut rng);

        for l in 0..cfg.conv_layers {
            let f_in = Self::conv_in_dim(&cfg, l);
            linear(&mut params, &format!("conv{l}.theta"), f_in, f_in, m, &mut rng);
            linear(&mut params, &format!("conv{l}.edge.w1"), k, k, he, &mut rng);
            linear(&mut params, &format!("conv{l}.edge.b1"), k, 1, he, &mut rng);
            linear(&mut params, &format!("conv{l}.edge.w2"), he, he * f_in, m, &mut rng);
            linear(&mut params, &format!("conv{l}.edge.b2"), he, f_in, m, &mut rng);
            add_bn(&mut params, &format!("conv{l}.bn"), m);
        }

        let d0 = Self::readout_dim(&cfg);
        let p = cfg.proj_hidden;
        linear(&mut params, "proj0.w", d0, d0, p, &mut rng);
        linear(&mut params, "proj0.b", d0, 1, p, &mut rng);
        add_bn(&mut params, "proj0.bn", p);
        linear(&mut params, "proj1.w", p, p, p, &mut rng);
        linear(&mut params, "proj1.b", p, 1, p, &mut rng);
        add_bn(&mut params, "proj1.bn", p);
        linear(&mut params, "out.w", p, p, cfg.embed_dim, &mut rng);

        Ok(EncoderModel { cfg, params })
    }

    fn conv_params(&self, l: usize) -> ConvLayerParams {
        let idx = |suffix: &str| {
            self.params
                .index_of(&format!("conv{l}.{suffix}"))
                .unwrap_or_else(|| panic!("missing conv{l}.{suffix}"))
        };
        ConvLayerParams {
            theta: idx("theta"),
            edge_w1: idx("edge.w1"),
            edge_b1: idx("edge.b1"),
            edge_w2: idx("edge.w2"),
            edge_b2: idx("edge.b2"),
        }
    }

    fn bn_params(&self, prefix: &str) -> BnParams {
        let idx = |suffix: &str| {
            self.params
                .index_of(&format!("{prefix}.{suffix}"))
                .unwrap_or_else(|| panic!("missing {prefix}.{suffix}"))
        };
        BnParams {
            gamma: idx("gamma"),
            beta: idx("beta"),
            running_mean: idx("running_mean"),
            running_var: idx("running_var"),
        }
    }

    fn batch_norm(
        &mut self,
        tape: &mut Tape,
        x: Var,
        prefix: &str,
        training: bool,
    ) -> Result<Var> {
        let bn = self.bn_params(prefix);
        let gamma = tape.param(&self.params, bn.gamma);
        let beta = tape.param(&self.params, bn.beta);
        if training {
            let rows = tape.shape(x).0;
            let (y, mean, var) = tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
            // Running stats use the unbiased variance, as in common BN
            // implementations; momentum weighs the new batch.
            let unbias = if rows > 1 { rows as f64 / (rows - 1) as f64 } else { 1.0 };
            let rm = &mut self.params.get_mut(bn.running_mean).value;
            for (r, b) in rm.iter_mut().zip(&mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
            let rv = &mut self.params.get_mut(bn.running_var).value;
            for (r, b) in rv.iter_mut().zip(&var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * (b * unbias);
            }
            Ok(y)
        } else {
            let rm = self.params.get(bn.running_mean).value.clone();
            let rv = self.params.get(bn.running_var).value.clone();
            Ok(tape.batch_norm_infer(x, gamma, beta, &rm, &rv, BN_EPS)?)
        }
    }

    fn forward<R: Rng>(
        &mut self,
        tape: &mut Tape,
        batch: &BatchedGraphs,
        training: bool,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<Var> {
        let cfg = self.cfg.clone();
        let onehot = tape.constant(batch.n_nodes, FeatureType::COUNT, batch.onehot.clone());
        let edge_rbf = tape.constant(batch.edges.n_edges(), cfg.rbf_k, batch.edge_rbf.clone());

        let w = tape.param(&self.params, self.params.index_of("embed.w").unwrap());
        let b = tape.param(&self.params, self.params.index_of("embed.b").unwrap());
        let embedded = tape.matmul(onehot, w)?;
        let mut h = tape.add_row(embedded, b)?;

        let mut dropout = |tape: &mut Tape, x: Var, rng: &mut Option<&mut R>| -> Result<Var> {
            if training && cfg.dropout > 0.0 {
                let rng = rng.as_mut().expect("training forward needs a dropout RNG");
                Ok(tape.dropout(x, cfg.dropout, *rng)?)
            } else {
                Ok(x)
            }
        };

        for l in 0..cfg.conv_layers {
            let conv_ids = self.conv_params(l);
            let conv = nnconv_layer(tape, h, edge_rbf, batch, &self.params, &conv_ids)?;
            let bn = self.batch_norm(tape, conv, &format!("conv{l}.bn"), training)?;
            let act = tape.gelu(bn)?;
            let skipped = match cfg.skip {
                SkipKind::Dense => tape.concat_cols(act, h)?,
                SkipKind::Residual => tape.add(act, h)?,
                SkipKind::None => act,
            };
            h = dropout(tape, skipped, &mut dropout_rng)?;
        }

        let pooled = tape.segment_sum(h, Arc::clone(&batch.node_graph), batch.n_graphs)?;

        let mut x = pooled;
        for pl in 0..2 {
            let w = tape.param(&self.params, self.params.index_of(&format!("proj{pl}.w")).unwrap());
            let b = tape.param(&self.params, self.params.index_of(&format!("proj{pl}.b")).unwrap());
            let lin = tape.matmul(x, w)?;
            let lin = tape.add_row(lin, b)?;
            let bn = self.batch_norm(tape, lin, &format!("proj{pl}.bn"), training)?;
            let act = tape.relu(bn)?;
            x = dropout(tape, act, &mut dropout_rng)?;
        }

        let w_out = tape.param(&self.params, self.params.index_of("out.w").unwrap());
        let w_abs = tape.abs(w_out)?;
        Ok(tape.matmul(x, w_abs)?)
    }

    /// Training-mode forward: batch-norm uses batch statistics (and updates
    /// the running ones), dropout is active. Returns the n_graphs x D
    /// embedding matrix variable.
    pub fn forward_train<R: Rng>(
        &mut self,
        tape: &mut Tape,
        batch: &BatchedGraphs,
        dropout_rng: &mut R,
    ) -> Result<Var> {
        self.forward(tape, batch, true, Some(dropout_rng))
    }

    /// Inference-mode forward: running statistics, no dropout.
    pub fn forward_infer(&self, tape: &mut Tape, batch: &BatchedGraphs) -> Result<Var> {
        // Inference never mutates parameters; the &mut in `forward` only
        // serves the training-mode running-stat update.
        let mut this = self.clone_view();
        this.forward::<rand::rngs::ThreadRng>(tape, batch, false, None)
    }

    fn clone_view(&self) -> EncoderModel {
        EncoderModel { cfg: self.cfg.clone(), params: self.params.clone() }
    }

    /// Embeds one graph (inference mode).
    pub fn encode(&self, g: &PharmGraph) -> Result<Embedding> {
        Ok(self.encode_batch(std::slice::from_ref(g))?.pop().unwrap())
    }

    /// Embeds a batch of graphs (inference mode), one embedding per graph.
    pub fn encode_batch(&self, graphs: &[PharmGraph]) -> Result<Vec<Embedding>> {
        let batch = BatchedGraphs::new(graphs, &self.cfg)?;
        let mut tape = Tape::new();
        let z = self.forward_infer(&mut tape, &batch)?;
        let d = self.cfg.embed_dim;
        let values = tape.value(z);
        Ok((0..graphs.len())
            .map(|i| Embedding { values: values[i * d..(i + 1) * d].to_vec() })
            .collect())
    }

    /// Writes `<base>.pmck` (parameters) and `<base>.json` (config).
    pub fn save(&self, base: &Path) -> Result<()> {
        let pmck = base.with_extension("pmck");
        let json = base.with_extension("json");
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &self.params)?;
        std::fs::write(&pmck, buf)?;
        std::fs::write(&json, serde_json::to_string_pretty(&self.cfg)?)?;
        Ok(())
    }

    /// Loads a model saved by [`EncoderModel::save`].
    pub fn load(base: &Path) -> Result<Self> {
        let cfg: EncoderConfig = serde_json::from_str(&std::fs::read_to_string(base.with_extension("json"))?)?;
        let mut model = EncoderModel::init(cfg, 0)?;
        let bytes = std::fs::read(base.with_extension("pmck"))?;
        load_checkpoint_into(bytes.as_slice(), &mut model.params)?;
        Ok(model)
    }
}

/// One edge-conditioned convolution:
/// `out_i = theta * h_i + sum_{j != i} h_j * M(e_ij)`, where `M` is the
/// edge network (one-hidden-layer MLP on the RBF encoding) producing an
/// F x m weight matrix per edge.
///
/// Evaluated in factored form: the activation `a_ij` of the edge hidden
/// layer is scattered against `h_j` into per-node sums, and the edge
/// network's output weights are applied once per node instead of once per
/// edge. The bias part of `M` contributes `(sum_{j != i} h_j) * B`, with
/// the neighbor sum of a complete graph computed as graph total minus self.
pub fn nnconv_layer(
    tape: &mut Tape,
    h: Var,
    edge_rbf: Var,
    batch: &BatchedGraphs,
    params: &ParamSet,
    ids: &ConvLayerParams,
) -> Result<Var> {
    let theta = tape.param(params, ids.theta);
    let w1 = tape.param(params, ids.edge_w1);
    let b1 = tape.param(params, ids.edge_b1);
    let w2 = tape.param(params, ids.edge_w2);
    let b2 = tape.param(params, ids.edge_b2);

    let self_term = tape.matmul(h, theta)?;

    let hidden = tape.matmul(edge_rbf, w1)?;
    let hidden = tape.add_row(hidden, b1)?;
    let a = tape.relu(hidden)?;
    let scattered = tape.segment_outer(a, h, Arc::clone(&batch.edges))?;
    let message = tape.matmul(scattered, w2)?;

    let totals = tape.segment_sum(h, Arc::clone(&batch.node_graph), batch.n_graphs)?;
    let totals = tape.segment_gather(totals, Arc::clone(&batch.node_graph))?;
    let neighbor_sum = tape.sub(totals, h)?;
    let bias_term = tape.matmul(neighbor_sum, b2)?;

    let out = tape.add(self_term, message)?;
    Ok(tape.add(out, bias_term)?)
}
