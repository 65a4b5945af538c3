use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::graph::{softmax_row, Graph, Matrix, Var};
use super::params::ParamStore;
use super::{DecoderKind, EncodedSequence, ModelConfig, ModelError, MAX_SEGMENTS};
use crate::rng::{seeded, StreamRng};
use crate::vocab::{TokenId, BOS_ID, PAD_ID};

const POSITION_SIGNALS: usize = MAX_SEGMENTS as usize + 2;

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    ln_attn: Norm,
    attn: Attention,
    ln_ffn: Norm,
    ffn_in: Linear,
    ffn_out: Linear,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    ln_self: Norm,
    self_attn: Attention,
    ln_cross: Norm,
    cross_attn: Attention,
    ln_ffn: Norm,
    ffn_in: Linear,
    ffn_out: Linear,
}

/// GRU cell with additive attention over the encoder memory.
#[derive(Debug, Clone)]
struct Recurrent {
    update_x: usize,
    update_h: usize,
    update_b: usize,
    reset_x: usize,
    reset_h: usize,
    reset_b: usize,
    cand_x: usize,
    cand_h: usize,
    cand_b: usize,
    att_query: usize,
    att_key: usize,
    att_score: usize,
    init: Linear,
    proj: Linear,
}

#[derive(Debug, Clone)]
enum Decoder {
    Transformer { layers: Vec<DecoderLayer>, ln: Norm },
    Recurrent(Recurrent),
}

#[derive(Debug, Clone)]
struct Layout {
    token: usize,
    position: usize,
    segment: usize,
    length_diff: usize,
    encoder: Vec<EncoderLayer>,
    encoder_ln: Norm,
    decoder: Decoder,
    out: Linear,
}

type ParamFn<'a> = dyn FnMut(&str, usize, usize) -> Result<usize, ModelError> + 'a;

fn linear(param: &mut ParamFn<'_>, name: &str, i: usize, o: usize) -> Result<Linear, ModelError> {
    Ok(Linear {
        w: param(&format!("{name}.w"), i, o)?,
        b: param(&format!("{name}.b"), 1, o)?,
    })
}

fn norm(param: &mut ParamFn<'_>, name: &str, h: usize) -> Result<Norm, ModelError> {
    Ok(Norm {
        gain: param(&format!("{name}.gain"), 1, h)?,
        bias: param(&format!("{name}.b"), 1, h)?,
    })
}

fn attention(param: &mut ParamFn<'_>, prefix: &str, h: usize) -> Result<Attention, ModelError> {
    Ok(Attention {
        q: linear(param, &format!("{prefix}.q"), h, h)?,
        k: linear(param, &format!("{prefix}.k"), h, h)?,
        v: linear(param, &format!("{prefix}.v"), h, h)?,
        o: linear(param, &format!("{prefix}.o"), h, h)?,
    })
}

impl Layout {
    /// Walks the parameter list in a fixed order; `param` either creates or
    /// looks up each named matrix.
    fn build(cfg: &ModelConfig, vocab_size: usize, param: &mut ParamFn<'_>) -> Result<Layout, ModelError> {
        let h = cfg.hidden_size;
        let f = cfg.ffn_size;
        let token = param("embed.token", vocab_size, h)?;
        let position = param("embed.position", cfg.max_positions, h)?;
        let segment = param("embed.segment", POSITION_SIGNALS, h)?;
        let length_diff = param("embed.length_diff", POSITION_SIGNALS, h)?;

        let mut encoder = Vec::new();
        for l in 0..cfg.num_layers {
            encoder.push(EncoderLayer {
                ln_attn: norm(param, &format!("enc.{l}.ln_attn"), h)?,
                attn: attention(param, &format!("enc.{l}.attn"), h)?,
                ln_ffn: norm(param, &format!("enc.{l}.ln_ffn"), h)?,
                ffn_in: linear(param, &format!("enc.{l}.ffn_in"), h, f)?,
                ffn_out: linear(param, &format!("enc.{l}.ffn_out"), f, h)?,
            });
        }
        let encoder_ln = norm(param, "enc.ln", h)?;

        let decoder = match cfg.decoder_kind {
            DecoderKind::SelfAttention => {
                let mut layers = Vec::new();
                for l in 0..cfg.num_layers {
                    layers.push(DecoderLayer {
                        ln_self: norm(param, &format!("dec.{l}.ln_self"), h)?,
                        self_attn: attention(param, &format!("dec.{l}.self_attn"), h)?,
                        ln_cross: norm(param, &format!("dec.{l}.ln_cross"), h)?,
                        cross_attn: attention(param, &format!("dec.{l}.cross_attn"), h)?,
                        ln_ffn: norm(param, &format!("dec.{l}.ln_ffn"), h)?,
                        ffn_in: linear(param, &format!("dec.{l}.ffn_in"), h, f)?,
                        ffn_out: linear(param, &format!("dec.{l}.ffn_out"), f, h)?,
                    });
                }
                let ln = norm(param, "dec.ln", h)?;
                Decoder::Transformer { layers, ln }
            }
            DecoderKind::RecurrentWithAttention => Decoder::Recurrent(Recurrent {
                update_x: param("gru.update_x", 2 * h, h)?,
                update_h: param("gru.update_h", h, h)?,
                update_b: param("gru.update.b", 1, h)?,
                reset_x: param("gru.reset_x", 2 * h, h)?,
                reset_h: param("gru.reset_h", h, h)?,
                reset_b: param("gru.reset.b", 1, h)?,
                cand_x: param("gru.cand_x", 2 * h, h)?,
                cand_h: param("gru.cand_h", h, h)?,
                cand_b: param("gru.cand.b", 1, h)?,
                att_query: param("gru.att_query", h, h)?,
                att_key: param("gru.att_key", h, h)?,
                att_score: param("gru.att_score", h, 1)?,
                init: linear(param, "gru.init", h, h)?,
                proj: linear(param, "gru.proj", 2 * h, h)?,
            }),
        };
        let out = linear(param, "out", h, vocab_size)?;

        Ok(Layout {
            token,
            position,
            segment,
            length_diff,
            encoder,
            encoder_ln,
            decoder,
            out,
        })
    }
}

/// Encoder output for one source sequence, reusable across decoding steps.
#[derive(Debug, Clone)]
pub struct Memory(Matrix);

impl Memory {
    pub fn rows(&self) -> usize {
        self.0.rows
    }
}

enum Mode<'r> {
    Eval,
    Train { rng: &'r mut StreamRng, dropout: f64 },
}

/// Attention encoder-decoder over a shared token vocabulary.
#[derive(Debug, Clone)]
pub struct Seq2Seq {
    config: ModelConfig,
    vocab_size: usize,
    params: ParamStore,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    config: ModelConfig,
    vocab_size: usize,
    params: ParamStore,
}

impl Serialize for Seq2Seq {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Borrowed<'a> {
            config: &'a ModelConfig,
            vocab_size: usize,
            params: &'a ParamStore,
        }
        Borrowed {
            config: &self.config,
            vocab_size: self.vocab_size,
            params: &self.params,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Seq2Seq {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let stored = Stored::deserialize(d)?;
        Seq2Seq::from_parts(stored.config, stored.vocab_size, stored.params)
            .map_err(serde::de::Error::custom)
    }
}

impl Seq2Seq {
    /// Freshly initialized model; weights are drawn from `config.seed`.
    pub fn new(config: ModelConfig, vocab_size: usize) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(ModelError::InvalidConfig("empty vocabulary".into()));
        }
        let mut rng = seeded(config.seed);
        let mut params = ParamStore::default();
        let layout = Layout::build(&config, vocab_size, &mut |name, rows, cols| {
            let idx = if name.ends_with(".b") {
                params.add(name, Matrix::zeros(rows, cols))
            } else if name.ends_with(".gain") {
                params.add(name, Matrix::filled(rows, cols, 1.0))
            } else {
                params.add_xavier(name, rows, cols, &mut rng)
            };
            Ok(idx)
        })?;
        Ok(Seq2Seq {
            config,
            vocab_size,
            params,
            layout,
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_parts(
        config: ModelConfig,
        vocab_size: usize,
        params: ParamStore,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::build(&config, vocab_size, &mut |name, rows, cols| {
            let idx = params
                .index_of(name)
                .ok_or_else(|| ModelError::LayoutMismatch(format!("missing {name}")))?;
            let m = &params.get(idx).value;
            if m.rows != rows || m.cols != cols {
                return Err(ModelError::LayoutMismatch(format!(
                    "{name}: expected {rows}x{cols}, found {}x{}",
                    m.rows, m.cols
                )));
            }
            Ok(idx)
        })?;
        Ok(Seq2Seq {
            config,
            vocab_size,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Zeroes the output projection so every prediction is uniform.
    pub fn zero_output_layer(&mut self) {
        for idx in [self.layout.out.w, self.layout.out.b] {
            self.params.get_mut(idx).value.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn check(&self, seq: &EncodedSequence, extra: usize) -> Result<(), ModelError> {
        if seq.len() + extra > self.config.max_positions {
            return Err(ModelError::TooLong {
                len: seq.len() + extra,
                max: self.config.max_positions,
            });
        }
        if let Some(&id) = seq.token_ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab: self.vocab_size,
            });
        }
        Ok(())
    }

    fn embed(
        &self,
        g: &mut Graph<'_>,
        ids: &[usize],
        segments: &[usize],
        length_diffs: &[usize],
    ) -> Var {
        let n = ids.len();
        let positions: Vec<usize> = (0..n).collect();
        let token = g.param(self.layout.token);
        let position = g.param(self.layout.position);
        let segment = g.param(self.layout.segment);
        let length_diff = g.param(self.layout.length_diff);
        let t = g.gather(token, ids);
        let p = g.gather(position, &positions);
        let s = g.gather(segment, segments);
        let l = g.gather(length_diff, length_diffs);
        let x = g.add(t, p);
        let x = g.add(x, s);
        g.add(x, l)
    }

    fn linear(&self, g: &mut Graph<'_>, x: Var, l: Linear) -> Var {
        let w = g.param(l.w);
        let b = g.param(l.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    fn norm(&self, g: &mut Graph<'_>, x: Var, n: Norm) -> Var {
        let gain = g.param(n.gain);
        let bias = g.param(n.bias);
        let y = g.layer_norm(x);
        let y = g.mul_row(y, gain);
        g.add_row(y, bias)
    }

    fn dropout(&self, g: &mut Graph<'_>, x: Var, mode: &mut Mode<'_>) -> Var {
        let Mode::Train { rng, dropout } = mode else {
            return x;
        };
        if *dropout == 0.0 {
            return x;
        }
        let (rows, cols) = {
            let v = g.value(x);
            (v.rows, v.cols)
        };
        let keep = 1.0 - *dropout;
        let mask = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = g.constant(Matrix::from_vec(rows, cols, mask));
        g.mul(x, mask)
    }

    /// Multi-head scaled dot-product attention. `blocked` masks query/key
    /// pairs (row-major, queries x keys).
    fn attention(
        &self,
        g: &mut Graph<'_>,
        query_in: Var,
        key_in: Var,
        a: Attention,
        blocked: Option<&[bool]>,
    ) -> Var {
        let q = self.linear(g, query_in, a.q);
        let k = self.linear(g, key_in, a.k);
        let v = self.linear(g, key_in, a.v);
        let heads = self.config.num_heads;
        let d = self.config.hidden_size / heads;
        let scale = 1.0 / libm::sqrt(d as f64);
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * d, d);
            let kh = g.slice_cols(k, h * d, d);
            let vh = g.slice_cols(v, h * d, d);
            let scores = g.matmul_bt(qh, kh);
            let scores = g.scale(scores, scale);
            let p = g.softmax(scores, blocked.map(<[bool]>::to_vec));
            outs.push(g.matmul(p, vh));
        }
        let cat = g.concat_cols(&outs);
        self.linear(g, cat, a.o)
    }

    fn ffn(&self, g: &mut Graph<'_>, x: Var, fin: Linear, fout: Linear) -> Var {
        let h = self.linear(g, x, fin);
        let h = g.gelu(h);
        self.linear(g, h, fout)
    }

    fn encode_graph(
        &self,
        g: &mut Graph<'_>,
        source: &EncodedSequence,
        mode: &mut Mode<'_>,
    ) -> Var {
        let mut ids = vec![BOS_ID as usize];
        ids.extend(source.token_ids.iter().map(|&t| t as usize));
        let mut segments = vec![0];
        segments.extend(source.segment_ids.iter().map(|&s| s as usize));
        let mut diffs = vec![source.total_segments as usize];
        diffs.extend(source.length_diff_ids.iter().map(|&s| s as usize));
        let x = self.embed(g, &ids, &segments, &diffs);
        let mut x = self.dropout(g, x, mode);
        for layer in &self.layout.encoder {
            let n = self.norm(g, x, layer.ln_attn);
            let a = self.attention(g, n, n, layer.attn, None);
            let a = self.dropout(g, a, mode);
            x = g.add(x, a);
            let n = self.norm(g, x, layer.ln_ffn);
            let f = self.ffn(g, n, layer.ffn_in, layer.ffn_out);
            let f = self.dropout(g, f, mode);
            x = g.add(x, f);
        }
        self.norm(g, x, self.layout.encoder_ln)
    }

    /// Decoder logits, one row per target position; row `i` predicts
    /// `target.token_ids[i]` from the tokens before it.
    fn decode_graph(
        &self,
        g: &mut Graph<'_>,
        memory: Var,
        target: &EncodedSequence,
        mode: &mut Mode<'_>,
    ) -> Var {
        let n = target.len();
        let mut inputs = vec![BOS_ID as usize];
        inputs.extend(target.token_ids.iter().take(n.saturating_sub(1)).map(|&t| t as usize));
        let segments: Vec<usize> = target.segment_ids.iter().map(|&s| s as usize).collect();
        let diffs: Vec<usize> = target.length_diff_ids.iter().map(|&s| s as usize).collect();

        let hidden = match &self.layout.decoder {
            Decoder::Transformer { layers, ln } => {
                let x = self.embed(g, &inputs, &segments, &diffs);
                let mut x = self.dropout(g, x, mode);
                let causal: Vec<bool> = (0..n * n).map(|i| i % n > i / n).collect();
                for layer in layers {
                    let h = self.norm(g, x, layer.ln_self);
                    let a = self.attention(g, h, h, layer.self_attn, Some(&causal));
                    let a = self.dropout(g, a, mode);
                    x = g.add(x, a);
                    let h = self.norm(g, x, layer.ln_cross);
                    let c = self.attention(g, h, memory, layer.cross_attn, None);
                    let c = self.dropout(g, c, mode);
                    x = g.add(x, c);
                    let h = self.norm(g, x, layer.ln_ffn);
                    let f = self.ffn(g, h, layer.ffn_in, layer.ffn_out);
                    let f = self.dropout(g, f, mode);
                    x = g.add(x, f);
                }
                self.norm(g, x, *ln)
            }
            Decoder::Recurrent(r) => self.recurrent(g, memory, r, &inputs, &segments, &diffs, mode),
        };
        self.linear(g, hidden, self.layout.out)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurrent(
        &self,
        g: &mut Graph<'_>,
        memory: Var,
        r: &Recurrent,
        inputs: &[usize],
        segments: &[usize],
        diffs: &[usize],
        mode: &mut Mode<'_>,
    ) -> Var {
        let token = g.param(self.layout.token);
        let segment = g.param(self.layout.segment);
        let length_diff = g.param(self.layout.length_diff);
        let pooled = g.mean_rows(memory);
        let init = self.linear(g, pooled, r.init);
        let mut h = g.tanh(init);
        let att_key = g.param(r.att_key);
        let keys = g.matmul(memory, att_key);
        let (att_query, att_score) = (g.param(r.att_query), g.param(r.att_score));
        let (ux, uh, ub) = (g.param(r.update_x), g.param(r.update_h), g.param(r.update_b));
        let (rx, rh, rb) = (g.param(r.reset_x), g.param(r.reset_h), g.param(r.reset_b));
        let (cx, ch, cb) = (g.param(r.cand_x), g.param(r.cand_h), g.param(r.cand_b));

        let mut outputs = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let e = g.gather(token, &inputs[t..t + 1]);
            let s = g.gather(segment, &segments[t..t + 1]);
            let l = g.gather(length_diff, &diffs[t..t + 1]);
            let e = g.add(e, s);
            let e = g.add(e, l);
            let e = self.dropout(g, e, mode);

            // Additive attention: score_j = v . tanh(K_j + W h).
            let q = g.matmul(h, att_query);
            let a = g.add_row(keys, q);
            let a = g.tanh(a);
            let scores = g.matmul(a, att_score);
            let scores = g.transpose(scores);
            let weights = g.softmax(scores, None);
            let context = g.matmul(weights, memory);

            let x = g.concat_cols(&[e, context]);
            let z = {
                let p = g.matmul(x, ux);
                let q = g.matmul(h, uh);
                let s = g.add(p, q);
                let s = g.add_row(s, ub);
                g.sigmoid(s)
            };
            let rst = {
                let p = g.matmul(x, rx);
                let q = g.matmul(h, rh);
                let s = g.add(p, q);
                let s = g.add_row(s, rb);
                g.sigmoid(s)
            };
            let cand = {
                let p = g.matmul(x, cx);
                let p = g.add_row(p, cb);
                let q = g.matmul(h, ch);
                let q = g.mul(rst, q);
                let s = g.add(p, q);
                g.tanh(s)
            };
            let keep_new = g.one_minus(z);
            let new_part = g.mul(keep_new, cand);
            let old_part = g.mul(z, h);
            h = g.add(new_part, old_part);

            let o = g.concat_cols(&[h, context]);
            let o = self.linear(g, o, r.proj);
            let o = g.tanh(o);
            outputs.push(self.dropout(g, o, mode));
        }
        g.concat_rows(&outputs)
    }

    pub(super) fn check_pair(&self, source: &EncodedSequence, target: &EncodedSequence) -> Result<(), ModelError> {
        // The encoder prepends BOS to the source.
        self.check(source, 1)?;
        self.check(target, 0)
    }

    /// Next-token distributions at every target position under teacher
    /// forcing: row `i` is `p(· | source, target[..i])`.
    pub fn forward(
        &self,
        source: &EncodedSequence,
        target: &EncodedSequence,
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_pair(source, target)?;
        let mut g = Graph::new(&self.params);
        let mut mode = Mode::Eval;
        let memory = self.encode_graph(&mut g, source, &mut mode);
        let logits = self.decode_graph(&mut g, memory, target, &mut mode);
        Ok(rows_to_distributions(g.value(logits)))
    }

    pub fn encode(&self, source: &EncodedSequence) -> Result<Memory, ModelError> {
        self.check(source, 1)?;
        let mut g = Graph::new(&self.params);
        let memory = self.encode_graph(&mut g, source, &mut Mode::Eval);
        Ok(Memory(g.value(memory).clone()))
    }

    /// Distribution of the token following `prefix`, where that token will
    /// belong to segment `next_segment`.
    pub fn next_distribution(
        &self,
        memory: &Memory,
        prefix: &EncodedSequence,
        next_segment: u32,
    ) -> Result<Vec<f64>, ModelError> {
        let mut target = prefix.clone();
        target.push(PAD_ID, next_segment);
        self.check(&target, 0)?;
        let mut g = Graph::new(&self.params);
        let mem = g.constant(memory.0.clone());
        let logits = self.decode_graph(&mut g, mem, &target, &mut Mode::Eval);
        let m = g.value(logits);
        let mut out = vec![0.0; m.cols];
        softmax_row(m.row(m.rows - 1), None, &mut out);
        Ok(out)
    }

    /// Builds the training graph for one pair and returns it with its mean
    /// token cross-entropy node. PAD targets carry zero weight.
    pub(super) fn loss_graph<'g>(
        &'g self,
        source: &EncodedSequence,
        target: &EncodedSequence,
        rng: Option<&mut StreamRng>,
    ) -> Result<(Graph<'g>, Var), ModelError> {
        self.check_pair(source, target)?;
        let mut g = Graph::new(&self.params);
        let mut mode = match rng {
            Some(rng) => Mode::Train {
                rng,
                dropout: self.config.dropout,
            },
            None => Mode::Eval,
        };
        let memory = self.encode_graph(&mut g, source, &mut mode);
        let logits = self.decode_graph(&mut g, memory, target, &mut mode);
        let targets: Vec<usize> = target.token_ids.iter().map(|&t| t as usize).collect();
        let weights: Vec<f64> = target
            .token_ids
            .iter()
            .map(|&t| if t == PAD_ID { 0.0 } else { 1.0 })
            .collect();
        let loss = g.cross_entropy(logits, &targets, &weights);
        Ok((g, loss))
    }

    /// Mean token cross-entropy without dropout.
    pub fn loss(&self, source: &EncodedSequence, target: &EncodedSequence) -> Result<f64, ModelError> {
        if target.is_empty() {
            return Ok(0.0);
        }
        let (g, loss) = self.loss_graph(source, target, None)?;
        Ok(g.value(loss).data[0])
    }

    /// Greedy decoding of one segment: appends tokens to `prefix` until
    /// `stop` is produced (included) or `max_tokens` are emitted.
    pub fn greedy_segment(
        &self,
        memory: &Memory,
        prefix: &mut EncodedSequence,
        segment: u32,
        stop: TokenId,
        max_tokens: usize,
    ) -> Result<Vec<TokenId>, ModelError> {
        let mut out = Vec::new();
        while out.len() < max_tokens {
            let dist = self.next_distribution(memory, prefix, segment)?;
            let next = argmax(&dist) as TokenId;
            prefix.push(next, segment);
            out.push(next);
            if next == stop {
                break;
            }
        }
        Ok(out)
    }
}

fn rows_to_distributions(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows)
        .map(|r| {
            let mut out = vec![0.0; m.cols];
            softmax_row(m.row(r), None, &mut out);
            out
        })
        .collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
