//! Encoder/decoder LSTM stacks with multiplicative attention, shared by the
//! generator and the discriminator.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Result;
use crate::math;
use crate::numerics::{Graph, NodeId, ParamId, ParamStore, Tensor};

/// One LSTM layer: gates `[i f o g] = [x; h]·W + b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
}

/// `(h, c)` for every layer, bottom first.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub layers: Vec<(NodeId, NodeId)>,
}

impl LstmState {
    pub fn zeros(g: &mut Graph, layers: usize, hidden: usize) -> Self {
        Self {
            layers: (0..layers).map(|_| (g.zeros(1, hidden), g.zeros(1, hidden))).collect(),
        }
    }

    pub fn top(&self) -> NodeId {
        self.layers.last().expect("LSTM has at least one layer").0
    }
}

pub(crate) fn init_uniform(store: &mut ParamStore, name: &str, shape: &[usize], fan_in: usize, rng: &mut crate::Rng) -> Result<ParamId> {
    let scale = 1.0 / math::sqrt(fan_in as f64);
    store.insert(name, Tensor::uniform(shape, scale, rng))
}

impl Lstm {
    pub fn new(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, layers: usize, rng: &mut crate::Rng) -> Result<Self> {
        let mut out = Vec::with_capacity(layers);
        for k in 0..layers {
            let in_dim = if k == 0 { input_dim } else { hidden };
            let fan_in = in_dim + hidden;
            let w = init_uniform(store, &format!("{prefix}/l{k}/w"), &[fan_in, 4 * hidden], fan_in, rng)?;
            let b = init_uniform(store, &format!("{prefix}/l{k}/b"), &[4 * hidden], fan_in, rng)?;
            out.push(LstmLayer {
                w,
                b,
                input_dim: in_dim,
                hidden,
            });
        }
        Ok(Self { layers: out })
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.w, l.b]).collect()
    }

    /// Advances every layer by one step on input `x` (1×input_dim).
    /// Dropout with probability `p` is applied to each layer's input.
    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: NodeId, state: &LstmState, p: f64, rng: &mut crate::Rng) -> Result<LstmState> {
        let mut input = x;
        let mut next = Vec::with_capacity(self.layers.len());
        for (layer, &(h, c)) in self.layers.iter().zip(&state.layers) {
            let hdim = layer.hidden;
            let xin = g.dropout(input, p, rng)?;
            let cat = g.concat_cols(&[xin, h])?;
            let w = g.param(store, layer.w);
            let b = g.param(store, layer.b);
            let z = g.matmul(cat, w)?;
            let z = g.add(z, b)?;
            let zi = g.slice_cols(z, 0, hdim)?;
            let zf = g.slice_cols(z, hdim, hdim)?;
            let zo = g.slice_cols(z, 2 * hdim, hdim)?;
            let zg = g.slice_cols(z, 3 * hdim, hdim)?;
            let i = g.sigmoid(zi);
            let f = g.sigmoid(zf);
            let o = g.sigmoid(zo);
            let cand = g.tanh(zg);
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            let c_new = g.add(keep, write)?;
            let tc = g.tanh(c_new);
            let h_new = g.mul(o, tc)?;
            next.push((h_new, c_new));
            input = h_new;
        }
        Ok(LstmState { layers: next })
    }
}

/// Dimensions shared by every network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrunkDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// Embedding, encoder, decoder and attention matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trunk {
    pub dims: TrunkDims,
    pub embedding: ParamId,
    pub encoder: Lstm,
    pub decoder: Lstm,
    /// `H × H` matrix of the general (multiplicative) attention score
    /// `hᵀ·W·e`.
    pub attention: ParamId,
}

/// Top-layer encoder outputs, one per position.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub states: Vec<NodeId>,
    /// `T × H` stack of `states`.
    pub matrix: NodeId,
}

impl Trunk {
    /// Creates encoder, decoder and attention under `prefix`. `embedding` is
    /// an existing `V × E` table.
    pub fn new(store: &mut ParamStore, prefix: &str, dims: TrunkDims, embedding: ParamId, rng: &mut crate::Rng) -> Result<Self> {
        let encoder = Lstm::new(store, &format!("{prefix}/enc"), dims.embed, dims.hidden, dims.layers, rng)?;
        let decoder = Lstm::new(store, &format!("{prefix}/dec"), dims.embed, dims.hidden, dims.layers, rng)?;
        let attention = init_uniform(store, &format!("{prefix}/attn/w"), &[dims.hidden, dims.hidden], dims.hidden, rng)?;
        Ok(Self {
            dims,
            embedding,
            encoder,
            decoder,
            attention,
        })
    }

    /// Parameters owned by this trunk, excluding the embedding table.
    pub fn own_params(&self) -> Vec<ParamId> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p.push(self.attention);
        p
    }

    pub fn embed(&self, g: &mut Graph, store: &ParamStore, token: usize) -> Result<NodeId> {
        let table = g.param(store, self.embedding);
        g.embedding(table, &[token])
    }

    /// Runs the encoder over the masked sequence.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, masked: &[usize], p: f64, rng: &mut crate::Rng) -> Result<Encoded> {
        let mut state = LstmState::zeros(g, self.dims.layers, self.dims.hidden);
        let mut states = Vec::with_capacity(masked.len());
        for &tok in masked {
            let x = self.embed(g, store, tok)?;
            state = self.encoder.step(g, store, x, &state, p, rng)?;
            states.push(state.top());
        }
        let matrix = g.concat_rows(&states)?;
        Ok(Encoded { states, matrix })
    }

    /// Softmax attention of decoder output `h` over the encoder states.
    /// Returns `(context, weights)`.
    pub fn attend(&self, g: &mut Graph, store: &ParamStore, h: NodeId, enc: &Encoded) -> Result<(NodeId, NodeId)> {
        let w = g.param(store, self.attention);
        let q = g.matmul(h, w)?;
        let scores = g.matmul_t(q, enc.matrix)?;
        let weights = g.softmax_rows(scores);
        let context = g.matmul(weights, enc.matrix)?;
        Ok((context, weights))
    }
}
