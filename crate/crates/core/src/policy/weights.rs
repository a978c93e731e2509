use super::{param_count, ParameterVector, PolicyKind, PolicySpec};
use crate::error::{structure, Result};

/// Affine layer, `weight` row-major with one row per output unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn view(&self) -> DenseView<'_> {
        DenseView { inputs: self.inputs, outputs: self.outputs, weight: &self.weight, bias: &self.bias }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerNorm {
    pub fn identity(dim: usize) -> Self {
        Self { gain: vec![1.0; dim], bias: vec![0.0; dim] }
    }

    fn view(&self) -> NormView<'_> {
        NormView { gain: &self.gain, bias: &self.bias }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights {
    pub layers: Vec<Dense>,
}

/// One pre-norm transformer layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DtBlock {
    pub attn_norm: LayerNorm,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub out: Dense,
    pub ff_norm: LayerNorm,
    pub ff_in: Dense,
    pub ff_out: Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DtWeights {
    pub embed_return: Dense,
    pub embed_obs: Dense,
    pub embed_action: Dense,
    /// `dt_max_ep_len` rows of `dt_embed_dim`, one per episode timestep.
    pub positions: Vec<f64>,
    pub blocks: Vec<DtBlock>,
    pub final_norm: LayerNorm,
    pub decoder: Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyWeights {
    Mlp(MlpWeights),
    Dt(DtWeights),
}

#[derive(Clone, Copy)]
pub(crate) struct DenseView<'a> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: &'a [f64],
    pub bias: &'a [f64],
}

impl DenseView<'_> {
    /// `out = W x + b`.
    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        for (o, slot) in out[..self.outputs].iter_mut().enumerate() {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *slot = acc;
        }
    }

    fn to_owned(self) -> Dense {
        Dense { inputs: self.inputs, outputs: self.outputs, weight: self.weight.to_vec(), bias: self.bias.to_vec() }
    }
}

#[derive(Clone, Copy)]
pub(crate) struct NormView<'a> {
    pub gain: &'a [f64],
    pub bias: &'a [f64],
}

impl NormView<'_> {
    fn to_owned(self) -> LayerNorm {
        LayerNorm { gain: self.gain.to_vec(), bias: self.bias.to_vec() }
    }
}

pub(crate) struct BlockView<'a> {
    pub attn_norm: NormView<'a>,
    pub query: DenseView<'a>,
    pub key: DenseView<'a>,
    pub value: DenseView<'a>,
    pub out: DenseView<'a>,
    pub ff_norm: NormView<'a>,
    pub ff_in: DenseView<'a>,
    pub ff_out: DenseView<'a>,
}

pub(crate) struct DtView<'a> {
    pub embed_return: DenseView<'a>,
    pub embed_obs: DenseView<'a>,
    pub embed_action: DenseView<'a>,
    pub positions: &'a [f64],
    pub blocks: Vec<BlockView<'a>>,
    pub final_norm: NormView<'a>,
    pub decoder: DenseView<'a>,
}

struct Cursor<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [f64] {
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    fn dense(&mut self, inputs: usize, outputs: usize) -> DenseView<'a> {
        let weight = self.take(inputs * outputs);
        let bias = self.take(outputs);
        DenseView { inputs, outputs, weight, bias }
    }

    fn norm(&mut self, dim: usize) -> NormView<'a> {
        let gain = self.take(dim);
        let bias = self.take(dim);
        NormView { gain, bias }
    }
}

fn check_len(spec: &PolicySpec, params: &[f64]) -> Result<()> {
    let want = param_count(spec);
    if params.len() != want {
        return Err(structure(format!("genome has {} entries, spec needs {want}", params.len())));
    }
    Ok(())
}

/// Layer views over an MLP genome, input to output.
pub(crate) fn mlp_layers<'a>(spec: &PolicySpec, params: &'a [f64]) -> Result<Vec<DenseView<'a>>> {
    check_len(spec, params)?;
    let mut widths = vec![spec.obs_dim];
    widths.extend(&spec.mlp_hidden);
    widths.push(spec.act_dim);
    let mut cur = Cursor { data: params, pos: 0 };
    Ok(widths.windows(2).map(|w| cur.dense(w[0], w[1])).collect())
}

impl<'a> DtView<'a> {
    pub fn parse(spec: &PolicySpec, params: &'a [f64]) -> Result<Self> {
        check_len(spec, params)?;
        let d = spec.dt_embed_dim;
        let mut cur = Cursor { data: params, pos: 0 };
        let embed_return = cur.dense(1, d);
        let embed_obs = cur.dense(spec.obs_dim, d);
        let embed_action = cur.dense(spec.act_dim, d);
        let positions = cur.take(spec.dt_max_ep_len * d);
        let blocks = (0..spec.dt_layers)
            .map(|_| BlockView {
                attn_norm: cur.norm(d),
                query: cur.dense(d, d),
                key: cur.dense(d, d),
                value: cur.dense(d, d),
                out: cur.dense(d, d),
                ff_norm: cur.norm(d),
                ff_in: cur.dense(d, 4 * d),
                ff_out: cur.dense(4 * d, d),
            })
            .collect();
        let final_norm = cur.norm(d);
        let decoder = cur.dense(d, spec.act_dim);
        debug_assert_eq!(cur.pos, params.len());
        Ok(Self { embed_return, embed_obs, embed_action, positions, blocks, final_norm, decoder })
    }
}

/// Splits a genome into structured weights.
pub fn devectorize(spec: &PolicySpec, params: &ParameterVector) -> Result<PolicyWeights> {
    spec.validate()?;
    Ok(match spec.kind {
        PolicyKind::Mlp => PolicyWeights::Mlp(MlpWeights {
            layers: mlp_layers(spec, params.as_slice())?.into_iter().map(DenseView::to_owned).collect(),
        }),
        PolicyKind::DecisionTransformer => {
            let v = DtView::parse(spec, params.as_slice())?;
            PolicyWeights::Dt(DtWeights {
                embed_return: v.embed_return.to_owned(),
                embed_obs: v.embed_obs.to_owned(),
                embed_action: v.embed_action.to_owned(),
                positions: v.positions.to_vec(),
                blocks: v
                    .blocks
                    .into_iter()
                    .map(|b| DtBlock {
                        attn_norm: b.attn_norm.to_owned(),
                        query: b.query.to_owned(),
                        key: b.key.to_owned(),
                        value: b.value.to_owned(),
                        out: b.out.to_owned(),
                        ff_norm: b.ff_norm.to_owned(),
                        ff_in: b.ff_in.to_owned(),
                        ff_out: b.ff_out.to_owned(),
                    })
                    .collect(),
                final_norm: v.final_norm.to_owned(),
                decoder: v.decoder.to_owned(),
            })
        }
    })
}

struct Writer {
    out: Vec<f64>,
}

impl Writer {
    fn dense(&mut self, what: &str, layer: &Dense, inputs: usize, outputs: usize) -> Result<()> {
        let v = layer.view();
        if v.inputs != inputs
            || v.outputs != outputs
            || v.weight.len() != inputs * outputs
            || v.bias.len() != outputs
        {
            return Err(structure(format!(
                "{what}: expected {inputs}->{outputs}, got {}->{} ({} weights, {} biases)",
                v.inputs,
                v.outputs,
                v.weight.len(),
                v.bias.len()
            )));
        }
        self.out.extend_from_slice(v.weight);
        self.out.extend_from_slice(v.bias);
        Ok(())
    }

    fn norm(&mut self, what: &str, norm: &LayerNorm, dim: usize) -> Result<()> {
        let v = norm.view();
        if v.gain.len() != dim || v.bias.len() != dim {
            return Err(structure(format!("{what}: expected width {dim}")));
        }
        self.out.extend_from_slice(v.gain);
        self.out.extend_from_slice(v.bias);
        Ok(())
    }
}

/// Flattens structured weights in the normative layout order.
pub fn vectorize(spec: &PolicySpec, weights: &PolicyWeights) -> Result<ParameterVector> {
    spec.validate()?;
    let mut w = Writer { out: Vec::with_capacity(param_count(spec)) };
    match (spec.kind, weights) {
        (PolicyKind::Mlp, PolicyWeights::Mlp(m)) => {
            let mut widths = vec![spec.obs_dim];
            widths.extend(&spec.mlp_hidden);
            widths.push(spec.act_dim);
            if m.layers.len() != widths.len() - 1 {
                return Err(structure(format!(
                    "expected {} layers, got {}",
                    widths.len() - 1,
                    m.layers.len()
                )));
            }
            for (i, (layer, io)) in m.layers.iter().zip(widths.windows(2)).enumerate() {
                w.dense(&format!("layer {i}"), layer, io[0], io[1])?;
            }
        }
        (PolicyKind::DecisionTransformer, PolicyWeights::Dt(t)) => {
            let d = spec.dt_embed_dim;
            w.dense("return embedding", &t.embed_return, 1, d)?;
            w.dense("observation embedding", &t.embed_obs, spec.obs_dim, d)?;
            w.dense("action embedding", &t.embed_action, spec.act_dim, d)?;
            if t.positions.len() != spec.dt_max_ep_len * d {
                return Err(structure("positional table shape"));
            }
            w.out.extend_from_slice(&t.positions);
            if t.blocks.len() != spec.dt_layers {
                return Err(structure(format!("expected {} layers, got {}", spec.dt_layers, t.blocks.len())));
            }
            for b in &t.blocks {
                w.norm("attention norm", &b.attn_norm, d)?;
                w.dense("query", &b.query, d, d)?;
                w.dense("key", &b.key, d, d)?;
                w.dense("value", &b.value, d, d)?;
                w.dense("attention output", &b.out, d, d)?;
                w.norm("feed-forward norm", &b.ff_norm, d)?;
                w.dense("feed-forward in", &b.ff_in, d, 4 * d)?;
                w.dense("feed-forward out", &b.ff_out, 4 * d, d)?;
            }
            w.norm("final norm", &t.final_norm, d)?;
            w.dense("decoder", &t.decoder, d, spec.act_dim)?;
        }
        _ => return Err(structure("weights kind differs from spec kind")),
    }
    ParameterVector::new(w.out)
}
