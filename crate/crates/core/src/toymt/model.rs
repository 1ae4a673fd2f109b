//! Pre-norm decoder-only transformer over characters, in f64, with a
//! hand-written backward pass.
//!
//! Parameters live in one flat vector; [`Layout`] records where each named
//! tensor starts. Matrices are stored row-major as `[in][out]`, so `y = x · W`.

use std::ops::Range;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::{EncodedPair, Vocab};
use super::ModelError;
use crate::util;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Ordered character set; the full vocabulary adds PAD, BOS, SEP and EOS.
    pub chars: String,
    pub dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Longest encoded sequence `[BOS, src, SEP, tgt, EOS]`; also the size of the position table.
    pub max_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<Vocab, ModelError> {
        let vocab = Vocab::new(&self.chars)?;
        if self.dim == 0 || self.n_heads == 0 || !self.dim.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "dim {} must be a positive multiple of n_heads {}",
                self.dim, self.n_heads
            )));
        }
        if self.n_layers == 0 {
            return Err(ModelError::Config("n_layers must be at least 1".into()));
        }
        if self.max_len < 3 {
            return Err(ModelError::Config("max_len must be at least 3".into()));
        }
        Ok(vocab)
    }

    pub fn vocab_size(&self) -> usize {
        self.chars.chars().count() + 4
    }

    pub fn n_out(&self) -> usize {
        self.chars.chars().count() + 1
    }

    pub fn hidden(&self) -> usize {
        4 * self.dim
    }

    /// Closed-form parameter count.
    ///
    /// With `V` vocabulary size, `M` max_len, `d` width, `h = 4d` MLP width,
    /// `L` layers and `O = V - 3` output classes:
    ///
    /// ```text
    /// V·d + M·d + 2·d                      token, position, segment embeddings
    /// + L·(4d + 4d² + 2dh + h + d)         per block: 2 norms, Wq Wk Wv Wo, MLP
    /// + 2d + d·O + O                       final norm and output head
    /// ```
    pub fn param_count(&self) -> usize {
        let (v, m, d, h, l, o) = (
            self.vocab_size(),
            self.max_len,
            self.dim,
            self.hidden(),
            self.n_layers,
            self.n_out(),
        );
        v * d + m * d + 2 * d + l * (4 * d + 4 * d * d + 2 * d * h + h + d) + 2 * d + d * o + o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BlockLayout {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Offsets of every named tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    tok_emb: usize,
    pos_emb: usize,
    seg_emb: usize,
    blocks: Vec<BlockLayout>,
    lnf_g: usize,
    lnf_b: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
    groups: Vec<(String, Range<usize>)>,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let (d, h, o) = (cfg.dim, cfg.hidden(), cfg.n_out());
        let mut groups = Vec::new();
        let mut cursor = 0usize;
        let mut take = |name: String, n: usize| {
            let start = cursor;
            cursor += n;
            groups.push((name, start..cursor));
            start
        };
        let tok_emb = take("tok_emb".into(), cfg.vocab_size() * d);
        let pos_emb = take("pos_emb".into(), cfg.max_len * d);
        let seg_emb = take("seg_emb".into(), 2 * d);
        let blocks = (0..cfg.n_layers)
            .map(|l| BlockLayout {
                ln1_g: take(format!("block{l}.ln1_g"), d),
                ln1_b: take(format!("block{l}.ln1_b"), d),
                wq: take(format!("block{l}.wq"), d * d),
                wk: take(format!("block{l}.wk"), d * d),
                wv: take(format!("block{l}.wv"), d * d),
                wo: take(format!("block{l}.wo"), d * d),
                ln2_g: take(format!("block{l}.ln2_g"), d),
                ln2_b: take(format!("block{l}.ln2_b"), d),
                w1: take(format!("block{l}.w1"), d * h),
                b1: take(format!("block{l}.b1"), h),
                w2: take(format!("block{l}.w2"), h * d),
                b2: take(format!("block{l}.b2"), d),
            })
            .collect();
        let lnf_g = take("lnf_g".into(), d);
        let lnf_b = take("lnf_b".into(), d);
        let w_out = take("w_out".into(), d * o);
        let b_out = take("b_out".into(), o);
        Self {
            tok_emb,
            pos_emb,
            seg_emb,
            blocks,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            total: cursor,
            groups,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    config: ModelConfig,
    vocab: Vocab,
    layout: Layout,
    params: Vec<f64>,
}

impl ToyModel {
    /// Seeded initialisation. The output head starts at zero, so the first
    /// next-token distribution is uniform over the output classes.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        let vocab = config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = util::rng(config.seed);
        let (d, h) = (config.dim, config.hidden());
        let mut fill = |params: &mut [f64], start: usize, n: usize, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            for p in &mut params[start..start + n] {
                *p = normal.sample(&mut rng);
            }
        };
        fill(&mut params, layout.tok_emb, config.vocab_size() * d, 1.0);
        fill(&mut params, layout.pos_emb, config.max_len * d, 1.0);
        fill(&mut params, layout.seg_emb, 2 * d, 1.0);
        let resid_scale = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        for b in &layout.blocks {
            params[b.ln1_g..b.ln1_g + d].fill(1.0);
            params[b.ln2_g..b.ln2_g + d].fill(1.0);
            let s = 1.0 / (d as f64).sqrt();
            fill(&mut params, b.wq, d * d, s);
            fill(&mut params, b.wk, d * d, s);
            fill(&mut params, b.wv, d * d, s);
            fill(&mut params, b.wo, d * d, s * resid_scale);
            fill(&mut params, b.w1, d * h, s);
            fill(&mut params, b.w2, h * d, resid_scale / (h as f64).sqrt());
        }
        params[layout.lnf_g..layout.lnf_g + d].fill(1.0);
        Ok(Self {
            config,
            vocab,
            layout,
            params,
        })
    }

    /// Rebuilds a model from a config and an explicit parameter vector.
    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self, ModelError> {
        let vocab = config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::Config(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite("parameters".into()));
        }
        Ok(Self {
            config,
            vocab,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Named slices of the parameter vector, in storage order.
    pub fn param_groups(&self) -> &[(String, Range<usize>)] {
        &self.layout.groups
    }

    pub fn view(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .groups
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| &self.params[r.clone()])
    }

    pub fn view_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self
            .layout
            .groups
            .iter()
            .find(|(n, _)| n == name)?
            .1
            .clone();
        Some(&mut self.params[range])
    }

    pub fn encode(&self, source: &str, target: &str) -> Result<EncodedPair, ModelError> {
        self.vocab.encode_pair(source, target, self.config.max_len)
    }

    /// SHA-256 of the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let bytes: Vec<u8> = self.params.iter().flat_map(|p| p.to_le_bytes()).collect();
        util::sha256_hex(&bytes)
    }

    fn embed(&self, tok: u32, pos: u32, seg: u8, out: &mut [f64]) {
        let d = self.config.dim;
        let p = &self.params;
        let t = &p[self.layout.tok_emb + tok as usize * d..][..d];
        let q = &p[self.layout.pos_emb + pos as usize * d..][..d];
        let s = &p[self.layout.seg_emb + seg as usize * d..][..d];
        for i in 0..d {
            out[i] = t[i] + q[i] + s[i];
        }
    }

    /// Full forward pass over the scored prefix of `enc`; keeps every
    /// activation the backward pass needs.
    pub fn forward(&self, enc: &EncodedPair) -> Trace {
        let cfg = &self.config;
        let (d, h, o, nh) = (cfg.dim, cfg.hidden(), cfg.n_out(), cfg.n_heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;
        // the final EOS is never an input to a scored prediction
        let t_len = enc.len() - 1;

        let mut x = vec![0.0; t_len * d];
        for t in 0..t_len {
            self.embed(
                enc.tokens[t],
                enc.positions[t],
                enc.segments[t],
                &mut x[t * d..(t + 1) * d],
            );
        }

        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for b in &self.layout.blocks {
            let x_in = x;
            let ln1 = layer_norm(&x_in, d, &p[b.ln1_g..b.ln1_g + d], &p[b.ln1_b..b.ln1_b + d]);
            let mut q = vec![0.0; t_len * d];
            let mut k = vec![0.0; t_len * d];
            let mut v = vec![0.0; t_len * d];
            for t in 0..t_len {
                let xr = &ln1.out[t * d..(t + 1) * d];
                matvec_acc(xr, &p[b.wq..b.wq + d * d], &mut q[t * d..(t + 1) * d]);
                matvec_acc(xr, &p[b.wk..b.wk + d * d], &mut k[t * d..(t + 1) * d]);
                matvec_acc(xr, &p[b.wv..b.wv + d * d], &mut v[t * d..(t + 1) * d]);
            }
            let mut probs = vec![0.0; nh * t_len * t_len];
            let mut att = vec![0.0; t_len * d];
            for head in 0..nh {
                let off = head * dh;
                for t in 0..t_len {
                    let row = &mut probs[(head * t_len + t) * t_len..][..t + 1];
                    let qt = &q[t * d + off..][..dh];
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = dot(qt, &k[j * d + off..][..dh]) * scale;
                    }
                    softmax_in_place(row);
                    let out = &mut att[t * d + off..][..dh];
                    for (j, &pj) in row.iter().enumerate() {
                        axpy(pj, &v[j * d + off..][..dh], out);
                    }
                }
            }
            let mut x_mid = x_in.clone();
            for t in 0..t_len {
                matvec_acc(
                    &att[t * d..(t + 1) * d],
                    &p[b.wo..b.wo + d * d],
                    &mut x_mid[t * d..(t + 1) * d],
                );
            }
            let ln2 = layer_norm(
                &x_mid,
                d,
                &p[b.ln2_g..b.ln2_g + d],
                &p[b.ln2_b..b.ln2_b + d],
            );
            let mut u = vec![0.0; t_len * h];
            let mut g = vec![0.0; t_len * h];
            let mut x_out = x_mid.clone();
            for t in 0..t_len {
                let ur = &mut u[t * h..(t + 1) * h];
                ur.copy_from_slice(&p[b.b1..b.b1 + h]);
                matvec_acc(&ln2.out[t * d..(t + 1) * d], &p[b.w1..b.w1 + d * h], ur);
                let gr = &mut g[t * h..(t + 1) * h];
                for (gi, &ui) in gr.iter_mut().zip(ur.iter()) {
                    *gi = gelu(ui);
                }
                let xr = &mut x_out[t * d..(t + 1) * d];
                for (xi, &bi) in xr.iter_mut().zip(&p[b.b2..b.b2 + d]) {
                    *xi += bi;
                }
                matvec_acc(gr, &p[b.w2..b.w2 + h * d], xr);
            }
            blocks.push(BlockTrace {
                x_in,
                ln1,
                q,
                k,
                v,
                probs,
                att,
                x_mid,
                ln2,
                u,
                g,
            });
            x = x_out;
        }

        let l = &self.layout;
        let lnf = layer_norm(&x, d, &p[l.lnf_g..l.lnf_g + d], &p[l.lnf_b..l.lnf_b + d]);
        let pred: Vec<usize> = (0..t_len).filter(|&t| enc.target_mask[t]).collect();
        let mut out_probs = vec![0.0; pred.len() * o];
        let mut targets = Vec::with_capacity(pred.len());
        let mut logprob = 0.0;
        for (i, &t) in pred.iter().enumerate() {
            let z = &mut out_probs[i * o..(i + 1) * o];
            z.copy_from_slice(&p[l.b_out..l.b_out + o]);
            matvec_acc(
                &lnf.out[t * d..(t + 1) * d],
                &p[l.w_out..l.w_out + d * o],
                z,
            );
            let lse = log_sum_exp(z);
            let class = self
                .vocab
                .class_of_token(enc.tokens[t + 1])
                .expect("targets are EOS or characters");
            logprob += z[class] - lse;
            for zi in z.iter_mut() {
                *zi = (*zi - lse).exp();
            }
            targets.push(class);
        }

        Trace {
            tokens: enc.tokens[..t_len].to_vec(),
            positions: enc.positions[..t_len].to_vec(),
            segments: enc.segments[..t_len].to_vec(),
            blocks,
            lnf,
            pred,
            out_probs,
            targets,
            logprob,
        }
    }

    /// Accumulates `coef · ∂logprob/∂θ` for the traced sequence into `grad`.
    pub fn backward(&self, trace: &Trace, coef: f64, grad: &mut [f64]) {
        assert_eq!(
            grad.len(),
            self.params.len(),
            "gradient buffer has the wrong length"
        );
        let cfg = &self.config;
        let (d, h, o, nh) = (cfg.dim, cfg.hidden(), cfg.n_out(), cfg.n_heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;
        let l = &self.layout;
        let t_len = trace.tokens.len();

        // output head
        let mut dlnf = vec![0.0; t_len * d];
        let mut dz = vec![0.0; o];
        for (i, &t) in trace.pred.iter().enumerate() {
            let probs = &trace.out_probs[i * o..(i + 1) * o];
            for (c, dzc) in dz.iter_mut().enumerate() {
                *dzc = -coef * probs[c];
            }
            dz[trace.targets[i]] += coef;
            let xr = &trace.lnf.out[t * d..(t + 1) * d];
            outer_acc(xr, &dz, &mut grad[l.w_out..l.w_out + d * o]);
            for (gb, &z) in grad[l.b_out..l.b_out + o].iter_mut().zip(&dz) {
                *gb += z;
            }
            matvec_t_acc(
                &dz,
                &p[l.w_out..l.w_out + d * o],
                &mut dlnf[t * d..(t + 1) * d],
            );
        }
        let mut dx = vec![0.0; t_len * d];
        layer_norm_backward(
            &trace.lnf,
            &dlnf,
            d,
            &p[l.lnf_g..l.lnf_g + d],
            grad,
            l.lnf_g,
            l.lnf_b,
            &mut dx,
        );

        for (b, bt) in l.blocks.iter().zip(&trace.blocks).rev() {
            // MLP: x_out = x_mid + W2·gelu(W1·ln2 + b1) + b2
            let mut dln2 = vec![0.0; t_len * d];
            let mut du = vec![0.0; h];
            for t in 0..t_len {
                let dxr = &dx[t * d..(t + 1) * d];
                if dxr.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for (gb, &v) in grad[b.b2..b.b2 + d].iter_mut().zip(dxr) {
                    *gb += v;
                }
                outer_acc(
                    &bt.g[t * h..(t + 1) * h],
                    dxr,
                    &mut grad[b.w2..b.w2 + h * d],
                );
                du.fill(0.0);
                matvec_t_acc(dxr, &p[b.w2..b.w2 + h * d], &mut du);
                for (dui, &ui) in du.iter_mut().zip(&bt.u[t * h..(t + 1) * h]) {
                    *dui *= gelu_grad(ui);
                }
                for (gb, &v) in grad[b.b1..b.b1 + h].iter_mut().zip(&du) {
                    *gb += v;
                }
                outer_acc(
                    &bt.ln2.out[t * d..(t + 1) * d],
                    &du,
                    &mut grad[b.w1..b.w1 + d * h],
                );
                matvec_t_acc(&du, &p[b.w1..b.w1 + d * h], &mut dln2[t * d..(t + 1) * d]);
            }
            // dx now flows into x_mid through the residual path
            layer_norm_backward(
                &bt.ln2,
                &dln2,
                d,
                &p[b.ln2_g..b.ln2_g + d],
                grad,
                b.ln2_g,
                b.ln2_b,
                &mut dx,
            );

            // attention: x_mid = x_in + Wo·att
            let mut datt = vec![0.0; t_len * d];
            for t in 0..t_len {
                let dxr = &dx[t * d..(t + 1) * d];
                outer_acc(
                    &bt.att[t * d..(t + 1) * d],
                    dxr,
                    &mut grad[b.wo..b.wo + d * d],
                );
                matvec_t_acc(dxr, &p[b.wo..b.wo + d * d], &mut datt[t * d..(t + 1) * d]);
            }
            let mut dq = vec![0.0; t_len * d];
            let mut dk = vec![0.0; t_len * d];
            let mut dv = vec![0.0; t_len * d];
            let mut dp = vec![0.0; t_len];
            for head in 0..nh {
                let off = head * dh;
                for t in 0..t_len {
                    let row = &bt.probs[(head * t_len + t) * t_len..][..t + 1];
                    let da = &datt[t * d + off..][..dh];
                    let mut weighted = 0.0;
                    for (j, &pj) in row.iter().enumerate() {
                        dp[j] = dot(da, &bt.v[j * d + off..][..dh]);
                        weighted += pj * dp[j];
                        axpy(pj, da, &mut dv[j * d + off..][..dh]);
                    }
                    for (j, &pj) in row.iter().enumerate() {
                        let ds = pj * (dp[j] - weighted) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        axpy(ds, &bt.k[j * d + off..][..dh], &mut dq[t * d + off..][..dh]);
                        axpy(ds, &bt.q[t * d + off..][..dh], &mut dk[j * d + off..][..dh]);
                    }
                }
            }
            let mut dln1 = vec![0.0; t_len * d];
            for t in 0..t_len {
                let xr = &bt.ln1.out[t * d..(t + 1) * d];
                let r = t * d..(t + 1) * d;
                outer_acc(xr, &dq[r.clone()], &mut grad[b.wq..b.wq + d * d]);
                outer_acc(xr, &dk[r.clone()], &mut grad[b.wk..b.wk + d * d]);
                outer_acc(xr, &dv[r.clone()], &mut grad[b.wv..b.wv + d * d]);
                let out = &mut dln1[r.clone()];
                matvec_t_acc(&dq[r.clone()], &p[b.wq..b.wq + d * d], out);
                matvec_t_acc(&dk[r.clone()], &p[b.wk..b.wk + d * d], out);
                matvec_t_acc(&dv[r], &p[b.wv..b.wv + d * d], out);
            }
            layer_norm_backward(
                &bt.ln1,
                &dln1,
                d,
                &p[b.ln1_g..b.ln1_g + d],
                grad,
                b.ln1_g,
                b.ln1_b,
                &mut dx,
            );
        }

        for t in 0..t_len {
            let dxr = &dx[t * d..(t + 1) * d];
            let tok = l.tok_emb + trace.tokens[t] as usize * d;
            let pos = l.pos_emb + trace.positions[t] as usize * d;
            let seg = l.seg_emb + trace.segments[t] as usize * d;
            for i in 0..d {
                grad[tok + i] += dxr[i];
                grad[pos + i] += dxr[i];
                grad[seg + i] += dxr[i];
            }
        }
    }

    /// Log-probability of `target` given `source`: the sum of log-softmax
    /// probabilities of every target character and the closing EOS.
    pub fn sequence_logprob(&self, source: &str, target: &str) -> Result<f64, ModelError> {
        let enc = self.encode(source, target)?;
        Ok(self.forward(&enc).logprob)
    }

    /// Starts incremental decoding after `[BOS, source, SEP]`.
    pub fn start_decoding(&self, source: &str) -> Result<DecodeState, ModelError> {
        let src = self.vocab.encode_text(source)?;
        if src.len() + 3 > self.config.max_len {
            return Err(ModelError::TooLong {
                len: src.len() + 3,
                max_len: self.config.max_len,
            });
        }
        let mut state = DecodeState {
            keys: vec![Vec::new(); self.config.n_layers],
            values: vec![Vec::new(); self.config.n_layers],
            logits: Vec::new(),
            len: 0,
            target_len: 0,
            source_len: src.len(),
        };
        let mut prefix = vec![super::vocab::BOS];
        prefix.extend(src);
        prefix.push(super::vocab::SEP);
        let n = prefix.len();
        for (i, tok) in prefix.into_iter().enumerate() {
            self.step(&mut state, tok, i as u32, 0, i + 1 == n);
        }
        Ok(state)
    }

    /// Appends a generated target token (an output class) and refreshes the logits.
    pub fn push_class(&self, state: &mut DecodeState, class: usize) {
        state.target_len += 1;
        let pos = state.target_len as u32;
        self.step(state, self.vocab.token_of_class(class), pos, 1, true);
    }

    fn step(&self, st: &mut DecodeState, tok: u32, pos: u32, seg: u8, want_logits: bool) {
        let cfg = &self.config;
        let (d, h, o, nh) = (cfg.dim, cfg.hidden(), cfg.n_out(), cfg.n_heads);
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let p = &self.params;
        let mut x = vec![0.0; d];
        self.embed(tok, pos, seg, &mut x);
        let t = st.len;
        let mut scores = vec![0.0; t + 1];
        for (li, b) in self.layout.blocks.iter().enumerate() {
            let ln1 = layer_norm(&x, d, &p[b.ln1_g..b.ln1_g + d], &p[b.ln1_b..b.ln1_b + d]).out;
            let mut q = vec![0.0; d];
            let mut k = vec![0.0; d];
            let mut v = vec![0.0; d];
            matvec_acc(&ln1, &p[b.wq..b.wq + d * d], &mut q);
            matvec_acc(&ln1, &p[b.wk..b.wk + d * d], &mut k);
            matvec_acc(&ln1, &p[b.wv..b.wv + d * d], &mut v);
            st.keys[li].extend_from_slice(&k);
            st.values[li].extend_from_slice(&v);
            let (keys, values) = (&st.keys[li], &st.values[li]);
            let mut att = vec![0.0; d];
            for head in 0..nh {
                let off = head * dh;
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot(&q[off..off + dh], &keys[j * d + off..][..dh]) * scale;
                }
                softmax_in_place(&mut scores);
                for (j, &pj) in scores.iter().enumerate() {
                    axpy(pj, &values[j * d + off..][..dh], &mut att[off..off + dh]);
                }
            }
            matvec_acc(&att, &p[b.wo..b.wo + d * d], &mut x);
            let ln2 = layer_norm(&x, d, &p[b.ln2_g..b.ln2_g + d], &p[b.ln2_b..b.ln2_b + d]).out;
            let mut u = p[b.b1..b.b1 + h].to_vec();
            matvec_acc(&ln2, &p[b.w1..b.w1 + d * h], &mut u);
            for ui in u.iter_mut() {
                *ui = gelu(*ui);
            }
            for (xi, &bi) in x.iter_mut().zip(&p[b.b2..b.b2 + d]) {
                *xi += bi;
            }
            matvec_acc(&u, &p[b.w2..b.w2 + h * d], &mut x);
        }
        st.len += 1;
        if want_logits {
            let l = &self.layout;
            let lnf = layer_norm(&x, d, &p[l.lnf_g..l.lnf_g + d], &p[l.lnf_b..l.lnf_b + d]).out;
            let mut z = p[l.b_out..l.b_out + o].to_vec();
            matvec_acc(&lnf, &p[l.w_out..l.w_out + d * o], &mut z);
            st.logits = z;
        }
    }
}

/// Key/value cache for incremental decoding.
#[derive(Debug, Clone)]
pub struct DecodeState {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    logits: Vec<f64>,
    len: usize,
    target_len: usize,
    source_len: usize,
}

impl DecodeState {
    /// Next-token logits over output classes (`EOS` first, then characters).
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }
}

/// Activations of one forward pass, consumed by [`ToyModel::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    tokens: Vec<u32>,
    positions: Vec<u32>,
    segments: Vec<u8>,
    blocks: Vec<BlockTrace>,
    lnf: LnTrace,
    pred: Vec<usize>,
    out_probs: Vec<f64>,
    targets: Vec<usize>,
    logprob: f64,
}

impl Trace {
    pub fn logprob(&self) -> f64 {
        self.logprob
    }
}

#[derive(Debug, Clone)]
struct BlockTrace {
    #[allow(dead_code)]
    x_in: Vec<f64>,
    ln1: LnTrace,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    att: Vec<f64>,
    #[allow(dead_code)]
    x_mid: Vec<f64>,
    ln2: LnTrace,
    u: Vec<f64>,
    g: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LnTrace {
    out: Vec<f64>,
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], d: usize, gain: &[f64], bias: &[f64]) -> LnTrace {
    let n = x.len() / d;
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; n];
    for t in 0..n {
        let xr = &x[t * d..(t + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[t] = r;
        for i in 0..d {
            let xh = (xr[i] - mean) * r;
            xhat[t * d + i] = xh;
            out[t * d + i] = xh * gain[i] + bias[i];
        }
    }
    LnTrace { out, xhat, rstd }
}

/// Backpropagates `dy` through a layer norm, accumulating parameter gradients
/// at `g_off`/`b_off` and adding the input gradient into `dx`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(
    ln: &LnTrace,
    dy: &[f64],
    d: usize,
    gain: &[f64],
    grad: &mut [f64],
    g_off: usize,
    b_off: usize,
    dx: &mut [f64],
) {
    let n = ln.rstd.len();
    let mut dxhat = vec![0.0; d];
    for t in 0..n {
        let dyr = &dy[t * d..(t + 1) * d];
        if dyr.iter().all(|&v| v == 0.0) {
            continue;
        }
        let xh = &ln.xhat[t * d..(t + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for i in 0..d {
            grad[g_off + i] += dyr[i] * xh[i];
            grad[b_off + i] += dyr[i];
            dxhat[i] = dyr[i] * gain[i];
            m1 += dxhat[i];
            m2 += dxhat[i] * xh[i];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let r = ln.rstd[t];
        for i in 0..d {
            dx[t * d + i] += r * (dxhat[i] - m1 - xh[i] * m2);
        }
    }
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let th = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y += x · W` with `W` stored `[x.len()][y.len()]`.
#[inline]
fn matvec_acc(x: &[f64], w: &[f64], y: &mut [f64]) {
    let out = y.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, &w[i * out..(i + 1) * out], y);
        }
    }
}

/// `dx += W · dy` with `W` stored `[dx.len()][dy.len()]`.
#[inline]
fn matvec_t_acc(dy: &[f64], w: &[f64], dx: &mut [f64]) {
    let out = dy.len();
    for (i, dxi) in dx.iter_mut().enumerate() {
        *dxi += dot(&w[i * out..(i + 1) * out], dy);
    }
}

/// `dW += x ⊗ dy`.
#[inline]
fn outer_acc(x: &[f64], dy: &[f64], dw: &mut [f64]) {
    let out = dy.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, dy, &mut dw[i * out..(i + 1) * out]);
        }
    }
}
