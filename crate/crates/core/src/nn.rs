//! Minimal transformer layers over `candle` tensors.
//!
//! Parameters live in a [`ParamStore`] as `Var`s, initialized from a seeded
//! ChaCha stream so that a seed fully determines the weights.

use std::cell::RefCell;
use std::collections::BTreeMap;

use candle_core::{DType, Device, Result, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Named trainable parameters sharing one dtype and device.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Order-sensitive digest of every parameter value; used to check that an
    /// optimizer half-step left the other side untouched.
    pub fn fingerprint(&self) -> Result<u64> {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, var) in &self.vars {
            for b in name.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
            }
            let values = var.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            for v in values {
                h = (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3);
            }
        }
        Ok(h)
    }

    fn insert(&mut self, name: String, t: Tensor) -> Result<Tensor> {
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        if self.vars.insert(name.clone(), var).is_some() {
            candle_core::bail!("duplicate parameter {name}");
        }
        Ok(out)
    }
}

/// Creates parameters under a name prefix.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn pp(&mut self, name: &str) -> ParamBuilder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        };
        ParamBuilder {
            store: self.store,
            rng: self.rng,
            prefix,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    fn from_values(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::from_vec(values, shape, &self.store.device)?.to_dtype(self.store.dtype)?;
        let name = self.full_name(name);
        self.store.insert(name, t)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        let values = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.from_values(name, shape, values)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(self.rng);
                z * std
            })
            .collect();
        self.from_values(name, shape, values)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        self.from_values(name, shape, vec![value; n])
    }
}

/// Dropout state for a training forward pass; `None` means evaluation.
#[derive(Clone, Copy, Default)]
pub struct Ctx<'a> {
    dropout: Option<(f64, &'a RefCell<ChaCha8Rng>)>,
}

impl<'a> Ctx<'a> {
    pub fn eval() -> Self {
        Self { dropout: None }
    }

    pub fn train(p: f64, rng: &'a RefCell<ChaCha8Rng>) -> Self {
        if p > 0.0 {
            Self {
                dropout: Some((p, rng)),
            }
        } else {
            Self::eval()
        }
    }

    pub fn dropout(&self, x: &Tensor) -> Result<Tensor> {
        let Some((p, rng)) = self.dropout else {
            return Ok(x.clone());
        };
        let keep = 1.0 - p;
        let mask: Vec<f64> = {
            let mut rng = rng.borrow_mut();
            (0..x.elem_count())
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        };
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(x.dtype())?;
        x * mask
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, input: usize, output: usize) -> Result<Self> {
        let mut pb = pb.pp(name);
        let bound = 1.0 / (input as f64).sqrt();
        Ok(Self {
            weight: pb.uniform("weight", &[output, input], bound)?,
            bias: pb.uniform("bias", &[output], bound)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.broadcast_matmul(&self.weight.t()?)?.broadcast_add(&self.bias)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize) -> Result<Self> {
        let mut pb = pb.pp(name);
        Ok(Self {
            gamma: pb.constant("gamma", &[dim], 1.0)?,
            beta: pb.constant("beta", &[dim], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
        normed.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)
    }
}

/// Numerically stable softmax over the last dimension.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    e.broadcast_div(&e.sum_keepdim(D::Minus1)?)
}

/// Additive attention bias `(B, 1, 1, N)` from a `(B, N)` 0/1 key mask.
pub fn key_padding_bias(mask: &Tensor) -> Result<Tensor> {
    let (b, n) = mask.dims2()?;
    mask.affine(1e9, -1e9)?.reshape((b, 1, 1, n))
}

/// Additive `(L, L)` bias that blocks attention to later positions.
pub fn causal_bias(len: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let values: Vec<f64> = (0..len)
        .flat_map(|i| (0..len).map(move |j| if j > i { -1e9 } else { 0.0 }))
        .collect();
    Tensor::from_vec(values, (len, len), device)?.to_dtype(dtype)
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize) -> Result<Self> {
        let mut pb = pb.pp(name);
        Ok(Self {
            q: Linear::new(&mut pb, "q", dim, dim)?,
            k: Linear::new(&mut pb, "k", dim, dim)?,
            v: Linear::new(&mut pb, "v", dim, dim)?,
            out: Linear::new(&mut pb, "out", dim, dim)?,
            heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l, d) = x.dims3()?;
        x.reshape((b, l, self.heads, d / self.heads))?
            .transpose(1, 2)?
            .contiguous()
    }

    /// `query`: `(B, Lq, D)`, `context`: `(B, Lk, D)`; `bias` broadcasts to
    /// `(B, H, Lq, Lk)`.
    pub fn forward(&self, query: &Tensor, context: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let (b, lq, d) = query.dims3()?;
        let head_dim = d / self.heads;
        let q = self.split_heads(&self.q.forward(query)?)?;
        let k = self.split_heads(&self.k.forward(context)?)?;
        let v = self.split_heads(&self.v.forward(context)?)?;
        let mut scores = (q.matmul(&k.t()?)? / (head_dim as f64).sqrt())?;
        if let Some(bias) = bias {
            scores = scores.broadcast_add(bias)?;
        }
        let attn = softmax_last(&scores)?;
        let mixed = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, lq, d))?;
        self.out.forward(&mixed)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, hidden: usize) -> Result<Self> {
        let mut pb = pb.pp(name);
        Ok(Self {
            up: Linear::new(&mut pb, "up", dim, hidden)?,
            down: Linear::new(&mut pb, "down", hidden, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&self.up.forward(x)?.relu()?)
    }
}

/// Pre-norm self-attention block.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize) -> Result<Self> {
        let mut pb = pb.pp(name);
        Ok(Self {
            norm1: LayerNorm::new(&mut pb, "norm1", dim)?,
            attn: MultiHeadAttention::new(&mut pb, "attn", dim, heads)?,
            norm2: LayerNorm::new(&mut pb, "norm2", dim)?,
            ff: FeedForward::new(&mut pb, "ff", dim, 4 * dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor, bias: Option<&Tensor>, ctx: &Ctx) -> Result<Tensor> {
        let h = self.norm1.forward(x)?;
        let x = (x + ctx.dropout(&self.attn.forward(&h, &h, bias)?)?)?;
        let h = self.norm2.forward(&x)?;
        &x + ctx.dropout(&self.ff.forward(&h)?)?
    }
}

/// Pre-norm block with self-attention, cross-attention to a memory, and MLP.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    norm1: LayerNorm,
    self_attn: MultiHeadAttention,
    norm2: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm3: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, heads: usize) -> Result<Self> {
        let mut pb = pb.pp(name);
        Ok(Self {
            norm1: LayerNorm::new(&mut pb, "norm1", dim)?,
            self_attn: MultiHeadAttention::new(&mut pb, "self_attn", dim, heads)?,
            norm2: LayerNorm::new(&mut pb, "norm2", dim)?,
            cross_attn: MultiHeadAttention::new(&mut pb, "cross_attn", dim, heads)?,
            norm3: LayerNorm::new(&mut pb, "norm3", dim)?,
            ff: FeedForward::new(&mut pb, "ff", dim, 4 * dim)?,
        })
    }

    pub fn forward(
        &self,
        x: &Tensor,
        memory: &Tensor,
        self_bias: Option<&Tensor>,
        ctx: &Ctx,
    ) -> Result<Tensor> {
        let h = self.norm1.forward(x)?;
        let x = (x + ctx.dropout(&self.self_attn.forward(&h, &h, self_bias)?)?)?;
        let h = self.norm2.forward(&x)?;
        let x = (&x + ctx.dropout(&self.cross_attn.forward(&h, memory, None)?)?)?;
        let h = self.norm3.forward(&x)?;
        &x + ctx.dropout(&self.ff.forward(&h)?)?
    }
}

/// Fully connected stack with ReLU between layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(pb: &mut ParamBuilder, name: &str, sizes: &[usize]) -> Result<Self> {
        let mut pb = pb.pp(name);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&mut pb, &format!("{i}"), w[0], w[1]))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut x = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x)?;
            if i + 1 < self.layers.len() {
                x = x.relu()?;
            }
        }
        Ok(x)
    }
}

/// Learnable lookup table.
#[derive(Debug, Clone)]
pub struct Embedding {
    table: Tensor,
}

impl Embedding {
    pub fn new(pb: &mut ParamBuilder, name: &str, rows: usize, dim: usize, std: f64) -> Result<Self> {
        Ok(Self {
            table: pb.pp(name).normal("table", &[rows, dim], std)?,
        })
    }

    pub fn rows(&self) -> usize {
        self.table.dim(0).unwrap_or(0)
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// Looks up u32 `ids` of any shape, appending the embedding dimension.
    pub fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        let mut shape = ids.dims().to_vec();
        shape.push(self.table.dim(1)?);
        self.table
            .index_select(&ids.flatten_all()?, 0)?
            .reshape(shape)
    }

    /// The first `n` rows, e.g. learned positional embeddings for `n` slots.
    pub fn first(&self, n: usize) -> Result<Tensor> {
        self.table.narrow(0, 0, n)
    }
}

/// Mean over dimension 1 restricted to `mask`: `(B, N, D)`, `(B, N)` → `(B, D)`.
pub fn masked_mean_pool(x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let m = mask.unsqueeze(D::Minus1)?;
    let sum = x.broadcast_mul(&m)?.sum(1)?;
    sum.broadcast_div(&m.sum(1)?.maximum(1.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn store() -> ParamStore {
        ParamStore::new(DType::F64, Device::Cpu)
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let build = || {
            let mut s = store();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut pb = ParamBuilder::new(&mut s, &mut rng);
            Linear::new(&mut pb, "lin", 3, 2).unwrap();
            s.fingerprint().unwrap()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = store();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pb = ParamBuilder::new(&mut s, &mut rng);
        Linear::new(&mut pb, "lin", 3, 2).unwrap();
        assert!(Linear::new(&mut pb, "lin", 3, 2).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0], [0.0, -1e9, 5.0]], &Device::Cpu).unwrap();
        let s = softmax_last(&x).unwrap().sum(1).unwrap().to_vec1::<f64>().unwrap();
        for v in s {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_keys_are_ignored() {
        let mut s = store();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pb = ParamBuilder::new(&mut s, &mut rng);
        let attn = MultiHeadAttention::new(&mut pb, "a", 4, 2).unwrap();
        let x = Tensor::randn(0.0, 1.0, (1, 3, 4), &Device::Cpu).unwrap();
        let short = x.narrow(1, 0, 2).unwrap();
        let mask = Tensor::new(&[[1.0f64, 1.0, 0.0]], &Device::Cpu).unwrap();
        let bias = key_padding_bias(&mask).unwrap();
        let full = attn.forward(&short, &x, Some(&bias)).unwrap();
        let trimmed = attn.forward(&short, &short, None).unwrap();
        let diff = (full - trimmed).unwrap().abs().unwrap().max_all().unwrap();
        assert!(diff.to_scalar::<f64>().unwrap() < 1e-12);
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        let x = Tensor::ones((2, 3), DType::F32, &Device::Cpu).unwrap();
        let y = Ctx::eval().dropout(&x).unwrap();
        assert_eq!(y.to_vec2::<f32>().unwrap(), x.to_vec2::<f32>().unwrap());
        let rng = RefCell::new(ChaCha8Rng::seed_from_u64(1));
        let y = Ctx::train(0.5, &rng).dropout(&x).unwrap();
        for v in y.flatten_all().unwrap().to_vec1::<f32>().unwrap() {
            assert!(v == 0.0 || v == 2.0);
        }
    }
}
