//! Neural bag-of-words dual encoder trained with an in-batch softmax.

use std::any::Any;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_ids, ModelError, NccModel};
use crate::ncore::{embed, embed_backward, softmax, Gradients, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Code,
    Query,
}

impl Side {
    fn index(self) -> usize {
        match self {
            Side::Code => 0,
            Side::Query => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbowConfig {
    pub code_vocab: usize,
    pub query_vocab: usize,
    pub embed_dim: usize,
    /// Multiplier on cosine similarities before the softmax.
    pub scale: f64,
}

/// Encoding plus what its backward pass needs.
#[derive(Debug, Clone)]
struct Encoding {
    unit: Vec<f64>,
    norm: f64,
}

const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NbowEncoder {
    config: NbowConfig,
    params: ParamSet,
}

impl NbowEncoder {
    pub fn new<R: Rng>(config: NbowConfig, init_range: f64, rng: &mut R) -> Result<Self, ModelError> {
        if config.code_vocab == 0 || config.query_vocab == 0 || config.embed_dim == 0 || config.scale <= 0.0 {
            return Err(ModelError::InvalidConfig(format!("{config:?}")));
        }
        let mut params = ParamSet::new();
        params.push("code_embed", Tensor::uniform(&[config.code_vocab, config.embed_dim], init_range, rng))?;
        params.push("query_embed", Tensor::uniform(&[config.query_vocab, config.embed_dim], init_range, rng))?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: NbowConfig, params: ParamSet) -> Result<Self, ModelError> {
        let ok = params.len() == 2
            && params.value(0).shape() == [config.code_vocab, config.embed_dim]
            && params.value(1).shape() == [config.query_vocab, config.embed_dim];
        if !ok {
            return Err(ModelError::BadState("nbow parameter shapes".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> NbowConfig {
        self.config
    }

    fn table(&self, side: Side) -> &Tensor {
        self.params.value(side.index())
    }

    fn encode_full(&self, tokens: &[u32], side: Side) -> Result<Encoding, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let table = self.table(side);
        check_ids(tokens, table.rows())?;
        let mut mean = vec![0.0; self.config.embed_dim];
        for &id in tokens {
            for (m, e) in mean.iter_mut().zip(embed(table, id)?) {
                *m += e;
            }
        }
        let n = tokens.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit = if norm < NORM_FLOOR {
            let mut e0 = vec![0.0; mean.len()];
            e0[0] = 1.0;
            e0
        } else {
            mean.iter().map(|v| v / norm).collect()
        };
        Ok(Encoding { unit, norm })
    }

    /// Unit-norm mean of the token embeddings of one side.
    pub fn encode(&self, tokens: &[u32], side: Side) -> Result<Vec<f64>, ModelError> {
        Ok(self.encode_full(tokens, side)?.unit)
    }

    fn encode_backward(&self, tokens: &[u32], side: Side, enc: &Encoding, d_unit: &[f64], grads: &mut Gradients) {
        if enc.norm < NORM_FLOOR {
            return;
        }
        let dot: f64 = enc.unit.iter().zip(d_unit).map(|(u, d)| u * d).sum();
        let scale = 1.0 / (enc.norm * tokens.len() as f64);
        let d_row: Vec<f64> = enc
            .unit
            .iter()
            .zip(d_unit)
            .map(|(u, d)| (d - u * dot) * scale)
            .collect();
        let g = &mut grads.0[side.index()];
        for &id in tokens {
            embed_backward(g, id, &d_row);
        }
    }

    /// Scaled cosine similarity between encodings.
    pub fn score(&self, query: &[f64], code: &[f64]) -> f64 {
        self.config.scale * query.iter().zip(code).map(|(a, b)| a * b).sum::<f64>()
    }

    /// In-batch softmax loss over `(code, query)` pairs. Returns the summed
    /// per-query loss and pair count, adding the gradient of the sum into
    /// `grads`.
    pub fn batch_loss_grad(
        &self,
        pairs: &[(Vec<u32>, Vec<u32>)],
        grads: &mut Gradients,
    ) -> Result<(f64, usize), ModelError> {
        let codes = pairs
            .iter()
            .map(|(c, _)| self.encode_full(c, Side::Code))
            .collect::<Result<Vec<_>, _>>()?;
        let queries = pairs
            .iter()
            .map(|(_, q)| self.encode_full(q, Side::Query))
            .collect::<Result<Vec<_>, _>>()?;
        let code_vecs: Vec<Vec<f64>> = codes.iter().map(|e| e.unit.clone()).collect();
        let query_vecs: Vec<Vec<f64>> = queries.iter().map(|e| e.unit.clone()).collect();
        let (mean, d_code, d_query) = retrieval_loss(&code_vecs, &query_vecs, self.config.scale)?;
        let b = pairs.len() as f64;
        for (i, (c, q)) in pairs.iter().enumerate() {
            let dc: Vec<f64> = d_code[i].iter().map(|v| v * b).collect();
            let dq: Vec<f64> = d_query[i].iter().map(|v| v * b).collect();
            self.encode_backward(c, Side::Code, &codes[i], &dc, grads);
            self.encode_backward(q, Side::Query, &queries[i], &dq, grads);
        }
        Ok((mean * b, pairs.len()))
    }

    /// Mean in-batch loss and gradient for a batch of pairs.
    pub fn loss(&self, pairs: &[(Vec<u32>, Vec<u32>)]) -> Result<(f64, Gradients), ModelError> {
        let mut grads = self.params.zero_grads();
        let (sum, n) = self.batch_loss_grad(pairs, &mut grads)?;
        grads.scale(1.0 / n as f64);
        Ok((sum / n as f64, grads))
    }
}

/// In-batch softmax: `S_ij = s · q_i·c_j`, loss = mean_i −log softmax(S_i)[i].
/// Returns the loss and its gradients with respect to each code and query
/// vector.
#[allow(clippy::type_complexity)]
pub fn retrieval_loss(
    code_vecs: &[Vec<f64>],
    query_vecs: &[Vec<f64>],
    scale: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), ModelError> {
    let b = code_vecs.len();
    if b < 2 || query_vecs.len() != b {
        return Err(ModelError::BatchTooSmall(b.min(query_vecs.len())));
    }
    let d = code_vecs[0].len();
    let mut d_code = vec![vec![0.0; d]; b];
    let mut d_query = vec![vec![0.0; d]; b];
    let mut loss = 0.0;
    for i in 0..b {
        let sims: Vec<f64> = code_vecs
            .iter()
            .map(|c| scale * query_vecs[i].iter().zip(c).map(|(x, y)| x * y).sum::<f64>())
            .collect();
        let probs = softmax(&sims);
        let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = sims.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
        loss += lse - sims[i];
        for j in 0..b {
            let ds = (probs[j] - if i == j { 1.0 } else { 0.0 }) / b as f64;
            for k in 0..d {
                d_query[i][k] += scale * ds * code_vecs[j][k];
                d_code[j][k] += scale * ds * query_vecs[i][k];
            }
        }
    }
    Ok((loss / b as f64, d_code, d_query))
}

impl NccModel for NbowEncoder {
    fn kind(&self) -> &'static str {
        "nbow"
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::seeded_rng;
    use crate::ncore::{grad_check, Subset};

    fn encoder_with_rows(rows: Vec<f64>, vocab: usize, dim: usize) -> NbowEncoder {
        let config = NbowConfig {
            code_vocab: vocab,
            query_vocab: vocab,
            embed_dim: dim,
            scale: 10.0,
        };
        let mut params = ParamSet::new();
        params.push("code_embed", Tensor::from_vec(&[vocab, dim], rows.clone()).unwrap()).unwrap();
        params.push("query_embed", Tensor::from_vec(&[vocab, dim], rows).unwrap()).unwrap();
        NbowEncoder::from_params(config, params).unwrap()
    }

    #[test]
    fn mean_then_normalize() {
        let enc = encoder_with_rows(vec![1.0, 0.0, 0.0, 1.0, 3.0, 4.0], 3, 2);
        let v = enc.encode(&[0, 1], Side::Code).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - r).abs() < 1e-15 && (v[1] - r).abs() < 1e-15);
        assert_eq!(enc.encode(&[2], Side::Query).unwrap(), vec![0.6, 0.8]);
    }

    #[test]
    fn zero_vector_guard_and_empty_input() {
        let enc = encoder_with_rows(vec![1.0, 0.0, -1.0, 0.0], 2, 2);
        assert_eq!(enc.encode(&[0, 1], Side::Code).unwrap(), vec![1.0, 0.0]);
        assert_eq!(enc.encode(&[], Side::Code), Err(ModelError::EmptyInput));
    }

    #[test]
    fn permutation_invariant_and_unit_norm() {
        let enc = NbowEncoder::new(
            NbowConfig {
                code_vocab: 20,
                query_vocab: 20,
                embed_dim: 8,
                scale: 10.0,
            },
            0.08,
            &mut seeded_rng(4),
        )
        .unwrap();
        let a = enc.encode(&[3, 7, 7, 12, 19], Side::Code).unwrap();
        let b = enc.encode(&[19, 7, 12, 3, 7], Side::Code).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_similarity_loss() {
        let c = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (loss, _, _) = retrieval_loss(&c, &c, 10.0).unwrap();
        let expected = -((10f64).exp() / ((10f64).exp() + 1.0)).ln();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 4.54e-5).abs() < 1e-7);
    }

    #[test]
    fn indistinguishable_rows_give_ln_b() {
        let v = vec![vec![0.6, 0.8]; 4];
        let (loss, _, _) = retrieval_loss(&v, &v, 10.0).unwrap();
        assert!((loss - (4f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn batch_too_small() {
        let v = vec![vec![1.0, 0.0]];
        assert_eq!(retrieval_loss(&v, &v, 10.0).unwrap_err(), ModelError::BatchTooSmall(1));
    }

    #[test]
    fn encoder_gradient_check() {
        let enc = NbowEncoder::new(
            NbowConfig {
                code_vocab: 6,
                query_vocab: 5,
                embed_dim: 4,
                scale: 10.0,
            },
            0.5,
            &mut seeded_rng(11),
        )
        .unwrap();
        let pairs = vec![
            (vec![0, 1, 2], vec![0, 1]),
            (vec![3, 3], vec![2, 4]),
            (vec![4, 1], vec![3]),
        ];
        let (_, grads) = enc.loss(&pairs).unwrap();
        let report = grad_check(
            |p| NbowEncoder::from_params(enc.config, p.clone()).unwrap().loss(&pairs).unwrap().0,
            enc.params(),
            &grads,
            1e-5,
            Subset::All,
        );
        assert!(report.max_rel_err < 1e-4, "{report:?}");
        // Code row 5 never appears.
        assert!(grads.0[0].row(5).iter().all(|&g| g == 0.0));
    }
}
