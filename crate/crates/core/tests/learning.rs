//! Small end-to-end learning problems for every trainable model.

use ncc_core::corpus::{BOS_ID, EOS_ID};
use ncc_core::evalmetrics::{mrr, rank_of, RankedPrediction};
use ncc_core::models::{seeded_rng, LanguageModel, ModelConfig, NbowConfig, NbowEncoder, RnnLm, RnnLmConfig, Seq2Seq, Seq2SeqConfig, Side, VocabSizes};
use ncc_core::tasks::{LmObjective, RetrievalObjective, Seq2SeqObjective};
use ncc_core::trainer::{train, OptimConfig, TrainOptions, TrainerKind};
use rand::seq::SliceRandom;
use rand::Rng;

fn options(optim: OptimConfig, batch_size: usize) -> TrainOptions {
    TrainOptions {
        optim,
        batch_size,
        trainer: TrainerKind::Default,
        checkpoint_path: None,
        model_config: ModelConfig::default(),
        vocab_sizes: VocabSizes::shared(1),
        config_digest: String::new(),
    }
}

const A: u32 = 4;
const B: u32 = 5;

#[test]
fn rnnlm_learns_alternation() {
    let stream: Vec<u32> = (0..400).map(|i| if i % 2 == 0 { A } else { B }).collect();
    let seqs: Vec<Vec<u32>> = stream.chunks(20).map(|c| {
        let mut s = vec![BOS_ID];
        s.extend_from_slice(c);
        s.push(EOS_ID);
        s
    }).collect();
    let cfg = RnnLmConfig { vocab_size: 6, embed_dim: 8, hidden_dim: 16, bptt_len: 32 };
    let mut model = RnnLm::new(cfg, 0.08, &mut seeded_rng(1)).unwrap();
    let optim = OptimConfig { lr: 0.05, max_update: 200, max_epoch: 1000, ..OptimConfig::default() };
    let report = train(&mut model, &LmObjective::new(seqs.clone(), vec![]), &options(optim, 4), None).unwrap();
    assert!(report.num_updates <= 200);
    let p = model.next_distribution(&[BOS_ID, A, B, A])[B as usize];
    let mut nll = 0.0;
    let mut n = 0;
    for s in &seqs {
        let lp = model.sequence_log_probs(s);
        // interior: predictions of a/b tokens after the first content token
        for t in 2..s.len() - 1 {
            nll -= lp[t - 1];
            n += 1;
        }
    }
    let ppl = (nll / n as f64).exp();
    eprintln!("P(b|a) = {p}, interior ppl = {ppl}, updates {}", report.num_updates);
    assert!(p > 0.9 && ppl <= 1.3);
}

#[test]
fn nbow_learns_unique_token_pairs() {
    let mut rng = seeded_rng(7);
    let n = 256;
    let common = 4 + n as u32; // ids [4+n, 4+n+8) are shared noise tokens
    let pairs: Vec<(Vec<u32>, Vec<u32>)> = (0..n as u32)
        .map(|i| {
            let noise = |rng: &mut _| -> Vec<u32> { (0..3).map(|_| common + Rng::random_range(rng, 0..8)).collect() };
            let mut c = noise(&mut rng);
            c.push(4 + i);
            let mut q = noise(&mut rng);
            q.push(4 + i);
            (c, q)
        })
        .collect();
    let cfg = NbowConfig { code_vocab: 4 + n + 8, query_vocab: 4 + n + 8, embed_dim: 32, scale: 10.0 };
    let mut model = NbowEncoder::new(cfg, 0.08, &mut seeded_rng(3)).unwrap();
    let eval = |m: &NbowEncoder| {
        let mut ranks = Vec::new();
        for pool in pairs.chunks(32) {
            let codes: Vec<Vec<f64>> = pool.iter().map(|(c, _)| m.encode(c, Side::Code).unwrap()).collect();
            for (i, (_, q)) in pool.iter().enumerate() {
                let qv = m.encode(q, Side::Query).unwrap();
                let s: Vec<f64> = codes.iter().map(|c| m.score(&qv, c)).collect();
                ranks.push(RankedPrediction::new(rank_of(&s, i)));
            }
        }
        mrr(&ranks, 10).unwrap()
    };
    let before = eval(&model);
    let optim = OptimConfig { lr: 0.05, max_epoch: 30, ..OptimConfig::default() };
    let r = train(&mut model, &RetrievalObjective::new(pairs.clone(), vec![]), &options(optim, 32), None).unwrap();
    let after = eval(&model);
    eprintln!("mrr before {before} after {after}, updates {}", r.num_updates);
    assert!(before <= 0.3 && after >= 0.95);
}

#[test]
fn seq2seq_learns_to_copy() {
    let mut rng = seeded_rng(11);
    let sample = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<u32> {
        let len = rng.random_range(1..=5);
        (0..len).map(|_| 4 + rng.random_range(0..10)).collect()
    };
    let mut all: Vec<Vec<u32>> = (0..4000).map(|_| sample(&mut rng)).collect();
    all.sort();
    all.dedup();
    all.shuffle(&mut rng);
    let held: Vec<Vec<u32>> = all.split_off(all.len() - 200);
    let train_pairs: Vec<(Vec<u32>, Vec<u32>)> = all.iter().map(|s| {
        let mut t = vec![BOS_ID];
        t.extend_from_slice(s);
        t.push(EOS_ID);
        (s.clone(), t)
    }).collect();
    let cfg = Seq2SeqConfig { src_vocab: 14, tgt_vocab: 14, embed_dim: 16, hidden_dim: 64, max_decode_len: 10, reverse_source: true };
    let mut model = Seq2Seq::new(cfg, 0.08, &mut seeded_rng(5)).unwrap();
    let optim = OptimConfig { lr: 0.01, max_update: 2000, max_epoch: 1000, lr_shrink: 0.95, workers: 4, ..OptimConfig::default() };
    let r = train(&mut model, &Seq2SeqObjective::new(train_pairs, vec![]), &options(optim, 32), None).unwrap();
    let exact = held.iter().filter(|s| model.greedy_decode(s).unwrap() == **s).count();
    eprintln!("exact {exact}/200 updates {} last loss {:?} time {}", r.num_updates, r.update_losses.last(), r.wall_time_secs);
    assert!(exact as f64 / 200.0 >= 0.95);
}
