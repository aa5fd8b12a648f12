use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FieldSource, FieldSpec, Predictor, TaskError};
use crate::corpus::{
    bpe_train, build_vocab, count_tokens, load_records, read_merges, read_shard, space_tokenize, write_merges,
    write_shard, CodeRecord, MergeTable, Tokenizer, Vocabulary,
};
use crate::models::{seeded_rng, ModelConfig};
use crate::registry::Registry;
use crate::trainer::{load_checkpoint, train, TrainConfig, TrainOptions, TrainReport};

/// Id-encoded samples: `samples[i][field]`.
pub type Samples = Vec<Vec<Vec<u32>>>;

pub const MODEL_CONFIG: &str = "config.json";
pub const MODEL_CHECKPOINT: &str = "model.ckpt";
pub const MODEL_INDEX: &str = "index.jsonl";
const MANIFEST: &str = "preprocess.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldManifest {
    pub name: String,
    pub tokenizer: String,
    /// File names relative to the directory holding the manifest.
    pub vocab: String,
    pub merges: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessManifest {
    pub task: String,
    pub fields: Vec<FieldManifest>,
    /// Samples written per split.
    pub samples: BTreeMap<String, usize>,
    /// Lines that were not valid records, per split.
    pub malformed: BTreeMap<String, usize>,
    /// Valid records dropped (missing field, tokenizer failure, empty).
    pub skipped: BTreeMap<String, usize>,
}

/// `config.json` of a trained model directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDirConfig {
    pub task: String,
    pub model: ModelConfig,
    pub fields: Vec<FieldManifest>,
    pub checkpoint: String,
    pub index: Option<String>,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub model: String,
    pub metric: String,
    pub value: f64,
    pub num_items: usize,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub model_dir: PathBuf,
}

/// One line of a split's `*.index.jsonl`: the original snippet behind a
/// sample, used to answer search requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct IndexLine {
    pub id: String,
    pub code: String,
}

fn field_text<'a>(record: &'a CodeRecord, field: &FieldSpec) -> Option<&'a str> {
    match field.source {
        FieldSource::Code => Some(record.code.as_str()),
        FieldSource::Docstring => record.docstring.as_deref().filter(|d| !d.trim().is_empty()),
    }
}

fn field_tokenizer_name(field: &FieldSpec, code_tokenizer: &str) -> String {
    match field.source {
        FieldSource::Code => code_tokenizer.to_string(),
        // Natural-language fields are never lexed as code.
        FieldSource::Docstring if code_tokenizer == "bpe" => "bpe".into(),
        FieldSource::Docstring => "space".into(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TaskError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| TaskError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, TaskError> {
    let text = fs::read_to_string(path).map_err(|e| TaskError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| TaskError::Config(format!("{}: {e}", path.display())))
}

/// Tokenizes every usable record; returns per-sample token lists (one per
/// field), index lines, and the number of records dropped.
fn tokenize_records(
    records: &[CodeRecord],
    fields: &[FieldSpec],
    tokenizers: &[Box<dyn Tokenizer>],
    split: &str,
) -> (Vec<Vec<Vec<String>>>, Vec<IndexLine>, usize) {
    let mut samples = Vec::new();
    let mut index = Vec::new();
    let mut skipped = 0;
    'records: for (i, rec) in records.iter().enumerate() {
        let mut sample = Vec::with_capacity(fields.len());
        for (field, tok) in fields.iter().zip(tokenizers) {
            let Some(text) = field_text(rec, field) else {
                skipped += 1;
                continue 'records;
            };
            match tok.tokenize(text) {
                Ok(tokens) if !tokens.is_empty() => sample.push(tokens),
                Ok(_) => {
                    skipped += 1;
                    continue 'records;
                }
                Err(e) => {
                    log::warn!("{split} record {}: {e}", i + 1);
                    skipped += 1;
                    continue 'records;
                }
            }
        }
        let id = if rec.path.is_empty() {
            format!("{split}-{i}")
        } else {
            rec.path.clone()
        };
        index.push(IndexLine {
            id,
            code: rec.code.clone(),
        });
        samples.push(sample);
    }
    (samples, index, skipped)
}

/// Reads the JSONL splits named in `cfg.data`, learns tokenizers and
/// vocabularies on the training split, and writes vocabularies, merge
/// tables, binary shards and a manifest into `cfg.data.data_dir`.
pub fn preprocess(cfg: &TrainConfig, registry: &Registry) -> Result<PreprocessManifest, TaskError> {
    let task = registry.task(&cfg.task.name)?;
    let train_path = cfg
        .data
        .train
        .as_ref()
        .ok_or_else(|| TaskError::Config("data.train is required for preprocessing".into()))?;
    let out = &cfg.data.data_dir;
    fs::create_dir_all(out).map_err(|e| TaskError::io(out, e))?;

    let mut splits = vec![("train", load_records(train_path)?)];
    if let Some(valid) = &cfg.data.valid {
        splits.push(("valid", load_records(valid)?));
    }
    let fields = task.fields();
    let train_records = &splits[0].1.records;

    let mut tokenizers: Vec<Box<dyn Tokenizer>> = Vec::new();
    let mut manifests = Vec::new();
    for field in fields {
        let name = field_tokenizer_name(field, &cfg.data.tokenizer);
        let merges = if name == "bpe" {
            let mut words = BTreeMap::new();
            for rec in train_records {
                if let Some(text) = field_text(rec, field) {
                    for w in space_tokenize(text) {
                        *words.entry(w).or_insert(0u64) += 1;
                    }
                }
            }
            let table = bpe_train(&words, cfg.data.bpe_merges, cfg.data.min_pair_freq.max(1))?;
            let file = format!("merges.{}.txt", field.name);
            write_merges(&out.join(&file), &table)?;
            Some((file, table))
        } else {
            None
        };
        let factory = registry.tokenizer_factory(&name)?;
        tokenizers.push(factory(merges.as_ref().map(|(_, t)| t.clone()))?);
        manifests.push(FieldManifest {
            name: field.name.to_string(),
            tokenizer: name,
            vocab: format!("vocab.{}.txt", field.name),
            merges: merges.map(|(f, _)| f),
        });
    }

    let mut manifest = PreprocessManifest {
        task: task.name().to_string(),
        fields: manifests,
        samples: BTreeMap::new(),
        malformed: BTreeMap::new(),
        skipped: BTreeMap::new(),
    };
    let mut vocabs: Vec<Vocabulary> = Vec::new();
    for (split, corpus) in &splits {
        let (samples, index, skipped) = tokenize_records(&corpus.records, fields, &tokenizers, split);
        if *split == "train" {
            if samples.is_empty() {
                return Err(TaskError::Corpus(crate::corpus::CorpusError::EmptyCorpus));
            }
            for (f, fm) in manifest.fields.iter().enumerate() {
                let counts: HashMap<String, u64> = count_tokens(samples.iter().map(|s| s[f].as_slice()));
                let vocab = build_vocab(&counts, cfg.data.min_count, cfg.data.max_vocab);
                vocab.save(&out.join(&fm.vocab))?;
                vocabs.push(vocab);
            }
        }
        for (f, field) in fields.iter().enumerate() {
            let ids: Vec<Vec<u32>> = samples.iter().map(|s| vocabs[f].encode(&s[f])).collect();
            write_shard(&out.join(format!("{split}.{}.bin", field.name)), &ids)?;
        }
        let index_path = out.join(format!("{split}.index.jsonl"));
        let lines: String = index
            .iter()
            .map(|l| serde_json::to_string(l).expect("serializable") + "\n")
            .collect();
        fs::write(&index_path, lines).map_err(|e| TaskError::io(&index_path, e))?;
        log::info!("{split}: {} samples, {} malformed lines, {skipped} skipped", samples.len(), corpus.malformed());
        manifest.samples.insert(split.to_string(), samples.len());
        manifest.malformed.insert(split.to_string(), corpus.malformed());
        manifest.skipped.insert(split.to_string(), skipped);
    }
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn read_manifest(data_dir: &Path) -> Result<PreprocessManifest, TaskError> {
    let path = data_dir.join(MANIFEST);
    if !path.exists() {
        return Err(TaskError::Config(format!(
            "{} not found; run preprocessing first",
            path.display()
        )));
    }
    read_json(&path)
}

/// Loads the id-encoded samples of `split`, or `None` if it was not
/// preprocessed.
pub fn load_split(data_dir: &Path, manifest_fields: &[FieldManifest], split: &str) -> Result<Option<Samples>, TaskError> {
    let mut per_field = Vec::new();
    for f in manifest_fields {
        let path = data_dir.join(format!("{split}.{}.bin", f.name));
        if !path.exists() {
            return Ok(None);
        }
        per_field.push(read_shard(&path)?);
    }
    let n = per_field[0].len();
    if per_field.iter().any(|f| f.len() != n) {
        return Err(TaskError::Config(format!("{split} shards disagree on sample count")));
    }
    Ok(Some(
        (0..n)
            .map(|i| per_field.iter().map(|f| f[i].clone()).collect())
            .collect(),
    ))
}

fn copy_into(src: &Path, dst: &Path) -> Result<(), TaskError> {
    if src != dst {
        fs::copy(src, dst).map_err(|e| TaskError::io(src, e))?;
    }
    Ok(())
}

/// Trains the configured model on preprocessed data and writes a complete
/// model directory into `cfg.checkpoint.save_dir`. With `resume`, training
/// continues from the checkpoint already in that directory.
pub fn train_from_config(cfg: &TrainConfig, registry: &Registry, resume: bool) -> Result<TrainOutcome, TaskError> {
    let task = registry.task(&cfg.task.name)?;
    let model_name = if cfg.model.name.is_empty() {
        task.models()[0].to_string()
    } else {
        cfg.model.name.clone()
    };
    if !task.models().contains(&model_name.as_str()) {
        return Err(TaskError::Unsupported {
            task: task.name().into(),
            model: model_name,
        });
    }
    let factory = registry.model_factory(&model_name)?;
    let data_dir = &cfg.data.data_dir;
    let manifest = read_manifest(data_dir)?;
    if manifest.task != task.name() {
        return Err(TaskError::Config(format!(
            "{} was preprocessed for task `{}`",
            data_dir.display(),
            manifest.task
        )));
    }
    let vocab_lens = manifest
        .fields
        .iter()
        .map(|f| Vocabulary::load(&data_dir.join(&f.vocab)).map(|v| v.len()))
        .collect::<Result<Vec<_>, _>>()?;
    let train_samples = load_split(data_dir, &manifest.fields, "train")?
        .ok_or_else(|| TaskError::Config("training shards missing".into()))?;
    let valid_samples = load_split(data_dir, &manifest.fields, "valid")?.unwrap_or_default();

    let model_config = ModelConfig {
        name: model_name,
        ..cfg.model_config()
    };
    let vocab_sizes = task.vocab_sizes(&vocab_lens);
    let mut rng = seeded_rng(cfg.optimization.seed);
    let mut model = factory(&model_config, vocab_sizes, &mut rng)?;
    let objective = task.objective(train_samples, valid_samples);

    let save_dir = &cfg.checkpoint.save_dir;
    fs::create_dir_all(save_dir).map_err(|e| TaskError::io(save_dir, e))?;
    let ckpt_path = save_dir.join(MODEL_CHECKPOINT);
    let digest = cfg.digest();
    let resume_from = if resume && ckpt_path.exists() {
        let ck = load_checkpoint(&ckpt_path, Some(&digest))?;
        model.load_state_tensors(ck.model_tensors.clone())?;
        log::info!("resuming from epoch {} / update {}", ck.meta.state.epoch, ck.meta.state.num_updates);
        Some((ck.meta.state, ck.adam))
    } else {
        None
    };
    let opts = TrainOptions {
        optim: cfg.optimization.clone(),
        batch_size: cfg.data.batch_size,
        trainer: cfg.trainer,
        checkpoint_path: Some(ckpt_path),
        model_config: model_config.clone(),
        vocab_sizes,
        config_digest: digest.clone(),
    };
    let report = train(model.as_mut(), objective.as_ref(), &opts, resume_from)?;

    for f in &manifest.fields {
        copy_into(&data_dir.join(&f.vocab), &save_dir.join(&f.vocab))?;
        if let Some(m) = &f.merges {
            copy_into(&data_dir.join(m), &save_dir.join(m))?;
        }
    }
    copy_into(&data_dir.join("train.index.jsonl"), &save_dir.join(MODEL_INDEX))?;
    let dir_config = ModelDirConfig {
        task: task.name().to_string(),
        model: model_config,
        fields: manifest.fields.clone(),
        checkpoint: MODEL_CHECKPOINT.into(),
        index: Some(MODEL_INDEX.into()),
        config_digest: digest,
    };
    write_json(&save_dir.join(MODEL_CONFIG), &dir_config)?;
    Ok(TrainOutcome {
        report,
        model_dir: save_dir.clone(),
    })
}

/// Scores the model in `cfg.checkpoint.save_dir` on the validation split
/// (the training split when no validation data was preprocessed).
pub fn evaluate(cfg: &TrainConfig, registry: &Registry) -> Result<EvalReport, TaskError> {
    let predictor = Predictor::load(&cfg.checkpoint.save_dir, registry)?;
    let task = registry.task(&predictor.config().task)?;
    let data_dir = &cfg.data.data_dir;
    let manifest = read_manifest(data_dir)?;
    let samples = match load_split(data_dir, &manifest.fields, "valid")? {
        Some(s) if !s.is_empty() => s,
        _ => load_split(data_dir, &manifest.fields, "train")?
            .ok_or_else(|| TaskError::Config("no evaluation data".into()))?,
    };
    let metric_name = cfg
        .eval
        .metric
        .clone()
        .unwrap_or_else(|| task.metrics()[0].to_string());
    if !task.metrics().contains(&metric_name.as_str()) {
        return Err(TaskError::Config(format!(
            "metric `{metric_name}` does not apply to task `{}` (use one of {:?})",
            task.name(),
            task.metrics()
        )));
    }
    let metric = registry.metric(&metric_name)?;
    let items = task.eval_items(&predictor, &samples, &metric_name)?;
    let value = metric.compute(&items)?;
    Ok(EvalReport {
        task: task.name().to_string(),
        model: predictor.config().model.name.clone(),
        metric: metric_name,
        value,
        num_items: items.len(),
        config_digest: predictor.config().config_digest.clone(),
    })
}

pub(crate) fn load_field_tokenizer(
    dir: &Path,
    field: &FieldManifest,
    registry: &Registry,
) -> Result<(Box<dyn Tokenizer>, Vocabulary), TaskError> {
    let merges: Option<MergeTable> = match &field.merges {
        Some(m) => Some(read_merges(&dir.join(m))?),
        None => None,
    };
    let tokenizer = registry.tokenizer_factory(&field.tokenizer)?(merges)?;
    let vocab = Vocabulary::load(&dir.join(&field.vocab))?;
    Ok((tokenizer, vocab))
}

pub(crate) fn read_model_dir_config(dir: &Path) -> Result<ModelDirConfig, TaskError> {
    let path = dir.join(MODEL_CONFIG);
    if !path.exists() {
        return Err(TaskError::Config(format!("{} not found", path.display())));
    }
    read_json(&path)
}

pub(crate) fn read_index(path: &Path) -> Result<Vec<IndexLine>, TaskError> {
    let text = fs::read_to_string(path).map_err(|e| TaskError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| TaskError::Config(format!("{}: {e}", path.display()))))
        .collect()
}
