//! Shared flags and the loaders behind them.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use xai_core::data::{generate, load_csv, Dataset, Standardization, SyntheticKind, SyntheticSpec};
use xai_core::diffcore::OptimizerKind;
use xai_core::i2md::{content_id, load_checkpoint, Checkpoint};
use xai_core::interpretcc::{
    FeatureGatingConfig, FeatureGatingModel, FeatureGroupSpec, GateConfig, InterpretCCConfig, InterpretCCModel,
    SelectionMode,
};
use xai_core::model::{AnyModel, MlpClassifier, ModelKind};
use xai_core::train::TrainConfig;
use xai_core::{Error, Rng};

use crate::CliError;

const SYNTHETIC_PREFIX: &str = "synthetic:";

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// `synthetic:<planted_linear|switch_moe|multi_skill>`, `synthetic:<spec.json>` or a CSV path.
    #[arg(long)]
    pub data: String,
    /// CSV column with integer class labels.
    #[arg(long, default_value = "label")]
    pub label_column: String,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub num_features: Option<usize>,
    /// Groups of a synthetic generator, or contiguous blocks for a CSV.
    #[arg(long)]
    pub num_groups: Option<usize>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Generator seed for synthetic data.
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Feature-group JSON: `{"num_features": n, "groups": [{"name", "indices"}]}`.
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

/// A dataset split into train and test, standardized on the train part.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset_id: String,
    pub raw_test: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub stats: Standardization,
    pub groups: FeatureGroupSpec,
    /// Whether `groups` is the layout the data was generated with.
    pub generator_groups: bool,
}

fn dataset_hash(data: &Dataset) -> String {
    let mut bytes: Vec<u8> = data.features().iter().flat_map(|v| v.to_le_bytes()).collect();
    bytes.extend(data.labels().iter().flat_map(|&l| (l as u64).to_le_bytes()));
    content_id(&bytes)[..12].to_string()
}

impl DataArgs {
    fn synthetic_spec(&self, what: &str) -> Result<SyntheticSpec, CliError> {
        let mut spec = if what.ends_with(".json") {
            let path = Path::new(what);
            let text = std::fs::read_to_string(path).map_err(|source| {
                CliError::input(Error::Io {
                    path: path.to_path_buf(),
                    source,
                })
            })?;
            serde_json::from_str::<SyntheticSpec>(&text)
                .map_err(|e| CliError::Usage(format!("{what}: line {}: {e}", e.line())))?
        } else {
            SyntheticSpec::new(what.parse::<SyntheticKind>().map_err(CliError::input)?)
        };
        if let Some(n) = self.n_samples {
            spec.n_samples = n;
        }
        if let Some(d) = self.num_features {
            spec.num_features = d;
        }
        if let Some(g) = self.num_groups {
            spec.num_groups = g;
        }
        if let Some(s) = self.noise_std {
            spec.noise_std = s;
        }
        if let Some(seed) = self.data_seed {
            spec.seed = seed;
        }
        spec.validate().map_err(CliError::input)?;
        Ok(spec)
    }

    /// Raw rows plus the group layout that comes with them, if any.
    fn raw(&self) -> Result<(Dataset, String), CliError> {
        if let Some(what) = self.data.strip_prefix(SYNTHETIC_PREFIX) {
            let spec = self.synthetic_spec(what)?;
            let data = generate(&spec)?.dataset;
            let kind = serde_json::to_value(spec.kind).map_err(Error::from)?;
            let id = format!("synthetic-{}-{}", kind.as_str().unwrap_or("unknown"), dataset_hash(&data));
            Ok((data, id))
        } else {
            let path = Path::new(&self.data);
            let data = load_csv(path, &self.label_column).map_err(CliError::input)?;
            if let Some(d) = self.num_features.filter(|&d| d != data.num_features()) {
                return Err(CliError::Usage(format!(
                    "{} has {} feature columns, --num-features says {d}",
                    path.display(),
                    data.num_features()
                )));
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
            let id = format!("{stem}-{}", dataset_hash(&data));
            Ok((data, id))
        }
    }

    pub fn load(&self) -> Result<Loaded, CliError> {
        let (raw, dataset_id) = self.raw()?;
        let (raw_train, raw_test) = raw.split(self.train_fraction, self.split_seed).map_err(CliError::input)?;
        let stats = Standardization::fit(&raw_train)?;
        let train = stats.apply(&raw_train)?;
        let test = stats.apply(&raw_test)?;
        let d = raw.num_features();
        let (groups, generator_groups) = match (&self.groups, &raw.groups) {
            (Some(path), _) => (FeatureGroupSpec::from_json_file(path).map_err(CliError::input)?, false),
            (None, Some(g)) => (g.clone(), true),
            (None, None) => (FeatureGroupSpec::contiguous(d, self.num_groups.unwrap_or(4).min(d))?, false),
        };
        if groups.num_features() != d {
            return Err(CliError::Usage(format!(
                "group config covers {} features but the data has {d}",
                groups.num_features()
            )));
        }
        log::info!("dataset {dataset_id}: {} train rows, {} test rows, {d} features", train.len(), test.len());
        Ok(Loaded {
            dataset_id,
            raw_test,
            train,
            test,
            stats,
            groups,
            generator_groups,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// mlp_blackbox, feature_gating or interpretcc_moe.
    #[arg(long, default_value = "mlp_blackbox")]
    pub model: ModelKind,
    /// Hidden widths of the MLP, the experts or the gated predictor [default: 32,32 / 16,16].
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Hidden widths of the discriminator or gate network [default: 16,16 / 16].
    #[arg(long, value_delimiter = ',')]
    pub router_hidden: Option<Vec<usize>>,
    /// Sparsity coefficient on the mean gate score.
    #[arg(long = "lambda", default_value_t = 0.1)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 5.0)]
    pub temperature_start: f64,
    #[arg(long, default_value_t = 0.5)]
    pub temperature_end: f64,
    /// Per-epoch temperature decay factor.
    #[arg(long, default_value_t = 0.95)]
    pub anneal_rate: f64,
    /// Keep the k highest-scoring gates instead of thresholding at 0.5.
    #[arg(long)]
    pub top_k: Option<usize>,
}

impl ModelArgs {
    fn gate(&self) -> GateConfig {
        GateConfig {
            sparsity: self.sparsity,
            temperature_start: self.temperature_start,
            temperature_end: self.temperature_end,
            anneal_rate: self.anneal_rate,
            selection: match self.top_k {
                Some(k) => SelectionMode::TopK { k },
                None => SelectionMode::Threshold,
            },
        }
    }

    /// Fresh model sized for `data`; gated models impute with the train means.
    pub fn build(&self, data: &Loaded, seed: u64) -> Result<AnyModel, CliError> {
        let mut rng = Rng::new(seed);
        let d = data.train.num_features();
        let classes = data.train.num_classes();
        let means = data.train.feature_means();
        let model = match self.model {
            ModelKind::MlpBlackbox => {
                let hidden = self.hidden.clone().unwrap_or_else(|| vec![32, 32]);
                AnyModel::Mlp(MlpClassifier::new(d, &hidden, classes, &mut rng)?)
            }
            ModelKind::FeatureGating => {
                let mut cfg = FeatureGatingConfig::new(data.train.feature_names().to_vec(), classes);
                if let Some(h) = &self.hidden {
                    cfg.predictor_hidden = h.clone();
                }
                if let Some(h) = &self.router_hidden {
                    cfg.gate_hidden = h.clone();
                }
                cfg.gate = self.gate();
                let mut m = FeatureGatingModel::new(cfg, &mut rng)?;
                m.set_imputation(&means)?;
                AnyModel::FeatureGating(m)
            }
            ModelKind::InterpretccMoe => {
                let mut cfg = InterpretCCConfig::new(data.groups.clone(), classes);
                if let Some(h) = &self.hidden {
                    cfg.expert_hidden = h.clone();
                }
                if let Some(h) = &self.router_hidden {
                    cfg.discriminator_hidden = h.clone();
                }
                cfg.gate = self.gate();
                let mut m = InterpretCCModel::new(cfg, &mut rng)?;
                m.set_imputation(&means)?;
                AnyModel::InterpretCC(m)
            }
        };
        Ok(model)
    }
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(format!("unknown optimizer {other:?}; expected adam or sgd")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long = "lr", default_value_t = 0.01)]
    pub learning_rate: f64,
    /// adam or sgd.
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    pub optimizer: OptimizerKind,
    /// Seeds initialization, shuffling and gate noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainingArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    load_checkpoint(path).map_err(CliError::input)
}

/// Labeled raw rows from `path`, mapped into the checkpoint's input space.
pub fn read_instances(path: &Path, label_column: &str, ckpt: &Checkpoint) -> Result<Dataset, CliError> {
    use xai_core::model::Classifier;
    let raw = load_csv(path, label_column).map_err(CliError::input)?;
    let d = ckpt.model.num_features();
    if raw.num_features() != d {
        return Err(CliError::Usage(format!(
            "{} has {} feature columns but the checkpoint expects {d}",
            path.display(),
            raw.num_features()
        )));
    }
    match &ckpt.standardization {
        Some(s) => Ok(s.apply(&raw)?),
        None => Ok(raw),
    }
}

/// Imputation reference for Shapley coalitions and prediction gaps: the
/// train mean (zero) for standardized checkpoints, else the instance mean.
pub fn baseline(ckpt: &Checkpoint, data: &Dataset) -> Vec<f64> {
    match &ckpt.standardization {
        Some(s) => vec![0.0; s.mean.len()],
        None => data.feature_means(),
    }
}
