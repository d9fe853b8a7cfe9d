//! Pipeline configuration: defaults, TOML/JSON config files and command-line
//! overrides, validated once on load.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::dataset::CategoryTable;
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, MetricMode};
use crate::scoring::{FusionWeights, DEFAULT_BAG_SIZE, DEFAULT_DELTA, DEFAULT_MARGIN_PX};
use crate::selection::SelectionStrategy;
use crate::symmetry::{BoxFit, ConversionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    SamTop,
    Fused,
    OracleIou,
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sam-top" => Ok(StrategyKind::SamTop),
            "fused" => Ok(StrategyKind::Fused),
            "oracle-iou" => Ok(StrategyKind::OracleIou),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected sam-top, fused or oracle-iou)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConversionKind {
    MinimumOnly,
    SymmetryAxis,
    PerCategory,
}

impl std::str::FromStr for ConversionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimum-only" => Ok(ConversionKind::MinimumOnly),
            "symmetry-axis" => Ok(ConversionKind::SymmetryAxis),
            "per-category" => Ok(ConversionKind::PerCategory),
            other => Err(Error::Config(format!(
                "unknown conversion `{other}` (expected minimum-only, symmetry-axis or per-category)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub weights: FusionWeights,
    pub delta: f64,
    pub bag_size: usize,
    pub margin_px: usize,
    pub conversion: ConversionMode,
    pub strategy: StrategyKind,
    pub seed: u64,
    pub metric_mode: MetricMode,
    pub iou_threshold: f64,
    pub categories: CategoryTable,
    /// Worker threads for per-image work; 0 uses all cores.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let categories = CategoryTable::dota();
        PipelineConfig {
            weights: FusionWeights::default(),
            delta: DEFAULT_DELTA,
            bag_size: DEFAULT_BAG_SIZE,
            margin_px: DEFAULT_MARGIN_PX,
            conversion: ConversionMode::per_category_default(categories.names()),
            strategy: StrategyKind::Fused,
            seed: 0,
            metric_mode: MetricMode::Voc07,
            iou_threshold: 0.5,
            categories,
            workers: 0,
        }
    }
}

/// Optional values from a config file or the command line. Anything left
/// `None` keeps the value from the layer below.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub bag_size: Option<usize>,
    pub margin_px: Option<usize>,
    pub conversion: Option<ConversionKind>,
    /// Per-category box fits, layered over the default map.
    pub per_category: Option<BTreeMap<String, BoxFit>>,
    pub strategy: Option<StrategyKind>,
    pub seed: Option<u64>,
    pub metric_mode: Option<MetricMode>,
    pub iou_threshold: Option<f64>,
    pub categories: Option<Vec<String>>,
    pub workers: Option<usize>,
}

impl ConfigOverrides {
    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }
}

impl PipelineConfig {
    /// Defaults, then the config file, then `cli`.
    pub fn load(file: Option<&Path>, cli: &ConfigOverrides) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = file {
            cfg.apply(&ConfigOverrides::from_file(path)?)?;
        }
        cfg.apply(cli)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &ConfigOverrides) -> Result<()> {
        if let Some(names) = &o.categories {
            self.categories = CategoryTable::new(names.clone())?;
            if let ConversionMode::PerCategory(_) = self.conversion {
                self.conversion = ConversionMode::per_category_default(self.categories.names());
            }
        }
        let alpha = o.alpha.unwrap_or(self.weights.alpha);
        let beta = o.beta.unwrap_or(self.weights.beta);
        self.weights = FusionWeights::new(alpha, beta).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(d) = o.delta {
            self.delta = d;
        }
        if let Some(n) = o.bag_size {
            self.bag_size = n;
        }
        if let Some(m) = o.margin_px {
            self.margin_px = m;
        }
        if let Some(kind) = o.conversion {
            self.conversion = match kind {
                ConversionKind::MinimumOnly => ConversionMode::MinimumOnly,
                ConversionKind::SymmetryAxis => ConversionMode::SymmetryAxis,
                ConversionKind::PerCategory => ConversionMode::per_category_default(self.categories.names()),
            };
        }
        if let Some(map) = &o.per_category {
            let mut base = match &self.conversion {
                ConversionMode::PerCategory(m) => m.clone(),
                _ => match ConversionMode::per_category_default(self.categories.names()) {
                    ConversionMode::PerCategory(m) => m,
                    _ => unreachable!(),
                },
            };
            base.extend(map.iter().map(|(k, v)| (k.clone(), *v)));
            self.conversion = ConversionMode::PerCategory(base);
        }
        if let Some(s) = o.strategy {
            self.strategy = s;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.metric_mode {
            self.metric_mode = m;
        }
        if let Some(t) = o.iou_threshold {
            self.iou_threshold = t;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::Config(format!("delta must be non-negative, got {}", self.delta)));
        }
        if self.bag_size == 0 {
            return Err(Error::Config("bag_size must be at least 1".into()));
        }
        if self.margin_px == 0 {
            return Err(Error::Config("margin_px must be at least 1".into()));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "iou_threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        self.conversion.check_total(self.categories.names())?;
        if let ConversionMode::PerCategory(map) = &self.conversion {
            if let Some(extra) = map.keys().find(|k| self.categories.index_of(k).is_err()) {
                return Err(Error::Config(format!("per-category map names unknown category `{extra}`")));
            }
        }
        Ok(())
    }

    pub fn selection_strategy(&self) -> SelectionStrategy {
        match self.strategy {
            StrategyKind::SamTop => SelectionStrategy::SamTop,
            StrategyKind::Fused => SelectionStrategy::Fused(self.weights),
            StrategyKind::OracleIou => SelectionStrategy::OracleIoU,
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            iou_threshold: self.iou_threshold,
            metric_mode: self.metric_mode,
        }
    }
}
