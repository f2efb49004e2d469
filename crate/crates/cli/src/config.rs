//! Experiment configuration, stored as TOML. Every field has a default, so an
//! empty file is a valid configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use periocular_core::imageproc::ClaheParams;
use periocular_core::metrics::Metric;
use periocular_core::sift::{MatchParams, SiftParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExtractorSpec {
    Lbp,
    Hog,
    Sift,
    Neural(String),
}

impl ExtractorSpec {
    /// Base name without the layer, as used in row labels.
    pub fn family(&self) -> &'static str {
        match self {
            ExtractorSpec::Lbp => "lbp",
            ExtractorSpec::Hog => "hog",
            ExtractorSpec::Sift => "sift",
            ExtractorSpec::Neural(_) => "neural",
        }
    }

    /// SIFT scores are match counts; no metric applies.
    pub fn uses_metric(&self) -> bool {
        !matches!(self, ExtractorSpec::Sift)
    }
}

impl fmt::Display for ExtractorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractorSpec::Neural(layer) => write!(f, "neural:{layer}"),
            other => f.write_str(other.family()),
        }
    }
}

impl FromStr for ExtractorSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbp" => Ok(ExtractorSpec::Lbp),
            "hog" => Ok(ExtractorSpec::Hog),
            "sift" => Ok(ExtractorSpec::Sift),
            _ => match s.strip_prefix("neural:") {
                Some(layer) if !layer.is_empty() => Ok(ExtractorSpec::Neural(layer.to_owned())),
                _ => Err(CliError::Usage(format!(
                    "unknown extractor {s:?} (expected lbp, hog, sift or neural:<layer>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FoldRule {
    /// Trials follow the parity of their enrolment user's protocol index.
    #[default]
    UserParity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Target sclera radius per distance group, keyed by `distance_m` as
    /// written in the manifest. Groups without an entry use the mean
    /// annotated radius of the group.
    pub target_radius: BTreeMap<String, f64>,
    pub clahe: ClaheParams,
    pub mask_iris: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_radius: BTreeMap::new(),
            clahe: ClaheParams::default(),
            mask_iris: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralConfig {
    /// ONNX model; relative paths are resolved against the config file.
    pub model: PathBuf,
    #[serde(default)]
    pub sweep: bool,
    #[serde(default = "all_metrics")]
    pub sweep_metrics: Vec<Metric>,
}

fn all_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub extractors: Vec<String>,
    pub metrics: Vec<Metric>,
    /// Systems to fuse: row ids (`lbp/chi2`) or extractor names when the
    /// extractor has a single row.
    pub fusion: Vec<String>,
    pub folds: FoldRule,
    /// Adds the mean of z-normalized scores as a reference row.
    pub mean_rule_baseline: bool,
    pub out: Option<PathBuf>,
    pub preprocess: PreprocessConfig,
    pub sift: SiftParams,
    pub matcher: MatchParams,
    pub neural: Option<NeuralConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            extractors: vec!["lbp".into(), "hog".into()],
            metrics: vec![Metric::Chi2],
            fusion: Vec::new(),
            folds: FoldRule::default(),
            mean_rule_baseline: false,
            out: None,
            preprocess: PreprocessConfig::default(),
            sift: SiftParams::default(),
            matcher: MatchParams::default(),
            neural: None,
        }
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub extractor: ExtractorSpec,
    pub metric: Option<Metric>,
}

impl System {
    pub fn id(&self) -> String {
        match self.metric {
            Some(m) => format!("{}/{m}", self.extractor),
            None => self.extractor.to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Loads a config file and resolves the model path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(n), Some(dir)) = (cfg.neural.as_mut(), path.parent()) {
            if n.model.is_relative() {
                n.model = dir.join(&n.model);
            }
        }
        Ok(cfg)
    }

    pub fn extractor_specs(&self) -> Result<Vec<ExtractorSpec>> {
        self.extractors.iter().map(|s| s.parse()).collect()
    }

    /// Extractors x metrics, SIFT contributing a single row.
    pub fn systems(&self) -> Result<Vec<System>> {
        let mut out = Vec::new();
        for ex in self.extractor_specs()? {
            if ex.uses_metric() {
                for &m in &self.metrics {
                    out.push(System {
                        extractor: ex.clone(),
                        metric: Some(m),
                    });
                }
            } else {
                out.push(System {
                    extractor: ex,
                    metric: None,
                });
            }
        }
        Ok(out)
    }

    /// Row ids of the fused systems, resolving bare extractor names.
    pub fn fusion_members(&self) -> Result<Vec<String>> {
        let systems = self.systems()?;
        self.fusion
            .iter()
            .map(|name| {
                if systems.iter().any(|s| &s.id() == name) {
                    return Ok(name.clone());
                }
                let matching: Vec<String> = systems
                    .iter()
                    .filter(|s| &s.extractor.to_string() == name)
                    .map(System::id)
                    .collect();
                match matching.as_slice() {
                    [one] => Ok(one.clone()),
                    [] => Err(CliError::Usage(format!(
                        "fusion member {name:?} is not a configured system"
                    ))),
                    _ => Err(CliError::Usage(format!(
                        "fusion member {name:?} is ambiguous ({}); name a row id",
                        matching.join(", ")
                    ))),
                }
            })
            .collect()
    }

    /// Label of the fused row, e.g. `fusion:lbp+hog`.
    pub fn fusion_label(&self) -> String {
        format!("fusion:{}", self.fusion.join("+"))
    }

    pub fn mean_label(&self) -> String {
        format!("mean:{}", self.fusion.join("+"))
    }

    pub fn validate(&self) -> Result<()> {
        let specs = self.extractor_specs()?;
        if specs.is_empty() {
            return Err(CliError::Usage("config lists no extractors".into()));
        }
        if specs.iter().any(|s| s.uses_metric()) && self.metrics.is_empty() {
            return Err(CliError::Usage("config lists no metrics".into()));
        }
        let needs_model = specs.iter().any(|s| matches!(s, ExtractorSpec::Neural(_)));
        if needs_model && self.neural.is_none() {
            return Err(CliError::Usage(
                "neural extractor needs a [neural] model".into(),
            ));
        }
        for (k, &r) in &self.preprocess.target_radius {
            if k.parse::<f64>().is_err() || !(r.is_finite() && r > 0.0) {
                return Err(CliError::Usage(format!("bad target radius {k} = {r}")));
            }
        }
        let c = &self.preprocess.clahe;
        if c.bins == 0
            || c.tiles_x == 0
            || c.tiles_y == 0
            || !(c.clip_limit > 0.0 && c.clip_limit <= 1.0)
        {
            return Err(CliError::Usage(
                "clahe needs positive tiles/bins and clip_limit in (0, 1]".into(),
            ));
        }
        if self.fusion.len() == 1 {
            return Err(CliError::Usage("fusion needs at least two systems".into()));
        }
        self.fusion_members()?;
        Ok(())
    }
}
