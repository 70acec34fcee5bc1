use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sigdistill_core::{ArchSpec, DistillConfig, EvalConfig, GenConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Random,
    Dm,
    Mdm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Random, Method::Dm, Method::Mdm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Dm => "dm",
            Method::Mdm => "mdm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Method::Random),
            "dm" => Ok(Method::Dm),
            "mdm" => Ok(Method::Mdm),
            other => bail!("unknown method {other:?} (expected random, dm or mdm)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossArchBlock {
    pub distill_archs: Vec<String>,
    pub eval_archs: Vec<String>,
    /// Also evaluate the random-selection baseline on every target.
    pub include_random: bool,
}

impl Default for CrossArchBlock {
    fn default() -> Self {
        CrossArchBlock {
            distill_archs: vec!["alexnet1d".into(), "vgg-lite".into()],
            eval_archs: vec![
                "alexnet1d".into(),
                "cnn2".into(),
                "vgg-lite".into(),
                "resnet1d-lite".into(),
            ],
            include_random: true,
        }
    }
}

/// Everything an experiment needs, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentManifest {
    pub method: Method,
    /// Relative paths are resolved against the manifest's directory.
    pub out_dir: PathBuf,
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Methods compared by `eval`.
    pub compare: Vec<Method>,
    pub gen: GenConfig,
    pub distill: DistillConfig,
    pub eval: EvalConfig,
    pub crossarch: CrossArchBlock,
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        ExperimentManifest {
            method: Method::Mdm,
            out_dir: PathBuf::from("out"),
            test_fraction: 0.2,
            split_seed: 0,
            compare: Method::ALL.to_vec(),
            gen: GenConfig::default(),
            distill: DistillConfig::default(),
            eval: EvalConfig::default(),
            crossarch: CrossArchBlock::default(),
        }
    }
}

/// Command-line values that override manifest scalars.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub method: Option<Method>,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub spc: Option<usize>,
    pub iterations: Option<usize>,
}

impl ExperimentManifest {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Load a manifest (or the defaults when `path` is `None`), apply
    /// overrides and validate.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut manifest = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                let mut m = Self::parse(&text).with_context(|| format!("invalid config {}", p.display()))?;
                if m.out_dir.is_relative() {
                    let base = p.parent().unwrap_or(Path::new("."));
                    m.out_dir = base.join(&m.out_dir);
                }
                m
            }
            None => ExperimentManifest::default(),
        };
        manifest.apply(overrides);
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.gen.seed = seed;
            self.split_seed = seed;
            self.distill.seed = seed;
            self.eval.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(a) = o.alpha {
            self.distill.alpha = a;
        }
        if let Some(eta) = o.eta {
            self.distill.eta = eta;
        }
        if let Some(spc) = o.spc {
            self.distill.spc = spc;
        }
        if let Some(k) = o.iterations {
            self.distill.iterations = k;
        }
        if self.method == Method::Dm {
            self.distill.alpha = 0.0;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.distill.validate()?;
        self.eval.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test_fraction must lie in (0, 1), got {}", self.test_fraction);
        }
        if self.compare.is_empty() {
            bail!("compare must list at least one method");
        }
        for name in self.crossarch.distill_archs.iter().chain(&self.crossarch.eval_archs) {
            ArchSpec::preset(name)?;
        }
        if self.out_dir.as_os_str().is_empty() {
            bail!("out_dir must not be empty");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn train_path(&self) -> PathBuf {
        self.out_dir.join("train.sigds")
    }

    pub fn test_path(&self) -> PathBuf {
        self.out_dir.join("test.sigds")
    }

    pub fn synth_path(&self, method: Method) -> PathBuf {
        self.out_dir.join(format!("synth_{method}_{}.sigds", self.distill.spc))
    }

    pub fn loss_path(&self, method: Method) -> PathBuf {
        self.out_dir.join(format!("loss_{method}_{}.csv", self.distill.spc))
    }
}
