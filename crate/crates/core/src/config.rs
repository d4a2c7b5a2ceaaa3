//! YAML run configuration with sections `phantom`, `sampler`, `model`, `loss`,
//! `train` and `inference`. Absent keys take their defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use crate::dataset::SamplerConfig;
use crate::error::{Error, Result};
use crate::inference::InferenceConfig;
use crate::losses::LossConfig;
use crate::model::ModelConfig;
use crate::phantom::PhantomConfig;
use crate::trainer::{TrainConfig, TrainOptions};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub phantom: PhantomConfig,
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainOptions,
    pub inference: InferenceConfig,
}

const SECTIONS: [&str; 6] = ["phantom", "sampler", "model", "loss", "train", "inference"];

fn field_names<T: Serialize + Default>() -> Vec<String> {
    match serde_yaml::to_value(T::default()) {
        Ok(Value::Mapping(m)) => m.keys().filter_map(|k| k.as_str().map(str::to_string)).collect(),
        _ => Vec::new(),
    }
}

fn key_name(k: &Value) -> String {
    match k {
        Value::String(s) => s.clone(),
        other => serde_yaml::to_string(other).unwrap_or_default().trim().to_string(),
    }
}

fn section<T: Serialize + DeserializeOwned + Default>(name: &str, value: Option<&Value>, issues: &mut Vec<String>) -> T {
    let Some(value) = value else {
        return T::default();
    };
    if value.is_null() {
        return T::default();
    }
    let Value::Mapping(map) = value else {
        issues.push(format!("{name}: expected a mapping"));
        return T::default();
    };
    let known = field_names::<T>();
    let mut clean = serde_yaml::Mapping::new();
    for (k, v) in map {
        let key = key_name(k);
        if known.contains(&key) {
            clean.insert(k.clone(), v.clone());
        } else {
            issues.push(format!("{name}.{key}: unknown key"));
        }
    }
    // fields are parsed one by one so every bad value is reported
    let mut parsed = serde_yaml::Mapping::new();
    for (k, v) in clean {
        let mut one = serde_yaml::Mapping::new();
        one.insert(k.clone(), v.clone());
        match serde_yaml::from_value::<T>(Value::Mapping(one)) {
            Ok(_) => {
                parsed.insert(k, v);
            }
            Err(e) => issues.push(format!("{name}.{}: {e}", key_name(&k))),
        }
    }
    serde_yaml::from_value(Value::Mapping(parsed)).unwrap_or_else(|e| {
        issues.push(format!("{name}: {e}"));
        T::default()
    })
}

impl RunConfig {
    /// Parses YAML text, collecting unknown keys, malformed values and failed
    /// range checks into one [`Error::Config`].
    pub fn from_yaml_str(text: &str) -> Result<Self> {
        let root: Value = serde_yaml::from_str(text)?;
        let mut issues = Vec::new();
        let map = match &root {
            Value::Null => serde_yaml::Mapping::new(),
            Value::Mapping(m) => m.clone(),
            _ => return Err(Error::Config(vec!["<root>: expected a mapping".into()])),
        };
        for k in map.keys() {
            let key = key_name(k);
            if !SECTIONS.contains(&key.as_str()) {
                issues.push(format!("{key}: unknown key"));
            }
        }
        let get = |name: &str| map.get(Value::String(name.into()));
        let cfg = RunConfig {
            phantom: section("phantom", get("phantom"), &mut issues),
            sampler: section("sampler", get("sampler"), &mut issues),
            model: section("model", get("model"), &mut issues),
            loss: section("loss", get("loss"), &mut issues),
            train: section("train", get("train"), &mut issues),
            inference: section("inference", get("inference"), &mut issues),
        };
        if issues.is_empty() {
            issues = cfg.validate();
        }
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_yaml_str(&text)
    }

    pub fn to_yaml(&self) -> Result<String> {
        Ok(serde_yaml::to_string(self)?)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = self.phantom.validate();
        issues.extend(self.train_config().validate());
        issues.extend(self.inference.validate());
        let div = self.model.size_divisor();
        if self.model.depth >= 1 && !self.inference.patch_size.is_multiple_of(div) {
            issues.push(format!(
                "inference.patch_size: {} is not divisible by {div} (2^(model.depth - 1))",
                self.inference.patch_size
            ));
        }
        issues
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            train: self.train.clone(),
            loss: self.loss.clone(),
            sampler: self.sampler.clone(),
            model: self.model.clone(),
        }
    }

    /// Applies a global seed to every seeded section.
    pub fn set_seed(&mut self, seed: u64) {
        self.phantom.seed = seed;
        self.sampler.seed = seed;
        self.train.seed = seed;
    }
}
