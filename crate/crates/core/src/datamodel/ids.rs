use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Probing tasks of the standard battery, in canonical (lexicographic) order.
pub const STANDARD_PROBING_TASKS: [&str; 7] = [
    "BShift",
    "CoordInv",
    "ObjNum",
    "SOMO",
    "SubjNum",
    "Tense",
    "TreeDepth",
];

pub const GLUE_TASKS: [&str; 6] = ["RTE", "COLA", "MRPC", "SST2", "QNLI", "QQP"];

pub const DEFAULT_LAYER_COUNT: u32 = 12;

/// A model in the study.
///
/// Rendered as `name`, `name:variant` or `name:variant:family`; the family
/// defaults to the name when omitted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelId {
    pub name: String,
    pub variant: String,
    pub family: String,
}

impl ModelId {
    pub fn new(name: impl Into<String>, variant: impl Into<String>, family: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            variant: variant.into(),
            family: family.into(),
        }
    }

    /// Identity key; `(name, variant)` is unique within a study.
    pub fn key(&self) -> (&str, &str) {
        (&self.name, &self.variant)
    }
}

impl Ord for ModelId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key()
            .cmp(&other.key())
            .then_with(|| self.family.cmp(&other.family))
    }
}

impl PartialOrd for ModelId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        if self.family != self.name {
            write!(f, ":{}:{}", self.variant, self.family)
        } else if !self.variant.is_empty() {
            write!(f, ":{}", self.variant)
        } else {
            Ok(())
        }
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidArgument(format!("bad model id `{s}`"));
        let id = match parts.as_slice() {
            [name] => ModelId::new(*name, "", *name),
            [name, variant] => ModelId::new(*name, *variant, *name),
            [name, variant, family] => ModelId::new(*name, *variant, *family),
            _ => return Err(bad()),
        };
        if id.name.is_empty() || id.family.is_empty() {
            return Err(bad());
        }
        Ok(id)
    }
}

/// Classifier that produced a probing accuracy. Declaration order is the
/// canonical order and the dev-accuracy tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProbeMethod {
    BestByDev,
    LogReg,
    MLP10,
    MLP20,
    RandomForest10,
    RandomForest100,
    DecisionTree,
    SVM,
}

impl ProbeMethod {
    pub const ALL: [ProbeMethod; 8] = [
        ProbeMethod::BestByDev,
        ProbeMethod::LogReg,
        ProbeMethod::MLP10,
        ProbeMethod::MLP20,
        ProbeMethod::RandomForest10,
        ProbeMethod::RandomForest100,
        ProbeMethod::DecisionTree,
        ProbeMethod::SVM,
    ];

    /// The seven trainable classifiers.
    pub const CLASSIFIERS: [ProbeMethod; 7] = [
        ProbeMethod::LogReg,
        ProbeMethod::MLP10,
        ProbeMethod::MLP20,
        ProbeMethod::RandomForest10,
        ProbeMethod::RandomForest100,
        ProbeMethod::DecisionTree,
        ProbeMethod::SVM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeMethod::BestByDev => "BestByDev",
            ProbeMethod::LogReg => "LogReg",
            ProbeMethod::MLP10 => "MLP10",
            ProbeMethod::MLP20 => "MLP20",
            ProbeMethod::RandomForest10 => "RandomForest10",
            ProbeMethod::RandomForest100 => "RandomForest100",
            ProbeMethod::DecisionTree => "DecisionTree",
            ProbeMethod::SVM => "SVM",
        }
    }
}

impl fmt::Display for ProbeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProbeMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown probe method `{s}`")))
    }
}

/// One probing configuration: task, 1-based layer, classifier.
///
/// Field order gives the canonical ordering: task name, then layer, then method.
/// Renders as `Task_layer` for best-by-dev features and `Task_layer@Method` otherwise.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureId {
    pub probing_task: String,
    pub layer: u32,
    pub probe_method: ProbeMethod,
}

impl FeatureId {
    pub fn new(task: impl Into<String>, layer: u32, method: ProbeMethod) -> Self {
        Self {
            probing_task: task.into(),
            layer,
            probe_method: method,
        }
    }

    pub fn best(task: impl Into<String>, layer: u32) -> Self {
        Self::new(task, layer, ProbeMethod::BestByDev)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.probing_task, self.layer)?;
        if self.probe_method != ProbeMethod::BestByDev {
            write!(f, "@{}", self.probe_method)?;
        }
        Ok(())
    }
}

impl FromStr for FeatureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::InvalidArgument(format!("bad feature id `{s}`"));
        let (head, method) = match s.split_once('@') {
            Some((h, m)) => (h, m.parse()?),
            None => (s, ProbeMethod::BestByDev),
        };
        let (task, layer) = head.rsplit_once('_').ok_or_else(bad)?;
        let layer: u32 = layer.trim().parse().map_err(|_| bad())?;
        if task.is_empty() || layer == 0 {
            return Err(bad());
        }
        Ok(FeatureId::new(task, layer, method))
    }
}
