//! Flat `key=value` settings shared by the config file and the command line.

use hls_core::harness::{DatasetSpec, ExperimentPlan, Method, MnistPaths};
use hls_core::StoppingRule;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const KEYS: &[&str] = &[
    "dataset",
    "data-dir",
    "methods",
    "layers",
    "alphas",
    "repeats",
    "seed",
    "max-neurons",
    "cv-folds",
    "test-fraction",
    "stopping-rule",
    "workers",
    "out",
    "mnist-subsample",
    "max-iter",
    "l2-alpha",
    "initial-threshold",
];

#[derive(Debug, Default, Clone)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    /// Parses `key=value` lines. Blank lines and lines starting with `#` are skipped;
    /// `_` in keys is read as `-`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key {key:?}", i + 1));
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn set(&mut self, key: &str, value: Option<impl Display>) {
        debug_assert!(KEYS.contains(&key), "{key}");
        if let Some(v) = value {
            self.0.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn value<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| format!("{key}: {v:?}: {e}")))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, String>
    where
        T::Err: Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|p| p.trim().parse::<T>().map_err(|e| format!("{key}: {p:?}: {e}")))
                    .collect()
            })
            .transpose()
    }

    /// Dataset spec from `dataset` and `data-dir`.
    pub fn dataset(&self) -> Result<DatasetSpec, String> {
        let dir = PathBuf::from(self.get("data-dir").unwrap_or("data"));
        match self.get("dataset").unwrap_or("boston") {
            "boston" => Ok(DatasetSpec::BostonCsv(if dir.is_file() {
                dir
            } else {
                dir.join("boston.csv")
            })),
            "mnist" => {
                let nested = dir.join("mnist");
                Ok(DatasetSpec::Mnist(MnistPaths::in_dir(if nested.is_dir() {
                    &nested
                } else {
                    &dir
                })))
            }
            "lookup" => Ok(DatasetSpec::SyntheticLookup(if dir.is_file() {
                dir
            } else {
                dir.join("lookup.csv")
            })),
            other => Err(format!("dataset: unknown {other:?} (expected boston, mnist or lookup)")),
        }
    }

    pub fn plan(&self) -> Result<ExperimentPlan, String> {
        let dataset = self.dataset()?;
        let is_mnist = matches!(dataset, DatasetSpec::Mnist(_));
        let mut plan = ExperimentPlan::new(dataset, self.get("out").unwrap_or("results"));
        if is_mnist {
            plan.repeats = 3;
            plan.max_neurons = 5;
            plan.mnist_subsample = Some((5000, 1000));
        }
        if let Some(m) = self.list::<Method>("methods")? {
            plan.methods = m;
        }
        if let Some(l) = self.list("layers")? {
            plan.layer_counts = l;
        }
        if let Some(a) = self.list("alphas")? {
            plan.alphas = a;
        }
        if let Some(r) = self.value("repeats")? {
            plan.repeats = r;
        }
        if let Some(s) = self.value("seed")? {
            plan.base_seed = s;
        }
        if let Some(m) = self.value("max-neurons")? {
            plan.max_neurons = m;
        }
        if let Some(k) = self.value("cv-folds")? {
            plan.cv_folds = k;
        }
        if let Some(f) = self.value("test-fraction")? {
            plan.test_fraction = f;
        }
        if let Some(rule) = self.get("stopping-rule") {
            plan.stopping_rule = parse_rule(rule)?;
        }
        if let Some(w) = self.value("workers")? {
            plan.workers = w;
        }
        if let Some(s) = self.get("mnist-subsample") {
            plan.mnist_subsample = parse_subsample(s)?;
        }
        if let Some(i) = self.value("max-iter")? {
            plan.model.max_iter = i;
        }
        if let Some(a) = self.value("l2-alpha")? {
            plan.model.l2_alpha = a;
        }
        if let Some(k) = self.value("initial-threshold")? {
            plan.initial_threshold = k;
        }
        Ok(plan)
    }
}

pub fn parse_rule(s: &str) -> Result<StoppingRule, String> {
    match s {
        "paper" => Ok(StoppingRule::PaperFaithful),
        "improve" => Ok(StoppingRule::ImprovementMode),
        other => Err(format!("stopping-rule: unknown {other:?} (expected paper or improve)")),
    }
}

/// `TRAIN,TEST` sizes, or `full` for no subsampling.
fn parse_subsample(s: &str) -> Result<Option<(usize, usize)>, String> {
    if s == "full" || s == "none" {
        return Ok(None);
    }
    let err = || format!("mnist-subsample: expected TRAIN,TEST or full, got {s:?}");
    let (a, b) = s.split_once(',').ok_or_else(err)?;
    Ok(Some((
        a.trim().parse().map_err(|_| err())?,
        b.trim().parse().map_err(|_| err())?,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_overrides() {
        let mut s = Settings::parse("# comment\ndataset = lookup\nmax_neurons=4\nalphas=0.01,0.1\n").unwrap();
        s.set("max-neurons", Some(6));
        s.set("repeats", None::<usize>);
        let plan = s.plan().unwrap();
        assert_eq!(plan.max_neurons, 6);
        assert_eq!(plan.alphas, vec![0.01, 0.1]);
        assert_eq!(plan.repeats, 10);
        assert!(matches!(plan.dataset, DatasetSpec::SyntheticLookup(_)));
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(Settings::parse("colour=blue").is_err());
        assert!(Settings::parse("no equals sign").is_err());
        let s = Settings::parse("stopping-rule=sometimes").unwrap();
        assert!(s.plan().is_err());
        let s = Settings::parse("layers=1,x").unwrap();
        assert!(s.plan().is_err());
    }

    #[test]
    fn mnist_defaults() {
        let plan = Settings::parse("dataset=mnist").unwrap().plan().unwrap();
        assert_eq!(plan.mnist_subsample, Some((5000, 1000)));
        assert_eq!((plan.max_neurons, plan.repeats), (5, 3));
        let plan = Settings::parse("dataset=mnist\nmnist-subsample=full")
            .unwrap()
            .plan()
            .unwrap();
        assert_eq!(plan.mnist_subsample, None);
    }
}
