//! Experiment configuration: one JSON document per experiment, every field
//! overridable from the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use spargw::{GroundCost, MultiplicityWeighting, Regularizer, SamplingMode, SolverConfig, SparConfig, ZeroCostRule};

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Egw,
    PgaGw,
    SparGw,
    Fgw,
    SparFgw,
    Eugw,
    PgaUgw,
    SparUgw,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Egw,
        Method::PgaGw,
        Method::SparGw,
        Method::Fgw,
        Method::SparFgw,
        Method::Eugw,
        Method::PgaUgw,
        Method::SparUgw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Egw => "egw",
            Method::PgaGw => "pga-gw",
            Method::SparGw => "spar-gw",
            Method::Fgw => "fgw",
            Method::SparFgw => "spar-fgw",
            Method::Eugw => "eugw",
            Method::PgaUgw => "pga-ugw",
            Method::SparUgw => "spar-ugw",
        }
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, Method::SparGw | Method::SparFgw | Method::SparUgw)
    }

    pub fn is_unbalanced(self) -> bool {
        matches!(self, Method::Eugw | Method::PgaUgw | Method::SparUgw)
    }

    pub fn is_fused(self) -> bool {
        matches!(self, Method::Fgw | Method::SparFgw)
    }

    pub fn default_regularizer(self) -> Regularizer {
        match self {
            Method::Egw | Method::Eugw => Regularizer::Entropic,
            _ => Regularizer::ProximalKl,
        }
    }

    /// Dense proximal solver the estimate is compared against.
    pub fn oracle(self) -> Method {
        if self.is_unbalanced() {
            Method::PgaUgw
        } else if self.is_fused() {
            Method::Fgw
        } else {
            Method::PgaGw
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostName {
    L1,
    #[default]
    L2,
    Kl,
}

impl CostName {
    pub fn ground_cost(self) -> GroundCost {
        match self {
            CostName::L1 => GroundCost::l1(),
            CostName::L2 => GroundCost::l2(),
            CostName::Kl => GroundCost::kl(),
        }
    }
}

impl FromStr for CostName {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(CostName::L1),
            "l2" => Ok(CostName::L2),
            "kl" => Ok(CostName::Kl),
            _ => Err(BenchError::Config(format!("unknown cost `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Iid,
    Poisson,
    Full,
}

impl ModeName {
    pub fn sampling_mode(self) -> SamplingMode {
        match self {
            ModeName::Iid => SamplingMode::IidWithReplacement,
            ModeName::Poisson => SamplingMode::Poisson,
            ModeName::Full => SamplingMode::FullDeterministic,
        }
    }
}

impl FromStr for ModeName {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(ModeName::Iid),
            "poisson" => Ok(ModeName::Poisson),
            "full" => Ok(ModeName::Full),
            _ => Err(BenchError::Config(format!("unknown sampling mode `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerName {
    Entropic,
    Proximal,
}

impl RegularizerName {
    pub fn regularizer(self) -> Regularizer {
        match self {
            RegularizerName::Entropic => Regularizer::Entropic,
            RegularizerName::Proximal => Regularizer::ProximalKl,
        }
    }
}

impl FromStr for RegularizerName {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropic" => Ok(RegularizerName::Entropic),
            "proximal" => Ok(RegularizerName::Proximal),
            _ => Err(BenchError::Config(format!("unknown regularizer `{s}`"))),
        }
    }
}

/// Subsample size: an absolute count or a multiple of the problem size (`16n`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subsample {
    Absolute(usize),
    PerPoint(usize),
}

impl Subsample {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            Subsample::Absolute(s) => s,
            Subsample::PerPoint(k) => k * n,
        }
    }
}

impl Default for Subsample {
    fn default() -> Self {
        Subsample::PerPoint(16)
    }
}

impl fmt::Display for Subsample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subsample::Absolute(s) => write!(f, "{s}"),
            Subsample::PerPoint(k) => write!(f, "{k}n"),
        }
    }
}

impl FromStr for Subsample {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = || BenchError::Config(format!("invalid subsample size `{s}`"));
        let parsed = match t.strip_suffix('n') {
            Some(k) => Subsample::PerPoint(k.parse().map_err(|_| bad())?),
            None => Subsample::Absolute(t.parse().map_err(|_| bad())?),
        };
        match parsed {
            Subsample::Absolute(0) | Subsample::PerPoint(0) => Err(bad()),
            ok => Ok(ok),
        }
    }
}

impl Serialize for Subsample {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Subsample {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(n) => Ok(Subsample::Absolute(n)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn default_eps() -> f64 {
    1e-2
}

fn default_outer() -> usize {
    20
}

fn default_inner() -> usize {
    50
}

fn default_retries() -> usize {
    3
}

/// Solver choice and its parameters, independent of the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    #[serde(default)]
    pub cost: CostName,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Subsample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeName>,
    #[serde(rename = "R", default = "default_outer")]
    pub outer: usize,
    #[serde(rename = "H", default = "default_inner")]
    pub inner: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<RegularizerName>,
    /// Ignore draw multiplicities in the sparsified kernel.
    #[serde(default)]
    pub paper_literal_dedup: bool,
    /// Treat an exactly-zero sampled cost as `+inf`.
    #[serde(default)]
    pub zero_cost_literal: bool,
    /// Keep going when a sampled support misses a row or column.
    #[serde(default)]
    pub allow_empty_support: bool,
    #[serde(default)]
    pub allow_naive_probabilities: bool,
    /// Fresh-seed retries after an infeasible sampled kernel.
    #[serde(default = "default_retries")]
    pub retries: usize,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            cost: CostName::L2,
            eps: default_eps(),
            lambda: None,
            alpha: None,
            s: None,
            mode: None,
            outer: default_outer(),
            inner: default_inner(),
            regularizer: None,
            paper_literal_dedup: false,
            zero_cost_literal: false,
            allow_empty_support: false,
            allow_naive_probabilities: false,
            retries: default_retries(),
        }
    }

    /// Rejects parameters that the method does not use and missing required ones.
    pub fn validate(&self) -> Result<()> {
        let m = self.method;
        let err = |msg: String| Err(BenchError::Config(msg));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return err(format!("eps must be positive, got {}", self.eps));
        }
        if self.outer == 0 || self.inner == 0 {
            return err("R and H must be at least 1".into());
        }
        match (m.is_unbalanced(), self.lambda) {
            (true, None) => return err(format!("{m} requires lambda")),
            (false, Some(_)) => return err(format!("lambda is only valid for unbalanced methods, not {m}")),
            (true, Some(l)) if !(l > 0.0 && l.is_finite()) => return err(format!("lambda must be positive, got {l}")),
            _ => {}
        }
        match (m.is_fused(), self.alpha) {
            (true, None) => return err(format!("{m} requires alpha")),
            (false, Some(_)) => return err(format!("alpha is only valid for fused methods, not {m}")),
            (true, Some(a)) if !(0.0..=1.0).contains(&a) => return err(format!("alpha must lie in [0, 1], got {a}")),
            _ => {}
        }
        if !m.is_sparse() {
            let sparse_only = self.s.is_some()
                || self.mode.is_some()
                || self.paper_literal_dedup
                || self.zero_cost_literal
                || self.allow_empty_support
                || self.allow_naive_probabilities;
            if sparse_only {
                return err(format!("sampling options are only valid for spar-* methods, not {m}"));
            }
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let reg = self
            .regularizer
            .map(RegularizerName::regularizer)
            .unwrap_or_else(|| self.method.default_regularizer());
        SolverConfig::new(reg, self.eps).with_iterations(self.outer, self.inner)
    }

    /// Sampling settings for problem size `n` and the given seed.
    pub fn spar_config(&self, n: usize, seed: u64) -> SparConfig {
        let mut spar = SparConfig::new(
            self.s.unwrap_or_default().resolve(n),
            self.mode.unwrap_or_default().sampling_mode(),
            seed,
        );
        if self.paper_literal_dedup {
            spar.weighting = MultiplicityWeighting::PaperLiteral;
        }
        if self.zero_cost_literal {
            spar.zero_cost = ZeroCostRule::Literal;
        }
        spar.allow_empty_lines = self.allow_empty_support;
        spar.allow_naive_probabilities = self.allow_naive_probabilities;
        spar
    }

    /// The dense proximal oracle with the same cost and regularization strength.
    pub fn oracle(&self) -> MethodConfig {
        MethodConfig {
            method: self.method.oracle(),
            cost: self.cost,
            eps: self.eps,
            lambda: self.lambda,
            alpha: self.alpha,
            outer: self.outer,
            inner: self.inner,
            ..MethodConfig::new(self.method.oracle())
        }
    }
}

fn default_noise() -> f64 {
    spargw::datagen::DEFAULT_MOON_NOISE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Moon {
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_noise")]
        noise: f64,
    },
    Graph {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    GaussianMixture {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Spiral {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Files {
        cx: PathBuf,
        cy: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<PathBuf>,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Moon { .. } => "moon",
            DatasetSpec::Graph { .. } => "graph",
            DatasetSpec::GaussianMixture { .. } => "gaussian-mixture",
            DatasetSpec::Spiral { .. } => "spiral",
            DatasetSpec::Files { .. } => "files",
        }
    }

    /// Generated size, if the dataset is synthetic.
    pub fn size(&self) -> Option<usize> {
        match self {
            DatasetSpec::Moon { n, .. }
            | DatasetSpec::Graph { n, .. }
            | DatasetSpec::GaussianMixture { n, .. }
            | DatasetSpec::Spiral { n, .. } => Some(*n),
            DatasetSpec::Files { .. } => None,
        }
    }

    pub fn with_size(&self, size: usize) -> Result<DatasetSpec> {
        let mut out = self.clone();
        match &mut out {
            DatasetSpec::Moon { n, .. }
            | DatasetSpec::Graph { n, .. }
            | DatasetSpec::GaussianMixture { n, .. }
            | DatasetSpec::Spiral { n, .. } => *n = size,
            DatasetSpec::Files { .. } => {
                return Err(BenchError::Config("cannot resize a file-backed dataset".into()));
            }
        }
        Ok(out)
    }

    /// Parses a generator name into a spec with the given size and seed.
    pub fn generator(name: &str, n: usize, seed: u64) -> Result<DatasetSpec> {
        match name {
            "moon" => Ok(DatasetSpec::Moon {
                n,
                seed,
                noise: default_noise(),
            }),
            "graph" => Ok(DatasetSpec::Graph { n, seed }),
            "gaussian-mixture" | "gaussian" => Ok(DatasetSpec::GaussianMixture { n, seed }),
            "spiral" => Ok(DatasetSpec::Spiral { n, seed }),
            _ => Err(BenchError::Config(format!("unknown dataset `{name}`"))),
        }
    }
}

fn unit() -> f64 {
    1.0
}

/// How marginal weights are assigned to generated points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    /// Gaussian density weights with this bandwidth; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// Total mass of the source measure (unbalanced methods only).
    #[serde(default = "unit")]
    pub source_mass: f64,
    #[serde(default = "unit")]
    pub target_mass: f64,
}

impl Default for WeightScheme {
    fn default() -> Self {
        Self {
            bandwidth: None,
            source_mass: 1.0,
            target_mass: 1.0,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub weights: WeightScheme,
    #[serde(flatten)]
    pub solver: MethodConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec, solver: MethodConfig) -> Self {
        Self {
            dataset,
            weights: WeightScheme::default(),
            solver,
            seeds: default_seeds(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.seeds.is_empty() {
            return Err(BenchError::Config("at least one seed is required".into()));
        }
        let w = &self.weights;
        if let Some(bw) = w.bandwidth {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(BenchError::Config(format!("bandwidth must be positive, got {bw}")));
            }
        }
        for mass in [w.source_mass, w.target_mass] {
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(BenchError::Config(format!("masses must be positive, got {mass}")));
            }
        }
        if !self.solver.method.is_unbalanced() && (w.source_mass != 1.0 || w.target_mass != 1.0) {
            return Err(BenchError::Config("non-unit masses need an unbalanced method".into()));
        }
        if let Some(n) = self.dataset.size() {
            let min = if matches!(self.dataset, DatasetSpec::Graph { .. }) {
                3
            } else {
                2
            };
            if n < min {
                return Err(BenchError::Config(format!("{} needs n >= {min}", self.dataset.name())));
            }
        }
        Ok(())
    }

    /// Stable identifier of everything except seeds and output location.
    pub fn config_hash(&self) -> String {
        let mut key = self.clone();
        key.seeds.clear();
        key.out = None;
        let text = serde_json::to_string(&key).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subsample_syntax() {
        assert_eq!("16n".parse::<Subsample>().unwrap(), Subsample::PerPoint(16));
        assert_eq!("3200".parse::<Subsample>().unwrap(), Subsample::Absolute(3200));
        assert!("0n".parse::<Subsample>().is_err());
        assert!("n".parse::<Subsample>().is_err());
        assert_eq!(Subsample::PerPoint(16).resolve(200), 3200);
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"dataset": {"kind": "moon", "n": 50}, "method": "spar-gw", "s": "8n", "seeds": [1, 2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.solver.eps, 1e-2);
        assert_eq!(cfg.solver.outer, 20);
        assert_eq!(cfg.solver.s, Some(Subsample::PerPoint(8)));
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let num =
            ExperimentConfig::from_json(r#"{"dataset": {"kind": "graph", "n": 9}, "method": "spar-gw", "s": 40}"#)
                .unwrap();
        assert_eq!(num.solver.s, Some(Subsample::Absolute(40)));
    }

    #[test]
    fn rejects_mismatched_parameters() {
        let mut c = MethodConfig::new(Method::SparUgw);
        c.lambda = Some(1.0);
        c.validate().unwrap();
        c.alpha = Some(0.5);
        assert!(c.validate().is_err());
        let mut g = MethodConfig::new(Method::PgaGw);
        g.lambda = Some(1.0);
        assert!(g.validate().is_err());
        let mut f = MethodConfig::new(Method::Fgw);
        assert!(f.validate().is_err());
        f.alpha = Some(1.5);
        assert!(f.validate().is_err());
        let mut d = MethodConfig::new(Method::Egw);
        d.s = Some(Subsample::PerPoint(4));
        assert!(d.validate().is_err());
    }

    #[test]
    fn hash_ignores_seeds_only() {
        let base = ExperimentConfig::new(
            DatasetSpec::generator("moon", 20, 0).unwrap(),
            MethodConfig::new(Method::PgaGw),
        );
        let mut seeded = base.clone();
        seeded.seeds = vec![4, 5];
        assert_eq!(base.config_hash(), seeded.config_hash());
        let mut other = base.clone();
        other.solver.eps = 0.1;
        assert_ne!(base.config_hash(), other.config_hash());
    }

    #[test]
    fn oracle_keeps_cost_and_strength() {
        let mut c = MethodConfig::new(Method::SparFgw);
        c.alpha = Some(0.3);
        c.cost = CostName::L1;
        c.s = Some(Subsample::PerPoint(4));
        let o = c.oracle();
        assert_eq!(o.method, Method::Fgw);
        assert_eq!(o.alpha, Some(0.3));
        assert_eq!(o.cost, CostName::L1);
        assert_eq!(o.s, None);
        o.validate().unwrap();
    }
}
