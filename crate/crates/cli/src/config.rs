//! Experiment configuration: an ini file with sections, overridden by
//! command-line flags.
//!
//! ```ini
//! [graph]
//! agents = 10
//! extra_edge_prob = 0.3
//! seed = 0
//! ; file = graph.txt        (edge list; replaces the random graph)
//!
//! [weights]
//! strategy = local-degree  ; or constant:0.01
//! theta = 0.5
//!
//! [objective]
//! dim = 4
//! rows_per_agent = 6
//! noise_std = 0.1
//! seed = 0
//! target_lipschitz = 0.14  ; "none" keeps the raw scale
//!
//! [certificate]
//! ; eta = 0.01
//! ; delta = 0.001
//! d_mode = observed        ; or analytic
//!
//! [run]
//! algorithms = dextra,gradient-push,dgd-row
//! ; alpha = 0.5
//! ; alpha_grid = 0.1,0.2,0.5
//! max_iter = 5000
//! target = 1e-10
//! ; schedule = inv-sqrt     (DGD and gradient-push; or constant)
//!
//! [output]
//! dir = out
//! ; instance = out          (where certify/run/compare/sweep read the instance)
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use dextra::analysis::{CertifyOptions, DModeChoice};
use dextra::baselines::Schedule;
use dextra::experiment::{parse_alpha_grid, Algorithm, SetupSpec, WeightStrategy};
use ini::Ini;

const KNOWN: &[(&str, &[&str])] = &[
    ("graph", &["agents", "extra_edge_prob", "seed", "file"]),
    ("weights", &["strategy", "theta"]),
    ("objective", &["dim", "rows_per_agent", "noise_std", "seed", "target_lipschitz"]),
    ("certificate", &["eta", "delta", "d_mode"]),
    ("run", &["algorithms", "alpha", "alpha_grid", "max_iter", "target", "schedule"]),
    ("output", &["dir", "instance"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub setup: SetupSpec,
    pub graph_file: Option<PathBuf>,
    pub certify: CertifyOptions,
    pub algorithms: Vec<Algorithm>,
    pub alpha: Option<f64>,
    pub alpha_grid: Option<Vec<f64>>,
    pub max_iter: usize,
    pub target: f64,
    /// Step-size schedule of the DGD and gradient-push baselines.
    pub baseline_schedule: Option<Schedule>,
    pub out: PathBuf,
    pub instance: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            setup: SetupSpec::default(),
            graph_file: None,
            certify: CertifyOptions::default(),
            algorithms: vec![Algorithm::Dextra, Algorithm::GradientPush, Algorithm::DgdRow],
            alpha: None,
            alpha_grid: None,
            max_iter: 5000,
            target: 1e-10,
            baseline_schedule: None,
            out: PathBuf::from("out"),
            instance: None,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub alpha_grid: Option<String>,
    pub algorithms: Option<String>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub target: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let ini = Ini::load_from_file(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_ini(&ini, base).with_context(|| format!("in config {}", path.display()))
    }

    /// Relative paths in the file are resolved against `base`.
    pub fn from_ini(ini: &Ini, base: &Path) -> Result<Self> {
        for (section, props) in ini.iter() {
            let name = section.unwrap_or("");
            let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == name) else {
                if props.is_empty() {
                    continue;
                }
                bail!("unknown section [{name}]");
            };
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    bail!("unknown key `{k}` in [{name}]");
                }
            }
        }
        let get = |s: &str, k: &str| ini.get_from(Some(s), k).map(strip_comment);
        let mut cfg = Self::default();
        let spec = &mut cfg.setup;
        set(&mut spec.agents, get("graph", "agents"), "graph.agents")?;
        set(&mut spec.extra_edge_prob, get("graph", "extra_edge_prob"), "graph.extra_edge_prob")?;
        set(&mut spec.graph_seed, get("graph", "seed"), "graph.seed")?;
        if let Some(f) = get("graph", "file") {
            cfg.graph_file = Some(base.join(f));
        }
        if let Some(s) = get("weights", "strategy") {
            spec.strategy = s.parse::<WeightStrategy>().map_err(anyhow::Error::msg)?;
        }
        set(&mut spec.theta, get("weights", "theta"), "weights.theta")?;
        set(&mut spec.dim, get("objective", "dim"), "objective.dim")?;
        set(&mut spec.rows_per_agent, get("objective", "rows_per_agent"), "objective.rows_per_agent")?;
        set(&mut spec.noise_std, get("objective", "noise_std"), "objective.noise_std")?;
        set(&mut spec.data_seed, get("objective", "seed"), "objective.seed")?;
        match get("objective", "target_lipschitz") {
            Some("none") => spec.target_lipschitz = None,
            Some(v) => spec.target_lipschitz = Some(parse(v, "objective.target_lipschitz")?),
            None => {}
        }
        if let Some(v) = get("certificate", "eta") {
            cfg.certify.eta = Some(parse(v, "certificate.eta")?);
        }
        if let Some(v) = get("certificate", "delta") {
            cfg.certify.delta = Some(parse(v, "certificate.delta")?);
        }
        match get("certificate", "d_mode") {
            None | Some("observed") => {}
            Some("analytic") => cfg.certify.d_mode = DModeChoice::Analytic,
            Some(other) => bail!("certificate.d_mode must be observed or analytic, got `{other}`"),
        }
        if let Some(v) = get("run", "algorithms") {
            cfg.algorithms = parse_algorithms(v)?;
        }
        if let Some(v) = get("run", "alpha") {
            cfg.alpha = Some(parse(v, "run.alpha")?);
        }
        if let Some(v) = get("run", "alpha_grid") {
            cfg.alpha_grid = Some(parse_alpha_grid(v).map_err(anyhow::Error::msg)?);
        }
        set(&mut cfg.max_iter, get("run", "max_iter"), "run.max_iter")?;
        set(&mut cfg.target, get("run", "target"), "run.target")?;
        if let Some(v) = get("run", "schedule") {
            cfg.baseline_schedule = Some(parse(v, "run.schedule")?);
        }
        if let Some(v) = get("output", "dir") {
            cfg.out = base.join(v);
        }
        if let Some(v) = get("output", "instance") {
            cfg.instance = Some(base.join(v));
        }
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(a) = o.alpha {
            self.alpha = Some(a);
        }
        if let Some(g) = &o.alpha_grid {
            self.alpha_grid = Some(parse_alpha_grid(g).map_err(anyhow::Error::msg)?);
        }
        if let Some(a) = &o.algorithms {
            self.algorithms = parse_algorithms(a)?;
        }
        if let Some(seed) = o.seed {
            self.setup.graph_seed = seed;
            self.setup.data_seed = seed;
        }
        if let Some(m) = o.max_iter {
            self.max_iter = m;
        }
        if let Some(t) = o.target {
            self.target = t;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                bail!("step size must be positive, got {a}");
            }
        }
        if !(self.target >= 0.0) {
            bail!("target residual must be nonnegative, got {}", self.target);
        }
        if self.max_iter == 0 {
            bail!("max_iter must be at least 1");
        }
        if self.algorithms.is_empty() {
            bail!("algorithm list is empty");
        }
        if let Some(f) = &self.graph_file {
            if !f.is_file() {
                bail!("graph file {} does not exist", f.display());
            }
        }
        Ok(())
    }

    /// Directory holding the instance the analysis commands read.
    pub fn instance_dir(&self) -> &Path {
        self.instance.as_deref().unwrap_or(&self.out)
    }
}

/// Drops a trailing `; comment` or `# comment` preceded by whitespace.
fn strip_comment(v: &str) -> &str {
    let cut = v
        .char_indices()
        .find(|&(i, c)| (c == ';' || c == '#') && v[..i].ends_with(char::is_whitespace))
        .map_or(v.len(), |(i, _)| i);
    v[..cut].trim()
}

fn parse<T: FromStr>(v: &str, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow::anyhow!("bad value `{v}` for {key}: {e}"))
}

fn set<T: FromStr>(slot: &mut T, value: Option<&str>, key: &str) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = value {
        *slot = parse(v, key)?;
    }
    Ok(())
}

pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let a: Algorithm = name.parse().map_err(anyhow::Error::msg)?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    if out.is_empty() {
        bail!("algorithm list is empty");
    }
    Ok(out)
}
