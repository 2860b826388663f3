//! Flat `key=value` run configuration.
//!
//! A config file holds one `key = value` pair per line; `#` starts a comment.
//! Command-line pairs are applied afterwards and win.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use tsa::problems::{benchmark, Benchmark, Scheme, Tolerance};
use tsa::{ControlGrid, NeighborStrategy, PruneConfig, PruneScope};

const KEYS: &[&str] = &[
    "problem",
    "x0",
    "dt",
    "T",
    "N",
    "eps",
    "controls",
    "scheme",
    "scope",
    "strategy",
    "out_dir",
    "threads",
    "d",
    "dts",
    "max_nodes",
    "tree_csv",
    "unpruned",
    "oracle_dx",
    "oracle_dt",
    "oracle_box",
];

/// A rejected configuration value, reported with the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key '{}': {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// Raw pairs in application order.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pairs: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            raw.set_pair(line)
                .map_err(|e| ConfigError::new(&e.key, format!("{} (line {})", e.message, i + 1)))?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    /// Applies one `key=value` pair.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let Some((k, v)) = pair.split_once('=') else {
            return Err(ConfigError::new(pair.trim(), "expected key=value"));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(ConfigError::new(k, format!("unknown key (known: {})", KEYS.join(", "))));
        }
        self.pairs.insert(k.to_string(), v.to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs.get(key).map(String::as_str)
    }
}

/// Merge radius as written in the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eps {
    Fixed(f64),
    /// `dt^p`; `dt2` is `p = 2`.
    DtPower(f64),
}

impl Eps {
    fn parse(s: &str) -> Result<Self> {
        let bad = || ConfigError::new("eps", format!("expected a number, dt2 or dt^p, got '{s}'"));
        if s == "dt2" {
            return Ok(Eps::DtPower(2.0));
        }
        if s == "dt" {
            return Ok(Eps::DtPower(1.0));
        }
        if let Some(p) = s.strip_prefix("dt^") {
            let p: f64 = p.parse().map_err(|_| bad())?;
            if !(p > 0.0) || !p.is_finite() {
                return Err(bad());
            }
            return Ok(Eps::DtPower(p));
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(ConfigError::new("eps", format!("must be >= 0, got {v}")));
        }
        Ok(Eps::Fixed(v))
    }

    pub fn resolve(self, dt: f64) -> f64 {
        match self {
            Eps::Fixed(v) => v,
            Eps::DtPower(p) => Tolerance::DtPower(p).resolve(dt),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ControlSpec {
    Points(Vec<Vec<f64>>),
    Range { min: f64, max: f64, step: f64 },
}

impl ControlSpec {
    fn parse(s: &str) -> Result<Self> {
        if let Some(r) = s.strip_prefix("range:") {
            let v = parse_list("controls", r)?;
            let [min, max, step] = v[..] else {
                return Err(ConfigError::new("controls", "range needs min,max,step"));
            };
            return Ok(ControlSpec::Range { min, max, step });
        }
        let points = s
            .split(';')
            .map(|p| parse_list("controls", p))
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlSpec::Points(points))
    }

    fn build(&self, control_dim: usize) -> Result<ControlGrid> {
        let err = |e: tsa::TsaError| ConfigError::new("controls", e.to_string());
        match self {
            ControlSpec::Range { min, max, step } => {
                ControlGrid::hypercube(&vec![*min; control_dim], &vec![*max; control_dim], *step).map_err(err)
            }
            ControlSpec::Points(points) if control_dim == 1 && points.len() == 1 => {
                ControlGrid::scalar(&points[0]).map_err(err)
            }
            ControlSpec::Points(points) => {
                if let Some(p) = points.iter().find(|p| p.len() != control_dim) {
                    return Err(ConfigError::new(
                        "controls",
                        format!("point {p:?} has {} components, the problem has {control_dim}", p.len()),
                    ));
                }
                ControlGrid::new(points.clone()).map_err(err)
            }
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| ConfigError::new(key, format!("cannot parse '{s}'")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|x| parse_num::<f64>(key, x.trim()))
        .collect::<Result<Vec<f64>>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::new(key, "values must be finite"));
    }
    Ok(v)
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::new(key, format!("expected true or false, got '{s}'"))),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be positive, got {v}")))
    }
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub bench: Benchmark,
    pub eps: Eps,
    pub strategy: Option<NeighborStrategy>,
    pub max_nodes: usize,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub dts: Option<Vec<f64>>,
    pub tree_csv: bool,
    pub unpruned: Option<bool>,
    pub oracle_dx: Option<f64>,
    pub oracle_dt: Option<f64>,
    pub oracle_box: Option<(f64, f64)>,
}

impl Config {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let name = raw.get("problem").unwrap_or("test1");
        let d = raw.get("d").map(|s| parse_num::<usize>("d", s)).transpose()?;
        let mut bench = benchmark(name, d).map_err(|e| ConfigError::new("problem", e.to_string()))?;

        if let Some(s) = raw.get("x0") {
            let x0 = parse_list("x0", s)?;
            if x0.len() != bench.problem.dim() {
                return Err(ConfigError::new(
                    "x0",
                    format!(
                        "has {} components, '{name}' has dimension {}",
                        x0.len(),
                        bench.problem.dim()
                    ),
                ));
            }
            bench.x0 = x0;
        }
        if let Some(s) = raw.get("T") {
            let t: f64 = parse_num("T", s)?;
            if !(t >= 0.0) || !t.is_finite() {
                return Err(ConfigError::new("T", format!("must be >= 0, got {t}")));
            }
            bench.horizon = t;
        }
        let dt = raw.get("dt").map(|s| parse_num::<f64>("dt", s)).transpose()?;
        let steps = raw.get("N").map(|s| parse_num::<usize>("N", s)).transpose()?;
        match (dt, steps) {
            (_, Some(0)) => {
                bench.horizon = 0.0;
                if let Some(dt) = dt {
                    bench.dt = positive("dt", dt)?;
                }
            }
            (Some(dt), Some(n)) => {
                let dt = positive("dt", dt)?;
                if raw.get("T").is_some() && ((n as f64) * dt - bench.horizon).abs() > 1e-9 * bench.horizon {
                    return Err(ConfigError::new(
                        "N",
                        format!("N * dt = {} does not match T = {}", n as f64 * dt, bench.horizon),
                    ));
                }
                bench.dt = dt;
                bench.horizon = n as f64 * dt;
            }
            (Some(dt), None) => bench.dt = positive("dt", dt)?,
            (None, Some(n)) => {
                if !(bench.horizon > 0.0) {
                    return Err(ConfigError::new("N", "needs a positive T"));
                }
                bench.dt = bench.horizon / n as f64;
            }
            (None, None) => {}
        }
        bench.time_grid().map_err(|e| ConfigError::new("dt", e.to_string()))?;

        if let Some(s) = raw.get("controls") {
            bench.controls = ControlSpec::parse(s)?.build(bench.problem.control_dim())?;
        }
        if let Some(s) = raw.get("scheme") {
            bench.scheme = s
                .parse::<Scheme>()
                .map_err(|e| ConfigError::new("scheme", e.to_string()))?;
        }
        if let Some(s) = raw.get("scope") {
            bench.scope = s
                .parse::<PruneScope>()
                .map_err(|e| ConfigError::new("scope", e.to_string()))?;
        }
        if bench.scope == PruneScope::Tree && !bench.problem.is_autonomous() {
            return Err(ConfigError::new(
                "scope",
                format!("'{name}' is not autonomous; use level or revisit"),
            ));
        }
        bench.stepper().map_err(|e| ConfigError::new("scheme", e.to_string()))?;
        let eps = match raw.get("eps") {
            Some(s) => Eps::parse(s)?,
            None => match bench.tolerance {
                Tolerance::DtPower(p) => Eps::DtPower(p),
                Tolerance::Fixed(v) => Eps::Fixed(v),
            },
        };
        let strategy = raw
            .get("strategy")
            .map(|s| {
                s.parse::<NeighborStrategy>()
                    .map_err(|e| ConfigError::new("strategy", e.to_string()))
            })
            .transpose()?;
        let max_nodes = match raw.get("max_nodes") {
            Some(s) => parse_num::<usize>("max_nodes", s)?,
            None => PruneConfig::DEFAULT_MAX_NODES,
        };
        if max_nodes == 0 {
            return Err(ConfigError::new("max_nodes", "must be >= 1"));
        }
        let threads = raw
            .get("threads")
            .map(|s| parse_num::<usize>("threads", s))
            .transpose()?;
        if threads == Some(0) {
            return Err(ConfigError::new("threads", "must be >= 1"));
        }
        let dts = raw.get("dts").map(|s| parse_list("dts", s)).transpose()?;
        if let Some(dts) = &dts {
            for &dt in dts {
                positive("dts", dt)?;
            }
            if dts.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(ConfigError::new("dts", "step sizes must strictly decrease"));
            }
        }
        let oracle_box = match raw.get("oracle_box") {
            Some(s) => {
                let v = parse_list("oracle_box", s)?;
                let [lo, hi] = v[..] else {
                    return Err(ConfigError::new("oracle_box", "expected lo,hi"));
                };
                if !(lo < hi) {
                    return Err(ConfigError::new("oracle_box", "lo must be below hi"));
                }
                Some((lo, hi))
            }
            None => None,
        };
        Ok(Config {
            bench,
            eps,
            strategy,
            max_nodes,
            out_dir: PathBuf::from(raw.get("out_dir").unwrap_or("tsa-out")),
            threads,
            dts,
            tree_csv: raw
                .get("tree_csv")
                .map(|s| parse_bool("tree_csv", s))
                .transpose()?
                .unwrap_or(true),
            unpruned: raw.get("unpruned").map(|s| parse_bool("unpruned", s)).transpose()?,
            oracle_dx: raw
                .get("oracle_dx")
                .map(|s| parse_num("oracle_dx", s).and_then(|v| positive("oracle_dx", v)))
                .transpose()?,
            oracle_dt: raw
                .get("oracle_dt")
                .map(|s| parse_num("oracle_dt", s).and_then(|v| positive("oracle_dt", v)))
                .transpose()?,
            oracle_box,
        })
    }

    /// Pruning settings for step `dt`.
    pub fn prune(&self, dt: f64) -> PruneConfig {
        let mut cfg = PruneConfig::with_tolerance(self.eps.resolve(dt))
            .scope(self.bench.scope)
            .max_nodes(self.max_nodes);
        if let Some(s) = self.strategy {
            cfg = cfg.strategy(s);
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(pairs: &[&str]) -> Result<Config> {
        let mut raw = RawConfig::default();
        for p in pairs {
            raw.set_pair(p)?;
        }
        Config::from_raw(&raw)
    }

    #[test]
    fn defaults_follow_the_registry() {
        let c = config(&[]).unwrap();
        assert_eq!(c.bench.problem.name(), "test1");
        assert_eq!(c.eps, Eps::DtPower(2.0));
        assert_eq!(c.prune(0.05).tolerance, 0.05 * 0.05);
    }

    #[test]
    fn file_then_overrides() {
        let mut raw = RawConfig::parse_text("problem = vdp1  # van der pol\n\ndt=0.1\n").unwrap();
        raw.set_pair("dt=0.05").unwrap();
        let c = Config::from_raw(&raw).unwrap();
        assert_eq!(c.bench.dt, 0.05);
        assert_eq!(c.bench.problem.name(), "vdp1");
    }

    #[test]
    fn eps_forms() {
        assert_eq!(Eps::parse("dt2").unwrap().resolve(0.1), 0.1 * 0.1);
        assert_eq!(Eps::parse("0").unwrap(), Eps::Fixed(0.0));
        assert_eq!(Eps::parse("dt^1.5").unwrap(), Eps::DtPower(1.5));
        assert!(Eps::parse("-1").is_err());
        assert!(Eps::parse("dt^x").is_err());
    }

    #[test]
    fn control_forms() {
        let c = config(&["controls=-1,0,1"]).unwrap();
        assert_eq!(c.bench.controls.len(), 3);
        let c = config(&["controls=range:-1,1,0.5"]).unwrap();
        assert_eq!(c.bench.controls.len(), 5);
        let c = config(&["problem=vdp3", "controls=0,-1;0,1"]).unwrap();
        assert_eq!(c.bench.controls.len(), 2);
        let c = config(&["problem=vdp3", "controls=range:-1,1,1"]).unwrap();
        assert_eq!(c.bench.controls.len(), 9);
        assert_eq!(config(&["problem=vdp3", "controls=0,1,2"]).unwrap_err().key, "controls");
    }

    #[test]
    fn steps_and_horizon() {
        let c = config(&["T=2", "N=40"]).unwrap();
        assert_eq!(c.bench.dt, 0.05);
        let c = config(&["N=0"]).unwrap();
        assert_eq!(c.bench.time_grid().unwrap().steps(), 0);
        assert_eq!(config(&["dt=0.3"]).unwrap_err().key, "dt");
        assert_eq!(config(&["T=1", "N=10", "dt=0.05"]).unwrap_err().key, "N");
    }

    #[test]
    fn field_level_errors() {
        assert_eq!(config(&["problem=nope"]).unwrap_err().key, "problem");
        assert_eq!(config(&["x0=1,2,3"]).unwrap_err().key, "x0");
        assert_eq!(config(&["problem=driven", "scope=tree"]).unwrap_err().key, "scope");
        assert_eq!(config(&["strategy=kd"]).unwrap_err().key, "strategy");
        assert_eq!(config(&["dts=0.1,0.2"]).unwrap_err().key, "dts");
        assert_eq!(config(&["threads=0"]).unwrap_err().key, "threads");
        let mut raw = RawConfig::default();
        assert_eq!(raw.set_pair("colour=red").unwrap_err().key, "colour");
        assert!(raw.set_pair("novalue").is_err());
        assert!(RawConfig::parse_text("dt=0.1\nbogus\n")
            .unwrap_err()
            .message
            .contains("line 2"));
    }
}
