//! Flat `key = value` configuration documents.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Keys are case-sensitive, may appear at most once, and must come from
//! [`CONFIG_KEYS`]. Values are unquoted; lists are comma separated. An empty
//! value means "use the default". Keys below `method` in the table configure a
//! single run and are accepted only with `scenario = custom`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::experiments::{scenario_names, ScenarioOptions};
use crate::optimize::{InitSpec, Method, RunConfig};
use crate::params::{BASIN_CI_SCALE, BASIN_FULL_SCALE, DEFAULT_BETA, LORA_GAMMA, LORA_M, LORA_N, LORA_SIGMA};
use crate::problem::TargetSpec;

/// Scenario name that builds one run from the run keys.
pub const CUSTOM_SCENARIO: &str = "custom";

/// Every accepted key with its default (empty: resolved from context) and meaning.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("scenario", "uniform_growth", "scenario from `list-scenarios`, or `custom` for one run built from the run keys"),
    ("seed", "0", "seed for targets, initializations and perturbations"),
    ("out_dir", "out", "directory receiving CSV, JSON and SVG output"),
    ("workers", "", "worker threads; empty means SPECFLOW_WORKERS, else every core"),
    ("plots", "true", "write SVG plots next to the logs"),
    ("log_stride", "", "record every k-th step; empty keeps the scenario's stride (custom: 1)"),
    ("eta", "", "step size; empty keeps the scenario's calibrated value (custom: 0.01)"),
    ("max_steps", "", "step budget; empty keeps the scenario's budget (custom: 1000)"),
    ("lambda", "", "weight decay; empty keeps the scenario's value (custom: 0)"),
    ("basin_scale", "full", "basin replicates: `full` (20 x 50) or `ci` (5 x 10)"),
    ("method", "SpecExact", "custom: GD, SpecExact, SpecSmoothed or MuonNS"),
    ("beta", "", "custom: smoothing constant; empty means 1e-8 for SpecSmoothed, else 0"),
    ("mu", "0", "custom: momentum, used by SpecExact and MuonNS"),
    ("gamma", "0.001", "custom: LoRA initialization scale"),
    ("rank", "5", "custom: inner dimension of the chain"),
    ("depth", "2", "custom: number of factors"),
    ("stop_loss", "0", "custom: stop once the loss is at most this"),
    ("stop_grad_norm", "0", "custom: stop once every gradient norm is at most this; 0 disables"),
    ("ns_iterations", "5", "custom: Newton-Schulz iterations for MuonNS"),
    ("epsilon", "", "custom: active-set tolerance; empty means 0.05 times the smallest tracked sigma"),
    ("target_m", "60", "custom: target rows"),
    ("target_n", "70", "custom: target columns"),
    ("target_sigma", "8,5,3,1.5,0.7", "custom: strictly decreasing target singular values"),
];

const FIRST_RUN_KEY: &str = "method";

fn is_run_key(key: &str) -> bool {
    let first = CONFIG_KEYS.iter().position(|(k, _, _)| *k == FIRST_RUN_KEY).expect("run keys present");
    CONFIG_KEYS[first..].iter().any(|(k, _, _)| *k == key)
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDocument {
    pub scenario: String,
    pub out_dir: PathBuf,
    pub plots: bool,
    pub options: ScenarioOptions,
    /// The run and its target when `scenario = custom`.
    pub custom: Option<(RunConfig, TargetSpec)>,
    /// Every key with its effective value, in table order.
    pub resolved: Vec<(String, String)>,
}

impl ConfigDocument {
    /// The resolution as a document that parses back to the same configuration.
    pub fn render(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn parse_config(text: &str) -> Result<ConfigDocument> {
    parse_config_with(text, &Overrides::default())
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

fn config_err(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Config { line, key: key.to_string(), message: message.into() }
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(config_err(line, content, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(config_err(line, key, "unknown key"));
            }
            if let Some((first, _)) = map.get(key) {
                return Err(config_err(line, key, format!("duplicate key, first set on line {first}")));
            }
            map.insert(key.to_string(), (line, value.to_string()));
        }
        Ok(Entries { map })
    }

    /// Raw non-empty value and its line.
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).filter(|(_, v)| !v.is_empty()).map(|(l, v)| (*l, v.as_str()))
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |(l, _)| *l)
    }

    fn get<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| config_err(line, key, format!("expected {what}, got `{v}`"))),
        }
    }

    fn real(&self, key: &str) -> Result<Option<f64>> {
        match self.get::<f64>(key, "a real number")? {
            Some(x) if !x.is_finite() => Err(config_err(self.line(key), key, "must be finite")),
            other => Ok(other),
        }
    }

    fn positive_real(&self, key: &str) -> Result<Option<f64>> {
        match self.real(key)? {
            Some(x) if x <= 0.0 => Err(config_err(self.line(key), key, format!("must be positive, got {x}"))),
            other => Ok(other),
        }
    }

    fn nonnegative_real(&self, key: &str) -> Result<Option<f64>> {
        match self.real(key)? {
            Some(x) if x < 0.0 => Err(config_err(self.line(key), key, format!("must be nonnegative, got {x}"))),
            other => Ok(other),
        }
    }

    fn positive_int(&self, key: &str) -> Result<Option<usize>> {
        match self.get::<usize>(key, "a nonnegative integer")? {
            Some(0) => Err(config_err(self.line(key), key, "must be positive")),
            other => Ok(other),
        }
    }
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<ConfigDocument> {
    let e = Entries::parse(text)?;
    let scenario = match &overrides.scenario {
        Some(s) => s.clone(),
        None => e.raw("scenario").map_or("uniform_growth".to_string(), |(_, v)| v.to_string()),
    };
    if scenario != CUSTOM_SCENARIO && !scenario_names().contains(&scenario.as_str()) {
        return Err(config_err(e.line("scenario"), "scenario", format!("unknown scenario `{scenario}`")));
    }
    let custom = scenario == CUSTOM_SCENARIO;
    if !custom {
        if let Some((key, (line, _))) = e.map.iter().find(|(k, _)| is_run_key(k)) {
            return Err(config_err(*line, key, "only valid with `scenario = custom`"));
        }
    }
    let seed = match overrides.seed {
        Some(s) => s,
        None => e.get::<u64>("seed", "an unsigned integer")?.unwrap_or(0),
    };
    let out_dir = match &overrides.out_dir {
        Some(p) => p.clone(),
        None => PathBuf::from(e.raw("out_dir").map_or("out", |(_, v)| v)),
    };
    let plots = e.get::<bool>("plots", "`true` or `false`")?.unwrap_or(true);
    let workers = e.positive_int("workers")?;
    let log_stride = e.positive_int("log_stride")?;
    let eta = e.positive_real("eta")?;
    let max_steps = e.get::<usize>("max_steps", "a nonnegative integer")?;
    let lambda = e.nonnegative_real("lambda")?;
    let basin_scale = match e.raw("basin_scale") {
        None | Some((_, "full")) => BASIN_FULL_SCALE,
        Some((_, "ci")) => BASIN_CI_SCALE,
        Some((line, v)) => return Err(config_err(line, "basin_scale", format!("expected `full` or `ci`, got `{v}`"))),
    };
    let options = ScenarioOptions { seed, workers, eta, max_steps, log_stride, lambda, basin_scale };

    let opt = |x: Option<String>| x.unwrap_or_default();
    let mut resolved = vec![
        ("scenario".to_string(), scenario.clone()),
        ("seed".to_string(), seed.to_string()),
        ("out_dir".to_string(), out_dir.display().to_string()),
        ("workers".to_string(), opt(workers.map(|w| w.to_string()))),
        ("plots".to_string(), plots.to_string()),
        ("log_stride".to_string(), opt(log_stride.map(|s| s.to_string()))),
        ("eta".to_string(), opt(eta.map(|x| format!("{x:?}")))),
        ("max_steps".to_string(), opt(max_steps.map(|s| s.to_string()))),
        ("lambda".to_string(), opt(lambda.map(|x| format!("{x:?}")))),
        ("basin_scale".to_string(), if basin_scale == BASIN_CI_SCALE { "ci" } else { "full" }.to_string()),
    ];

    let custom_run = if custom {
        let (run, target) = parse_run(&e, &options)?;
        resolved.extend([
            ("method".to_string(), run.method.name().to_string()),
            ("beta".to_string(), format!("{:?}", run.beta)),
            ("mu".to_string(), format!("{:?}", run.mu)),
            ("gamma".to_string(), format!("{:?}", run.init.gamma)),
            ("rank".to_string(), run.rank.to_string()),
            ("depth".to_string(), run.depth.to_string()),
            ("stop_loss".to_string(), format!("{:?}", run.stop_loss)),
            ("stop_grad_norm".to_string(), format!("{:?}", run.stop_grad_norm)),
            ("ns_iterations".to_string(), run.ns_iterations.to_string()),
            ("epsilon".to_string(), opt(run.epsilon.map(|x| format!("{x:?}")))),
            ("target_m".to_string(), target.m.to_string()),
            ("target_n".to_string(), target.n.to_string()),
            ("target_sigma".to_string(), target.sigma.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(",")),
        ]);
        Some((run, target))
    } else {
        None
    };
    Ok(ConfigDocument { scenario, out_dir, plots, options, custom: custom_run, resolved })
}

fn parse_run(e: &Entries, options: &ScenarioOptions) -> Result<(RunConfig, TargetSpec)> {
    let method = match e.raw("method") {
        None => Method::SpecExact,
        Some((line, v)) => Method::parse(v).ok_or_else(|| {
            config_err(line, "method", format!("expected one of GD, SpecExact, SpecSmoothed, MuonNS; got `{v}`"))
        })?,
    };
    let beta = match e.nonnegative_real("beta")? {
        Some(b) => {
            if method == Method::SpecSmoothed && b == 0.0 {
                return Err(config_err(e.line("beta"), "beta", "SpecSmoothed needs beta > 0"));
            }
            if method != Method::SpecSmoothed && b != 0.0 {
                return Err(config_err(e.line("beta"), "beta", format!("{} does not use beta", method.name())));
            }
            b
        }
        None if method == Method::SpecSmoothed => DEFAULT_BETA,
        None => 0.0,
    };
    let mu = e.nonnegative_real("mu")?.unwrap_or(0.0);
    if mu > 1.0 {
        return Err(config_err(e.line("mu"), "mu", format!("must lie in [0, 1], got {mu}")));
    }
    if mu > 0.0 && !matches!(method, Method::SpecExact | Method::MuonNs) {
        return Err(config_err(e.line("mu"), "mu", format!("{} does not use momentum", method.name())));
    }
    let gamma = e.positive_real("gamma")?.unwrap_or(LORA_GAMMA);
    let rank = e.positive_int("rank")?.unwrap_or(LORA_SIGMA.len());
    let depth = e.get::<usize>("depth", "an integer")?.unwrap_or(2);
    if depth < 2 {
        return Err(config_err(e.line("depth"), "depth", format!("must be at least 2, got {depth}")));
    }
    let stop_loss = e.nonnegative_real("stop_loss")?.unwrap_or(0.0);
    let stop_grad_norm = e.nonnegative_real("stop_grad_norm")?.unwrap_or(0.0);
    let ns_iterations = e.positive_int("ns_iterations")?.unwrap_or(crate::params::DEFAULT_NS_ITERATIONS);
    let epsilon = e.positive_real("epsilon")?;
    let m = e.positive_int("target_m")?.unwrap_or(LORA_M);
    let n = e.positive_int("target_n")?.unwrap_or(LORA_N);
    let sigma = match e.raw("target_sigma") {
        None => LORA_SIGMA.to_vec(),
        Some((line, v)) => {
            let parsed: std::result::Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let sigma =
                parsed.map_err(|_| config_err(line, "target_sigma", format!("expected comma-separated reals, got `{v}`")))?;
            if sigma.is_empty() || sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) || sigma.windows(2).any(|w| w[1] >= w[0]) {
                return Err(config_err(line, "target_sigma", "must be positive and strictly decreasing"));
            }
            if sigma.len() > m.min(n) {
                return Err(config_err(line, "target_sigma", format!("at most min(target_m, target_n) = {} values", m.min(n))));
            }
            sigma
        }
    };
    let mut run = RunConfig::new(method, options.eta.unwrap_or(crate::params::LORA_ETA), rank, gamma, options.seed);
    run.beta = beta;
    run.mu = mu;
    run.lambda = options.lambda.unwrap_or(0.0);
    run.max_steps = options.max_steps.unwrap_or(run.max_steps);
    run.stop_loss = stop_loss;
    run.stop_grad_norm = stop_grad_norm;
    run.init = InitSpec::lora(gamma);
    run.depth = depth;
    run.ns_iterations = ns_iterations;
    run.log_stride = options.log_stride.unwrap_or(1);
    run.epsilon = epsilon;
    run.validate().map_err(|err| config_err(0, "run", err.to_string()))?;
    Ok((run, TargetSpec { m, n, sigma, seed: options.seed }))
}
