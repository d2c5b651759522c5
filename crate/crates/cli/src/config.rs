//! Experiment configuration from a JSON file merged with command-line flags.

use chaosbound::{CovarianceModel, Error, FunctionSpec, Metric, Result};
use serde::{Deserialize, Serialize};

/// Sample sizes given either as a spec string or as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Text(String),
    List(Vec<usize>),
}

/// Everything a subcommand may read. Fields left empty fall back to
/// defaults; flags on the command line replace values from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub function: Option<String>,
    pub functions: Option<Vec<String>>,
    pub model: Option<String>,
    pub ngrid: Option<GridSpec>,
    pub q_max: Option<u32>,
    pub metrics: Option<Vec<String>>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub bootstrap: Option<usize>,
    pub tolerance: Option<f64>,
    pub output: Option<String>,
    pub bound_csv: Option<String>,
    pub simulation_csv: Option<String>,
}

impl ExperimentConfig {
    pub fn from_file(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("config {path}: {e}")))
    }

    /// `other` wins wherever it is set.
    pub fn overridden_by(self, other: ExperimentConfig) -> Self {
        ExperimentConfig {
            function: other.function.or(self.function),
            functions: other.functions.or(self.functions),
            model: other.model.or(self.model),
            ngrid: other.ngrid.or(self.ngrid),
            q_max: other.q_max.or(self.q_max),
            metrics: other.metrics.or(self.metrics),
            replications: other.replications.or(self.replications),
            seed: other.seed.or(self.seed),
            bootstrap: other.bootstrap.or(self.bootstrap),
            tolerance: other.tolerance.or(self.tolerance),
            output: other.output.or(self.output),
            bound_csv: other.bound_csv.or(self.bound_csv),
            simulation_csv: other.simulation_csv.or(self.simulation_csv),
        }
    }

    pub fn function(&self) -> Result<FunctionSpec> {
        self.function
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("--function is required".into()))?
            .parse()
    }

    pub fn function_list(&self) -> Result<Vec<FunctionSpec>> {
        let mut specs: Vec<&str> = self
            .functions
            .iter()
            .flatten()
            .map(String::as_str)
            .collect();
        if specs.is_empty() {
            specs.extend(self.function.as_deref());
        }
        specs.into_iter().map(str::parse).collect()
    }

    pub fn model(&self) -> Result<CovarianceModel> {
        self.model
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("--model is required".into()))?
            .parse()
    }

    pub fn grid(&self) -> Result<Vec<usize>> {
        match &self.ngrid {
            None => Err(Error::InvalidInput("--ngrid is required".into())),
            Some(GridSpec::Text(s)) => parse_grid(s),
            Some(GridSpec::List(v)) => check_grid(v.clone()),
        }
    }

    pub fn q_max(&self) -> u32 {
        self.q_max.unwrap_or(chaosbound::hermite::DEFAULT_Q_MAX)
    }

    /// Requested metrics, or W plus K and TV when `g` has a density.
    pub fn metrics(&self, g: &FunctionSpec) -> Result<Vec<Metric>> {
        match &self.metrics {
            Some(list) => list.iter().map(|m| m.parse()).collect(),
            None if g.zero_measure_preserving() => Ok(vec![
                Metric::Wasserstein,
                Metric::Kolmogorov,
                Metric::TotalVariation,
            ]),
            None => Ok(vec![Metric::Wasserstein, Metric::BoundedWasserstein]),
        }
    }

    pub fn simulation(&self) -> chaosbound::SimulationConfig {
        let d = chaosbound::SimulationConfig::default();
        chaosbound::SimulationConfig {
            replications: self.replications.unwrap_or(d.replications),
            seed: self.seed.unwrap_or(d.seed),
            bootstrap: self.bootstrap.unwrap_or(d.bootstrap),
        }
    }
}

/// `lo:hi` doubles from `lo` up to `hi`; otherwise a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("bad sample size '{t}' in grid '{s}'")))
    };
    let grid = if let Some((lo, hi)) = s.split_once(':') {
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo == 0 || hi < lo {
            return Err(Error::InvalidInput(format!(
                "grid '{s}' needs 1 <= lo <= hi"
            )));
        }
        std::iter::successors(Some(lo), |&n| n.checked_mul(2))
            .take_while(|&n| n <= hi)
            .collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    check_grid(grid)
}

fn check_grid(grid: Vec<usize>) -> Result<Vec<usize>> {
    if grid.is_empty() || grid[0] == 0 {
        return Err(Error::InvalidInput(
            "the n grid must be non-empty and positive".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "the n grid must be strictly increasing".into(),
        ));
    }
    Ok(grid)
}
