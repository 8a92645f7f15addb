//! Experiment configuration: a TOML file, overridden field by field by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Truncate,
    Recur,
    Cascade,
    Register,
    Finalstate,
    Born,
    Reduce,
    Ambiguity,
    Dispersionless,
    Chsh,
    Feasible,
    OracleCheck,
    AppcReport,
}

impl Command {
    pub const ALL: [Command; 13] = [
        Command::Truncate,
        Command::Recur,
        Command::Cascade,
        Command::Register,
        Command::Finalstate,
        Command::Born,
        Command::Reduce,
        Command::Ambiguity,
        Command::Dispersionless,
        Command::Chsh,
        Command::Feasible,
        Command::OracleCheck,
        Command::AppcReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Truncate => "truncate",
            Command::Recur => "recur",
            Command::Cascade => "cascade",
            Command::Register => "register",
            Command::Finalstate => "finalstate",
            Command::Born => "born",
            Command::Reduce => "reduce",
            Command::Ambiguity => "ambiguity",
            Command::Dispersionless => "dispersionless",
            Command::Chsh => "chsh",
            Command::Feasible => "feasible",
            Command::OracleCheck => "oracle-check",
            Command::AppcReport => "appc-report",
        }
    }

    /// Commands whose natural output is a time series.
    pub fn is_tabular(self) -> bool {
        matches!(self, Command::Truncate | Command::Recur | Command::Cascade | Command::AppcReport)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Luders,
    VonNeumann,
    Unread,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_g_rel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Bloch vector of the tested spin.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// End of the time grid in units of τ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// Source scales for the pointer limit, decreasing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Oracle agreement bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    /// Coherence allowed between pointer windows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
}

/// Inputs only some commands read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// `singlet`, `werner:<p>` or `product`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<Rule>,
    /// Direction of the tested spin component.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir1: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir2: Option<[f64; 3]>,
    /// Eigenvalues of a diagonal state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlators: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub marginals: Option<[f64; 4]>,
    /// External field for the mean-field equation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(default)]
    pub inputs: Inputs,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            model: ModelParams::default(),
            grid: GridSpec::default(),
            output: OutputSpec::default(),
            tolerance: Tolerances::default(),
            inputs: Inputs::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `flags` replace those here.
    pub fn override_with(mut self, flags: &ExperimentConfig) -> Self {
        fn take<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        self.command = flags.command;
        let (m, f) = (&mut self.model, &flags.model);
        take(&mut m.n, &f.n);
        take(&mut m.g, &f.g);
        take(&mut m.delta_g_rel, &f.delta_g_rel);
        take(&mut m.seed, &f.seed);
        take(&mut m.j, &f.j);
        take(&mut m.t, &f.t);
        take(&mut m.r0, &f.r0);
        let (g, f) = (&mut self.grid, &flags.grid);
        take(&mut g.t_max, &f.t_max);
        take(&mut g.points, &f.points);
        take(&mut g.nu_max, &f.nu_max);
        take(&mut g.k_max, &f.k_max);
        take(&mut g.scales, &f.scales);
        take(&mut self.output.path, &flags.output.path);
        take(&mut self.output.format, &flags.output.format);
        take(&mut self.tolerance.oracle, &flags.tolerance.oracle);
        take(&mut self.tolerance.window, &flags.tolerance.window);
        let (i, f) = (&mut self.inputs, &flags.inputs);
        take(&mut i.state, &f.state);
        take(&mut i.runs, &f.runs);
        take(&mut i.rule, &f.rule);
        take(&mut i.axis, &f.axis);
        take(&mut i.dir1, &f.dir1);
        take(&mut i.dir2, &f.dir2);
        take(&mut i.spectrum, &f.spectrum);
        take(&mut i.correlators, &f.correlators);
        take(&mut i.marginals, &f.marginals);
        take(&mut i.field, &f.field);
        self
    }

    /// Explicit format, else the output extension, else the command's
    /// natural one.
    pub fn resolved_format(&self) -> Format {
        if let Some(f) = self.output.format {
            return f;
        }
        match self.output.path.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            Some("csv") => Format::Csv,
            _ if self.command.is_tabular() => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// `+x`, `-z`, ... or three comma-separated components.
pub fn parse_vector(s: &str) -> Result<[f64; 3], String> {
    let named = match s {
        "+x" | "x" => Some([1.0, 0.0, 0.0]),
        "-x" => Some([-1.0, 0.0, 0.0]),
        "+y" | "y" => Some([0.0, 1.0, 0.0]),
        "-y" => Some([0.0, -1.0, 0.0]),
        "+z" | "z" => Some([0.0, 0.0, 1.0]),
        "-z" => Some([0.0, 0.0, -1.0]),
        "0" | "mixed" => Some([0.0; 3]),
        _ => None,
    };
    if let Some(v) = named {
        return Ok(v);
    }
    let parts = parse_list(s)?;
    parts
        .try_into()
        .map_err(|p: Vec<f64>| format!("expected 3 components, got {}", p.len()))
}

pub fn parse_four(s: &str) -> Result<[f64; 4], String> {
    parse_list(s)?
        .try_into()
        .map_err(|p: Vec<f64>| format!("expected 4 numbers, got {}", p.len()))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(Command::OracleCheck);
        c.model = ModelParams {
            n: Some(8),
            g: Some(0.1),
            delta_g_rel: Some(0.05),
            seed: Some(42),
            j: Some(1.0),
            t: Some(0.8),
            r0: Some([0.6, 0.0, 0.1 + 0.2]),
        };
        c.grid = GridSpec { t_max: Some(4.0), points: Some(200), nu_max: Some(3), k_max: Some(3), scales: Some(vec![0.4, 0.2]) };
        c.output = OutputSpec { path: Some("out.json".into()), format: Some(Format::Json) };
        c.tolerance = Tolerances { oracle: Some(1e-10), window: Some(1e-8) };
        c.inputs = Inputs {
            state: Some("werner:0.7".into()),
            runs: Some(1000),
            rule: Some(Rule::VonNeumann),
            axis: Some([0.0, 0.0, 1.0]),
            dir1: Some([1.0, 2.0, 3.0]),
            dir2: None,
            spectrum: Some(vec![0.5, 0.25, 0.25]),
            correlators: Some([0.1, -0.2, 0.3, 1.0 / 3.0]),
            marginals: None,
            field: Some(-1e-300),
        };
        c
    }

    #[test]
    fn toml_round_trip() {
        for c in [full(), ExperimentConfig::new(Command::Chsh)] {
            let text = c.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c, "{text}");
        }
    }

    #[test]
    fn flags_override_file() {
        let file = full();
        let mut flags = ExperimentConfig::new(Command::Truncate);
        flags.model.n = Some(100);
        let merged = file.clone().override_with(&flags);
        assert_eq!(merged.command, Command::Truncate);
        assert_eq!(merged.model.n, Some(100));
        assert_eq!(merged.model.g, file.model.g);
        assert_eq!(merged.inputs, file.inputs);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("command = \"born\"\n[model]\nspin = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("command = \"nope\"\n").is_err());
    }

    #[test]
    fn vector_parsing() {
        assert_eq!(parse_vector("+x").unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(parse_vector("0,0,0.6").unwrap(), [0.0, 0.0, 0.6]);
        assert!(parse_vector("1,2").is_err());
        assert!(parse_four("1,2,3").is_err());
    }

    #[test]
    fn format_resolution() {
        let mut c = ExperimentConfig::new(Command::Truncate);
        assert_eq!(c.resolved_format(), Format::Csv);
        c.output.path = Some("a.json".into());
        assert_eq!(c.resolved_format(), Format::Json);
        assert_eq!(ExperimentConfig::new(Command::Born).resolved_format(), Format::Json);
    }
}
