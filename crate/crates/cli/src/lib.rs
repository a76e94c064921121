//! The `curlvar` command line: configuration, dispatch and run artifacts.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use serde_json::json;

use config::{parse_config, Command, ConfigError, RunConfig};
use run::{execute, write_artifacts, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "curlvar", version, about = "Ground states of the critical curl-curl equation on box cavities")]
pub struct Cli {
    /// Overrides `command` from the configuration.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// TOML or JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "CURLVAR_THREADS")]
    pub threads: Option<usize>,
    /// Write field snapshots (raw blob with JSON header, and VTK).
    #[arg(long)]
    pub snapshot: bool,
    /// Number of eigenpairs.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Comma-separated list for `bn-sweep`.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Cells per side.
    #[arg(long)]
    pub grid: Option<usize>,
}

impl Cli {
    /// The configuration file (or defaults) with the flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(c) = self.command {
            cfg.command = c;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.seeds = None;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.snapshot |= self.snapshot;
        if let Some(n) = self.count {
            cfg.eigen_count = n;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = Some(l);
        }
        if let Some(ls) = &self.lambdas {
            cfg.lambdas = Some(ls.clone());
        }
        if let Some(n) = self.grid {
            cfg.grid = config::GridSize::Cube(n);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn config_failure(e: &ConfigError) -> i32 {
    let kind = match e {
        ConfigError::Parse { .. } => "config-parse",
        ConfigError::Invalid { .. } => "config-invalid",
        ConfigError::Io(_) => "io",
    };
    let mut report = json!({ "kind": kind, "message": e.to_string(), "exit_code": EXIT_CONFIG });
    if let ConfigError::Parse { line, column, .. } = e {
        report["line"] = json!(line);
        report["column"] = json!(column);
    }
    if let ConfigError::Invalid { field, .. } = e {
        report["field"] = json!(field);
    }
    eprintln!("{report}");
    EXIT_CONFIG
}

/// Runs the program on the given arguments and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    if let Err(e) = std::fs::create_dir_all(&cfg.out) {
        return config_failure(&ConfigError::Io(format!("{}: {e}", cfg.out.display())));
    }
    let artifacts = execute(&cfg);
    print!("{}", artifacts.stdout);
    if let Err(e) = write_artifacts(&cfg, &artifacts, &cfg.out) {
        return config_failure(&ConfigError::Io(format!("{}: {e}", cfg.out.display())));
    }
    if let Some(err) = &artifacts.error {
        eprintln!("{}", serde_json::to_string(err).expect("error serialises"));
    }
    artifacts.exit_code
}
