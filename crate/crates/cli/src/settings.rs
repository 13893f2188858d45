//! Flat key-value settings: an optional `--config` file overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use cubicwave::io::{apply_solver_config, format_f64, initial_from_kv, KeyValues, INITIAL_KEYS, SOLVER_KEYS};
use cubicwave::{InitialData, SolverConfig};

use crate::Usage;

#[derive(Args, Debug, Clone, Default)]
pub struct SolverArgs {
    /// Key-value file (`key = value` lines); flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub courant: Option<f64>,
    /// Kreiss-Oliger strength (0 = off).
    #[arg(long)]
    pub dissipation: Option<f64>,
    /// Constraint damping rate.
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub blowup_threshold: Option<f64>,
    #[arg(long)]
    pub adapt_scale: Option<f64>,
    #[arg(long)]
    pub max_tau: Option<f64>,
    #[arg(long)]
    pub sample_dt: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// gaussian | conformal | attractor
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub center: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    /// Initial leaf for closed-form data.
    #[arg(long)]
    pub tau0: Option<f64>,
    #[arg(long = "a", allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long = "b", allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Sign of the attractor member (+1 or -1).
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// File stem of the outputs.
    #[arg(long)]
    pub name: Option<String>,
}

impl OutArgs {
    pub fn stem<'a>(&'a self, default: &'a str) -> &'a str {
        self.name.as_deref().unwrap_or(default)
    }

    pub fn path(&self, stem: &str, suffix: &str) -> PathBuf {
        self.out.join(format!("{stem}{suffix}"))
    }

    pub fn ensure(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

pub struct Settings {
    pub kv: KeyValues,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let kv = match path {
            Some(p) => KeyValues::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => KeyValues::new(),
        };
        Ok(Settings { kv })
    }

    pub fn from_args(solver: &SolverArgs, data: Option<&DataArgs>) -> Result<Self> {
        let mut s = Settings::load(solver.config.as_deref())?;
        s.set_usize("cells", solver.cells);
        s.set("courant", solver.courant);
        s.set("dissipation", solver.dissipation);
        s.set("constraint_damping", solver.damping);
        s.set("blowup_threshold", solver.blowup_threshold);
        s.set("adapt_scale", solver.adapt_scale);
        s.set("max_tau", solver.max_tau);
        s.set("sample_dt", solver.sample_dt);
        s.set_usize("max_steps", solver.max_steps);
        if let Some(d) = data {
            if let Some(v) = &d.data {
                s.kv.set("data", v.clone());
            }
            s.set("amplitude", d.amplitude);
            s.set("center", d.center);
            s.set("width", d.width);
            s.set("tau0", d.tau0);
            s.set("a", d.a);
            s.set("b", d.b);
            s.set("kappa", d.kappa);
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: Option<f64>) {
        if let Some(v) = value {
            self.kv.set(key, format_f64(v));
        }
    }

    pub fn set_usize(&mut self, key: &str, value: Option<usize>) {
        if let Some(v) = value {
            self.kv.set(key, v.to_string());
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.kv.get_f64(key)?.unwrap_or(default))
    }

    /// Rejects keys outside the solver keys, the initial-data keys (when
    /// `with_data`) and `extra`.
    pub fn check(&self, with_data: bool, extra: &[&str]) -> Result<()> {
        let known = |k: &str| {
            SOLVER_KEYS.contains(&k) || (with_data && INITIAL_KEYS.contains(&k)) || extra.contains(&k)
        };
        let unknown: Vec<&str> = self.kv.keys().filter(|k| !known(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Usage(format!("unknown config keys: {}", unknown.join(", "))).into())
        }
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        self.solver_from(SolverConfig::default())
    }

    /// `base` overridden by the settings.
    pub fn solver_from(&self, base: SolverConfig) -> Result<SolverConfig> {
        let mut c = base;
        apply_solver_config(&mut c, &self.kv)?;
        Ok(c)
    }

    pub fn initial(&self) -> Result<InitialData> {
        Ok(initial_from_kv(&self.kv)?)
    }

    /// Everything needed to repeat the run.
    pub fn record(&self, config: &SolverConfig, data: Option<&InitialData>) -> KeyValues {
        let mut kv = cubicwave::io::solver_config_to_kv(config);
        if let Some(d) = data {
            kv.extend(&cubicwave::io::initial_to_kv(d));
        }
        for (k, v) in self.kv.iter() {
            if kv.get(k).is_none() {
                kv.set(k, v);
            }
        }
        kv
    }
}
