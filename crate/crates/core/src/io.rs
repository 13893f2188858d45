//! Plain-text persistence.
//!
//! Tables are CSV preceded by `# key=value` metadata lines and one column
//! header line. Numbers are written as the shortest decimal that parses back
//! to the same `f64`, so `read(write(x)) == x` bit for bit. Configuration is
//! flat `key = value` text.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::TimeSeries;
use crate::error::{Error, Result};
use crate::hyperboloidal::{BlowupInfo, InitialData, Run, SolverConfig, Snapshot};

/// Shortest round-trip decimal; scientific notation outside `[1e-5, 1e16)`.
pub fn format_f64(x: f64) -> String {
    let m = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&m) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

fn check_token(what: &str, s: &str, forbidden: &[char]) -> Result<()> {
    if s.is_empty() || s.trim() != s || s.contains(['\n', '\r']) || s.contains(forbidden) {
        return Err(Error::Config(format!("{what} {s:?} cannot be stored")));
    }
    Ok(())
}

/// Ordered flat key-value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(Vec<(String, String)>);

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse { line: n + 1, message: "empty key".into() });
            }
            kv.set(k, v.trim());
        }
        Ok(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        for (k, v) in &self.0 {
            check_token("key", k, &['=', '#'])?;
            check_token("value", v, &[]).or_else(|e| if v.is_empty() { Ok(()) } else { Err(e) })?;
        }
        fs::write(path, self.to_string())?;
        Ok(())
    }

    /// Inserts or replaces, keeping the first position of the key.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key.to_string(), value)),
        }
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set(key, format_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| parse_f64(v).ok_or_else(|| Error::Config(format!("{key} = {v:?} is not a number"))))
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key} = {v:?} is not a non-negative integer")))
            })
            .transpose()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn extend(&mut self, other: &KeyValues) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Numeric table with metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: KeyValues,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            meta: KeyValues::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Config(format!(
                "row has {} entries, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for (k, v) in self.meta.iter() {
            check_token("metadata key", k, &['='])?;
            if v.contains(['\n', '\r']) {
                return Err(Error::Config(format!("metadata value for {k} spans lines")));
            }
            writeln!(w, "# {k}={v}")?;
        }
        for c in &self.columns {
            check_token("column name", c, &[','])?;
        }
        writeln!(w, "{}", self.columns.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (j, x) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format_f64(*x));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut table = Table::default();
        let mut header = false;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let parse_err = |message: String| Error::Parse { line: n + 1, message };
            if !header {
                if let Some(rest) = line.strip_prefix('#') {
                    let (k, v) = rest
                        .trim_start()
                        .split_once('=')
                        .ok_or_else(|| parse_err(format!("bad metadata line {line:?}")))?;
                    table.meta.set(k, v);
                    continue;
                }
                table.columns = line.split(',').map(str::to_string).collect();
                header = true;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| parse_f64(f).ok_or_else(|| parse_err(format!("bad number {f:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != table.columns.len() {
                return Err(parse_err(format!("{} fields, expected {}", row.len(), table.columns.len())));
            }
            table.rows.push(row);
        }
        if !header {
            return Err(Error::Parse { line: 0, message: "missing column header".into() });
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }
}

/// Series sharing one time axis as a table `tau, label1, label2, ...`.
pub fn series_table(series: &[TimeSeries]) -> Result<Table> {
    let times = series.first().map(|s| s.times.clone()).unwrap_or_default();
    if series.iter().any(|s| s.times != times) {
        return Err(Error::Config("series in one table must share their times".into()));
    }
    let mut t = Table::new(std::iter::once("tau".to_string()).chain(series.iter().map(|s| s.label.clone())));
    for (i, &tau) in times.iter().enumerate() {
        t.push_row(std::iter::once(tau).chain(series.iter().map(|s| s.values[i])).collect())?;
    }
    Ok(t)
}

pub fn write_series(path: impl AsRef<Path>, meta: &KeyValues, series: &[TimeSeries]) -> Result<()> {
    let mut t = series_table(series)?;
    t.meta = meta.clone();
    t.save(path)
}

pub fn read_series(path: impl AsRef<Path>) -> Result<(KeyValues, Vec<TimeSeries>)> {
    let t = Table::load(path)?;
    if t.columns.first().map(String::as_str) != Some("tau") {
        return Err(Error::Parse { line: 0, message: "first column must be tau".into() });
    }
    let times = t.column("tau").unwrap_or_default();
    let series = (1..t.columns.len())
        .map(|j| TimeSeries::new(t.columns[j].clone(), times.clone(), t.rows.iter().map(|r| r[j]).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok((t.meta, series))
}

/// Profiles as a table `rho, tau=<t1>, tau=<t2>, ...`.
pub fn snapshot_table(rho: &[f64], snapshots: &[Snapshot]) -> Result<Table> {
    if snapshots.iter().any(|s| s.phi.len() != rho.len()) {
        return Err(Error::Config("snapshot length differs from the grid".into()));
    }
    let mut t = Table::new(
        std::iter::once("rho".to_string()).chain(snapshots.iter().map(|s| format!("tau={}", format_f64(s.tau)))),
    );
    for (i, &r) in rho.iter().enumerate() {
        t.push_row(std::iter::once(r).chain(snapshots.iter().map(|s| s.phi[i])).collect())?;
    }
    Ok(t)
}

pub fn read_snapshot_table(table: &Table) -> Result<(Vec<f64>, Vec<Snapshot>)> {
    let rho = table
        .column("rho")
        .ok_or_else(|| Error::Parse { line: 0, message: "no rho column".into() })?;
    let snaps = table.columns[1..]
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let tau = c
                .strip_prefix("tau=")
                .and_then(parse_f64)
                .ok_or_else(|| Error::Parse { line: 0, message: format!("bad snapshot column {c:?}") })?;
            Ok(Snapshot {
                tau,
                phi: table.rows.iter().map(|r| r[j + 1]).collect(),
                adaptive: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rho, snaps))
}

pub fn solver_config_to_kv(c: &SolverConfig) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("cells", c.n_cells.to_string());
    kv.set_f64("courant", c.courant);
    kv.set_f64("dissipation", c.dissipation);
    kv.set_f64("constraint_damping", c.constraint_damping);
    kv.set_f64("blowup_threshold", c.blowup_threshold);
    kv.set_f64("adapt_scale", c.adapt_scale);
    kv.set_f64("dt_shrink", c.dt_shrink);
    kv.set_f64("max_tau", c.max_tau);
    kv.set_f64("sample_dt", c.sample_dt);
    kv.set("max_steps", c.max_steps.to_string());
    kv
}

/// Overrides the fields named in `kv`; other keys are left for the caller.
pub fn apply_solver_config(c: &mut SolverConfig, kv: &KeyValues) -> Result<()> {
    if let Some(v) = kv.get_usize("cells")? {
        c.n_cells = v;
    }
    if let Some(v) = kv.get_usize("max_steps")? {
        c.max_steps = v;
    }
    for (key, slot) in [
        ("courant", &mut c.courant),
        ("dissipation", &mut c.dissipation),
        ("constraint_damping", &mut c.constraint_damping),
        ("blowup_threshold", &mut c.blowup_threshold),
        ("adapt_scale", &mut c.adapt_scale),
        ("dt_shrink", &mut c.dt_shrink),
        ("max_tau", &mut c.max_tau),
        ("sample_dt", &mut c.sample_dt),
    ] {
        if let Some(v) = kv.get_f64(key)? {
            *slot = v;
        }
    }
    c.validate()
}

pub const SOLVER_KEYS: [&str; 10] = [
    "cells",
    "courant",
    "dissipation",
    "constraint_damping",
    "blowup_threshold",
    "adapt_scale",
    "dt_shrink",
    "max_tau",
    "sample_dt",
    "max_steps",
];

pub const INITIAL_KEYS: [&str; 8] = ["data", "amplitude", "center", "width", "tau0", "a", "b", "kappa"];

pub fn initial_to_kv(d: &InitialData) -> KeyValues {
    let mut kv = KeyValues::new();
    match *d {
        InitialData::Gaussian { amplitude, center, width } => {
            kv.set("data", "gaussian");
            kv.set_f64("amplitude", amplitude);
            kv.set_f64("center", center);
            kv.set_f64("width", width);
        }
        InitialData::Conformal { tau0 } => {
            kv.set("data", "conformal");
            kv.set_f64("tau0", tau0);
        }
        InitialData::Attractor { a, b, kappa, tau0 } => {
            kv.set("data", "attractor");
            kv.set_f64("a", a);
            kv.set_f64("b", b);
            kv.set_f64("kappa", kappa);
            kv.set_f64("tau0", tau0);
        }
    }
    kv
}

/// Initial data from `data = gaussian | conformal | attractor` and its
/// parameters; Gaussian center and width default to 0.3 and 0.07.
pub fn initial_from_kv(kv: &KeyValues) -> Result<InitialData> {
    let need = |k: &str| kv.get_f64(k)?.ok_or_else(|| Error::Config(format!("missing {k}")));
    match kv.get("data").unwrap_or("gaussian") {
        "gaussian" => Ok(InitialData::Gaussian {
            amplitude: need("amplitude")?,
            center: kv.get_f64("center")?.unwrap_or(0.3),
            width: kv.get_f64("width")?.unwrap_or(0.07),
        }),
        "conformal" => Ok(InitialData::Conformal { tau0: kv.get_f64("tau0")?.unwrap_or(0.0) }),
        "attractor" => Ok(InitialData::Attractor {
            a: need("a")?,
            b: need("b")?,
            kappa: kv.get_f64("kappa")?.unwrap_or(1.0),
            tau0: kv.get_f64("tau0")?.unwrap_or(0.0),
        }),
        other => Err(Error::Config(format!("unknown initial data {other:?}"))),
    }
}

/// Configuration, outputs and diagnostics of one evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Solver and initial-data settings, enough to re-run.
    pub config: KeyValues,
    pub initial: String,
    /// Sampled observables on one time axis.
    pub series: Vec<TimeSeries>,
    pub rho: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub blowup: BlowupInfo,
    pub status: String,
    /// Fit outputs, if any were requested.
    pub fits: KeyValues,
    pub provenance: KeyValues,
    /// Set when the pipeline failed; partial outputs are still written.
    pub failure: Option<String>,
}

fn nearest(rho: &[f64], r: f64) -> usize {
    rho.iter()
        .enumerate()
        .min_by(|x, y| (x.1 - r).abs().total_cmp(&(y.1 - r).abs()))
        .map_or(0, |(i, _)| i)
}

impl RunRecord {
    /// Record of `run` with `Phi` sampled at the grid points nearest to
    /// `sample_rho` and profiles at the recorded times nearest to
    /// `snapshot_taus`.
    pub fn from_run(run: &Run, sample_rho: &[f64], snapshot_taus: &[f64]) -> Result<Self> {
        let rho = run.grid.rho().to_vec();
        let times: Vec<f64> = run.snapshots.iter().map(|s| s.tau).collect();
        let mut series = vec![TimeSeries::new(
            "adaptive",
            times.clone(),
            run.snapshots.iter().map(|s| f64::from(u8::from(s.adaptive))).collect(),
        )?];
        for &r in sample_rho {
            let i = nearest(&rho, r);
            series.push(TimeSeries::new(
                format!("phi_rho={}", format_f64(rho[i])),
                times.clone(),
                run.snapshots.iter().map(|s| s.phi[i]).collect(),
            )?);
        }
        let mut snapshots: Vec<Snapshot> = Vec::new();
        for &t in snapshot_taus {
            if let Some(s) = run.snapshots.iter().min_by(|x, y| (x.tau - t).abs().total_cmp(&(y.tau - t).abs())) {
                if snapshots.last().map_or(true, |l| l.tau < s.tau) {
                    snapshots.push(s.clone());
                }
            }
        }
        let mut config = solver_config_to_kv(&run.config);
        if let Some(d) = &run.initial {
            config.extend(&initial_to_kv(d));
        }
        let mut provenance = KeyValues::new();
        provenance.set("code_version", env!("CARGO_PKG_VERSION"));
        provenance.set("steps", run.steps.to_string());
        provenance.set_f64("wall_seconds", run.wall_seconds);
        Ok(RunRecord {
            config,
            initial: run.initial.as_ref().map_or_else(|| "custom".to_string(), |d| d.to_string()),
            series,
            rho,
            snapshots,
            blowup: run.blowup.clone(),
            status: run.status.to_string(),
            fits: KeyValues::new(),
            provenance,
            failure: None,
        })
    }

    /// Record of a pipeline that failed before producing a run.
    pub fn failed(config: KeyValues, initial: impl Into<String>, reason: impl Into<String>) -> Self {
        RunRecord {
            config,
            initial: initial.into(),
            series: Vec::new(),
            rho: Vec::new(),
            snapshots: Vec::new(),
            blowup: BlowupInfo::none(),
            status: "failed".into(),
            fits: KeyValues::new(),
            provenance: KeyValues::new(),
            failure: Some(reason.into()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    fn manifest(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("status", if self.is_failed() { "FAILED" } else { self.status.as_str() });
        if let Some(f) = &self.failure {
            kv.set("failure", f.replace(['\n', '\r'], " "));
        }
        kv.set("initial", self.initial.clone());
        for (k, v) in self.config.iter() {
            kv.set(&format!("config.{k}"), v);
        }
        kv.set("blowup.detected", self.blowup.detected.to_string());
        kv.set_f64("blowup.tau", self.blowup.tau_estimate);
        kv.set("blowup.index", self.blowup.location_index.to_string());
        kv.set_f64("blowup.rho", self.blowup.location_rho);
        kv.set("blowup.low_confidence", self.blowup.low_confidence.to_string());
        for (k, v) in self.fits.iter() {
            kv.set(&format!("fit.{k}"), v);
        }
        for (k, v) in self.provenance.iter() {
            kv.set(&format!("provenance.{k}"), v);
        }
        kv
    }

    /// Writes `<stem>.manifest`, `<stem>.series.csv`, `<stem>.snapshots.csv`
    /// and, for a failed record, an empty-bodied `<stem>.FAILED` marker.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        let mut files = Vec::new();

        let path = dir.join(format!("{stem}.manifest"));
        manifest.save(&path)?;
        files.push(path);

        let mut meta = KeyValues::new();
        meta.set("initial", self.initial.clone());
        meta.set("status", manifest.get("status").unwrap_or_default());
        let path = dir.join(format!("{stem}.series.csv"));
        write_series(&path, &meta, &self.series)?;
        files.push(path);

        let mut t = snapshot_table(&self.rho, &self.snapshots)?;
        t.meta = meta;
        let path = dir.join(format!("{stem}.snapshots.csv"));
        t.save(&path)?;
        files.push(path);

        let marker = dir.join(format!("{stem}.FAILED"));
        if let Some(f) = &self.failure {
            fs::write(&marker, format!("{f}\n"))?;
            files.push(marker);
        } else if marker.exists() {
            fs::remove_file(&marker)?;
        }
        Ok(files)
    }

    pub fn read(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = KeyValues::load(dir.join(format!("{stem}.manifest")))?;
        let (_, series) = read_series(dir.join(format!("{stem}.series.csv")))?;
        let (rho, mut snapshots) = read_snapshot_table(&Table::load(dir.join(format!("{stem}.snapshots.csv")))?)?;
        // the profile table has no room for the flag; the series carries it
        if let Some(flags) = series.iter().find(|s| s.label == "adaptive") {
            for snap in &mut snapshots {
                snap.adaptive = flags.iter().any(|(t, v)| t == snap.tau && v == 1.0);
            }
        }
        let section = |prefix: &str| {
            let mut kv = KeyValues::new();
            for (k, v) in manifest.iter() {
                if let Some(rest) = k.strip_prefix(prefix) {
                    kv.set(rest, v);
                }
            }
            kv
        };
        let flag = |k: &str| manifest.get(k) == Some("true");
        let num = |k: &str| manifest.get_f64(k).map(|v| v.unwrap_or(f64::NAN));
        let failure = manifest.get("failure").map(str::to_string);
        Ok(RunRecord {
            config: section("config."),
            initial: manifest.get("initial").unwrap_or_default().to_string(),
            series,
            rho,
            snapshots,
            blowup: BlowupInfo {
                detected: flag("blowup.detected"),
                tau_estimate: num("blowup.tau")?,
                location_index: manifest.get_usize("blowup.index")?.unwrap_or(0),
                location_rho: num("blowup.rho")?,
                low_confidence: flag("blowup.low_confidence"),
            },
            status: if failure.is_some() {
                "failed".into()
            } else {
                manifest.get("status").unwrap_or_default().to_string()
            },
            fits: section("fit."),
            provenance: section("provenance."),
            failure,
        })
    }
}
