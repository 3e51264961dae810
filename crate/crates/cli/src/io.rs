//! File formats. Floats are written with 17 significant digits so every
//! value round-trips exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sqm_core::retrodiction::TransferMap;
use sqm_core::{MeasurementRecord, Trajectory};

use crate::config::{ChannelConfig, Config, UNITS};
use crate::error::CliError;

pub fn f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Files written by one run. On failure they are removed again so that no
/// partial output is left behind.
#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(RunOutput { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn register(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        R: IntoIterator<Item = String>,
        I: IntoIterator<Item = R>,
    {
        let path = self.register(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.register(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn record(&mut self, stem: &str, record: &MeasurementRecord) -> Result<(), CliError> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=record.channels.len()).map(|i| format!("V{i}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..record.len()).map(|k| {
            let mut row = vec![f(k as f64 * record.dt)];
            row.extend(record.samples.iter().map(|s| f(s[k])));
            row
        });
        self.csv(&format!("{stem}.csv"), &header, rows)?;
        self.json(&format!("{stem}.json"), &RecordSidecar::from_record(record))
    }

    pub fn trajectory(&mut self, name: &str, traj: &Trajectory) -> Result<(), CliError> {
        let rows = traj.times().zip(&traj.states).map(|(t, s)| {
            let b = s.bloch();
            vec![f(t), f(b.x), f(b.y), f(b.z)]
        });
        self.csv(name, &["t", "x", "y", "z"], rows)
    }

    pub fn maps(&mut self, name: &str, maps: &[TransferMap]) -> Result<(), CliError> {
        let mut header: Vec<String> = (0..4).flat_map(|i| (0..4).map(move |j| format!("m{i}{j}"))).collect();
        header.push("log_scale".into());
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        self.csv(name, &header, maps.iter().map(|m| m.to_row().map(f)))
    }

    /// Write the manifest; the run is complete.
    pub fn finish(mut self, command: &str, config: &Config, summary: Value) -> Result<(), CliError> {
        let outputs: Vec<String> = self
            .written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": sqm_core::VERSION,
            "units": UNITS,
            "seed": config.seed,
            "workers": rayon::current_num_threads(),
            "config": config,
            "outputs": outputs,
            "summary": summary,
            "complete": true,
        });
        self.json("manifest.json", &manifest)?;
        self.written.clear();
        Ok(())
    }

    /// Remove everything written so far.
    pub fn abort(mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }
}

/// JSON sidecar of a record CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSidecar {
    pub dt: f64,
    pub channels: Vec<ChannelConfig>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub units: String,
}

impl RecordSidecar {
    pub fn from_record(r: &MeasurementRecord) -> Self {
        RecordSidecar {
            dt: r.dt,
            channels: r.channels.iter().map(ChannelConfig::from_channel).collect(),
            seed: r.seed,
            units: UNITS.into(),
        }
    }
}

fn input_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Input { path: path.display().to_string(), message: message.into() }
}

fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| input_err(path, format!("row {}: {e}", line + 1)))?;
        if row.len() != header.len() {
            return Err(input_err(path, format!("row {} has {} fields", line + 1, row.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Read a record CSV and the sidecar next to it.
pub fn read_record(csv_path: &Path) -> Result<MeasurementRecord, CliError> {
    let side_path = csv_path.with_extension("json");
    let side: RecordSidecar = serde_json::from_str(
        &fs::read_to_string(&side_path).map_err(|e| input_err(&side_path, e.to_string()))?,
    )
    .map_err(|e| input_err(&side_path, e.to_string()))?;
    let (header, rows) = read_numeric_csv(csv_path)?;
    let n = side.channels.len();
    let expected: Vec<String> =
        std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("V{i}"))).collect();
    if header != expected {
        return Err(input_err(csv_path, format!("header {header:?}, expected {expected:?}")));
    }
    let channels = side.channels.iter().map(ChannelConfig::to_channel).collect::<Result<Vec<_>, _>>()?;
    let samples = (0..n).map(|c| rows.iter().map(|r| r[c + 1]).collect()).collect();
    let record = MeasurementRecord { dt: side.dt, channels, samples, seed: side.seed };
    record.validate()?;
    Ok(record)
}

pub fn read_maps(path: &Path) -> Result<Vec<TransferMap>, CliError> {
    let (header, rows) = read_numeric_csv(path)?;
    if header.len() != 17 {
        return Err(input_err(path, format!("{} columns, expected 17", header.len())));
    }
    Ok(rows.iter().map(|r| TransferMap::from_row(r)).collect::<Result<Vec<_>, _>>()?)
}
