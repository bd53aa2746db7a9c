//! Binary checkpoints, diagnostics CSV, run manifests and key-value config files.
//!
//! Checkpoint layout (little-endian): `b"T2F1"`, `u32` version, `u32` N,
//! `f64` τ, `u8` twist flag, then `V, Q, ρ, l, π_V, π_Q` as N `f64` each.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::DiagnosticsRecord;
use crate::evolution::EvolutionConfig;
use crate::fields::{FieldState, FieldsError, PeriodicGrid};
use crate::initial_data::SamplerSpec;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"T2F1";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated or padded: expected {expected} bytes, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("invalid twist byte {0}")]
    BadTwist(u8),
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv: {0}")]
    CsvFormat(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("config: {0}")]
    Config(String),
}

fn file_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

pub fn checkpoint_bytes(state: &FieldState) -> Vec<u8> {
    let n = state.n_points();
    let mut out = Vec::with_capacity(HEADER_LEN + 6 * 8 * n);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&state.tau.to_le_bytes());
    out.push(u8::from(state.twist));
    for (_, arr) in state.arrays() {
        for x in arr {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<FieldState, IoError> {
    if bytes.len() < HEADER_LEN {
        return Err(IoError::BadLength {
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(IoError::BadMagic);
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(IoError::BadVersion(version));
    }
    let n = u32_at(8) as usize;
    let expected = HEADER_LEN + 6 * 8 * n;
    if bytes.len() != expected {
        return Err(IoError::BadLength {
            expected,
            got: bytes.len(),
        });
    }
    let tau = f64_at(12);
    let twist = match bytes[20] {
        0 => false,
        1 => true,
        b => return Err(IoError::BadTwist(b)),
    };
    let array = |k: usize| -> Vec<f64> {
        (0..n).map(|j| f64_at(HEADER_LEN + 8 * (k * n + j))).collect()
    };
    let grid = PeriodicGrid::new(n)?;
    Ok(FieldState::new(
        grid,
        tau,
        array(0),
        array(1),
        array(2),
        array(3),
        array(4),
        array(5),
        twist,
    )?)
}

pub fn write_checkpoint(path: &Path, state: &FieldState) -> Result<(), IoError> {
    fs::write(path, checkpoint_bytes(state)).map_err(file_err(path))
}

pub fn read_checkpoint(path: &Path) -> Result<FieldState, IoError> {
    let bytes = fs::read(path).map_err(file_err(path))?;
    checkpoint_from_bytes(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Formats a value with 17 significant digits.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

/// Streaming diagnostics CSV: a header row, then one row per record.
pub struct DiagnosticsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(sink: W) -> Result<Self, IoError> {
        let mut inner = csv::WriterBuilder::new().from_writer(sink);
        inner.write_record(DiagnosticsRecord::COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<(), IoError> {
        self.inner
            .write_record(rec.values().iter().map(|&x| format_value(x)))?;
        Ok(())
    }

    /// Flushes rows written so far and appends `# aborted at tau=...`.
    pub fn abort(mut self, tau: f64, reason: &str) -> Result<W, IoError> {
        self.inner.flush()?;
        let mut sink = self.into_sink()?;
        writeln!(sink, "# aborted at tau={} ({reason})", format_value(tau))?;
        sink.flush()?;
        Ok(sink)
    }

    pub fn finish(mut self) -> Result<W, IoError> {
        self.inner.flush()?;
        self.into_sink()
    }

    fn into_sink(self) -> Result<W, IoError> {
        self.inner
            .into_inner()
            .map_err(|e| IoError::Io(io::Error::other(e.to_string())))
    }
}

/// Column-oriented view of a diagnostics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Trailer comment, if the run was aborted.
    pub trailer: Option<String>,
}

impl DiagnosticsTable {
    pub fn from_records(records: &[DiagnosticsRecord]) -> Self {
        Self {
            columns: DiagnosticsRecord::COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: records.iter().map(|r| r.values().to_vec()).collect(),
            trailer: None,
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn records(&self) -> Result<Vec<DiagnosticsRecord>, IoError> {
        let idx: Vec<usize> = DiagnosticsRecord::COLUMNS
            .iter()
            .map(|name| {
                self.columns
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| IoError::CsvFormat(format!("missing column {name}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(self
            .rows
            .iter()
            .map(|r| {
                let mut v = [0.0; 25];
                for (slot, &k) in v.iter_mut().zip(&idx) {
                    *slot = r[k];
                }
                DiagnosticsRecord::from_values(&v)
            })
            .collect())
    }
}

pub fn parse_diagnostics(text: &str) -> Result<DiagnosticsTable, IoError> {
    let trailer = text
        .lines()
        .rev()
        .find(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim().to_string());
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| IoError::CsvFormat(format!("row {}: bad number `{f}`", i + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(DiagnosticsTable {
        columns,
        rows,
        trailer,
    })
}

pub fn read_diagnostics(path: &Path) -> Result<DiagnosticsTable, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    parse_diagnostics(&text)
}

/// Everything needed to regenerate a run from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub seed: u64,
    pub grid_n: usize,
    pub tau_start: f64,
    pub tau_end: Option<f64>,
    /// SHA-256 of the initial checkpoint bytes.
    pub initial_checksum: String,
    pub spec: SamplerSpec,
    pub evolution: Option<EvolutionConfig>,
}

impl RunManifest {
    pub fn new(spec: &SamplerSpec, initial: &FieldState) -> Self {
        Self {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: spec.seed,
            grid_n: initial.n_points(),
            tau_start: initial.tau,
            tau_end: None,
            initial_checksum: sha256_hex(&checkpoint_bytes(initial)),
            spec: spec.clone(),
            evolution: None,
        }
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Manifest(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Manifest(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        fs::write(path, self.to_toml()?).map_err(file_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::from_toml(&fs::read_to_string(path).map_err(file_err(path))?)
    }

    /// Checks that `state` is the initial state this manifest describes.
    pub fn verify_initial(&self, state: &FieldState) -> Result<(), IoError> {
        let got = sha256_hex(&checkpoint_bytes(state));
        if got != self.initial_checksum {
            return Err(IoError::Manifest(format!(
                "initial checksum mismatch: manifest {}, regenerated {got}",
                self.initial_checksum
            )));
        }
        Ok(())
    }
}

/// Flat key-value configuration (TOML syntax). Keys use the long flag names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| IoError::Config(e.to_string()))?;
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&fs::read_to_string(path).map_err(file_err(path))?)
    }

    fn get(&self, key: &str) -> Option<&toml::Value> {
        self.table
            .get(key)
            .or_else(|| self.table.get(&key.replace('-', "_")))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, IoError> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(IoError::Config(format!("{key}: expected a number, got {v}"))),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, IoError> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(IoError::Config(format!(
                "{key}: expected a non-negative integer, got {v}"
            ))),
        }
    }

    pub fn str(&self, key: &str) -> Result<Option<String>, IoError> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(IoError::Config(format!("{key}: expected a string, got {v}"))),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>, IoError> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(IoError::Config(format!("{key}: expected true/false, got {v}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{make_initial_data, SamplerMode};
    use proptest::prelude::*;

    fn sample() -> FieldState {
        let spec = SamplerSpec::new(SamplerMode::GenericRandom, 3);
        make_initial_data(&spec, &PeriodicGrid::new(64).unwrap()).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let s = sample();
        let bytes = checkpoint_bytes(&s);
        assert_eq!(bytes.len(), HEADER_LEN + 6 * 8 * 64);
        assert_eq!(&bytes[..4], b"T2F1");
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(checkpoint_bytes(&back), bytes);
        assert_eq!(back, s);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let bytes = checkpoint_bytes(&sample());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(checkpoint_from_bytes(&bad), Err(IoError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(checkpoint_from_bytes(&bad), Err(IoError::BadVersion(9))));
        assert!(matches!(
            checkpoint_from_bytes(&bytes[..bytes.len() - 1]),
            Err(IoError::BadLength { .. })
        ));
        let mut bad = bytes;
        bad[20] = 7;
        assert!(matches!(checkpoint_from_bytes(&bad), Err(IoError::BadTwist(7))));
    }

    #[test]
    fn csv_round_trip_and_trailer() {
        let rec = crate::diagnostics::record(&sample(), 0.0);
        let mut w = DiagnosticsWriter::new(Vec::new()).unwrap();
        w.write(&rec).unwrap();
        w.write(&rec).unwrap();
        let bytes = w.abort(1.25, "range").unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("tau,A,B,E,Pi,Y,Lambda,H,c,d,Omega,F,Ftilde,S,T,EV,EQ,W,constraint_residual,rho_min,el_wmean,j_wmean,v_mean"));
        assert!(text.lines().last().unwrap().starts_with("# aborted at tau=1.2500000000000000e0"));
        let table = parse_diagnostics(&text).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.records().unwrap()[1], rec);
        assert!(table.trailer.as_deref().unwrap().starts_with("aborted"));
        assert_eq!(table.column("B").unwrap()[0], rec.b_const);
    }

    #[test]
    fn manifest_round_trip() {
        let spec = SamplerSpec::new(SamplerMode::NearAttractor, 11);
        let s = sample();
        let mut m = RunManifest::new(&spec, &s);
        m.evolution = Some(EvolutionConfig::default());
        m.tau_end = Some(12.0);
        let back = RunManifest::from_toml(&m.to_toml().unwrap()).unwrap();
        assert_eq!(back, m);
        back.verify_initial(&s).unwrap();
        assert!(back.verify_initial(&sample_other()).is_err());
    }

    fn sample_other() -> FieldState {
        let spec = SamplerSpec::new(SamplerMode::GenericRandom, 4);
        make_initial_data(&spec, &PeriodicGrid::new(64).unwrap()).unwrap()
    }

    #[test]
    fn config_file_values() {
        let c = ConfigFile::parse("mode = \"b0\"\nseed = 7\nrho0 = 1\ntarget_b = 0.25\nfilter = true\n").unwrap();
        assert_eq!(c.str("mode").unwrap().as_deref(), Some("b0"));
        assert_eq!(c.u64("seed").unwrap(), Some(7));
        assert_eq!(c.f64("rho0").unwrap(), Some(1.0));
        assert_eq!(c.f64("target-b").unwrap(), Some(0.25));
        assert_eq!(c.bool("filter").unwrap(), Some(true));
        assert!(c.u64("mode").is_err());
        assert_eq!(c.f64("absent").unwrap(), None);
    }

    proptest! {
        #[test]
        fn formatted_values_parse_back_exactly(x in proptest::num::f64::ANY) {
            let s = format_value(x);
            let y: f64 = s.parse().unwrap();
            prop_assert!(y == x || (x.is_nan() && y.is_nan()));
        }
    }
}
