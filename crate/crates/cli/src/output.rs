//! Output files and the run manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pathcopula::io::{fmt_f64, write_numeric_csv};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Format;
use crate::error::CliError;

/// Pretty JSON whose floats carry 17 significant digits.
struct FloatFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for FloatFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FloatFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    out.push(b'\n');
    out
}

/// A numeric table: CSV with a header row, or JSON `{columns, rows}`.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>, rows: Vec<Vec<f64>>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows }
    }

    /// Paths as rows, grid times as the header.
    pub fn paths(times: &[f64], paths: &pathcopula::PathArray) -> Self {
        Self::new(times.iter().map(|t| fmt_f64(*t)), paths.rows().map(<[f64]>::to_vec).collect())
    }

    fn encode(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => {
                let mut out = Vec::new();
                write_numeric_csv(&mut out, &self.columns, self.rows.iter().cloned())?;
                Ok(out)
            }
            Format::Json => {
                #[derive(Serialize)]
                struct Doc<'a> {
                    columns: &'a [String],
                    rows: &'a [Vec<f64>],
                }
                Ok(to_json(&Doc { columns: &self.columns, rows: &self.rows }))
            }
        }
    }
}

#[derive(Serialize)]
struct OutputFile {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Versions {
    pathcopula: &'static str,
    #[serde(rename = "pathcopula-cli")]
    cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_echo: &'a Value,
    seed: u64,
    versions: Versions,
    output_files: Vec<OutputFile>,
    #[serde(flatten)]
    extra: serde_json::Map<String, Value>,
}

/// Collects outputs of one command under `dir`.
pub struct Outputs {
    dir: PathBuf,
    format: Format,
    inputs: Vec<PathBuf>,
    files: Vec<OutputFile>,
    extra: serde_json::Map<String, Value>,
}

impl Outputs {
    /// The directory is created on the first write, so a rejected config
    /// leaves nothing behind.
    pub fn new(dir: &Path, format: Format, inputs: Vec<PathBuf>) -> Self {
        let inputs = inputs.iter().filter_map(|p| fs::canonicalize(p).ok()).collect();
        Self { dir: dir.to_path_buf(), format, inputs, files: Vec::new(), extra: Default::default() }
    }

    fn write(&mut self, name: String, bytes: &[u8]) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::Io(format!("{}: {e}", self.dir.display())))?;
        let path = self.dir.join(&name);
        if let Ok(existing) = fs::canonicalize(&path) {
            if self.inputs.contains(&existing) {
                return Err(CliError::Io(format!("refusing to overwrite input file {}", path.display())));
            }
        }
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(OutputFile { name, sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    /// Writes `stem.csv` or `stem.json` depending on the format.
    pub fn table(&mut self, stem: &str, table: &Table) -> Result<(), CliError> {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        let bytes = table.encode(self.format)?;
        self.write(format!("{stem}.{ext}"), &bytes)
    }

    pub fn report<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<(), CliError> {
        self.write(format!("{stem}.json"), &to_json(value))
    }

    /// Extra manifest entry.
    pub fn note<T: Serialize>(&mut self, key: &str, value: &T) {
        let value = serde_json::to_value(value).expect("manifest entries serialize");
        self.extra.insert(key.to_string(), value);
    }

    pub fn finish(self, command: &str, config_echo: &Value, seed: u64) -> Result<(), CliError> {
        let manifest = Manifest {
            command,
            config_echo,
            seed,
            versions: Versions { pathcopula: pathcopula::VERSION, cli: env!("CARGO_PKG_VERSION") },
            output_files: self.files,
            extra: self.extra,
        };
        fs::create_dir_all(&self.dir).map_err(|e| CliError::Io(format!("{}: {e}", self.dir.display())))?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, to_json(&manifest)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
