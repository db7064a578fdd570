//! Artifact writers. Every numeric file starts with a provenance block
//! (config hash, build id, seed) and lists column units; every file is
//! written through a temporary file and renamed into place.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use boussinesq_core::grid::{Grid, ScalarField, VectorField2};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::LabError;

pub const BUILD_ID: &str = env!("BOUSSINESQ_BUILD_ID");

/// A CSV column: name and physical unit (`1` for dimensionless).
#[derive(Debug, Clone, Copy)]
pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
}

pub const fn col(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub build: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<FileEntry>,
}

/// Output directory plus the provenance stamped on every artifact.
#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    command: String,
    config_hash: String,
    seed: u64,
    started: f64,
    files: Vec<FileEntry>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| LabError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| LabError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| LabError::io(path, e))?;
    tmp.persist(path).map_err(|e| LabError::io(path, e.error))?;
    Ok(())
}

/// Shortest round-trip representation; identical values give identical text.
/// Negative zero prints as zero.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0e0".into()
    } else if x.is_finite() {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

impl RunOutput {
    pub fn create(dir: &Path, command: &str, config_hash: &str, seed: u64) -> Result<Self, LabError> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        Ok(RunOutput {
            dir: dir.to_path_buf(),
            command: command.into(),
            config_hash: config_hash.into(),
            seed,
            started: now(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    fn provenance(&self) -> String {
        format!(
            "config_hash={} build={} seed={} command={}",
            self.config_hash, BUILD_ID, self.seed, self.command
        )
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, LabError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// CSV with a `#` provenance block and a `# units:` line ahead of the
    /// header row.
    pub fn write_csv<I>(&mut self, name: &str, columns: &[Column], rows: I) -> Result<PathBuf, LabError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut buf = Vec::new();
        writeln!(buf, "# {}", self.provenance()).expect("write to memory");
        let units: Vec<String> = columns.iter().map(|c| format!("{}[{}]", c.name, c.unit)).collect();
        writeln!(buf, "# units: {}", units.join(" ")).expect("write to memory");
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(columns.iter().map(|c| c.name)).map_err(csv_err)?;
            for r in rows {
                w.write_record(&r).map_err(csv_err)?;
            }
            w.flush().map_err(|e| LabError::io(Path::new(name), e))?;
        }
        self.write_bytes(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, LabError> {
        let mut v = serde_json::to_value(value).expect("summary serializes");
        if let serde_json::Value::Object(m) = &mut v {
            m.insert(
                "provenance".into(),
                serde_json::json!({
                    "config_hash": self.config_hash,
                    "build": BUILD_ID,
                    "seed": self.seed,
                    "command": self.command,
                }),
            );
        }
        let mut text = serde_json::to_string_pretty(&v).expect("summary serializes");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Cell values as `(i, j, x, y, value)` rows.
    pub fn write_field_csv(&mut self, name: &str, grid: &Grid, field: &ScalarField, unit: &'static str) -> Result<PathBuf, LabError> {
        let rows = (0..grid.ny()).flat_map(|j| {
            (0..grid.nx()).map(move |i| {
                let (x, y) = grid.cell_center(i, j);
                vec![i.to_string(), j.to_string(), num(x), num(y), num(field.get(i, j))]
            })
        });
        let cols = [col("i", "1"), col("j", "1"), col("x", "m"), col("y", "m"), col("value", unit)];
        self.write_csv(name, &cols, rows.collect::<Vec<_>>())
    }

    /// Legacy VTK structured points with cell data: temperature and the
    /// velocity averaged to cell centres.
    pub fn write_vtk(&mut self, name: &str, grid: &Grid, u: &VectorField2, theta: &ScalarField, time: f64) -> Result<PathBuf, LabError> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0");
        let _ = writeln!(s, "{} t={}", self.provenance(), num(time));
        let _ = writeln!(s, "ASCII\nDATASET STRUCTURED_POINTS");
        let _ = writeln!(s, "DIMENSIONS {} {} 1", nx + 1, ny + 1);
        let _ = writeln!(s, "ORIGIN 0 0 0");
        let _ = writeln!(s, "SPACING {} {} 1", num(grid.hx()), num(grid.hy()));
        let _ = writeln!(s, "CELL_DATA {}", nx * ny);
        let _ = writeln!(s, "SCALARS theta double 1\nLOOKUP_TABLE default");
        for j in 0..ny {
            for i in 0..nx {
                let _ = writeln!(s, "{}", num(theta.get(i, j)));
            }
        }
        let _ = writeln!(s, "VECTORS u double");
        for j in 0..ny {
            for i in 0..nx {
                let ux = 0.5 * (u.x_at(i, j) + u.x_at(i + 1, j));
                let uy = 0.5 * (u.y_at(i, j) + u.y_at(i, j + 1));
                let _ = writeln!(s, "{} {} 0", num(ux), num(uy));
            }
        }
        self.write_bytes(name, s.as_bytes())
    }

    /// Writes `manifest.json` last; it lists every other file.
    pub fn finish(self) -> Result<RunManifest, LabError> {
        let manifest = RunManifest {
            command: self.command,
            config_hash: self.config_hash,
            build: BUILD_ID.into(),
            seed: self.seed,
            started_unix: self.started,
            finished_unix: now(),
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.dir.join("manifest.json"), text.as_bytes())?;
        Ok(manifest)
    }
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io {
        path: PathBuf::from("csv"),
        source: std::io::Error::other(e.to_string()),
    }
}
