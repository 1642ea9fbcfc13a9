//! Output files: CSV formatting, collision-free file stems and the run
//! manifest.
//!
//! A run named `ber` writes `ber.csv`, `ber.svg` and `ber.manifest.json`.
//! If any of those exist the run becomes `ber-1`, then `ber-2`, and so on.
//! Files are written to a temporary name and renamed into place.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::plot::LinePlot;

pub const MANIFEST_EXT: &str = "manifest.json";

/// Formats a float for CSV: plain decimal for moderate magnitudes, exponent
/// form otherwise. Both forms parse back to the same value.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Builds a CSV document with LF terminators.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut text = String::with_capacity(4096);
        text.push_str(header);
        text.push('\n');
        Self { text }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(',');
            }
            self.text.push_str(c.as_ref());
            first = false;
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub enum ArtifactBody {
    Text(String),
    Plot(LinePlot),
}

/// One file of a run, identified by its extension.
pub struct Artifact {
    pub ext: &'static str,
    pub body: ArtifactBody,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub master_seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub config: C,
    pub outputs: Vec<String>,
}

/// Paths written by one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutputs {
    pub manifest: PathBuf,
    pub files: Vec<PathBuf>,
}

fn file_name(stem: &str, n: u32, ext: &str) -> String {
    if n == 0 {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}-{n}.{ext}")
    }
}

/// Claims the first free numbered stem by creating its manifest file
/// exclusively. Returns the suffix number.
fn reserve(dir: &Path, stem: &str, exts: &[&str]) -> io::Result<u32> {
    for n in 0..u32::MAX {
        let taken = exts.iter().any(|e| dir.join(file_name(stem, n, e)).exists());
        if taken {
            continue;
        }
        match OpenOptions::new().write(true).create_new(true).open(dir.join(file_name(stem, n, MANIFEST_EXT))) {
            Ok(_) => return Ok(n),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    Err(io::Error::other("no free output name"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

/// Writes the artifacts and their manifest under `dir`. The manifest is
/// built by `manifest` from the final output file names. On failure every
/// file of this run is removed again.
pub fn write_run<C, F>(dir: &Path, stem: &str, artifacts: Vec<Artifact>, manifest: F) -> io::Result<RunOutputs>
where
    C: Serialize,
    F: FnOnce(Vec<String>) -> RunManifest<C>,
{
    fs::create_dir_all(dir)?;
    let mut exts: Vec<&str> = artifacts.iter().map(|a| a.ext).collect();
    exts.push(MANIFEST_EXT);
    let n = reserve(dir, stem, &exts)?;
    let manifest_name = file_name(stem, n, MANIFEST_EXT);
    let manifest_path = dir.join(&manifest_name);
    let names: Vec<String> = artifacts.iter().map(|a| file_name(stem, n, a.ext)).collect();

    let mut written = vec![manifest_path.clone()];
    let res = (|| {
        for (a, name) in artifacts.into_iter().zip(&names) {
            let body = match a.body {
                ArtifactBody::Text(t) => t,
                ArtifactBody::Plot(p) => p.render(&manifest_name),
            };
            let path = dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            written.push(path);
        }
        let m = manifest(names.clone());
        let mut json = serde_json::to_string_pretty(&m).map_err(io::Error::other)?;
        json.push('\n');
        write_atomic(&manifest_path, json.as_bytes())
    })();
    if let Err(e) = res {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    Ok(RunOutputs { manifest: manifest_path, files: names.iter().map(|n| dir.join(n)).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(outputs: Vec<String>) -> RunManifest<()> {
        RunManifest {
            tool: "ambc",
            version: "0",
            command: "t".into(),
            master_seed: 0,
            started_at: String::new(),
            finished_at: String::new(),
            config: (),
            outputs,
        }
    }

    #[test]
    fn float_format_roundtrips() {
        for v in [0.0, 1.0, -2.5, 0.1, 1e-4, 3.2e-6, 1e-300, 123456.789, 1e20, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            assert!(s.len() < 30, "{s}");
        }
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_f64(2.5e-7), "2.5e-7");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn csv_rows() {
        let mut c = Csv::new("a,b");
        c.row(["1", "2"]);
        c.row(vec![String::from("3"), String::new()]);
        assert_eq!(c.into_string(), "a,b\n1,2\n3,\n");
    }

    #[test]
    fn reruns_get_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        let mk = || vec![Artifact { ext: "csv", body: ArtifactBody::Text("x\n".into()) }];
        let a = write_run(dir.path(), "ber", mk(), manifest).unwrap();
        let b = write_run(dir.path(), "ber", mk(), manifest).unwrap();
        let c = write_run(dir.path(), "ber", mk(), manifest).unwrap();
        assert_eq!(a.files[0].file_name().unwrap(), "ber.csv");
        assert_eq!(b.files[0].file_name().unwrap(), "ber-1.csv");
        assert_eq!(c.manifest.file_name().unwrap(), "ber-2.manifest.json");
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&b.manifest).unwrap()).unwrap();
        assert_eq!(m["outputs"][0], "ber-1.csv");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 6);
    }
}
