//! File access for commands. Every read goes through [`Workspace::read_json`]
//! so tests can audit which inputs a command touched.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const OUT_DIR_ENV: &str = "UNPAIRED_OUT_DIR";

#[derive(Debug)]
pub struct Workspace {
    out_dir: PathBuf,
    reads: Mutex<Vec<PathBuf>>,
    writes: Mutex<Vec<PathBuf>>,
}

impl Workspace {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            reads: Mutex::new(Vec::new()),
            writes: Mutex::new(Vec::new()),
        }
    }

    /// `--out-dir` if given, else `$UNPAIRED_OUT_DIR`, else the current directory.
    pub fn resolve(flag: Option<PathBuf>) -> Self {
        let dir = flag
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Self::new(dir)
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn reads(&self) -> Vec<PathBuf> {
        self.reads.lock().unwrap().clone()
    }

    pub fn writes(&self) -> Vec<PathBuf> {
        self.writes.lock().unwrap().clone()
    }

    pub fn read_json<T: DeserializeOwned>(&self, path: &Path) -> anyhow::Result<T> {
        self.reads.lock().unwrap().push(path.to_path_buf());
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.writes.lock().unwrap().push(path.clone());
        Ok(path)
    }
}
