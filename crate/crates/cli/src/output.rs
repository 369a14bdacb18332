use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Report directory that remembers the digest of everything written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// File name -> sha256 of every file written so far.
    pub fn written(&self) -> &BTreeMap<String, String> {
        &self.written
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, data).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.insert(name.to_string(), hex::encode(Sha256::digest(data)));
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.bytes(name, s.as_bytes())
    }

    pub fn jsonl<'a, T: Serialize + 'a>(
        &mut self,
        name: &str,
        items: impl IntoIterator<Item = &'a T>,
    ) -> Result<()> {
        let mut s = String::new();
        for item in items {
            s.push_str(&serde_json::to_string(item)?);
            s.push('\n');
        }
        self.bytes(name, s.as_bytes())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
        }
        let data = w.into_inner().context("csv buffer")?;
        self.bytes(name, &data)
    }
}

pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let mut f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        total += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((total, hex::encode(hasher.finalize())))
}
