//! Output directory bookkeeping; the manifest is always the last file written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

use prdlab::manifest::{FileRecord, RunManifest};

pub const MANIFEST_NAME: &str = "manifest.json";

pub struct RunOutput {
    dir: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl RunOutput {
    pub fn create(dir: &Path, command: &str, config: &impl Serialize, seeds: Vec<u64>) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let config = serde_json::to_value(config)?;
        Ok(Self { dir: dir.to_path_buf(), manifest: RunManifest::new(command, config, seeds), started: Instant::now() })
    }

    pub fn add_input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest.add_input(path).with_context(|| format!("hashing input {}", path.display()))
    }

    /// Creates `name` inside the output directory, fills it and records its hash.
    pub fn write<F>(&mut self, name: &str, fill: F) -> anyhow::Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)?;
        w.flush()?;
        drop(w);
        let mut rec = FileRecord::of(&path)?;
        rec.path = PathBuf::from(name);
        self.manifest.outputs.push(rec);
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<PathBuf> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn finish(mut self) -> anyhow::Result<PathBuf> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let path = self.dir.join(MANIFEST_NAME);
        self.manifest.write(&path)?;
        Ok(path)
    }
}
