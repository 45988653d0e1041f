use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::Format;

/// Output directory plus the seed and timings every command reports.
pub struct Output {
    dir: PathBuf,
    pub seed: u64,
    pub format: Format,
    command: &'static str,
    timings: Vec<(&'static str, Duration)>,
}

#[derive(Serialize)]
struct Envelope<'a, I: Serialize, T: Serialize> {
    seed: u64,
    command: &'static str,
    inputs: &'a I,
    #[serde(flatten)]
    body: &'a T,
}

impl Output {
    pub fn new(dir: &Path, seed: u64, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            seed,
            format,
            command: "",
            timings: Vec::new(),
        })
    }

    pub fn set_command(&mut self, command: &'static str) {
        self.command = command;
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// Pretty JSON with the seed, command and inputs ahead of `body`'s fields.
    pub fn write_json<I: Serialize, T: Serialize>(&self, name: &str, inputs: &I, body: &T) -> Result<PathBuf> {
        let env = Envelope {
            seed: self.seed,
            command: self.command,
            inputs,
            body,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Comment lines that open every CSV the command writes.
    pub fn csv_preamble(&self, extra: &[String]) -> String {
        let mut s = format!("# seed {}\n# command {}\n", self.seed, self.command);
        for line in extra {
            s.push_str(&format!("# {line}\n"));
        }
        s
    }

    pub fn write_csv(&self, name: &str, extra: &[String], header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let body = String::from_utf8(w.into_inner()?)?;
        self.write(name, &(self.csv_preamble(extra) + &body))
    }

    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.timings.push((stage, t.elapsed()));
        v
    }

    /// Timings go to a sidecar file and stderr so the other outputs stay
    /// byte-identical across runs.
    pub fn finish(&self) -> Result<()> {
        if self.timings.is_empty() {
            return Ok(());
        }
        let secs: serde_json::Map<String, serde_json::Value> = self
            .timings
            .iter()
            .map(|(k, d)| (k.to_string(), d.as_secs_f64().into()))
            .collect();
        let text = serde_json::to_string_pretty(&serde_json::json!({
            "command": self.command,
            "seconds": secs,
        }))?;
        self.write(&format!("{}_timings.json", self.command), &(text + "\n"))?;
        for (k, d) in &self.timings {
            eprintln!("time {k}: {:.3} s", d.as_secs_f64());
        }
        Ok(())
    }
}
