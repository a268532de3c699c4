//! Run directories, manifests and deterministic result files.

use anyhow::{Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub struct RunDir {
    pub dir: PathBuf,
    started: Instant,
}

impl RunDir {
    /// Resolve the output directory: explicit flag, else $LIFTMAC_OUT/<cmd>,
    /// else ./runs/<cmd>.
    pub fn create(explicit: Option<&Path>, command: &str) -> Result<Self> {
        let dir = match explicit {
            Some(p) => p.to_path_buf(),
            None => std::env::var_os("LIFTMAC_OUT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(command),
        };
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, started: Instant::now() })
    }

    /// Deterministic results payload (no timestamps).
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    /// Manifest with the full parameter echo; written last so wall time is
    /// meaningful.
    pub fn write_manifest<P: Serialize>(&self, command: &str, seed: Option<u64>, params: &P) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a, P: Serialize> {
            command: &'a str,
            version: &'a str,
            seed: Option<u64>,
            params: &'a P,
            wall_time_s: f64,
            created_unix: u64,
        }
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            params,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        self.write_json("manifest.json", &manifest)
    }
}

/// Minimal CSV writer: fixed headers, `{:?}`-free plain formatting, '\n' line
/// endings, fully determined by the rows.
pub fn csv(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
