//! Output directory handling: write-then-rename files and a manifest listing their digests.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.txt";

pub struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `contents` next to `path` under a hidden name, syncs it, then renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.partial"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

impl Artifacts {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        let digest = hex(&Sha256::digest(contents.as_bytes()));
        match self.written.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = digest,
            None => self.written.push((name.to_string(), digest)),
        }
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// The resolved config followed by an `[artifacts]` section of `name = sha256`.
    pub fn finish(self, resolved_config: &str) -> io::Result<()> {
        let mut text = resolved_config.to_string();
        text.push_str("\n[artifacts]\n");
        for (name, digest) in &self.written {
            text.push_str(&format!("{name} = {digest}\n"));
        }
        write_atomic(&self.dir.join(MANIFEST), text.as_bytes())
    }
}
