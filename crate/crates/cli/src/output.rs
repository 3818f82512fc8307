//! Run directories written through a staging directory.
//!
//! Artifacts go to a hidden sibling of the target and are moved into place
//! only after the command succeeds, so a failed run leaves no outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

pub struct RunDir {
    target: PathBuf,
    staging: PathBuf,
    done: bool,
}

impl RunDir {
    pub fn create(target: &Path) -> anyhow::Result<Self> {
        let name = target
            .file_name()
            .with_context(|| format!("output path {} has no directory name", target.display()))?
            .to_string_lossy()
            .to_string();
        let parent = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir(&staging).with_context(|| format!("creating {}", staging.display()))?;
        Ok(RunDir {
            target: target.to_path_buf(),
            staging,
            done: false,
        })
    }

    /// Path of an artifact inside the staging directory.
    pub fn path(&self, name: &str) -> PathBuf {
        self.staging.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Moves every staged artifact into the target, replacing files of the
    /// same name and leaving unrelated files alone.
    pub fn commit(mut self) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.target).with_context(|| format!("creating {}", self.target.display()))?;
        move_tree(&self.staging, &self.target)?;
        fs::remove_dir_all(&self.staging)?;
        self.done = true;
        Ok(self.target.clone())
    }
}

fn move_tree(from: &Path, to: &Path) -> anyhow::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(from)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let dest = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            fs::create_dir_all(&dest)?;
            move_tree(&entry.path(), &dest)?;
        } else {
            fs::rename(entry.path(), &dest).with_context(|| format!("moving output to {}", dest.display()))?;
        }
    }
    Ok(())
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropped_run_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("run");
        {
            let run = RunDir::create(&target).unwrap();
            run.write("a.txt", "x").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_replaces_and_keeps_unrelated_files() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("run");
        fs::create_dir_all(&target).unwrap();
        fs::write(target.join("a.txt"), "old").unwrap();
        fs::write(target.join("keep.txt"), "k").unwrap();
        let run = RunDir::create(&target).unwrap();
        run.write("a.txt", "new").unwrap();
        fs::create_dir(run.path("epochs")).unwrap();
        run.write("epochs/e1", "1").unwrap();
        run.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a.txt")).unwrap(), "new");
        assert_eq!(fs::read_to_string(target.join("keep.txt")).unwrap(), "k");
        assert_eq!(fs::read_to_string(target.join("epochs/e1")).unwrap(), "1");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
