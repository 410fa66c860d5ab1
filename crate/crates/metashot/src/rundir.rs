//! Run-directory discipline: exclusive ownership through a lock file and
//! a `config.resolved` snapshot that every subcommand must agree with.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ResolvedConfig;
use crate::error::{CliError, Result};

pub const SNAPSHOT_NAME: &str = "config.resolved";
pub const LOCK_NAME: &str = ".lock";

/// Held for the lifetime of a subcommand; the lock file disappears when
/// this drops (including on error unwind).
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<RunLock> {
        let path = dir.join(LOCK_NAME);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Run(format!(
                "run directory {} is in use by another process (remove {} if that process is gone)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Io { path, source: e }),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Creates the run directory if needed, takes the lock, and reconciles the
/// configuration snapshot: written when absent, required byte-identical
/// when present. Returns the directory path and the held lock.
pub fn prepare_run_dir(cfg: &ResolvedConfig) -> Result<(PathBuf, RunLock)> {
    let dir = cfg.run_dir.clone();
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let lock = RunLock::acquire(&dir)?;
    let snapshot_path = dir.join(SNAPSHOT_NAME);
    let snapshot = cfg.emit();
    match fs::read_to_string(&snapshot_path) {
        Ok(existing) => {
            if existing != snapshot {
                return Err(CliError::Run(format!(
                    "{} was produced by a different configuration; use a fresh run directory \
                     or rerun with the snapshot as the config file",
                    snapshot_path.display()
                )));
            }
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            fs::write(&snapshot_path, snapshot).map_err(CliError::io(&snapshot_path))?;
        }
        Err(e) => return Err(CliError::Io { path: snapshot_path, source: e }),
    }
    Ok((dir, lock))
}
