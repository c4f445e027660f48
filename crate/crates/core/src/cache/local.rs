use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Slide-level disk cache: whole container files copied from a slow store
/// (network share, archive) into a fast local directory on first use.
#[derive(Debug, Clone)]
pub struct LocalSlideCache {
    dir: PathBuf,
}

impl LocalSlideCache {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(LocalSlideCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Returns a local copy of `source`, copying it when the cached file is
    /// missing or its size differs.
    pub fn localize(&self, source: &Path) -> io::Result<PathBuf> {
        let name = source
            .file_name()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
        let target = self.dir.join(name);
        let src_len = fs::metadata(source)?.len();
        if fs::metadata(&target)
            .map(|m| m.len() == src_len)
            .unwrap_or(false)
        {
            return Ok(target);
        }
        let tmp = self
            .dir
            .join(format!(".{}.partial", name.to_string_lossy()));
        fs::copy(source, &tmp)?;
        fs::rename(&tmp, &target)?;
        Ok(target)
    }
}
