use std::fs;
use std::path::{Path, PathBuf};

use depthkit::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: Error },
    #[error(transparent)]
    Lib(#[from] Error),
    /// Bad flag combination or value; exit 3.
    #[error("{0}")]
    Usage(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::File { source, .. } | CliError::Lib(source) => match source {
                Error::Parse { .. } | Error::Line { .. } | Error::Input(_) | Error::Io(_) => 2,
                Error::Parameter(_) => 3,
                Error::Structural(_) | Error::State(_) => 4,
            },
            CliError::Usage(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

pub trait WithPath<T> {
    fn at(self, path: &Path) -> Result<T, CliError>;
}

impl<T> WithPath<T> for Result<T, Error> {
    fn at(self, path: &Path) -> Result<T, CliError> {
        self.map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(Error::from).at(path)
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes)
        .map_err(|e| Error::Parse {
            offset: e.utf8_error().valid_up_to(),
            msg: "not valid UTF-8".into(),
        })
        .at(path)
}

/// Output directory, created on demand.
pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<OutDir, CliError> {
        fs::create_dir_all(path).map_err(Error::from).at(path)?;
        Ok(OutDir(path.to_path_buf()))
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.0.join(name);
        fs::write(&p, bytes).map_err(Error::from).at(&p)?;
        Ok(p)
    }
}

/// File stem, used to derive output names.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

/// Name safe for use as a file name component.
pub fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

/// `HxW` pair, e.g. `600x800`.
pub fn parse_hw(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().ok().filter(|n| *n > 0);
    match (p(h), p(w)) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err(format!("expected two positive integers HxW, got {s:?}")),
    }
}

pub fn unit_interval_open(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must be in (0, 1), got {v}"))
    }
}

pub fn unit_interval_closed(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must be in [0, 1], got {v}"))
    }
}
