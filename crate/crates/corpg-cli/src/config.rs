//! Flat key=value configuration with CLI-over-file-over-default precedence,
//! and the effective-config echo written next to every output.

use std::collections::HashMap;
use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use corpg::text::atomic_write;
use corpg::{Error, Result};

pub struct Resolver {
    file: HashMap<String, String>,
    /// Every resolved key=value, in resolution order, for the echo file.
    pub effective: Vec<(String, String)>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut file = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::contract(format!(
                        "{}:{}: expected key=value, got {line:?}",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Resolver { file, effective: Vec::new() })
    }

    /// CLI value > config-file value > default.
    pub fn get<T>(&mut self, cli: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Display,
    {
        let value = match cli {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => raw.parse::<T>().map_err(|_| {
                    Error::contract(format!("config key {key}: cannot parse {raw:?}"))
                })?,
                None => default,
            },
        };
        self.effective.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    /// A presence flag: true when passed on the command line, otherwise the
    /// config-file boolean, otherwise the default.
    pub fn get_flag(&mut self, cli: bool, key: &str, default: bool) -> Result<bool> {
        let value = if cli {
            true
        } else {
            match self.file.get(key) {
                Some(raw) => raw.parse::<bool>().map_err(|_| {
                    Error::contract(format!("config key {key}: cannot parse {raw:?} as bool"))
                })?,
                None => default,
            }
        };
        self.effective.push((key.to_string(), value.to_string()));
        Ok(value)
    }

    pub fn note(&mut self, key: &str, value: impl Display) {
        self.effective.push((key.to_string(), value.to_string()));
    }

    /// Echo the effective configuration as `<command>.config.txt` in `dir`.
    pub fn echo(&self, dir: &Path, command: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{command}.config.txt"));
        atomic_write(&path, |w| {
            for (k, v) in &self.effective {
                writeln!(w, "{k}={v}")?;
            }
            Ok(())
        })
    }
}

/// Directory that should receive the config echo for a file output.
pub fn echo_dir(output: &Path) -> &Path {
    output.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| Path::new("."))
}
