//! Output directory handling and file writers.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "PHENOLAG_OUT";

/// Directory used when neither the command line, the config nor the environment names one.
pub const DEFAULT_OUT: &str = "phenolag-out";

/// Output directory precedence: `--out`, then the config, then the environment.
pub fn resolve_out_dir(
    cli: Option<&Path>,
    config: Option<&Path>,
    env: Option<OsString>,
) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.map(Path::to_path_buf))
        .or_else(|| env.filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Collects files written under one directory.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&root).map_err(|source| CliError::Io {
            path: root.clone(),
            source,
        })?;
        Ok(OutDir {
            root,
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Names of the files written so far, in order.
    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Writes `name` through a buffered writer.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    {
        let path = self.root.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        f(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
    }
}

/// A serialised object with `scenario_hash` as its first key.
#[derive(Serialize)]
pub struct Hashed<'a, T> {
    pub scenario_hash: &'a str,
    #[serde(flatten)]
    pub inner: &'a T,
}

pub fn with_hash<'a, T: Serialize>(hash: &'a str, inner: &'a T) -> Hashed<'a, T> {
    Hashed {
        scenario_hash: hash,
        inner,
    }
}

/// Gnuplot script drawing the first few trajectory files.
pub fn trajectory_plot(hash: &str, files: &[String]) -> String {
    let mut s = format!(
        "# scenario_hash={hash}\n\
         set datafile separator ','\n\
         set key off\n\
         set xlabel 't'\n\
         set ylabel 'X_t'\n\
         set title 'lag trajectories'\n"
    );
    let shown: Vec<String> = files
        .iter()
        .filter(|f| f.ends_with(".csv"))
        .take(10)
        .map(|f| format!("'{f}' every ::1 using 1:2 with lines"))
        .collect();
    if shown.is_empty() {
        s.push_str("# no trajectory files were written\n");
    } else {
        s.push_str(&format!("plot {}\n", shown.join(", \\\n     ")));
    }
    s
}

/// Gnuplot script for the ensemble tables: slope per seed and the excursion tail.
pub fn ensemble_plot(hash: &str, has_tail: bool) -> String {
    let mut s = format!(
        "# scenario_hash={hash}\n\
         set datafile separator ','\n\
         set key off\n\
         set multiplot layout 1,2\n\
         set xlabel 'seed index'\n\
         set ylabel 'X_T / T'\n\
         plot 'per_seed.csv' every ::1 using 0:4 with points pt 7\n"
    );
    if has_tail {
        s.push_str(
            "set logscale xy\n\
             set xlabel 'excursion length d'\n\
             set ylabel 'P(D > d)'\n\
             plot 'excursions.csv' every ::1 using 1:2 with steps\n\
             unset logscale\n",
        );
    }
    s.push_str("unset multiplot\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_dir_precedence() {
        let cli = Path::new("cli");
        let cfg = Path::new("cfg");
        let env = || Some(OsString::from("env"));
        assert_eq!(
            resolve_out_dir(Some(cli), Some(cfg), env()),
            PathBuf::from("cli")
        );
        assert_eq!(
            resolve_out_dir(None, Some(cfg), env()),
            PathBuf::from("cfg")
        );
        assert_eq!(resolve_out_dir(None, None, env()), PathBuf::from("env"));
        assert_eq!(
            resolve_out_dir(None, None, Some(OsString::new())),
            PathBuf::from(DEFAULT_OUT)
        );
        assert_eq!(
            resolve_out_dir(None, None, None),
            PathBuf::from(DEFAULT_OUT)
        );
    }

    #[test]
    fn hash_comes_first() {
        #[derive(Serialize)]
        struct R {
            a: u8,
        }
        let v = with_hash("abc", &R { a: 1 });
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.starts_with("{\"scenario_hash\":\"abc\""), "{text}");
    }

    #[test]
    fn plot_lists_csv_files_only() {
        let files = vec!["traj_1.csv".to_string(), "events_1.jsonl".to_string()];
        let script = trajectory_plot("h", &files);
        assert!(script.contains("'traj_1.csv'"));
        assert!(!script.contains("events_1"));
    }
}
