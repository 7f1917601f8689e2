use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use teachbench_core::student::SimSettings;

use crate::CliError;

/// Options shared by every subcommand. The config file uses the same names
/// as keys; a flag given on the command line wins over the file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Options {
    /// Provider config JSON. Without one the bundled demo script answers.
    #[arg(long, global = true)]
    pub provider: Option<PathBuf>,
    /// Project directory or project.json file.
    #[arg(long, global = true)]
    pub project: Option<PathBuf>,
    /// Directory that receives every artifact.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Project store directory for serve, init, export and import.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[arg(long, global = true)]
    pub respond_temperature: Option<f32>,
    #[arg(long, global = true)]
    pub pca_temperature: Option<f32>,
    #[arg(long, global = true)]
    pub anti_repetition: Option<bool>,
    /// Automated batches to run (each adds six messages).
    #[arg(long, global = true)]
    pub batches: Option<usize>,
    /// Write every model call to <out>/trace.jsonl.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub trace: Option<bool>,
}

impl Options {
    fn overlay(self, base: Options) -> Options {
        Options {
            provider: self.provider.or(base.provider),
            project: self.project.or(base.project),
            out: self.out.or(base.out),
            store: self.store.or(base.store),
            respond_temperature: self.respond_temperature.or(base.respond_temperature),
            pca_temperature: self.pca_temperature.or(base.pca_temperature),
            anti_repetition: self.anti_repetition.or(base.anti_repetition),
            batches: self.batches.or(base.batches),
            trace: self.trace.or(base.trace),
        }
    }

    fn relative_to(mut self, dir: &Path) -> Options {
        for p in [&mut self.provider, &mut self.project, &mut self.out, &mut self.store] {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        }
        self
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub provider: Option<PathBuf>,
    pub project: Option<PathBuf>,
    pub out: PathBuf,
    pub store: PathBuf,
    pub sim: SimSettings,
    pub batches: usize,
    pub trace: bool,
}

impl Config {
    /// Merges flags over the optional config file and checks the result.
    pub fn resolve(flags: Options, file: Option<&Path>) -> Result<Config, CliError> {
        let from_file = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let parsed: Options =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                parsed.relative_to(path.parent().unwrap_or(Path::new(".")))
            }
            None => Options::default(),
        };
        let o = flags.overlay(from_file);
        let defaults = SimSettings::default();
        let sim = SimSettings {
            respond_temperature: o.respond_temperature.unwrap_or(defaults.respond_temperature),
            pca_temperature: o.pca_temperature.unwrap_or(defaults.pca_temperature),
            anti_repetition: o.anti_repetition.unwrap_or(defaults.anti_repetition),
        };
        for (name, t) in [("respond-temperature", sim.respond_temperature), ("pca-temperature", sim.pca_temperature)] {
            if !(0.0..=2.0).contains(&t) {
                return Err(CliError::Config(format!("{name} must be within 0..=2, got {t}")));
            }
        }
        let batches = o.batches.unwrap_or(1);
        if batches == 0 {
            return Err(CliError::Config("batches must be at least 1".into()));
        }
        if let Some(p) = &o.provider {
            if !p.is_file() {
                return Err(CliError::Config(format!("provider config {} does not exist", p.display())));
            }
        }
        Ok(Config {
            provider: o.provider,
            project: o.project,
            out: o.out.unwrap_or_else(|| PathBuf::from("out")),
            store: o.store.unwrap_or_else(|| PathBuf::from("projects")),
            sim,
            batches,
            trace: o.trace.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_paths_resolve_against_it() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "out = \"artifacts\"\nbatches = 3\nrespond-temperature = 0.5\nanti-repetition = false\n").unwrap();
        let flags = Options {
            batches: Some(2),
            ..Options::default()
        };
        let c = Config::resolve(flags, Some(&path)).unwrap();
        assert_eq!(c.batches, 2);
        assert_eq!(c.out, dir.path().join("artifacts"));
        assert_eq!(c.sim.respond_temperature, 0.5);
        assert!(!c.sim.anti_repetition);
        assert_eq!(c.sim.pca_temperature, 0.0);
    }

    #[test]
    fn defaults() {
        let c = Config::resolve(Options::default(), None).unwrap();
        assert_eq!(c.sim, SimSettings::default());
        assert_eq!(c.batches, 1);
        assert_eq!(c.out, PathBuf::from("out"));
        assert!(c.provider.is_none());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let hot = Options {
            respond_temperature: Some(3.0),
            ..Options::default()
        };
        assert!(matches!(Config::resolve(hot, None), Err(CliError::Config(_))));
        let none = Options {
            batches: Some(0),
            ..Options::default()
        };
        assert!(matches!(Config::resolve(none, None), Err(CliError::Config(_))));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "unknown-key = 1\n").unwrap();
        assert!(matches!(Config::resolve(Options::default(), Some(&path)), Err(CliError::Config(_))));
        let missing = Options {
            provider: Some(dir.path().join("nope.json")),
            ..Options::default()
        };
        assert!(matches!(Config::resolve(missing, None), Err(CliError::Config(_))));
    }
}
