//! Flat `key = value` run configuration.
//!
//! A config file is a list of assignments, one per line; blank lines and
//! lines starting with `#` are skipped.  Every diagnostic carries the source
//! name and line number.  Keys are consumed by the typed accessors and
//! anything left unconsumed is rejected, so a typo fails loudly instead of
//! silently falling back to a default.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

/// Parsed assignments: key to (line number, raw value).
#[derive(Debug)]
pub struct RawConfig {
    source: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(source: &str, text: &str) -> Result<Self, String> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!("{source}:{line_no}: expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(format!("{source}:{line_no}: empty key"));
            }
            if value.is_empty() {
                return Err(format!("{source}:{line_no}: empty value for `{key}`"));
            }
            if let Some(&(first, _)) = entries.get(key) {
                return Err(format!(
                    "{source}:{line_no}: duplicate key `{key}` (first set at line {first})"
                ));
            }
            entries.insert(key.to_string(), (line_no, value.to_string()));
        }
        Ok(RawConfig {
            source: source.to_string(),
            entries,
        })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn take_string(&mut self, key: &str) -> Option<String> {
        self.take(key).map(|(_, v)| v)
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>, String> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<T>() {
                Ok(x) => Ok(Some(x)),
                Err(_) => Err(format!(
                    "{}:{line}: `{key}`: expected {what}, got `{v}`",
                    self.source
                )),
            },
        }
    }

    fn take_bool(&mut self, key: &str) -> Result<Option<bool>, String> {
        match self.take(key) {
            None => Ok(None),
            Some((_, v)) if v == "true" => Ok(Some(true)),
            Some((_, v)) if v == "false" => Ok(Some(false)),
            Some((line, v)) => Err(format!(
                "{}:{line}: `{key}`: expected true or false, got `{v}`",
                self.source
            )),
        }
    }

    fn take_list<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<Vec<T>>, String> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match parse_list::<T>(&v) {
                Ok(xs) => Ok(Some(xs)),
                Err(tok) => Err(format!(
                    "{}:{line}: `{key}`: expected {what}, got `{tok}`",
                    self.source
                )),
            },
        }
    }

    /// Reject anything not consumed by the accessors.
    fn finish(self) -> Result<(), String> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(format!("{}:{line}: unknown key `{key}`", self.source));
        }
        Ok(())
    }
}

/// Space-separated list of values.  On failure returns the offending token.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>, String> {
    text.split_whitespace()
        .map(|tok| tok.parse::<T>().map_err(|_| tok.to_string()))
        .collect()
}

/// Everything a subcommand can be told, before defaults.  A config file and
/// the command-line flags each produce one of these; flags win on conflict.
/// Keys that a given subcommand does not use are accepted and ignored, so
/// one file can drive `run` and the studies alike.
#[derive(Debug, Default, Clone)]
pub struct Settings {
    pub scenario: Option<String>,
    pub resolution: Option<usize>,
    pub divisor: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub length: Option<f64>,
    pub amplitude: Option<f64>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub steady_tol: Option<f64>,
    pub sample_stride: Option<usize>,
    pub max_change: Option<f64>,
    pub blowup_threshold: Option<f64>,
    pub renormalize_volume: Option<bool>,
    pub track_potential: Option<bool>,
    pub k_min: Option<i32>,
    pub k_max: Option<i32>,
    pub resolutions: Option<Vec<usize>>,
    pub beta: Option<f64>,
    pub probe_radius: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Settings {
    pub fn from_raw(mut raw: RawConfig) -> Result<Settings, String> {
        let s = Settings {
            scenario: raw.take_string("scenario"),
            resolution: raw.take_parsed("resolution", "a positive integer")?,
            divisor: raw.take_list("divisor", "space-separated numbers")?,
            alpha: raw.take_list("alpha", "space-separated numbers")?,
            beta1: raw.take_parsed("beta1", "a number")?,
            beta2: raw.take_parsed("beta2", "a number")?,
            length: raw.take_parsed("length", "a number")?,
            amplitude: raw.take_parsed("amplitude", "a number")?,
            seed: raw.take_parsed("seed", "an unsigned integer")?,
            dt: raw.take_parsed("dt", "a number")?,
            t_end: raw.take_parsed("t_end", "a number")?,
            steady_tol: raw.take_parsed("steady_tol", "a number")?,
            sample_stride: raw.take_parsed("sample_stride", "a positive integer")?,
            max_change: raw.take_parsed("max_change", "a number")?,
            blowup_threshold: raw.take_parsed("blowup_threshold", "a number")?,
            renormalize_volume: raw.take_bool("renormalize_volume")?,
            track_potential: raw.take_bool("track_potential")?,
            k_min: raw.take_parsed("k_min", "an integer")?,
            k_max: raw.take_parsed("k_max", "an integer")?,
            resolutions: raw.take_list("resolutions", "space-separated positive integers")?,
            beta: raw.take_parsed("beta", "a number")?,
            probe_radius: raw.take_parsed("probe_radius", "a number")?,
            output_dir: raw.take_string("output_dir").map(PathBuf::from),
        };
        raw.finish()?;
        Ok(s)
    }

    /// Field-wise merge; `over` (the flags) wins wherever it is set.
    pub fn overlaid_with(self, over: Settings) -> Settings {
        Settings {
            scenario: over.scenario.or(self.scenario),
            resolution: over.resolution.or(self.resolution),
            divisor: over.divisor.or(self.divisor),
            alpha: over.alpha.or(self.alpha),
            beta1: over.beta1.or(self.beta1),
            beta2: over.beta2.or(self.beta2),
            length: over.length.or(self.length),
            amplitude: over.amplitude.or(self.amplitude),
            seed: over.seed.or(self.seed),
            dt: over.dt.or(self.dt),
            t_end: over.t_end.or(self.t_end),
            steady_tol: over.steady_tol.or(self.steady_tol),
            sample_stride: over.sample_stride.or(self.sample_stride),
            max_change: over.max_change.or(self.max_change),
            blowup_threshold: over.blowup_threshold.or(self.blowup_threshold),
            renormalize_volume: over.renormalize_volume.or(self.renormalize_volume),
            track_potential: over.track_potential.or(self.track_potential),
            k_min: over.k_min.or(self.k_min),
            k_max: over.k_max.or(self.k_max),
            resolutions: over.resolutions.or(self.resolutions),
            beta: over.beta.or(self.beta),
            probe_radius: over.probe_radius.or(self.probe_radius),
            output_dir: over.output_dir.or(self.output_dir),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Pillowcase,
    HyperbolicTriangle,
    Football,
    Torus,
}

pub const SCENARIO_NAMES: &str = "pillowcase, hyperbolic-triangle, football, torus";

impl Scenario {
    pub fn from_name(name: &str) -> Option<Scenario> {
        match name {
            "pillowcase" => Some(Scenario::Pillowcase),
            "hyperbolic-triangle" => Some(Scenario::HyperbolicTriangle),
            "football" => Some(Scenario::Football),
            "torus" => Some(Scenario::Torus),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blanks_are_skipped() {
        let text = "# a comment\n\n  dt = 1e-3\n\nseed = 7\n";
        let mut raw = RawConfig::parse("test.cfg", text).unwrap();
        assert_eq!(raw.take_parsed::<f64>("dt", "a number").unwrap(), Some(1e-3));
        assert_eq!(raw.take_parsed::<u64>("seed", "n").unwrap(), Some(7));
        raw.finish().unwrap();
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let err = RawConfig::parse("c", "dt = 1\ndt = 2\n").unwrap_err();
        assert!(err.contains("c:2"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn bad_value_points_at_its_line() {
        let mut raw = RawConfig::parse("c", "seed = 1\ndt = fast\n").unwrap();
        let err = raw.take_parsed::<f64>("dt", "a number").unwrap_err();
        assert!(err.contains("c:2"), "{err}");
        assert!(err.contains("fast"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_at_finish() {
        let raw = RawConfig::parse("c", "dtt = 1e-3\n").unwrap();
        let err = Settings::from_raw(raw).unwrap_err();
        assert!(err.contains("c:1"), "{err}");
        assert!(err.contains("dtt"), "{err}");
    }

    #[test]
    fn missing_equals_is_an_error() {
        let err = RawConfig::parse("c", "dt 1e-3\n").unwrap_err();
        assert!(err.contains("c:1"), "{err}");
    }

    #[test]
    fn flags_win_on_overlay() {
        let file = Settings {
            dt: Some(1e-3),
            t_end: Some(5.0),
            ..Settings::default()
        };
        let flags = Settings {
            t_end: Some(0.1),
            ..Settings::default()
        };
        let merged = file.overlaid_with(flags);
        assert_eq!(merged.dt, Some(1e-3));
        assert_eq!(merged.t_end, Some(0.1));
    }

    #[test]
    fn lists_parse_and_report_bad_tokens() {
        assert_eq!(parse_list::<f64>("-0.5 -0.75").unwrap(), vec![-0.5, -0.75]);
        assert_eq!(parse_list::<usize>("128 x").unwrap_err(), "x");
    }
}
