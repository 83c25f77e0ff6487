//! Run configuration: INI-style text files with `[section]` headers and
//! `key = value` lines, defaults for everything, and strict validation
//! with line numbers on errors.

use heatlab::{Error, Result};
use std::path::PathBuf;

/// The two meshed domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Square,
    Lshape,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Square => "square",
            Domain::Lshape => "lshape",
        }
    }

    pub fn area(self) -> f64 {
        match self {
            Domain::Square => 1.0,
            Domain::Lshape => 3.0,
        }
    }

    pub fn polygon(self) -> heatlab::mesh::PolygonalDomain {
        match self {
            Domain::Square => heatlab::mesh::PolygonalDomain::unit_square(),
            Domain::Lshape => heatlab::mesh::PolygonalDomain::l_shape(),
        }
    }
}

/// All scenario names, in the fixed execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    AssemblyCheck,
    Spectrum,
    Analyticity,
    MaximalFunction,
    Maxreg,
    Kernels,
    Dyadic,
    BestApprox,
    Projections,
    Deltainv,
    Corollary23,
}

pub const ALL_SCENARIOS: [Scenario; 11] = [
    Scenario::AssemblyCheck,
    Scenario::Spectrum,
    Scenario::Analyticity,
    Scenario::MaximalFunction,
    Scenario::Maxreg,
    Scenario::Kernels,
    Scenario::Dyadic,
    Scenario::BestApprox,
    Scenario::Projections,
    Scenario::Deltainv,
    Scenario::Corollary23,
];

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::AssemblyCheck => "assembly-check",
            Scenario::Spectrum => "spectrum",
            Scenario::Analyticity => "analyticity",
            Scenario::MaximalFunction => "maximal-function",
            Scenario::Maxreg => "maxreg",
            Scenario::Kernels => "kernels",
            Scenario::Dyadic => "dyadic",
            Scenario::BestApprox => "best-approx",
            Scenario::Projections => "projections",
            Scenario::Deltainv => "deltainv",
            Scenario::Corollary23 => "corollary23",
        }
    }

    pub fn parse(s: &str) -> Result<Scenario> {
        ALL_SCENARIOS
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown scenario `{s}`; allowed: {}",
                    ALL_SCENARIOS.map(|sc| sc.name()).join(", ")
                ))
            })
    }
}

fn parse_domains(s: &str) -> Result<Vec<Domain>> {
    match s {
        "square" => Ok(vec![Domain::Square]),
        "lshape" => Ok(vec![Domain::Lshape]),
        "both" => Ok(vec![Domain::Square, Domain::Lshape]),
        other => Err(Error::Validation(format!(
            "domain must be one of square, lshape, both; got `{other}`"
        ))),
    }
}

/// Parses an inclusive level range written `a..b`.
pub fn parse_levels(s: &str) -> Result<(u32, u32)> {
    let err = || Error::Validation(format!("levels must be an inclusive range `a..b`, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(err)?;
    let lo: u32 = a.trim().parse().map_err(|_| err())?;
    let hi: u32 = b.trim().parse().map_err(|_| err())?;
    if lo < 1 || hi < lo || hi > 12 {
        return Err(Error::Validation(format!(
            "levels `{s}` out of order or outside 1..12"
        )));
    }
    Ok((lo, hi))
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domains: Vec<Domain>,
    /// Inclusive level range for single-mesh scenarios.
    pub levels: (u32, u32),
    pub r: u32,
    /// Scenarios to run, kept in the canonical order.
    pub scenarios: Vec<Scenario>,
    pub c_star: f64,
    pub seed: u64,
    pub t_end: f64,
    pub out: PathBuf,
    /// Dense eigensolver dof cap; larger problems are skipped.
    pub cap: usize,
    /// Directory for spectral decomposition disk caches, if any.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domains: vec![Domain::Square, Domain::Lshape],
            levels: (3, 5),
            r: 1,
            scenarios: ALL_SCENARIOS.to_vec(),
            c_star: 16.0,
            seed: 42,
            t_end: 1.0,
            out: PathBuf::from("heatlab.csv"),
            cap: 5000,
            cache_dir: None,
        }
    }
}

/// Deduplicates and reorders a scenario pick into the canonical run order.
pub fn canonical_scenarios(mut picked: Vec<Scenario>) -> Vec<Scenario> {
    picked.sort();
    picked.dedup();
    ALL_SCENARIOS
        .into_iter()
        .filter(|sc| picked.contains(sc))
        .collect()
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses configuration text. Keys before any `[section]` header belong to
/// `[run]`; `C_star` lives in `[dyadic]`. Unknown sections or keys are
/// parse errors carrying the 1-based line number.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = "run".to_string();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| parse_err(lineno, format!("unterminated section header `{raw}`")))?
                .trim();
            if name != "run" && name != "dyadic" {
                return Err(parse_err(
                    lineno,
                    format!("unknown section `[{name}]`; allowed: [run], [dyadic]"),
                ));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        let at_line = |e: Error| match e {
            Error::Validation(msg) => Error::Validation(format!("line {lineno}: {msg}")),
            other => other,
        };
        match (section.as_str(), key) {
            ("run", "domain") => cfg.domains = parse_domains(value).map_err(at_line)?,
            ("run", "levels") => cfg.levels = parse_levels(value).map_err(at_line)?,
            ("run", "r") => {
                cfg.r = value
                    .parse()
                    .ok()
                    .filter(|r| matches!(r, 1 | 2))
                    .ok_or_else(|| {
                        Error::Validation(format!("line {lineno}: r must be 1 or 2, got `{value}`"))
                    })?;
            }
            ("run", "scenarios") => {
                if value == "all" {
                    cfg.scenarios = ALL_SCENARIOS.to_vec();
                } else {
                    let picked = value
                        .split(',')
                        .map(|s| Scenario::parse(s.trim()))
                        .collect::<Result<Vec<_>>>()
                        .map_err(at_line)?;
                    cfg.scenarios = canonical_scenarios(picked);
                }
            }
            ("run", "seed") => {
                cfg.seed = value.parse().map_err(|_| {
                    Error::Validation(format!("line {lineno}: seed must be an integer"))
                })?;
            }
            ("run", "out") => cfg.out = PathBuf::from(value),
            ("run", "cap") => {
                cfg.cap = value.parse().ok().filter(|&c| c > 0).ok_or_else(|| {
                    Error::Validation(format!("line {lineno}: cap must be a positive integer"))
                })?;
            }
            ("run", "T") => {
                cfg.t_end = value.parse().ok().filter(|&t: &f64| t > 0.0).ok_or_else(|| {
                    Error::Validation(format!("line {lineno}: T must be a positive number"))
                })?;
            }
            ("run", "cache_dir") => cfg.cache_dir = Some(PathBuf::from(value)),
            ("dyadic", "C_star") => {
                cfg.c_star = value.parse().ok().filter(|&c: &f64| c >= 16.0).ok_or_else(|| {
                    Error::Validation(format!("line {lineno}: C_star must be a number >= 16"))
                })?;
            }
            _ => {
                return Err(parse_err(
                    lineno,
                    format!("unknown key `{key}` in section [{section}]"),
                ));
            }
        }
    }
    Ok(cfg)
}

/// Command-line overrides, applied on top of a parsed config
/// (flags > config > defaults).
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub scenarios: Vec<String>,
    pub levels: Option<String>,
    pub domain: Option<String>,
    pub seed: Option<u64>,
    pub cap: Option<usize>,
    pub cache_dir: Option<PathBuf>,
}

pub fn apply_overrides(mut cfg: RunConfig, ov: &Overrides) -> Result<RunConfig> {
    if let Some(out) = &ov.out {
        cfg.out = out.clone();
    }
    if !ov.scenarios.is_empty() {
        let picked = ov
            .scenarios
            .iter()
            .map(|s| Scenario::parse(s))
            .collect::<Result<Vec<_>>>()?;
        cfg.scenarios = canonical_scenarios(picked);
    }
    if let Some(levels) = &ov.levels {
        cfg.levels = parse_levels(levels)?;
    }
    if let Some(domain) = &ov.domain {
        cfg.domains = parse_domains(domain)?;
    }
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(cap) = ov.cap {
        cfg.cap = cap;
    }
    if let Some(dir) = &ov.cache_dir {
        cfg.cache_dir = Some(dir.clone());
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_full_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.scenarios, ALL_SCENARIOS.to_vec());
        assert_eq!(cfg.levels, (3, 5));
        assert_eq!(cfg.domains, vec![Domain::Square, Domain::Lshape]);
        assert_eq!(cfg.r, 1);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.c_star, 16.0);
        assert_eq!(cfg.t_end, 1.0);
        assert_eq!(cfg.cap, 5000);
    }

    #[test]
    fn levels_and_scenarios_parse() {
        let cfg = parse_config("levels = 3..5\nscenarios = spectrum, assembly-check").unwrap();
        assert_eq!(cfg.levels, (3, 5));
        // canonical order regardless of how the config lists them
        assert_eq!(cfg.scenarios, vec![Scenario::AssemblyCheck, Scenario::Spectrum]);
    }

    #[test]
    fn bad_domain_names_the_allowed_values() {
        let err = parse_config("domain = pentagon").unwrap_err().to_string();
        assert!(err.contains("square"), "{err}");
        assert!(err.contains("lshape"), "{err}");
        assert!(err.contains("both"), "{err}");
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn unknown_keys_and_sections_carry_line_numbers() {
        let err = parse_config("seed = 1\nwidget = 3").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("widget"), "{err}");
        let err = parse_config("[plots]\nkind = 3").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        // C_star only lives in [dyadic]
        assert!(parse_config("C_star = 32").is_err());
        assert!(parse_config("[dyadic]\nC_star = 32").unwrap().c_star == 32.0);
    }

    #[test]
    fn invalid_ranges_are_validation_errors() {
        assert!(parse_config("levels = 5..3").is_err());
        assert!(parse_config("levels = 0..3").is_err());
        assert!(parse_config("levels = three").is_err());
        assert!(parse_config("r = 3").is_err());
        assert!(parse_config("[dyadic]\nC_star = 8").is_err());
    }

    #[test]
    fn overrides_beat_config_values() {
        let cfg = parse_config("seed = 7\nlevels = 2..4\ndomain = square").unwrap();
        let ov = Overrides {
            seed: Some(9),
            levels: Some("3..5".into()),
            scenarios: vec!["maxreg".into(), "spectrum".into()],
            ..Default::default()
        };
        let cfg = apply_overrides(cfg, &ov).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.levels, (3, 5));
        assert_eq!(cfg.domains, vec![Domain::Square]);
        assert_eq!(cfg.scenarios, vec![Scenario::Spectrum, Scenario::Maxreg]);
        let bad = Overrides { scenarios: vec!["sightseeing".into()], ..Default::default() };
        assert!(apply_overrides(RunConfig::default(), &bad).is_err());
    }
}
