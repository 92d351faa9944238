//! Data sources: CSV files or named seeded generators.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::datagen::{
    digits_like, haystack, load_csv, random_clusters, two_domains, two_moons_3d, CsvProvenance, HaystackConfig,
    DEFAULT_MOONS_NOISE,
};
use crate::error::{invalid, Error, Result};
use crate::objectives::Dataset;

/// Generator names accepted after `gen:`.
pub const GENERATORS: &[&str] = &["haystack", "haystack-iso", "moons", "clusters", "digits", "domains"];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    /// `gen:<name>[:key=value,...]`. A `seed` parameter pins the dataset;
    /// otherwise each run seed draws its own.
    Generator { name: String, params: BTreeMap<String, f64> },
}

impl DataSource {
    pub fn parse(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("gen:") else {
            if s.is_empty() {
                return invalid("empty data source");
            }
            return Ok(Self::Csv(PathBuf::from(s)));
        };
        let (name, args) = rest.split_once(':').unwrap_or((rest, ""));
        if !GENERATORS.contains(&name) {
            return invalid(format!("unknown generator '{name}' (one of {})", GENERATORS.join(", ")));
        }
        let mut params = BTreeMap::new();
        for kv in args.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("generator parameter '{kv}' is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("generator parameter '{kv}' is not numeric")))?;
            params.insert(k.trim().to_string(), v);
        }
        let src = Self::Generator { name: name.to_string(), params };
        src.check_params()?;
        Ok(src)
    }

    fn check_params(&self) -> Result<()> {
        let Self::Generator { name, params } = self else {
            return Ok(());
        };
        let allowed: &[&str] = match name.as_str() {
            "haystack" => &["seed", "n_in", "n_out"],
            "haystack-iso" => &["seed", "p", "q", "n_in", "n_out", "sigma_out"],
            "moons" => &["seed", "n", "noise"],
            "clusters" => &["seed", "c", "p", "n_per", "sep"],
            "digits" => &["seed"],
            "domains" => &["seed", "p", "n_per", "shift"],
            _ => unreachable!(),
        };
        for k in params.keys() {
            if !allowed.contains(&k.as_str()) {
                return invalid(format!("generator '{name}' has no parameter '{k}' (allowed: {})", allowed.join(", ")));
            }
        }
        Ok(())
    }

    /// Whether the data changes with the run seed.
    pub fn is_seeded(&self) -> bool {
        matches!(self, Self::Generator { params, .. } if !params.contains_key("seed"))
    }
}

struct Params<'a>(&'a BTreeMap<String, f64>);

impl Params<'_> {
    fn float(&self, k: &str, default: f64) -> f64 {
        self.0.get(k).copied().unwrap_or(default)
    }

    fn count(&self, k: &str, default: usize) -> Result<usize> {
        match self.0.get(k) {
            None => Ok(default),
            Some(&v) if v >= 0.0 && v.fract() == 0.0 && v < 1e9 => Ok(v as usize),
            Some(v) => invalid(format!("parameter {k} = {v} must be a nonnegative integer")),
        }
    }
}

/// Loads a dataset for one run seed. Generated data comes with provenance.
pub fn load_source(src: &DataSource, run_seed: u64) -> Result<(Dataset, Option<CsvProvenance>)> {
    let (name, params) = match src {
        DataSource::Csv(path) => return Ok((load_csv(path)?, None)),
        DataSource::Generator { name, params } => (name.as_str(), Params(params)),
    };
    let seed = match params.0.get("seed") {
        Some(&s) if s >= 0.0 && s.fract() == 0.0 => s as u64,
        Some(s) => return invalid(format!("seed {s} must be a nonnegative integer")),
        None => run_seed,
    };
    let ds = match name {
        "haystack" => {
            let mut cfg = HaystackConfig::anisotropic(seed);
            cfg.n_in = params.count("n_in", cfg.n_in)?;
            cfg.n_out = params.count("n_out", cfg.n_out)?;
            haystack(&cfg)?
        }
        "haystack-iso" => {
            let cfg = HaystackConfig::isotropic(
                params.count("p", 10)?,
                params.count("q", 2)?,
                params.count("n_in", 90)?,
                params.count("n_out", 10)?,
                params.float("sigma_out", 1.0),
                seed,
            )?;
            haystack(&cfg)?
        }
        "moons" => two_moons_3d(params.count("n", 100)?, params.float("noise", DEFAULT_MOONS_NOISE), seed)?,
        "clusters" => random_clusters(
            params.count("c", 5)?,
            params.count("p", 10)?,
            params.count("n_per", 20)?,
            params.float("sep", 2.0),
            seed,
        )?,
        "digits" => digits_like(seed)?,
        "domains" => two_domains(params.count("p", 5)?, params.count("n_per", 50)?, params.float("shift", 2.0), seed)?,
        _ => unreachable!("generator names are checked on parse"),
    };
    let generator = std::iter::once(name.to_string())
        .chain(params.0.iter().filter(|(k, _)| *k != "seed").map(|(k, v)| format!("{k}={v}")))
        .collect::<Vec<_>>()
        .join(":");
    Ok((ds, Some(CsvProvenance { seed, generator })))
}

/// Parses and loads a `gen:` source in one step.
pub fn generate(spec: &str, seed: u64) -> Result<(Dataset, CsvProvenance)> {
    let src = DataSource::parse(spec)?;
    if matches!(src, DataSource::Csv(_)) {
        return invalid(format!("'{spec}' is not a generator (expected gen:<name>)"));
    }
    let (ds, pv) = load_source(&src, seed)?;
    Ok((ds, pv.expect("generators carry provenance")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sources() {
        assert_eq!(DataSource::parse("data/x.csv").unwrap(), DataSource::Csv("data/x.csv".into()));
        let DataSource::Generator { name, params } = DataSource::parse("gen:moons:n=40,noise=0.1").unwrap() else {
            panic!()
        };
        assert_eq!(name, "moons");
        assert_eq!(params["n"], 40.0);
        assert!(DataSource::parse("gen:nope").is_err());
        assert!(DataSource::parse("gen:moons:n").is_err());
        assert!(DataSource::parse("gen:moons:p=3").is_err());
        assert!(DataSource::parse("").is_err());
    }

    #[test]
    fn seeds_flow_into_generators() {
        let src = DataSource::parse("gen:clusters:c=3,p=4,n_per=5").unwrap();
        assert!(src.is_seeded());
        let (a, pa) = load_source(&src, 1).unwrap();
        let (b, _) = load_source(&src, 2).unwrap();
        assert_eq!(a.p(), 4);
        assert_eq!(a.n(), 15);
        assert_ne!(a, b);
        assert_eq!(pa.unwrap().seed, 1);
        let pinned = DataSource::parse("gen:clusters:seed=7").unwrap();
        assert!(!pinned.is_seeded());
        assert_eq!(load_source(&pinned, 1).unwrap().0, load_source(&pinned, 2).unwrap().0);
    }

    #[test]
    fn every_generator_runs() {
        for g in GENERATORS {
            let (ds, pv) = generate(&format!("gen:{g}"), 3).unwrap();
            assert!(ds.n() > 0);
            assert!(pv.generator.starts_with(g));
        }
        assert!(generate("gen:moons:n=3", 0).is_err());
        assert!(generate("gen:moons:n=2.5", 0).is_err());
        assert!(generate("file.csv", 0).is_err());
    }
}
