//! Flat key-value study configuration files.
//!
//! One `key = value` pair per line, `#` starts a comment. Keys:
//!
//! ```text
//! problem          test1 | test2 | test3
//! lambda           positive float, test3 only (default 1.0)
//! family           rdqm | vm | htm
//! base-n           coarsest grid resolution (rdqm, htm; default 4)
//! distortion       rdqm vertex offset fraction (default 0.1)
//! base-seeds       coarsest Voronoi seed count (vm; default 25)
//! lloyd            Lloyd smoothing iterations (vm; default 0)
//! edge-probability htm hanging-edge probability (default 0.5)
//! max-hanging      htm max hanging nodes per edge (default 3)
//! refinements      number of meshes in the family (>= 2)
//! mode             vem | navem | navem-oracle
//! models           comma-separated model files (navem mode)
//! seed             RNG seed (default 0)
//! outdir           output directory for the CSV
//! include-runtime  true | false (default false, keeps CSV bytes stable)
//! basis            optional basis artifact to load instead of rebuilding
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use navem_core::study::{ExperimentConfig, FamilyConfig, ProblemId, SolveMode};
use navem_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct StudyFile {
    pub experiment: ExperimentConfig,
    pub outdir: PathBuf,
    pub basis: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "lambda",
    "family",
    "base-n",
    "distortion",
    "base-seeds",
    "lloyd",
    "edge-probability",
    "max-hanging",
    "refinements",
    "mode",
    "models",
    "seed",
    "outdir",
    "include-runtime",
    "basis",
];

pub fn parse_study_file(text: &str) -> Result<StudyFile> {
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!("config line {}: expected key = value, got {raw:?}", i + 1))
        })?;
        let k = k.trim();
        if !KNOWN_KEYS.contains(&k) {
            return Err(Error::Format(format!(
                "config line {}: unknown key {k:?}; known keys: {}",
                i + 1,
                KNOWN_KEYS.join(", ")
            )));
        }
        if kv.insert(k, v.trim()).is_some() {
            return Err(Error::Format(format!("config line {}: duplicate key {k:?}", i + 1)));
        }
    }
    let get = |k: &str| kv.get(k).copied();
    let require = |k: &str| {
        get(k).ok_or_else(|| Error::Format(format!("config is missing the {k:?} key")))
    };
    let parse_num = |k: &str, v: &str| -> Result<f64> {
        v.parse()
            .map_err(|_| Error::Format(format!("config key {k:?}: bad number {v:?}")))
    };
    let parse_int = |k: &str, v: &str| -> Result<usize> {
        v.parse()
            .map_err(|_| Error::Format(format!("config key {k:?}: bad integer {v:?}")))
    };

    let problem = ProblemId::parse(require("problem")?)?;
    let mode = SolveMode::parse(require("mode")?)?;
    let lambda = match get("lambda") {
        Some(v) => parse_num("lambda", v)?,
        None => 1.0,
    };
    let family = match require("family")? {
        "rdqm" => FamilyConfig::Rdqm {
            base_n: get("base-n").map(|v| parse_int("base-n", v)).transpose()?.unwrap_or(4),
            distortion: get("distortion")
                .map(|v| parse_num("distortion", v))
                .transpose()?
                .unwrap_or(0.1),
        },
        "vm" => FamilyConfig::Vm {
            base_seeds: get("base-seeds")
                .map(|v| parse_int("base-seeds", v))
                .transpose()?
                .unwrap_or(25),
            lloyd: get("lloyd").map(|v| parse_int("lloyd", v)).transpose()?.unwrap_or(0),
        },
        "htm" => FamilyConfig::Htm {
            base_n: get("base-n").map(|v| parse_int("base-n", v)).transpose()?.unwrap_or(4),
            edge_probability: get("edge-probability")
                .map(|v| parse_num("edge-probability", v))
                .transpose()?
                .unwrap_or(0.5),
            max_hanging: get("max-hanging")
                .map(|v| parse_int("max-hanging", v))
                .transpose()?
                .unwrap_or(3),
        },
        other => {
            return Err(Error::Format(format!(
                "config key \"family\": {other:?} is not rdqm, vm or htm"
            )))
        }
    };
    let refinements = parse_int("refinements", require("refinements")?)?;
    let models: Vec<PathBuf> = match get("models") {
        Some(v) if !v.is_empty() => v.split(',').map(|s| PathBuf::from(s.trim())).collect(),
        _ => Vec::new(),
    };
    let seed = match get("seed") {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Format(format!("config key \"seed\": bad integer {v:?}")))?,
        None => 0,
    };
    let include_runtime = match get("include-runtime") {
        Some("true") => true,
        Some("false") | None => false,
        Some(other) => {
            return Err(Error::Format(format!(
                "config key \"include-runtime\": {other:?} is not true or false"
            )))
        }
    };
    Ok(StudyFile {
        experiment: ExperimentConfig {
            problem,
            lambda,
            family,
            refinements,
            mode,
            models,
            seed,
            include_runtime,
        },
        outdir: PathBuf::from(require("outdir")?),
        basis: get("basis").map(PathBuf::from),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_configs_parse() {
        let text = "\
# Test 1 on distorted quads, oracle basis.
problem = test1
family = rdqm
base-n = 4
distortion = 0.2
refinements = 4
mode = navem-oracle
seed = 11
outdir = out/t1
";
        let f = parse_study_file(text).unwrap();
        assert_eq!(f.experiment.problem, ProblemId::Test1);
        assert_eq!(f.experiment.refinements, 4);
        assert_eq!(f.experiment.mode, SolveMode::NavemOracle);
        assert!(f.experiment.models.is_empty());
        assert!(!f.experiment.include_runtime);
        assert_eq!(f.outdir, PathBuf::from("out/t1"));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_study_file("problme = test1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("problme") && msg.contains("known keys"), "{msg}");
    }

    #[test]
    fn missing_required_keys_are_named() {
        let err = parse_study_file("problem = test1\nmode = vem\nfamily = rdqm\n").unwrap_err();
        assert!(err.to_string().contains("refinements"), "{err}");
    }

    #[test]
    fn model_lists_split_on_commas() {
        let text = "\
problem = test1
family = vm
refinements = 2
mode = navem
models = a.txt, b.txt,c.txt
outdir = out
";
        let f = parse_study_file(text).unwrap();
        assert_eq!(
            f.experiment.models,
            vec![PathBuf::from("a.txt"), PathBuf::from("b.txt"), PathBuf::from("c.txt")]
        );
    }
}
