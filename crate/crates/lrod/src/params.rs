//! JSON parameter files, so a calibration run can feed later optimisation runs
//! without re-training.
//!
//! Two shapes, discriminated by a `technique` tag:
//!
//! ```json
//! {"technique":"random","b":0.87,"dist":{"family":"exponential","params":[0.1378555]}}
//! {"technique":"markov","states":8,"p":[[...]x8],"counts":[[...]x8]}
//! ```
//!
//! Distribution parameters are positional: `[rate]` for the exponential,
//! `[scale, shape]` for the Weibull. Loading re-runs the full domain validation,
//! so a hand-edited file cannot smuggle in a non-stochastic matrix or an
//! out-of-range payment probability.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complete::Forecaster;
use crate::error::{Error, Result};
use crate::markov_defaults::{TransitionMatrix, STATE_COUNT};
use crate::random_defaults::{RandomDefaultsParams, TruncationDist};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistSpec {
    pub family: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "technique")]
pub enum ParamsFile {
    #[serde(rename = "random")]
    Random { b: f64, dist: Option<DistSpec> },
    #[serde(rename = "markov")]
    Markov { states: usize, p: Vec<Vec<f64>>, counts: Vec<Vec<u64>> },
}

impl ParamsFile {
    pub fn from_forecaster(f: &Forecaster) -> ParamsFile {
        match f {
            Forecaster::Random(params) => ParamsFile::Random {
                b: params.b,
                dist: params.truncation.as_ref().map(|d| match d {
                    TruncationDist::Exponential { rate } => DistSpec {
                        family: "exponential".into(),
                        params: vec![*rate],
                    },
                    TruncationDist::Weibull { scale, shape } => DistSpec {
                        family: "weibull".into(),
                        params: vec![*scale, *shape],
                    },
                }),
            },
            Forecaster::Markov(m) => ParamsFile::Markov {
                states: STATE_COUNT,
                p: m.p().iter().map(|row| row.to_vec()).collect(),
                counts: m.counts().iter().map(|row| row.to_vec()).collect(),
            },
        }
    }

    pub fn into_forecaster(self) -> Result<Forecaster> {
        match self {
            ParamsFile::Random { b, dist } => {
                let truncation = dist.map(|d| dist_from_spec(&d)).transpose()?;
                let params = RandomDefaultsParams { b, truncation };
                params.validate()?;
                Ok(Forecaster::Random(params))
            }
            ParamsFile::Markov { states, p, counts } => {
                if states != STATE_COUNT {
                    return Err(Error::Schema(format!(
                        "chain has {states} states, expected {STATE_COUNT}"
                    )));
                }
                let p = square_matrix(p, "p")?;
                let counts = square_matrix(counts, "counts")?;
                Ok(Forecaster::Markov(TransitionMatrix::new(p, counts)?))
            }
        }
    }
}

fn dist_from_spec(spec: &DistSpec) -> Result<TruncationDist> {
    let dist = match (spec.family.as_str(), spec.params.as_slice()) {
        ("exponential", [rate]) => TruncationDist::Exponential { rate: *rate },
        ("weibull", [scale, shape]) => TruncationDist::Weibull { scale: *scale, shape: *shape },
        ("exponential", other) => {
            return Err(Error::Schema(format!(
                "exponential takes 1 parameter, got {}",
                other.len()
            )));
        }
        ("weibull", other) => {
            return Err(Error::Schema(format!("weibull takes 2 parameters, got {}", other.len())));
        }
        (family, _) => {
            return Err(Error::Schema(format!("unknown distribution family \"{family}\"")));
        }
    };
    dist.validate()?;
    Ok(dist)
}

fn square_matrix<T: Copy + Default>(
    rows: Vec<Vec<T>>,
    name: &str,
) -> Result<[[T; STATE_COUNT]; STATE_COUNT]> {
    if rows.len() != STATE_COUNT {
        return Err(Error::Schema(format!("{name} has {} rows, expected {STATE_COUNT}", rows.len())));
    }
    let mut out = [[T::default(); STATE_COUNT]; STATE_COUNT];
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != STATE_COUNT {
            return Err(Error::Schema(format!(
                "{name} row {i} has {} entries, expected {STATE_COUNT}",
                row.len()
            )));
        }
        out[i].copy_from_slice(&row);
    }
    Ok(out)
}

pub fn save_params(path: &Path, forecaster: &Forecaster) -> Result<()> {
    let file = ParamsFile::from_forecaster(forecaster);
    let mut json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Schema(format!("cannot serialize parameters: {e}")))?;
    json.push('\n');
    fs::write(path, json).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load_params(path: &Path) -> Result<Forecaster> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let file: ParamsFile = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    file.into_forecaster()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delinquency::DEFAULT_PAYMENT_THRESHOLD;
    use crate::markov_defaults::estimate_transition_matrix;
    use crate::portfolio::{generate_synthetic_portfolio, GeneratorConfig};

    #[test]
    fn random_params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("random.json");
        let f = Forecaster::Random(RandomDefaultsParams {
            b: 0.87,
            truncation: Some(TruncationDist::Exponential { rate: 0.1378555 }),
        });
        save_params(&path, &f).unwrap();
        let loaded = load_params(&path).unwrap();
        match loaded {
            Forecaster::Random(p) => {
                assert_eq!(p.b, 0.87);
                assert_eq!(p.truncation, Some(TruncationDist::Exponential { rate: 0.1378555 }));
            }
            _ => panic!("wrong technique"),
        }
    }

    #[test]
    fn weibull_params_keep_scale_then_shape_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("random.json");
        let f = Forecaster::Random(RandomDefaultsParams {
            b: 0.45,
            truncation: Some(TruncationDist::Weibull { scale: 24.449566, shape: 1.688026 }),
        });
        save_params(&path, &f).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"weibull\""));
        let loaded = load_params(&path).unwrap();
        match loaded {
            Forecaster::Random(p) => {
                assert_eq!(
                    p.truncation,
                    Some(TruncationDist::Weibull { scale: 24.449566, shape: 1.688026 })
                );
            }
            _ => panic!("wrong technique"),
        }
    }

    #[test]
    fn markov_params_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("markov.json");
        // An estimated matrix has irrational-looking count ratios, making this a
        // real test of float round-tripping through JSON.
        let cfg =
            GeneratorConfig::parse("n_accounts = 40\nwriteoff_propensity = 0.2").unwrap();
        let p = generate_synthetic_portfolio(&cfg, 3).unwrap();
        let m = estimate_transition_matrix(&p, DEFAULT_PAYMENT_THRESHOLD).unwrap();
        save_params(&path, &Forecaster::Markov(m.clone())).unwrap();
        let loaded = load_params(&path).unwrap();
        match loaded {
            Forecaster::Markov(l) => {
                assert_eq!(l.p(), m.p());
                assert_eq!(l.counts(), m.counts());
            }
            _ => panic!("wrong technique"),
        }
    }

    #[test]
    fn files_carry_the_technique_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let f = Forecaster::Random(RandomDefaultsParams { b: 0.5, truncation: None });
        save_params(&path, &f).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"technique\": \"random\""));
        assert!(text.contains("\"dist\": null"));
    }

    #[test]
    fn bad_family_is_rejected() {
        let json = r#"{"technique":"random","b":0.5,"dist":{"family":"gamma","params":[1.0]}}"#;
        let file: ParamsFile = serde_json::from_str(json).unwrap();
        assert!(matches!(file.into_forecaster(), Err(Error::Schema(_))));
    }

    #[test]
    fn wrong_parameter_arity_is_rejected() {
        let json = r#"{"technique":"random","b":0.5,"dist":{"family":"weibull","params":[1.0]}}"#;
        let file: ParamsFile = serde_json::from_str(json).unwrap();
        assert!(matches!(file.into_forecaster(), Err(Error::Schema(_))));
    }

    #[test]
    fn out_of_range_probability_is_rejected() {
        let json = r#"{"technique":"random","b":1.5,"dist":null}"#;
        let file: ParamsFile = serde_json::from_str(json).unwrap();
        assert!(file.into_forecaster().is_err());
    }

    #[test]
    fn non_stochastic_matrix_is_rejected() {
        let mut p = vec![vec![0.0; 8]; 8];
        for (i, row) in p.iter_mut().enumerate() {
            row[i] = 0.9; // rows sum to 0.9, not 1
        }
        let file = ParamsFile::Markov { states: 8, p, counts: vec![vec![0; 8]; 8] };
        assert!(file.into_forecaster().is_err());
    }

    #[test]
    fn wrong_state_count_is_rejected() {
        let file = ParamsFile::Markov { states: 5, p: vec![vec![0.0; 8]; 8], counts: vec![vec![0; 8]; 8] };
        assert!(matches!(file.into_forecaster(), Err(Error::Schema(_))));
    }

    #[test]
    fn missing_file_reports_io_error() {
        assert!(matches!(load_params(Path::new("/nonexistent/x.json")), Err(Error::Io(_))));
    }
}
