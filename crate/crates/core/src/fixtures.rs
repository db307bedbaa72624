//! Golden output files and their verification.
//!
//! Layout: `<dir>/<name>.csv` is the frozen output of a CLI invocation and
//! `<dir>/<name>.manifest.json` its sidecar ([`GoldenFixture`]). The first
//! line of the CSV is the run manifest, so verification simply replays it.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cli::{render, replay};
use crate::error::{Error, Result};
use crate::simulation::{three_sigma, ExperimentReport};

/// How a regenerated file is compared with the frozen one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum Tolerance {
    /// Byte-identical output.
    Exact,
    /// The regenerated miss rate lies within `band` of `miss_rate`.
    MissRateBand { miss_rate: f64, band: f64 },
}

/// Sidecar of a frozen output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFixture {
    pub name: String,
    pub description: String,
    /// Command line (without the program name) that produced the file.
    pub args: Vec<String>,
    /// Hex sha256 of the frozen file.
    pub sha256: String,
    pub tolerance: Tolerance,
}

/// A fixture to be generated: name, description, command line, and whether
/// the comparison uses a miss-rate band.
#[derive(Debug, Clone, Copy)]
pub struct FixtureRecipe {
    pub name: &'static str,
    pub description: &'static str,
    pub args: &'static [&'static str],
    pub banded: bool,
}

/// The configurations frozen under `crates/core/fixtures`.
pub const RECIPES: &[FixtureRecipe] = &[
    FixtureRecipe {
        name: "iterated-known-n1000",
        description: "Known-center iterated width with x_i = 0.1 and tenths budget split, n = 1000, delta0 = 100",
        args: &["curves", "--n", "1000", "--delta0", "100", "--which", "iterated-known,tuned,chebyshev,gaussian-benchmark"],
        banded: false,
    },
    FixtureRecipe {
        name: "iterated-empirical-n1000",
        description: "Empirical-start iterated width against the empirical mean and the Gaussian benchmark, n = 1000",
        args: &["curves", "--n", "1000", "--which", "iterated,chebyshev,gaussian-benchmark"],
        banded: false,
    },
    FixtureRecipe {
        name: "last-step-n1000",
        description: "Last-step width (inf where infeasible), n = 1000",
        args: &["curves", "--n", "1000", "--which", "last-step,iterated,gaussian-benchmark"],
        banded: false,
    },
    FixtureRecipe {
        name: "last-step-n300",
        description: "Last-step width (inf where infeasible), n = 300",
        args: &["curves", "--n", "300", "--which", "last-step,iterated,gaussian-benchmark"],
        banded: false,
    },
    FixtureRecipe {
        name: "kurtosis-n2000-c3",
        description: "Kurtosis scheme mean width and variance upper bound, n = 2000, c = 3",
        args: &["curves", "--n", "2000", "--c", "3", "--which", "kurtosis-mean,kurtosis-sd-upper,kurtosis-upper,gaussian-benchmark"],
        banded: false,
    },
    FixtureRecipe {
        name: "kurtosis-n2000-c6-x0.1",
        description: "Kurtosis scheme with constant jitter 0.1, n = 2000, c = 6",
        args: &[
            "curves", "--n", "2000", "--c", "6", "--kurtosis-x", "0.1", "--which",
            "kurtosis-mean,kurtosis-sd-upper,kurtosis-upper,gaussian-benchmark",
        ],
        banded: false,
    },
    FixtureRecipe {
        name: "kurtosis-n5000-c3",
        description: "Kurtosis scheme mean width and variance upper bound, n = 5000, c = 3",
        args: &["curves", "--n", "5000", "--c", "3", "--which", "kurtosis-mean,kurtosis-sd-upper,kurtosis-upper,gaussian-benchmark"],
        banded: false,
    },
    FixtureRecipe {
        name: "variance-comparison-n1000",
        description: "Variance lower bound against the empirical mean and the iterated schemes, n = 1000",
        args: &["curves", "--n", "1000", "--which", "lower-variance,chebyshev,iterated,last-step,gaussian-benchmark"],
        banded: false,
    },
    FixtureRecipe {
        name: "lower-bounds-n2000-c6",
        description: "Lower bounds next to the matching upper bounds, n = 2000, c = 6",
        args: &["lower-bounds", "--n", "2000", "--c", "6"],
        banded: false,
    },
    FixtureRecipe {
        name: "simulate-three-point-n1000",
        description: "Empirical mean with the variance lower bound as half-width on the tuned three-point law, eps = 1e-3",
        args: &[
            "--seed", "11", "simulate", "--law", "three-point", "--n", "1000", "--method", "empirical-mean", "--eps",
            "1e-3", "--replicates", "20000",
        ],
        banded: true,
    },
];

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn csv_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

fn sidecar_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest.json"))
}

/// Summary record written by `simulate`.
pub fn summary_of(text: &str) -> Result<ExperimentReport> {
    let line = text
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("# summary: "))
        .ok_or_else(|| Error::Parse("no summary line".into()))?;
    serde_json::from_str(line).map_err(|e| Error::Parse(format!("bad summary: {e}")))
}

/// Runs `recipe` and writes its CSV and sidecar into `dir`.
pub fn regenerate(dir: &Path, recipe: &FixtureRecipe) -> Result<GoldenFixture> {
    let text = render(recipe.args, None)?;
    let tolerance = if recipe.banded {
        let r = summary_of(&text)?;
        let succeeded = r.replicates - r.failures;
        Tolerance::MissRateBand {
            miss_rate: r.miss_rate,
            band: three_sigma(r.miss_rate.max(r.nominal_miss), succeeded.max(1)),
        }
    } else {
        Tolerance::Exact
    };
    let fixture = GoldenFixture {
        name: recipe.name.into(),
        description: recipe.description.into(),
        args: recipe.args.iter().map(|s| s.to_string()).collect(),
        sha256: sha256_hex(text.as_bytes()),
        tolerance,
    };
    std::fs::create_dir_all(dir)?;
    std::fs::write(csv_path(dir, recipe.name), &text)?;
    let json =
        serde_json::to_string_pretty(&fixture).map_err(|e| Error::Numerical(e.to_string()))?;
    std::fs::write(sidecar_path(dir, recipe.name), json + "\n")?;
    Ok(fixture)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    Fail(String),
}

/// Per-fixture outcomes, sorted by name.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureReport {
    pub outcomes: Vec<(String, Outcome)>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        !self.outcomes.is_empty() && self.outcomes.iter().all(|(_, o)| *o == Outcome::Pass)
    }
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, o) in &self.outcomes {
            match o {
                Outcome::Pass => writeln!(f, "PASS {name}")?,
                Outcome::Fail(why) => writeln!(f, "FAIL {name}: {why}")?,
            }
        }
        Ok(())
    }
}

fn first_difference(a: &str, b: &str) -> String {
    for (i, (x, y)) in a.lines().zip(b.lines()).enumerate() {
        if x != y {
            return format!("line {}:\n  frozen:      {x}\n  regenerated: {y}", i + 1);
        }
    }
    format!(
        "line counts differ ({} frozen, {} regenerated)",
        a.lines().count(),
        b.lines().count()
    )
}

fn check_one(dir: &Path, name: &str) -> Outcome {
    match check_inner(dir, name) {
        Ok(o) => o,
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn check_inner(dir: &Path, name: &str) -> Result<Outcome> {
    let csv = csv_path(dir, name);
    let side = sidecar_path(dir, name);
    if !side.exists() {
        return Ok(Outcome::Fail(format!("missing sidecar {}", side.display())));
    }
    if !csv.exists() {
        return Ok(Outcome::Fail(format!(
            "missing fixture file {}",
            csv.display()
        )));
    }
    let fixture: GoldenFixture = serde_json::from_str(&std::fs::read_to_string(&side)?)
        .map_err(|e| Error::Parse(format!("bad sidecar {}: {e}", side.display())))?;
    let frozen = std::fs::read_to_string(&csv)?;
    if sha256_hex(frozen.as_bytes()) != fixture.sha256 {
        return Ok(Outcome::Fail(
            "frozen file does not match the sidecar digest".into(),
        ));
    }
    let fresh = replay(&csv, None)?;
    Ok(match fixture.tolerance {
        Tolerance::Exact if fresh == frozen => Outcome::Pass,
        Tolerance::Exact => Outcome::Fail(first_difference(&frozen, &fresh)),
        Tolerance::MissRateBand { miss_rate, band } => {
            let got = summary_of(&fresh)?.miss_rate;
            if (got - miss_rate).abs() <= band {
                Outcome::Pass
            } else {
                Outcome::Fail(format!(
                    "miss rate {got:?} outside {miss_rate:?} ± {band:?}"
                ))
            }
        }
    })
}

/// Re-runs every fixture in `dir` plus every name in `expected`; a missing
/// CSV or sidecar is a failure. The result does not depend on directory
/// order.
pub fn verify_fixtures(dir: &Path, expected: &[&str]) -> Result<FixtureReport> {
    let mut names: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
    if dir.is_dir() {
        for entry in std::fs::read_dir(dir)? {
            let file = entry?.file_name().to_string_lossy().into_owned();
            let stem = file
                .strip_suffix(".manifest.json")
                .or_else(|| file.strip_suffix(".csv"));
            if let Some(stem) = stem {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    names.dedup();
    let outcomes = names
        .iter()
        .map(|n| (n.clone(), check_one(dir, n)))
        .collect();
    Ok(FixtureReport { outcomes })
}

/// Names of all [`RECIPES`].
pub fn recipe_names() -> Vec<&'static str> {
    RECIPES.iter().map(|r| r.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let report = verify_fixtures(dir.path(), &["absent"]).unwrap();
        assert!(!report.passed());
        assert!(matches!(&report.outcomes[0].1, Outcome::Fail(m) if m.contains("missing")));
        assert!(!verify_fixtures(dir.path(), &[]).unwrap().passed());
    }

    #[test]
    fn round_trip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let recipe = FixtureRecipe {
            name: "tiny",
            description: "tiny",
            args: &["lower-bounds", "--n", "50", "--points", "4"],
            banded: false,
        };
        regenerate(dir.path(), &recipe).unwrap();
        let report = verify_fixtures(dir.path(), &["tiny"]).unwrap();
        assert!(report.passed(), "{report}");
        let again = verify_fixtures(dir.path(), &["tiny"]).unwrap();
        assert_eq!(report, again);

        let path = dir.path().join("tiny.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen(",", ";", 1)).unwrap();
        assert!(!verify_fixtures(dir.path(), &[]).unwrap().passed());

        std::fs::remove_file(dir.path().join("tiny.csv")).unwrap();
        assert!(!verify_fixtures(dir.path(), &[]).unwrap().passed());
    }
}
