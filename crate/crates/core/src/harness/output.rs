//! Summary statistics, CSV logs and run metadata.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::history::Objective;

use super::config::ExperimentConfig;
use super::run::{EpisodeFailure, ExperimentOutput};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const PSEUDO_REGRET_FILE: &str = "pseudo_regret.csv";
pub const METADATA_FILE: &str = "metadata.toml";

pub const SUMMARY_HEADER: [&str; 4] = ["variant", "n_replicates", "mean", "se"];
pub const EPISODE_HEADER: [&str; 10] = [
    "variant",
    "replicate",
    "step",
    "action",
    "reward",
    "eta",
    "theta0",
    "theta1",
    "theta2",
    "cumulative_regret_or_reward",
];

/// Mean and standard error of per-replicate values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample SD over sqrt(n); 0 when `n == 1`.
    pub se: f64,
    /// False when `n == 1` and the SE is undefined.
    pub se_defined: bool,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Summary { n, mean, se: 0.0, se_defined: false });
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let se = (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt();
    Ok(Summary { n, mean, se, se_defined: true })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    /// `None` when every replicate of the variant failed.
    pub summary: Option<Summary>,
}

/// Shortest round-trip text of a float; reading it back gives the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn summary_rows(out: &ExperimentOutput) -> Vec<SummaryRow> {
    out.variants
        .iter()
        .map(|v| SummaryRow {
            variant: v.name.clone(),
            summary: summarize(&v.finals()).ok(),
        })
        .collect()
}

/// Summary of the bandit pseudo-regret, when every episode logged it.
pub fn pseudo_regret_rows(out: &ExperimentOutput) -> Option<Vec<SummaryRow>> {
    if out.objective != Objective::Regret {
        return None;
    }
    out.variants
        .iter()
        .map(|v| {
            let vals: Option<Vec<f64>> = v.episodes.iter().map(|e| e.final_pseudo_regret()).collect();
            vals.map(|vals| SummaryRow {
                variant: v.name.clone(),
                summary: summarize(&vals).ok(),
            })
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SUMMARY_HEADER)?;
    for r in rows {
        match r.summary {
            Some(s) => wr.write_record([
                r.variant.clone(),
                s.n.to_string(),
                fmt_f64(s.mean),
                fmt_f64(s.se),
            ])?,
            None => wr.write_record([r.variant.as_str(), "0", "", ""])?,
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_episodes_csv<W: Write>(out: &ExperimentOutput, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(EPISODE_HEADER)?;
    for v in &out.variants {
        for e in &v.episodes {
            for s in &e.steps {
                let th = s.theta.map(|t| t.to_array());
                wr.write_record([
                    e.variant.clone(),
                    e.replicate.to_string(),
                    s.step.to_string(),
                    s.action.to_string(),
                    fmt_f64(s.reward),
                    opt(s.eta),
                    opt(th.map(|t| t[0])),
                    opt(th.map(|t| t[1])),
                    opt(th.map(|t| t[2])),
                    fmt_f64(s.cumulative),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct NoteCount {
    variant: String,
    episodes: usize,
    note: String,
}

#[derive(Debug, Serialize)]
struct FailureEntry {
    variant: String,
    replicate: usize,
    message: String,
}

impl From<&EpisodeFailure> for FailureEntry {
    fn from(f: &EpisodeFailure) -> Self {
        FailureEntry {
            variant: f.variant.clone(),
            replicate: f.replicate,
            message: f.message.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    failed_episodes: usize,
    /// Variants with a single replicate; their SE is printed as 0.
    se_undefined: Vec<String>,
    failures: Vec<FailureEntry>,
    notes: Vec<NoteCount>,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    generator: String,
    objective: &'static str,
    files: Vec<&'static str>,
    diagnostics: Diagnostics,
    config: &'a ExperimentConfig,
}

/// Metadata echoing the resolved config plus failure and note counts.
pub fn metadata_toml(out: &ExperimentOutput) -> Result<String> {
    let rows = summary_rows(out);
    let mut notes = Vec::new();
    for v in &out.variants {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &v.episodes {
            for n in &e.notes {
                *counts.entry(n.as_str()).or_default() += 1;
            }
        }
        notes.extend(counts.into_iter().map(|(note, episodes)| NoteCount {
            variant: v.name.clone(),
            episodes,
            note: note.to_string(),
        }));
    }
    let mut files = vec![SUMMARY_FILE, EPISODES_FILE];
    if pseudo_regret_rows(out).is_some() {
        files.push(PSEUDO_REGRET_FILE);
    }
    let meta = Metadata {
        generator: format!("paramexp {}", env!("CARGO_PKG_VERSION")),
        objective: match out.objective {
            Objective::Regret => "cumulative regret (lower is better)",
            Objective::Reward => "mean per-patient cumulative reward (higher is better)",
        },
        files,
        diagnostics: Diagnostics {
            failed_episodes: out.n_failures(),
            se_undefined: rows
                .iter()
                .filter(|r| r.summary.is_some_and(|s| !s.se_defined))
                .map(|r| r.variant.clone())
                .collect(),
            failures: out.variants.iter().flat_map(|v| v.failures.iter().map(FailureEntry::from)).collect(),
            notes,
        },
        config: &out.config,
    };
    toml::to_string(&meta).map_err(|e| Error::Io(e.to_string()))
}

/// Writes every output file into `dir` and returns their paths.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let create = |name: &str| -> Result<(PathBuf, fs::File)> {
        let p = dir.join(name);
        let f = fs::File::create(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        Ok((p, f))
    };
    let mut paths = Vec::new();
    let (p, f) = create(SUMMARY_FILE)?;
    write_summary_csv(&summary_rows(out), std::io::BufWriter::new(f))?;
    paths.push(p);
    let (p, f) = create(EPISODES_FILE)?;
    write_episodes_csv(out, std::io::BufWriter::new(f))?;
    paths.push(p);
    if let Some(rows) = pseudo_regret_rows(out) {
        let (p, f) = create(PSEUDO_REGRET_FILE)?;
        write_summary_csv(&rows, std::io::BufWriter::new(f))?;
        paths.push(p);
    }
    let (p, mut f) = create(METADATA_FILE)?;
    f.write_all(metadata_toml(out)?.as_bytes())?;
    paths.push(p);
    Ok(paths)
}

/// Recomputes the summary from an episode log: the last logged step of
/// each (variant, replicate) is its final value. Variants keep their
/// order of first appearance.
pub fn summarize_episode_log<R: Read>(r: R) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(EPISODE_HEADER) {
        return Err(Error::InvalidInput("not an episode log: unexpected header".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut finals: BTreeMap<(usize, usize), (usize, f64)> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |what: &str| Error::InvalidInput(format!("bad {what} on log line {}", rec.position().map_or(0, |p| p.line())));
        let name = field(0);
        let vi = match order.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                order.push(name.to_string());
                order.len() - 1
            }
        };
        let rep: usize = field(1).parse().map_err(|_| bad("replicate"))?;
        let step: usize = field(2).parse().map_err(|_| bad("step"))?;
        let value: f64 = field(9).parse().map_err(|_| bad("cumulative value"))?;
        let slot = finals.entry((vi, rep)).or_insert((step, value));
        if step >= slot.0 {
            *slot = (step, value);
        }
    }
    Ok(order
        .iter()
        .enumerate()
        .map(|(vi, name)| {
            let vals: Vec<f64> = finals.range((vi, 0)..(vi + 1, 0)).map(|(_, &(_, v))| v).collect();
            SummaryRow {
                variant: name.clone(),
                summary: summarize(&vals).ok(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_matches_hand_computed_examples() {
        let s = summarize(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((s.mean, s.se), (5.0, 0.0));
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.se - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let s = summarize(&[7.0]).unwrap();
        assert_eq!((s.mean, s.se, s.se_defined), (7.0, 0.0, false));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-12, 1e300, 0.0, 42.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn summary_csv_layout() {
        let rows = vec![
            SummaryRow { variant: "a".into(), summary: summarize(&[1.0, 2.0, 3.0]).ok() },
            SummaryRow { variant: "b, c".into(), summary: None },
        ];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "variant,n_replicates,mean,se");
        assert!(lines[1].starts_with("a,3,2.0,0.57735"));
        assert_eq!(lines[2], "\"b, c\",0,,");
    }

    #[test]
    fn log_summary_uses_the_last_step_of_each_replicate() {
        let log = "variant,replicate,step,action,reward,eta,theta0,theta1,theta2,cumulative_regret_or_reward\n\
                   x,0,1,0,1.0,,,,,0.5\n\
                   x,0,2,1,0.0,,,,,1.5\n\
                   y,0,1,0,1.0,0.1,,,,4.0\n\
                   x,1,1,0,1.0,,,,,2.5\n";
        let rows = summarize_episode_log(log.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].variant, "x");
        let s = rows[0].summary.unwrap();
        assert_eq!((s.n, s.mean), (2, 2.0));
        assert_eq!(rows[1].summary.unwrap().se_defined, false);
        assert!(summarize_episode_log("a,b\n1,2\n".as_bytes()).is_err());
    }
}
