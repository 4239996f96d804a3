//! Run reports and their text form.
//!
//! ```text
//! # qfuzz run report
//! ## config
//! <the resolved LoopConfig as TOML>
//! ## records
//! generation,offset,action,reward,epsilon,loss,outcome,blocks,wall_time
//! 0,8123,3,0.000812,1,0.41,completed,59,0.000812
//! ## summary
//! actions=bit_flip(0.01);insert_token;...
//! generations=1000
//! total_reward=...
//! aborted=
//! weights=
//! ## findings
//! generation,outcome,len,path
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a
//! written report gives back an equal value.

use std::fmt::Write as _;
use std::path::PathBuf;

use super::LoopConfig;
use crate::harness::Outcome;

pub const RECORD_HEADER: &str = "generation,offset,action,reward,epsilon,loss,outcome,blocks,wall_time";
const FINDING_HEADER: &str = "generation,outcome,len,path";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("report line {line}: {message}")]
pub struct ReportError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: u64,
    pub offset: usize,
    pub action: usize,
    pub reward: f64,
    pub epsilon: f64,
    /// `None` when no update was made.
    pub loss: Option<f64>,
    pub outcome: Outcome,
    pub blocks: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub generation: u64,
    pub outcome: Outcome,
    pub len: usize,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: LoopConfig,
    pub action_names: Vec<String>,
    pub records: Vec<GenerationRecord>,
    /// `accumulated[i]` is the sum of rewards of records `0..=i`.
    pub accumulated: Vec<f64>,
    pub findings: Vec<Finding>,
    pub weights: Option<PathBuf>,
    pub aborted: Option<String>,
}

impl RunReport {
    pub fn new(config: LoopConfig, action_names: Vec<String>) -> Self {
        Self {
            config,
            action_names,
            records: Vec::new(),
            accumulated: Vec::new(),
            findings: Vec::new(),
            weights: None,
            aborted: None,
        }
    }

    pub fn push(&mut self, record: GenerationRecord) {
        let total = self.total_reward() + record.reward;
        self.accumulated.push(total);
        self.records.push(record);
    }

    pub fn total_reward(&self) -> f64 {
        self.accumulated.last().copied().unwrap_or(0.0)
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }

    /// How often each action was taken.
    pub fn action_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.action_names.len()];
        for r in &self.records {
            if let Some(c) = counts.get_mut(r.action) {
                *c += 1;
            }
        }
        counts
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# qfuzz run report\n## config\n");
        out.push_str(&self.config.to_toml());
        if !out.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("## records\n");
        out.push_str(RECORD_HEADER);
        out.push('\n');
        for r in &self.records {
            let loss = r.loss.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.generation, r.offset, r.action, r.reward, r.epsilon, loss, r.outcome, r.blocks, r.wall_time
            );
        }
        out.push_str("## summary\n");
        let _ = writeln!(out, "actions={}", self.action_names.join(";"));
        let _ = writeln!(out, "generations={}", self.records.len());
        let _ = writeln!(out, "total_reward={}", self.total_reward());
        let _ = writeln!(out, "aborted={}", self.aborted.as_deref().unwrap_or("").replace('\n', " "));
        let weights = self.weights.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let _ = writeln!(out, "weights={weights}");
        out.push_str("## findings\n");
        out.push_str(FINDING_HEADER);
        out.push('\n');
        for f in &self.findings {
            let path = f.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", f.generation, f.outcome, f.len, path);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ReportError> {
        let mut sections: Vec<(&str, usize, Vec<&str>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(name) = line.strip_prefix("## ") {
                sections.push((name.trim(), i + 1, Vec::new()));
            } else if let Some((_, _, body)) = sections.last_mut() {
                body.push(line);
            }
        }
        let section = |name: &str| {
            sections
                .iter()
                .find(|(n, _, _)| *n == name)
                .map(|(_, start, body)| (*start, body.as_slice()))
                .ok_or_else(|| ReportError {
                    line: 0,
                    message: format!("missing section {name:?}"),
                })
        };

        let (cfg_line, cfg_body) = section("config")?;
        let config: LoopConfig = toml::from_str(&cfg_body.join("\n")).map_err(|e| ReportError {
            line: cfg_line,
            message: format!("config: {e}"),
        })?;

        let (summary_line, summary) = section("summary")?;
        let mut action_names = Vec::new();
        let mut aborted = None;
        let mut weights = None;
        let mut generations = None;
        for (k, line) in summary.iter().enumerate() {
            let err = |message: String| ReportError {
                line: summary_line + 1 + k,
                message,
            };
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found {line:?}")))?;
            match key {
                "actions" if !value.is_empty() => {
                    action_names = value.split(';').map(str::to_owned).collect();
                }
                "actions" => {}
                "generations" => {
                    generations = Some(value.parse::<usize>().map_err(|_| err("bad count".into()))?);
                }
                "aborted" if !value.is_empty() => aborted = Some(value.to_owned()),
                "weights" if !value.is_empty() => weights = Some(PathBuf::from(value)),
                _ => {}
            }
        }

        let mut report = RunReport::new(config, action_names);
        report.aborted = aborted;
        report.weights = weights;

        let (rec_line, records) = section("records")?;
        for (k, line) in records.iter().enumerate() {
            let line_no = rec_line + 1 + k;
            if k == 0 {
                if *line != RECORD_HEADER {
                    return Err(ReportError {
                        line: line_no,
                        message: "bad records header".into(),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            report.push(parse_record(line).map_err(|message| ReportError {
                line: line_no,
                message,
            })?);
        }
        if let Some(n) = generations {
            if n != report.records.len() {
                return Err(ReportError {
                    line: summary_line,
                    message: format!("summary says {n} generations, found {} records", report.records.len()),
                });
            }
        }

        let (find_line, findings) = section("findings")?;
        for (k, line) in findings.iter().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            report.findings.push(parse_finding(line).map_err(|message| ReportError {
                line: find_line + 1 + k,
                message,
            })?);
        }
        Ok(report)
    }
}

fn field<T: std::str::FromStr>(parts: &[&str], i: usize, name: &str) -> Result<T, String> {
    parts
        .get(i)
        .ok_or_else(|| format!("missing {name}"))?
        .parse()
        .map_err(|_| format!("bad {name} {:?}", parts[i]))
}

fn parse_record(line: &str) -> Result<GenerationRecord, String> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != 9 {
        return Err(format!("expected 9 fields, found {}", parts.len()));
    }
    let loss = if parts[5].is_empty() {
        None
    } else {
        Some(field(&parts, 5, "loss")?)
    };
    Ok(GenerationRecord {
        generation: field(&parts, 0, "generation")?,
        offset: field(&parts, 1, "offset")?,
        action: field(&parts, 2, "action")?,
        reward: field(&parts, 3, "reward")?,
        epsilon: field(&parts, 4, "epsilon")?,
        loss,
        outcome: field(&parts, 6, "outcome")?,
        blocks: field(&parts, 7, "blocks")?,
        wall_time: field(&parts, 8, "wall_time")?,
    })
}

fn parse_finding(line: &str) -> Result<Finding, String> {
    let parts: Vec<&str> = line.splitn(4, ',').collect();
    if parts.len() != 4 {
        return Err(format!("expected 4 fields, found {}", parts.len()));
    }
    Ok(Finding {
        generation: field(&parts, 0, "generation")?,
        outcome: field(&parts, 1, "outcome")?,
        len: field(&parts, 2, "len")?,
        path: (!parts[3].is_empty()).then(|| PathBuf::from(parts[3])),
    })
}
