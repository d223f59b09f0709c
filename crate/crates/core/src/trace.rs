//! Per-iteration solver records and their CSV form.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lqr::fmt_f64;
use crate::{Error, Gain, Result};

/// How a solver run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIters,
    RestartBudgetExceeded,
    JumpBudgetExceeded,
    LeftFeasibleSet,
    /// Wall-clock budget exhausted.
    TimeLimit,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Converged" => Status::Converged,
            "MaxIters" => Status::MaxIters,
            "RestartBudgetExceeded" => Status::RestartBudgetExceeded,
            "JumpBudgetExceeded" => Status::JumpBudgetExceeded,
            "LeftFeasibleSet" => Status::LeftFeasibleSet,
            "TimeLimit" => Status::TimeLimit,
            other => return Err(Error::Parse(format!("unknown status {other:?}"))),
        })
    }
}

/// Which solver family produced the trace; fixes the CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    Slqr,
    Flow,
    Olqr,
}

impl TraceKind {
    fn header(self) -> &'static str {
        match self {
            TraceKind::Slqr => "iter,f,grad_norm,restart,wall_ms,lyap_solves",
            TraceKind::Flow => "iter,f,grad_norm,restart,wall_ms,lyap_solves,time,energy,dfdt",
            TraceKind::Olqr => "iter,f,grad_norm,restart,wall_ms,lyap_solves,phase,min_eig_est,ncd_steps,nag_restarts",
        }
    }
}

/// Outer-loop phase of the output-feedback solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Ncd,
    Snag,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Ncd => "ncd",
            Phase::Snag => "snag",
        }
    }
}

/// Columns beyond the common ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extra {
    None,
    Flow { time: f64, energy: f64, dfdt: f64 },
    Olqr { phase: Phase, min_eig_est: f64, ncd_steps: u64, nag_restarts: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    pub f: f64,
    pub grad_norm: f64,
    /// A restart (or jump) happened just before this row.
    pub restart: bool,
    pub wall_ms: f64,
    /// Cumulative Lyapunov solves.
    pub lyap_solves: u64,
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub kind: TraceKind,
    pub solver: String,
    pub status: Status,
    /// Ordered `key=value` header entries (configuration, warnings).
    pub meta: Vec<(String, String)>,
    pub final_gain: Option<Gain>,
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new(kind: TraceKind, solver: impl Into<String>) -> Self {
        Self { kind, solver: solver.into(), status: Status::MaxIters, meta: Vec::new(), final_gain: None, rows: Vec::new() }
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.push((key.into(), value.into()));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Number of restarts (or jumps) recorded.
    pub fn restarts(&self) -> usize {
        self.rows.iter().filter(|r| r.restart).count()
    }

    /// Copy with every `wall_ms` set to zero, for byte-level comparisons.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        for r in &mut t.rows {
            r.wall_ms = 0.0;
        }
        t
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# solver={}", self.solver);
        let _ = writeln!(s, "# kind={:?}", self.kind);
        let _ = writeln!(s, "# status={}", self.status);
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}={}", v.replace('\n', " "));
        }
        if let Some(g) = &self.final_gain {
            let rows: Vec<String> = g
                .to_rows()
                .iter()
                .map(|r| format!("[{}]", r.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")))
                .collect();
            let _ = writeln!(s, "# final_gain=[{}]", rows.join(","));
        }
        s.push_str(self.kind.header());
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{}",
                r.iter,
                fmt_f64(r.f),
                fmt_f64(r.grad_norm),
                u8::from(r.restart),
                fmt_f64(r.wall_ms),
                r.lyap_solves
            );
            match r.extra {
                Extra::None => {}
                Extra::Flow { time, energy, dfdt } => {
                    let _ = write!(s, ",{},{},{}", fmt_f64(time), fmt_f64(energy), fmt_f64(dfdt));
                }
                Extra::Olqr { phase, min_eig_est, ncd_steps, nag_restarts } => {
                    let _ = write!(s, ",{},{},{ncd_steps},{nag_restarts}", phase.as_str(), fmt_f64(min_eig_est));
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut text = String::new();
        for line in r.lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_csv(&text)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut solver = None;
        let mut kind = None;
        let mut status = None;
        let mut meta = Vec::new();
        let mut final_gain = None;
        let mut rows = Vec::new();
        let mut header_seen = false;

        for line in text.lines() {
            if let Some(comment) = line.strip_prefix("# ") {
                let (k, v) = comment.split_once('=').ok_or_else(|| Error::Parse(format!("bad header line {line:?}")))?;
                match k {
                    "solver" => solver = Some(v.to_string()),
                    "kind" => kind = Some(parse_kind(v)?),
                    "status" => status = Some(v.parse()?),
                    "final_gain" => {
                        let rows: Vec<Vec<f64>> = serde_json::from_str(v)?;
                        final_gain = Some(Gain::from_rows(&rows)?);
                    }
                    _ => meta.push((k.to_string(), v.to_string())),
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let kind = kind.ok_or_else(|| Error::Parse("missing kind header".into()))?;
            if !header_seen {
                if line != kind.header() {
                    return Err(Error::Parse(format!("unexpected column header {line:?}")));
                }
                header_seen = true;
                continue;
            }
            rows.push(parse_row(kind, line)?);
        }
        Ok(Self {
            kind: kind.ok_or_else(|| Error::Parse("missing kind header".into()))?,
            solver: solver.ok_or_else(|| Error::Parse("missing solver header".into()))?,
            status: status.ok_or_else(|| Error::Parse("missing status header".into()))?,
            meta,
            final_gain,
            rows,
        })
    }
}

fn parse_kind(s: &str) -> Result<TraceKind> {
    match s {
        "Slqr" => Ok(TraceKind::Slqr),
        "Flow" => Ok(TraceKind::Flow),
        "Olqr" => Ok(TraceKind::Olqr),
        _ => Err(Error::Parse(format!("unknown trace kind {s:?}"))),
    }
}

fn field<T: FromStr>(cols: &[&str], i: usize) -> Result<T> {
    cols.get(i)
        .ok_or_else(|| Error::Parse(format!("missing column {i}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("bad value {:?} in column {i}", cols[i])))
}

fn parse_row(kind: TraceKind, line: &str) -> Result<TraceRow> {
    let cols: Vec<&str> = line.split(',').collect();
    let expected = kind.header().split(',').count();
    if cols.len() != expected {
        return Err(Error::Parse(format!("expected {expected} columns, got {}", cols.len())));
    }
    let restart = match cols[3] {
        "0" => false,
        "1" => true,
        other => return Err(Error::Parse(format!("bad restart flag {other:?}"))),
    };
    let extra = match kind {
        TraceKind::Slqr => Extra::None,
        TraceKind::Flow => Extra::Flow { time: field(&cols, 6)?, energy: field(&cols, 7)?, dfdt: field(&cols, 8)? },
        TraceKind::Olqr => Extra::Olqr {
            phase: match cols[6] {
                "ncd" => Phase::Ncd,
                "snag" => Phase::Snag,
                other => return Err(Error::Parse(format!("bad phase {other:?}"))),
            },
            min_eig_est: field(&cols, 7)?,
            ncd_steps: field(&cols, 8)?,
            nag_restarts: field(&cols, 9)?,
        },
    };
    Ok(TraceRow {
        iter: field(&cols, 0)?,
        f: field(&cols, 1)?,
        grad_norm: field(&cols, 2)?,
        restart,
        wall_ms: field(&cols, 4)?,
        lyap_solves: field(&cols, 5)?,
        extra,
    })
}

/// Milliseconds elapsed since `start`.
pub(crate) fn elapsed_ms(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
