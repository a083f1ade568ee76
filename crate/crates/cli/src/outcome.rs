//! Exit codes, stage-attributed errors and the key=value summary.

use std::fmt;

use vio_geom::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    /// Bad flags or arguments.
    Usage = 1,
    /// Unreadable or malformed input, configuration or output location.
    Parse = 2,
    /// A numeric stage failed, or more intervals failed than allowed.
    Numeric = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

pub fn classify(e: &Error) -> ExitStatus {
    match e {
        Error::InvalidArgument(_) => ExitStatus::Usage,
        Error::Parse { .. }
        | Error::Format(_)
        | Error::Config(_)
        | Error::Io { .. }
        | Error::MalformedStream(_)
        | Error::DimensionMismatch(_)
        | Error::InvalidBand { .. } => ExitStatus::Parse,
        Error::EmptyInput(_)
        | Error::Degenerate(_)
        | Error::RegistrationFailed { .. }
        | Error::NotConverged(_)
        | Error::BehindCamera(_)
        | Error::BiasOutsideTrustRegion { .. }
        | Error::Singular(_) => ExitStatus::Numeric,
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

pub type StageResult<T> = Result<T, StageError>;

/// Attaches a stage name to core errors.
pub trait AtStage<T> {
    fn at(self, stage: &'static str) -> StageResult<T>;
}

impl<T> AtStage<T> for vio_geom::Result<T> {
    fn at(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Ordered key=value pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Appends every entry of `other` with `prefix.` in front of its key.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &Summary) {
        for (k, v) in &other.entries {
            self.entries.push((format!("{prefix}.{k}"), v.clone()));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Reads `key=value` lines, ignoring anything else.
    pub fn parse(text: &str) -> Summary {
        Summary {
            entries: text
                .lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect(),
        }
    }
}

/// What a successful command produced.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub summary: Summary,
    /// Human-readable lines.
    pub notes: Vec<String>,
    /// Thresholds that were exceeded; any entry makes the exit code nonzero.
    pub exceeded: Vec<String>,
}

impl Report {
    pub fn absorb(&mut self, prefix: &str, other: Report) {
        self.summary.extend_prefixed(prefix, &other.summary);
        self.notes.extend(other.notes.into_iter().map(|n| format!("{prefix}: {n}")));
        self.exceeded.extend(other.exceeded.into_iter().map(|n| format!("{prefix}: {n}")));
    }
}

#[derive(Clone, Debug)]
pub struct CommandOutcome {
    pub status: ExitStatus,
    pub summary: Summary,
    pub notes: Vec<String>,
}

impl CommandOutcome {
    pub fn new(command: &str, result: StageResult<Report>) -> Self {
        let mut summary = Summary::default();
        summary.push("command", command);
        match result {
            Ok(report) => {
                let status = if report.exceeded.is_empty() {
                    ExitStatus::Ok
                } else {
                    ExitStatus::Numeric
                };
                summary.push("status", if status == ExitStatus::Ok { "ok" } else { "threshold_exceeded" });
                summary.push("exit_code", status.code());
                for (k, v) in report.summary.entries() {
                    summary.push(k.clone(), v);
                }
                let mut notes = report.notes;
                notes.extend(report.exceeded.iter().map(|e| format!("threshold exceeded: {e}")));
                CommandOutcome { status, summary, notes }
            }
            Err(e) => Self::failure(command, classify(&e.error), e.stage, &e.error.to_string()),
        }
    }

    pub fn failure(command: &str, status: ExitStatus, stage: &str, message: &str) -> Self {
        let mut summary = Summary::default();
        summary.push("command", command);
        summary.push("status", "error");
        summary.push("exit_code", status.code());
        summary.push("stage", stage);
        summary.push("error", message.replace('\n', " "));
        CommandOutcome {
            status,
            summary,
            notes: vec![format!("error in {stage}: {message}")],
        }
    }
}
