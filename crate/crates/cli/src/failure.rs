//! Exit-code discipline shared by every subcommand: problems with the
//! invocation or the scenario file exit 1, verdicts reached by a healthy
//! run (not localizable, diverged, degenerate geometry) exit 2.

use std::fmt;

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, unreadable files, malformed or semantically invalid
    /// scenarios.
    Usage(String),
    /// The toolkit ran and concluded the request cannot be satisfied.
    Verdict(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Verdict(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Verdict(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub fn usage(e: impl fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn verdict(e: impl fmt::Display) -> Failure {
    Failure::Verdict(e.to_string())
}
