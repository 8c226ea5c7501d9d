//! Failure classes and their process exit codes.

use std::fmt;

use gtspectra::Error;

#[derive(Debug)]
pub enum Failure {
    /// Unreadable or malformed input, bad flags, I/O trouble. Exit 1.
    Input(String),
    /// Numerical failure on specific molecules. Exit 2.
    Numerical(Vec<(String, Error)>),
    /// `verify` found a check above tolerance. Exit 3.
    Verify(usize),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Verify(_) => 3,
        }
    }

    pub fn input(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Failure::Input(format!("{context}: {err}"))
    }
}

pub fn is_numerical(err: &Error) -> bool {
    matches!(err, Error::NoConverge(_) | Error::NonFinite(_) | Error::Degenerate(_))
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(msg) => write!(f, "{msg}"),
            Failure::Numerical(list) => {
                let ids: Vec<&str> = list.iter().map(|(id, _)| id.as_str()).collect();
                write!(f, "numerical failure for molecule(s): {}", ids.join(", "))?;
                for (id, err) in list {
                    write!(f, "\n  {id}: {}: {err}", err.code())?;
                }
                Ok(())
            }
            Failure::Verify(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::Input(format!("E_IO: {err}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(err: csv::Error) -> Self {
        Failure::Input(format!("E_IO: {err}"))
    }
}
