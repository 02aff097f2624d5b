//! File formats, run directories and the command-line pipeline around
//! `dualstyle-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod run;

pub use error::{Error, Result};

/// Writes one `event=<name> key=value ...` line to stderr. Values with
/// spaces are quoted.
pub fn log(event: &str, fields: &[(&str, String)]) {
    let mut line = format!("event={event}");
    for (k, v) in fields {
        if v.contains(char::is_whitespace) || v.is_empty() {
            line.push_str(&format!(" {k}={v:?}"));
        } else {
            line.push_str(&format!(" {k}={v}"));
        }
    }
    eprintln!("{line}");
}

/// Worker-thread cap from `DUALSTYLE_THREADS` (default 1). Training is
/// sequential, so any value above 1 only bounds future parallel helpers.
pub fn thread_cap() -> Result<usize> {
    match std::env::var("DUALSTYLE_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Usage(format!("DUALSTYLE_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}
