//! Exit-code classification.

use std::fmt;

/// Process exit codes.
pub const CONFIG: u8 = 2;
pub const NUMERICAL: u8 = 3;
pub const VALIDATION: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: CONFIG, message: message.into() }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Failure { code: VALIDATION, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<bilimor::Error> for Failure {
    fn from(e: bilimor::Error) -> Self {
        let code = if e.is_config() { CONFIG } else { NUMERICAL };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("I/O error: {e}"))
    }
}

pub type Outcome<T> = Result<T, Failure>;
