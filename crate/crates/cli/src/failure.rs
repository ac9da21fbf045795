use std::fmt;

/// Exit code for bad input: config, flags, shapes, incompatible files.
pub const EXIT_VALIDATION: u8 = 2;
/// Exit code for failures while doing the work.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            msg: msg.into(),
        }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<patchdps::Error> for Failure {
    fn from(e: patchdps::Error) -> Self {
        if e.is_validation() {
            Self::validation(e.to_string())
        } else {
            Self::runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Attaches a path to an I/O or library error.
pub trait Context<T> {
    fn at(self, what: &std::path::Path) -> CliResult<T>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn at(self, what: &std::path::Path) -> CliResult<T> {
        self.map_err(|e| {
            let mut f = e.into();
            f.msg = format!("{}: {}", what.display(), f.msg);
            f
        })
    }
}
