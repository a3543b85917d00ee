use std::fmt;

use diffpass_core::Error as CoreError;

/// Exit statuses of the command-line tool.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const BOUNDARY: i32 = 2;
    pub const USAGE: i32 = 64;
    pub const PARSE: i32 = 65;
    pub const SOFTWARE: i32 = 70;
    pub const IO: i32 = 74;
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// Malformed argument text. `offset` is a byte offset into `input`.
    Parse {
        flag: &'static str,
        input: String,
        offset: usize,
        message: String,
    },
    Diverged { t: f64 },
    Io { path: String, source: std::io::Error },
    Core(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Parse { .. } => exit::PARSE,
            CliError::Diverged { .. } => exit::SOFTWARE,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e {
                CoreError::Diverged { .. } => exit::SOFTWARE,
                CoreError::Parse(_) => exit::PARSE,
                CoreError::DimensionMismatch { .. }
                | CoreError::InvalidArgument(_)
                | CoreError::InvalidP { .. }
                | CoreError::NotAMetric { .. }
                | CoreError::NonSquare { .. }
                | CoreError::InvalidFixture { .. }
                | CoreError::InvalidInertia => exit::USAGE,
                _ => exit::SOFTWARE,
            },
        }
    }

    pub fn parse(flag: &'static str, input: &str, offset: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            flag,
            input: input.to_string(),
            offset,
            message: message.into(),
        }
    }

    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Parse {
                flag,
                input,
                offset,
                message,
            } => {
                // The caret lines up under the offending byte of the echoed input.
                let col = input.get(..*offset).map_or(*offset, |s| s.chars().count());
                write!(
                    f,
                    "{flag}: parse error at offset {offset}: {message}\n  {input}\n  {}^",
                    " ".repeat(col)
                )
            }
            CliError::Diverged { t } => write!(f, "integration diverged at t = {t}"),
            CliError::Io { path, source } => write!(f, "{path}: {source}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { t } => CliError::Diverged { t },
            e => CliError::Core(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caret_points_at_offset() {
        let e = CliError::parse("--u", "1+*sin(t)", 2, "expected a number");
        let text = e.to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "  1+*sin(t)");
        assert_eq!(lines[2], "    ^");
        assert_eq!(e.exit_code(), exit::PARSE);
    }

    #[test]
    fn core_errors_map_to_statuses() {
        assert_eq!(CliError::from(CoreError::Diverged { t: 1.0 }).exit_code(), exit::SOFTWARE);
        assert_eq!(CliError::from(CoreError::InvalidInertia).exit_code(), exit::USAGE);
        assert_eq!(CliError::from(CoreError::SingularMatrix { at: None }).exit_code(), exit::SOFTWARE);
    }
}
