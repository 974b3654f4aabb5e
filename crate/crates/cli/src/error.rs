use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}{}: {message}", .line.map(|l| format!(":{l}")).unwrap_or_default())]
    Config {
        origin: String,
        line: Option<usize>,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{context}: {message}")]
    Run { context: String, message: String },
}

impl CliError {
    pub fn run(context: &str, err: impl std::fmt::Display) -> Self {
        Self::Run {
            context: context.to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Io { .. } => 3,
            Self::Run { .. } => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Config { .. } => "config",
            Self::Io { .. } => "io",
            Self::Run { .. } => "run",
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            line: Option<usize>,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        let line = match self {
            Self::Config { line, .. } => *line,
            _ => None,
        };
        serde_json::to_string(&Wrapper {
            error: Body {
                kind: self.kind(),
                message: self.to_string(),
                line,
            },
        })
        .expect("error serializes")
    }
}
