use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: cannot read scenario: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Input { path: String, line: usize, message: String },

    #[error("cannot write report {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// A scenario problem tied to the JSON key it was found under.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchored {
    pub key: String,
    pub message: String,
}

impl Anchored {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Anchored { key: key.to_string(), message: message.into() }
    }

    /// Line of the first `"key":` in `text`, 1-based; line 1 if the key is absent.
    pub fn line_in(&self, text: &str) -> usize {
        let quoted = format!("\"{}\"", self.key);
        text.lines()
            .position(|l| {
                l.match_indices(&quoted)
                    .any(|(i, _)| l[i + quoted.len()..].trim_start().starts_with(':'))
            })
            .or_else(|| text.lines().position(|l| l.contains(&quoted)))
            .map_or(1, |i| i + 1)
    }
}

pub type Resolve<T> = std::result::Result<T, Anchored>;

pub fn anchor<T, E: std::fmt::Display>(key: &str, r: std::result::Result<T, E>) -> Resolve<T> {
    r.map_err(|e| Anchored::new(key, e.to_string()))
}
