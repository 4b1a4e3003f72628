//! Error classification and exit codes.

use serde_json::json;

/// Bad input: config, DSL source, parameters.
pub const EXIT_CONFIG: i32 = 2;
/// The numerics failed: no steady state, divergence, instability.
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub pos: Option<(usize, usize)>,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, kind: "config", message: message.into(), pos: None }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: EXIT_IO, kind: "io", message: message.into(), pos: None }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": { "kind": self.kind, "exit_code": self.code, "message": self.message } });
        if let Some((line, col)) = self.pos {
            v["error"]["line"] = json!(line);
            v["error"]["column"] = json!(col);
        }
        v
    }
}

impl From<qbm_core::Error> for CliError {
    fn from(e: qbm_core::Error) -> Self {
        match &e {
            qbm_core::Error::Dsl(d) => CliError {
                code: EXIT_CONFIG,
                kind: "dsl",
                message: e.to_string(),
                pos: (d.pos.line > 0).then_some((d.pos.line, d.pos.col)),
            },
            _ if e.is_numerical() => CliError { code: EXIT_NUMERICAL, kind: "numerical", message: e.to_string(), pos: None },
            _ => CliError { code: EXIT_CONFIG, kind: "model", message: e.to_string(), pos: None },
        }
    }
}

impl From<qbm_core::meqdsl::DslError> for CliError {
    fn from(e: qbm_core::meqdsl::DslError) -> Self {
        qbm_core::Error::Dsl(e).into()
    }
}
