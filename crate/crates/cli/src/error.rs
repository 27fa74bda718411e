use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{message}")]
    Usage { message: String },

    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },

    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{file}: {field}: {message}")]
    Schema {
        file: String,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] pdmarket_core::Error),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage {
            message: message.into(),
        }
    }

    /// One diagnostic line for standard error.
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "level": "error", "message": self.to_string() });
        let extra = match self {
            CliError::Usage { .. } => json!({ "kind": "usage" }),
            CliError::Io { path, .. } => json!({ "kind": "io", "file": path }),
            CliError::Parse {
                file, line, column, ..
            } => json!({ "kind": "parse", "file": file, "line": line, "column": column }),
            CliError::Schema { file, field, .. } => json!({ "kind": "schema", "file": file, "field": field }),
            CliError::Core(e) => core_fields(e),
        };
        if let (Value::Object(base), Value::Object(more)) = (&mut v, extra) {
            base.extend(more);
        }
        v
    }
}

fn core_fields(e: &pdmarket_core::Error) -> Value {
    use pdmarket_core::Error as E;
    match e {
        E::Syntax { pos, .. } | E::NonConstantExponent { pos } => json!({ "kind": "expression", "position": pos }),
        E::VariableOutOfRange { .. } => json!({ "kind": "expression" }),
        E::NoSupportingHyperplane { violation, slack } => {
            json!({ "kind": "no_supporting_hyperplane", "violation": violation, "slack": slack })
        }
        E::NotParetoOptimal => json!({ "kind": "not_pareto_optimal" }),
        E::GuardExceeded { points, guard } => json!({ "kind": "guard_exceeded", "points": points, "guard": guard }),
        E::NoBracket { .. } => json!({ "kind": "no_bracket" }),
        E::ZeroUtility { buyer } | E::RateUndefined { buyer, .. } => json!({ "kind": "market", "buyer": buyer }),
        _ => json!({ "kind": "invalid_input" }),
    }
}
