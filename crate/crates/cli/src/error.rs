use serde_json::json;

/// Failures reported to the caller as one JSON object on stderr.
#[derive(Debug)]
pub enum CliError {
    Validation { field: String, reason: String },
    Numerical { invariant: String, message: String },
    Io(String),
    SelftestFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 4,
            CliError::SelftestFailed(_) => 1,
        }
    }

    pub fn record(&self) -> serde_json::Value {
        match self {
            CliError::Validation { field, reason } => {
                json!({ "error": "validation", "field": field, "reason": reason })
            }
            CliError::Numerical { invariant, message } => {
                json!({ "error": "numerical", "invariant": invariant, "reason": message })
            }
            CliError::Io(m) => json!({ "error": "io", "reason": m }),
            CliError::SelftestFailed(k) => {
                json!({ "error": "selftest", "reason": format!("{k} suite(s) failed") })
            }
        }
    }
}

impl From<intermittency::Error> for CliError {
    fn from(e: intermittency::Error) -> Self {
        use intermittency::Error as E;
        let message = e.to_string();
        match e {
            E::InvalidParameter { field, reason } => CliError::Validation {
                field: field.to_string(),
                reason,
            },
            E::Domain(_) | E::Index { .. } => CliError::Validation {
                field: "input".into(),
                reason: message,
            },
            E::NonConvergence { .. } => CliError::Numerical {
                invariant: "stationary_convergence".into(),
                message,
            },
            E::GridBreakdown { .. } => CliError::Numerical {
                invariant: "density_floor".into(),
                message,
            },
            E::Degenerate(_) => CliError::Numerical {
                invariant: "nondegenerate_variance".into(),
                message,
            },
            E::Io(_) | E::Csv(_) => CliError::Io(message),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
