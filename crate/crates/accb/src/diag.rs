//! Diagnostics shared by every pipeline stage.
//!
//! Rendered as `file:line:col: severity CODE: message`, one per line on
//! standard error. Any error-severity diagnostic aborts translation.

use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Location {
    pub line: u32,
    pub col: u32,
}

impl Location {
    pub fn new(line: u32, col: u32) -> Self {
        Location { line, col }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

/// Stable diagnostic codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    /// Unterminated literal/comment or stray byte.
    ELex,
    /// Construct outside the supported C subset, or unbalanced nesting.
    EParse,
    /// Duplicate top-level definition of the same name.
    EDup,
    /// Unknown directive name, or a directive with no attachable statement.
    EDirective,
    /// Unknown clause, malformed clause arguments, or a clause illegal for
    /// its directive.
    EClause,
    /// Directive nesting restriction violated.
    ENest,
    /// Reduction target is not a scalar.
    ERedType,
    /// Reduction operator outside {+, *, max, min}.
    ERedOp,
    /// Directive or region construct that this translator does not implement.
    EUnsupported,
    /// Identifier used in a region with no visible binding.
    EUnbound,
    /// Transferred array whose size cannot be determined.
    ESize,
    /// `present` variable with no live enclosing allocation.
    EPresent,
    /// Array referenced in a region but named in no data clause.
    ENoClause,
    /// Empty kernels region: nothing to parallelize, nothing to run.
    ENoLoop,
    /// Parallel loop step is not a compile-time constant.
    EStep,
    /// Launch geometry invalid at translation time.
    EGeom,
    /// Hoisted function is directly or mutually recursive.
    ERecurse,
    /// Invariant violation inside the translator itself.
    EInternal,
    /// Configured system compiler not found.
    ENoCc,
    /// System compiler failed on generated source.
    ECc,
    /// Generated program exited nonzero.
    ERun,
    /// `independent` nesting deeper than the 2-D geometry limit.
    WDeepNest,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::ELex => "E_LEX",
            ErrorCode::EParse => "E_PARSE",
            ErrorCode::EDup => "E_DUP",
            ErrorCode::EDirective => "E_DIRECTIVE",
            ErrorCode::EClause => "E_CLAUSE",
            ErrorCode::ENest => "E_NEST",
            ErrorCode::ERedType => "E_REDTYPE",
            ErrorCode::ERedOp => "E_REDOP",
            ErrorCode::EUnsupported => "E_UNSUPPORTED",
            ErrorCode::EUnbound => "E_UNBOUND",
            ErrorCode::ESize => "E_SIZE",
            ErrorCode::EPresent => "E_PRESENT",
            ErrorCode::ENoClause => "E_NOCLAUSE",
            ErrorCode::ENoLoop => "E_NOLOOP",
            ErrorCode::EStep => "E_STEP",
            ErrorCode::EGeom => "E_GEOM",
            ErrorCode::ERecurse => "E_RECURSE",
            ErrorCode::EInternal => "E_INTERNAL",
            ErrorCode::ENoCc => "E_NOCC",
            ErrorCode::ECc => "E_CC",
            ErrorCode::ERun => "E_RUN",
            ErrorCode::WDeepNest => "W_DEEPNEST",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: ErrorCode,
    pub message: String,
    pub location: Location,
}

impl Diagnostic {
    pub fn error(code: ErrorCode, location: Location, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            message: message.into(),
            location,
        }
    }

    pub fn warning(code: ErrorCode, location: Location, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code,
            message: message.into(),
            location,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Render with the source file name in the standard one-line format.
    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}: {} {}: {}",
            file, self.location, self.severity, self.code, self.message
        )
    }
}

// Display without a file name; the driver prefers `render`.
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} {}: {}",
            self.location, self.severity, self.code, self.message
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_format() {
        let d = Diagnostic::error(ErrorCode::ENest, Location::new(4, 3), "nested kernels");
        assert_eq!(d.render("bad.c"), "bad.c:4:3: error E_NEST: nested kernels");
    }

    #[test]
    fn warning_severity_text() {
        let d = Diagnostic::warning(ErrorCode::WDeepNest, Location::new(1, 1), "deep");
        assert!(d.render("x.c").contains("warning W_DEEPNEST"));
        assert!(!d.is_error());
    }
}
