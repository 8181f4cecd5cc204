//! OpenACC-to-accelerator source translator.
//!
//! The pipeline turns a C program annotated with `#pragma acc` directives
//! into complete host+kernel source for one of three targets (cuda, opencl,
//! serial) and can hand the result to a system compiler:
//!
//! 1. [`cfront`] tokenizes, normalizes (full bracketing) and parses the
//!    declaration structure of the input.
//! 2. [`accvalidate`] scans pragma lines into structured directives and
//!    checks clause legality and nesting restrictions.
//! 3. [`irdoc`] builds the three-tag intermediate document and reverts it to
//!    flat host code plus a table of accelerator regions.
//! 4. [`translate`] resolves scopes, outlines kernels, lowers data clauses,
//!    reductions and launches, and assembles the final source.
//! 5. [`backends`] renders kernels and runtime preludes per target.
//! 6. [`driver`] is the CLI orchestrator and system-compiler front.

pub mod accvalidate;
pub mod backends;
pub mod cfront;
pub mod diag;
pub mod driver;
pub mod irdoc;
pub mod translate;

pub use diag::{Diagnostic, ErrorCode, Location, Severity};
