//! Compile-and-run harness for serial-target output.

use std::path::Path;
use std::process::Command;

use crate::diag::{Diagnostic, ErrorCode, Location};

#[derive(Debug, Clone)]
pub struct ExecOutput {
    pub stdout: String,
    pub stderr: String,
    pub status: i32,
}

/// Compile generated serial source with `compiler` and run the binary with
/// the given arguments and stdin. Compile failures surface the compiler's
/// stderr verbatim (E_CC); nonzero program exits are E_RUN.
pub fn execute_serial(
    source: &str,
    compiler: &str,
    args: &[&str],
    stdin: &str,
) -> Result<ExecOutput, Diagnostic> {
    let dir = tempfile::tempdir().map_err(|e| {
        Diagnostic::error(
            ErrorCode::ECc,
            Location::default(),
            format!("cannot create build directory: {e}"),
        )
    })?;
    let src_path = dir.path().join("program.c");
    let bin_path = dir.path().join("program");
    std::fs::write(&src_path, source).map_err(|e| {
        Diagnostic::error(
            ErrorCode::ECc,
            Location::default(),
            format!("cannot write source: {e}"),
        )
    })?;

    compile(compiler, &src_path, &bin_path)?;
    run(&bin_path, args, stdin)
}

fn compile(compiler: &str, src: &Path, bin: &Path) -> Result<(), Diagnostic> {
    let out = Command::new(compiler)
        .arg(src)
        .arg("-O1")
        .arg("-o")
        .arg(bin)
        .arg("-lm")
        .output()
        .map_err(|e| {
            Diagnostic::error(
                ErrorCode::ENoCc,
                Location::default(),
                format!("compiler '{compiler}' not runnable: {e}"),
            )
        })?;
    if !out.status.success() {
        return Err(Diagnostic::error(
            ErrorCode::ECc,
            Location::default(),
            format!(
                "compiler '{compiler}' failed:\n{}",
                String::from_utf8_lossy(&out.stderr)
            ),
        ));
    }
    Ok(())
}

fn run(bin: &Path, args: &[&str], stdin: &str) -> Result<ExecOutput, Diagnostic> {
    use std::io::Write;
    use std::process::Stdio;

    let mut child = Command::new(bin)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| {
            Diagnostic::error(
                ErrorCode::ERun,
                Location::default(),
                format!("cannot run generated program: {e}"),
            )
        })?;
    if let Some(mut pipe) = child.stdin.take() {
        let _ = pipe.write_all(stdin.as_bytes());
    }
    let out = child.wait_with_output().map_err(|e| {
        Diagnostic::error(
            ErrorCode::ERun,
            Location::default(),
            format!("generated program did not complete: {e}"),
        )
    })?;
    let result = ExecOutput {
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        status: out.status.code().unwrap_or(-1),
    };
    if result.status != 0 {
        return Err(Diagnostic::error(
            ErrorCode::ERun,
            Location::default(),
            format!(
                "generated program exited with {}:\n{}",
                result.status, result.stderr
            ),
        ));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compiles_and_runs_a_program() {
        let out = execute_serial(
            "#include <stdio.h>\nint main(){ printf(\"ok %d\\n\", 6*7); return 0; }\n",
            "cc",
            &[],
            "",
        )
        .unwrap();
        assert_eq!(out.stdout, "ok 42\n");
        assert_eq!(out.status, 0);
    }

    #[test]
    fn compile_failure_is_e_cc_with_compiler_stderr() {
        let err = execute_serial("int main(){ not valid c", "cc", &[], "").unwrap_err();
        assert_eq!(err.code, ErrorCode::ECc);
        assert!(!err.message.is_empty());
    }

    #[test]
    fn nonzero_exit_is_e_run() {
        let err = execute_serial("int main(){ return 3; }", "cc", &[], "").unwrap_err();
        assert_eq!(err.code, ErrorCode::ERun);
        assert!(err.message.contains('3'));
    }

    #[test]
    fn missing_compiler_is_e_nocc() {
        let err = execute_serial("int main(){return 0;}", "definitely-not-a-cc", &[], "")
            .unwrap_err();
        assert_eq!(err.code, ErrorCode::ENoCc);
    }
}
