//! Support for the `acceptance` test target: tier selection and verdict
//! lines.
//!
//! The checks themselves live in `qrng_core::validation`, shared with the
//! `qrng validate` command.

use std::io::Write;

use qrng_core::validation::{CriterionResult, Tier};

/// Environment variable selecting the tier; anything but `quick` means full.
pub const TIER_VAR: &str = "QRNG_ACCEPTANCE_TIER";

pub fn tier_from_env() -> Tier {
    match std::env::var(TIER_VAR).as_deref() {
        Ok("quick") => Tier::Quick,
        _ => Tier::Full,
    }
}

/// Writes the verdict line straight to stdout, bypassing libtest capture,
/// and returns whether the criterion passed.
pub fn emit(r: &CriterionResult) -> bool {
    emit_to(&mut std::io::stdout().lock(), r)
}

pub fn emit_to(out: &mut impl Write, r: &CriterionResult) -> bool {
    let _ = writeln!(out, "\n{r}");
    let _ = out.flush();
    r.passed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emit_returns_the_verdict() {
        let mut buf = Vec::new();
        let mut r = CriterionResult { id: 9, name: "x", passed: true, detail: "d".into() };
        assert!(emit_to(&mut buf, &r));
        r.passed = false;
        assert!(!emit_to(&mut buf, &r));
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("[PASS] criterion 9")).count(), 1);
        assert_eq!(text.lines().filter(|l| l.starts_with("[FAIL] criterion 9")).count(), 1);
    }
}
