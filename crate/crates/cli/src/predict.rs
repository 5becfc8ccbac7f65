//! `qrng predict`: closed-form flip/hold statistics of a detector pair.

use clap::Args;

use qrng_core::postproc::{estimate_mismatch, event_probs, flip_hold_bias, flip_hold_probs};

use crate::error::{CliError, CliResult};
use crate::report::{sci, Format, Report};

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Click probability of detector 1.
    #[arg(long, required_unless_present = "invert")]
    pub p1: Option<f64>,
    /// Click probability of detector 2.
    #[arg(long, required_unless_present = "invert")]
    pub p2: Option<f64>,
    /// Recover |p1 - p2| from a measured flip excess instead.
    #[arg(long, requires_all = ["bias", "pavg"], conflicts_with_all = ["p1", "p2"])]
    pub invert: bool,
    /// Measured per-cycle flip excess (with --invert).
    #[arg(long, requires = "invert")]
    pub bias: Option<f64>,
    /// Mean click probability (with --invert).
    #[arg(long, requires = "invert")]
    pub pavg: Option<f64>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

pub fn report(args: &PredictArgs) -> CliResult<Report> {
    if args.invert {
        let (bias, pavg) = (args.bias.unwrap_or_default(), args.pavg.unwrap_or_default());
        let dp = estimate_mismatch(bias, pavg)?;
        let mut r = Report::new("mismatch from flip excess");
        r.add("bias", sci(bias, 4))
            .add("pavg", pavg)
            .add("abs_p1_minus_p2", format!("{dp:.5}"))
            .add("relative_mismatch", format!("{:.4}", dp / pavg));
        return Ok(r);
    }
    let (p1, p2) = match (args.p1, args.p2) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(CliError::usage("--p1 and --p2 are required")),
    };
    let ev = event_probs(p1, p2)?;
    let fh = flip_hold_probs(ev.alpha, ev.beta)?;
    let b = flip_hold_bias(p1, p2)?;
    let (flip_out, hold_out) = fh.per_output();
    let mut r = Report::new(format!("flip/hold prediction for p1={p1}, p2={p2}"));
    r.add("alpha", format!("{:.6}", ev.alpha))
        .add("beta", format!("{:.6}", ev.beta))
        .add("p_output", format!("{:.6}", fh.output_prob()))
        .add("flip_per_cycle", format!("{:.6}", fh.flip))
        .add("hold_per_cycle", format!("{:.6}", fh.hold))
        .add("flip_per_output", format!("{flip_out:.6}"))
        .add("hold_per_output", format!("{hold_out:.6}"))
        .add("bias", sci(b.difference, 4))
        .add("bias_per_output", sci(fh.per_output_difference(), 4))
        .add("lower_bound", sci(b.lower_bound, 4));
    Ok(r)
}

pub fn run(args: &PredictArgs) -> CliResult<()> {
    print!("{}", report(args)?.render(args.format));
    Ok(())
}
