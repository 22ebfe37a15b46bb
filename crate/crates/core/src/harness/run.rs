use super::report::RunReport;
use super::scenario::{Scenario, SuiteName};
use super::suites::{dedup, run_suite, Context};
use crate::constants::ConstantReport;
use crate::error::Result;

/// The constant table of the base instance: Muckenhoupt and one-tailed
/// constants, testing constants, BICT, the operator norm and the two
/// cancellation constants.
pub fn constant_table(ctx: &Context) -> Result<Vec<ConstantReport>> {
    let inst = ctx.base();
    let kappa = ctx.scenario.kappa;
    let mut out: Vec<ConstantReport> = inst.muckenhoupt()?.to_vec();
    let sweep = inst.sweep()?;
    out.push(sweep.below(kappa, false));
    out.push(sweep.below(kappa, true));
    let mut ts = inst.adjoint_sweep()?.below(1, false);
    ts.constant_name = "T*(1)".into();
    out.push(ts);
    out.push(inst.bict()?.clone());
    out.push(inst.norm_report()?);
    if !ctx.ball_samples().is_empty() {
        out.extend(ctx.cancellation(inst)?);
    }
    Ok(out)
}

/// Generates the measures, assembles the operator, evaluates the constant
/// table and runs every requested suite. Deterministic: equal scenarios give
/// equal reports.
pub fn run_scenario(scenario: &Scenario) -> Result<RunReport> {
    let hash = scenario.config_hash()?;
    let ctx = Context::new(scenario)?;
    let constants = constant_table(&ctx)?.into_iter().map(|c| c.with_config_hash(&hash)).collect();
    let mut verifications = Vec::new();
    let via_all = scenario.verify.contains(&SuiteName::All);
    for suite in scenario.suites() {
        verifications.extend(run_suite(&ctx, suite, via_all)?);
    }
    Ok(RunReport::new(&scenario.name, &hash, constants, dedup(verifications)))
}
