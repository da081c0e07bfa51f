use titv_core::verify::{
    film_identity_suite, gradient_suite, identity_suite, planted_ramp_suite, SuiteReport,
};
use titv_core::Result;

use super::{emit, Failure, Outcome};
use crate::args::{Scope, VerifyArgs};

fn suites(scope: Scope, trials: Option<usize>) -> Result<Vec<SuiteReport>> {
    let n = |default: usize| trials.unwrap_or(default);
    let mut out = Vec::new();
    if matches!(scope, Scope::Identity | Scope::All) {
        eprintln!("checking the reconstruction identity");
        out.push(identity_suite(n(1000))?);
        eprintln!("checking the FiLM identity reduction");
        out.push(film_identity_suite(n(100))?);
    }
    if matches!(scope, Scope::Gradcheck | Scope::All) {
        eprintln!("checking gradients against finite differences");
        out.push(gradient_suite(n(50), 1e-5)?);
    }
    if matches!(scope, Scope::Oracle | Scope::All) {
        eprintln!("fitting per-window regressions on planted ramps");
        out.push(planted_ramp_suite(n(5))?);
    }
    Ok(out)
}

pub fn verify(a: &VerifyArgs) -> Outcome {
    let reports = suites(a.scope, a.trials)?;
    let mut failures = Vec::new();
    for r in &reports {
        println!(
            "{:<14} {:>5} trials  {} {:.3e} (must be < {})  {}",
            r.name,
            r.trials,
            r.metric,
            r.worst,
            r.threshold,
            if r.passed() { "ok" } else { "FAILED" }
        );
        let key = r.name.replace('-', "_");
        emit(&format!("{key}_trials"), r.trials);
        emit(&format!("{key}_worst"), format!("{:e}", r.worst));
        if let Some(seed) = r.worst_seed {
            emit(&format!("{key}_worst_seed"), seed);
        }
        emit(&format!("{key}_pass"), r.passed());
        failures.extend(r.failures.iter().map(|f| format!("{}: {f}", r.name)));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failures))
    }
}
