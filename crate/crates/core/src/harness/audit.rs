use serde::Serialize;

use super::{EstimatorKind, Overrides, Pipeline};
use crate::distribution::DiscreteDistribution;
use crate::error::Result;
use crate::estimators::{default_r, ProgramConstants};
use crate::rng::derive_key;
use crate::sampling::SeededSource;

/// Alphabet sizes the audit compares.
pub const AUDIT_KS: [usize; 3] = [2, 1 << 10, 1 << 16];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub estimator: EstimatorKind,
    pub k: usize,
    pub working_registers: usize,
    pub program_constants: ProgramConstants,
    pub samples_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub eps: f64,
    pub rows: Vec<AuditRow>,
    /// Whether the simple and bucketed register counts are equal at every k.
    pub simple_constant: bool,
    pub bucketed_constant: bool,
    /// Whether the plug-in state at the largest k exceeds the smallest.
    pub plugin_grows: bool,
    /// Correction coefficients stored at `eps` and at `eps / 10`.
    pub coefficients_at_eps: usize,
    pub coefficients_at_tenth: usize,
    pub pass: bool,
}

/// Overrides that keep every pipeline cheap; register counts do not depend
/// on the number of repetitions.
fn audit_overrides(k: usize) -> Overrides {
    Overrides {
        m: Some(1),
        bucket_multiplier: Some(1e-9),
        correction_reps: Some(16),
        window: Some(4 * k as u64),
        n: Some(4 * k as u64),
        ..Overrides::default()
    }
}

/// Runs each pipeline on the uniform distribution at every k in
/// [`AUDIT_KS`] and compares the reported working registers.
pub fn audit_memory(eps: f64, seed: u64) -> Result<AuditReport> {
    let mut rows = Vec::new();
    for kind in EstimatorKind::ALL {
        for &k in &AUDIT_KS {
            let dist = DiscreteDistribution::uniform(k)?;
            let pipeline = Pipeline::build(kind, k, eps, &audit_overrides(k))?;
            let mut src = SeededSource::new(&dist, derive_key(seed, "audit", k as u64));
            let rep = pipeline.run(&mut src)?;
            rows.push(AuditRow {
                estimator: kind,
                k,
                working_registers: rep.working_registers,
                program_constants: pipeline.program_constants(),
                samples_used: rep.samples_used,
            });
        }
    }
    let counts = |kind: EstimatorKind| -> Vec<usize> {
        rows.iter()
            .filter(|r| r.estimator == kind)
            .map(|r| r.working_registers)
            .collect()
    };
    let constant = |v: Vec<usize>| v.windows(2).all(|w| w[0] == w[1]);
    let simple_constant = constant(counts(EstimatorKind::Simple));
    let bucketed_constant = constant(counts(EstimatorKind::Bucketed));
    let plugin = counts(EstimatorKind::Plugin);
    let plugin_grows = plugin.last() > plugin.first();
    Ok(AuditReport {
        eps,
        simple_constant,
        bucketed_constant,
        plugin_grows,
        coefficients_at_eps: default_r(eps) as usize + 1,
        coefficients_at_tenth: default_r(eps / 10.0) as usize + 1,
        pass: simple_constant && bucketed_constant && plugin_grows,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_passes_at_moderate_eps() {
        let rep = audit_memory(0.3, 1).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.rows.len(), 12);
        assert!(rep.coefficients_at_tenth > rep.coefficients_at_eps);
        let plugin: Vec<_> = rep
            .rows
            .iter()
            .filter(|r| r.estimator == EstimatorKind::Plugin)
            .collect();
        assert!(plugin[2].working_registers > 1000);
    }
}
