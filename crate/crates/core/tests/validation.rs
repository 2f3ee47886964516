use nbentropy::harness::{validate, ValidateOptions};
use nbentropy::oracle::TruncationPolicy;

#[test]
fn default_suite_passes() {
    let rep = validate(&ValidateOptions::default());
    for c in &rep.checks {
        assert!(c.pass, "{}: {}", c.name, c.detail);
    }
    assert!(rep.pass);
    assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
}

#[test]
fn tampered_coefficient_is_caught() {
    let rep = validate(&ValidateOptions {
        tamper: true,
        ..ValidateOptions::default()
    });
    assert!(!rep.pass);
    let failed: Vec<&str> = rep
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name)
        .collect();
    assert!(
        failed.contains(&"correction.degree_and_boundedness"),
        "{failed:?}"
    );
    assert!(failed.contains(&"oracle.bias"), "{failed:?}");
}

#[test]
fn loose_tolerance_is_surfaced() {
    let rep = validate(&ValidateOptions {
        policy: TruncationPolicy::with_tol(1e-2).unwrap(),
        ..ValidateOptions::default()
    });
    assert!(!rep.warnings.is_empty());
    assert!(rep
        .warnings
        .iter()
        .any(|w| w.contains("enclosure half-width")));
}

#[test]
fn check_names_are_stable() {
    let names: Vec<&str> = validate(&ValidateOptions::default())
        .checks
        .iter()
        .map(|c| c.name)
        .collect();
    assert_eq!(
        names,
        [
            "rng.reference_stream",
            "distribution.entropy_examples",
            "distribution.hard_pair_zero_eps",
            "sampling.fact1_draws",
            "correction.r2_closed_form",
            "correction.r1_zero",
            "correction.degree_and_boundedness",
            "oracle.pmf_normalization",
            "oracle.jensen",
            "oracle.bias",
            "oracle.cutoff",
            "oracle.bucket_decomposition",
            "estimators.configure_buckets",
            "estimators.bucket_accounting",
            "estimators.eta_monte_carlo",
            "estimators.nb_variance_scaling",
            "estimators.baseline_point_mass",
            "estimators.pipeline_point_mass",
            "harness.csv_determinism",
            "memory.audit",
            "hardpair.separation",
        ]
    );
}
