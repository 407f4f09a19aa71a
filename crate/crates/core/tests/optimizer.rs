mod oracle;

use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 100, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn every_update_is_monotone(seed in any::<u64>()) {
        oracle::monotone_updates(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn updates_match_brute_force(seed in any::<u64>()) {
        let checked = oracle::closed_form_updates(seed).map_err(TestCaseError::fail)?;
        prop_assume!(checked);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        oracle::gradient_matches_finite_differences(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn iterates_ignore_initial_scale(seed in any::<u64>()) {
        oracle::scale_invariant_iterates(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn zero_loading_is_a_trap(seed in any::<u64>()) {
        oracle::zero_loading_stays_zero(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn scale_sweeps_are_lasso(seed in any::<u64>()) {
        oracle::scale_sweeps_match_lasso(seed).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, ..ProptestConfig::default() })]

    #[test]
    fn converged_fit_is_stationary(seed in any::<u64>()) {
        let converged = oracle::stationary_at_convergence(seed).map_err(TestCaseError::fail)?;
        prop_assume!(converged);
    }

    #[test]
    fn penalty_above_gamma_max_gives_null_model(seed in any::<u64>()) {
        oracle::null_model_above_gamma_max(seed).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn brute_force_covers_most_instances() {
    let checked = (0..100u64)
        .map(|s| oracle::closed_form_updates(s).unwrap())
        .filter(|c| *c)
        .count();
    assert!(checked >= 90, "only {checked} of 100 minimizers fell inside the search range");
}

#[test]
fn most_tight_fits_converge_to_stationary_points() {
    let converged = (0..100u64)
        .map(|s| oracle::stationary_at_convergence(s).unwrap())
        .filter(|c| *c)
        .count();
    assert!(converged >= 60, "only {converged} of 100 fits converged");
}
