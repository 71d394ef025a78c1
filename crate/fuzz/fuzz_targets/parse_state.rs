#![no_main]
use libfuzzer_sys::fuzz_target;
use oneshot_core::io::{parse_state, state_to_value};
use oneshot_core::Tolerances;

fuzz_target!(|data: &str| {
    let tol = Tolerances::default();
    if let Ok(rho) = parse_state(data, &tol) {
        // accepted states survive a round trip
        let again = parse_state(&state_to_value(&rho).to_string(), &tol).unwrap();
        assert_eq!(again.dim(), rho.dim());
    }
});
