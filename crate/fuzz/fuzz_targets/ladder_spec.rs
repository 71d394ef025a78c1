#![no_main]
use libfuzzer_sys::fuzz_target;
use oneshot_core::theories::{builtin_theory, LadderSpec};

fuzz_target!(|data: &str| {
    if let Ok(spec) = LadderSpec::parse(data) {
        let _ = spec.dims();
        let _ = LadderSpec::parse(&spec.label());
    }
    let _ = builtin_theory(data);
});
