#![no_main]
use libfuzzer_sys::fuzz_target;
use oneshot_core::io::parse_theory;
use oneshot_core::Ctx;

fuzz_target!(|data: &str| {
    let _ = parse_theory(data, &Ctx::default());
});
