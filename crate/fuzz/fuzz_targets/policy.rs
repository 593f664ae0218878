#![no_main]

use chillplan_core::mdp::Policy;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(policy) = Policy::from_json(text) {
        let shape = policy.shape();
        let (t, i, p) = (shape.horizon - 1, shape.temps - 1, shape.regimes - 1);
        assert!(policy.sample_action(t, i, p, 0.999) < shape.actions);
        let _ = policy.expected_action(0, 0, 0);
    }
});
