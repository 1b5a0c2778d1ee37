#![no_main]

use heatbie::expr::Expression;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(e) = Expression::parse(text) {
            let _ = e.eval(0.25, -0.5, 1.0);
            let _ = e.derivative_u(0.25, 0.0, 1.0);
        }
    }
});
