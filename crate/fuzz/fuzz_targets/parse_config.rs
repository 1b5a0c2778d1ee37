#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = heatbie::config::parse_config(text) {
            // Anything that parses must survive a round trip.
            if let Ok(again) = cfg.to_toml() {
                heatbie::config::parse_config(&again).expect("round trip");
            }
        }
    }
});
