#![no_main]
use libfuzzer_sys::fuzz_target;

use socialnav::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for parsed in [RunConfig::from_toml_str(text), RunConfig::from_json_str(text)] {
        if let Ok(cfg) = parsed {
            // The hash must survive a canonical round trip.
            let again = RunConfig::from_json_str(&cfg.canonical_json())
                .expect("canonical form must parse");
            assert_eq!(again.hash(), cfg.hash());
        }
    }
});
