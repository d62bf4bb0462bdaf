#![no_main]
use libfuzzer_sys::fuzz_target;

use socialnav::learn::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ck) = Checkpoint::from_json_str(text) {
        let again = Checkpoint::from_json_str(&ck.to_json()).expect("round trip must parse");
        assert_eq!(again.config_hash, ck.config_hash);
        assert_eq!(again.step_count, ck.step_count);
        assert_eq!(again.params.len(), ck.params.len());
    }
});
