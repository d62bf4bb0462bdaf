#![no_main]
use libfuzzer_sys::fuzz_target;

use socialnav::episode::Episode;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(episode) = Episode::from_json_str(text) {
        let _ = episode.id();
        let json = serde_json::to_string(&episode).unwrap();
        let again = Episode::from_json_str(&json).expect("round trip must parse");
        assert_eq!(again, episode);
    }
});
