#![no_main]
use libfuzzer_sys::fuzz_target;

use socialnav::traceio::{parse_trace, trace_to_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(file) = parse_trace(text) {
        // Re-rendering quantizes; the result must parse and then be a
        // byte-for-byte fixed point.
        let rendered = trace_to_jsonl(&file.header, &file.clone().into_trace());
        let reparsed = parse_trace(&rendered).expect("rendered trace must parse");
        let header = reparsed.header.clone();
        let again = trace_to_jsonl(&header, &reparsed.into_trace());
        assert_eq!(again, rendered);
    }
});
