#![no_main]

use libfuzzer_sys::fuzz_target;
use primo::evolution::parse_event_log;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(log) = parse_event_log(text) {
        let again = parse_event_log(&log.to_json_lines()).expect("re-parse of written log");
        assert_eq!(again, log);
    }
});
