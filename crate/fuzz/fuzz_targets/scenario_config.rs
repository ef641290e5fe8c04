#![no_main]

use libfuzzer_sys::fuzz_target;
use primo::harness::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ScenarioConfig::from_json(text) {
        let again = ScenarioConfig::from_json(&cfg.to_json()).expect("re-parse of written config");
        assert_eq!(again, cfg);
        // Building allocates the Hilbert space; keep it to small grids.
        if let Some(m) = &cfg.model {
            if m.points.checked_pow((m.particles * m.dims) as u32).is_some_and(|d| d <= 256) {
                let _ = cfg.validate().and_then(|_| cfg.build_model());
            }
        }
    }
});
