#![no_main]

use libfuzzer_sys::fuzz_target;
use primo::harness::ReadoutSpec;
use primo::hilbert::GridSpec;
use primo::readout::MacroPartition;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<ReadoutSpec>(data) else { return };
    let grid = GridSpec::ring(16).unwrap();
    if let Ok(p) = MacroPartition::from_regions(&grid, spec.labels.clone(), &spec.regions) {
        assert!(p.len() >= spec.regions.len());
        assert!((0..grid.dim()).all(|q| p.cell_of(q) < p.len()));
    }
});
