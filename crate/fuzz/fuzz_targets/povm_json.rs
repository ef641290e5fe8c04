#![no_main]

use libfuzzer_sys::fuzz_target;
use primo::formalism::Povm;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(povm) = Povm::from_json(text) {
        let again = Povm::from_json(&povm.to_json()).expect("re-parse of written POVM");
        assert_eq!(again, povm);
        let _ = povm.validated();
    }
});
