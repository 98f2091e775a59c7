#![no_main]

use adaptive_langevin::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        // whatever parses must survive a round trip through the echo
        let again = ExperimentConfig::parse(&cfg.to_text()).expect("echo parses");
        assert_eq!(again, cfg);
    }
});
