#![no_main]

use libfuzzer_sys::fuzz_target;
use mera_core::pipeline::SynthConfig;
use mera_core::training::Config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(c) = Config::from_toml(text) {
            let printed = c.to_toml().expect("valid config prints");
            assert_eq!(
                Config::from_toml(&printed).expect("printed config parses"),
                c
            );
        }
        let _ = SynthConfig::from_toml(text);
    }
});
