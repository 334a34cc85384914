#![no_main]

use enrand::bellmap::BellBehaviour;
use enrand::certify::TradeoffFunction;
use enrand::extract::BitString;
use enrand::qset::{Behaviour, EnergyBounds};
use enrand::sim::DeviceModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<Behaviour>(data);
    let _ = serde_json::from_slice::<EnergyBounds>(data);
    let _ = serde_json::from_slice::<BellBehaviour>(data);
    let _ = serde_json::from_slice::<BitString>(data);
    if let Ok(tf) = serde_json::from_slice::<TradeoffFunction>(data) {
        let back: TradeoffFunction = serde_json::from_str(&serde_json::to_string(&tf).unwrap()).unwrap();
        assert_eq!(back.beta(), tf.beta());
    }
    if let Ok(dev) = serde_json::from_slice::<DeviceModel>(data) {
        let _ = dev.validate([1.0, 1.0]);
        let _ = dev.mean_energy();
    }
});
