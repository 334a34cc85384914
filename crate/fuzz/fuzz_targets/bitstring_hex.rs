#![no_main]

use enrand::extract::BitString;
use libfuzzer_sys::fuzz_target;

// first two bytes give the bit length, the rest is the hex text
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let len = u16::from_le_bytes([data[0], data[1]]) as usize;
    let Ok(text) = std::str::from_utf8(&data[2..]) else {
        return;
    };
    if let Ok(bits) = BitString::from_hex(text, len) {
        assert_eq!(bits.len(), len);
        let again = BitString::from_hex(&bits.to_hex(), len).unwrap();
        assert_eq!(again, bits);
    }
});
