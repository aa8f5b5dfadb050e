use tagcache_core::{bucket_of, fnv1a64};

/// FNV-1a, 64-bit, written out from the published offset basis and prime.
fn reference_fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[test]
fn published_vectors() {
    assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
    assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
}

#[test]
fn agrees_with_reference() {
    let mut buf = Vec::new();
    for i in 0..2000u32 {
        buf.push((i.wrapping_mul(2654435761) >> 13) as u8);
        assert_eq!(fnv1a64(&buf), reference_fnv(&buf));
        assert_eq!(bucket_of(&buf, 256), (reference_fnv(&buf) & 255) as usize);
    }
}

#[test]
fn benchmark_keys_spread_evenly() {
    let mut counts = vec![0usize; 256];
    for i in 0..30_000 {
        counts[bucket_of(format!("rec:{i:08}").as_bytes(), 256)] += 1;
    }
    let mean = 30_000.0 / 256.0;
    let max = *counts.iter().max().unwrap() as f64;
    let min = *counts.iter().min().unwrap() as f64;
    assert!(max <= 2.0 * mean, "fullest bucket {max} vs mean {mean}");
    assert!(min > 0.0);
}
