//! Stable 64-bit fingerprints (FNV-1a) of numeric state.
//!
//! Used to tag kernel matrices with the parameters that produced them and to
//! audit that fitted models are not touched by later transforms.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(OFFSET)
    }
}

impl Fnv64 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64s(&mut self, values: &[f64]) -> &mut Self {
        self.u64(values.len() as u64);
        for v in values {
            self.u64(v.to_bits());
        }
        self
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn of_f64s(values: &[f64]) -> u64 {
    Fnv64::new().f64s(values).finish()
}
