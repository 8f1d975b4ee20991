//! Seeded weight stream for the numeric executor.
//!
//! A 64-bit LCG (`x' = a x + c mod 2^64`, Knuth's MMIX constants). Draw `j`
//! (0-based) is taken from the state after `j + 1` steps: its top 53 bits
//! give `u` in `[0, 1)`, mapped to `-0.1 + 0.2 u`. Jump-ahead lets each node
//! generate its own slice of the stream independently.

pub const MULTIPLIER: u64 = 6364136223846793005;
pub const INCREMENT: u64 = 1442695040888963407;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    /// Stream positioned so that the next draw is draw number `index`.
    pub fn at(seed: u64, index: u64) -> Self {
        let mut lcg = Lcg::new(seed);
        lcg.jump(index);
        lcg
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(MULTIPLIER)
            .wrapping_add(INCREMENT);
        self.state
    }

    /// Uniform in `[-0.1, 0.1)`.
    #[inline]
    pub fn next_weight(&mut self) -> f32 {
        let u = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-0.1 + 0.2 * u) as f32
    }

    pub fn fill(&mut self, out: &mut [f32]) {
        for v in out {
            *v = self.next_weight();
        }
    }

    /// Advance by `n` steps in O(log n).
    pub fn jump(&mut self, mut n: u64) {
        let (mut mul, mut add) = (MULTIPLIER, INCREMENT);
        let (mut acc_mul, mut acc_add) = (1u64, 0u64);
        while n > 0 {
            if n & 1 == 1 {
                acc_mul = acc_mul.wrapping_mul(mul);
                acc_add = acc_add.wrapping_mul(mul).wrapping_add(add);
            }
            add = mul.wrapping_add(1).wrapping_mul(add);
            mul = mul.wrapping_mul(mul);
            n >>= 1;
        }
        self.state = acc_mul.wrapping_mul(self.state).wrapping_add(acc_add);
    }
}
