//! Counter-based random streams.
//!
//! Every uniform is a pure function of `(seed, step, slot, draw)`: the
//! Philox4x32-10 block cipher is keyed with the 64-bit seed and applied to
//! the counter `[step, slot, draw, 0]`. The first two output words form a
//! 64-bit integer whose top 53 bits give the uniform.
//!
//! Particle `j` at step `k` draws from `(seed, k, j, 0..)`; resampling at
//! step `k` draws from `(seed, k, RESAMPLE_SLOT, 0..)`. Because nothing
//! depends on evaluation order, the scalar and vectorized engines (and any
//! split of the ensemble across threads) see exactly the same numbers.

/// Slot reserved for the resampling channel. Particle slots are `0..N` with
/// `N < RESAMPLE_SLOT`.
pub const RESAMPLE_SLOT: u32 = u32::MAX;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 block function with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

#[inline]
fn bits_at(seed: u64, step: u32, slot: u32, draw: u32) -> u64 {
    let out = philox4x32_10([step, slot, draw, 0], [seed as u32, (seed >> 32) as u32]);
    (u64::from(out[0]) << 32) | u64::from(out[1])
}

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform in `[0, 1)` at an explicit address.
#[inline]
pub fn uniform_at(seed: u64, step: u32, slot: u32, draw: u32) -> f64 {
    (bits_at(seed, step, slot, draw) >> 11) as f64 * INV_2_53
}

/// Converts a `[0,1)` uniform from [`uniform_at`] to one strictly inside
/// `(0, 1)` on the same 2^-53 grid, shifted by half a cell.
#[inline]
pub fn open_unit(u: f64) -> f64 {
    u + 0.5 * INV_2_53
}

/// A position-addressed stream: a fixed `(seed, step, slot)` with a draw
/// counter that advances on every uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    step: u32,
    slot: u32,
    draw: u32,
}

impl RngStream {
    pub fn new(seed: u64, step: u32, slot: u32) -> Self {
        Self { seed, step, slot, draw: 0 }
    }

    pub fn at(seed: u64, step: u32, slot: u32, draw: u32) -> Self {
        Self { seed, step, slot, draw }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    /// Index of the next draw.
    pub fn position(&self) -> u32 {
        self.draw
    }

    /// Next uniform in `[0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        let u = uniform_at(self.seed, self.step, self.slot, self.draw);
        self.draw = self.draw.wrapping_add(1);
        u
    }
}
