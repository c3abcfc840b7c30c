//! Deterministic sub-seed derivation.
//!
//! Every randomized task in the pipeline (weight init, shuffles, dropout,
//! fold assignment, grid subsampling) gets its own seed derived from the
//! master seed, a salt naming the purpose, and a task index. Results are
//! therefore independent of execution order and thread schedule.

/// Purpose salts. Keep values stable; changing one changes every result
/// derived from it.
pub mod salt {
    pub const FOLD_SPLIT: u64 = 0x01;
    pub const GRID_SUBSAMPLE: u64 = 0x02;
    pub const CV_NET: u64 = 0x03;
    pub const CV_TRAIN: u64 = 0x04;
    pub const EVAL_SPLIT: u64 = 0x05;
    pub const EVAL_NET: u64 = 0x06;
    pub const EVAL_TRAIN: u64 = 0x07;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, salt: u64, index: u64) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut state = a ^ salt.wrapping_mul(0xD605_0B58_63C4_495D);
    let b = splitmix64(&mut state);
    let mut state = b ^ index.wrapping_mul(0xA24B_AED4_963E_E407);
    splitmix64(&mut state)
}
