use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, LabeledString};
use crate::error::{Error, Result};

pub const TOMITA_TRAIN_LENGTHS: &[usize] = &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 16, 19, 22];
pub const TOMITA_TEST_LENGTHS: &[usize] = &[1, 4, 7, 10, 13, 16, 19, 22, 25, 28];

/// Lengths up to this many strings are enumerated rather than sampled.
const EXHAUSTIVE_LIMIT: u64 = 4096;

struct Dfa {
    delta: &'static [[u8; 2]],
    accept: &'static [bool],
}

// State 0 is the start state in every table; the last state of a table with
// a rejecting sink is that sink.
const DFAS: [Dfa; 7] = [
    // 1*
    Dfa { delta: &[[1, 0], [1, 1]], accept: &[true, false] },
    // (10)*
    Dfa { delta: &[[2, 1], [0, 2], [2, 2]], accept: &[true, false, false] },
    // no odd block of 1s directly followed by an odd block of 0s:
    // 0 neutral, 1 odd 1s, 2 even 1s, 3 odd 0s after odd 1s, 4 even 0s after odd 1s
    Dfa { delta: &[[0, 1], [3, 2], [0, 1], [4, 5], [3, 1], [5, 5]], accept: &[true, true, true, false, true, false] },
    // no 000
    Dfa { delta: &[[1, 0], [2, 0], [3, 0], [3, 3]], accept: &[true, true, true, false] },
    // even 0s and even 1s: state = (zeros parity) + 2 * (ones parity)
    Dfa { delta: &[[1, 2], [0, 3], [3, 0], [2, 1]], accept: &[true, false, false, false] },
    // (#0 - #1) mod 3 == 0
    Dfa { delta: &[[1, 2], [2, 0], [0, 1]], accept: &[true, false, false] },
    // 0*1*0*1*
    Dfa { delta: &[[0, 1], [2, 1], [2, 3], [4, 3], [4, 4]], accept: &[true, true, true, true, false] },
];

pub fn tomita_label(g: usize, s: &str) -> Result<bool> {
    let dfa = DFAS
        .get(g.wrapping_sub(1))
        .ok_or_else(|| Error::Config(format!("Tomita grammar index must be 1..=7, got {g}")))?;
    let mut q = 0usize;
    for c in s.chars() {
        let bit = match c {
            '0' => 0,
            '1' => 1,
            other => return Err(Error::InvalidString(format!("`{other}` is not a binary digit"))),
        };
        q = dfa.delta[q][bit] as usize;
    }
    Ok(dfa.accept[q])
}

fn bits(value: u64, len: usize) -> String {
    (0..len).rev().map(|i| if value >> i & 1 == 1 { '1' } else { '0' }).collect()
}

/// Labeled strings for each length: all of them when there are at most
/// 4096, otherwise `samples_per_length` distinct uniform draws.
pub fn gen_tomita(g: usize, lengths: &[usize], samples_per_length: usize, seed: u64) -> Result<Dataset> {
    tomita_label(g, "")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &len in lengths {
        let total = if len < 64 { 1u64 << len } else { u64::MAX };
        let picks: Vec<String> = if total <= EXHAUSTIVE_LIMIT {
            (0..total).map(|v| bits(v, len)).collect()
        } else {
            let want = samples_per_length.min(usize::try_from(total).unwrap_or(usize::MAX));
            let mut seen = BTreeSet::new();
            let mut picks = Vec::with_capacity(want);
            while picks.len() < want {
                let s: String = (0..len).map(|_| if rng.random_bool(0.5) { '1' } else { '0' }).collect();
                if seen.insert(s.clone()) {
                    picks.push(s);
                }
            }
            picks
        };
        for text in picks {
            let label = tomita_label(g, &text)?;
            out.push(LabeledString { text, label });
        }
    }
    Ok(Dataset::new(out))
}
