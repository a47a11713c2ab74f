use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, LabeledString};
use crate::error::{Error, Result};

pub const BP_MAX_DEPTH: usize = 11;

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

pub fn bp_label(s: &str) -> Result<bool> {
    let mut depth = 0i64;
    let mut ok = true;
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                ok &= depth >= 0;
            }
            'a'..='z' => {}
            other => return Err(Error::InvalidString(format!("`{other}` is outside the parentheses alphabet"))),
        }
    }
    Ok(ok && depth == 0)
}

/// A random balanced string of exactly `len` characters, or `None` when the
/// parenthesis walk exceeded `max_depth`.
fn balanced(len: usize, max_depth: usize, rng: &mut ChaCha8Rng) -> Option<String> {
    let pairs = rng.random_range(0..=len / 2);
    let mut parens = Vec::with_capacity(2 * pairs);
    let (mut open_left, mut depth) = (pairs, 0usize);
    while parens.len() < 2 * pairs {
        let open = open_left > 0 && (depth == 0 || rng.random_bool(0.5));
        if open {
            open_left -= 1;
            depth += 1;
            if depth > max_depth {
                return None;
            }
            parens.push(b'(');
        } else {
            depth -= 1;
            parens.push(b')');
        }
    }
    // choose which positions hold parentheses, fill the rest with letters
    let mut slots: Vec<bool> = (0..len).map(|i| i < parens.len()).collect();
    for i in (1..len).rev() {
        slots.swap(i, rng.random_range(0..=i));
    }
    let mut it = parens.into_iter();
    Some(
        slots
            .into_iter()
            .map(|p| if p { it.next().unwrap() } else { *LETTERS.choose(rng).unwrap() } as char)
            .collect(),
    )
}

fn positive(len: usize, max_depth: usize, rng: &mut ChaCha8Rng) -> String {
    loop {
        if let Some(s) = balanced(len, max_depth, rng) {
            return s;
        }
    }
}

fn paren_positions(s: &[u8]) -> Vec<usize> {
    s.iter().enumerate().filter(|(_, c)| matches!(c, b'(' | b')')).map(|(i, _)| i).collect()
}

/// A single-edit corruption of a positive, landing on length `len`: delete a
/// parenthesis from a longer string, insert one into a shorter string, or
/// flip one in place. Each edit leaves the counts unequal.
fn negative(len: usize, max_depth: usize, rng: &mut ChaCha8Rng) -> Option<String> {
    let mut edits = vec![0u8];
    if len >= 1 {
        edits.push(1);
    }
    if len >= 2 {
        edits.push(2);
    }
    match *edits.choose(rng).unwrap() {
        0 => {
            let mut s = positive(len + 1, max_depth, rng).into_bytes();
            let ps = paren_positions(&s);
            let &i = ps.choose(rng)?;
            s.remove(i);
            String::from_utf8(s).ok()
        }
        1 => {
            let mut s = positive(len - 1, max_depth, rng).into_bytes();
            let at = rng.random_range(0..=s.len());
            s.insert(at, if rng.random_bool(0.5) { b'(' } else { b')' });
            String::from_utf8(s).ok()
        }
        _ => {
            let mut s = positive(len, max_depth, rng).into_bytes();
            let ps = paren_positions(&s);
            let &i = ps.choose(rng)?;
            s[i] = if s[i] == b'(' { b')' } else { b'(' };
            String::from_utf8(s).ok()
        }
    }
}

/// Up to `per_length` distinct positives and as many distinct negatives per
/// length, trimmed to equal counts where both classes exist. Lengths where
/// one class cannot be produced (length 0 has no negatives) stay unbalanced
/// and show up in the dataset's balance report.
pub fn gen_bp(lengths: &[usize], max_depth: usize, per_length: usize, seed: u64) -> Result<Dataset> {
    if max_depth == 0 {
        return Err(Error::Config("max_depth must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let budget = 50 * per_length.max(1);
    for &len in lengths {
        let mut pos = BTreeSet::new();
        let mut pos_order = Vec::new();
        for _ in 0..budget {
            if pos_order.len() == per_length {
                break;
            }
            let s = positive(len, max_depth, &mut rng);
            if pos.insert(s.clone()) {
                pos_order.push(s);
            }
        }
        let mut neg = BTreeSet::new();
        let mut neg_order = Vec::new();
        if len > 0 {
            for _ in 0..budget {
                if neg_order.len() == per_length {
                    break;
                }
                if let Some(s) = negative(len, max_depth, &mut rng) {
                    if neg.insert(s.clone()) {
                        neg_order.push(s);
                    }
                }
            }
        }
        if !pos_order.is_empty() && !neg_order.is_empty() {
            let n = pos_order.len().min(neg_order.len());
            pos_order.truncate(n);
            neg_order.truncate(n);
        }
        for text in pos_order {
            debug_assert!(bp_label(&text).unwrap());
            out.push(LabeledString { text, label: true });
        }
        for text in neg_order {
            let label = bp_label(&text)?;
            if label {
                return Err(Error::Config(format!("negative generator produced a balanced string `{text}`")));
            }
            out.push(LabeledString { text, label });
        }
    }
    Ok(Dataset::new(out))
}
