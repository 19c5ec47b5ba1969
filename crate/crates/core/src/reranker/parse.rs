//! Turning an untrusted model reply into a permutation.
//!
//! Every input yields a valid permutation; the status records how much
//! repair was needed.

use std::sync::LazyLock;

use regex::Regex;

use crate::types::{Permutation, PermutationStatus};

static BRACKETED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[\s*[+-]?[0-9]+(?:\s*[,;]?\s*[+-]?[0-9]+)*\s*,?\s*\]").expect("valid regex")
});
static SIGNED_INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[+-]?[0-9]+").expect("valid regex"));
static INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[0-9]+").expect("valid regex"));

/// Extracts a ranking of labels `1..=k` from `reply`.
///
/// The first bracketed integer array wins; without one, every integer token
/// in the reply is read in order. Out-of-range values are dropped, repeats
/// keep their first occurrence and unmentioned labels are appended in
/// ascending order.
pub fn parse_permutation(reply: &str, k: usize) -> Permutation {
    let (tokens, bracketed) = match BRACKETED.find(reply) {
        Some(m) => (
            SIGNED_INT.find_iter(m.as_str()).map(|t| t.as_str()).collect::<Vec<_>>(),
            true,
        ),
        None => (INT.find_iter(reply).map(|t| t.as_str()).collect(), false),
    };

    let mut seen = vec![false; k];
    let mut order = Vec::with_capacity(k);
    let mut valid = 0usize;
    for tok in &tokens {
        let Some(label) = tok.parse::<i64>().ok().filter(|&v| v >= 1 && (v as u64) <= k as u64) else {
            continue;
        };
        valid += 1;
        let label = label as usize;
        if !std::mem::replace(&mut seen[label - 1], true) {
            order.push(label);
        }
    }

    if valid == 0 {
        return Permutation::identity(k, PermutationStatus::IdentityFallback);
    }
    let clean = bracketed && tokens.len() == k && valid == k && order.len() == k;
    order.extend((1..=k).filter(|&l| !seen[l - 1]));
    let status = if clean {
        PermutationStatus::Clean
    } else {
        PermutationStatus::Repaired
    };
    Permutation::new(order, status).expect("repair pipeline always yields a bijection")
}
