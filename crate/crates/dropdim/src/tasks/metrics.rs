//! Evaluation metrics: token-level WER, corpus-level BLEU, and token
//! accuracy.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Token error rate: Levenshtein distance (substitutions + insertions +
/// deletions) divided by the reference length. May exceed 1.
pub fn wer<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::param("reference", "must be non-empty".to_string()));
    }
    Ok(levenshtein(hyp, reference) as f64 / reference.len() as f64)
}

fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // Rolling single-row dynamic program.
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Fraction of reference positions whose hypothesis token matches
/// (positional comparison; hypotheses shorter than the reference simply
/// miss the tail).
pub fn token_accuracy<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::param("reference", "must be non-empty".to_string()));
    }
    let matches = hyp
        .iter()
        .zip(reference)
        .filter(|(h, r)| h == r)
        .count();
    Ok(matches as f64 / reference.len() as f64)
}

const BLEU_ORDER: usize = 4;

/// Corpus-level BLEU-4 on a 0–100 scale: uniform n-gram weights,
/// geometric mean of clipped precisions, multiplicative brevity penalty,
/// one reference per hypothesis, no smoothing — a corpus with no matching
/// 4-gram scores exactly 0.
pub fn bleu<T: PartialEq + Eq + std::hash::Hash + Clone>(
    hyps: &[Vec<T>],
    refs: &[Vec<T>],
) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::ShapeMismatch {
            op: "bleu",
            lhs: vec![hyps.len()],
            rhs: vec![refs.len()],
        });
    }
    if hyps.is_empty() {
        return Err(Error::param("hyps", "empty corpus".to_string()));
    }
    for r in refs {
        if r.is_empty() {
            return Err(Error::param("refs", "empty reference".to_string()));
        }
    }
    let mut matched = [0u64; BLEU_ORDER];
    let mut total = [0u64; BLEU_ORDER];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len() as u64;
        ref_len += r.len() as u64;
        for n in 1..=BLEU_ORDER {
            let mut ref_counts: HashMap<&[T], u64> = HashMap::new();
            for gram in r.windows(n) {
                *ref_counts.entry(gram).or_insert(0) += 1;
            }
            let mut hyp_counts: HashMap<&[T], u64> = HashMap::new();
            for gram in h.windows(n) {
                *hyp_counts.entry(gram).or_insert(0) += 1;
            }
            for (gram, &c) in &hyp_counts {
                total[n - 1] += c;
                if let Some(&rc) = ref_counts.get(gram) {
                    matched[n - 1] += c.min(rc);
                }
            }
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_precision_sum = 0.0;
    for n in 0..BLEU_ORDER {
        if matched[n] == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matched[n] as f64 / total[n] as f64).ln();
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * (log_precision_sum / BLEU_ORDER as f64).exp())
}

/// BLEU over whitespace-tokenized strings, compared case-insensitively.
pub fn bleu_str(hyps: &[&str], refs: &[&str]) -> Result<f64> {
    let tokenize = |s: &str| -> Vec<String> {
        s.split_whitespace().map(|w| w.to_lowercase()).collect()
    };
    let h: Vec<Vec<String>> = hyps.iter().map(|s| tokenize(s)).collect();
    let r: Vec<Vec<String>> = refs.iter().map(|s| tokenize(s)).collect();
    bleu(&h, &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wer_identity_is_zero() {
        assert_eq!(wer(&[1u32, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
    }

    #[test]
    fn wer_one_deletion_hand_count() {
        // hyp=[a], ref=[a,b]: one deletion over reference length 2.
        assert_eq!(wer(&['a'], &['a', 'b']).unwrap(), 0.5);
    }

    #[test]
    fn wer_can_exceed_one_and_rejects_empty_ref() {
        let w = wer(&[9u32, 9, 9, 9], &[1]).unwrap();
        assert!(w > 1.0);
        assert!(wer::<u32>(&[1], &[]).is_err());
        // Insertion-only bound: wer <= max(len(hyp), len(ref)) / len(ref).
        assert!(w <= 4.0);
    }

    #[test]
    fn wer_substitution_insertion_deletion_mix() {
        // ref = [1 2 3 4], hyp = [1 9 4]: sub(2→9) + del(3) = 2 edits.
        assert_eq!(wer(&[1u32, 9, 4], &[1, 2, 3, 4]).unwrap(), 0.5);
    }

    #[test]
    fn token_accuracy_positional() {
        assert_eq!(token_accuracy(&[1u32, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(token_accuracy(&[1u32, 9, 3], &[1, 2, 3]).unwrap(), 2.0 / 3.0);
        assert_eq!(token_accuracy(&[1u32], &[1, 2]).unwrap(), 0.5);
        assert!(token_accuracy::<u32>(&[], &[]).is_err());
    }

    #[test]
    fn bleu_identity_is_100() {
        let corpus = vec![vec![1u32, 2, 3, 4, 5], vec![9, 8, 7, 6, 5, 4]];
        let b = bleu(&corpus, &corpus).unwrap();
        assert!((b - 100.0).abs() < 1e-9, "{}", b);
    }

    #[test]
    fn bleu_hand_case_brevity_penalty() {
        // hyp = "a b c d", ref = "a b c d e":
        // precisions 4/4, 3/3, 2/2, 1/1; BP = exp(1 - 5/4).
        let b = bleu_str(&["a b c d"], &["a b c d e"]).unwrap();
        let expected = 100.0 * (1.0f64 - 1.25).exp();
        assert!((b - expected).abs() < 1e-9, "{} vs {}", b, expected);
        assert!((b - 77.88).abs() < 0.01);
    }

    #[test]
    fn bleu_no_four_gram_match_is_zero() {
        // Unigrams overlap but no 4-gram does.
        let b = bleu(&[vec![1u32, 9, 2, 8, 3, 7]], &[vec![1, 2, 3, 4, 5, 6]]).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn bleu_is_case_insensitive_for_strings() {
        let b = bleu_str(&["The Cat Sat On It"], &["the cat sat on it"]).unwrap();
        assert!((b - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bleu_is_permutation_invariant_over_corpus_order() {
        let h1 = vec![vec![1u32, 2, 3, 4, 9], vec![5, 6, 7, 8, 5, 6]];
        let r1 = vec![vec![1u32, 2, 3, 4, 5], vec![5, 6, 7, 8, 9, 10]];
        let h2 = vec![h1[1].clone(), h1[0].clone()];
        let r2 = vec![r1[1].clone(), r1[0].clone()];
        let a = bleu(&h1, &r1).unwrap();
        let b = bleu(&h2, &r2).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn bleu_rejects_mismatched_corpora() {
        assert!(bleu(&[vec![1u32]], &[]).is_err());
        assert!(bleu(&[vec![1u32]], &[vec![1], vec![2]]).is_err());
    }
}
