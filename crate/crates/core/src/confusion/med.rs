use super::{ConfusionPair, ConfusionSet, Occurrence, OccurrenceSource};
use crate::corpus::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentOp {
    Match { ref_pos: usize, hyp_pos: usize },
    Substitute { ref_pos: usize, hyp_pos: usize },
    Delete { ref_pos: usize },
    Insert { hyp_pos: usize },
}

impl AlignmentOp {
    pub fn ref_pos(&self) -> Option<usize> {
        match *self {
            AlignmentOp::Match { ref_pos, .. } | AlignmentOp::Substitute { ref_pos, .. } | AlignmentOp::Delete { ref_pos } => Some(ref_pos),
            AlignmentOp::Insert { .. } => None,
        }
    }

    pub fn hyp_pos(&self) -> Option<usize> {
        match *self {
            AlignmentOp::Match { hyp_pos, .. } | AlignmentOp::Substitute { hyp_pos, .. } | AlignmentOp::Insert { hyp_pos } => Some(hyp_pos),
            AlignmentOp::Delete { .. } => None,
        }
    }

    pub fn cost(&self) -> usize {
        usize::from(!matches!(self, AlignmentOp::Match { .. }))
    }
}

pub fn alignment_cost(ops: &[AlignmentOp]) -> usize {
    ops.iter().map(AlignmentOp::cost).sum()
}

/// Minimum edit-distance alignment of `hyp` against `refr`.
///
/// Backtrace ties resolve Match, then Substitute, then Delete, then Insert.
pub fn med_align<T: PartialEq>(refr: &[T], hyp: &[T]) -> Vec<AlignmentOp> {
    let (n, m) = (refr.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(refr[i - 1] != hyp[j - 1]);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 && refr[i - 1] == hyp[j - 1] && d[(i - 1) * w + j - 1] == here {
            ops.push(AlignmentOp::Match { ref_pos: i - 1, hyp_pos: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[(i - 1) * w + j - 1] + 1 == here {
            ops.push(AlignmentOp::Substitute { ref_pos: i - 1, hyp_pos: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.push(AlignmentOp::Delete { ref_pos: i - 1 });
            i -= 1;
        } else {
            ops.push(AlignmentOp::Insert { hyp_pos: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// One confusion pair per substitution between manual (reference) and ASR
/// (hypothesis) transcripts. Examples without ASR are skipped.
pub fn extract_confusions_med(dataset: &Dataset) -> ConfusionSet {
    let mut set = ConfusionSet::new();
    for ex in &dataset.examples {
        let Some(asr) = &ex.asr_tokens else { continue };
        for op in med_align(&ex.manual_tokens, asr) {
            if let AlignmentOp::Substitute { ref_pos, hyp_pos } = op {
                let manual = Occurrence {
                    word: ex.manual_tokens[ref_pos].clone(),
                    utterance_id: ex.id.clone(),
                    position: ref_pos,
                    source: OccurrenceSource::Manual,
                };
                let heard = Occurrence {
                    word: asr[hyp_pos].clone(),
                    utterance_id: ex.id.clone(),
                    position: hyp_pos,
                    source: OccurrenceSource::Asr,
                };
                if let Some(p) = ConfusionPair::new(manual, heard) {
                    set.insert(p);
                }
            }
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabeledExample, Split};
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    /// Textbook recursive Levenshtein, memoized.
    fn oracle(a: &[u8], b: &[u8]) -> usize {
        fn go(a: &[u8], b: &[u8], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
            if a.is_empty() {
                return b.len();
            }
            if b.is_empty() {
                return a.len();
            }
            if let Some(&v) = memo.get(&(a.len(), b.len())) {
                return v;
            }
            let cost = usize::from(a[0] != b[0]);
            let v = (go(&a[1..], &b[1..], memo) + cost)
                .min(go(&a[1..], b, memo) + 1)
                .min(go(a, &b[1..], memo) + 1);
            memo.insert((a.len(), b.len()), v);
            v
        }
        go(a, b, &mut Default::default())
    }

    #[test]
    fn identical() {
        assert_eq!(
            med_align(&w("play song"), &w("play song")),
            [AlignmentOp::Match { ref_pos: 0, hyp_pos: 0 }, AlignmentOp::Match { ref_pos: 1, hyp_pos: 1 }]
        );
    }

    #[test]
    fn single_substitution() {
        let ops = med_align(&w("play song"), &w("pay song"));
        assert_eq!(ops, [AlignmentOp::Substitute { ref_pos: 0, hyp_pos: 0 }, AlignmentOp::Match { ref_pos: 1, hyp_pos: 1 }]);
        assert_eq!(alignment_cost(&ops), 1);
    }

    #[test]
    fn empty_hypothesis() {
        let ops = med_align(&w("a b"), &[]);
        assert_eq!(ops, [AlignmentOp::Delete { ref_pos: 0 }, AlignmentOp::Delete { ref_pos: 1 }]);
        assert_eq!(alignment_cost(&ops), 2);
        assert!(med_align::<String>(&[], &[]).is_empty());
    }

    fn all_seqs(max_len: usize) -> Vec<Vec<u8>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![vec![]];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for s in &frontier {
                for c in 0..3u8 {
                    let mut t: Vec<u8> = s.clone();
                    t.push(c);
                    next.push(t);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    fn check_path(ops: &[AlignmentOp], n: usize, m: usize) {
        let refs: Vec<usize> = ops.iter().filter_map(AlignmentOp::ref_pos).collect();
        let hyps: Vec<usize> = ops.iter().filter_map(AlignmentOp::hyp_pos).collect();
        assert_eq!(refs, (0..n).collect::<Vec<_>>());
        assert_eq!(hyps, (0..m).collect::<Vec<_>>());
    }

    #[test]
    fn exhaustive_against_oracle_up_to_length_4() {
        // the full length-6 sweep runs in the acceptance suite
        let seqs = all_seqs(4);
        for a in &seqs {
            for b in &seqs {
                let ops = med_align(a, b);
                assert_eq!(alignment_cost(&ops), oracle(a, b), "{a:?} {b:?}");
                check_path(&ops, a.len(), b.len());
                for op in &ops {
                    if let AlignmentOp::Match { ref_pos, hyp_pos } = op {
                        assert_eq!(a[*ref_pos], b[*hyp_pos]);
                    }
                }
            }
        }
    }

    fn example(id: &str, manual: &str, asr: Option<&str>) -> LabeledExample {
        LabeledExample {
            id: id.into(),
            manual_tokens: w(manual),
            asr_tokens: asr.map(w),
            intent: "BookRestaurant".into(),
        }
    }

    #[test]
    fn no_substitutions_no_pairs() {
        let d = Dataset::new(vec![example("u", "book a table", Some("book a table"))], Split::Train).unwrap();
        assert!(extract_confusions_med(&d).is_empty());
    }

    #[test]
    fn book_hook_pair() {
        let d = Dataset::new(vec![example("u", "book a table", Some("hook a table")), example("v", "no asr", None)], Split::Train).unwrap();
        let set = extract_confusions_med(&d);
        assert_eq!(set.len(), 1);
        let p = set.iter().next().unwrap();
        assert_eq!(p.words(), ("book", "hook"));
        assert_eq!((p.a().position, p.b().position), (0, 0));
        assert_eq!(p.a().source, OccurrenceSource::Manual);
        assert_eq!(p.b().source, OccurrenceSource::Asr);
    }

    #[test]
    fn duplicate_pairs_dedup() {
        let ex = example("u", "book a table", Some("hook a table"));
        let d = Dataset::new(vec![ex], Split::Train).unwrap();
        let mut set = extract_confusions_med(&d);
        set.extend(extract_confusions_med(&d));
        assert_eq!(set.len(), 1);
    }

    proptest! {
        #[test]
        fn never_pairs_equal_words_and_ignores_order(rows in prop::collection::vec(
            (prop::collection::vec(0u8..4, 1..6), prop::collection::vec(0u8..4, 1..6)), 1..8),
            rot in 0usize..8) {
            let vocab = ["book", "hook", "a", "table"];
            let examples: Vec<_> = rows.iter().enumerate().map(|(i, (m, a))| LabeledExample {
                id: format!("u{i}"),
                manual_tokens: m.iter().map(|&k| vocab[k as usize].to_string()).collect(),
                asr_tokens: Some(a.iter().map(|&k| vocab[k as usize].to_string()).collect()),
                intent: "X".into(),
            }).collect();
            let mut rotated = examples.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            let s1 = extract_confusions_med(&Dataset::new(examples, Split::Train).unwrap());
            let s2 = extract_confusions_med(&Dataset::new(rotated, Split::Train).unwrap());
            prop_assert!(s1.iter().all(|p| p.a().word != p.b().word));
            prop_assert_eq!(s1.to_jsonl(), s2.to_jsonl());
        }
    }
}
