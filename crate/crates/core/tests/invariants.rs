use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use serde_json::json;

use skillbank_core::agreement::{cohen_kappa, Weighting};
use skillbank_core::evolution::{decide, Decision};
use skillbank_core::iu::{
    classify_key, corpus_stats, ingest_lines, IngestMode, InterventionUnit, KeyClass, PairExpansion,
};
use skillbank_core::metrics::{evaluate, meteor, rouge_l, rouge_n, sentence_bleu, tokenize, BleuMode, ResponsePair};
use skillbank_core::prototype::{
    cluster_prototypes, group_prototypes, InductionConfig, Ratio, SnippetConfig, StateClusterer,
};
use skillbank_core::reply::{parse_agent_reply, ReplyMode};
use skillbank_core::simulation::{clamp_score, classify_outcome, Grade, Outcome, Thresholds};
use skillbank_core::taxonomy::{
    change_direction, Direction, LabelKind, ResponseChange, SeekerState, Strategy, SupportAction, Taxonomy,
};

// ---------------------------------------------------------------------------
// taxonomy

#[test]
fn canonical_labels_round_trip() {
    let t = Taxonomy::default();
    let check = |kind: LabelKind, labels: Vec<&str>| {
        for l in labels {
            assert_eq!(t.validate_label(kind, l).unwrap().as_str(), l);
            assert_eq!(t.validate_label(kind, &l.to_uppercase()).unwrap().as_str(), l);
        }
    };
    check(LabelKind::State, SeekerState::ALL.iter().map(|s| s.as_str()).collect());
    check(
        LabelKind::Action,
        SupportAction::ALL.iter().map(|s| s.as_str()).collect(),
    );
    check(
        LabelKind::Change,
        ResponseChange::ALL.iter().map(|s| s.as_str()).collect(),
    );
    check(LabelKind::Strategy, Strategy::ALL.iter().map(|s| s.as_str()).collect());
    check(LabelKind::Scenario, t.scenarios().iter().map(String::as_str).collect());
}

#[test]
fn directions_partition_changes() {
    let classes: BTreeSet<Direction> = ResponseChange::ALL.iter().map(|c| change_direction(*c)).collect();
    assert_eq!(classes.len(), 3);
    assert_eq!(
        (
            SeekerState::ALL.len(),
            SupportAction::ALL.len(),
            ResponseChange::ALL.len(),
            Strategy::ALL.len()
        ),
        (15, 17, 14, 8)
    );
}

// ---------------------------------------------------------------------------
// generated units

fn unit_lines() -> impl proptest::strategy::Strategy<Value = Vec<String>> {
    prop::collection::vec(
        (
            prop::collection::btree_set(0..SeekerState::ALL.len(), 1..3),
            prop::collection::btree_set(0..SupportAction::ALL.len(), 1..3),
            0..ResponseChange::ALL.len(),
        ),
        0..60,
    )
    .prop_map(|units| {
        units
            .into_iter()
            .enumerate()
            .map(|(i, (ss, aa, c))| {
                json!({
                    "dialog_id": format!("d{}", i / 7),
                    "outcome": if i % 3 == 0 { "failed" } else { "success" },
                    "turn_id": i % 7,
                    "pre_seeker_states": ss.iter().map(|k| SeekerState::ALL[*k].as_str()).collect::<Vec<_>>(),
                    "pre_seeker_text": format!("seeker {i}"),
                    "counselor_actions": aa.iter().map(|k| SupportAction::ALL[*k].as_str()).collect::<Vec<_>>(),
                    "supporter_text": format!("supporter {i}"),
                    "response_change": ResponseChange::ALL[c].as_str(),
                    "post_seeker_text": format!("reply {i}"),
                    "note": i,
                })
                .to_string()
            })
            .collect()
    })
}

fn ingest(lines: &[String]) -> Vec<InterventionUnit> {
    ingest_lines(
        lines.iter().map(String::as_str),
        &Taxonomy::default(),
        IngestMode::Strict,
    )
    .unwrap()
    .units
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn stats_partition_and_permutation(lines in unit_lines(), seed in any::<u64>()) {
        let units = ingest(&lines);
        let stats = corpus_stats(&units, PairExpansion::CrossProduct);
        prop_assert_eq!(stats.key_total, stats.key_positive + stats.key_negative);
        prop_assert!(stats.key_total <= stats.total);
        let classes = units.iter().map(classify_key).collect::<Vec<_>>();
        prop_assert_eq!(classes.iter().filter(|c| **c == KeyClass::NonKey).count() as u64, stats.non_key());

        let mut shuffled = units.clone();
        let n = shuffled.len();
        if n > 1 {
            for i in 0..n {
                shuffled.swap(i, (seed as usize).wrapping_add(i * 31) % n);
            }
        }
        prop_assert_eq!(corpus_stats(&shuffled, PairExpansion::CrossProduct), stats);
    }

    #[test]
    fn ingest_inverts_serialize(lines in unit_lines()) {
        let units = ingest(&lines);
        let again: Vec<String> = units.iter().map(InterventionUnit::to_line).collect();
        prop_assert_eq!(ingest(&again), units);
    }

    #[test]
    fn prototype_invariants(lines in unit_lines(), min_support in 1..6u64, num in 0..10u64) {
        let units = ingest(&lines);
        let directions = Taxonomy::default().directions().clone();
        let threshold = Ratio::new(num, 10).unwrap();
        let config = InductionConfig { min_support, effectiveness_threshold: threshold, ..InductionConfig::default() };
        let protos = group_prototypes(&units, &config, &directions);

        let mut expansions = 0u64;
        for s in SeekerState::ALL {
            for a in SupportAction::ALL {
                let n = units
                    .iter()
                    .filter(|u| classify_key(u) != KeyClass::NonKey)
                    .filter(|u| u.pre_seeker_states.contains(s) && u.counselor_actions.contains(a))
                    .count() as u64;
                if n >= min_support {
                    expansions += n;
                }
            }
        }
        prop_assert_eq!(protos.iter().map(|p| p.n_total).sum::<u64>(), expansions);
        for p in &protos {
            prop_assert_eq!(p.n_total, p.member_ids.len() as u64);
            prop_assert!(p.n_total >= min_support.max(1));
            prop_assert!(p.n_positive <= p.n_total);
            prop_assert_eq!(p.effectiveness, Ratio::new(p.n_positive, p.n_total).unwrap());
            prop_assert_eq!(p.flagged_risk, p.effectiveness < threshold);
            if p.n_positive == p.n_total {
                let negative: u64 = p
                    .change_histogram
                    .iter()
                    .filter(|(c, _)| change_direction(**c) == Direction::Negative)
                    .map(|(_, n)| *n)
                    .sum();
                prop_assert_eq!(negative, 0);
            }
        }

        // raising the cutoff never adds a prototype
        let higher = group_prototypes(&units, &InductionConfig { min_support: min_support + 1, ..config }, &directions);
        let keys: BTreeSet<_> = protos.iter().map(|p| p.key()).collect();
        prop_assert!(higher.iter().all(|p| keys.contains(&p.key())));

        // clustering partitions the prototypes
        let clusters = cluster_prototypes(&protos, &units, &StateClusterer, SnippetConfig::default()).unwrap();
        let mut seen: Vec<_> = clusters.iter().flat_map(|c| c.prototypes.iter().map(|p| p.key())).collect();
        prop_assert_eq!(seen.len(), protos.len());
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), protos.len());
    }
}

// ---------------------------------------------------------------------------
// simulation and evolution rules

proptest! {
    #[test]
    fn clamp_is_bounded_and_idempotent(x in any::<i64>()) {
        let c = clamp_score(x);
        prop_assert!((0..=100).contains(&c));
        prop_assert_eq!(clamp_score(c), c);
    }

    #[test]
    fn outcome_matches_grade(score in 0..=100i64) {
        let t = Thresholds::default();
        let (outcome, grade) = classify_outcome(score, &t);
        prop_assert_eq!(outcome == Outcome::Success, score >= t.success);
        prop_assert_eq!(outcome == Outcome::Failure, score < t.failure);
        prop_assert_eq!(grade == Grade::S, outcome == Outcome::Success);
        prop_assert_eq!(grade == Grade::F, outcome == Outcome::Failure);
    }

    #[test]
    fn accept_rule(all in any::<bool>(), avg in 0.0..100.0f64, base in 0.0..100.0f64, max in 1..5u32, k in 0..5u32) {
        let attempt = k % max + 1;
        let d = decide(all, avg, base, attempt, max);
        prop_assert_eq!(d == Decision::Accept, all || avg > base);
        prop_assert_ne!(decide(false, base, base, attempt, max), Decision::Accept);
        prop_assert_eq!(d == Decision::Reject, !(all || avg > base) && attempt == max);
    }
}

// ---------------------------------------------------------------------------
// metrics and agreement

fn words() -> impl proptest::strategy::Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof!["[a-d]", Just(",".to_string()), Just("É".to_string())],
        0..12,
    )
    .prop_map(|w| w.join(" "))
}

fn distinct(t: &[String]) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    t.iter().all(|w| seen.insert(w))
}

#[test]
fn rouge_two_can_exceed_rouge_one_with_repeats() {
    let (x, y) = (tokenize(", É , , É ,"), tokenize("É , É , É"));
    assert!((rouge_n(&x, &y, 1) - 8.0 / 11.0).abs() < 1e-12);
    assert!((rouge_n(&x, &y, 2) - 8.0 / 9.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metric_bounds_and_identity(a in words(), b in words()) {
        let (x, y) = (tokenize(&a), tokenize(&b));
        for v in [
            sentence_bleu(&x, &y, 1), sentence_bleu(&x, &y, 4), rouge_n(&x, &y, 1), rouge_n(&x, &y, 2),
            rouge_l(&x, &y), meteor(&x, &y),
        ] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "{}", v);
        }
        // with repeated tokens ROUGE-2 can exceed ROUGE-1
        if distinct(&x) && distinct(&y) {
            prop_assert!(rouge_n(&x, &y, 1) + 1e-12 >= rouge_n(&x, &y, 2));
        }
        if !x.is_empty() {
            for v in [sentence_bleu(&x, &x, 4), rouge_n(&x, &x, 1), rouge_n(&x, &x, 2), rouge_l(&x, &x), meteor(&x, &x)] {
                prop_assert!((v - 1.0).abs() < 1e-12, "{}", v);
            }
        }
    }

    #[test]
    fn evaluation_ignores_pair_order(texts in prop::collection::vec((words(), words()), 1..8)) {
        let pairs: Vec<ResponsePair> = texts
            .iter()
            .enumerate()
            .map(|(i, (p, g))| ResponsePair {
                context_id: format!("c{i}"),
                gold_strategy: Strategy::ALL[i % 8],
                gold_text: g.clone(),
                pred_strategy: Strategy::ALL[(i * 3) % 8],
                pred_text: p.clone(),
            })
            .collect();
        let mut rev = pairs.clone();
        rev.reverse();
        let (a, b) = (evaluate(&pairs, BleuMode::Sentence).unwrap(), evaluate(&rev, BleuMode::Sentence).unwrap());
        for (x, y) in [(a.acc, b.acc), (a.bleu4, b.bleu4), (a.rouge_l, b.rouge_l), (a.meteor, b.meteor)] {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!([a.acc, a.bleu1, a.bleu2, a.bleu4, a.rouge1, a.rouge2, a.rouge_l, a.meteor]
            .iter()
            .all(|v| (0.0..=100.0 + 1e-9).contains(v)));
    }

    #[test]
    fn cohen_is_symmetric(pairs in prop::collection::vec((1..=5usize, 1..=5usize), 2..30)) {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        for w in [Weighting::Unweighted, Weighting::Linear, Weighting::Quadratic] {
            match (cohen_kappa(&a, &b, 5, w), cohen_kappa(&b, &a, 5, w)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            }
        }
    }

    #[test]
    fn agent_reply_round_trip(k in 0..8usize, text in "[a-zA-Z ,.!?\"'{}]{1,40}") {
        prop_assume!(!text.trim().is_empty());
        let raw = json!({"strategy": Strategy::ALL[k].as_str(), "text": text}).to_string();
        let r = parse_agent_reply(&raw, ReplyMode::Strict).unwrap();
        prop_assert_eq!(r.strategy, Strategy::ALL[k]);
        prop_assert_eq!(r.text, text);
    }
}
