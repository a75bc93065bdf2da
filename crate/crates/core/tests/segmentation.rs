use cot_inspector_core::segment::{collapse_whitespace, segment};
use proptest::prelude::*;

/// Hand-segmented traces. Fifty sentences in total.
const CORPUS: &[(&str, &[&str])] = &[
    (
        "We use pi = 3.14159 here. Next, e.g. check step 2.",
        &["We use pi = 3.14159 here.", "Next, e.g. check step 2."],
    ),
    (
        "Okay, so the question asks for the area of a circle with radius 2.5 cm. The formula is A = pi r^2. Plugging in gives about 19.63 square cm.",
        &[
            "Okay, so the question asks for the area of a circle with radius 2.5 cm.",
            "The formula is A = pi r^2.",
            "Plugging in gives about 19.63 square cm.",
        ],
    ),
    (
        "According to Dr. Smith, the value is approx. 42. But wait! Is that right? Let me double-check.",
        &[
            "According to Dr. Smith, the value is approx. 42.",
            "But wait!",
            "Is that right?",
            "Let me double-check.",
        ],
    ),
    (
        "The U.S. population in 2020 was about 331 million. The U.K. had about 67 million, i.e. roughly a fifth. So the ratio is near 4.9.",
        &[
            "The U.S. population in 2020 was about 331 million.",
            "The U.K. had about 67 million, i.e. roughly a fifth.",
            "So the ratio is near 4.9.",
        ],
    ),
    (
        "Let $f(x) = x. Then$ be our map. Now apply it twice. We get $$f(f(x)) = x. Done$$ as expected.",
        &[
            "Let $f(x) = x. Then$ be our map.",
            "Now apply it twice.",
            "We get $$f(f(x)) = x. Done$$ as expected.",
        ],
    ),
    (
        r"By \(a. B\) we mean the product. Similarly \[c. D\] is a display. Both are fine.",
        &[r"By \(a. B\) we mean the product.", r"Similarly \[c. D\] is a display.", "Both are fine."],
    ),
    (
        "The ticket costs $5. Then tax adds $0.40. The total is $5.40.",
        &["The ticket costs $5.", "Then tax adds $0.40.", "The total is $5.40."],
    ),
    (
        "First, list the primes below 10.\nThey are 2, 3, 5 and 7.\n\nTheir sum is 17.",
        &["First, list the primes below 10.", "They are 2, 3, 5 and 7.", "Their sum is 17."],
    ),
    (
        "See Fig. 3 and Eq. 7 for details. Sec. 2 covers the setup, cf. the appendix. Refs. 4 and 5 agree.",
        &[
            "See Fig. 3 and Eq. 7 for details.",
            "Sec. 2 covers the setup, cf. the appendix.",
            "Refs. 4 and 5 agree.",
        ],
    ),
    (
        "He wrote \"The launch was in 1990.\" That matches NASA. (This is the key fact.) Moving on.",
        &[
            "He wrote \"The launch was in 1990.\"",
            "That matches NASA.",
            "(This is the key fact.)",
            "Moving on.",
        ],
    ),
    (
        "Hmm... maybe the answer is 12. wait, no. Actually it is 14. Yes!",
        &["Hmm... maybe the answer is 12. wait, no.", "Actually it is 14.", "Yes!"],
    ),
    (
        "Is 91 prime? No, since 91 = 7 * 13. What about 97? It is prime.",
        &["Is 91 prime?", "No, since 91 = 7 * 13.", "What about 97?", "It is prime."],
    ),
    (
        "Mr. and Mrs. Lee paid vs. the quoted price of 3.5 units. Prof. Kim disagreed, etc. The final figure stood.",
        &[
            "Mr. and Mrs. Lee paid vs. the quoted price of 3.5 units.",
            "Prof. Kim disagreed, etc. The final figure stood.",
        ],
    ),
    (
        "The meeting starts at 9 a.m. sharp. We leave at 5 p.m. Everyone agreed.",
        &["The meeting starts at 9 a.m. sharp.", "We leave at 5 p.m. Everyone agreed."],
    ),
    (
        "   Leading    spaces   are    collapsed.   Trailing ones too.   ",
        &["Leading spaces are collapsed.", "Trailing ones too."],
    ),
    (
        "Step one: read the question.\tStep two: solve it. Über-cautious readers check twice.",
        &["Step one: read the question.", "Step two: solve it.", "Über-cautious readers check twice."],
    ),
    (
        "The velocity is 3.0e8 m/s. Light covers 1.5e11 m in about 500 s. That is roughly 8.3 minutes.",
        &[
            "The velocity is 3.0e8 m/s.",
            "Light covers 1.5e11 m in about 500 s.",
            "That is roughly 8.3 minutes.",
        ],
    ),
];

#[test]
fn corpus_has_fifty_sentences() {
    let total: usize = CORPUS.iter().map(|(_, expected)| expected.len()).sum();
    assert_eq!(total, 50);
}

#[test]
fn hand_segmented_corpus() {
    for (input, expected) in CORPUS {
        assert_eq!(segment(input), *expected, "input: {input:?}");
    }
}

#[test]
fn corpus_sentences_are_fixed_points() {
    for (_, expected) in CORPUS {
        for sentence in *expected {
            assert_eq!(segment(sentence), vec![sentence.to_string()]);
        }
    }
}

fn trace_strategy() -> impl Strategy<Value = String> {
    let token = prop::sample::select(vec![
        "The", "value", "is", "3.5", "x", "Then", "e.g.", "Dr.", "U.S.", "i.e.", ".", "!", "?", "...", "$", "$$",
        r"\(", r"\)", r"\[", r"\]", "\"", ")", "(", "’", "”", "Über", "ok", "42", "$5", "Eq.", "Step",
    ]);
    let sep = prop::sample::select(vec![" ", " ", " ", "", "  ", "\t", "\n", "\n\n", ". ", "? ", "! "]);
    prop::collection::vec((token, sep), 0..40)
        .prop_map(|parts| parts.into_iter().map(|(t, s)| format!("{t}{s}")).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn joining_reconstructs_collapsed_text(trace in trace_strategy()) {
        let sentences = segment(&trace);
        prop_assert_eq!(sentences.join(" "), collapse_whitespace(&trace));
    }

    #[test]
    fn no_sentence_is_empty(trace in trace_strategy()) {
        prop_assert!(segment(&trace).iter().all(|s| !s.is_empty() && s.trim() == s));
    }

    #[test]
    fn rejoined_segmentation_is_a_fixed_point(trace in trace_strategy()) {
        let sentences = segment(&trace);
        prop_assert_eq!(segment(&sentences.join("\n")), sentences.clone());
        for s in &sentences {
            prop_assert_eq!(segment(s), vec![s.clone()]);
        }
    }

    #[test]
    fn segmentation_is_deterministic(trace in ".{0,200}") {
        prop_assert_eq!(segment(&trace), segment(&trace));
    }
}
