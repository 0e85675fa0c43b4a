//! Seeded generator of parliamentary-style English sentences.
//!
//! A small phrase grammar with Zipf-weighted choices. The output has the
//! register of debate transcripts and enough local regularity for an n-gram
//! model to learn, while every sentence is drawn independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ADDRESSEES: &[&str] = &[
    "Mr President",
    "Madam President",
    "Commissioner",
    "Ladies and gentlemen",
    "Mr President-in-Office of the Council",
    "Madam Commissioner",
];

const INTROS: &[&str] = &[
    "However,",
    "Therefore,",
    "In my opinion,",
    "First of all,",
    "On behalf of my group,",
    "Finally,",
    "As the rapporteur has said,",
    "In this context,",
    "Nevertheless,",
    "For this reason,",
    "At the same time,",
    "In particular,",
];

const SUBJECTS: &[&str] = &[
    "the Commission",
    "the Council",
    "this Parliament",
    "the Member States",
    "we",
    "the European Union",
    "the rapporteur",
    "our committee",
    "the Presidency",
    "my group",
    "the governments",
    "the citizens of Europe",
    "national parliaments",
    "the Court of Auditors",
];

const MODALS: &[&str] =
    &["must", "should", "will", "cannot", "would like to", "need to", "can", "will have to", "ought to"];

const VERBS: &[&str] = &[
    "support",
    "adopt",
    "reject",
    "examine",
    "ensure",
    "improve",
    "strengthen",
    "consider",
    "welcome",
    "address",
    "implement",
    "review",
    "protect",
    "finance",
    "propose",
    "discuss",
];

const DETERMINERS: &[&str] = &["the", "this", "a", "our", "every", "such a"];

const ADJECTIVES: &[&str] = &[
    "",
    "",
    "new",
    "common",
    "European",
    "important",
    "social",
    "economic",
    "financial",
    "political",
    "environmental",
    "internal",
    "fundamental",
    "effective",
    "overall",
    "legal",
];

const NOUNS: &[&str] = &[
    "proposal",
    "report",
    "directive",
    "regulation",
    "budget",
    "agreement",
    "framework",
    "strategy",
    "policy",
    "amendment",
    "resolution",
    "programme",
    "approach",
    "position",
    "procedure",
    "initiative",
    "market",
    "debate",
];

const OF_PHRASES: &[&str] = &[
    "",
    "",
    "",
    "of the Commission",
    "on employment",
    "for small and medium-sized enterprises",
    "on the environment",
    "of the Union",
    "on human rights",
    "for the coming year",
    "on transport safety",
    "of the Council",
    "on agriculture",
    "on energy",
];

const ADVERBIALS: &[&str] = &[
    "",
    "",
    "as soon as possible",
    "at European level",
    "in the coming years",
    "without delay",
    "within the framework of the Treaty",
    "in the internal market",
    "in close cooperation with the Member States",
    "for the benefit of all citizens",
    "on this issue",
    "in accordance with the rules",
];

const CONJUNCTIONS: &[&str] = &["and", "but", "because", "while", "so that", "since"];

const COPULA_SUBJECTS: &[&str] =
    &["This", "The situation", "The proposal", "The report", "This debate", "The question", "The problem"];

const COPULA_PREDICATES: &[&str] = &[
    "is very important",
    "is not acceptable",
    "is a step in the right direction",
    "is a matter of great concern",
    "is extremely serious",
    "is essential for the future of Europe",
    "is not the answer",
    "is a good compromise",
];

const THANKS: &[&str] = &[
    "I would like to thank the rapporteur for the excellent work",
    "I should like to congratulate the rapporteur on this report",
    "I want to thank all the colleagues who contributed",
    "I would like to thank the Commissioner for the answer",
];

/// Zipf-weighted pick: item `i` has weight `1 / (i + 1)`.
fn pick<'a>(rng: &mut impl Rng, items: &[&'a str]) -> &'a str {
    let total: f64 = (1..=items.len()).map(|k| 1.0 / k as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, item) in items.iter().enumerate() {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return item;
        }
    }
    items[items.len() - 1]
}

fn push_word(out: &mut String, word: &str) {
    if word.is_empty() {
        return;
    }
    if !out.is_empty() && !out.ends_with(' ') {
        out.push(' ');
    }
    out.push_str(word);
}

fn noun_phrase(rng: &mut impl Rng, out: &mut String) {
    let det = pick(rng, DETERMINERS);
    let adj = pick(rng, ADJECTIVES);
    let noun = pick(rng, NOUNS);
    let next = if adj.is_empty() { noun } else { adj };
    let det = match det {
        "a" if next.starts_with(['a', 'e', 'i', 'o', 'u', 'E']) => "an",
        "such a" if next.starts_with(['a', 'e', 'i', 'o', 'u', 'E']) => "such an",
        d => d,
    };
    push_word(out, det);
    push_word(out, adj);
    push_word(out, noun);
    push_word(out, pick(rng, OF_PHRASES));
}

fn clause(rng: &mut impl Rng, out: &mut String) {
    if rng.random::<f64>() < 0.2 {
        push_word(out, pick(rng, COPULA_SUBJECTS));
        push_word(out, pick(rng, COPULA_PREDICATES));
        return;
    }
    push_word(out, pick(rng, SUBJECTS));
    push_word(out, pick(rng, MODALS));
    push_word(out, pick(rng, VERBS));
    noun_phrase(rng, out);
    push_word(out, pick(rng, ADVERBIALS));
}

fn capitalize(s: &mut String) {
    if let Some(first) = s.chars().next() {
        let upper: String = first.to_uppercase().collect();
        s.replace_range(..first.len_utf8(), &upper);
    }
}

pub fn synth_sentence(rng: &mut impl Rng) -> String {
    let mut s = String::new();
    let roll = rng.random::<f64>();
    if roll < 0.1 {
        push_word(&mut s, pick(rng, ADDRESSEES));
        s.push(',');
        push_word(&mut s, pick(rng, THANKS));
        s.push('.');
        return s;
    }
    if roll < 0.3 {
        push_word(&mut s, pick(rng, ADDRESSEES));
        s.push(',');
    } else if roll < 0.55 {
        push_word(&mut s, pick(rng, INTROS));
    }
    let mut body = String::new();
    clause(rng, &mut body);
    for _ in 0..4 {
        if rng.random::<f64>() >= 0.55 {
            break;
        }
        push_word(&mut body, pick(rng, CONJUNCTIONS));
        clause(rng, &mut body);
    }
    if s.is_empty() {
        capitalize(&mut body);
    } else if body.starts_with("This ") || body.starts_with("The ") {
        body.replace_range(..1, &body[..1].to_lowercase());
    }
    push_word(&mut s, &body);
    s.push('.');
    s
}

/// `count` sentences from the seeded grammar.
pub fn synth_corpus(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synth_sentence(&mut rng)).collect()
}
