//! Small generated datasets in the normalized schema, for smoke runs against
//! the toy model when no dataset file is given.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AnswerOption, InputSegment, TaskInstance, TaskKind};
use crate::seed;

const PEOPLE: &[&str] = &["A man", "A woman", "The child", "A farmer", "The teacher", "A doctor"];
const SENSIBLE: &[(&str, &str)] = &[
    ("drinks", "a cup of water"),
    ("reads", "a book"),
    ("plays", "a guitar"),
    ("rides", "a bicycle"),
    ("eats", "an apple"),
    ("opens", "the door"),
];
const ABSURD: &[(&str, &str)] = &[
    ("drinks", "a wooden chair"),
    ("reads", "a sandwich"),
    ("plays", "a mountain"),
    ("rides", "a cloud"),
    ("eats", "the ocean"),
    ("opens", "the moon"),
];
const PLACES: &[&str] = &["in the park", "at home", "on a stage", "in the kitchen", "near the river"];
const NAMES: &[&str] = &["Alice", "Bob", "Carol", "Dave", "Erin"];

fn opt(label: &str, text: &str) -> AnswerOption {
    AnswerOption { label: label.into(), text: text.into() }
}

fn seg(name: &str, text: String) -> InputSegment {
    InputSegment { name: name.into(), text }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

fn instance(task: TaskKind, i: usize, rng: &mut ChaCha8Rng) -> TaskInstance {
    let id = format!("{task}-{i:04}");
    let who = *pick(rng, PEOPLE);
    let k = rng.gen_range(0..SENSIBLE.len());
    let (verb, obj) = SENSIBLE[k];
    match task {
        TaskKind::ComVE => {
            let (bv, bo) = ABSURD[k];
            let sensible = format!("{who} {verb} {obj}.");
            let absurd = format!("{who} {bv} {bo}.");
            let absurd_first = rng.gen_bool(0.5);
            let (a, b, gold) = if absurd_first { (absurd, sensible, "A") } else { (sensible, absurd, "B") };
            TaskInstance {
                id,
                task,
                segments: vec![seg("sentence_a", a), seg("sentence_b", b)],
                options: vec![opt("A", ""), opt("B", "")],
                gold: gold.into(),
            }
        }
        TaskKind::ESNLI => {
            let place = *pick(rng, PLACES);
            let premise = format!("{who} {verb} {obj} {place}.");
            let (hyp, gold) = match rng.gen_range(0..3) {
                0 => (format!("{who} {verb} something."), "A"),
                1 => (format!("{who} is asleep {place}."), "B"),
                _ => (format!("{who} {verb} {obj} with a friend."), "C"),
            };
            TaskInstance {
                id,
                task,
                segments: vec![seg("premise", premise), seg("hypothesis", hyp)],
                options: vec![opt("A", "entailment"), opt("B", "contradiction"), opt("C", "neutral")],
                gold: gold.into(),
            }
        }
        TaskKind::BBHCausal => {
            let name = *pick(rng, NAMES);
            let caused = rng.gen_bool(0.5);
            let story = if caused {
                format!("{name} dropped a glass on purpose, and the glass broke. Did {name} cause the glass to break?")
            } else {
                format!("{name} looked at a glass, and the wind knocked it over. Did {name} cause the glass to break?")
            };
            TaskInstance {
                id,
                task,
                segments: vec![seg("question", story)],
                options: vec![opt("A", "Yes"), opt("B", "No")],
                gold: if caused { "A" } else { "B" }.into(),
            }
        }
        TaskKind::BBHDisambig => {
            let mut names = NAMES.to_vec();
            names.shuffle(rng);
            let q = format!(
                "In the following sentence, explain the antecedent of the pronoun. Sentence: {} told {} that she {} {}.",
                names[0], names[1], verb, obj
            );
            TaskInstance {
                id,
                task,
                segments: vec![seg("question", q)],
                options: vec![
                    opt("A", &format!("{} {verb} {obj}", names[0])),
                    opt("B", &format!("{} {verb} {obj}", names[1])),
                    opt("C", "Ambiguous"),
                ],
                gold: "C".into(),
            }
        }
        TaskKind::BBHLogical5 => {
            let mut order = NAMES.to_vec();
            order.shuffle(rng);
            let facts: Vec<String> =
                order.windows(2).map(|w| format!("{} finished before {}.", w[0], w[1])).collect();
            let q = format!("Five runners had a race. {} Who finished first?", facts.join(" "));
            let labels = ["A", "B", "C", "D", "E"];
            let options: Vec<AnswerOption> = NAMES.iter().zip(labels).map(|(n, l)| opt(l, n)).collect();
            let gold = labels[NAMES.iter().position(|n| *n == order[0]).unwrap()];
            TaskInstance { id, task, segments: vec![seg("question", q)], options, gold: gold.into() }
        }
    }
}

/// `n` valid instances of `task`, identical for identical arguments.
pub fn synthetic_instances(task: TaskKind, n: usize, seed: u64) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, task.as_str()));
    (0..n).map(|i| instance(task, i, &mut rng)).collect()
}
