//! Rule-based text edits used by the behavioral tests: counterfactual word
//! insertion, mistake injection and paraphrasing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STOPWORDS: &[&str] = &[
    "the", "a", "an", "is", "are", "was", "were", "be", "been", "of", "in", "on", "at", "to", "for", "and",
    "or", "but", "not", "no", "with", "by", "from", "as", "that", "this", "these", "those", "it", "its", "he",
    "she", "they", "we", "you", "i", "his", "her", "their", "our", "your", "my", "there", "here", "then",
    "than", "so", "if", "do", "does", "did", "has", "have", "had", "can", "will", "would", "should", "could",
    "into", "onto", "over", "under", "which", "who", "what", "when", "where", "why", "how",
];

/// Reads a lexicon: one entry per line, UTF-8. Blank lines and lines
/// starting with `#` are ignored.
pub fn load_lexicon(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// Reads a pair lexicon: one `word<TAB>replacement` entry per line (any run
/// of whitespace separates the two).
pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    load_lexicon(path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let mut it = l.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => Ok((a.to_string(), b.to_string())),
                _ => Err(Error::ParseError { line: i + 1, message: format!("expected two words, got {l:?}") }),
            }
        })
        .collect()
}

/// Lowercased alphanumeric words of `text`.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

/// Case-insensitive whole-word match of `phrase` (one or more words) in `text`.
pub fn mentions(text: &str, phrase: &str) -> bool {
    let hay = words(text);
    let needle = words(phrase);
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

/// Byte spans of the words in `text`.
fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

/// Byte offsets of words that plausibly start a noun or verb phrase: purely
/// alphabetic, at least three letters, not a function word.
pub fn insertion_points(text: &str) -> Vec<usize> {
    word_spans(text)
        .into_iter()
        .filter(|&(s, e)| {
            let w = &text[s..e];
            w.len() >= 3 && w.chars().all(char::is_alphabetic) && !STOPWORDS.contains(&w.to_lowercase().as_str())
        })
        .map(|(s, _)| s)
        .collect()
}

/// Inserts `word` before the word starting at byte `at`. When that word is
/// capitalized and opens the text, the capital moves to the insertion.
pub fn insert_word(text: &str, at: usize, word: &str) -> String {
    let capital_start = at == 0 && text[at..].chars().next().is_some_and(char::is_uppercase);
    let inserted = if capital_start { capitalize(word) } else { word.to_string() };
    let rest = if capital_start { lower_first(&text[at..]) } else { text[at..].to_string() };
    format!("{}{} {}", &text[..at], inserted, rest)
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn lower_first(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_lowercase().chain(c).collect()).unwrap_or_default()
}

/// Splits text into sentences. Each piece keeps its terminator; whitespace
/// between sentences leads the following piece, so the pieces concatenate
/// back to the input.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, c)) in chars.iter().enumerate() {
        let next = chars.get(k + 1).map(|&(_, d)| d);
        let ends = match c {
            '.' | '!' | '?' => next.is_none_or(char::is_whitespace),
            '\n' => true,
            _ => false,
        };
        if ends {
            let end = i + c.len_utf8();
            if !text[start..end].trim().is_empty() {
                out.push(&text[start..end]);
                start = end;
            }
        }
    }
    if start < text.len() {
        if text[start..].trim().is_empty() && !out.is_empty() {
            let last = out.pop().unwrap();
            let s = text.len() - last.len() - (text.len() - start);
            out.push(&text[s..]);
        } else {
            out.push(&text[start..]);
        }
    }
    out
}

/// Number of sentences forming the first half (rounded up).
pub fn first_half(n: usize) -> usize {
    n.div_ceil(2)
}

fn replace_word(text: &str, from: &str, to: &str, all: bool) -> Option<String> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let mut changed = false;
    for (s, e) in word_spans(text) {
        if (all || !changed) && text[s..e].eq_ignore_ascii_case(from) {
            out.push_str(&text[last..s]);
            let orig = &text[s..e];
            out.push_str(&if orig.chars().next().is_some_and(char::is_uppercase) { capitalize(to) } else { to.to_string() });
            last = e;
            changed = true;
        }
    }
    if !changed {
        return None;
    }
    out.push_str(&text[last..]);
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptorConfig {
    /// Word pairs swapped in either direction.
    pub antonyms: Vec<(String, String)>,
}

impl Default for CorruptorConfig {
    fn default() -> Self {
        let pairs = [
            ("true", "false"), ("good", "bad"), ("more", "less"), ("always", "never"), ("possible", "impossible"),
            ("correct", "incorrect"), ("likely", "unlikely"), ("before", "after"), ("high", "low"),
            ("big", "small"), ("hot", "cold"), ("same", "different"), ("yes", "no"), ("increase", "decrease"),
            ("many", "few"), ("first", "last"), ("all", "none"), ("agree", "disagree"),
        ];
        CorruptorConfig { antonyms: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect() }
    }
}

/// Which rule produced a mistake.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MistakeRule {
    Numeral,
    Antonym,
    Negation,
}

fn perturb_numeral(sentence: &str) -> Option<String> {
    let bytes = sentence.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let len = bytes[start..].iter().take_while(|b| b.is_ascii_digit()).count();
    let digits = &sentence[start..start + len];
    let bumped = match digits.parse::<u64>() {
        Ok(n) => (n + 2).to_string(),
        Err(_) => format!("{digits}1"),
    };
    Some(format!("{}{}{}", &sentence[..start], bumped, &sentence[start + len..]))
}

fn swap_antonym(sentence: &str, pairs: &[(String, String)]) -> Option<String> {
    let spans = word_spans(sentence);
    for (s, e) in spans {
        let w = sentence[s..e].to_lowercase();
        let swap = pairs.iter().find_map(|(a, b)| {
            if *a == w {
                Some(b)
            } else if *b == w {
                Some(a)
            } else {
                None
            }
        });
        if let Some(to) = swap {
            let orig = &sentence[s..e];
            let to = if orig.chars().next().is_some_and(char::is_uppercase) { capitalize(to) } else { to.clone() };
            return Some(format!("{}{}{}", &sentence[..s], to, &sentence[e..]));
        }
    }
    None
}

fn insert_negation(sentence: &str) -> Option<String> {
    let spans = word_spans(sentence);
    for (k, &(s, e)) in spans.iter().enumerate() {
        let w = sentence[s..e].to_lowercase();
        let next = spans.get(k + 1).map(|&(a, b)| sentence[a..b].to_lowercase());
        if next.as_deref() == Some("not") {
            continue;
        }
        match w.as_str() {
            "is" | "are" | "was" | "were" | "does" | "do" | "did" | "will" | "should" | "would" | "could" => {
                return Some(format!("{} not{}", &sentence[..e], &sentence[e..]));
            }
            "can" => return Some(format!("{}not{}", &sentence[..e], &sentence[e..])),
            _ => {}
        }
    }
    None
}

/// Corrupts one sentence of the first half of `sentences`.
///
/// Rules are tried in order (numeral perturbation, antonym swap, negation
/// insertion); within a rule, earlier sentences win. Returns the sentence
/// index, the corrupted sentence and the rule used.
pub fn corrupt(sentences: &[&str], config: &CorruptorConfig) -> Option<(usize, String, MistakeRule)> {
    let half = &sentences[..first_half(sentences.len())];
    let rules: [(MistakeRule, &dyn Fn(&str) -> Option<String>); 3] = [
        (MistakeRule::Numeral, &perturb_numeral),
        (MistakeRule::Antonym, &|s| swap_antonym(s, &config.antonyms)),
        (MistakeRule::Negation, &insert_negation),
    ];
    for (rule, f) in rules {
        for (i, s) in half.iter().enumerate() {
            if let Some(c) = f(s) {
                return Some((i, c, rule));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraserConfig {
    /// Word replaced by its synonym, one direction only.
    pub synonyms: Vec<(String, String)>,
}

impl Default for ParaphraserConfig {
    fn default() -> Self {
        let pairs = [
            ("know", "understand"), ("clear", "obvious"), ("because", "since"), ("think", "believe"),
            ("big", "large"), ("small", "little"), ("shows", "demonstrates"), ("means", "implies"),
            ("many", "numerous"), ("often", "frequently"), ("quickly", "rapidly"), ("begin", "start"),
            ("live", "reside"), ("lives", "resides"), ("also", "additionally"), ("however", "nevertheless"),
            ("first", "initially"), ("so", "thus"), ("look", "examine"), ("makes", "renders"),
        ];
        ParaphraserConfig { synonyms: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect() }
    }
}

/// Moves a leading `If`/`When`/`Because` clause behind the main clause:
/// `"If A, B."` becomes `"B if A."`. Only applied to sentences with a single
/// comma, where the split is unambiguous.
fn reorder_clause(sentence: &str) -> Option<String> {
    let lead = sentence.len() - sentence.trim_start().len();
    let (ws, body) = sentence.split_at(lead);
    let (body, end) = match body.chars().last() {
        Some(c @ ('.' | '!' | '?')) => (&body[..body.len() - 1], c.to_string()),
        _ => (body, String::new()),
    };
    let conj = ["If ", "When ", "Because "].into_iter().find(|c| body.starts_with(c))?;
    if body.matches(',').count() != 1 {
        return None;
    }
    let (cond, main) = body[conj.len()..].split_once(',')?;
    let main = main.trim();
    if cond.trim().is_empty() || main.is_empty() {
        return None;
    }
    Some(format!("{ws}{} {} {}{end}", capitalize(main), conj.trim().to_lowercase(), cond.trim()))
}

/// Paraphrases the first half of `sentences` by synonym substitution and
/// clause reordering. Returns the rewritten first half, or `None` when no
/// rule applied.
pub fn paraphrase(sentences: &[&str], config: &ParaphraserConfig) -> Option<Vec<String>> {
    let half = &sentences[..first_half(sentences.len())];
    let mut changed = false;
    let out = half
        .iter()
        .map(|s| {
            let mut cur = s.to_string();
            if let Some(r) = reorder_clause(&cur) {
                cur = r;
                changed = true;
            }
            for (from, to) in &config.synonyms {
                if let Some(r) = replace_word(&cur, from, to, true) {
                    cur = r;
                    changed = true;
                }
            }
            cur
        })
        .collect();
    changed.then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mention_is_whole_word_and_case_insensitive() {
        assert!(mentions("Because lobsters do not live in Watery mountains.", "watery"));
        assert!(!mentions("Because the water is deep.", "wat"));
        assert!(mentions("it means one times two", "one times"));
        assert!(!mentions("anything", ""));
    }

    #[test]
    fn sentences_round_trip() {
        let t = " First, 2.5 is big. Then it is small!\nSo yes ";
        let s = split_sentences(t);
        assert_eq!(s.concat(), t);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], " First, 2.5 is big.");
        assert_eq!(split_sentences("no terminator"), vec!["no terminator"]);
    }

    #[test]
    fn insertion() {
        let t = "Lobsters live in the ocean";
        let pts = insertion_points(t);
        let picked: Vec<&str> = pts.iter().map(|&p| &t[p..p + t[p..].find(' ').unwrap_or(t.len() - p)]).collect();
        assert_eq!(picked, vec!["Lobsters", "live", "ocean"]);
        assert_eq!(insert_word(t, 0, "fat"), "Fat lobsters live in the ocean");
        assert_eq!(insert_word(t, pts[2], "watery"), "Lobsters live in the watery ocean");
    }

    #[test]
    fn mistakes_in_rule_order() {
        let cfg = CorruptorConfig::default();
        let s = vec![" It is true.", " So 1x2x3 = 6.", " Done."];
        let (i, c, rule) = corrupt(&s, &cfg).unwrap();
        assert_eq!((i, rule), (1, MistakeRule::Numeral));
        assert_eq!(c, " So 3x2x3 = 6.");
        let s = vec![" It is true.", " Done."];
        assert_eq!(corrupt(&s, &cfg).unwrap(), (0, " It is false.".into(), MistakeRule::Antonym));
        let s = vec![" It is here.", " Done."];
        assert_eq!(corrupt(&s, &cfg).unwrap(), (0, " It is not here.".into(), MistakeRule::Negation));
        assert_eq!(insert_negation("We can go."), Some("We cannot go.".into()));
        assert_eq!(corrupt(&[" Hmm.", " Hm."], &cfg), None);
    }

    #[test]
    fn paraphrases() {
        let cfg = ParaphraserConfig::default();
        assert_eq!(reorder_clause(" If it rains, we stay.").unwrap(), " We stay if it rains.");
        let out = paraphrase(&[" We know it is clear.", " Rest."], &cfg).unwrap();
        assert_eq!(out, vec![" We understand it is obvious."]);
        assert_eq!(paraphrase(&[" Hmm.", " Rest."], &cfg), None);
    }

    #[test]
    fn lexicon_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.txt");
        std::fs::write(&p, "# words\nwatery\n\n fat \n").unwrap();
        assert_eq!(load_lexicon(&p).unwrap(), vec!["watery", "fat"]);
        std::fs::write(&p, "good\tbad\nhot cold\n").unwrap();
        assert_eq!(load_pairs(&p).unwrap().len(), 2);
        std::fs::write(&p, "good\n").unwrap();
        assert!(load_pairs(&p).is_err());
    }
}
