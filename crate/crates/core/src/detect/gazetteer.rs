//! Word lists for the lexicon categories.

use std::io;
use std::path::Path;

use regex::Regex;

use super::Category;

const PERSON_NAMES: &[&str] = &[
    "Alice", "Amelia", "Andrea", "Boris", "Carlos", "Charlotte", "Chen", "Daniel", "Dmitri",
    "Elena", "Emma", "Fatima", "Giulia", "Hannah", "Hiroshi", "Ibrahim", "Isabella", "Jacob",
    "Jessica", "Kenji", "Laura", "Liam", "Lucas", "Maria", "Mohammed", "Natalia", "Noah",
    "Olivia", "Oliver", "Priya", "Rahul", "Sofia", "Thomas", "Valentina", "Wei", "Yusuf",
    "Zainab",
];

const LOCATIONS: &[&str] = &[
    "Amsterdam", "Bangkok", "Berlin", "Buenos Aires", "Cairo", "Chicago", "Delhi", "Doha",
    "Dubai", "Istanbul", "Jakarta", "Lagos", "Lima", "London", "Los Angeles", "Madrid",
    "Melbourne", "Mexico City", "Montreal", "Moscow", "Mumbai", "Nairobi", "New York", "Paris",
    "Riyadh", "Rome", "San Francisco", "Seoul", "Shanghai", "Singapore", "Sydney", "Tokyo",
    "Toronto", "Vienna",
];

pub(crate) fn builtin(category: Category) -> Vec<String> {
    let list = match category {
        Category::PersonName => PERSON_NAMES,
        Category::Location => LOCATIONS,
        _ => &[],
    };
    list.iter().map(|s| s.to_string()).collect()
}

/// One entry per line; blank lines and `#` comments are ignored.
pub(crate) fn load(path: &Path) -> io::Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// Case-sensitive whole-word alternation, longest entries first so that
/// "New York" wins over a shorter listed prefix.
pub(crate) fn compile(words: &[String]) -> Option<Regex> {
    if words.is_empty() {
        return None;
    }
    let mut sorted: Vec<&String> = words.iter().collect();
    sorted.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    sorted.dedup();
    let alt = sorted
        .iter()
        .map(|w| regex::escape(w))
        .collect::<Vec<_>>()
        .join("|");
    Some(Regex::new(&format!(r"\b(?:{alt})\b")).expect("escaped alternation compiles"))
}
