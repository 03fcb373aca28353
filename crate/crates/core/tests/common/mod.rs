//! Synthetic corpora with known ground truth, shared by the integration
//! tests and the acceptance harness.
#![allow(dead_code)]

use privcurate::corpus::{Corpus, CorpusUpdate, Document};
use privcurate::detect::Category;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_pcg::Pcg32;
use rand::SeedableRng;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Planted {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub category: Category,
}

const FILLER: &[&str] = &[
    "the", "report", "was", "forwarded", "to", "our", "team", "and", "reviewed", "later", "please",
    "reach", "out", "via", "for", "details", "about", "shipment", "notes", "follow", "up", "on",
    "request", "kindly", "confirm", "receipt", "archive", "copy",
];

const USERS: &[&str] = &["jdoe", "mkim", "support", "ops.team", "r_lee", "billing", "a.nguyen"];
const DOMAINS: &[&str] = &["example", "mailhost", "corp-net", "uni"];
const TLDS: &[&str] = &["com", "org", "net", "io"];

fn digits(rng: &mut Pcg32, n: usize) -> String {
    (0..n).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect()
}

/// Independent Luhn check digit for a payload of digits.
pub fn luhn_check_digit(payload: &str) -> u32 {
    let mut sum = 0;
    for (i, c) in payload.chars().rev().enumerate() {
        let d = c.to_digit(10).unwrap();
        sum += if i % 2 == 0 {
            let x = d * 2;
            if x > 9 {
                x - 9
            } else {
                x
            }
        } else {
            d
        };
    }
    (10 - sum % 10) % 10
}

fn planted_value(rng: &mut Pcg32, category: Category, serial: usize) -> String {
    match category {
        Category::Email => format!(
            "{}{serial}@{}.{}",
            USERS.choose(rng).unwrap(),
            DOMAINS.choose(rng).unwrap(),
            TLDS.choose(rng).unwrap()
        ),
        Category::Phone => {
            let (a, b, c) = (
                format!("{}{}", rng.gen_range(2..10), digits(rng, 2)),
                digits(rng, 3),
                digits(rng, 4),
            );
            match rng.gen_range(0..3) {
                0 => format!("{a}-{b}-{c}"),
                1 => format!("({a}) {b}-{c}"),
                _ => format!("{a}.{b}.{c}"),
            }
        }
        Category::CreditCard => {
            let payload = format!("4{}", digits(rng, 14));
            let full = format!("{payload}{}", luhn_check_digit(&payload));
            let g: Vec<&str> = (0..4).map(|i| &full[4 * i..4 * i + 4]).collect();
            match rng.gen_range(0..3) {
                0 => g.join(" "),
                1 => g.join("-"),
                _ => full,
            }
        }
        Category::IpAddress => {
            let o: Vec<String> = (0..4).map(|_| rng.gen_range(1..=254u16).to_string()).collect();
            o.join(".")
        }
        other => panic!("no generator for {other}"),
    }
}

pub const PLANTED_CATEGORIES: [Category; 4] =
    [Category::Email, Category::Phone, Category::CreditCard, Category::IpAddress];

/// `n` documents, each with 1 to 4 planted values between lowercase filler
/// words, and the byte offsets of every value.
pub fn planted_corpus(n: usize, seed: u64) -> (Vec<Document>, Vec<Planted>) {
    let mut rng = Pcg32::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(n);
    let mut truth = Vec::new();
    let mut serial = 0;
    for i in 0..n {
        let id = format!("doc-{i:03}");
        let mut text = String::new();
        for _ in 0..rng.gen_range(1..=4) {
            for _ in 0..rng.gen_range(2..6) {
                text.push_str(FILLER.choose(&mut rng).unwrap());
                text.push(' ');
            }
            let category = *PLANTED_CATEGORIES.choose(&mut rng).unwrap();
            let value = planted_value(&mut rng, category, serial);
            serial += 1;
            let start = text.len();
            text.push_str(&value);
            truth.push(Planted {
                doc_id: id.clone(),
                start,
                end: text.len(),
                category,
            });
            text.push_str(if rng.gen_bool(0.5) { " ; " } else { " , " });
        }
        text.push_str("end of note");
        docs.push(Document::new(id, text));
    }
    (docs, truth)
}

const NAMES: &[&str] = &["Alice", "Maria", "Kenji", "Olivia", "Rahul", "Fatima"];
const PLACES: &[&str] = &["London", "Tokyo", "Nairobi", "Madrid", "Toronto"];

/// Documents mixing pattern and gazetteer spans, some with an `author`
/// metadata value.
pub fn rl_corpus(prefix: &str, n: usize, seed: u64) -> Vec<Document> {
    let mut rng = Pcg32::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut parts = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                let v = match rng.gen_range(0..6) {
                    0..=3 => {
                        let c = PLANTED_CATEGORIES[rng.gen_range(0..4)];
                        planted_value(&mut rng, c, i)
                    }
                    4 => NAMES.choose(&mut rng).unwrap().to_string(),
                    _ => PLACES.choose(&mut rng).unwrap().to_string(),
                };
                parts.push(format!("please confirm {v}"));
            }
            let mut d = Document::new(format!("{prefix}-{i:02}"), parts.join(" ; "));
            if rng.gen_bool(0.3) {
                d = d.with_meta("author", *NAMES.choose(&mut rng).unwrap());
            }
            d
        })
        .collect()
}

pub fn corpus_of(docs: Vec<Document>) -> Corpus {
    Corpus::from_documents(docs).unwrap()
}

/// Splits `docs` into `k` add-only updates with indices 0..k.
pub fn as_updates(docs: Vec<Document>, k: usize) -> Vec<CorpusUpdate> {
    let per = docs.len().div_ceil(k);
    let mut it = docs.into_iter();
    (0..k as u64)
        .map(|i| CorpusUpdate {
            update_index: i,
            added: it.by_ref().take(per).collect(),
            ..Default::default()
        })
        .collect()
}
