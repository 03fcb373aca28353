//! Lexical matchers for the pattern categories and the card checksum.

use regex::Regex;

use super::Category;

pub(crate) const EMAIL: &str = r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}\b";

pub(crate) const PHONE: &str =
    r"(?:\+\d{1,3}[ .-]?)?(?:\(\d{3}\)[ .-]?|\b\d{3}[ .-]?)\d{3}[ .-]?\d{4}\b";

pub(crate) const ID_NUMBER: &str = r"\b\d{3}-\d{2}-\d{4}\b";

pub(crate) const CREDIT_CARD: &str = r"\b\d{4}(?:[ -]?\d{4}){3}\b|\b\d{13,19}\b";

const OCTET: &str = r"(?:25[0-5]|2[0-4]\d|1\d\d|[1-9]?\d)";

pub(crate) const DATE_ISO: &str = r"\b\d{4}-(?:0[1-9]|1[0-2])-(?:0[1-9]|[12]\d|3[01])\b";
pub(crate) const DATE_SLASH: &str = r"\b(?:0?[1-9]|[12]\d|3[01])/(?:0?[1-9]|1[0-2])/\d{4}\b";

pub(crate) fn ip_address() -> String {
    format!(r"\b(?:{OCTET}\.){{3}}{OCTET}\b")
}

/// Source patterns for a pattern category; empty for gazetteer categories.
pub(crate) fn sources(category: Category) -> Vec<String> {
    match category {
        Category::Email => vec![EMAIL.into()],
        Category::Phone => vec![PHONE.into()],
        Category::IdNumber => vec![ID_NUMBER.into()],
        Category::CreditCard => vec![CREDIT_CARD.into()],
        Category::IpAddress => vec![ip_address()],
        Category::Date => vec![DATE_ISO.into(), DATE_SLASH.into()],
        Category::PersonName | Category::Location => Vec::new(),
    }
}

pub(crate) fn compile(category: Category) -> Vec<Regex> {
    sources(category)
        .iter()
        .map(|s| Regex::new(s).expect("builtin pattern compiles"))
        .collect()
}

/// Luhn checksum over the ASCII digits of `s`; other characters are ignored.
pub fn luhn_valid(s: &str) -> bool {
    let digits: Vec<u32> = s.chars().filter_map(|c| c.to_digit(10)).collect();
    if !(13..=19).contains(&digits.len()) {
        return false;
    }
    let sum: u32 = digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| {
            if i % 2 == 1 {
                let x = d * 2;
                if x > 9 {
                    x - 9
                } else {
                    x
                }
            } else {
                d
            }
        })
        .sum();
    sum.is_multiple_of(10)
}

/// Whether `slice` is, in its entirety, an instance of a pattern category.
/// Gazetteer categories return `None`; their validator is list membership.
pub fn validate_pattern_slice(category: Category, slice: &str) -> Option<bool> {
    let srcs = sources(category);
    if srcs.is_empty() {
        return None;
    }
    let full = srcs.iter().any(|s| {
        Regex::new(&format!("^(?:{s})$"))
            .expect("anchored pattern compiles")
            .is_match(slice)
    });
    Some(full && (category != Category::CreditCard || luhn_valid(slice)))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Hand-executed Luhn on 4111111111111111: from the right, odd positions
    // (1-based) contribute 1 each (8 of them = 8), the doubled positions are
    // 4->8 and seven 1->2 (= 8 + 14 = 22). 8 + 22 = 30, divisible by 10.
    #[test]
    fn luhn_known_values() {
        assert!(luhn_valid("4111111111111111"));
        assert!(luhn_valid("4111 1111 1111 1111"));
        assert!(luhn_valid("5500000000000004"));
        assert!(luhn_valid("378282246310005"));
        assert!(!luhn_valid("4111111111111112"));
        assert!(!luhn_valid("1234"));
    }

    #[test]
    fn phone_does_not_match_inside_card_or_ssn() {
        let re = Regex::new(PHONE).unwrap();
        assert!(!re.is_match("4111111111111111"));
        assert!(!re.is_match("4111 1111 1111 1111"));
        assert!(!re.is_match("123-45-6789"));
        assert!(!re.is_match("2023-01-15"));
        assert!(re.is_match("555-123-4567"));
        assert!(re.is_match("(555) 123-4567"));
        assert!(re.is_match("+1 555 123 4567"));
    }

    #[test]
    fn ip_octets_bounded() {
        let re = Regex::new(&format!("^{}$", ip_address())).unwrap();
        assert!(re.is_match("192.168.0.1"));
        assert!(re.is_match("255.255.255.255"));
        assert!(!re.is_match("256.1.1.1"));
    }

    #[test]
    fn validators() {
        assert_eq!(validate_pattern_slice(Category::Email, "a@b.com"), Some(true));
        assert_eq!(validate_pattern_slice(Category::Email, "a@b"), Some(false));
        assert_eq!(validate_pattern_slice(Category::CreditCard, "4111111111111112"), Some(false));
        assert_eq!(validate_pattern_slice(Category::PersonName, "Alice"), None);
    }
}
