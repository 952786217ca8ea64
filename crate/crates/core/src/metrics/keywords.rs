//! Verdict keyword extraction from free-text answers.
//!
//! Matching is case-insensitive over whole tokens (runs of ASCII letters and
//! digits). A phrase is ignored when one of the negation words occurs within
//! the three tokens before it, so "no collision" does not count.
//!
//! | category      | phrases |
//! |---------------|---------|
//! | safety        | safe, safely, safety |
//! | collision     | collision, collisions, collide, collides, colliding, crash, crashes, crashing |
//! | red light     | red light, red lights, red traffic light, red signal |
//! | drivable area | drivable area, road boundary, road boundaries, off the road, off road, leave the road, leaving the road |

use crate::checklist::Category;
use std::collections::BTreeSet;

pub const SYNONYMS: &[(Category, &[&str])] = &[
    (Category::Safety, &["safe", "safely", "safety"]),
    (
        Category::Collision,
        &[
            "collision",
            "collisions",
            "collide",
            "collides",
            "colliding",
            "crash",
            "crashes",
            "crashing",
        ],
    ),
    (
        Category::RedLight,
        &["red light", "red lights", "red traffic light", "red signal"],
    ),
    (
        Category::DrivableArea,
        &[
            "drivable area",
            "road boundary",
            "road boundaries",
            "off the road",
            "off road",
            "leave the road",
            "leaving the road",
        ],
    ),
];

pub const NEGATIONS: &[&str] = &["not", "no", "without", "never", "avoid", "avoids", "avoiding", "avoided", "nor"];
const NEGATION_WINDOW: usize = 3;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_ascii_lowercase())
        .collect()
}

fn negated(tokens: &[String], start: usize) -> bool {
    tokens[start.saturating_sub(NEGATION_WINDOW)..start]
        .iter()
        .any(|t| NEGATIONS.contains(&t.as_str()))
}

pub fn extract_keywords(answer: &str) -> BTreeSet<Category> {
    let tokens = tokenize(answer);
    let mut out = BTreeSet::new();
    for (cat, phrases) in SYNONYMS {
        let hit = phrases.iter().any(|phrase| {
            let words: Vec<&str> = phrase.split(' ').collect();
            tokens
                .windows(words.len())
                .enumerate()
                .any(|(i, w)| w.iter().zip(&words).all(|(a, b)| a == b) && !negated(&tokens, i))
        });
        if hit {
            out.insert(*cat);
        }
    }
    out
}

/// Canonical phrase per category, as used by the templates.
pub fn category_phrase(c: Category) -> &'static str {
    match c {
        Category::Safety => "safe",
        Category::Collision => "collision",
        Category::RedLight => "running a red light",
        Category::DrivableArea => "out of the drivable area",
    }
}

/// Text whose extraction gives back exactly `cats`.
pub fn render_categories(cats: &BTreeSet<Category>) -> String {
    cats.iter().map(|&c| category_phrase(c)).collect::<Vec<_>>().join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(c: &[Category]) -> BTreeSet<Category> {
        c.iter().copied().collect()
    }

    #[test]
    fn basic_phrases() {
        assert_eq!(extract_keywords("This maneuver is safe."), set(&[Category::Safety]));
        assert_eq!(
            extract_keywords("This maneuver could potentially lead to a collision with oncoming traffic"),
            set(&[Category::Collision])
        );
        assert_eq!(
            extract_keywords("You would be running a red light and end up out of the drivable area."),
            set(&[Category::RedLight, Category::DrivableArea])
        );
    }

    #[test]
    fn negation_and_whole_words() {
        assert!(extract_keywords("There is no collision risk").is_empty());
        assert!(extract_keywords("This is unsafe").is_empty());
        assert!(extract_keywords("It is not safe").is_empty());
        assert_eq!(extract_keywords("SAFE"), set(&[Category::Safety]));
    }

    #[test]
    fn render_round_trip() {
        for mask in 0..16u8 {
            let cats: BTreeSet<Category> = Category::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| *c)
                .collect();
            assert_eq!(extract_keywords(&render_categories(&cats)), cats);
        }
    }
}
