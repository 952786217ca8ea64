//! The `[PT, (+x.xx, +y.yy), ...]` trajectory text form.

use crate::attention::fmt_point2;
use crate::trajectory::{Trajectory, Waypoint, DEFAULT_PERIOD};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: &'static str },
    #[error("trajectory has no waypoints")]
    Empty,
    #[error("no trajectory found in text")]
    NotFound,
}

pub fn serialize_trajectory(t: &Trajectory) -> String {
    let mut s = String::from("[PT");
    for w in &t.waypoints {
        s.push_str(", ");
        s.push_str(&fmt_point2(w.pos()));
    }
    s.push(']');
    s
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, lit: &'static str) -> Result<(), FormatError> {
        self.ws();
        if self.src[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            Ok(())
        } else {
            Err(FormatError::Syntax {
                offset: self.pos,
                expected: lit,
            })
        }
    }

    fn number(&mut self) -> Result<f64, FormatError> {
        self.ws();
        let start = self.pos;
        if matches!(self.peek(), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        let digits = |c: &mut Self| {
            let s = c.pos;
            while c.peek().is_some_and(|b| b.is_ascii_digit()) {
                c.pos += 1;
            }
            c.pos - s
        };
        let mut n = digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            n += digits(self);
        }
        let err = FormatError::Syntax {
            offset: start,
            expected: "number",
        };
        if n == 0 {
            return Err(err);
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(err)
    }
}

/// Parses one trajectory; whitespace between tokens is free. Waypoints get
/// the default period.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, FormatError> {
    let (t, end) = parse_prefix(text)?;
    let mut c = Cursor {
        src: text.as_bytes(),
        pos: end,
    };
    c.ws();
    if c.pos != text.len() {
        return Err(FormatError::Syntax {
            offset: c.pos,
            expected: "end of input",
        });
    }
    Ok(t)
}

fn parse_prefix(text: &str) -> Result<(Trajectory, usize), FormatError> {
    let mut c = Cursor {
        src: text.as_bytes(),
        pos: 0,
    };
    c.eat("[")?;
    c.eat("PT")?;
    let mut pts = Vec::new();
    loop {
        c.ws();
        match c.peek() {
            Some(b']') => {
                c.pos += 1;
                break;
            }
            Some(b',') => {
                c.pos += 1;
                c.eat("(")?;
                let x = c.number()?;
                c.eat(",")?;
                let y = c.number()?;
                c.eat(")")?;
                pts.push((x, y));
            }
            _ => {
                return Err(FormatError::Syntax {
                    offset: c.pos,
                    expected: "',' or ']'",
                })
            }
        }
    }
    if pts.is_empty() {
        return Err(FormatError::Empty);
    }
    let waypoints = pts
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Waypoint {
            t: DEFAULT_PERIOD * (i + 1) as f64,
            x,
            y,
        })
        .collect();
    let t = Trajectory::new(DEFAULT_PERIOD, waypoints).map_err(|_| FormatError::Empty)?;
    Ok((t, c.pos))
}

/// First well-formed trajectory embedded in free text.
pub fn find_trajectory(text: &str) -> Result<Trajectory, FormatError> {
    text.match_indices('[')
        .find_map(|(i, _)| parse_prefix(&text[i..]).ok())
        .map(|(t, _)| t)
        .ok_or(FormatError::NotFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAB: &str = "[PT, (+0.76, +0.02), (+1.45, +0.03), (+3.44, +0.12)]";

    #[test]
    fn tab_string_both_ways() {
        let t = parse_trajectory(TAB).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(serialize_trajectory(&t), TAB);
    }

    #[test]
    fn zeros_are_positive() {
        let t = Trajectory::from_positions(0.5, &[(0.0, -0.0), (-0.001, 0.004)]).unwrap();
        assert_eq!(serialize_trajectory(&t), "[PT, (+0.00, +0.00), (+0.00, +0.00)]");
    }

    #[test]
    fn empty_and_malformed() {
        assert_eq!(parse_trajectory("[PT]"), Err(FormatError::Empty));
        assert_eq!(
            parse_trajectory("[PT, (+1.0 +2.0)]"),
            Err(FormatError::Syntax { offset: 11, expected: "," })
        );
        assert!(matches!(parse_trajectory("[PT, (1, 2)] x"), Err(FormatError::Syntax { offset: 13, .. })));
    }

    #[test]
    fn whitespace_lenient() {
        let t = parse_trajectory(" [ PT ,( +0.76 ,+0.02 ) ,\n(1.45,0.03)] ").unwrap();
        assert_eq!(t.positions()[1].x, 1.45);
    }

    #[test]
    fn finds_embedded() {
        let s = format!("The most suitable trajectory would be {TAB}. It keeps the lane [sic].");
        assert_eq!(find_trajectory(&s).unwrap().len(), 3);
        assert_eq!(find_trajectory("nothing [here]"), Err(FormatError::NotFound));
    }
}
