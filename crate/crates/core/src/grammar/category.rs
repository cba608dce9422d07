use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Atomic syntactic categories of the shipped grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Atom {
    S,
    NP,
    N,
    VP,
    PP,
    DET,
    P,
    ADV,
    CONJ,
}

impl Atom {
    pub const ALL: [Atom; 9] = [
        Atom::S,
        Atom::NP,
        Atom::N,
        Atom::VP,
        Atom::PP,
        Atom::DET,
        Atom::P,
        Atom::ADV,
        Atom::CONJ,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Atom::S => "S",
            Atom::NP => "NP",
            Atom::N => "N",
            Atom::VP => "VP",
            Atom::PP => "PP",
            Atom::DET => "DET",
            Atom::P => "P",
            Atom::ADV => "ADV",
            Atom::CONJ => "CONJ",
        }
    }

    fn from_symbol(s: &str) -> Option<Atom> {
        Atom::ALL.iter().copied().find(|a| a.as_str() == s)
    }
}

/// Direction in which a functional category looks for its argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// `X/Y`: argument to the right.
    Forward,
    /// `X\Y`: argument to the left.
    Backward,
}

/// A categorial-grammar category, either atomic or a function `result/arg` or `result\arg`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    Atom(Atom),
    Functor {
        result: Box<Category>,
        arg: Box<Category>,
        dir: Direction,
    },
}

impl Category {
    pub fn atom(a: Atom) -> Self {
        Category::Atom(a)
    }

    pub fn forward(result: Category, arg: Category) -> Self {
        Category::Functor {
            result: Box::new(result),
            arg: Box::new(arg),
            dir: Direction::Forward,
        }
    }

    pub fn backward(result: Category, arg: Category) -> Self {
        Category::Functor {
            result: Box::new(result),
            arg: Box::new(arg),
            dir: Direction::Backward,
        }
    }

    pub fn is_atom(&self, a: Atom) -> bool {
        matches!(self, Category::Atom(x) if *x == a)
    }

    /// Nesting depth; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Category::Atom(_) => 0,
            Category::Functor { result, arg, .. } => 1 + result.depth().max(arg.depth()),
        }
    }

    /// Number of arguments consumed before an atomic result remains.
    pub fn arity(&self) -> usize {
        match self {
            Category::Atom(_) => 0,
            Category::Functor { result, .. } => 1 + result.arity(),
        }
    }

    /// Argument categories in the order they are consumed (outermost first).
    pub fn arguments(&self) -> Vec<&Category> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Category::Functor { result, arg, .. } = cur {
            out.push(arg.as_ref());
            cur = result;
        }
        out
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Atom(a) => f.write_str(a.as_str()),
            Category::Functor { .. } => write!(f, "({self})"),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Atom(a) => f.write_str(a.as_str()),
            Category::Functor { result, arg, dir } => {
                result.fmt_operand(f)?;
                f.write_str(match dir {
                    Direction::Forward => "/",
                    Direction::Backward => "\\",
                })?;
                arg.fmt_operand(f)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad category `{input}`: {reason}")]
pub struct CategoryParseError {
    pub input: String,
    pub reason: String,
}

impl FromStr for Category {
    type Err = CategoryParseError;

    /// Slash notation, left-associative: `S\NP/NP` reads as `(S\NP)/NP`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| CategoryParseError {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut pos = 0;
        let cat = parse_cat(&chars, &mut pos).map_err(|r| err(&r))?;
        if pos != chars.len() {
            return Err(err("trailing input"));
        }
        Ok(cat)
    }
}

fn parse_cat(chars: &[char], pos: &mut usize) -> Result<Category, String> {
    let mut left = parse_primary(chars, pos)?;
    while let Some(&c) = chars.get(*pos) {
        let dir = match c {
            '/' => Direction::Forward,
            '\\' => Direction::Backward,
            _ => break,
        };
        *pos += 1;
        let right = parse_primary(chars, pos)?;
        left = Category::Functor {
            result: Box::new(left),
            arg: Box::new(right),
            dir,
        };
    }
    Ok(left)
}

fn parse_primary(chars: &[char], pos: &mut usize) -> Result<Category, String> {
    match chars.get(*pos) {
        Some('(') => {
            *pos += 1;
            let inner = parse_cat(chars, pos)?;
            if chars.get(*pos) != Some(&')') {
                return Err("unbalanced parenthesis".into());
            }
            *pos += 1;
            Ok(inner)
        }
        Some(c) if c.is_ascii_alphabetic() => {
            let start = *pos;
            while chars.get(*pos).is_some_and(|c| c.is_ascii_alphabetic()) {
                *pos += 1;
            }
            let sym: String = chars[start..*pos].iter().collect();
            Atom::from_symbol(&sym)
                .map(Category::Atom)
                .ok_or_else(|| format!("unknown atomic category `{sym}`"))
        }
        Some(c) => Err(format!("unexpected `{c}`")),
        None => Err("unexpected end of input".into()),
    }
}
