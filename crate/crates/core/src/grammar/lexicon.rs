use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use super::category::Category;
use super::semantics::{Lambda, Sem, SemError, Template};

/// The grammar shipped with the crate.
pub const SHIPPED_GRAMMAR: &str = include_str!("../../data/grammar.lex");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: `{word}` has category {category} consuming {expected} argument(s) but its template binds {found}")]
    Arity {
        line: usize,
        word: String,
        category: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate entry `{word}` with category {category}")]
    Duplicate {
        line: usize,
        word: String,
        category: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub word: String,
    pub category: Category,
    pub template: Arc<Template>,
}

impl LexEntry {
    pub fn semantics(&self) -> Result<Sem, SemError> {
        Sem::lexical(self.template.clone(), self.category.arity())
    }

    /// Applies the template to placeholder arguments shaped after the
    /// category's argument list and returns the saturated result.
    pub fn saturate_with_placeholders(&self) -> Result<Sem, SemError> {
        let mut sem = self.semantics()?;
        for (i, arg) in self.category.arguments().into_iter().enumerate() {
            sem = sem.apply(placeholder(i + 1, arg))?;
        }
        Ok(sem)
    }
}

fn placeholder(k: usize, cat: &Category) -> Sem {
    use super::category::Atom;
    use super::semantics::{Role, SemanticFrame, Term};
    let arity = cat.arity();
    if cat.is_atom(Atom::S) || cat.is_atom(Atom::VP) {
        // clause-typed slots need an action with an object
        let action = SemanticFrame::new(
            format!("act{k}"),
            vec![Term::Role(Role::Listener), Term::Sym(format!("x{k}"))],
        );
        Sem::Term(Term::Frame(SemanticFrame::new(
            super::semantics::INSTRUCT,
            vec![Term::Role(Role::Speaker), Term::Role(Role::Listener), Term::Frame(action)],
        )))
    } else if arity == 0 {
        Sem::Term(Term::Sym(format!("x{k}")))
    } else {
        Sem::Lambda(Lambda {
            template: Arc::new(Template::Frame(
                format!("f{k}"),
                (1..=arity).map(Template::Slot).collect(),
            )),
            arity,
            bound: Vec::new(),
        })
    }
}

/// Lowercases, maps typographic apostrophes, and strips trailing punctuation.
/// Apostrophes inside a word are kept, so "don't" stays one token.
pub fn normalize(token: &str) -> String {
    let lowered = token.trim().to_lowercase().replace('\u{2019}', "'");
    lowered
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != '\'')
        .trim_start_matches(['"', '('])
        .to_string()
}

/// Splits an utterance on whitespace and normalizes each token, dropping empties.
pub fn tokenize(utterance: &str) -> Vec<String> {
    utterance
        .split_whitespace()
        .map(normalize)
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token to lexical entries, plus display labels for derived categories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    entries: BTreeMap<String, Vec<LexEntry>>,
    labels: Vec<(Category, String)>,
}

impl Dictionary {
    pub fn shipped() -> Dictionary {
        load_grammar(SHIPPED_GRAMMAR).expect("shipped grammar is valid")
    }

    pub fn lookup(&self, word: &str) -> &[LexEntry] {
        self.entries
            .get(&normalize(word))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexEntry> {
        self.entries.values().flatten()
    }

    /// Phrase label for a category: a declared alias or the category itself.
    pub fn label(&self, category: &Category) -> String {
        self.labels
            .iter()
            .find(|(c, _)| c == category)
            .map(|(_, l)| l.clone())
            .unwrap_or_else(|| category.to_string())
    }

    pub fn insert(&mut self, entry: LexEntry) -> Result<(), GrammarError> {
        let list = self.entries.entry(entry.word.clone()).or_default();
        if list.iter().any(|e| e.category == entry.category && e.template == entry.template) {
            return Err(GrammarError::Duplicate {
                line: 0,
                word: entry.word,
                category: entry.category.to_string(),
            });
        }
        list.push(entry);
        Ok(())
    }

    /// Renders the dictionary in the grammar file format.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (cat, label) in &self.labels {
            let _ = writeln!(out, "%label\t{cat}\t{label}");
        }
        for e in self.entries() {
            let _ = writeln!(out, "{}\t{}\t{}", e.word, e.category, e.template);
        }
        out
    }
}

/// Parses a grammar document.
///
/// One entry per line: `word<TAB>category<TAB>template`. Lines starting with
/// `#` are comments. `%label<TAB>category<TAB>NAME` declares the phrase label
/// shown for a derived category in chart dumps.
pub fn load_grammar(source: &str) -> Result<Dictionary, GrammarError> {
    let mut dict = Dictionary::default();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').map(str::trim).filter(|f| !f.is_empty()).collect();
        if fields.len() != 3 {
            return Err(GrammarError::Parse {
                line,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let category: Category = fields[1].parse().map_err(|e| GrammarError::Parse {
            line,
            message: format!("{e}"),
        })?;
        if fields[0] == "%label" {
            dict.labels.push((category, fields[2].to_string()));
            continue;
        }
        let word = normalize(fields[0]);
        if word.is_empty() {
            return Err(GrammarError::Parse {
                line,
                message: "empty word".into(),
            });
        }
        let template = Template::parse(fields[2]).map_err(|e| GrammarError::Parse {
            line,
            message: e.to_string(),
        })?;
        let expected = category.arity();
        let found = template.max_slot();
        if expected != found {
            return Err(GrammarError::Arity {
                line,
                word,
                category: category.to_string(),
                expected,
                found,
            });
        }
        dict.insert(LexEntry {
            word,
            category,
            template: Arc::new(template),
        })
        .map_err(|e| match e {
            GrammarError::Duplicate { word, category, .. } => GrammarError::Duplicate {
                line,
                word,
                category,
            },
            other => other,
        })?;
    }
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Atom;

    #[test]
    fn lookup_known_and_unknown() {
        let d = Dictionary::shipped();
        let mug = d.lookup("mug");
        assert_eq!(mug.len(), 1);
        assert!(mug[0].category.is_atom(Atom::N));
        assert_eq!(mug[0].semantics().unwrap().to_string(), "mug");
        assert!(d.lookup("xyzzy").is_empty());
        let the = d.lookup("the");
        assert_eq!(the.len(), 1);
        assert_eq!(the[0].category.to_string(), "NP/N");
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let d = Dictionary::shipped();
        assert_eq!(d.lookup("Mug."), d.lookup("mug"));
        assert_eq!(d.lookup("DON'T"), d.lookup("don't"));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("Top."), "top");
        assert_eq!(normalize("no,"), "no");
        assert_eq!(normalize("don\u{2019}t"), "don't");
        assert_eq!(tokenize("Grab the mug... by the TOP!"), ["grab", "the", "mug", "by", "the", "top"]);
    }

    #[test]
    fn ambiguous_preposition_keeps_both_entries() {
        let d = Dictionary::shipped();
        assert_eq!(d.lookup("by").len(), 2);
        for e in d.lookup("by") {
            // the phrase "by NP" has the category left after consuming the NP
            let Category::Functor { result, .. } = &e.category else {
                panic!("by must be a functor");
            };
            assert_eq!(d.label(result), "PP");
        }
    }

    #[test]
    fn covers_experiment_vocabulary() {
        let d = Dictionary::shipped();
        for w in [
            "grab", "the", "mug", "by", "top", "pass", "don't", "spill", "it", "but", "keep",
            "upright", "and", "avoid", "going", "over", "laptop", "hand", "me", "screwdriver",
            "move", "faster", "go", "from",
        ] {
            assert!(!d.lookup(w).is_empty(), "missing {w}");
        }
    }

    #[test]
    fn empty_document_gives_empty_dictionary() {
        let d = load_grammar("").unwrap();
        assert!(d.is_empty());
        let d = load_grammar("# only a comment\n\n").unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let err = load_grammar("give\t(VP/NP)/NP\tgive(listener,$1)\n").unwrap_err();
        assert!(matches!(
            err,
            GrammarError::Arity { line: 1, expected: 2, found: 1, .. }
        ));
    }

    #[test]
    fn duplicate_entry_is_rejected() {
        let src = "mug\tN\tmug\ncup\tN\tcup\nmug\tN\tmug\n";
        assert!(matches!(
            load_grammar(src).unwrap_err(),
            GrammarError::Duplicate { line: 3, .. }
        ));
        // same category, different meaning: lexical ambiguity
        assert!(load_grammar("mug\tN\tmug\nmug\tN\tcup\n").is_ok());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let src = "mug\tN\tmug\nbroken line\n";
        assert!(matches!(load_grammar(src).unwrap_err(), GrammarError::Parse { line: 2, .. }));
        let src = "mug\tN\tmug\nx\tQ\tx\n";
        assert!(matches!(load_grammar(src).unwrap_err(), GrammarError::Parse { line: 2, .. }));
    }

    #[test]
    fn shipped_round_trip() {
        let d = Dictionary::shipped();
        let again = load_grammar(&d.serialize()).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn shipped_templates_saturate_without_slots() {
        let d = Dictionary::shipped();
        for e in d.entries() {
            assert!(e.category.depth() <= 4, "{} too deep", e.category);
            let sem = e
                .saturate_with_placeholders()
                .unwrap_or_else(|err| panic!("{} {}: {err}", e.word, e.category));
            let text = sem.to_string();
            assert!(sem.as_term().is_some(), "{}: still a function", e.word);
            assert!(!text.contains('$'), "{}: unbound slot in {text}", e.word);
        }
    }
}
