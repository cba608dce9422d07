//! Lexicon, categories, and semantic templates.

mod category;
mod lexicon;
mod semantics;

pub use category::{Atom, Category, CategoryParseError, Direction};
pub use lexicon::{load_grammar, normalize, tokenize, Dictionary, GrammarError, LexEntry, SHIPPED_GRAMMAR};
pub use semantics::{
    Lambda, Modifier, Role, Sem, SemError, SemanticFrame, Site, Template, TemplateError, Term,
    INSTRUCT,
};
