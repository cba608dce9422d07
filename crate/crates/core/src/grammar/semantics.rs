//! First-order-logic style meaning representations and the lexical
//! templates that build them during combination.
//!
//! A fully built clause looks like
//! `INSTRUCT(speaker,listener,graspObject(listener,mug), by(mug, top))`:
//! core arguments are comma-joined without spaces, while every attached
//! modifier is appended with `", "` and renders its own arguments with `", "`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Predicate of the speaker-intent wrapper around imperative clauses.
pub const INSTRUCT: &str = "INSTRUCT";

/// Discourse participants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Speaker,
    Listener,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Speaker => "speaker",
            Role::Listener => "listener",
        }
    }
}

/// Where a modifier is attached: the action (clause level) or its object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Action,
    Object,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Role(Role),
    Sym(String),
    Frame(SemanticFrame),
}

impl Term {
    pub fn sym(s: impl Into<String>) -> Self {
        Term::Sym(s.into())
    }

    pub fn as_frame(&self) -> Option<&SemanticFrame> {
        match self {
            Term::Frame(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Term::Sym(s) => Some(s),
            _ => None,
        }
    }

    fn write(&self, out: &mut String) {
        match self {
            Term::Role(r) => out.push_str(r.as_str()),
            Term::Sym(s) => out.push_str(s),
            Term::Frame(f) => f.write(out, ","),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write(&mut s);
        f.write_str(&s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Modifier {
    pub site: Site,
    pub frame: SemanticFrame,
}

/// Predicate with ordered arguments and explicitly sited modifiers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticFrame {
    pub predicate: String,
    pub args: Vec<Term>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modifiers: Vec<Modifier>,
}

impl SemanticFrame {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        SemanticFrame {
            predicate: predicate.into(),
            args,
            modifiers: Vec::new(),
        }
    }

    pub fn is_instruct(&self) -> bool {
        self.predicate == INSTRUCT
    }

    /// The action frame: the third argument of an `INSTRUCT` clause, or the frame itself.
    pub fn action(&self) -> Option<&SemanticFrame> {
        if self.is_instruct() {
            self.args.get(2).and_then(Term::as_frame)
        } else {
            Some(self)
        }
    }

    fn action_mut(&mut self) -> Option<&mut SemanticFrame> {
        if self.is_instruct() {
            match self.args.get_mut(2) {
                Some(Term::Frame(f)) => Some(f),
                _ => None,
            }
        } else {
            Some(self)
        }
    }

    /// First non-role argument of the action frame, i.e. the acted-on object.
    pub fn object(&self) -> Option<&Term> {
        self.action()?.args.iter().find(|t| !matches!(t, Term::Role(_)))
    }

    /// Modifiers attached at the clause level and at the object, in that order.
    pub fn all_modifiers(&self) -> impl Iterator<Item = &Modifier> {
        let object_mods = self
            .action()
            .filter(|_| self.is_instruct())
            .map(|a| a.modifiers.as_slice())
            .unwrap_or(&[]);
        self.modifiers.iter().chain(object_mods.iter())
    }

    /// Every symbol occurring anywhere in the frame, depth-first.
    pub fn symbols(&self) -> Vec<&str> {
        fn walk<'a>(f: &'a SemanticFrame, out: &mut Vec<&'a str>) {
            for a in &f.args {
                match a {
                    Term::Sym(s) => out.push(s),
                    Term::Frame(g) => walk(g, out),
                    Term::Role(_) => {}
                }
            }
            for m in &f.modifiers {
                walk(&m.frame, out);
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    fn write(&self, out: &mut String, sep: &str) {
        out.push_str(&self.predicate);
        out.push('(');
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                out.push_str(sep);
            }
            a.write(out);
        }
        for (i, m) in self.modifiers.iter().enumerate() {
            if i > 0 || !self.args.is_empty() {
                out.push_str(", ");
            }
            m.frame.write(out, ", ");
        }
        out.push(')');
    }
}

impl fmt::Display for SemanticFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write(&mut s, ",");
        f.write_str(&s)
    }
}

/// Semantic template attached to a lexical entry.
///
/// `$k` is the k-th consumed argument (outermost slash first).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Template {
    Slot(usize),
    /// `$k(a, ...)`: apply a function-valued argument.
    Apply(usize, Vec<Template>),
    /// `$k.obj`: the object referent of a clause argument.
    ObjectOf(usize),
    /// Bare identifier; `speaker` and `listener` become roles.
    Symbol(String),
    Frame(String, Vec<Template>),
    /// `@action(clause, modifier)` / `@object(clause, modifier)`.
    Attach(Site, Box<Template>, Box<Template>),
}

impl Template {
    /// Highest slot index referenced (0 when the template is closed).
    pub fn max_slot(&self) -> usize {
        match self {
            Template::Slot(k) | Template::ObjectOf(k) => *k,
            Template::Apply(k, xs) => xs.iter().map(Template::max_slot).fold(*k, usize::max),
            Template::Symbol(_) => 0,
            Template::Frame(_, xs) => xs.iter().map(Template::max_slot).max().unwrap_or(0),
            Template::Attach(_, a, b) => a.max_slot().max(b.max_slot()),
        }
    }

    pub fn parse(src: &str) -> Result<Template, TemplateError> {
        let mut p = TemplateParser {
            src: src.as_bytes(),
            pos: 0,
        };
        let t = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(t)
    }

    /// Evaluate with bound arguments (`args[0]` is `$1`).
    pub fn eval(&self, args: &[Sem]) -> Result<Sem, SemError> {
        let slot = |k: usize| args.get(k - 1).ok_or(SemError::UnboundSlot(k));
        match self {
            Template::Slot(k) => slot(*k).cloned(),
            Template::Apply(k, xs) => {
                let mut f = slot(*k)?.clone();
                for x in xs {
                    f = f.apply(x.eval(args)?)?;
                }
                Ok(f)
            }
            Template::ObjectOf(k) => {
                let t = slot(*k)?.as_term().ok_or(SemError::ExpectedTerm)?;
                let frame = t.as_frame().ok_or(SemError::NoObject)?;
                frame.object().cloned().map(Sem::Term).ok_or(SemError::NoObject)
            }
            Template::Symbol(s) => Ok(Sem::Term(match s.as_str() {
                "speaker" => Term::Role(Role::Speaker),
                "listener" => Term::Role(Role::Listener),
                _ => Term::Sym(s.clone()),
            })),
            Template::Frame(p, xs) => {
                let mut terms = Vec::with_capacity(xs.len());
                for x in xs {
                    match x.eval(args)? {
                        Sem::Term(t) => terms.push(t),
                        Sem::Lambda(_) => return Err(SemError::ExpectedTerm),
                    }
                }
                Ok(Sem::Term(Term::Frame(SemanticFrame::new(p.clone(), terms))))
            }
            Template::Attach(site, target, modifier) => {
                let target = target.eval(args)?;
                let modifier = modifier.eval(args)?;
                let mut frame = match target {
                    Sem::Term(Term::Frame(f)) => f,
                    _ => return Err(SemError::ExpectedFrame),
                };
                let mframe = match modifier {
                    Sem::Term(Term::Frame(f)) => f,
                    Sem::Term(Term::Sym(s)) => SemanticFrame::new(s, Vec::new()),
                    _ => return Err(SemError::ExpectedFrame),
                };
                let host = match site {
                    Site::Action => &mut frame,
                    Site::Object => frame.action_mut().ok_or(SemError::ExpectedFrame)?,
                };
                host.modifiers.push(Modifier {
                    site: *site,
                    frame: mframe,
                });
                Ok(Sem::Term(Term::Frame(frame)))
            }
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, xs: &[Template]) -> fmt::Result {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{x}")?;
            }
            Ok(())
        }
        match self {
            Template::Slot(k) => write!(f, "${k}"),
            Template::Apply(k, xs) => {
                write!(f, "${k}(")?;
                list(f, xs)?;
                f.write_str(")")
            }
            Template::ObjectOf(k) => write!(f, "${k}.obj"),
            Template::Symbol(s) => f.write_str(s),
            Template::Frame(p, xs) => {
                write!(f, "{p}(")?;
                list(f, xs)?;
                f.write_str(")")
            }
            Template::Attach(site, a, b) => {
                let name = match site {
                    Site::Action => "@action",
                    Site::Object => "@object",
                };
                write!(f, "{name}({a},{b})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("template error at byte {pos}: {message}")]
pub struct TemplateError {
    pub pos: usize,
    pub message: String,
}

struct TemplateParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl TemplateParser<'_> {
    fn error(&self, message: &str) -> TemplateError {
        TemplateError {
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(u8::is_ascii_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, TemplateError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_' || *c == b'\'')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize, TemplateError> {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match digits.parse::<usize>() {
            Ok(k) if k > 0 => Ok(k),
            _ => Err(self.error("expected slot number >= 1")),
        }
    }

    fn args(&mut self) -> Result<Vec<Template>, TemplateError> {
        let mut xs = Vec::new();
        if self.eat(b')') {
            return Ok(xs);
        }
        loop {
            xs.push(self.expr()?);
            if self.eat(b')') {
                return Ok(xs);
            }
            if !self.eat(b',') {
                return Err(self.error("expected `,` or `)`"));
            }
        }
    }

    fn expr(&mut self) -> Result<Template, TemplateError> {
        if self.eat(b'$') {
            let k = self.number()?;
            if self.eat(b'(') {
                return Ok(Template::Apply(k, self.args()?));
            }
            if self.eat(b'.') {
                let field = self.ident()?;
                if field != "obj" {
                    return Err(self.error("only `.obj` is supported"));
                }
                return Ok(Template::ObjectOf(k));
            }
            return Ok(Template::Slot(k));
        }
        if self.eat(b'@') {
            let site = match self.ident()?.as_str() {
                "action" => Site::Action,
                "object" => Site::Object,
                _ => return Err(self.error("expected @action or @object")),
            };
            if !self.eat(b'(') {
                return Err(self.error("expected `(`"));
            }
            let xs = self.args()?;
            let [a, b]: [Template; 2] = xs
                .try_into()
                .map_err(|_| self.error("attachment takes two arguments"))?;
            return Ok(Template::Attach(site, Box::new(a), Box::new(b)));
        }
        let name = self.ident()?;
        if self.eat(b'(') {
            Ok(Template::Frame(name, self.args()?))
        } else {
            Ok(Template::Symbol(name))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SemError {
    #[error("slot ${0} is unbound")]
    UnboundSlot(usize),
    #[error("expected a saturated term, found a function")]
    ExpectedTerm,
    #[error("expected a frame")]
    ExpectedFrame,
    #[error("clause has no object")]
    NoObject,
    #[error("cannot apply a saturated term")]
    NotAFunction,
}

/// A partially applied template awaiting further arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lambda {
    pub template: Arc<Template>,
    pub arity: usize,
    pub bound: Vec<Sem>,
}

/// Semantic value carried by a chart node.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Sem {
    Term(Term),
    Lambda(Lambda),
}

impl Sem {
    /// Semantics of a lexical entry before any argument is supplied.
    pub fn lexical(template: Arc<Template>, arity: usize) -> Result<Sem, SemError> {
        if arity == 0 {
            template.eval(&[])
        } else {
            Ok(Sem::Lambda(Lambda {
                template,
                arity,
                bound: Vec::new(),
            }))
        }
    }

    /// Where a modifier function attaches once saturated, if it is one.
    pub fn attach_site(&self) -> Option<Site> {
        match self {
            Sem::Lambda(l) => match l.template.as_ref() {
                Template::Attach(site, _, _) => Some(*site),
                _ => None,
            },
            Sem::Term(_) => None,
        }
    }

    pub fn apply(self, arg: Sem) -> Result<Sem, SemError> {
        match self {
            Sem::Term(_) => Err(SemError::NotAFunction),
            Sem::Lambda(mut l) => {
                l.bound.push(arg);
                if l.bound.len() == l.arity {
                    l.template.eval(&l.bound)
                } else {
                    Ok(Sem::Lambda(l))
                }
            }
        }
    }

    pub fn as_term(&self) -> Option<&Term> {
        match self {
            Sem::Term(t) => Some(t),
            Sem::Lambda(_) => None,
        }
    }

    pub fn as_frame(&self) -> Option<&SemanticFrame> {
        self.as_term().and_then(Term::as_frame)
    }
}

impl fmt::Display for Sem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sem::Term(t) => write!(f, "{t}"),
            Sem::Lambda(l) => {
                write!(f, "\\{}.{}", l.arity - l.bound.len(), l.template)?;
                if !l.bound.is_empty() {
                    f.write_str("[")?;
                    for (i, b) in l.bound.iter().enumerate() {
                        if i > 0 {
                            f.write_str("; ")?;
                        }
                        write!(f, "{b}")?;
                    }
                    f.write_str("]")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lam(src: &str, arity: usize) -> Sem {
        Sem::lexical(Arc::new(Template::parse(src).unwrap()), arity).unwrap()
    }

    #[test]
    fn instruct_serialization_matches_walkthrough_form() {
        let grab = lam("INSTRUCT(speaker,listener,graspObject(listener,$1))", 1);
        let s = grab.apply(Sem::Term(Term::sym("mug"))).unwrap();
        assert_eq!(
            s.to_string(),
            "INSTRUCT(speaker,listener,graspObject(listener,mug))"
        );
    }

    #[test]
    fn action_modifier_uses_spaced_separator() {
        let clause = lam("INSTRUCT(speaker,listener,graspObject(listener,$1))", 1)
            .apply(Sem::Term(Term::sym("mug")))
            .unwrap();
        let by = lam("@action($2,by($2.obj,$1))", 2);
        let s = by
            .apply(Sem::Term(Term::sym("top")))
            .unwrap()
            .apply(clause)
            .unwrap();
        assert_eq!(
            s.to_string(),
            "INSTRUCT(speaker,listener,graspObject(listener,mug), by(mug, top))"
        );
        let f = s.as_frame().unwrap();
        assert_eq!(f.modifiers[0].site, Site::Action);
    }

    #[test]
    fn object_modifier_attaches_inside_action() {
        let grab = lam("INSTRUCT(speaker,listener,graspObject(listener,$1))", 1);
        let by = lam("@object($3($2),by($2,$1))", 3);
        let s = by
            .apply(Sem::Term(Term::sym("top")))
            .unwrap()
            .apply(Sem::Term(Term::sym("mug")))
            .unwrap()
            .apply(grab)
            .unwrap();
        assert_eq!(
            s.to_string(),
            "INSTRUCT(speaker,listener,graspObject(listener,mug, by(mug, top)))"
        );
        let f = s.as_frame().unwrap();
        assert!(f.modifiers.is_empty());
        assert_eq!(f.all_modifiers().next().unwrap().site, Site::Object);
    }

    #[test]
    fn template_display_round_trips() {
        for src in [
            "$1",
            "mug",
            "INSTRUCT(speaker,listener,graspObject(listener,$1))",
            "@action($2,by($2.obj,$1))",
            "@object($3($2),by($2,$1))",
            "not($1)",
        ] {
            let t = Template::parse(src).unwrap();
            assert_eq!(Template::parse(&t.to_string()).unwrap(), t);
        }
    }

    #[test]
    fn template_errors() {
        assert!(Template::parse("foo(").is_err());
        assert!(Template::parse("$0").is_err());
        assert!(Template::parse("$1.subj").is_err());
        assert!(Template::parse("@action($1)").is_err());
        assert!(Template::parse("a b").is_err());
    }

    #[test]
    fn object_and_symbols() {
        let s = lam("INSTRUCT(speaker,listener,handObject(listener,$2,$1))", 2)
            .apply(Sem::Term(Term::Role(Role::Speaker)))
            .unwrap()
            .apply(Sem::Term(Term::sym("screwdriver")))
            .unwrap();
        let f = s.as_frame().unwrap();
        assert_eq!(f.object(), Some(&Term::sym("screwdriver")));
        assert_eq!(f.symbols(), vec!["screwdriver"]);
    }
}
