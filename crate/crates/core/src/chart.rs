//! Incremental chart parsing.
//!
//! Words are appended one at a time. Each new word opens a column `k`;
//! its lexical nodes go into `cells[k][k]` and every span `j..=k` ending at
//! the new column is filled bottom-up from adjacent sub-spans. Spans that do
//! not touch the new column cannot change, so the result is the same as
//! rerunning the full span loop over the whole prefix.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::grammar::{Atom, Category, Dictionary, Direction, Sem, SemanticFrame, Site};
use crate::world::WorldSnapshot;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct ChartNode {
    pub id: NodeId,
    /// Inclusive word span `(j, k)`.
    pub span: (usize, usize),
    pub category: Category,
    pub sem: Sem,
    pub children: Option<(NodeId, NodeId)>,
}

impl ChartNode {
    pub fn frame(&self) -> Option<&SemanticFrame> {
        self.sem.as_frame()
    }

    /// An imperative clause with a resolvable action and object.
    pub fn is_submittable(&self) -> bool {
        let clause = self.category.is_atom(Atom::S) || self.category.is_atom(Atom::VP);
        clause
            && self
                .frame()
                .is_some_and(|f| f.is_instruct() && f.object().is_some())
    }

    fn object_attachments(&self) -> usize {
        self.frame()
            .map(|f| f.all_modifiers().filter(|m| m.site == Site::Object).count())
            .unwrap_or(0)
    }
}

/// Attempts forward then backward application.
///
/// The returned node has id 0 and no span bookkeeping beyond the merged
/// span; the chart assigns identity when it stores it.
pub fn combine(left: &ChartNode, right: &ChartNode) -> Option<ChartNode> {
    let (category, sem) = apply_rules(&left.category, &left.sem, &right.category, &right.sem)?;
    Some(ChartNode {
        id: 0,
        span: (left.span.0, right.span.1),
        category,
        sem,
        children: Some((left.id, right.id)),
    })
}

fn apply_rules(lc: &Category, ls: &Sem, rc: &Category, rs: &Sem) -> Option<(Category, Sem)> {
    // X/Y  Y  =>  X
    if let Category::Functor {
        result,
        arg,
        dir: Direction::Forward,
    } = lc
    {
        if **arg == *rc {
            if let Ok(sem) = ls.clone().apply(rs.clone()) {
                return Some(((**result).clone(), sem));
            }
        }
    }
    // Y  X\Y  =>  X
    if let Category::Functor {
        result,
        arg,
        dir: Direction::Backward,
    } = rc
    {
        if **arg == *lc {
            if let Ok(sem) = rs.clone().apply(ls.clone()) {
                return Some(((**result).clone(), sem));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    NoParse,
    Partial,
    Complete,
}

/// Snapshot of the parser state after a word.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseResult {
    pub status: ParseStatus,
    pub best: Option<ChartNode>,
    /// Every node of the spanning cell, in construction order.
    pub alternatives: Vec<ChartNode>,
    pub version: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    nodes: Vec<ChartNode>,
    cells: Vec<Vec<Vec<NodeId>>>,
    tokens: Vec<String>,
    version: u64,
    attempts: u64,
}

impl Chart {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Number of `combine` calls made since the last reset.
    pub fn combine_attempts(&self) -> u64 {
        self.attempts
    }

    pub fn node(&self, id: NodeId) -> &ChartNode {
        &self.nodes[id]
    }

    pub fn cell(&self, j: usize, k: usize) -> impl Iterator<Item = &ChartNode> {
        self.cells
            .get(j)
            .and_then(|row| row.get(k))
            .into_iter()
            .flatten()
            .map(|&id| &self.nodes[id])
    }

    /// Empties the chart; the version counter carries on.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.cells.clear();
        self.tokens.clear();
        self.attempts = 0;
    }

    /// Appends one word and fills every span ending at it.
    pub fn feed_word(&mut self, word: &str, dict: &Dictionary) -> ParseResult {
        let k = self.push_leaves(word, dict);
        for j in (0..k).rev() {
            for m in j..k {
                self.combine_cells(j, m, k);
            }
        }
        self.version += 1;
        self.result()
    }

    /// Batch construction: all words first, then the span loop over the whole chart.
    pub fn parse_batch<S: AsRef<str>>(words: &[S], dict: &Dictionary) -> Chart {
        let mut chart = Chart::new();
        for w in words {
            chart.push_leaves(w.as_ref(), dict);
        }
        let n = chart.len();
        for span in 2..=n {
            for j in 0..=(n - span) {
                let k = j + span - 1;
                for m in j..k {
                    chart.combine_cells(j, m, k);
                }
            }
        }
        chart.version += 1;
        chart
    }

    fn push_leaves(&mut self, word: &str, dict: &Dictionary) -> usize {
        let token = crate::grammar::normalize(word);
        for row in &mut self.cells {
            row.push(Vec::new());
        }
        let k = self.tokens.len();
        self.cells.push(vec![Vec::new(); k + 1]);
        for entry in dict.lookup(&token) {
            if let Ok(sem) = entry.semantics() {
                self.add_node(ChartNode {
                    id: 0,
                    span: (k, k),
                    category: entry.category.clone(),
                    sem,
                    children: None,
                });
            }
        }
        self.tokens.push(token);
        k
    }

    fn combine_cells(&mut self, j: usize, m: usize, k: usize) {
        let lefts = self.cells[j][m].clone();
        let rights = self.cells[m + 1][k].clone();
        for &l in &lefts {
            for &r in &rights {
                self.attempts += 1;
                if let Some(node) = combine(&self.nodes[l], &self.nodes[r]) {
                    self.add_node(node);
                }
            }
        }
    }

    fn add_node(&mut self, mut node: ChartNode) {
        let (j, k) = node.span;
        let exists = self.cells[j][k].iter().any(|&id| {
            let other = &self.nodes[id];
            other.category == node.category && other.sem == node.sem
        });
        if exists {
            return;
        }
        node.id = self.nodes.len();
        self.cells[j][k].push(node.id);
        self.nodes.push(node);
    }

    /// Current parse state over the spanning cell.
    pub fn result(&self) -> ParseResult {
        let n = self.len();
        let alternatives: Vec<ChartNode> = if n == 0 {
            Vec::new()
        } else {
            self.cell(0, n - 1).cloned().collect()
        };
        let best = preferred(alternatives.iter().filter(|a| a.is_submittable())).cloned();
        let status = if best.is_some() {
            ParseStatus::Complete
        } else if self.nodes.is_empty() {
            ParseStatus::NoParse
        } else {
            ParseStatus::Partial
        };
        ParseResult {
            status,
            best,
            alternatives,
            version: self.version,
        }
    }

    /// Set view of the chart: `(span, category, semantics)` triples.
    pub fn contents(&self) -> std::collections::BTreeSet<((usize, usize), String, String)> {
        self.nodes
            .iter()
            .map(|n| (n.span, n.category.to_string(), n.sem.to_string()))
            .collect()
    }

    /// Surface words under a node.
    pub fn yield_of(&self, id: NodeId) -> String {
        let node = &self.nodes[id];
        self.tokens[node.span.0..=node.span.1].join(" ")
    }

    /// Words of a clause node with its non-clause constituents bracketed,
    /// e.g. `grab (the mug) (by the top)`.
    pub fn bracketed(&self, id: NodeId) -> String {
        let mut parts = Vec::new();
        self.collect_constituents(id, &mut parts);
        parts.join(" ")
    }

    fn collect_constituents(&self, id: NodeId, parts: &mut Vec<String>) {
        let node = &self.nodes[id];
        match node.children {
            None => parts.push(self.tokens[node.span.0].clone()),
            Some((l, r)) => {
                // a modifier of the object joins the object's bracket
                if self.nodes[r].children.is_some() && self.nodes[r].sem.attach_site() == Some(Site::Object) {
                    self.collect_constituents(l, parts);
                    let object = parts.pop().unwrap_or_default();
                    let object = object.strip_prefix('(').and_then(|o| o.strip_suffix(')')).unwrap_or(&object);
                    parts.push(format!("({object} {})", self.yield_of(r)));
                    return;
                }
                for c in [l, r] {
                    let child = &self.nodes[c];
                    let clause = child.category.is_atom(Atom::S) || child.category.is_atom(Atom::VP);
                    if child.children.is_none() {
                        parts.push(self.tokens[child.span.0].clone());
                    } else if clause {
                        self.collect_constituents(c, parts);
                    } else {
                        parts.push(format!("({})", self.yield_of(c)));
                    }
                }
            }
        }
    }

    /// Display line for a node: the word for lexical nodes, `LABEL -> words` otherwise.
    pub fn describe(&self, id: NodeId, dict: &Dictionary) -> String {
        let node = &self.nodes[id];
        if node.children.is_none() {
            return self.tokens[node.span.0].clone();
        }
        let label = dict.label(&node.category);
        let words = if node.category.is_atom(Atom::S) {
            self.bracketed(id)
        } else {
            self.yield_of(id)
        };
        let note = match node.sem.attach_site() {
            Some(Site::Object) => " (modifies NP)",
            _ => "",
        };
        format!("{label} -> {words}{note}")
    }

    /// Upper-triangular text rendering, one row per start index.
    /// The preferred complete parse in the spanning cell is marked with `*`.
    pub fn dump(&self, dict: &Dictionary) -> String {
        let n = self.len();
        let best = self.result().best.map(|b| b.id);
        let mut grid: Vec<Vec<Vec<String>>> = vec![vec![Vec::new(); n]; n];
        for (j, row) in grid.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate().skip(j) {
                for node in self.cell(j, k) {
                    let mark = if Some(node.id) == best { "*" } else { "" };
                    cell.push(format!("{mark}{}", self.describe(node.id, dict)));
                }
            }
        }
        let mut widths = vec![3usize; n];
        for row in &grid {
            for (k, cell) in row.iter().enumerate() {
                for line in cell {
                    widths[k] = widths[k].max(line.chars().count());
                }
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:>3} ", "Idx");
        for (k, w) in widths.iter().enumerate() {
            let _ = write!(out, "| {:<w$} ", k, w = w);
        }
        out.push_str("|\n");
        for (j, row) in grid.iter().enumerate() {
            let height = row.iter().map(Vec::len).max().unwrap_or(0).max(1);
            for line in 0..height {
                if line == 0 {
                    let _ = write!(out, "{j:>3} ");
                } else {
                    out.push_str("    ");
                }
                for (k, cell) in row.iter().enumerate() {
                    let text = cell.get(line).map(String::as_str).unwrap_or("");
                    let _ = write!(out, "| {:<w$} ", text, w = widths[k]);
                }
                out.push_str("|\n");
            }
        }
        out
    }
}

/// Action attachment first, then construction order.
fn preferred<'a>(nodes: impl Iterator<Item = &'a ChartNode>) -> Option<&'a ChartNode> {
    nodes.min_by_key(|n| (n.object_attachments(), n.id))
}

/// Context-aware choice among the spanning parses: drops parses whose
/// referents do not ground in `world`, then prefers action attachment and
/// earlier construction.
pub fn best_parse(result: &ParseResult, world: &WorldSnapshot) -> Option<ChartNode> {
    if result.status != ParseStatus::Complete {
        return None;
    }
    preferred(result.alternatives.iter().filter(|n| {
        n.is_submittable()
            && n.frame()
                .is_some_and(|f| crate::resolver::referents_resolve(f, world))
    }))
    .cloned()
}
