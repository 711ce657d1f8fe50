//! Epsilon-free state acceptors and exact log-semiring forward-backward.
//!
//! Every arc consumes one frame and emits the state id it carries, so a path
//! of length `T` scores `sum(arc weights) + final weight + sum(loglikes)`.

mod build;
mod fb;
mod lm;

use std::fmt::Write as _;
use std::path::Path;

pub use build::{build_chunk_numerator, build_denominator_graph, build_numerator_graph, DenominatorKind};
pub use fb::{forward_backward, lfmmi_objective, viterbi_best_path, BestPath, FbResult, LfmmiResult};
pub use lm::PhoneBigram;

use crate::{Error, Result, LOG_ZERO};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub src: usize,
    pub dst: usize,
    pub state: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    pub num_nodes: usize,
    pub num_states: usize,
    pub start: usize,
    pub arcs: Vec<Arc>,
    /// Final log-weight per node; `LOG_ZERO` for non-final nodes.
    pub finals: Vec<f64>,
}

impl StateGraph {
    pub fn new(num_nodes: usize, num_states: usize, start: usize) -> Self {
        Self {
            num_nodes,
            num_states,
            start,
            arcs: Vec::new(),
            finals: vec![LOG_ZERO; num_nodes],
        }
    }

    pub fn add_arc(&mut self, src: usize, dst: usize, state: usize, weight: f64) {
        self.arcs.push(Arc { src, dst, state, weight });
    }

    pub fn set_final(&mut self, node: usize, weight: f64) {
        self.finals[node] = weight;
    }

    /// Checks ids, and that some final node is reachable from the start.
    pub fn validate(&self) -> Result<()> {
        if self.start >= self.num_nodes || self.finals.len() != self.num_nodes {
            return Err(Error::Invalid("graph start or finals out of range".into()));
        }
        for a in &self.arcs {
            if a.src >= self.num_nodes || a.dst >= self.num_nodes || a.state >= self.num_states || a.weight.is_nan() {
                return Err(Error::Invalid(format!("bad arc {a:?}")));
            }
        }
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![self.start];
        seen[self.start] = true;
        while let Some(n) = stack.pop() {
            for a in self.arcs.iter().filter(|a| a.src == n) {
                if !seen[a.dst] {
                    seen[a.dst] = true;
                    stack.push(a.dst);
                }
            }
        }
        if !(0..self.num_nodes).any(|n| seen[n] && self.finals[n] > LOG_ZERO) {
            return Err(Error::NoPath("no final node reachable from start".into()));
        }
        Ok(())
    }

    /// Text arc list: a header, `src dst state weight` per arc, then
    /// `final node weight` per final node.
    pub fn to_text(&self) -> String {
        let mut s = format!("graph nodes={} states={} start={}\n", self.num_nodes, self.num_states, self.start);
        for a in &self.arcs {
            writeln!(s, "{} {} {} {:?}", a.src, a.dst, a.state, a.weight).unwrap();
        }
        for (n, &w) in self.finals.iter().enumerate() {
            if w > LOG_ZERO {
                writeln!(s, "final {n} {w:?}").unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::format(Path::new("<graph>"), format!("bad line '{line}'"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad(""))?;
        let field = |key: &str| -> Result<usize> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(header))
        };
        let mut g = StateGraph::new(field("nodes=")?, field("states=")?, field("start=")?);
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["final", n, w] => {
                    let n: usize = n.parse().map_err(|_| bad(line))?;
                    if n >= g.num_nodes {
                        return Err(bad(line));
                    }
                    g.finals[n] = w.parse().map_err(|_| bad(line))?;
                }
                [s, d, st, w] => g.add_arc(
                    s.parse().map_err(|_| bad(line))?,
                    d.parse().map_err(|_| bad(line))?,
                    st.parse().map_err(|_| bad(line))?,
                    w.parse().map_err(|_| bad(line))?,
                ),
                _ => return Err(bad(line)),
            }
        }
        g.validate()?;
        Ok(g)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_text()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_text(&text)
    }
}
