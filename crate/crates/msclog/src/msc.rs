//! Message sequence charts.
//!
//! An MSC consists of one finite word per process plus a set of message
//! edges pairing send events with receive events. Events are addressed as
//! `(process, index)` with 1-based indices. The happens-before order is the
//! reflexive-transitive closure of process edges (consecutive events on one
//! process) and message edges; it must be a partial order, message edges
//! must pair distinct processes, no event may be an endpoint of two edges,
//! and each channel must be FIFO.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

/// Shared vocabulary: process names, base labels, and the number of
/// set-variable tracks carried by every event label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub processes: Vec<String>,
    pub labels: Vec<String>,
    #[serde(default)]
    pub setvars: usize,
}

impl Signature {
    pub fn new<S: Into<String>>(
        processes: impl IntoIterator<Item = S>,
        labels: impl IntoIterator<Item = S>,
        setvars: usize,
    ) -> Arc<Self> {
        Arc::new(Signature {
            processes: processes.into_iter().map(Into::into).collect(),
            labels: labels.into_iter().map(Into::into).collect(),
            setvars,
        })
    }

    pub fn proc_index(&self, name: &str) -> Option<usize> {
        self.processes.iter().position(|p| p == name)
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// All extended labels: base labels crossed with set-variable bit vectors.
    pub fn ext_labels(&self) -> Vec<ExtLabel> {
        let mut out = Vec::new();
        for label in 0..self.labels.len() {
            for bits in 0..(1u32 << self.setvars) {
                out.push(ExtLabel { label: label as u16, bits });
            }
        }
        out
    }

    /// Number of extended labels.
    pub fn ext_label_count(&self) -> usize {
        self.labels.len() << self.setvars
    }

    /// Dense index of an extended label within [`Signature::ext_labels`].
    pub fn ext_label_id(&self, l: ExtLabel) -> usize {
        ((l.label as usize) << self.setvars) | l.bits as usize
    }

    /// Same signature but with a different set-variable width.
    pub fn with_setvars(&self, setvars: usize) -> Arc<Signature> {
        Arc::new(Signature {
            processes: self.processes.clone(),
            labels: self.labels.clone(),
            setvars,
        })
    }
}

/// A label on an event: a base label plus one bit per set variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExtLabel {
    pub label: u16,
    pub bits: u32,
}

impl ExtLabel {
    pub fn plain(label: usize) -> Self {
        ExtLabel { label: label as u16, bits: 0 }
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }
}

/// An event address: process index plus 1-based position in that process's word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId {
    pub process: u16,
    /// 1-based index into the process word.
    pub index: u32,
}

impl EventId {
    pub fn new(process: usize, index: usize) -> Self {
        EventId { process: process as u16, index: index as u32 }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(#{},{})", self.process, self.index)
    }
}

/// The eight mutually exclusive relations that can hold between an event
/// `e` and an event `f`: for fixed `e` they partition the event set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rel {
    /// `e = f`.
    Eq,
    /// `f` is the immediate process successor of `e`.
    Proc,
    /// `e` sends the message that `f` receives.
    Msg,
    /// `e` and `f` are incomparable.
    Par,
    /// `f` is the immediate process predecessor of `e`.
    ProcInv,
    /// `f` sends the message that `e` receives.
    MsgInv,
    /// `e < f` but neither by a single process nor message edge.
    Less,
    /// `f < e` but neither by a single process nor message edge.
    LessInv,
}

impl Rel {
    pub const ALL: [Rel; 8] = [
        Rel::Eq,
        Rel::Proc,
        Rel::Msg,
        Rel::Par,
        Rel::ProcInv,
        Rel::MsgInv,
        Rel::Less,
        Rel::LessInv,
    ];

    pub fn inverse(self) -> Rel {
        match self {
            Rel::Eq => Rel::Eq,
            Rel::Proc => Rel::ProcInv,
            Rel::ProcInv => Rel::Proc,
            Rel::Msg => Rel::MsgInv,
            Rel::MsgInv => Rel::Msg,
            Rel::Par => Rel::Par,
            Rel::Less => Rel::LessInv,
            Rel::LessInv => Rel::Less,
        }
    }

    pub fn index(self) -> usize {
        Rel::ALL.iter().position(|r| *r == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Rel::Eq => "eq",
            Rel::Proc => "proc",
            Rel::Msg => "msg",
            Rel::Par => "par",
            Rel::ProcInv => "proc-inv",
            Rel::MsgInv => "msg-inv",
            Rel::Less => "less",
            Rel::LessInv => "less-inv",
        }
    }
}

/// The type of an event: for each relation, the set of `(process, label)`
/// pairs realised by events standing in that relation to it.
pub type EventType = [BTreeSet<(u16, ExtLabel)>; 8];

/// A structural defect found by [`Msc::validate`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("MSC has no events: at least one process word must be non-empty")]
    Empty,
    #[error("message endpoint {0} does not exist")]
    BadEndpoint(EventId),
    #[error("message from {0} to {1} stays on one process")]
    SelfChannel(EventId, EventId),
    #[error("event {0} is an endpoint of more than one message edge")]
    ReusedEndpoint(EventId),
    #[error("process and message edges form a cycle")]
    Cyclic,
    #[error("channel from process #{from} to process #{to} is not FIFO")]
    Fifo { from: u16, to: u16 },
    #[error("label index {0} out of range for the signature")]
    BadLabel(u16),
    #[error("label bits {0:#b} exceed the signature's set-variable width")]
    BadBits(u32),
    #[error("word count does not match the signature's process count")]
    WordCount,
}

/// A message sequence chart over a [`Signature`].
#[derive(Debug, Clone)]
pub struct Msc {
    pub sig: Arc<Signature>,
    /// One word per process; `words[p][i]` labels event `(p, i+1)`.
    pub words: Vec<Vec<ExtLabel>>,
    /// Message edges `(send, receive)`.
    pub messages: Vec<(EventId, EventId)>,
    causality: OnceLock<Arc<Causality>>,
}

impl PartialEq for Msc {
    fn eq(&self, other: &Self) -> bool {
        self.sig == other.sig && self.words == other.words && self.messages == other.messages
    }
}
impl Eq for Msc {}

impl Msc {
    pub fn new(
        sig: Arc<Signature>,
        words: Vec<Vec<ExtLabel>>,
        mut messages: Vec<(EventId, EventId)>,
    ) -> Msc {
        messages.sort();
        Msc { sig, words, messages, causality: OnceLock::new() }
    }

    /// Convenience constructor from label-name words and index pairs.
    pub fn build(
        sig: &Arc<Signature>,
        words: &[&str],
        messages: &[((usize, usize), (usize, usize))],
    ) -> Msc {
        let words = words
            .iter()
            .map(|w| {
                w.split_whitespace()
                    .map(|token| {
                        let (name, bits) = match token.split_once('/') {
                            Some((n, b)) => (n, u32::from_str_radix(b, 2).expect("bad bits")),
                            None => (token, 0),
                        };
                        ExtLabel {
                            label: sig.label_index(name).expect("unknown label") as u16,
                            bits,
                        }
                    })
                    .collect()
            })
            .collect();
        let messages = messages
            .iter()
            .map(|&((p, i), (q, j))| (EventId::new(p, i), EventId::new(q, j)))
            .collect();
        Msc::new(sig.clone(), words, messages)
    }

    pub fn event_count(&self) -> usize {
        self.words.iter().map(|w| w.len()).sum()
    }

    pub fn events(&self) -> impl Iterator<Item = EventId> + '_ {
        self.words.iter().enumerate().flat_map(|(p, w)| {
            (1..=w.len()).map(move |i| EventId::new(p, i))
        })
    }

    pub fn label(&self, e: EventId) -> ExtLabel {
        self.words[e.process as usize][e.index as usize - 1]
    }

    pub fn has_event(&self, e: EventId) -> bool {
        (e.process as usize) < self.words.len()
            && e.index >= 1
            && (e.index as usize) <= self.words[e.process as usize].len()
    }

    /// All structural defects of this chart. Empty iff the chart is a valid MSC.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.words.len() != self.sig.processes.len() {
            out.push(Violation::WordCount);
            return out;
        }
        if self.event_count() == 0 {
            out.push(Violation::Empty);
        }
        for w in &self.words {
            for l in w {
                if l.label as usize >= self.sig.labels.len() {
                    out.push(Violation::BadLabel(l.label));
                }
                if l.bits >> self.sig.setvars != 0 {
                    out.push(Violation::BadBits(l.bits));
                }
            }
        }
        let mut endpoint_uses: std::collections::BTreeMap<EventId, usize> = Default::default();
        for &(s, r) in &self.messages {
            for e in [s, r] {
                if !self.has_event(e) {
                    out.push(Violation::BadEndpoint(e));
                } else {
                    *endpoint_uses.entry(e).or_insert(0) += 1;
                }
            }
            if s.process == r.process && self.has_event(s) && self.has_event(r) {
                out.push(Violation::SelfChannel(s, r));
            }
        }
        for (e, n) in endpoint_uses {
            if n > 1 {
                out.push(Violation::ReusedEndpoint(e));
            }
        }
        if !out.is_empty() {
            return out;
        }
        // FIFO per ordered channel: receives must occur in send order.
        for p in 0..self.words.len() {
            for q in 0..self.words.len() {
                if p == q {
                    continue;
                }
                let mut edges: Vec<(u32, u32)> = self
                    .messages
                    .iter()
                    .filter(|(s, r)| s.process as usize == p && r.process as usize == q)
                    .map(|(s, r)| (s.index, r.index))
                    .collect();
                edges.sort();
                if edges.windows(2).any(|w| w[0].1 >= w[1].1) {
                    out.push(Violation::Fifo { from: p as u16, to: q as u16 });
                }
            }
        }
        if Causality::try_new(self).is_none() {
            out.push(Violation::Cyclic);
        }
        out
    }

    /// Cached happens-before structure. Panics on invalid (cyclic) charts.
    pub fn causality(&self) -> &Causality {
        self.causality
            .get_or_init(|| Arc::new(Causality::try_new(self).expect("cyclic MSC")))
    }

    /// Happens-before: reflexive partial order.
    pub fn leq(&self, e: EventId, f: EventId) -> bool {
        let c = self.causality();
        c.leq(c.gid(e), c.gid(f))
    }

    /// The unique relation from the eight-way partition holding between `e` and `f`.
    pub fn relation_of(&self, e: EventId, f: EventId) -> Rel {
        if e == f {
            return Rel::Eq;
        }
        if e.process == f.process {
            if f.index == e.index + 1 {
                return Rel::Proc;
            }
            if e.index == f.index + 1 {
                return Rel::ProcInv;
            }
            return if e.index < f.index { Rel::Less } else { Rel::LessInv };
        }
        let c = self.causality();
        let (ge, gf) = (c.gid(e), c.gid(f));
        match c.partner[ge] {
            Some((g, MsgDir::Send)) if g == gf => return Rel::Msg,
            Some((g, MsgDir::Recv)) if g == gf => return Rel::MsgInv,
            _ => {}
        }
        if c.leq(ge, gf) {
            Rel::Less
        } else if c.leq(gf, ge) {
            Rel::LessInv
        } else {
            Rel::Par
        }
    }

    /// The relational type of `e`: per relation, the labels of related events.
    pub fn event_type(&self, e: EventId) -> EventType {
        let mut t: EventType = Default::default();
        for f in self.events() {
            let rel = self.relation_of(e, f);
            t[rel.index()].insert((f.process, self.label(f)));
        }
        t
    }

    /// The time-reversed chart: words reversed, message edges turned around.
    pub fn mirror(&self) -> Msc {
        let words: Vec<Vec<ExtLabel>> =
            self.words.iter().map(|w| w.iter().rev().copied().collect()).collect();
        let flip = |e: EventId| EventId {
            process: e.process,
            index: self.words[e.process as usize].len() as u32 + 1 - e.index,
        };
        let messages = self.messages.iter().map(|&(s, r)| (flip(r), flip(s))).collect();
        Msc::new(self.sig.clone(), words, messages)
    }

    /// The event of `e` under [`Msc::mirror`].
    pub fn mirror_event(&self, e: EventId) -> EventId {
        EventId {
            process: e.process,
            index: self.words[e.process as usize].len() as u32 + 1 - e.index,
        }
    }

    /// Splits process `p`'s word relative to an arbitrary event `e` into the
    /// prefix strictly below `e`, the block incomparable to `e`, and the
    /// suffix strictly above `e`. Returns `(past_end, par_end)`: the past is
    /// `1..=past_end`, the parallel block `past_end+1..=par_end`, the future
    /// `par_end+1..=len`.
    pub fn parallel_block(&self, p: usize, e: EventId) -> (usize, usize) {
        let len = self.words[p].len();
        let mut past_end = 0;
        for i in 1..=len {
            let f = EventId::new(p, i);
            if f != e && self.leq(f, e) {
                past_end = i;
            } else {
                break;
            }
        }
        let mut par_end = len;
        for i in (1..=len).rev() {
            let f = EventId::new(p, i);
            if f != e && self.leq(e, f) {
                par_end = i - 1;
            } else {
                break;
            }
        }
        (past_end, par_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgDir {
    Send,
    Recv,
}

/// Precomputed order data for one MSC: dense event ids, a topological
/// linearisation, message partners, and the full happens-before bitset.
#[derive(Debug)]
pub struct Causality {
    /// Start of each process's events in the dense numbering.
    pub offsets: Vec<usize>,
    pub n: usize,
    /// For each event: its message partner and whether this event sends.
    pub partner: Vec<Option<(usize, MsgDir)>>,
    /// Events in a fixed topological order of happens-before.
    pub topo: Vec<usize>,
    /// Row per event: bitset over events `f` with `e <= f`.
    above: Vec<Vec<u64>>,
    words: usize,
    lens: Vec<usize>,
}

impl Causality {
    pub fn try_new(msc: &Msc) -> Option<Causality> {
        let lens: Vec<usize> = msc.words.iter().map(|w| w.len()).collect();
        let mut offsets = vec![0usize];
        for l in &lens {
            offsets.push(offsets.last().unwrap() + l);
        }
        let n = *offsets.last().unwrap();
        let gid = |e: EventId| offsets[e.process as usize] + e.index as usize - 1;

        let mut partner: Vec<Option<(usize, MsgDir)>> = vec![None; n];
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for (p, l) in lens.iter().enumerate() {
            for i in 1..*l {
                let a = offsets[p] + i - 1;
                succs[a].push(a + 1);
                indeg[a + 1] += 1;
            }
        }
        for &(s, r) in &msc.messages {
            let (gs, gr) = (gid(s), gid(r));
            partner[gs] = Some((gr, MsgDir::Send));
            partner[gr] = Some((gs, MsgDir::Recv));
            succs[gs].push(gr);
            indeg[gr] += 1;
        }

        // Kahn's algorithm; deterministic by always taking the smallest id.
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            topo.push(v);
            for &w in &succs[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        if topo.len() != n {
            return None;
        }

        let row = n.div_ceil(64).max(1);
        let mut above = vec![vec![0u64; row]; n];
        for &v in topo.iter().rev() {
            above[v][v / 64] |= 1 << (v % 64);
            let (head, tail) = above.split_at_mut(v);
            // Merge successor rows into v's row.
            for &w in &succs[v] {
                let (src, dst): (&[u64], &mut [u64]) = if w < v {
                    (&head[w], &mut tail[0])
                } else {
                    let (a, b) = tail.split_at_mut(w - v);
                    (&b[0], &mut a[0])
                };
                for (d, s) in dst.iter_mut().zip(src) {
                    *d |= s;
                }
            }
        }

        Some(Causality {
            offsets,
            n,
            partner,
            topo,
            above,
            words: lens.len(),
            lens,
        })
    }

    pub fn gid(&self, e: EventId) -> usize {
        self.offsets[e.process as usize] + e.index as usize - 1
    }

    pub fn event(&self, g: usize) -> EventId {
        let p = (0..self.words).find(|&p| g < self.offsets[p] + self.lens[p]).unwrap();
        EventId::new(p, g - self.offsets[p] + 1)
    }

    pub fn leq(&self, ge: usize, gf: usize) -> bool {
        self.above[ge][gf / 64] >> (gf % 64) & 1 == 1
    }
}

// ---------------------------------------------------------------------------
// JSON representation.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MscJson {
    processes: Vec<String>,
    alphabet: Vec<String>,
    #[serde(default)]
    setvars: usize,
    words: std::collections::BTreeMap<String, Vec<WordEntry>>,
    #[serde(default)]
    messages: Vec<MsgJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WordEntry {
    Plain(String),
    WithBits(String, Vec<u8>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MsgJson {
    from: (String, usize),
    to: (String, usize),
}

/// Errors arising when reading an MSC from JSON.
#[derive(Debug, thiserror::Error)]
pub enum MscJsonError {
    #[error("malformed MSC JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("unknown process {0:?}")]
    UnknownProcess(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("word entry for {0:?} carries {1} bits but the signature declares {2} set variables")]
    BitWidth(String, usize, usize),
    #[error("invalid MSC: {0}")]
    Invalid(Violation),
}

impl Msc {
    pub fn to_json(&self) -> serde_json::Value {
        let words = self
            .sig
            .processes
            .iter()
            .enumerate()
            .map(|(p, name)| {
                let entries = self.words[p]
                    .iter()
                    .map(|l| {
                        let base = self.sig.labels[l.label as usize].clone();
                        if self.sig.setvars == 0 {
                            WordEntry::Plain(base)
                        } else {
                            let bits =
                                (0..self.sig.setvars).map(|i| l.bit(i) as u8).collect();
                            WordEntry::WithBits(base, bits)
                        }
                    })
                    .collect();
                (name.clone(), entries)
            })
            .collect();
        let messages = self
            .messages
            .iter()
            .map(|&(s, r)| MsgJson {
                from: (self.sig.processes[s.process as usize].clone(), s.index as usize),
                to: (self.sig.processes[r.process as usize].clone(), r.index as usize),
            })
            .collect();
        serde_json::to_value(MscJson {
            processes: self.sig.processes.clone(),
            alphabet: self.sig.labels.clone(),
            setvars: self.sig.setvars,
            words,
            messages,
        })
        .unwrap()
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Msc, MscJsonError> {
        let raw: MscJson = serde_json::from_value(value.clone())?;
        let sig = Signature::new(raw.processes.clone(), raw.alphabet.clone(), raw.setvars);
        let mut words = vec![Vec::new(); sig.processes.len()];
        for (pname, entries) in &raw.words {
            let p = sig
                .proc_index(pname)
                .ok_or_else(|| MscJsonError::UnknownProcess(pname.clone()))?;
            for entry in entries {
                let (name, bits) = match entry {
                    WordEntry::Plain(name) => (name, 0u32),
                    WordEntry::WithBits(name, bits) => {
                        if bits.len() != sig.setvars {
                            return Err(MscJsonError::BitWidth(
                                pname.clone(),
                                bits.len(),
                                sig.setvars,
                            ));
                        }
                        let mut v = 0u32;
                        for (i, b) in bits.iter().enumerate() {
                            if *b != 0 {
                                v |= 1 << i;
                            }
                        }
                        (name, v)
                    }
                };
                if sig.setvars > 0 && matches!(entry, WordEntry::Plain(_)) {
                    return Err(MscJsonError::BitWidth(pname.clone(), 0, sig.setvars));
                }
                let label = sig
                    .label_index(name)
                    .ok_or_else(|| MscJsonError::UnknownLabel(name.clone()))?;
                words[p].push(ExtLabel { label: label as u16, bits });
            }
        }
        let mut messages = Vec::new();
        for m in &raw.messages {
            let fp = sig
                .proc_index(&m.from.0)
                .ok_or_else(|| MscJsonError::UnknownProcess(m.from.0.clone()))?;
            let tp = sig
                .proc_index(&m.to.0)
                .ok_or_else(|| MscJsonError::UnknownProcess(m.to.0.clone()))?;
            messages.push((EventId::new(fp, m.from.1), EventId::new(tp, m.to.1)));
        }
        let msc = Msc::new(sig, words, messages);
        if let Some(v) = msc.validate().into_iter().next() {
            return Err(MscJsonError::Invalid(v));
        }
        Ok(msc)
    }
}

/// A fixed three-process example chart (processes p, r, q with twelve
/// message edges), used throughout the crate as a regression fixture.
pub fn fig_example() -> Msc {
    let sig = Signature::new(["p", "r", "q"], ["a", "b", "c"], 0);
    // p: aacaaaaa, r: aaaaaaaaaa, q: abbaacaaa
    Msc::build(
        &sig,
        &["a a c a a a a a", "a a a a a a a a a a", "a b b a a c a a a"],
        &[
            ((0, 1), (1, 2)),
            ((0, 2), (1, 3)),
            ((2, 3), (1, 4)),
            ((2, 1), (1, 1)),
            ((2, 2), (0, 5)),
            ((1, 6), (0, 4)),
            ((1, 5), (2, 4)),
            ((1, 7), (2, 5)),
            ((0, 6), (1, 8)),
            ((2, 7), (0, 7)),
            ((1, 9), (2, 8)),
            ((1, 10), (0, 8)),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig2() -> Arc<Signature> {
        Signature::new(["p", "q"], ["a", "b"], 0)
    }

    #[test]
    fn example_is_valid() {
        assert!(fig_example().validate().is_empty());
    }

    #[test]
    fn empty_chart_is_invalid() {
        let m = Msc::build(&sig2(), &["", ""], &[]);
        assert_eq!(m.validate(), vec![Violation::Empty]);
    }

    #[test]
    fn crossing_messages_violate_fifo_but_not_acyclicity() {
        // Two messages on the same channel whose receives swap order.
        let m = Msc::build(&sig2(), &["a a", "a a"], &[((0, 1), (1, 2)), ((0, 2), (1, 1))]);
        let v = m.validate();
        assert!(v.contains(&Violation::Fifo { from: 0, to: 1 }), "{v:?}");
        assert!(!v.contains(&Violation::Cyclic));
    }

    #[test]
    fn opposing_messages_can_cycle() {
        let m = Msc::build(&sig2(), &["a a", "a a"], &[((0, 2), (1, 1)), ((1, 2), (0, 1))]);
        assert!(m.validate().contains(&Violation::Cyclic));
    }

    #[test]
    fn reused_endpoint_rejected() {
        let sig = Signature::new(["p", "q", "r"], ["a"], 0);
        let m = Msc::build(&sig, &["a", "a", "a"], &[((0, 1), (1, 1)), ((2, 1), (1, 1))]);
        assert!(m.validate().contains(&Violation::ReusedEndpoint(EventId::new(1, 1))));
    }

    #[test]
    fn relations_partition() {
        let m = fig_example();
        for e in m.events() {
            let mut counts = [0usize; 8];
            for f in m.events() {
                counts[m.relation_of(e, f).index()] += 1;
            }
            assert_eq!(counts.iter().sum::<usize>(), m.event_count());
            assert_eq!(counts[Rel::Eq.index()], 1);
        }
    }

    #[test]
    fn relation_inverse_consistency() {
        let m = fig_example();
        for e in m.events() {
            for f in m.events() {
                assert_eq!(m.relation_of(e, f), m.relation_of(f, e).inverse());
            }
        }
    }

    #[test]
    fn example_order_facts() {
        let m = fig_example();
        // (p,3) is parallel to (q,6) but below (q,8).
        assert_eq!(m.relation_of(EventId::new(0, 3), EventId::new(2, 6)), Rel::Par);
        assert!(m.leq(EventId::new(0, 3), EventId::new(2, 8)));
        // f = (p,4) -> e = (p,5), and g = (q,2) sends the message e receives.
        assert_eq!(m.relation_of(EventId::new(0, 4), EventId::new(0, 5)), Rel::Proc);
        assert_eq!(m.relation_of(EventId::new(2, 2), EventId::new(0, 5)), Rel::Msg);
    }

    #[test]
    fn example_event_type() {
        let m = fig_example();
        let sig = &m.sig;
        let lab = |s: &str| ExtLabel::plain(sig.label_index(s).unwrap());
        let t = m.event_type(EventId::new(0, 5));
        let set = |pairs: &[(usize, &str)]| -> BTreeSet<(u16, ExtLabel)> {
            pairs.iter().map(|&(p, l)| (p as u16, lab(l))).collect()
        };
        assert_eq!(t[Rel::Eq.index()], set(&[(0, "a")]));
        assert_eq!(t[Rel::Proc.index()], set(&[(0, "a")]));
        assert_eq!(t[Rel::ProcInv.index()], set(&[(0, "a")]));
        assert_eq!(t[Rel::Msg.index()], set(&[]));
        assert_eq!(t[Rel::MsgInv.index()], set(&[(2, "b")]));
        assert_eq!(
            t[Rel::LessInv.index()],
            set(&[(0, "a"), (0, "c"), (1, "a"), (2, "a"), (2, "b")])
        );
    }

    #[test]
    fn mirror_involution_and_type_duality() {
        let m = fig_example();
        assert_eq!(m.mirror().mirror(), m);
        let mm = m.mirror();
        for e in m.events() {
            let t = m.event_type(e);
            let tm = mm.event_type(m.mirror_event(e));
            for rel in Rel::ALL {
                assert_eq!(t[rel.index()], tm[rel.inverse().index()], "{e} {rel:?}");
            }
        }
    }

    #[test]
    fn parallel_block_is_three_intervals() {
        let m = fig_example();
        for e in m.events() {
            for p in 0..3 {
                let (past_end, par_end) = m.parallel_block(p, e);
                assert!(past_end <= par_end && par_end <= m.words[p].len());
                for i in 1..=m.words[p].len() {
                    let f = EventId::new(p, i);
                    if f == e {
                        continue;
                    }
                    let below = f != e && m.leq(f, e);
                    let above = f != e && m.leq(e, f);
                    if i <= past_end {
                        assert!(below);
                    } else if i <= par_end {
                        assert!(!below && !above || f == e);
                    } else {
                        assert!(above);
                    }
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let m = fig_example();
        let j = m.to_json();
        let back = Msc::from_json(&j).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let mut j = fig_example().to_json();
        j.as_object_mut().unwrap().insert("extra".into(), serde_json::json!(1));
        assert!(Msc::from_json(&j).is_err());
    }

    #[test]
    fn json_requires_bits_when_setvars_positive() {
        let j = serde_json::json!({
            "processes": ["p"], "alphabet": ["a"], "setvars": 1,
            "words": {"p": ["a"]}, "messages": []
        });
        assert!(matches!(Msc::from_json(&j), Err(MscJsonError::BitWidth(..))));
        let j = serde_json::json!({
            "processes": ["p"], "alphabet": ["a"], "setvars": 1,
            "words": {"p": [["a", [1]]]}, "messages": []
        });
        let m = Msc::from_json(&j).unwrap();
        assert!(m.label(EventId::new(0, 1)).bit(0));
    }
}
