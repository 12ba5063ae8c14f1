//! Explicit (transition-table) machines: the serialisable form.
//!
//! JSON layout:
//!
//! ```json
//! {
//!   "processes": ["p","q"],
//!   "alphabet": ["a","b"],
//!   "setvars": 0,
//!   "messages": ["m"],
//!   "machines": {
//!     "p": { "states": ["s0","s1"], "initial": ["s0"],
//!            "transitions": [ { "src": "s0",
//!                               "action": { "kind": "send", "label": "a",
//!                                            "bits": [], "msg": "m", "peer": "q" },
//!                               "dst": "s1" } ] },
//!     "q": { ... }
//!   },
//!   "globalInitial":   [ [["s0"], ["t0"]] ],
//!   "globalAccepting": [ [["s1"], ["t0","t1"]] ]
//! }
//! ```
//!
//! Global initial and accepting sets are unions of rectangles (one state
//! list per process). Unknown keys are rejected.

use crate::msc::{Causality, ExtLabel, Msc, MsgDir, Signature};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Internal,
    Send,
    Recv,
}

/// A transition label: letter plus optional message exchange.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Action {
    pub kind: ActionKind,
    pub letter: ExtLabel,
    /// Message id for sends/receives.
    pub msg: Option<usize>,
    /// The other endpoint's process for sends/receives.
    pub peer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub src: usize,
    pub action: Action,
    pub dst: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProcMachine {
    pub states: Vec<String>,
    pub initial: Vec<usize>,
    pub transitions: Vec<Transition>,
}

/// A state rectangle: one list of state ids per process.
pub type Rect = Vec<Vec<usize>>;

/// An explicit communicating machine with finite transition tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitCfm {
    pub sig: Arc<Signature>,
    pub messages: Vec<String>,
    pub procs: Vec<ProcMachine>,
    pub global_initial: Vec<Rect>,
    pub global_accepting: Vec<Rect>,
}

/// An accepting run: for each dense event id, the index of the executed
/// transition in its process's table, plus the chosen start rectangle
/// instantiation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub start: Vec<usize>,
    pub transitions: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CfmError {
    #[error("invalid machine: {0}")]
    Invalid(String),
    #[error("JSON syntax: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("unknown name {0:?}")]
    UnknownName(String),
}

impl ExplicitCfm {
    /// Structural validation: id ranges, peers, non-empty initial sets, and
    /// global-initial rectangles compatible with the per-process initials.
    pub fn validate(&self) -> Result<(), CfmError> {
        let np = self.sig.processes.len();
        let err = |m: String| Err(CfmError::Invalid(m));
        if self.procs.len() != np {
            return err("machine count differs from process count".into());
        }
        for (p, pm) in self.procs.iter().enumerate() {
            if pm.initial.is_empty() {
                return err(format!("process {p} has no initial states"));
            }
            for &s in &pm.initial {
                if s >= pm.states.len() {
                    return err(format!("initial state id {s} out of range"));
                }
            }
            for t in &pm.transitions {
                if t.src >= pm.states.len() || t.dst >= pm.states.len() {
                    return err(format!("transition state id out of range on process {p}"));
                }
                if (t.action.letter.label as usize) >= self.sig.labels.len() {
                    return err("transition letter out of alphabet".into());
                }
                if t.action.letter.bits >> self.sig.setvars != 0 {
                    return err("transition bits exceed set-variable width".into());
                }
                match t.action.kind {
                    ActionKind::Internal => {
                        if t.action.msg.is_some() || t.action.peer.is_some() {
                            return err("internal action with message or peer".into());
                        }
                    }
                    _ => {
                        let Some(m) = t.action.msg else {
                            return err("communication action without message".into());
                        };
                        if m >= self.messages.len() {
                            return err("message id out of range".into());
                        }
                        let Some(q) = t.action.peer else {
                            return err("communication action without peer".into());
                        };
                        if q >= np {
                            return err("peer out of range".into());
                        }
                        if q == p {
                            return err(format!("process {p} communicates with itself"));
                        }
                    }
                }
            }
        }
        if self.global_initial.is_empty() {
            return err("no global initial rectangle".into());
        }
        for (name, rects) in [
            ("initial", &self.global_initial),
            ("accepting", &self.global_accepting),
        ] {
            for rect in rects {
                if rect.len() != np {
                    return err(format!("global {name} rectangle width mismatch"));
                }
                for (p, states) in rect.iter().enumerate() {
                    for &s in states {
                        if s >= self.procs[p].states.len() {
                            return err(format!("global {name} state id out of range"));
                        }
                        if name == "initial" && !self.procs[p].initial.contains(&s) {
                            return err(format!(
                                "global initial rectangle uses non-initial state on process {p}"
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------
    // Acceptance: backtracking run search over a topological order, with
    // memoization of failed search states.
    // -----------------------------------------------------------------

    pub fn accepts(&self, m: &Msc) -> bool {
        self.find_run(m).is_some()
    }

    /// Searches for an accepting run; events are processed in a fixed
    /// topological linearisation, the search state being the per-process
    /// current states plus the message chosen on each in-flight edge.
    pub fn find_run(&self, m: &Msc) -> Option<Run> {
        assert_eq!(m.sig.processes, self.sig.processes, "process mismatch");
        assert_eq!(m.sig.labels, self.sig.labels, "alphabet mismatch");
        assert_eq!(m.sig.setvars, self.sig.setvars, "set-variable width mismatch");
        let caus = m.causality();
        let n = m.event_count();
        let mut edge_of = vec![usize::MAX; n];
        for (k, (s, r)) in m.messages.iter().enumerate() {
            edge_of[caus.gid(*s)] = k;
            edge_of[caus.gid(*r)] = k;
        }
        let mut failed: HashSet<(usize, Vec<usize>, Vec<Option<usize>>)> = HashSet::new();
        let mut chosen = vec![usize::MAX; n];
        // Start from every instantiation of every initial rectangle.
        for rect in &self.global_initial {
            let mut tuple = vec![0usize; self.procs.len()];
            if self.search_rect(m, &caus, &edge_of, rect, 0, &mut tuple, &mut failed, &mut chosen)
            {
                let start = tuple;
                return Some(Run { start, transitions: chosen });
            }
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn search_rect(
        &self,
        m: &Msc,
        caus: &Causality,
        edge_of: &[usize],
        rect: &Rect,
        p: usize,
        tuple: &mut Vec<usize>,
        failed: &mut HashSet<(usize, Vec<usize>, Vec<Option<usize>>)>,
        chosen: &mut Vec<usize>,
    ) -> bool {
        if p == rect.len() {
            let mut states = tuple.clone();
            let mut inflight: Vec<Option<usize>> = vec![None; m.messages.len()];
            return self.search(m, caus, edge_of, 0, &mut states, &mut inflight, failed, chosen);
        }
        for &s in &rect[p] {
            tuple[p] = s;
            if self.search_rect(m, caus, edge_of, rect, p + 1, tuple, failed, chosen) {
                return true;
            }
        }
        false
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        m: &Msc,
        caus: &Causality,
        edge_of: &[usize],
        i: usize,
        states: &mut Vec<usize>,
        inflight: &mut Vec<Option<usize>>,
        failed: &mut HashSet<(usize, Vec<usize>, Vec<Option<usize>>)>,
        chosen: &mut Vec<usize>,
    ) -> bool {
        if i == m.event_count() {
            return self
                .global_accepting
                .iter()
                .any(|rect| rect.iter().enumerate().all(|(p, set)| set.contains(&states[p])));
        }
        let key = (i, states.clone(), inflight.clone());
        if failed.contains(&key) {
            return false;
        }
        let gid = caus.topo[i];
        let e = caus.event(gid);
        let p = e.process as usize;
        let letter = m.label(e);
        for (ti, t) in self.procs[p].transitions.iter().enumerate() {
            if t.src != states[p] || t.action.letter != letter {
                continue;
            }
            let ok = match caus.partner[gid] {
                None => t.action.kind == ActionKind::Internal,
                Some((g, MsgDir::Send)) => {
                    t.action.kind == ActionKind::Send
                        && t.action.peer == Some(caus.event(g).process as usize)
                }
                Some((g, MsgDir::Recv)) => {
                    t.action.kind == ActionKind::Recv
                        && t.action.peer == Some(caus.event(g).process as usize)
                        && t.action.msg == inflight[edge_of[gid]]
                }
            };
            if !ok {
                continue;
            }
            let saved_state = states[p];
            states[p] = t.dst;
            let edge = edge_of[gid];
            let saved_flight = if edge != usize::MAX {
                let old = inflight[edge];
                inflight[edge] = match t.action.kind {
                    ActionKind::Send => t.action.msg,
                    // Normalise consumed edges so memo keys coincide.
                    _ => None,
                };
                Some(old)
            } else {
                None
            };
            chosen[gid] = ti;
            if self.search(m, caus, edge_of, i + 1, states, inflight, failed, chosen) {
                return true;
            }
            states[p] = saved_state;
            if let Some(old) = saved_flight {
                inflight[edge] = old;
            }
        }
        failed.insert(key);
        false
    }

    /// Re-validates a run returned by [`find_run`]: start states lie in some
    /// global initial rectangle, every event executes a transition with the
    /// right letter and shape chaining from the previous state, message
    /// payloads agree across each edge, and the final states are accepting.
    ///
    /// [`find_run`]: ExplicitCfm::find_run
    pub fn validate_run(&self, m: &Msc, run: &Run) -> bool {
        let caus = m.causality();
        let n = m.event_count();
        if run.transitions.len() != n {
            return false;
        }
        let in_rect = |rects: &[Rect], states: &[usize]| {
            rects
                .iter()
                .any(|rect| rect.iter().enumerate().all(|(p, set)| set.contains(&states[p])))
        };
        if !in_rect(&self.global_initial, &run.start) {
            return false;
        }
        let mut states = run.start.clone();
        let mut sent: HashMap<usize, Option<usize>> = HashMap::new();
        let mut edge_of = vec![usize::MAX; n];
        for (k, (s, r)) in m.messages.iter().enumerate() {
            edge_of[caus.gid(*s)] = k;
            edge_of[caus.gid(*r)] = k;
        }
        for &gid in &caus.topo {
            let e = caus.event(gid);
            let p = e.process as usize;
            let Some(t) = self.procs[p].transitions.get(run.transitions[gid]) else {
                return false;
            };
            if t.src != states[p] || t.action.letter != m.label(e) {
                return false;
            }
            let shape_ok = match caus.partner[gid] {
                None => t.action.kind == ActionKind::Internal,
                Some((g, MsgDir::Send)) => {
                    sent.insert(edge_of[gid], t.action.msg);
                    t.action.kind == ActionKind::Send
                        && t.action.peer == Some(caus.event(g).process as usize)
                }
                Some((g, MsgDir::Recv)) => {
                    t.action.kind == ActionKind::Recv
                        && t.action.peer == Some(caus.event(g).process as usize)
                        && Some(&t.action.msg) == sent.get(&edge_of[gid])
                }
            };
            if !shape_ok {
                return false;
            }
            states[p] = t.dst;
        }
        in_rect(&self.global_accepting, &states)
    }

    // -----------------------------------------------------------------
    // Combinators. Every combinator ends with a reachability prune.
    // -----------------------------------------------------------------

    /// Synchronised product: accepts the intersection of the two languages.
    /// Message ids become pairs; states become per-process pairs.
    pub fn product(&self, other: &ExplicitCfm) -> ExplicitCfm {
        assert_eq!(self.sig, other.sig, "product over different alphabets");
        let nm = other.messages.len();
        let messages: Vec<String> = self
            .messages
            .iter()
            .flat_map(|a| other.messages.iter().map(move |b| format!("{a}*{b}")))
            .collect();
        let mut procs = Vec::new();
        for (pa, pb) in self.procs.iter().zip(&other.procs) {
            let nb = pb.states.len();
            let states: Vec<String> = pa
                .states
                .iter()
                .flat_map(|a| pb.states.iter().map(move |b| format!("{a}*{b}")))
                .collect();
            let initial = pa
                .initial
                .iter()
                .flat_map(|&a| pb.initial.iter().map(move |&b| a * nb + b))
                .collect();
            let mut transitions = Vec::new();
            for ta in &pa.transitions {
                for tb in &pb.transitions {
                    if ta.action.kind != tb.action.kind
                        || ta.action.letter != tb.action.letter
                        || ta.action.peer != tb.action.peer
                    {
                        continue;
                    }
                    let msg = match (ta.action.msg, tb.action.msg) {
                        (Some(x), Some(y)) => Some(x * nm + y),
                        (None, None) => None,
                        _ => continue,
                    };
                    transitions.push(Transition {
                        src: ta.src * nb + tb.src,
                        action: Action { kind: ta.action.kind, letter: ta.action.letter, msg, peer: ta.action.peer },
                        dst: ta.dst * nb + tb.dst,
                    });
                }
            }
            procs.push(ProcMachine { states, initial, transitions });
        }
        let pair_rects = |ra: &[Rect], rb: &[Rect]| -> Vec<Rect> {
            let mut out = Vec::new();
            for a in ra {
                for b in rb {
                    out.push(
                        a.iter()
                            .zip(b)
                            .zip(&other.procs)
                            .map(|((sa, sb), pb)| {
                                sa.iter()
                                    .flat_map(|&x| sb.iter().map(move |&y| x * pb.states.len() + y))
                                    .collect()
                            })
                            .collect(),
                    );
                }
            }
            out
        };
        let mut out = ExplicitCfm {
            sig: self.sig.clone(),
            messages,
            procs,
            global_initial: pair_rects(&self.global_initial, &other.global_initial),
            global_accepting: pair_rects(&self.global_accepting, &other.global_accepting),
        };
        out.prune();
        out
    }

    /// Adds `extra` set-variable bit tracks, letting every transition accept
    /// any value on them: the language becomes the preimage under erasure.
    pub fn extend_bits(&self, extra: usize) -> ExplicitCfm {
        let mut out = self.clone();
        out.sig = Arc::new(Signature {
            processes: self.sig.processes.clone(),
            labels: self.sig.labels.clone(),
            setvars: self.sig.setvars + extra,
        });
        for pm in &mut out.procs {
            let old = std::mem::take(&mut pm.transitions);
            for t in old {
                for pattern in 0u32..1 << extra {
                    let mut t2 = t.clone();
                    t2.action.letter.bits |= pattern << self.sig.setvars;
                    pm.transitions.push(t2);
                }
            }
        }
        out
    }

    /// Erases the top `drop` set-variable bit tracks from every transition
    /// letter: the language becomes the image under erasure.
    pub fn project_bits(&self, drop: usize) -> ExplicitCfm {
        assert!(drop <= self.sig.setvars);
        let keep = self.sig.setvars - drop;
        let mut out = self.clone();
        out.sig = Arc::new(Signature {
            processes: self.sig.processes.clone(),
            labels: self.sig.labels.clone(),
            setvars: keep,
        });
        for pm in &mut out.procs {
            for t in &mut pm.transitions {
                t.action.letter.bits &= (1 << keep) - 1;
            }
            pm.transitions.dedup();
        }
        out
    }

    /// The machine of mirror images: transitions reversed, sends and
    /// receives swapped, initial and accepting rectangles swapped.
    pub fn mirror_cfm(&self) -> ExplicitCfm {
        let mut procs = Vec::new();
        for (p, pm) in self.procs.iter().enumerate() {
            let transitions = pm
                .transitions
                .iter()
                .map(|t| Transition {
                    src: t.dst,
                    action: Action {
                        kind: match t.action.kind {
                            ActionKind::Internal => ActionKind::Internal,
                            ActionKind::Send => ActionKind::Recv,
                            ActionKind::Recv => ActionKind::Send,
                        },
                        letter: t.action.letter,
                        msg: t.action.msg,
                        peer: t.action.peer,
                    },
                    dst: t.src,
                })
                .collect();
            // New initials: every state usable by an accepting rectangle.
            let initial: BTreeSet<usize> = self
                .global_accepting
                .iter()
                .flat_map(|rect| rect[p].iter().copied())
                .collect();
            procs.push(ProcMachine {
                states: pm.states.clone(),
                initial: initial.into_iter().collect(),
                transitions,
            });
        }
        let mut out = ExplicitCfm {
            sig: self.sig.clone(),
            messages: self.messages.clone(),
            procs,
            global_initial: self.global_accepting.clone(),
            global_accepting: self.global_initial.clone(),
        };
        out.prune();
        out
    }

    /// Removes transitions failing `keep`, optionally relabelling the kept
    /// ones (return `Some(new_action)` to keep with a new label).
    pub fn restrict_transitions(
        &self,
        keep: impl Fn(usize, &Action) -> Option<Action>,
    ) -> ExplicitCfm {
        let mut out = self.clone();
        for (p, pm) in out.procs.iter_mut().enumerate() {
            pm.transitions = pm
                .transitions
                .iter()
                .filter_map(|t| {
                    keep(p, &t.action).map(|action| Transition { src: t.src, action, dst: t.dst })
                })
                .collect();
        }
        out.prune();
        out
    }

    /// Drops states not reachable from the initial states of their process
    /// under any sequence of actions (a per-process overapproximation of
    /// global reachability; language-preserving).
    pub fn prune(&mut self) {
        for (p, pm) in self.procs.iter_mut().enumerate() {
            let mut reach: Vec<bool> = vec![false; pm.states.len()];
            let mut stack: Vec<usize> = pm.initial.clone();
            for &s in &stack {
                reach[s] = true;
            }
            while let Some(s) = stack.pop() {
                for t in &pm.transitions {
                    if t.src == s && !reach[t.dst] {
                        reach[t.dst] = true;
                        stack.push(t.dst);
                    }
                }
            }
            let mut remap: Vec<Option<usize>> = vec![None; pm.states.len()];
            let mut states = Vec::new();
            for (s, name) in pm.states.iter().enumerate() {
                if reach[s] {
                    remap[s] = Some(states.len());
                    states.push(name.clone());
                }
            }
            pm.states = states;
            pm.initial = pm.initial.iter().filter_map(|&s| remap[s]).collect();
            pm.transitions = pm
                .transitions
                .iter()
                .filter_map(|t| {
                    Some(Transition {
                        src: remap[t.src]?,
                        action: t.action.clone(),
                        dst: remap[t.dst]?,
                    })
                })
                .collect();
            for rects in [&mut self.global_initial, &mut self.global_accepting] {
                for rect in rects.iter_mut() {
                    rect[p] = rect[p].iter().filter_map(|&s| remap[s]).collect();
                }
            }
        }
        // A rectangle with an empty face denotes no tuples at all.
        self.global_initial.retain(|rect| rect.iter().all(|s| !s.is_empty()));
        self.global_accepting.retain(|rect| rect.iter().all(|s| !s.is_empty()));
    }

    pub fn state_count(&self) -> usize {
        self.procs.iter().map(|pm| pm.states.len()).sum()
    }

    pub fn transition_count(&self) -> usize {
        self.procs.iter().map(|pm| pm.transitions.len()).sum()
    }

    // -----------------------------------------------------------------
    // Single-process machines as word automata.
    // -----------------------------------------------------------------

    /// For a single-process machine: the number of states of the minimal
    /// complete DFA of its word language (subset construction followed by
    /// partition refinement; includes a sink class when one is reachable).
    pub fn minimal_dfa_states(&self) -> usize {
        assert_eq!(self.procs.len(), 1, "word-automaton view needs one process");
        let pm = &self.procs[0];
        let letters: Vec<ExtLabel> = self.sig.ext_labels();
        let initial: BTreeSet<usize> = self
            .global_initial
            .iter()
            .flat_map(|rect| rect[0].iter().copied())
            .collect();
        let accepting: BTreeSet<usize> = self
            .global_accepting
            .iter()
            .flat_map(|rect| rect[0].iter().copied())
            .collect();
        // Subset construction.
        let mut ids: HashMap<BTreeSet<usize>, usize> = HashMap::new();
        let mut subsets: Vec<BTreeSet<usize>> = Vec::new();
        let mut delta: Vec<Vec<usize>> = Vec::new();
        let mut acc: Vec<bool> = Vec::new();
        let intern = |s: BTreeSet<usize>,
                          subsets: &mut Vec<BTreeSet<usize>>,
                          acc: &mut Vec<bool>,
                          ids: &mut HashMap<BTreeSet<usize>, usize>|
         -> usize {
            if let Some(&i) = ids.get(&s) {
                return i;
            }
            let i = subsets.len();
            acc.push(s.iter().any(|q| accepting.contains(q)));
            ids.insert(s.clone(), i);
            subsets.push(s);
            i
        };
        let start = intern(initial, &mut subsets, &mut acc, &mut ids);
        let mut work = vec![start];
        while let Some(i) = work.pop() {
            if delta.len() <= i {
                delta.resize(i + 1, Vec::new());
            }
            let mut row = Vec::with_capacity(letters.len());
            for &l in &letters {
                let next: BTreeSet<usize> = pm
                    .transitions
                    .iter()
                    .filter(|t| subsets[i].contains(&t.src) && t.action.letter == l)
                    .map(|t| t.dst)
                    .collect();
                let j = intern(next, &mut subsets, &mut acc, &mut ids);
                if j >= delta.len() {
                    work.push(j);
                    delta.resize(j + 1, Vec::new());
                }
                row.push(j);
            }
            delta[i] = row;
        }
        // Moore partition refinement.
        let n = subsets.len();
        let mut class: Vec<usize> = acc.iter().map(|&a| a as usize).collect();
        loop {
            let mut sig_of: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
            let mut next: Vec<usize> = vec![0; n];
            for i in 0..n {
                let key = (class[i], delta[i].iter().map(|&j| class[j]).collect());
                let c = sig_of.len();
                next[i] = *sig_of.entry(key).or_insert(c);
            }
            if next == class {
                return class.iter().collect::<BTreeSet<_>>().len();
            }
            class = next;
        }
    }

    // -----------------------------------------------------------------
    // Serialisation.
    // -----------------------------------------------------------------

    pub fn to_json(&self) -> serde_json::Value {
        let bits_vec = |l: ExtLabel| -> Vec<u8> {
            (0..self.sig.setvars).map(|i| l.bit(i) as u8).collect()
        };
        let machines: BTreeMap<String, MachineJson> = self
            .procs
            .iter()
            .enumerate()
            .map(|(p, pm)| {
                let states = pm.states.clone();
                let transitions = pm
                    .transitions
                    .iter()
                    .map(|t| TransitionJson {
                        src: pm.states[t.src].clone(),
                        action: ActionJson {
                            kind: match t.action.kind {
                                ActionKind::Internal => "internal",
                                ActionKind::Send => "send",
                                ActionKind::Recv => "recv",
                            }
                            .into(),
                            label: self.sig.labels[t.action.letter.label as usize].clone(),
                            bits: bits_vec(t.action.letter),
                            msg: t.action.msg.map(|m| self.messages[m].clone()),
                            peer: t.action.peer.map(|q| self.sig.processes[q].clone()),
                        },
                        dst: pm.states[t.dst].clone(),
                    })
                    .collect();
                (
                    self.sig.processes[p].clone(),
                    MachineJson {
                        states,
                        initial: pm.initial.iter().map(|&s| pm.states[s].clone()).collect(),
                        transitions,
                    },
                )
            })
            .collect();
        let rects = |rects: &[Rect]| -> Vec<Vec<Vec<String>>> {
            rects
                .iter()
                .map(|rect| {
                    rect.iter()
                        .enumerate()
                        .map(|(p, set)| {
                            set.iter().map(|&s| self.procs[p].states[s].clone()).collect()
                        })
                        .collect()
                })
                .collect()
        };
        serde_json::to_value(CfmJson {
            processes: self.sig.processes.clone(),
            alphabet: self.sig.labels.clone(),
            setvars: self.sig.setvars,
            messages: self.messages.clone(),
            machines,
            global_initial: rects(&self.global_initial),
            global_accepting: rects(&self.global_accepting),
        })
        .expect("serialisation cannot fail")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<ExplicitCfm, CfmError> {
        let raw: CfmJson = serde_json::from_value(v.clone())?;
        let sig = Signature::new(raw.processes.clone(), raw.alphabet.clone(), raw.setvars);
        let mut procs = Vec::new();
        for pname in &raw.processes {
            let Some(mj) = raw.machines.get(pname) else {
                return Err(CfmError::Invalid(format!("no machine for process {pname:?}")));
            };
            let state_id = |s: &String| -> Result<usize, CfmError> {
                mj.states
                    .iter()
                    .position(|t| t == s)
                    .ok_or_else(|| CfmError::UnknownName(s.clone()))
            };
            let mut transitions = Vec::new();
            for tj in &mj.transitions {
                let label = sig
                    .label_index(&tj.action.label)
                    .ok_or_else(|| CfmError::UnknownName(tj.action.label.clone()))?;
                if tj.action.bits.len() != raw.setvars {
                    return Err(CfmError::Invalid("bits width mismatch".into()));
                }
                let mut bits = 0u32;
                for (i, &b) in tj.action.bits.iter().enumerate() {
                    if b > 1 {
                        return Err(CfmError::Invalid("bits must be 0/1".into()));
                    }
                    bits |= (b as u32) << i;
                }
                let kind = match tj.action.kind.as_str() {
                    "internal" => ActionKind::Internal,
                    "send" => ActionKind::Send,
                    "recv" => ActionKind::Recv,
                    k => return Err(CfmError::Invalid(format!("unknown action kind {k:?}"))),
                };
                let msg = tj
                    .action
                    .msg
                    .as_ref()
                    .map(|m| {
                        raw.messages
                            .iter()
                            .position(|x| x == m)
                            .ok_or_else(|| CfmError::UnknownName(m.clone()))
                    })
                    .transpose()?;
                let peer = tj
                    .action
                    .peer
                    .as_ref()
                    .map(|q| sig.proc_index(q).ok_or_else(|| CfmError::UnknownName(q.clone())))
                    .transpose()?;
                transitions.push(Transition {
                    src: state_id(&tj.src)?,
                    action: Action { kind, letter: ExtLabel { label: label as u16, bits }, msg, peer },
                    dst: state_id(&tj.dst)?,
                });
            }
            procs.push(ProcMachine {
                states: mj.states.clone(),
                initial: mj.initial.iter().map(state_id).collect::<Result<_, _>>()?,
                transitions,
            });
        }
        let parse_rects = |rects: &[Vec<Vec<String>>]| -> Result<Vec<Rect>, CfmError> {
            rects
                .iter()
                .map(|rect| {
                    if rect.len() != procs.len() {
                        return Err(CfmError::Invalid("rectangle width mismatch".into()));
                    }
                    rect.iter()
                        .enumerate()
                        .map(|(p, set)| {
                            set.iter()
                                .map(|s| {
                                    procs[p]
                                        .states
                                        .iter()
                                        .position(|t| t == s)
                                        .ok_or_else(|| CfmError::UnknownName(s.clone()))
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        let global_initial = parse_rects(&raw.global_initial)?;
        let global_accepting = parse_rects(&raw.global_accepting)?;
        let out = ExplicitCfm {
            sig,
            messages: raw.messages,
            procs,
            global_initial,
            global_accepting,
        };
        out.validate()?;
        Ok(out)
    }

    /// GraphViz rendering: one cluster per process, transitions labelled
    /// `a!m→q` / `a?m←q` / `a` (with `/bits` when set variables exist).
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph cfm {\n  rankdir=LR;\n");
        for (p, pm) in self.procs.iter().enumerate() {
            let pname = &self.sig.processes[p];
            writeln!(out, "  subgraph cluster_{p} {{").unwrap();
            writeln!(out, "    label=\"{pname}\";").unwrap();
            for (s, name) in pm.states.iter().enumerate() {
                let shape = if pm.initial.contains(&s) { "doublecircle" } else { "circle" };
                writeln!(out, "    n{p}_{s} [label=\"{name}\", shape={shape}];").unwrap();
            }
            for t in &pm.transitions {
                let mut label = self.sig.labels[t.action.letter.label as usize].clone();
                if self.sig.setvars > 0 {
                    label.push('/');
                    for i in 0..self.sig.setvars {
                        label.push(if t.action.letter.bit(i) { '1' } else { '0' });
                    }
                }
                match t.action.kind {
                    ActionKind::Internal => {}
                    ActionKind::Send => {
                        write!(
                            label,
                            "!{}→{}",
                            self.messages[t.action.msg.unwrap()],
                            self.sig.processes[t.action.peer.unwrap()]
                        )
                        .unwrap();
                    }
                    ActionKind::Recv => {
                        write!(
                            label,
                            "?{}←{}",
                            self.messages[t.action.msg.unwrap()],
                            self.sig.processes[t.action.peer.unwrap()]
                        )
                        .unwrap();
                    }
                }
                writeln!(out, "    n{p}_{} -> n{p}_{} [label=\"{label}\"];", t.src, t.dst)
                    .unwrap();
            }
            writeln!(out, "  }}").unwrap();
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CfmJson {
    processes: Vec<String>,
    alphabet: Vec<String>,
    setvars: usize,
    messages: Vec<String>,
    machines: BTreeMap<String, MachineJson>,
    #[serde(rename = "globalInitial")]
    global_initial: Vec<Vec<Vec<String>>>,
    #[serde(rename = "globalAccepting")]
    global_accepting: Vec<Vec<Vec<String>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MachineJson {
    states: Vec<String>,
    initial: Vec<String>,
    transitions: Vec<TransitionJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionJson {
    src: String,
    action: ActionJson,
    dst: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionJson {
    kind: String,
    label: String,
    #[serde(default)]
    bits: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    msg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peer: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{all_mscs, Bounds};

    /// Two-state automaton over one process: even number of `a`s.
    fn even_a() -> ExplicitCfm {
        let sig = Signature::new(["p"], ["a", "b"], 0);
        let a = ExtLabel::plain(0);
        let b = ExtLabel::plain(1);
        let internal = |l: ExtLabel| Action { kind: ActionKind::Internal, letter: l, msg: None, peer: None };
        ExplicitCfm {
            sig,
            messages: vec![],
            procs: vec![ProcMachine {
                states: vec!["even".into(), "odd".into()],
                initial: vec![0],
                transitions: vec![
                    Transition { src: 0, action: internal(a), dst: 1 },
                    Transition { src: 1, action: internal(a), dst: 0 },
                    Transition { src: 0, action: internal(b), dst: 0 },
                    Transition { src: 1, action: internal(b), dst: 1 },
                ],
            }],
            global_initial: vec![vec![vec![0]]],
            global_accepting: vec![vec![vec![0]]],
        }
    }

    /// Two processes: p sends each letter's name, q must receive matching
    /// letters (message per label).
    fn echo() -> ExplicitCfm {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        let mk = |kind, l: usize, msg, peer| Action {
            kind,
            letter: ExtLabel::plain(l),
            msg: Some(msg),
            peer: Some(peer),
        };
        let int = |l: usize| Action { kind: ActionKind::Internal, letter: ExtLabel::plain(l), msg: None, peer: None };
        let trans = |acts: Vec<Action>| {
            acts.into_iter()
                .map(|action| Transition { src: 0, action, dst: 0 })
                .collect::<Vec<_>>()
        };
        ExplicitCfm {
            sig,
            messages: vec!["ma".into(), "mb".into()],
            procs: vec![
                ProcMachine {
                    states: vec!["s".into()],
                    initial: vec![0],
                    transitions: trans(vec![
                        mk(ActionKind::Send, 0, 0, 1),
                        mk(ActionKind::Send, 1, 1, 1),
                        mk(ActionKind::Recv, 0, 0, 1),
                        mk(ActionKind::Recv, 1, 1, 1),
                        int(0),
                        int(1),
                    ]),
                },
                ProcMachine {
                    states: vec!["t".into()],
                    initial: vec![0],
                    transitions: trans(vec![
                        mk(ActionKind::Send, 0, 0, 0),
                        mk(ActionKind::Send, 1, 1, 0),
                        mk(ActionKind::Recv, 0, 0, 0),
                        mk(ActionKind::Recv, 1, 1, 0),
                        int(0),
                        int(1),
                    ]),
                },
            ],
            global_initial: vec![vec![vec![0], vec![0]]],
            global_accepting: vec![vec![vec![0], vec![0]]],
        }
    }

    fn word(sig: &Arc<Signature>, w: &str) -> Msc {
        Msc::build(sig, &[w], &[])
    }

    #[test]
    fn finite_automaton_membership() {
        let a = even_a();
        assert!(a.accepts(&word(&a.sig, "a a")));
        assert!(!a.accepts(&word(&a.sig, "a")));
        assert!(a.accepts(&word(&a.sig, "b a b a")));
    }

    #[test]
    fn run_witnesses_validate() {
        let a = echo();
        for m in all_mscs(&a.sig, Bounds { max_events_per_process: 2 }) {
            if let Some(run) = a.find_run(&m) {
                assert!(a.validate_run(&m, &run), "invalid witness on {:?}", m.words);
            } else {
                let expected = m
                    .messages
                    .iter()
                    .all(|(s, r)| m.label(*s).label == m.label(*r).label);
                assert!(!expected, "run missed on {:?}", m.words);
            }
        }
    }

    #[test]
    fn product_is_intersection() {
        // even-a  ×  "no b at all" automaton.
        let a = even_a();
        let sig = a.sig.clone();
        let no_b = ExplicitCfm {
            sig: sig.clone(),
            messages: vec![],
            procs: vec![ProcMachine {
                states: vec!["s".into()],
                initial: vec![0],
                transitions: vec![Transition {
                    src: 0,
                    action: Action {
                        kind: ActionKind::Internal,
                        letter: ExtLabel::plain(0),
                        msg: None,
                        peer: None,
                    },
                    dst: 0,
                }],
            }],
            global_initial: vec![vec![vec![0]]],
            global_accepting: vec![vec![vec![0]]],
        };
        let both = a.product(&no_b);
        both.validate().unwrap();
        for m in all_mscs(&sig, Bounds { max_events_per_process: 4 }) {
            assert_eq!(both.accepts(&m), a.accepts(&m) && no_b.accepts(&m));
        }
    }

    #[test]
    fn mirror_matches_mirrored_charts() {
        let a = echo();
        let mir = a.mirror_cfm();
        mir.validate().unwrap();
        let back = mir.mirror_cfm();
        for m in all_mscs(&a.sig, Bounds { max_events_per_process: 2 }) {
            assert_eq!(mir.accepts(&m.mirror()), a.accepts(&m));
            assert_eq!(back.accepts(&m), a.accepts(&m));
        }
    }

    #[test]
    fn extend_then_project_is_identity() {
        let a = even_a();
        let ext = a.extend_bits(1);
        assert_eq!(ext.sig.setvars, 1);
        let back = ext.project_bits(1);
        for m in all_mscs(&a.sig, Bounds { max_events_per_process: 3 }) {
            assert_eq!(back.accepts(&m), a.accepts(&m));
        }
    }

    #[test]
    fn restriction_extremes() {
        let a = echo();
        let same = a.restrict_transitions(|_, act| Some(act.clone()));
        let none = a.restrict_transitions(|_, _| None);
        for m in all_mscs(&a.sig, Bounds { max_events_per_process: 2 }) {
            assert_eq!(same.accepts(&m), a.accepts(&m));
            if m.event_count() > 0 {
                assert!(!none.accepts(&m));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        for a in [even_a(), echo(), echo().mirror_cfm()] {
            let v = a.to_json();
            let b = ExplicitCfm::from_json(&v).unwrap();
            assert_eq!(a, b);
        }
        // Unknown keys are rejected.
        let mut v = even_a().to_json();
        v.as_object_mut().unwrap().insert("extra".into(), 1.into());
        assert!(ExplicitCfm::from_json(&v).is_err());
    }

    #[test]
    fn validation_rejects_self_channel() {
        let mut a = echo();
        a.procs[0].transitions[0].action.peer = Some(0);
        assert!(a.validate().is_err());
    }

    #[test]
    fn dot_mentions_message_syntax() {
        let dot = echo().to_dot();
        assert!(dot.contains("a!ma→q"));
        assert!(dot.contains("a?ma←p"));
        assert!(dot.contains("cluster_0"));
    }

    #[test]
    fn minimal_dfa_of_even_a() {
        assert_eq!(even_a().minimal_dfa_states(), 2);
        // Redundant product with itself still minimises to 2 states.
        let squared = even_a().product(&even_a());
        assert_eq!(squared.minimal_dfa_states(), 2);
    }
}
