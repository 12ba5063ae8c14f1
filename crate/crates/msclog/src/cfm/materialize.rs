//! Converting composed machines into explicit transition tables.
//!
//! The conversion explores, per process, the reachable product states of all
//! primitives under every letter and event shape, resolving per-event track
//! values and restriction predicates on the spot (a track value is chosen
//! anew at each event, so it folds into transition nondeterminism). Message
//! payloads are discovered by a fixpoint: receives are expanded against
//! every payload any send has offered so far.
//!
//! Mirrored primitives are first materialised forward in isolation and then
//! reversed as tables (transitions flipped, sends and receives swapped,
//! initial and accepting rectangles swapped); the reversed table is wired
//! back in as an ordinary forward primitive.

use super::explicit::{Action, ActionKind, ExplicitCfm, ProcMachine, Rect, Transition};
use super::{AccRect, Cfm, InitRect, Offer, Prim, PrimInst, Shape, StateSet, Val};
use crate::msc::{ExtLabel, Signature};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

/// Size caps for materialisation.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_states_per_process: usize,
    pub max_messages: usize,
    pub max_transitions: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_states_per_process: 4096, max_messages: 4096, max_transitions: 500_000 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MaterializeError {
    #[error("state count on process {process} exceeds the cap of {cap}")]
    TooManyStates { process: usize, cap: usize },
    #[error("message alphabet exceeds the cap of {cap}")]
    TooManyMessages { cap: usize },
    #[error("transition count exceeds the cap of {cap}")]
    TooManyTransitions { cap: usize },
}

/// A primitive stored as a finite, track-annotated transition table.
/// Produced by forward exploration; reversible in place.
struct TablePrim {
    name: String,
    arity: usize,
    /// Per process: interned states.
    states: Vec<Vec<Val>>,
    /// Per process: (src, letter, kind, peer, payload, tracks, dst), with
    /// state ids into `states`.
    transitions: Vec<Vec<TableEdge>>,
    initial_rects: Vec<Vec<Vec<usize>>>,
    accepting_rects: Vec<Vec<Vec<usize>>>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct TableEdge {
    src: usize,
    letter: ExtLabel,
    kind: ActionKind,
    peer: usize,
    /// Payload for sends and receives; `Unit` for internal.
    payload: Val,
    tracks: Vec<Val>,
    dst: usize,
}

impl TablePrim {
    /// Explores the reachable per-process behaviour of `prim` (forward).
    fn explore(
        prim: &dyn Prim,
        sig: &Signature,
        limits: &Limits,
    ) -> Result<TablePrim, MaterializeError> {
        let np = sig.processes.len();
        let letters = sig.ext_labels();
        let mut states: Vec<Vec<Val>> = vec![Vec::new(); np];
        let mut ids: Vec<HashMap<Val, usize>> = vec![HashMap::new(); np];
        let mut edges: Vec<HashSet<TableEdge>> = vec![HashSet::new(); np];
        let mut payloads: BTreeSet<Val> = BTreeSet::new();

        let initial_rects = prim.initial_rects();
        for rect in &initial_rects {
            for (p, choices) in rect.iter().enumerate() {
                for v in choices {
                    intern(v, p, &mut states, &mut ids, limits)?;
                }
            }
        }

        // Fixpoint: expanding states can surface new payloads, which can in
        // turn enable new receive transitions anywhere.
        loop {
            let before = (states.iter().map(|s| s.len()).sum::<usize>(), payloads.len());
            for p in 0..np {
                let mut si = 0;
                while si < states[p].len() {
                    let state = states[p][si].clone();
                    for &letter in &letters {
                        for q in 0..np {
                            if q == p {
                                continue;
                            }
                            for offer in prim.offers(p, &state, letter, Shape::Send { to: q }) {
                                let payload = offer.msg.clone().unwrap_or(Val::Unit);
                                payloads.insert(payload.clone());
                                if payloads.len() > limits.max_messages {
                                    return Err(MaterializeError::TooManyMessages {
                                        cap: limits.max_messages,
                                    });
                                }
                                let dst = intern(&offer.next, p, &mut states, &mut ids, limits)?;
                                edges[p].insert(TableEdge {
                                    src: si,
                                    letter,
                                    kind: ActionKind::Send,
                                    peer: q,
                                    payload,
                                    tracks: offer.tracks,
                                    dst,
                                });
                            }
                            let candidates: Vec<Val> = payloads.iter().cloned().collect();
                            for payload in candidates {
                                for offer in
                                    prim.offers(p, &state, letter, Shape::Recv { from: q, msg: &payload })
                                {
                                    let dst =
                                        intern(&offer.next, p, &mut states, &mut ids, limits)?;
                                    edges[p].insert(TableEdge {
                                        src: si,
                                        letter,
                                        kind: ActionKind::Recv,
                                        peer: q,
                                        payload: payload.clone(),
                                        tracks: offer.tracks,
                                        dst,
                                    });
                                }
                            }
                        }
                        for offer in prim.offers(p, &state, letter, Shape::Internal) {
                            let dst = intern(&offer.next, p, &mut states, &mut ids, limits)?;
                            edges[p].insert(TableEdge {
                                src: si,
                                letter,
                                kind: ActionKind::Internal,
                                peer: usize::MAX,
                                payload: Val::Unit,
                                tracks: offer.tracks,
                                dst,
                            });
                        }
                    }
                    si += 1;
                }
            }
            let after = (states.iter().map(|s| s.len()).sum::<usize>(), payloads.len());
            if after == before {
                break;
            }
        }

        let to_rect = |rect: &InitRect| -> Vec<Vec<usize>> {
            rect.iter()
                .enumerate()
                .map(|(p, choices)| choices.iter().map(|v| ids[p][v]).collect())
                .collect()
        };
        let to_acc_rect = |rect: &AccRect| -> Vec<Vec<usize>> {
            rect.iter()
                .enumerate()
                .map(|(p, set)| match set {
                    StateSet::Any => (0..states[p].len()).collect(),
                    StateSet::List(vs) => vs
                        .iter()
                        .filter_map(|v| ids[p].get(v).copied())
                        .collect(),
                    StateSet::Pred(f) => states[p]
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| f(v))
                        .map(|(i, _)| i)
                        .collect(),
                })
                .collect()
        };
        Ok(TablePrim {
            name: prim.name(),
            arity: prim.track_arity(),
            transitions: edges.into_iter().map(|s| s.into_iter().collect()).collect(),
            initial_rects: initial_rects.iter().map(to_rect).collect(),
            accepting_rects: prim.accepting_rects().iter().map(to_acc_rect).collect(),
            states,
        })
    }

    /// Reverses the table: the result accepts a chart (with its track
    /// annotation) iff the original accepts the mirror image.
    fn reverse(mut self) -> TablePrim {
        for edges in &mut self.transitions {
            for e in edges.iter_mut() {
                std::mem::swap(&mut e.src, &mut e.dst);
                e.kind = match e.kind {
                    ActionKind::Internal => ActionKind::Internal,
                    ActionKind::Send => ActionKind::Recv,
                    ActionKind::Recv => ActionKind::Send,
                };
            }
        }
        std::mem::swap(&mut self.initial_rects, &mut self.accepting_rects);
        self.name = format!("reverse({})", self.name);
        self
    }
}

fn intern(
    v: &Val,
    p: usize,
    states: &mut [Vec<Val>],
    ids: &mut [HashMap<Val, usize>],
    limits: &Limits,
) -> Result<usize, MaterializeError> {
    if let Some(&i) = ids[p].get(v) {
        return Ok(i);
    }
    let i = states[p].len();
    if i >= limits.max_states_per_process {
        return Err(MaterializeError::TooManyStates {
            process: p,
            cap: limits.max_states_per_process,
        });
    }
    states[p].push(v.clone());
    ids[p].insert(v.clone(), i);
    Ok(i)
}

impl Prim for TablePrim {
    fn name(&self) -> String {
        self.name.clone()
    }
    fn track_arity(&self) -> usize {
        self.arity
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        self.initial_rects
            .iter()
            .map(|rect| {
                rect.iter()
                    .enumerate()
                    .map(|(p, set)| set.iter().map(|&s| self.states[p][s].clone()).collect())
                    .collect()
            })
            .collect()
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        self.accepting_rects
            .iter()
            .map(|rect| {
                rect.iter()
                    .enumerate()
                    .map(|(p, set)| {
                        StateSet::List(set.iter().map(|&s| self.states[p][s].clone()).collect())
                    })
                    .collect()
            })
            .collect()
    }
    fn offers(&self, p: usize, state: &Val, letter: ExtLabel, shape: Shape<'_>) -> Vec<Offer> {
        let Some(src) = self.state_id(p, state) else {
            return Vec::new();
        };
        self.transitions[p]
            .iter()
            .filter(|e| e.src == src && e.letter == letter)
            .filter(|e| match shape {
                Shape::Internal => e.kind == ActionKind::Internal,
                Shape::Send { to } => e.kind == ActionKind::Send && e.peer == to,
                Shape::Recv { from, msg } => {
                    e.kind == ActionKind::Recv && e.peer == from && e.payload == *msg
                }
            })
            .map(|e| Offer {
                tracks: e.tracks.clone(),
                msg: (e.kind == ActionKind::Send).then(|| e.payload.clone()),
                next: self.states[p][e.dst].clone(),
            })
            .collect()
    }

}

impl TablePrim {
    fn state_id(&self, p: usize, state: &Val) -> Option<usize> {
        self.states[p].iter().position(|v| v == state)
    }
}

impl Cfm {
    /// Builds the explicit transition-table form of this machine.
    ///
    /// Fails with a descriptive error when the table would exceed `limits`
    /// (many composed machines are exponentially larger in table form).
    pub fn materialize(&self, limits: &Limits) -> Result<ExplicitCfm, MaterializeError> {
        // Step 1: replace mirrored primitives by reversed tables.
        let mut forward: Vec<PrimInst> = Vec::new();
        for inst in &self.prims {
            if inst.reversed {
                let table = TablePrim::explore(&*inst.prim, &self.sig, limits)?.reverse();
                forward.push(PrimInst::new(Arc::new(table), false, inst.tracks.clone()));
            } else {
                forward.push(inst.clone());
            }
        }

        // Step 2: joint exploration of the product, resolving tracks and
        // restrictions per event.
        let sig = &self.sig;
        let np = sig.processes.len();
        let letters = sig.ext_labels();
        let k = forward.len();
        let mut states: Vec<Vec<Vec<Val>>> = vec![Vec::new(); np]; // [p][id] -> tuple
        let mut ids: Vec<HashMap<Vec<Val>, usize>> = vec![HashMap::new(); np];
        let mut transitions: Vec<HashSet<(usize, Action, usize)>> = vec![HashSet::new(); np];
        let mut msg_ids: BTreeMap<Vec<Val>, usize> = BTreeMap::new();
        let mut msgs: Vec<Vec<Val>> = Vec::new();

        let mut intern_tuple = |tuple: Vec<Val>,
                                p: usize,
                                states: &mut Vec<Vec<Vec<Val>>>,
                                ids: &mut Vec<HashMap<Vec<Val>, usize>>|
         -> Result<usize, MaterializeError> {
            if let Some(&i) = ids[p].get(&tuple) {
                return Ok(i);
            }
            let i = states[p].len();
            if i >= limits.max_states_per_process {
                return Err(MaterializeError::TooManyStates {
                    process: p,
                    cap: limits.max_states_per_process,
                });
            }
            ids[p].insert(tuple.clone(), i);
            states[p].push(tuple);
            Ok(i)
        };

        // Seed with every instantiation of every initial-rectangle product.
        let init_rects: Vec<Vec<InitRect>> =
            forward.iter().map(|inst| inst.prim.initial_rects()).collect();
        let mut initial_rects_ids: Vec<Rect> = Vec::new();
        let mut combo = vec![0usize; k];
        'rects: loop {
            // rect combination `combo`
            let mut rect_ids: Rect = Vec::with_capacity(np);
            for p in 0..np {
                let mut tuples: Vec<Vec<Val>> = vec![Vec::new()];
                for (j, rects) in init_rects.iter().enumerate() {
                    let choices = &rects[combo[j]][p];
                    let mut next = Vec::new();
                    for t in &tuples {
                        for c in choices {
                            let mut t2 = t.clone();
                            t2.push(c.clone());
                            next.push(t2);
                        }
                    }
                    tuples = next;
                }
                let mut cell = Vec::new();
                for t in tuples {
                    cell.push(intern_tuple(t, p, &mut states, &mut ids)?);
                }
                rect_ids.push(cell);
            }
            initial_rects_ids.push(rect_ids);
            // odometer over rect choices
            let mut j = 0;
            loop {
                if j == k {
                    break 'rects;
                }
                combo[j] += 1;
                if combo[j] < init_rects[j].len() {
                    break;
                }
                combo[j] = 0;
                j += 1;
            }
        }

        // Fixpoint over states and message payload tuples.
        loop {
            let before =
                (states.iter().map(|s| s.len()).sum::<usize>(), msgs.len());
            for p in 0..np {
                let mut si = 0;
                while si < states[p].len() {
                    let tuple = states[p][si].clone();
                    for &letter in &letters {
                        // Internal.
                        self.expand_joint(
                            &forward, p, si, &tuple, letter, JointShape::Internal, &mut states,
                            &mut ids, &mut transitions, &mut msg_ids, &mut msgs, limits,
                            &mut intern_tuple,
                        )?;
                        for q in 0..np {
                            if q == p {
                                continue;
                            }
                            self.expand_joint(
                                &forward, p, si, &tuple, letter, JointShape::Send { to: q },
                                &mut states, &mut ids, &mut transitions, &mut msg_ids, &mut msgs,
                                limits, &mut intern_tuple,
                            )?;
                            for mi in 0..msgs.len() {
                                self.expand_joint(
                                    &forward, p, si, &tuple, letter,
                                    JointShape::Recv { from: q, msg: mi }, &mut states, &mut ids,
                                    &mut transitions, &mut msg_ids, &mut msgs, limits,
                                    &mut intern_tuple,
                                )?;
                            }
                        }
                    }
                    si += 1;
                }
            }
            let after =
                (states.iter().map(|s| s.len()).sum::<usize>(), msgs.len());
            if after == before {
                break;
            }
        }

        // Accepting rectangles: every combination of per-primitive rects,
        // intersected with the reachable product states.
        let acc_rects: Vec<Vec<AccRect>> =
            forward.iter().map(|inst| inst.prim.accepting_rects()).collect();
        let mut accepting_rect_ids: Vec<Rect> = Vec::new();
        if acc_rects.iter().all(|r| !r.is_empty()) {
            let mut combo = vec![0usize; k];
            'acc: loop {
                let mut rect_ids: Rect = Vec::with_capacity(np);
                for p in 0..np {
                    let cell: Vec<usize> = states[p]
                        .iter()
                        .enumerate()
                        .filter(|(_, tuple)| {
                            tuple
                                .iter()
                                .enumerate()
                                .all(|(j, v)| acc_rects[j][combo[j]][p].contains(v))
                        })
                        .map(|(i, _)| i)
                        .collect();
                    rect_ids.push(cell);
                }
                accepting_rect_ids.push(rect_ids);
                let mut j = 0;
                loop {
                    if j == k {
                        break 'acc;
                    }
                    combo[j] += 1;
                    if combo[j] < acc_rects[j].len() {
                        break;
                    }
                    combo[j] = 0;
                    j += 1;
                }
            }
        }

        let procs: Vec<ProcMachine> = (0..np)
            .map(|p| {
                let state_names =
                    states[p].iter().map(|tuple| name_tuple(tuple)).collect::<Vec<_>>();
                let initial: BTreeSet<usize> = initial_rects_ids
                    .iter()
                    .flat_map(|rect| rect[p].iter().copied())
                    .collect();
                ProcMachine {
                    states: state_names,
                    initial: initial.into_iter().collect(),
                    transitions: transitions[p]
                        .iter()
                        .map(|(src, action, dst)| Transition {
                            src: *src,
                            action: action.clone(),
                            dst: *dst,
                        })
                        .collect(),
                }
            })
            .collect();

        let mut out = ExplicitCfm {
            sig: sig.clone(),
            messages: msgs.iter().map(|t| name_tuple(t)).collect(),
            procs,
            global_initial: initial_rects_ids,
            global_accepting: accepting_rect_ids,
        };
        if self.bits_hidden && sig.setvars > 0 {
            out = out.project_bits(sig.setvars);
        }
        out.prune();
        Ok(out)
    }

    /// Expands one (state, letter, shape) cell of the joint product.
    #[allow(clippy::too_many_arguments)]
    fn expand_joint(
        &self,
        forward: &[PrimInst],
        p: usize,
        si: usize,
        tuple: &[Val],
        letter: ExtLabel,
        shape: JointShape,
        states: &mut Vec<Vec<Vec<Val>>>,
        ids: &mut Vec<HashMap<Vec<Val>, usize>>,
        transitions: &mut [HashSet<(usize, Action, usize)>],
        msg_ids: &mut BTreeMap<Vec<Val>, usize>,
        msgs: &mut Vec<Vec<Val>>,
        limits: &Limits,
        intern_tuple: &mut impl FnMut(
            Vec<Val>,
            usize,
            &mut Vec<Vec<Vec<Val>>>,
            &mut Vec<HashMap<Vec<Val>, usize>>,
        ) -> Result<usize, MaterializeError>,
    ) -> Result<(), MaterializeError> {
        // Per-primitive offers under this shape.
        let k = forward.len();
        let mut per_prim: Vec<Vec<Offer>> = Vec::with_capacity(k);
        for (j, inst) in forward.iter().enumerate() {
            let sh = match shape {
                JointShape::Internal => Shape::Internal,
                JointShape::Send { to } => Shape::Send { to },
                JointShape::Recv { from, msg } => {
                    let payload = &msgs[msg];
                    Shape::Recv { from, msg: &payload[j] }
                }
            };
            // For receives the borrow of msgs[msg] must not outlive this
            // iteration; offers clones what it needs.
            let offers = match sh {
                Shape::Recv { from, .. } => {
                    let payload = match shape {
                        JointShape::Recv { msg, .. } => msgs[msg][j].clone(),
                        _ => unreachable!(),
                    };
                    inst.prim.offers(p, &tuple[j], letter, Shape::Recv { from, msg: &payload })
                }
                other => inst.prim.offers(p, &tuple[j], letter, other),
            };
            if offers.is_empty() {
                return Ok(());
            }
            per_prim.push(offers);
        }
        // Cartesian product with track unification and restriction checks.
        let mut choice = vec![0usize; k];
        'combos: loop {
            let mut track_vals: Vec<Option<Val>> = vec![None; self.track_count];
            let mut consistent = true;
            for j in 0..k {
                let offer = &per_prim[j][choice[j]];
                for (slot, v) in offer.tracks.iter().enumerate() {
                    let t = forward[j].tracks[slot];
                    match &track_vals[t] {
                        None => track_vals[t] = Some(v.clone()),
                        Some(w) if w == v => {}
                        Some(_) => {
                            consistent = false;
                            break;
                        }
                    }
                }
                if !consistent {
                    break;
                }
            }
            if consistent && !self.keeps.is_empty() {
                let row: Vec<Val> = track_vals
                    .iter()
                    .map(|v| v.clone().unwrap_or(Val::Unit))
                    .collect();
                consistent = self.keeps.iter().all(|keep| keep(p, letter, &row));
            }
            if consistent {
                let next: Vec<Val> =
                    (0..k).map(|j| per_prim[j][choice[j]].next.clone()).collect();
                let dst = intern_tuple(next, p, states, ids)?;
                let action = match shape {
                    JointShape::Internal => {
                        Action { kind: ActionKind::Internal, letter, msg: None, peer: None }
                    }
                    JointShape::Send { to } => {
                        let payload: Vec<Val> = (0..k)
                            .map(|j| {
                                per_prim[j][choice[j]].msg.clone().unwrap_or(Val::Unit)
                            })
                            .collect();
                        let mi = match msg_ids.get(&payload) {
                            Some(&mi) => mi,
                            None => {
                                let mi = msgs.len();
                                if mi >= limits.max_messages {
                                    return Err(MaterializeError::TooManyMessages {
                                        cap: limits.max_messages,
                                    });
                                }
                                msg_ids.insert(payload.clone(), mi);
                                msgs.push(payload);
                                mi
                            }
                        };
                        Action { kind: ActionKind::Send, letter, msg: Some(mi), peer: Some(to) }
                    }
                    JointShape::Recv { from, msg } => {
                        Action { kind: ActionKind::Recv, letter, msg: Some(msg), peer: Some(from) }
                    }
                };
                transitions[p].insert((si, action, dst));
                let total: usize = transitions.iter().map(|t| t.len()).sum();
                if total > limits.max_transitions {
                    return Err(MaterializeError::TooManyTransitions {
                        cap: limits.max_transitions,
                    });
                }
            }
            // odometer
            let mut j = 0;
            loop {
                if j == k {
                    break 'combos;
                }
                choice[j] += 1;
                if choice[j] < per_prim[j].len() {
                    break;
                }
                choice[j] = 0;
                j += 1;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum JointShape {
    Internal,
    Send { to: usize },
    Recv { from: usize, msg: usize },
}

fn name_tuple(tuple: &[Val]) -> String {
    if tuple.len() == 1 {
        format!("{:?}", tuple[0])
    } else {
        format!("{:?}", Val::seq(tuple.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::oracle::{all_mscs, Bounds};

    fn agree(lazy: &Cfm, table: &ExplicitCfm, sig: &Arc<Signature>, maxev: usize) {
        for m in all_mscs(sig, Bounds { max_events_per_process: maxev }) {
            assert_eq!(table.accepts(&m), lazy.accepts(&m), "disagree on {:?}", m.words);
        }
    }

    #[test]
    fn word_automaton_materialises() {
        let sig = Signature::new(["p"], ["a", "b"], 0);
        let lazy = Cfm::from_prim(sig.clone(), Arc::new(EvenA(1)));
        let table = lazy.materialize(&Limits::default()).unwrap();
        table.validate().unwrap();
        agree(&lazy, &table, &sig, 4);
        assert_eq!(table.minimal_dfa_states(), 2);
    }

    #[test]
    fn payload_machine_materialises() {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        let lazy = Cfm::from_prim(sig.clone(), Arc::new(EchoLabel));
        let table = lazy.materialize(&Limits::default()).unwrap();
        table.validate().unwrap();
        agree(&lazy, &table, &sig, 2);
    }

    #[test]
    fn mirrored_machine_materialises_via_table_reversal() {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        let lazy = Cfm::from_prim(sig.clone(), Arc::new(EndsWithB(2))).mirror();
        let table = lazy.materialize(&Limits::default()).unwrap();
        table.validate().unwrap();
        agree(&lazy, &table, &sig, 2);
    }

    #[test]
    fn tracks_and_restriction_fold_into_transitions() {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        let lazy = Cfm::from_prim(sig.clone(), Arc::new(LabelFlag))
            .restrict(Arc::new(|_p, _l, tracks: &[Val]| tracks[0] == Val::Bool(true)));
        let table = lazy.materialize(&Limits::default()).unwrap();
        table.validate().unwrap();
        agree(&lazy, &table, &sig, 2);
    }

    #[test]
    fn hidden_bits_project_away() {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        let lazy = Cfm::from_prim(sig.with_setvars(1), Arc::new(BitIsA)).hide_bits();
        let table = lazy.materialize(&Limits::default()).unwrap();
        table.validate().unwrap();
        assert_eq!(table.sig.setvars, 0);
        agree(&lazy, &table, &sig, 2);
    }

    #[test]
    fn caps_are_enforced() {
        let sig = Signature::new(["p"], ["a", "b"], 0);
        let lazy = Cfm::from_prim(sig.clone(), Arc::new(EvenA(1)));
        let tight = Limits { max_states_per_process: 1, ..Limits::default() };
        assert!(matches!(
            lazy.materialize(&tight),
            Err(MaterializeError::TooManyStates { .. })
        ));
    }
}

