//! Machines that annotate every event with one component of its event type.
//!
//! For a fixed binary relation over events, the component is the set of
//! (process, letter) pairs realised by the events related to the annotated
//! one. [`relation_machine`] returns, per relation, a machine with a single
//! annotation track that accepts a chart together with an assignment iff the
//! assignment maps each event to exactly that set.
//!
//! Forward relations and their inverses are built directly; the
//! strictly-below machine is a deterministic subset construction that counts
//! occurrences of each (process, letter) pair up to two (enough to decide
//! whether a pair survives the exclusion of an event's immediate
//! predecessors), and the strictly-above machine is its mirror image.

use crate::cfm::{AccRect, Cfm, InitRect, Offer, Prim, Shape, StateSet, Val};
use crate::msc::{ExtLabel, Rel, Signature};
use std::collections::BTreeSet;
use std::sync::Arc;

/// Encodes a letter (with its set-variable bits) as a machine value.
pub fn letter_val(l: ExtLabel) -> Val {
    Val::seq([Val::int(l.label as i64), Val::int(l.bits as i64)])
}

/// Encodes a (process, letter) pair as a machine value.
pub fn pair_val(process: usize, l: ExtLabel) -> Val {
    Val::seq([Val::int(process as i64), letter_val(l)])
}

/// Encodes one event-type component as a machine value.
pub fn type_val<'a>(pairs: impl IntoIterator<Item = &'a (u16, ExtLabel)>) -> Val {
    Val::set(pairs.into_iter().map(|&(p, l)| pair_val(p as usize, l)))
}

/// The machine annotating each event with one component of its type.
pub fn relation_machine(sig: &Arc<Signature>, rel: Rel) -> Cfm {
    let sig = sig.clone();
    match rel {
        Rel::Eq => Cfm::from_prim(sig.clone(), Arc::new(SelfLabel { sig })),
        Rel::Proc => Cfm::from_prim(sig.clone(), Arc::new(ProcSucc { sig })),
        Rel::Msg => Cfm::from_prim(sig.clone(), Arc::new(MsgSucc { sig })),
        Rel::ProcInv => Cfm::from_prim(sig.clone(), Arc::new(ProcPred { sig })),
        Rel::MsgInv => Cfm::from_prim(sig.clone(), Arc::new(MsgPred { sig })),
        Rel::LessInv => Cfm::from_prim(sig.clone(), Arc::new(CausalPast { sig })),
        Rel::Less => Cfm::from_prim(sig.clone(), Arc::new(CausalPast { sig })).mirror(),
        Rel::Par => crate::parallelcfm::parallel_machine(&sig),
    }
}

fn single_state_rects(np: usize) -> (Vec<InitRect>, Vec<AccRect>) {
    (vec![vec![vec![Val::Unit]; np]], vec![vec![StateSet::Any; np]])
}

/// Annotates each event with the singleton of its own (process, letter).
struct SelfLabel {
    sig: Arc<Signature>,
}

impl Prim for SelfLabel {
    fn name(&self) -> String {
        "self-label".into()
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        single_state_rects(self.sig.processes.len()).0
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        single_state_rects(self.sig.processes.len()).1
    }
    fn offers(&self, p: usize, _state: &Val, letter: ExtLabel, _shape: Shape<'_>) -> Vec<Offer> {
        vec![Offer::new(Val::Unit).tracked(vec![Val::set([pair_val(p, letter)])])]
    }
}

/// Annotates each event with the label of its process successor (if any).
///
/// The state is the label promised for the next event on the process, or
/// `Unit` for the promise that no event follows. Every state is initial (the
/// first event's label is guessed up front); only the fulfilled no-successor
/// promise is accepting.
struct ProcSucc {
    sig: Arc<Signature>,
}

impl ProcSucc {
    fn all_states(&self) -> Vec<Val> {
        std::iter::once(Val::Unit)
            .chain(self.sig.ext_labels().into_iter().map(letter_val))
            .collect()
    }
}

impl Prim for ProcSucc {
    fn name(&self) -> String {
        "proc-successor".into()
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        vec![vec![self.all_states(); self.sig.processes.len()]]
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        vec![vec![StateSet::List(vec![Val::Unit]); self.sig.processes.len()]]
    }
    fn offers(&self, p: usize, state: &Val, letter: ExtLabel, _shape: Shape<'_>) -> Vec<Offer> {
        if *state != letter_val(letter) {
            return Vec::new(); // wrong promise, or no event was promised
        }
        let mut out = vec![Offer::new(Val::Unit).tracked(vec![Val::set([])])];
        for b in self.sig.ext_labels() {
            out.push(Offer::new(letter_val(b)).tracked(vec![Val::set([pair_val(p, b)])]));
        }
        out
    }
}

/// Annotates each send with the label of the matching receive; everything
/// else with the empty set. The guessed receive label rides the message and
/// is checked on arrival.
struct MsgSucc {
    sig: Arc<Signature>,
}

impl Prim for MsgSucc {
    fn name(&self) -> String {
        "msg-successor".into()
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        single_state_rects(self.sig.processes.len()).0
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        single_state_rects(self.sig.processes.len()).1
    }
    fn offers(&self, _p: usize, _state: &Val, letter: ExtLabel, shape: Shape<'_>) -> Vec<Offer> {
        match shape {
            Shape::Internal => vec![Offer::new(Val::Unit).tracked(vec![Val::set([])])],
            Shape::Send { to } => self
                .sig
                .ext_labels()
                .into_iter()
                .map(|b| {
                    Offer::with_msg(Val::Unit, letter_val(b))
                        .tracked(vec![Val::set([pair_val(to, b)])])
                })
                .collect(),
            Shape::Recv { msg, .. } => {
                if *msg == letter_val(letter) {
                    vec![Offer::new(Val::Unit).tracked(vec![Val::set([])])]
                } else {
                    Vec::new()
                }
            }
        }
    }
}

/// Annotates each event with the label of its process predecessor (if any).
/// Deterministic: the state is the label of the last event read.
struct ProcPred {
    sig: Arc<Signature>,
}

impl Prim for ProcPred {
    fn name(&self) -> String {
        "proc-predecessor".into()
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        single_state_rects(self.sig.processes.len()).0
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        single_state_rects(self.sig.processes.len()).1
    }
    fn offers(&self, p: usize, state: &Val, letter: ExtLabel, _shape: Shape<'_>) -> Vec<Offer> {
        let annotation = match state {
            Val::Unit => Val::set([]),
            prev => Val::set([Val::seq([Val::int(p as i64), prev.clone()])]),
        };
        vec![Offer::new(letter_val(letter)).tracked(vec![annotation])]
    }
}

/// Annotates each receive with the label of the matching send; everything
/// else with the empty set. Sends carry their own label as the payload.
struct MsgPred {
    sig: Arc<Signature>,
}

impl Prim for MsgPred {
    fn name(&self) -> String {
        "msg-predecessor".into()
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        single_state_rects(self.sig.processes.len()).0
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        single_state_rects(self.sig.processes.len()).1
    }
    fn offers(&self, _p: usize, _state: &Val, letter: ExtLabel, shape: Shape<'_>) -> Vec<Offer> {
        match shape {
            Shape::Internal => vec![Offer::new(Val::Unit).tracked(vec![Val::set([])])],
            Shape::Send { .. } => vec![Offer::with_msg(Val::Unit, letter_val(letter))
                .tracked(vec![Val::set([])])],
            Shape::Recv { from, msg } => vec![Offer::new(Val::Unit)
                .tracked(vec![Val::set([Val::seq([Val::int(from as i64), msg.clone()])])])],
        }
    }
}

/// Annotates each event `e` with the labels of the events strictly below it,
/// excluding its immediate process and message predecessors.
///
/// The state carries, for each (process, letter) pair, whether a first or a
/// later occurrence has been seen in the causal past (a count capped at
/// two), plus the label of the previous local event. "First occurrence" is a
/// property of the event itself — all events sharing a (process, letter)
/// pair live on one process and are totally ordered — so the capped counts
/// of two causal pasts merge by plain set union. A pair equal to an
/// immediate predecessor's label survives the exclusion iff its count
/// reaches two. Messages carry the sender's updated count set and label, so
/// the whole machine is deterministic.
struct CausalPast {
    sig: Arc<Signature>,
}

/// Count-set entry: ((process, letter), seen-before flag as count 1 or 2).
fn mu_val(p: usize, l: ExtLabel, count: i64) -> Val {
    Val::seq([Val::int(p as i64), letter_val(l), Val::int(count)])
}

fn decode_set(v: &Val) -> &BTreeSet<Val> {
    match v {
        Val::Set(s) => s,
        other => panic!("expected a set state component, got {other:?}"),
    }
}

fn decode_seq(v: &Val) -> &[Val] {
    match v {
        Val::Seq(s) => s,
        other => panic!("expected a sequence value, got {other:?}"),
    }
}

impl CausalPast {
    /// The single transition out of `state` reading `letter` under `shape`.
    fn step(&self, p: usize, state: &Val, letter: ExtLabel, shape: &Shape<'_>) -> Offer {
        let parts = decode_seq(state);
        let local_mu = decode_set(&parts[0]);
        let prev = &parts[1];

        // Capped counts for the strict causal past of this event.
        let mut past_mu: BTreeSet<Val> = local_mu.clone();
        let mut msg_pred: Option<Val> = None; // (process, letter) of the send
        if let Shape::Recv { from, msg } = shape {
            let payload = decode_seq(msg);
            past_mu.extend(decode_set(&payload[0]).iter().cloned());
            msg_pred = Some(Val::seq([Val::int(*from as i64), payload[1].clone()]));
        }

        // Labels in the past; predecessors' labels survive only when a
        // second occurrence guarantees a non-predecessor witness.
        let mut annotation: BTreeSet<Val> = BTreeSet::new();
        for entry in &past_mu {
            let e = decode_seq(entry);
            annotation.insert(Val::seq([e[0].clone(), e[1].clone()]));
        }
        let twice = |pair: &Val| {
            let e = decode_seq(pair);
            past_mu.contains(&Val::seq([e[0].clone(), e[1].clone(), Val::int(2)]))
        };
        if *prev != Val::Unit {
            let pair = Val::seq([Val::int(p as i64), prev.clone()]);
            if !twice(&pair) {
                annotation.remove(&pair);
            }
        }
        if let Some(pair) = msg_pred {
            if !twice(&pair) {
                annotation.remove(&pair);
            }
        }

        // Record this event and move on.
        let seen_before = past_mu
            .iter()
            .any(|entry| decode_seq(entry)[0] == Val::int(p as i64) && decode_seq(entry)[1] == letter_val(letter));
        let mut next_mu = past_mu;
        next_mu.insert(mu_val(p, letter, if seen_before { 2 } else { 1 }));
        let next_mu = Val::Set(Arc::new(next_mu));
        let next = Val::seq([next_mu.clone(), letter_val(letter)]);

        let msg = matches!(shape, Shape::Send { .. })
            .then(|| Val::seq([next_mu, letter_val(letter)]));
        Offer { tracks: vec![Val::Set(Arc::new(annotation))], msg, next }
    }
}

impl Prim for CausalPast {
    fn name(&self) -> String {
        "causal-past".into()
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        let empty = Val::seq([Val::set([]), Val::Unit]);
        vec![vec![vec![empty]; self.sig.processes.len()]]
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        vec![vec![StateSet::Any; self.sig.processes.len()]]
    }
    fn offers(&self, p: usize, state: &Val, letter: ExtLabel, shape: Shape<'_>) -> Vec<Offer> {
        vec![self.step(p, state, letter, &shape)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfm::materialize::Limits;
    use crate::msc::{EventId, Msc};
    use crate::oracle::{all_mscs, Bounds};

    fn expected_assignment(m: &Msc, rel: Rel) -> Vec<Vec<Val>> {
        m.events()
            .map(|e| vec![type_val(&m.event_type(e)[rel.index()])])
            .collect()
    }

    fn check_relation(sig: &Arc<Signature>, rel: Rel, maxev: usize) {
        let machine = relation_machine(sig, rel);
        for m in all_mscs(sig, Bounds { max_events_per_process: maxev }) {
            let got = machine.accepted_assignments(&m);
            assert_eq!(
                got,
                vec![expected_assignment(&m, rel)],
                "relation {rel:?} on {:?} {:?}",
                m.words,
                m.messages
            );
        }
    }

    #[test]
    fn each_relation_machine_computes_exactly_the_type_component() {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        for rel in [Rel::Eq, Rel::Proc, Rel::Msg, Rel::ProcInv, Rel::MsgInv, Rel::LessInv, Rel::Less]
        {
            check_relation(&sig, rel, 3);
        }
    }

    #[test]
    fn causal_past_handles_three_processes() {
        // The capped-count merge only becomes interesting when two causal
        // paths into an event are incomparable, which needs three processes.
        let sig = Signature::new(["p", "q", "r"], ["a"], 0);
        check_relation(&sig, Rel::LessInv, 2);
    }

    #[test]
    fn figure_event_annotation_matches_hand_computed_type() {
        let m = crate::msc::fig_example();
        let e = EventId::new(0, 5);
        let machine = relation_machine(&m.sig, Rel::LessInv);
        let got = machine.accepted_assignments(&m);
        assert_eq!(got.len(), 1);
        let gid = m.causality().gid(e);
        assert_eq!(got[0][gid][0], type_val(&m.event_type(e)[Rel::LessInv.index()]));
    }

    #[test]
    fn state_and_message_counts_are_tight() {
        let sig = Signature::new(["p", "q"], ["a", "b"], 0);
        let n = sig.ext_label_count();
        let limits = Limits::default();
        let table = |rel: Rel| relation_machine(&sig, rel).materialize(&limits).unwrap();

        let eq = table(Rel::Eq);
        assert!(eq.procs.iter().all(|m| m.states.len() == 1));
        assert_eq!(eq.messages.len(), 1);

        for rel in [Rel::Proc, Rel::ProcInv] {
            let t = table(rel);
            assert!(t.procs.iter().all(|m| m.states.len() == n + 1), "{rel:?}");
        }

        for rel in [Rel::Msg, Rel::MsgInv] {
            let t = table(rel);
            assert!(t.procs.iter().all(|m| m.states.len() == 1), "{rel:?}");
            assert_eq!(t.messages.len(), n, "{rel:?}");
        }
    }
}
