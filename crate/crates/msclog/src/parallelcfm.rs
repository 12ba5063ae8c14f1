//! Machine annotating each event with the labels of the events parallel
//! (causally incomparable) to it.
//!
//! The machine is assembled from one independent group per triple
//! `(p, q, a)` of two distinct processes and a letter. Each group exposes a
//! single public boolean track γ that must be 1 on a `p`-event iff the event
//! is parallel to some `a`-labeled `q`-event, and carries two hidden mark
//! tracks used as certificates:
//!
//! * a **path cover** primitive accepts iff the 0-labeled `p`-events and all
//!   `a`-labeled `q`-events lie on a single path — a token walked along the
//!   chart — which certifies the 0 side (nothing on the path is parallel to
//!   anything else on it);
//! * the 1 side is certified by two mark tracks, each tracing a family of
//!   disjoint `p`-intervals paired with marked `a`-labeled `q`-events such
//!   that every marked interval is exactly the set of `p`-events parallel to
//!   its `q`-event. Each family is checked by a forward and a mirrored copy
//!   of a token machine that enforces the interval pairing, colors the
//!   intervals, and runs a deterministic path labeler to verify that no
//!   causal path from an interval reaches its own paired event.
//!
//! The module also contains the declarative (brute-force) definitions of all
//! the intermediate languages, used as oracles by the test suite.

use crate::cfm::{AccRect, Cfm, InitRect, Offer, Prim, PrimInst, Shape, StateSet, Val};
use crate::msc::{EventId, ExtLabel, Msc, MsgDir, Signature};
use std::collections::BTreeMap;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Path utilities and declarative oracles.
// ---------------------------------------------------------------------------

/// All sequences of pairwise-distinct processes starting at `from`
/// (length ≥ 1). With `to`, only sequences ending at `to`.
pub fn paths_from(np: usize, from: usize, to: Option<usize>) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![from];
    fn rec(np: usize, to: Option<usize>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if to.is_none_or(|t| *cur.last().unwrap() == t) {
            out.push(cur.clone());
        }
        for r in 0..np {
            if !cur.contains(&r) {
                cur.push(r);
                rec(np, to, cur, out);
                cur.pop();
            }
        }
    }
    rec(np, to, &mut cur, &mut out);
    out
}

/// Does a causal chain along exactly the process sequence `path` lead from
/// `e` to `f`? The chain runs forward on each listed process and hops to the
/// next one via a single message.
pub fn le_along(m: &Msc, path: &[usize], e: EventId, f: EventId) -> bool {
    if e.process as usize != path[0] || f.process as usize != *path.last().unwrap() {
        return false;
    }
    if path.len() == 1 {
        return e.index <= f.index;
    }
    let caus = m.causality();
    // Some send on path[0] at or after e whose receive is on path[1].
    for i in e.index..=m.words[path[0]].len() as u32 {
        let s = EventId::new(path[0], i as usize);
        if let Some((partner, MsgDir::Send)) = caus.partner[caus.gid(s)] {
            let r = caus.event(partner);
            if r.process as usize == path[1] && le_along(m, &path[1..], r, f) {
                return true;
            }
        }
    }
    false
}

/// The last event on `path[0]` with a chain along `path` to `f` (`f` must be
/// on the final process of `path`).
pub fn last_along(m: &Msc, path: &[usize], f: EventId) -> Option<EventId> {
    (1..=m.words[path[0]].len())
        .rev()
        .map(|i| EventId::new(path[0], i))
        .find(|&e| le_along(m, path, e, f))
}

/// The first event on the final process of `path` reachable from `e` along
/// `path` (`e` must be on `path[0]`).
pub fn first_along(m: &Msc, path: &[usize], e: EventId) -> Option<EventId> {
    let last = *path.last().unwrap();
    (1..=m.words[last].len())
        .map(|i| EventId::new(last, i))
        .find(|&f| le_along(m, path, e, f))
}

fn incomparable(m: &Msc, e: EventId, f: EventId) -> bool {
    !m.leq(e, f) && !m.leq(f, e)
}

/// The correct γ bits for the `(p, q, a)` group: true exactly on `p`-events
/// parallel to some `a`-labeled `q`-event. Indexed by dense event id.
pub fn gamma_true(m: &Msc, p: usize, q: usize, a: ExtLabel) -> Vec<bool> {
    let caus = m.causality();
    let mut out = vec![false; m.event_count()];
    for e in m.events() {
        if e.process as usize != p {
            continue;
        }
        out[caus.gid(e)] = (1..=m.words[q].len())
            .map(|i| EventId::new(q, i))
            .any(|f| m.label(f) == a && incomparable(m, e, f));
    }
    out
}

/// "No 0-event lies": every `p`-event with γ = 0 is comparable to every
/// `a`-labeled `q`-event.
pub fn in_zero_side(m: &Msc, p: usize, q: usize, a: ExtLabel, gamma: &[bool]) -> bool {
    let truth = gamma_true(m, p, q, a);
    let caus = m.causality();
    m.events()
        .filter(|e| e.process as usize == p)
        .all(|e| gamma[caus.gid(e)] || !truth[caus.gid(e)])
}

/// "No 1-event lies": every `p`-event with γ = 1 is parallel to some
/// `a`-labeled `q`-event.
pub fn in_one_side(m: &Msc, p: usize, q: usize, a: ExtLabel, gamma: &[bool]) -> bool {
    let truth = gamma_true(m, p, q, a);
    let caus = m.causality();
    m.events()
        .filter(|e| e.process as usize == p)
        .all(|e| !gamma[caus.gid(e)] || truth[caus.gid(e)])
}

/// The maximal runs of marked events on process `p`, as inclusive 1-based
/// index ranges, plus the ascending marked indices on process `q`. Returns
/// `None` when anything off `p` and `q` is marked.
pub fn mark_shape(
    m: &Msc,
    p: usize,
    q: usize,
    marks: &[bool],
) -> Option<(Vec<(u32, u32)>, Vec<u32>)> {
    let caus = m.causality();
    for e in m.events() {
        if marks[caus.gid(e)] && e.process as usize != p && e.process as usize != q {
            return None;
        }
    }
    let mut intervals = Vec::new();
    let mut run: Option<(u32, u32)> = None;
    for i in 1..=m.words[p].len() as u32 {
        if marks[caus.gid(EventId::new(p, i as usize))] {
            run = Some(run.map_or((i, i), |(s, _)| (s, i)));
        } else if let Some(r) = run.take() {
            intervals.push(r);
        }
    }
    intervals.extend(run);
    let witnesses = (1..=m.words[q].len() as u32)
        .filter(|&i| marks[caus.gid(EventId::new(q, i as usize))])
        .collect();
    Some((intervals, witnesses))
}

/// The interval-consistency language: marked `p`-intervals pair in order
/// with marked `q`-events; everything locally before an interval is causally
/// before its witness, everything locally after is causally after.
pub fn in_interval_lang(m: &Msc, p: usize, q: usize, marks: &[bool]) -> bool {
    let Some((intervals, witnesses)) = mark_shape(m, p, q, marks) else {
        return false;
    };
    if intervals.len() != witnesses.len() {
        return false;
    }
    intervals.iter().zip(&witnesses).all(|(&(s, t), &w)| {
        let f = EventId::new(q, w as usize);
        (1..s).all(|i| m.leq(EventId::new(p, i as usize), f))
            && (t + 1..=m.words[p].len() as u32).all(|i| m.leq(f, EventId::new(p, i as usize)))
    })
}

/// The exact-interval language: each marked interval is precisely the set of
/// `p`-events parallel to some marked `q`-event, and conversely.
pub fn in_exact_lang(m: &Msc, p: usize, q: usize, marks: &[bool]) -> bool {
    let Some((intervals, witnesses)) = mark_shape(m, p, q, marks) else {
        return false;
    };
    let par_set = |w: u32| -> Vec<u32> {
        let f = EventId::new(q, w as usize);
        (1..=m.words[p].len() as u32)
            .filter(|&i| incomparable(m, EventId::new(p, i as usize), f))
            .collect()
    };
    let as_range = |&(s, t): &(u32, u32)| (s..=t).collect::<Vec<u32>>();
    intervals
        .iter()
        .all(|iv| witnesses.iter().any(|&w| par_set(w) == as_range(iv)))
        && witnesses
            .iter()
            .all(|&w| intervals.iter().any(|iv| par_set(w) == as_range(iv)))
}

/// Refines the interval language: no causal chain from `p` to `q` started in
/// an interval may have its last start inside that same interval.
pub fn in_left_lang(m: &Msc, p: usize, q: usize, marks: &[bool]) -> bool {
    if !in_interval_lang(m, p, q, marks) {
        return false;
    }
    let (intervals, witnesses) = mark_shape(m, p, q, marks).unwrap();
    let paths = paths_from(m.sig.processes.len(), p, Some(q));
    intervals.iter().zip(&witnesses).all(|(&(s, t), &w)| {
        let f = EventId::new(q, w as usize);
        paths.iter().all(|path| {
            last_along(m, path, f).is_none_or(|e| e.index < s || e.index > t)
        })
    })
}

/// Mirror image of [`in_left_lang`]: chains from `q` to `p` may not first
/// arrive inside the paired interval.
pub fn in_right_lang(m: &Msc, p: usize, q: usize, marks: &[bool]) -> bool {
    if !in_interval_lang(m, p, q, marks) {
        return false;
    }
    let (intervals, witnesses) = mark_shape(m, p, q, marks).unwrap();
    let paths = paths_from(m.sig.processes.len(), q, Some(p));
    intervals.iter().zip(&witnesses).all(|(&(s, t), &w)| {
        let f = EventId::new(q, w as usize);
        paths.iter().all(|path| {
            first_along(m, path, f).is_none_or(|e| e.index < s || e.index > t)
        })
    })
}

// ---------------------------------------------------------------------------
// Interval families and coloring (completeness witnesses).
// ---------------------------------------------------------------------------

/// Splits the witnesses `F` (indices of `a`-labeled `q`-events) into two
/// subfamilies whose parallel intervals on `p` are pairwise disjoint and
/// non-adjacent within each family, while still covering the union.
pub fn disjoint_families(m: &Msc, p: usize, q: usize, witnesses: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let par = |w: u32| -> Vec<u32> {
        let f = EventId::new(q, w as usize);
        (1..=m.words[p].len() as u32)
            .filter(|&i| incomparable(m, EventId::new(p, i as usize), f))
            .collect()
    };
    // Keep only witnesses whose interval is non-empty and not covered by the
    // others' intervals.
    let mut kept: Vec<u32> = witnesses.iter().copied().filter(|&w| !par(w).is_empty()).collect();
    loop {
        let mut removed = false;
        for i in 0..kept.len() {
            let mine = par(kept[i]);
            let covered = mine.iter().all(|e| {
                kept.iter().enumerate().any(|(j, &w)| j != i && par(w).contains(e))
            });
            if covered {
                kept.remove(i);
                removed = true;
                break;
            }
        }
        if !removed {
            break;
        }
    }
    // Within the kept set, intervals can touch at most pairwise; alternate
    // the families along the interval order.
    kept.sort_by_key(|&w| par(w)[0]);
    let mut fam = (Vec::new(), Vec::new());
    for (i, &w) in kept.iter().enumerate() {
        if i % 2 == 0 {
            fam.0.push(w);
        } else {
            fam.1.push(w);
        }
    }
    fam
}

/// Greedy interval coloring: colors `1..=num_colors` such that equal colors
/// imply no path's last start for one witness lies in the other's interval.
pub fn greedy_coloring(
    m: &Msc,
    p: usize,
    q: usize,
    intervals: &[(u32, u32)],
    witnesses: &[u32],
    num_colors: usize,
) -> Vec<usize> {
    let paths = paths_from(m.sig.processes.len(), p, Some(q));
    let clashes = |i: usize, j: usize| -> bool {
        // i ⤳ j: some path's last start for witness j lies in interval i.
        let f = EventId::new(q, witnesses[j] as usize);
        paths.iter().any(|path| {
            last_along(m, path, f)
                .is_some_and(|e| e.index >= intervals[i].0 && e.index <= intervals[i].1)
        })
    };
    let mut chi = vec![0usize; intervals.len()];
    for j in 0..intervals.len() {
        let used: Vec<usize> = (0..j).filter(|&i| clashes(i, j)).map(|i| chi[i]).collect();
        chi[j] = (1..=num_colors).find(|c| !used.contains(c)).expect("not enough colors");
    }
    chi
}

// ---------------------------------------------------------------------------
// The deterministic path labeler ξ.
// ---------------------------------------------------------------------------

/// Per-event labeler value: for each process sequence starting at `p` and
/// ending at the event's process, the label of the last event on `p` with a
/// chain along that sequence to this event.
pub type XiMap = BTreeMap<Vec<usize>, i64>;

/// One propagation step of the labeler at an event on process `u`.
///
/// `prev` is the labeler value of the local predecessor, `msg` the sender
/// process and labeler value riding an incoming message, `theta` the label
/// of the event itself (only meaningful on process `p`).
pub fn xi_step(
    prev: Option<&XiMap>,
    msg: Option<(usize, &XiMap)>,
    u: usize,
    p: usize,
    theta: i64,
) -> XiMap {
    let mut out = XiMap::new();
    if let Some(prev) = prev {
        for (path, &v) in prev {
            // Entries whose sequence ends with a hop from the sender are
            // superseded by the (younger, by channel order) message value.
            let ends_with_hop = msg.is_some_and(|(r, _)| {
                path.len() >= 2 && path[path.len() - 2] == r && path[path.len() - 1] == u
            });
            if !ends_with_hop {
                out.insert(path.clone(), v);
            }
        }
    }
    if let Some((r, xi_g)) = msg {
        for (path, &v) in xi_g {
            if *path.last().unwrap() == r && !path.contains(&u) {
                let mut ext = path.clone();
                ext.push(u);
                out.insert(ext, v);
            }
        }
    }
    if u == p {
        out.insert(vec![p], theta);
    }
    out
}

/// Runs the labeler over a whole chart (`theta` indexed by dense event id).
pub fn compute_xi(m: &Msc, p: usize, theta: &[i64]) -> Vec<XiMap> {
    let caus = m.causality();
    let mut xi: Vec<XiMap> = vec![XiMap::new(); m.event_count()];
    for &g in &caus.topo {
        let e = caus.event(g);
        let u = e.process as usize;
        let prev = (e.index > 1).then(|| caus.gid(EventId::new(u, e.index as usize - 1)));
        let msg = match caus.partner[g] {
            Some((send, MsgDir::Recv)) => Some((caus.event(send).process as usize, send)),
            _ => None,
        };
        let prev_map = prev.map(|i| xi[i].clone());
        let msg_map = msg.map(|(r, i)| (r, xi[i].clone()));
        xi[g] = xi_step(
            prev_map.as_ref(),
            msg_map.as_ref().map(|(r, m)| (*r, m)),
            u,
            p,
            theta[g],
        );
    }
    xi
}

/// Brute-force definition of the labeler value at one event.
pub fn xi_oracle(m: &Msc, p: usize, theta: &[i64], e: EventId) -> XiMap {
    let caus = m.causality();
    let mut out = XiMap::new();
    for path in paths_from(m.sig.processes.len(), p, Some(e.process as usize)) {
        if let Some(last) = last_along(m, &path, e) {
            out.insert(path, theta[caus.gid(last)]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Value encodings shared by the primitives.
// ---------------------------------------------------------------------------

fn vbool(b: bool) -> Val {
    Val::Bool(b)
}

fn as_bool(v: &Val) -> bool {
    matches!(v, Val::Bool(true))
}

fn xi_to_val(xi: &XiMap) -> Val {
    Val::set(xi.iter().map(|(path, &v)| {
        Val::seq([Val::seq(path.iter().map(|&r| Val::int(r as i64))), Val::int(v)])
    }))
}

fn val_to_xi(v: &Val) -> XiMap {
    let Val::Set(entries) = v else { panic!("expected labeler set, got {v:?}") };
    entries
        .iter()
        .map(|entry| {
            let Val::Seq(pair) = entry else { panic!("bad labeler entry") };
            let Val::Seq(path) = &pair[0] else { panic!("bad labeler path") };
            let Val::Int(v) = pair[1] else { panic!("bad labeler value") };
            (
                path.iter()
                    .map(|x| match x {
                        Val::Int(i) => *i as usize,
                        _ => panic!("bad labeler path element"),
                    })
                    .collect(),
                v,
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Primitive 1: the path cover for the 0 side.
// ---------------------------------------------------------------------------

/// Accepts iff a single token path covers all γ=0 events on `p` and all
/// `a`-labeled events on `q`. State: does this process hold the token.
/// Track: γ.
struct PathCover {
    sig: Arc<Signature>,
    p: usize,
    q: usize,
    a: ExtLabel,
}

impl Prim for PathCover {
    fn name(&self) -> String {
        format!("path-cover({},{},{:?})", self.p, self.q, self.a)
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        let np = self.sig.processes.len();
        (0..np)
            .map(|holder| {
                (0..np).map(|r| vec![vbool(r == holder)]).collect()
            })
            .collect()
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        vec![vec![StateSet::Any; self.sig.processes.len()]]
    }
    fn offers(&self, r: usize, state: &Val, letter: ExtLabel, shape: Shape<'_>) -> Vec<Offer> {
        let held = as_bool(state);
        let gammas: &[bool] = if r == self.p { &[false, true] } else { &[false] };
        let mut out = Vec::new();
        for &g in gammas {
            // (on path?, payload, next) options for this shape.
            let moves: Vec<(bool, Option<Val>, bool)> = match shape {
                Shape::Internal => vec![(held, None, held)],
                Shape::Send { .. } => {
                    let mut v = vec![(held, Some(vbool(false)), held)];
                    if held {
                        v.push((true, Some(vbool(true)), false));
                    }
                    v
                }
                Shape::Recv { msg, .. } => {
                    let incoming = as_bool(msg);
                    if incoming && held {
                        vec![] // a second token cannot exist
                    } else {
                        vec![(held || incoming, None, held || incoming)]
                    }
                }
            };
            for (on_path, msg, next) in moves {
                if r == self.p && !g && !on_path {
                    continue; // a 0-event on p must be covered
                }
                if r == self.q && letter == self.a && !on_path {
                    continue; // an a-event on q must be covered
                }
                out.push(Offer { tracks: vec![vbool(g)], msg, next: vbool(next) });
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Primitive 2: the track-domain and cover constraint.
// ---------------------------------------------------------------------------

/// Single-state primitive tying the three tracks together: γ=1 on `p` needs
/// a mark on one of the two families, marks on `q` need the letter `a`, and
/// all tracks are pinned to 0 where they carry no information.
struct CoverDomain {
    sig: Arc<Signature>,
    p: usize,
    q: usize,
    a: ExtLabel,
}

impl Prim for CoverDomain {
    fn name(&self) -> String {
        format!("cover-domain({},{},{:?})", self.p, self.q, self.a)
    }
    fn track_arity(&self) -> usize {
        3
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        vec![vec![vec![Val::Unit]; self.sig.processes.len()]]
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        vec![vec![StateSet::Any; self.sig.processes.len()]]
    }
    fn offers(&self, r: usize, _state: &Val, letter: ExtLabel, _shape: Shape<'_>) -> Vec<Offer> {
        let mut out = Vec::new();
        let bools = [false, true];
        if r == self.p {
            for g in bools {
                for m1 in bools {
                    for m2 in bools {
                        if g && !m1 && !m2 {
                            continue;
                        }
                        out.push(Offer {
                            tracks: vec![vbool(g), vbool(m1), vbool(m2)],
                            msg: None,
                            next: Val::Unit,
                        });
                    }
                }
            }
        } else if r == self.q {
            for m1 in bools {
                for m2 in bools {
                    if (m1 || m2) && letter != self.a {
                        continue;
                    }
                    out.push(Offer {
                        tracks: vec![vbool(false), vbool(m1), vbool(m2)],
                        msg: None,
                        next: Val::Unit,
                    });
                }
            }
        } else {
            out.push(Offer {
                tracks: vec![vbool(false), vbool(false), vbool(false)],
                msg: None,
                next: Val::Unit,
            });
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Primitive 3: the interval token machine (pairing discipline only).
// ---------------------------------------------------------------------------

// Shared state/payload codes for the two token machines.
// On p:      0 = holding, 1 = away with no mark read, 2 = away with marks.
// On q:      0 = not holding, 1 = holding with no mark, 2 = holding and marked.
// Elsewhere: 0 = no token, 1 = relaying towards q, 2/3 = relaying towards p
//            with the "interval was empty/non-empty" bit.
// Payload:   0 = no token, 1 = token seeking q, 2/3 = token seeking p + bit.

/// Accepts iff the marks on `p` form maximal intervals pairing in order with
/// single marked events on `q` inside alternating token visits. Track: the
/// mark. Under-approximates the interval-consistency language but covers the
/// exact-interval language; mirror-closed.
struct IntervalToken {
    sig: Arc<Signature>,
    p: usize,
    q: usize,
}

/// Transition skeleton shared by [`IntervalToken`] and [`ColorToken`]:
/// everything except colors and the labeler. Produces, per (state-kind,
/// mark, shape-kind), the allowed (payload-kind, next-kind) moves.
fn token_moves(
    role: Role,
    s: u8,
    mark: bool,
    shape: ShapeKind,
    incoming: Option<u8>,
) -> Vec<(u8, u8)> {
    use Role::*;
    use ShapeKind::*;
    let mut out = Vec::new();
    match role {
        P => match s {
            0 => {
                // Holding: reads 0s; may pass the token at a send, opening a
                // gap that starts empty (0-marked send) or at this very
                // event (1-marked send).
                match (shape, mark) {
                    (Internal, false) => out.push((0, 0)),
                    (Send, false) => {
                        out.push((0, 0));
                        out.push((1, 1));
                    }
                    (Send, true) => out.push((1, 2)),
                    (Recv, false) if incoming == Some(0) => out.push((0, 0)),
                    _ => {}
                }
            }
            1 | 2 => {
                // Away: reads only marks; regains the token only at an
                // unmarked receive whose returning bit matches whether the
                // interval turned out non-empty.
                let b = s == 2;
                match shape {
                    Recv if incoming == Some(2) || incoming == Some(3) => {
                        if (incoming == Some(3)) == b && !mark {
                            out.push((0, 0));
                        }
                    }
                    Recv if incoming == Some(0) && mark => out.push((0, 2)),
                    Internal | Send if mark => out.push((0, 2)),
                    _ => {}
                }
            }
            _ => unreachable!(),
        },
        Q => match s {
            0 => match shape {
                Recv if incoming == Some(1) => out.push((0, if mark { 2 } else { 1 })),
                Recv if incoming == Some(0) && !mark => out.push((0, 0)),
                Internal | Send if !mark => out.push((0, 0)),
                _ => {}
            },
            1 => {
                // Holding, no mark seen: may read its single mark, or pass
                // the token back declaring the visit empty.
                match shape {
                    Internal => out.push((0, if mark { 2 } else { 1 })),
                    Send => {
                        out.push((0, if mark { 2 } else { 1 }));
                        out.push((if mark { 3 } else { 2 }, 0));
                    }
                    Recv if incoming == Some(0) => out.push((0, if mark { 2 } else { 1 })),
                    _ => {}
                }
            }
            2 => match (shape, mark) {
                (Internal, false) => out.push((0, 2)),
                (Send, false) => {
                    out.push((0, 2));
                    out.push((3, 0));
                }
                (Recv, false) if incoming == Some(0) => out.push((0, 2)),
                _ => {}
            },
            _ => unreachable!(),
        },
        Relay => {
            if mark {
                return out;
            }
            match s {
                0 => match shape {
                    Recv => match incoming {
                        Some(0) => out.push((0, 0)),
                        Some(k @ (1 | 2 | 3)) => out.push((0, k)),
                        _ => {}
                    },
                    Internal => out.push((0, 0)),
                    Send => out.push((0, 0)),
                },
                k @ (1 | 2 | 3) => match shape {
                    Internal => out.push((0, k)),
                    Send => {
                        out.push((0, k));
                        out.push((k, 0));
                    }
                    Recv if incoming == Some(0) => out.push((0, k)),
                    _ => {}
                },
                _ => unreachable!(),
            }
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    P,
    Q,
    Relay,
}

#[derive(Clone, Copy)]
enum ShapeKind {
    Internal,
    Send,
    Recv,
}

fn role_of(r: usize, p: usize, q: usize) -> Role {
    if r == p {
        Role::P
    } else if r == q {
        Role::Q
    } else {
        Role::Relay
    }
}

fn shape_kind(shape: &Shape<'_>) -> ShapeKind {
    match shape {
        Shape::Internal => ShapeKind::Internal,
        Shape::Send { .. } => ShapeKind::Send,
        Shape::Recv { .. } => ShapeKind::Recv,
    }
}

/// The pending visit/gap bookkeeping is consistent at the end of the chart.
fn token_accepting(p: usize, q: usize, np: usize) -> Vec<AccRect> {
    let lists = |pp: &[u8], qq: &[u8], rr: &[u8]| -> AccRect {
        (0..np)
            .map(|r| {
                let set: &[u8] = match role_of(r, p, q) {
                    Role::P => pp,
                    Role::Q => qq,
                    Role::Relay => rr,
                };
                StateSet::List(set.iter().map(|&k| Val::int(k as i64)).collect())
            })
            .collect()
    };
    vec![
        lists(&[0], &[0], &[0]),
        lists(&[1], &[0, 1], &[0, 1, 2]),
        lists(&[2], &[0, 2], &[0, 3]),
    ]
}

impl Prim for IntervalToken {
    fn name(&self) -> String {
        format!("interval-token({},{})", self.p, self.q)
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        let np = self.sig.processes.len();
        let rect = |pk: u8, qk: u8| -> InitRect {
            (0..np)
                .map(|r| {
                    let k = match role_of(r, self.p, self.q) {
                        Role::P => pk,
                        Role::Q => qk,
                        Role::Relay => 0,
                    };
                    vec![Val::int(k as i64)]
                })
                .collect()
        };
        vec![rect(0, 0), rect(1, 1)]
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        token_accepting(self.p, self.q, self.sig.processes.len())
    }
    fn offers(&self, r: usize, state: &Val, _letter: ExtLabel, shape: Shape<'_>) -> Vec<Offer> {
        let Val::Int(s) = state else { panic!("bad token state") };
        let role = role_of(r, self.p, self.q);
        let marks: &[bool] = if role == Role::Relay { &[false] } else { &[false, true] };
        let incoming = match shape {
            Shape::Recv { msg, .. } => {
                let Val::Int(k) = msg else { panic!("bad token payload") };
                Some(*k as u8)
            }
            _ => None,
        };
        let mut out = Vec::new();
        for &mark in marks {
            for (payload, next) in token_moves(role, *s as u8, mark, shape_kind(&shape), incoming)
            {
                out.push(Offer {
                    tracks: vec![vbool(mark)],
                    msg: matches!(shape, Shape::Send { .. })
                        .then(|| Val::int(payload as i64)),
                    next: Val::int(next as i64),
                });
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Primitive 4: the colored token machine with the path labeler.
// ---------------------------------------------------------------------------

/// [`IntervalToken`] extended with a guessed per-interval color riding the
/// token and a deterministic path labeler. At each marked `q`-event it
/// checks that no chain from `p` last starts in a `p`-interval of the same
/// color — combined with the interval discipline this cuts the language down
/// to "no chain from the paired interval itself reaches its witness". The
/// mirrored copy of this primitive checks the chains in the other direction.
///
/// State: `[token-kind, color, has-predecessor, labeler]`; the color slot is
/// 0 when the kind does not carry one. Payload: `[kind, color, labeler]`.
struct ColorToken {
    sig: Arc<Signature>,
    p: usize,
    q: usize,
    /// Number of available interval colors.
    colors: i64,
    /// All process sequences from `p` to `q`, checked at marked `q`-events.
    check_paths: Vec<Vec<usize>>,
}

impl ColorToken {
    fn new(sig: Arc<Signature>, p: usize, q: usize) -> ColorToken {
        let check_paths = paths_from(sig.processes.len(), p, Some(q));
        let colors = check_paths.len() as i64 + 1;
        ColorToken { sig, p, q, colors, check_paths }
    }

    fn state(kind: u8, color: i64, has_prev: bool, xi: &Val) -> Val {
        Val::seq([Val::int(kind as i64), Val::int(color), vbool(has_prev), xi.clone()])
    }

    /// Which kinds carry a color, per role.
    fn kind_colored(role: Role, kind: u8) -> bool {
        match role {
            Role::P => kind == 1 || kind == 2, // away: upcoming/current interval color
            Role::Q => kind == 1,              // holding before the mark
            Role::Relay => kind == 1,          // relaying towards q
        }
    }
}

impl Prim for ColorToken {
    fn name(&self) -> String {
        format!("color-token({},{})", self.p, self.q)
    }
    fn track_arity(&self) -> usize {
        1
    }
    fn initial_rects(&self) -> Vec<InitRect> {
        let np = self.sig.processes.len();
        let empty = xi_to_val(&XiMap::new());
        let rect = |pk: u8, qk: u8, c: i64| -> InitRect {
            (0..np)
                .map(|r| {
                    let (kind, color) = match role_of(r, self.p, self.q) {
                        Role::P => (pk, if Self::kind_colored(Role::P, pk) { c } else { 0 }),
                        Role::Q => (qk, if Self::kind_colored(Role::Q, qk) { c } else { 0 }),
                        Role::Relay => (0, 0),
                    };
                    vec![Self::state(kind, color, false, &empty)]
                })
                .collect()
        };
        let mut rects = vec![rect(0, 0, 0)];
        for c in 1..=self.colors {
            rects.push(rect(1, 1, c));
        }
        rects
    }
    fn accepting_rects(&self) -> Vec<AccRect> {
        // Same kind sets as the plain token machine; color and labeler are
        // irrelevant to acceptance.
        token_accepting(self.p, self.q, self.sig.processes.len())
            .into_iter()
            .map(|rect| {
                rect.into_iter()
                    .map(|set| {
                        let kinds: Vec<i64> = match set {
                            StateSet::List(vs) => vs
                                .iter()
                                .map(|v| match v {
                                    Val::Int(k) => *k,
                                    _ => unreachable!(),
                                })
                                .collect(),
                            _ => unreachable!(),
                        };
                        StateSet::Pred(Arc::new(move |v: &Val| {
                            let Val::Seq(parts) = v else { return false };
                            matches!(&parts[0], Val::Int(k) if kinds.contains(k))
                        }))
                    })
                    .collect()
            })
            .collect()
    }
    fn offers(&self, r: usize, state: &Val, _letter: ExtLabel, shape: Shape<'_>) -> Vec<Offer> {
        let Val::Seq(parts) = state else { panic!("bad colored state") };
        let (Val::Int(s), Val::Int(color)) = (&parts[0], &parts[1]) else {
            panic!("bad colored state")
        };
        let (s, color) = (*s as u8, *color);
        let has_prev = as_bool(&parts[2]);
        let prev_xi = val_to_xi(&parts[3]);
        let role = role_of(r, self.p, self.q);
        let marks: &[bool] = if role == Role::Relay { &[false] } else { &[false, true] };
        let (incoming, msg_xi, sender) = match shape {
            Shape::Recv { from, msg } => {
                let Val::Seq(payload) = msg else { panic!("bad colored payload") };
                let (Val::Int(k), Val::Int(c)) = (&payload[0], &payload[1]) else {
                    panic!("bad colored payload")
                };
                (Some((*k as u8, *c)), Some(val_to_xi(&payload[2])), Some(from))
            }
            _ => (None, None, None),
        };

        let mut out = Vec::new();
        for &mark in marks {
            let moves =
                token_moves(role, s, mark, shape_kind(&shape), incoming.map(|(k, _)| k));
            for (payload_kind, next_kind) in moves {
                // Thread the colors through the kind transitions.
                let (next_color, payload_color, theta) = match role {
                    Role::P => {
                        // Passing the token (payload kind 1) guesses the
                        // color of the opening interval; away kinds keep it.
                        if payload_kind == 1 {
                            // handled below: one offer per color guess
                            (0, 0, 0)
                        } else {
                            let nc = if Self::kind_colored(Role::P, next_kind) { color } else { 0 };
                            let th = if mark { color.max(1) } else { 0 };
                            (nc, 0, th)
                        }
                    }
                    Role::Q => {
                        let inherited = match incoming {
                            Some((1, c)) => c,
                            _ => color,
                        };
                        let nc = if Self::kind_colored(Role::Q, next_kind) { inherited } else { 0 };
                        (nc, 0, 0)
                    }
                    Role::Relay => {
                        let inherited = match incoming {
                            Some((1, c)) => c,
                            _ => color,
                        };
                        let pc = if payload_kind == 1 { inherited } else { 0 };
                        let nc = if Self::kind_colored(Role::Relay, next_kind) { inherited } else { 0 };
                        (nc, pc, 0)
                    }
                };

                // The labeler value at this event.
                let xi = xi_step(
                    has_prev.then_some(&prev_xi),
                    msg_xi.as_ref().map(|m| (sender.unwrap(), m)),
                    r,
                    self.p,
                    theta,
                );

                // At a marked q-event, the interval color must differ from
                // every chain's last-start color.
                if role == Role::Q && mark {
                    let c = match incoming {
                        Some((1, c)) => c,
                        _ => color,
                    };
                    let clash = self
                        .check_paths
                        .iter()
                        .any(|path| xi.get(path) == Some(&c));
                    if clash {
                        continue;
                    }
                }

                let xi_val = xi_to_val(&xi);
                let mk_payload = |pk: u8, pc: i64| {
                    Val::seq([Val::int(pk as i64), Val::int(pc), xi_val.clone()])
                };

                if role == Role::P && payload_kind == 1 {
                    // Guess the color of the interval the gap will contain.
                    for c in 1..=self.colors {
                        let theta_c = if mark { c } else { 0 };
                        let xi_c = xi_step(
                            has_prev.then_some(&prev_xi),
                            None,
                            r,
                            self.p,
                            theta_c,
                        );
                        out.push(Offer {
                            tracks: vec![vbool(mark)],
                            msg: Some(Val::seq([
                                Val::int(1),
                                Val::int(c),
                                xi_to_val(&xi_c),
                            ])),
                            next: Self::state(next_kind, c, true, &xi_to_val(&xi_c)),
                        });
                    }
                    continue;
                }

                out.push(Offer {
                    tracks: vec![vbool(mark)],
                    msg: matches!(shape, Shape::Send { .. })
                        .then(|| mk_payload(payload_kind, payload_color)),
                    next: Self::state(next_kind, next_color, true, &xi_val),
                });
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Assembly.
// ---------------------------------------------------------------------------

/// Track layout of the parallel-relation machine: one group per (p, q, a),
/// each with a public γ track followed by two hidden mark tracks.
#[derive(Debug, Clone)]
pub struct ParLayout {
    pub groups: Vec<(usize, usize, ExtLabel)>,
}

impl ParLayout {
    pub fn new(sig: &Signature) -> ParLayout {
        let np = sig.processes.len();
        let mut groups = Vec::new();
        for p in 0..np {
            for q in 0..np {
                if p == q {
                    continue;
                }
                for a in sig.ext_labels() {
                    groups.push((p, q, a));
                }
            }
        }
        ParLayout { groups }
    }

    /// Position of the γ bit for group `(p, q, a)` among the public tracks.
    pub fn gamma_index(&self, p: usize, q: usize, a: ExtLabel) -> usize {
        self.groups.iter().position(|&g| g == (p, q, a)).expect("unknown group")
    }

    /// Decodes an event's public track values into its annotation set.
    pub fn annotation(
        &self,
        process: usize,
        public: &[Val],
    ) -> std::collections::BTreeSet<(u16, ExtLabel)> {
        self.groups
            .iter()
            .zip(public)
            .filter(|(&(p, _, _), v)| p == process && as_bool(v))
            .map(|(&(_, q, a), _)| (q as u16, a))
            .collect()
    }
}

/// The machine for one `(p, q, a)` group: public track 0 carries γ, hidden
/// tracks 1 and 2 the two interval-family marks.
pub fn group_machine(sig: &Arc<Signature>, p: usize, q: usize, a: ExtLabel) -> Cfm {
    let mk = |prim: Arc<dyn Prim>, reversed: bool, tracks: Vec<usize>| {
        PrimInst::new(prim, reversed, tracks)
    };
    let prims = vec![
        mk(Arc::new(PathCover { sig: sig.clone(), p, q, a }), false, vec![0]),
        mk(Arc::new(CoverDomain { sig: sig.clone(), p, q, a }), false, vec![0, 1, 2]),
        mk(Arc::new(ColorToken::new(sig.clone(), p, q)), false, vec![1]),
        mk(Arc::new(ColorToken::new(sig.clone(), p, q)), true, vec![1]),
        mk(Arc::new(ColorToken::new(sig.clone(), p, q)), false, vec![2]),
        mk(Arc::new(ColorToken::new(sig.clone(), p, q)), true, vec![2]),
    ];
    Cfm {
        sig: sig.clone(),
        track_count: 3,
        prims,
        keeps: Vec::new(),
        bits_hidden: false,
        public_tracks: Some(vec![0]),
    }
}

/// The machine annotating each event with the set of (process, letter)
/// pairs realised by events incomparable to it, one public boolean track per
/// (p, q, a) group in [`ParLayout`] order.
pub fn parallel_machine(sig: &Arc<Signature>) -> Cfm {
    let layout = ParLayout::new(sig);
    let mut cfm: Option<Cfm> = None;
    for &(p, q, a) in &layout.groups {
        let g = group_machine(sig, p, q, a);
        cfm = Some(match cfm {
            None => g,
            Some(acc) => acc.product(g),
        });
    }
    cfm.expect("signature with at least two processes and one label")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msc::Rel;
    use crate::oracle::{all_mscs, Bounds};

    fn sig2() -> Arc<Signature> {
        Signature::new(["p", "q"], ["a", "b"], 0)
    }

    fn sig3() -> Arc<Signature> {
        Signature::new(["p", "q", "r"], ["a"], 0)
    }

    /// All mark vectors that are false outside processes p and q.
    fn all_marks(m: &Msc, p: usize, q: usize) -> Vec<Vec<bool>> {
        let caus = m.causality();
        let slots: Vec<usize> = m
            .events()
            .filter(|e| e.process as usize == p || e.process as usize == q)
            .map(|e| caus.gid(e))
            .collect();
        (0..1usize << slots.len())
            .map(|mask| {
                let mut v = vec![false; m.event_count()];
                for (i, &g) in slots.iter().enumerate() {
                    v[g] = mask >> i & 1 == 1;
                }
                v
            })
            .collect()
    }

    fn accepted_track_sets(cfm: &Cfm, m: &Msc) -> Vec<Vec<bool>> {
        cfm.accepted_assignments(m)
            .into_iter()
            .map(|rows| rows.iter().map(|r| as_bool(&r[0])).collect())
            .collect()
    }

    #[test]
    fn path_helpers_enumerate_process_sequences() {
        assert_eq!(paths_from(3, 0, Some(1)).len(), 2); // 0,1 and 0,2,1
        assert_eq!(paths_from(3, 0, None).len(), 5);
        assert_eq!(paths_from(2, 0, Some(1)), vec![vec![0, 1]]);
    }

    #[test]
    fn labeler_propagation_matches_brute_force() {
        let sig = sig3();
        let mut checked = 0usize;
        for m in all_mscs(&sig, Bounds { max_events_per_process: 2 }) {
            let caus = m.causality();
            let p_events: Vec<usize> = m
                .events()
                .filter(|e| e.process == 0)
                .map(|e| caus.gid(e))
                .collect();
            // A handful of labelings of the p-events.
            for pattern in 0..3i64.pow(p_events.len() as u32) {
                let mut theta = vec![0i64; m.event_count()];
                let mut x = pattern;
                for &g in &p_events {
                    theta[g] = x % 3;
                    x /= 3;
                }
                let xi = compute_xi(&m, 0, &theta);
                for e in m.events() {
                    assert_eq!(
                        xi[caus.gid(e)],
                        xi_oracle(&m, 0, &theta, e),
                        "event {e:?} of {:?} {:?} theta {theta:?}",
                        m.words,
                        m.messages
                    );
                }
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    /// The two mark vectors a complete run has to realise: one per interval
    /// family, marking each kept witness and its exact parallel interval.
    fn canonical_marks(m: &Msc, p: usize, q: usize) -> Vec<Vec<bool>> {
        let witnesses: Vec<u32> = (1..=m.words[q].len() as u32).collect();
        let (f1, f2) = disjoint_families(m, p, q, &witnesses);
        let caus = m.causality();
        [f1, f2]
            .iter()
            .map(|fam| {
                let mut v = vec![false; m.event_count()];
                for &w in fam {
                    let f = EventId::new(q, w as usize);
                    v[caus.gid(f)] = true;
                    for i in 1..=m.words[p].len() {
                        let e = EventId::new(p, i);
                        if incomparable(m, e, f) {
                            v[caus.gid(e)] = true;
                        }
                    }
                }
                v
            })
            .collect()
    }

    /// Sound for `lang`, complete for the canonical family marks.
    fn check_token_machine(
        cfm: &Cfm,
        sig: &Arc<Signature>,
        maxev: usize,
        lang: impl Fn(&Msc, &[bool]) -> bool,
        what: &str,
    ) {
        for m in all_mscs(sig, Bounds { max_events_per_process: maxev }) {
            let accepted = accepted_track_sets(cfm, &m);
            for marks in &accepted {
                assert!(
                    lang(&m, marks),
                    "{what} over-accepts: {:?} {:?} {marks:?}",
                    m.words,
                    m.messages
                );
            }
            for marks in canonical_marks(&m, 0, 1) {
                assert!(
                    accepted.contains(&marks),
                    "{what} rejects canonical marks: {:?} {:?} {marks:?}",
                    m.words,
                    m.messages
                );
            }
        }
    }

    #[test]
    fn interval_token_is_sound_and_covers_canonical_marks() {
        for (sig, maxev) in [(sig2(), 3), (sig3(), 2)] {
            let cfm = Cfm::from_prim(
                sig.clone(),
                Arc::new(IntervalToken { sig: sig.clone(), p: 0, q: 1 }),
            );
            check_token_machine(
                &cfm,
                &sig,
                maxev,
                |m, marks| in_interval_lang(m, 0, 1, marks),
                "interval token",
            );
        }
    }

    #[test]
    fn color_token_is_sound_for_the_left_language() {
        for (sig, maxev) in [(sig2(), 3), (sig3(), 2)] {
            let cfm = Cfm::from_prim(sig.clone(), Arc::new(ColorToken::new(sig.clone(), 0, 1)));
            check_token_machine(
                &cfm,
                &sig,
                maxev,
                |m, marks| in_left_lang(m, 0, 1, marks),
                "color token",
            );
        }
    }

    #[test]
    fn mirrored_color_token_is_sound_for_the_right_language() {
        for (sig, maxev) in [(sig2(), 3), (sig3(), 2)] {
            let cfm = Cfm::from_prim(sig.clone(), Arc::new(ColorToken::new(sig.clone(), 0, 1)))
                .mirror();
            check_token_machine(
                &cfm,
                &sig,
                maxev,
                |m, marks| in_right_lang(m, 0, 1, marks),
                "mirrored color token",
            );
        }
    }

    #[test]
    fn group_machine_computes_exactly_the_gamma_bits() {
        let sig = sig2();
        let a = ExtLabel { label: 0, bits: 0 };
        let cfm = group_machine(&sig, 0, 1, a);
        for m in all_mscs(&sig, Bounds { max_events_per_process: 3 }) {
            let accepted = accepted_track_sets(&cfm, &m);
            assert_eq!(
                accepted,
                vec![gamma_true(&m, 0, 1, a)],
                "group machine on {:?} {:?}",
                m.words,
                m.messages
            );
        }
    }

    #[test]
    fn group_machine_handles_relay_processes() {
        let sig = sig3();
        let a = ExtLabel { label: 0, bits: 0 };
        let cfm = group_machine(&sig, 0, 1, a);
        for m in all_mscs(&sig, Bounds { max_events_per_process: 2 }) {
            let accepted = accepted_track_sets(&cfm, &m);
            assert_eq!(
                accepted,
                vec![gamma_true(&m, 0, 1, a)],
                "group machine on {:?} {:?}",
                m.words,
                m.messages
            );
        }
    }

    #[test]
    fn full_parallel_machine_matches_the_type_oracle() {
        let sig = sig2();
        let layout = ParLayout::new(&sig);
        let cfm = parallel_machine(&sig);
        for m in all_mscs(&sig, Bounds { max_events_per_process: 2 }) {
            let got = cfm.accepted_assignments(&m);
            assert_eq!(got.len(), 1, "on {:?} {:?}", m.words, m.messages);
            let caus = m.causality();
            for e in m.events() {
                let ann = layout.annotation(e.process as usize, &got[0][caus.gid(e)]);
                assert_eq!(
                    ann,
                    m.event_type(e)[Rel::Par.index()],
                    "annotation at {e:?} of {:?} {:?}",
                    m.words,
                    m.messages
                );
            }
        }
    }

    #[test]
    fn disjoint_families_cover_and_separate() {
        let sig = sig3();
        let a = ExtLabel { label: 0, bits: 0 };
        for m in all_mscs(&sig, Bounds { max_events_per_process: 2 }) {
            let witnesses: Vec<u32> = (1..=m.words[1].len() as u32)
                .filter(|&i| m.label(EventId::new(1, i as usize)) == a)
                .collect();
            let par = |w: u32| -> Vec<u32> {
                let f = EventId::new(1, w as usize);
                (1..=m.words[0].len() as u32)
                    .filter(|&i| incomparable(&m, EventId::new(0, i as usize), f))
                    .collect()
            };
            let union = |ws: &[u32]| -> std::collections::BTreeSet<u32> {
                ws.iter().flat_map(|&w| par(w)).collect()
            };
            let (f1, f2) = disjoint_families(&m, 0, 1, &witnesses);
            let mut both = union(&f1);
            both.extend(union(&f2));
            assert_eq!(both, union(&witnesses), "coverage on {:?} {:?}", m.words, m.messages);
            for fam in [&f1, &f2] {
                for (i, &w) in fam.iter().enumerate() {
                    for &w2 in &fam[i + 1..] {
                        let (a1, a2) = (par(w), par(w2));
                        // Disjoint and non-adjacent: the union is not one run.
                        let mut all: Vec<u32> =
                            a1.iter().chain(&a2).copied().collect();
                        all.sort();
                        all.dedup();
                        let contiguous =
                            all.len() == a1.len() + a2.len()
                                && all.windows(2).all(|w| w[1] == w[0] + 1);
                        assert!(
                            !contiguous || a1.is_empty() || a2.is_empty(),
                            "family not separated on {:?} {:?}",
                            m.words,
                            m.messages
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_coloring_respects_reachability_clashes() {
        let sig = sig3();
        let a = ExtLabel { label: 0, bits: 0 };
        let paths = paths_from(3, 0, Some(1));
        for m in all_mscs(&sig, Bounds { max_events_per_process: 2 }) {
            for marks in all_marks(&m, 0, 1) {
                if !in_left_lang(&m, 0, 1, &marks) {
                    continue;
                }
                let (intervals, witnesses) = mark_shape(&m, 0, 1, &marks).unwrap();
                if intervals.is_empty() {
                    continue;
                }
                if witnesses.iter().any(|&w| m.label(EventId::new(1, w as usize)) != a) {
                    continue;
                }
                let chi = greedy_coloring(&m, 0, 1, &intervals, &witnesses, paths.len() + 1);
                for i in 0..intervals.len() {
                    for j in 0..intervals.len() {
                        if chi[i] != chi[j] {
                            continue;
                        }
                        let f = EventId::new(1, witnesses[j] as usize);
                        for path in &paths {
                            if let Some(e) = last_along(&m, path, f) {
                                assert!(
                                    i == j
                                        || e.index < intervals[i].0
                                        || e.index > intervals[i].1,
                                    "coloring clash on {:?} {:?}",
                                    m.words,
                                    m.messages
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}



