use msclog::compiler::*;
use msclog::logic::Sentence;
use msclog::oracle::{bounded_equiv, Bounds};
use std::time::Instant;
fn main() {
    let (_, text) = formula_suite().into_iter().find(|(n, _)| *n == "no-b-above-a").unwrap();
    let s = Sentence::parse(text).unwrap();
    let snf = msclog::logic::scott_normal_form(&s).unwrap();
    eprintln!("set_vars={:?}", snf.set_vars);
    eprintln!("aa: {:?}", snf.kernel_aa);
    for k in &snf.kernel_ae { eprintln!("ae: {:?}", k); }
    let t0 = Instant::now();
    let cfm = compile(&s).unwrap();
    eprintln!("compile: {:?}", t0.elapsed());
    eprintln!("setvars={} prims={} tracks={}", cfm.sig.setvars, cfm.prims.len(), cfm.track_count);
    let mut count = 0usize;
    let t0 = Instant::now();
    let v = bounded_equiv(&s.sig, Bounds { max_events_per_process: 1 },
        |m| { count += 1; if count % 50 == 0 { eprintln!("{} charts, {:?}", count, t0.elapsed()); } cfm.accepts(m) },
        |m| s.evaluate(m));
    eprintln!("max1 done: {} charts {:?} {:?}", count, t0.elapsed(), matches!(v, msclog::oracle::Verdict::Equivalent{..}));
}
// debug dump
