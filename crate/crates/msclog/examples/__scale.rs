use msclog::msc::Signature;
use msclog::oracle::{for_each_msc, Bounds};
fn main() {
    // count structures by hooking for_each_msc is awkward; approximate via events histogram
    let sig = Signature::new(vec!["p".to_string(),"q".to_string(),"r".to_string()], vec!["a".to_string()], 0);
    let mut n = 0u64;
    let t = std::time::Instant::now();
    for_each_msc(&sig, Bounds { max_events_per_process: 3 }, |_| n += 1);
    println!("P=3 S=1 max=3 structures: {n} ({:?})", t.elapsed());
    let sig = Signature::new(vec!["p".to_string(),"q".to_string()], vec!["a".to_string()], 0);
    let mut n = 0u64;
    for_each_msc(&sig, Bounds { max_events_per_process: 4 }, |_| n += 1);
    println!("P=2 S=1 max=4 structures: {n}");
}
