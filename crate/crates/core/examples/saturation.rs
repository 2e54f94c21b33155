//! Growth of the saturating sets generated by `{0, 1}` and the parity
//! obstruction for an all-even generator set.
//!
//! ```bash
//! cargo run --example saturation
//! ```

use std::collections::BTreeSet;

use schrodmix::control::saturation_span;

fn main() {
    let b: BTreeSet<i64> = [0, 1].into();
    for n in 0..=4 {
        let r = saturation_span(&b, n);
        println!("n = {n}: {:?}", r.set);
    }
    let even: BTreeSet<i64> = [0, 2].into();
    let r = saturation_span(&even, 5);
    println!("{{0, 2}} after 5 rounds: all even = {}", r.set.iter().all(|k| k % 2 == 0));
}
