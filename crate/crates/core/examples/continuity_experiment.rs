//! Trains with and without MIP loss terms on corrupted phantom labels and
//! compares Dice and skeleton gap excess on clean test phantoms.
//!
//! `cargo run --release --example continuity_experiment -- [epochs] [seeds]`

#[path = "../tests/support/continuity.rs"]
mod continuity;

use continuity::Experiment;

fn main() -> spockmip::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut exp = Experiment::default();
    if let Some(e) = args.first().and_then(|a| a.parse().ok()) {
        exp.base.train.epochs = e;
    }
    if let Some(n) = args.get(1).and_then(|a| a.parse::<u64>().ok()) {
        exp.seeds = (0..n).collect();
    }
    let data = exp.data()?;
    let mut results = Vec::new();
    for &seed in &exp.seeds {
        for &mode in &exp.modes {
            let r = exp.run_one(&data, mode, seed)?;
            println!("{:?} seed {}: dice {:.4} gap excess {:.1} ({:.0} s)", r.mode, r.seed, r.dice, r.gap_excess, r.seconds);
            results.push(r);
        }
    }
    for s in exp.summarize(&results) {
        println!("{:?}: median dice {:.4}, median gap excess {:.1}", s.mode, s.median_dice, s.median_gap_excess);
    }
    Ok(())
}
