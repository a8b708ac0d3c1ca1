//! Boundary precision/recall/F1/R-value under both matching protocols, and
//! cluster purity.
//!
//!     cargo run --example evaluate_boundaries

use phoneseg::evaluation::{match_boundaries, purity, r_value, Protocol};
use phoneseg::features::{Alignment, Segment};

fn main() -> phoneseg::Result<()> {
    let reference = [0.10, 0.25, 0.40, 0.52, 0.80];
    let hypothesis = [0.09, 0.11, 0.27, 0.50, 0.66, 0.79];
    for protocol in [Protocol::Strict, Protocol::Lenient] {
        let m = match_boundaries(&reference, &hypothesis, 0.02, protocol)?.metrics();
        println!(
            "{protocol:?}: P {:.3}  R {:.3}  F1 {:.3}  R-value {:.3}",
            m.precision, m.recall, m.f1, m.r_value
        );
    }
    println!("R-value at P=80.4%, R=79.3%: {:.1}", 100.0 * r_value(0.804, 0.793));

    let seg = |start, end, label: &str| Segment {
        start,
        end,
        label: label.to_string(),
    };
    let ali = Alignment::new(vec![seg(0.0, 0.04, "sh"), seg(0.04, 0.08, "iy"), seg(0.08, 0.10, "sh")])?;
    let p = purity(&[0, 0, 0, 0, 1, 1, 1, 2, 0, 0], &ali, 0.01)?;
    print!("{}", p.to_csv());
    print!("{}", p.joint_counts.to_csv());
    Ok(())
}
