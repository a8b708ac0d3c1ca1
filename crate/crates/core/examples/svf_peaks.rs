//! Spectral-variation peaks on a signal whose tone changes every 100 ms.
//!
//!     cargo run --example svf_peaks [threshold]

use std::f64::consts::PI;

use phoneseg::features::compute_log_mel;
use phoneseg::svf::{boundaries_to_times, deviation_track, find_peaks, spectral_variation, SvfSpan};

fn main() -> phoneseg::Result<()> {
    let threshold: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.3);
    let tones = [400.0, 1200.0, 700.0, 2500.0, 400.0, 3000.0, 900.0, 1800.0];
    let samples: Vec<f64> = (0..tones.len() * 1600)
        .map(|i| 0.5 * (2.0 * PI * tones[i / 1600] * i as f64 / 16000.0).sin())
        .collect();
    let mel = compute_log_mel(&samples, 16000)?;

    for span in [SvfSpan::Adjacent, SvfSpan::Wide] {
        let curve = spectral_variation(&mel, span)?.normalized();
        let b = find_peaks(&curve, threshold);
        let times: Vec<String> = boundaries_to_times(&b, 0.01).iter().map(|t| format!("{t:.2}")).collect();
        println!("{span:?} span, prominence >= {threshold}: {}", times.join(" "));
        if span == SvfSpan::Wide {
            let v = deviation_track(&b);
            println!("  distance to nearest boundary (frames): {:?}", &v.v[..30]);
        }
    }
    println!("true changes: 0.10 0.20 ... 0.70");
    Ok(())
}
