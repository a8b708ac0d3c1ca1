//! Log-Mel frames of a synthetic chirp, normalized with corpus statistics.
//!
//!     cargo run --example mel_spectrogram [path/to/16k.wav]

use std::f64::consts::PI;

use phoneseg::features::{
    apply_normalization, compute_log_mel, fit_normalization, mel_band_centers, read_wav, NUM_MEL_BANDS, SAMPLE_RATE,
};

fn main() -> phoneseg::Result<()> {
    let (samples, rate) = match std::env::args().nth(1) {
        Some(path) => read_wav(path)?,
        None => {
            // 1 s sweep from 200 Hz to 6 kHz.
            let n = SAMPLE_RATE as usize;
            let s = (0..n)
                .map(|i| {
                    let t = i as f64 / SAMPLE_RATE as f64;
                    (2.0 * PI * (200.0 * t + 0.5 * 5800.0 * t * t)).sin()
                })
                .collect();
            (s, SAMPLE_RATE)
        }
    };
    let mel = compute_log_mel(&samples, rate)?;
    println!("{} samples -> {} frames x {} bands", samples.len(), mel.num_frames(), mel.dim());

    let centers = mel_band_centers(NUM_MEL_BANDS, 0.0, 8000.0);
    for t in (0..mel.num_frames()).step_by(mel.num_frames().max(10) / 10) {
        let row = mel.row(t);
        let (band, energy) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &e)| if e > b.1 { (i, e) } else { b });
        println!("  t={:.2}s  loudest band {band:2} (~{:5.0} Hz, ln E = {energy:.1})", t as f64 * 0.01, centers[band]);
    }

    let stats = fit_normalization(&[&mel])?;
    let z = apply_normalization(&mel, &stats)?;
    let mean0: f64 = z.rows().map(|r| r[0]).sum::<f64>() / z.num_frames() as f64;
    println!("band 0 after normalization: mean {mean0:.2e}");
    Ok(())
}
