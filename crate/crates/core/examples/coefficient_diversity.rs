//! Trains the basic GAN on the Hadamard stripe dataset with a fixed filter time
//! and prints per-basis std of the fitted coefficients of raw fakes relative to
//! the reals.
//!
//! Usage: coefficient_diversity [ss|nss|ns|none] [seed] [epochs] [half|full] [t]

use nssgan::gan::{generate, train_with_observer, TimeSchedule, TrainConfig};
use nssgan::hadamard::gen_dataset;
use nssgan::metrics::{coeff_stats, std_ratio};
use nssgan::scalespace::FilterKind;

fn main() -> nssgan::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind: FilterKind = args.get(1).map_or("nss", String::as_str).parse()?;
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);
    let half = args.get(4).is_some_and(|s| s == "half");
    let t: u32 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(8);

    let reals = gen_dataset(20_000, seed)?;
    let cfg = TrainConfig {
        epochs,
        filter: kind,
        schedule: TimeSchedule::Fixed(t),
        seed,
        half_batch: half,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let out = train_with_observer(&cfg, &reals, |r| {
        if r.step % 1000 == 0 {
            eprintln!(
                "step {:5} d_obj {:+.4} g_obj {:.4}",
                r.step, r.d_obj, r.g_obj
            );
        }
    })?;
    let fakes = generate(&out.checkpoint, 4096, seed ^ 0xFACE)?;
    let real_stats = coeff_stats(&reals)?;
    let fake_stats = coeff_stats(&fakes)?;
    let ratio = std_ratio(&fake_stats, &real_stats);
    println!(
        "kind={kind} seed={seed} epochs={epochs} half={half} t={t} secs={:.1}",
        start.elapsed().as_secs_f64()
    );
    #[allow(clippy::needless_range_loop)]
    for i in 0..8 {
        println!(
            "B{} fake_mean {:+.3} fake_std {:.3} ratio {:.3}",
            i + 1,
            fake_stats.mean[i],
            fake_stats.std[i],
            ratio[i]
        );
    }
    Ok(())
}
