//! Acceptance suite. Runs every criterion, prints one verdict line per
//! criterion and exits non-zero if any failed.

use std::time::{Duration, Instant};

use nssgan::gan::{generate, train, TimeSchedule, TrainConfig};
use nssgan::hadamard::{fit, gen_dataset, hadamard_bases, synthesize, ORDER};
use nssgan::metrics::{
    coeff_frechet, coeff_stats, frechet_gaussian, pooled_variance, sym_psd_sqrt,
};
use nssgan::nn::{
    adam_step, init_net, Activation, AdamState, DenseNet, Gradients, Matrix, NetSpec,
    OptimizerConfig,
};
use nssgan::scalespace::{
    anneal_t, apply_filter, noise_space, noisy_scale_space, AnnealSchedule, FilterKind, FilterSpec,
};
use nssgan::tensorio::{gaussian_draw, Batch, Image, RngStream};

struct Verdict {
    ok: bool,
    detail: String,
}

fn run(id: &str, title: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    let in_time = budget.is_none_or(|b| took < b);
    let ok = v.ok && in_time;
    let budget_note = budget.map_or(String::new(), |b| {
        format!(" budget {:.0}s", b.as_secs_f64())
    });
    println!(
        "{id} {title}: {} ({}; {:.2}s{budget_note})",
        if ok { "PASS" } else { "FAIL" },
        v.detail,
        took.as_secs_f64()
    );
    ok
}

// ---- independent oracles ----

fn oracle_conv(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let b = [1.0, 2.0, 1.0];
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut acc = 0.0;
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let rr = (r + dr).clamp(0, h as isize - 1) as usize;
                    let cc = (c + dc).clamp(0, w as isize - 1) as usize;
                    acc += b[(dr + 1) as usize] * b[(dc + 1) as usize] / 16.0 * x[rr * w + cc];
                }
            }
            out[r as usize * w + c as usize] = acc;
        }
    }
    out
}

fn oracle_conv_n(x: &[f64], h: usize, w: usize, n: u32) -> Vec<f64> {
    (0..n).fold(x.to_vec(), |acc, _| oracle_conv(&acc, h, w))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-30)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

// ---- criteria ----

fn a1() -> Verdict {
    let mut cases = RngStream::new(2024, 0);
    let (mut worst_nss, mut worst_ns) = (0.0f64, 0.0f64);
    for case in 0..200u64 {
        let h = 1 + cases.below(12) as usize;
        let w = 1 + cases.below(12) as usize;
        let t = cases.below(33) as u32;
        let sigma = [0.0, 0.15, 0.5][cases.below(3) as usize];
        let y: Vec<f64> = (0..h * w).map(|_| cases.uniform_range(-1.0, 1.0)).collect();
        let img = Image::from_f64(h, w, &y).unwrap();
        let y = img.to_f64();
        let stream = RngStream::new(case, 1);

        let got = noisy_scale_space(&img, t, sigma, &mut stream.clone()).to_f64();
        let mut replay = stream.clone();
        let mut want = oracle_conv_n(&y, h, w, t);
        for j in 1..=t {
            let eps: Vec<f64> = (0..h * w)
                .map(|_| sigma * gaussian_draw(&mut replay))
                .collect();
            for (acc, v) in want.iter_mut().zip(oracle_conv_n(&eps, h, w, t - j)) {
                *acc += v;
            }
        }
        worst_nss = worst_nss.max(rel_err(&got, &want));

        let got = noise_space(&img, t, sigma, &mut stream.clone()).to_f64();
        let mut replay = stream;
        let mut eps_hat = vec![0.0; h * w];
        for _ in 0..t {
            for e in eps_hat.iter_mut() {
                *e += sigma * gaussian_draw(&mut replay);
            }
        }
        let want: Vec<f64> = y.iter().zip(&eps_hat).map(|(a, b)| a + b).collect();
        worst_ns = worst_ns.max(rel_err(&got, &want));
    }
    Verdict {
        ok: worst_nss < 1e-5 && worst_ns < 1e-6,
        detail: format!(
            "200 cases, NSS max rel {worst_nss:.2e} (<1e-5), NS max rel {worst_ns:.2e} (<1e-6)"
        ),
    }
}

fn a2() -> Verdict {
    let zeros = Batch::new(vec![Image::zeros(1, 1); 100_000], 0).unwrap();
    let spec = FilterSpec::new(FilterKind::Ns, 64, 0.15).unwrap();
    let v = pooled_variance(&apply_filter(&zeros, &spec, &RngStream::new(7, 0)));
    let rel = (v - 1.44).abs() / 1.44;
    Verdict {
        ok: rel < 0.05,
        detail: format!("variance {v:.4} vs 1.44, rel dev {:.2}% (<5%)", rel * 100.0),
    }
}

fn a3() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [4u32, 16, 64, 256] {
        let mut gap_lo = Vec::new();
        let mut gap_hi = Vec::new();
        for r in 0..20u64 {
            let batch = gen_dataset(128, 1000 + r).unwrap();
            let var = |kind| {
                let spec = FilterSpec::new(kind, t, 0.15).unwrap();
                pooled_variance(&apply_filter(
                    &batch,
                    &spec,
                    &RngStream::new(r, u64::from(t)),
                ))
            };
            let (ss, nss, ns) = (
                var(FilterKind::Ss),
                var(FilterKind::Nss),
                var(FilterKind::Ns),
            );
            gap_lo.push(nss - ss);
            gap_hi.push(ns - nss);
        }
        let (m1, s1) = mean_sd(&gap_lo);
        let (m2, s2) = mean_sd(&gap_hi);
        let good = m1 - 3.0 * s1 > 0.0 && m2 - 3.0 * s2 > 0.0;
        ok &= good;
        parts.push(format!(
            "t={t}: NSS-SS {m1:.4}±{s1:.4}, NS-NSS {m2:.4}±{s2:.4}"
        ));
    }
    Verdict {
        ok,
        detail: parts.join("; "),
    }
}

fn a4() -> Verdict {
    let mut s = RngStream::new(4, 0);
    let (mut worst_alpha, mut worst_res) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let alpha: [f64; ORDER] = std::array::from_fn(|_| s.uniform_range(-1.0, 1.0));
        let c = fit(&synthesize(&alpha)).unwrap();
        for (fitted, truth) in c.alpha.iter().zip(alpha) {
            worst_alpha = worst_alpha.max((fitted - truth).abs());
        }
        worst_res = worst_res.max(c.residual_norm);
    }
    let bases = hadamard_bases();
    let mut worst_gram = 0.0f64;
    for (i, a) in bases.iter().enumerate() {
        for (j, b) in bases.iter().enumerate() {
            let g: f64 = a
                .image
                .to_f64()
                .iter()
                .zip(b.image.to_f64())
                .map(|(x, y)| x * y)
                .sum();
            worst_gram = worst_gram.max((g - f64::from(u8::from(i == j))).abs());
        }
    }
    Verdict {
        ok: worst_alpha < 1e-6 && worst_res < 1e-6 && worst_gram < 1e-12,
        detail: format!(
            "max |Δα| {worst_alpha:.2e}, max residual {worst_res:.2e}, Gram dev {worst_gram:.1e}"
        ),
    }
}

fn objective(net: &DenseNet<f64>, x: &Matrix<f64>, u: &Matrix<f64>) -> f64 {
    let (y, _) = net.forward(x).unwrap();
    y.data()
        .iter()
        .zip(u.data())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / x.rows() as f64
}

fn worst_fd_error(net: &DenseNet<f64>, x: &Matrix<f64>, u: &Matrix<f64>) -> f64 {
    let h = 1e-4;
    let (_, cache) = net.forward(x).unwrap();
    let analytic = net.backward(&cache, u).unwrap().0.flat();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut k = 0;
    for ti in 0..net.params().count() {
        for j in 0..net.params().nth(ti).unwrap().len() {
            let orig = probe.params_mut().nth(ti).unwrap()[j];
            probe.params_mut().nth(ti).unwrap()[j] = orig + h;
            let up = objective(&probe, x, u);
            probe.params_mut().nth(ti).unwrap()[j] = orig - h;
            let down = objective(&probe, x, u);
            probe.params_mut().nth(ti).unwrap()[j] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[k];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-7));
            k += 1;
        }
    }
    worst
}

fn a5() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, spec) in [
        ("G", NetSpec::generator(16)),
        ("D", NetSpec::discriminator()),
    ] {
        // f32 training net checked in f64 at a point away from the leaky kinks
        let net32: DenseNet<f32> = init_net(&spec, &mut RngStream::new(5, 0)).unwrap();
        let mut s = RngStream::new(6, 0);
        let mut net = net32.cast::<f64>();
        for p in net.params_mut() {
            for v in p.iter_mut() {
                *v = *v * 12.5 + 0.02 * s.gaussian();
            }
        }
        let (din, dout) = (spec.input_dim(), spec.output_dim());
        let x = Matrix::from_vec(3, din, (0..3 * din).map(|_| s.gaussian()).collect()).unwrap();
        let u = Matrix::from_vec(3, dout, (0..3 * dout).map(|_| s.gaussian()).collect()).unwrap();
        let e = worst_fd_error(&net, &x, &u);
        ok &= e < 1e-4;
        parts.push(format!("{name} {e:.1e}"));
    }
    let scalar = NetSpec::mlp(&[1, 1], Activation::Identity, Activation::Identity);
    let mut net: DenseNet<f64> = DenseNet::zeros(&scalar).unwrap();
    let mut state = AdamState::new(&net);
    let grads = Gradients {
        layers: vec![(vec![2.0], vec![0.0])],
    };
    adam_step(&mut net, &grads, &mut state, &OptimizerConfig::default()).unwrap();
    let theta = net.layers()[0].weights[0];
    let adam_err = (theta + 2e-5).abs();
    ok &= adam_err < 1e-10;
    parts.push(format!("Adam step θ={theta:.6e} (|θ+2e-5| {adam_err:.1e})"));
    Verdict {
        ok,
        detail: format!("max rel FD error {}", parts.join(", ")),
    }
}

fn a6() -> Verdict {
    const SEEDS: [u64; 3] = [1, 2, 3];
    let mut parts = Vec::new();
    let mut seed_passes = 0;
    for seed in SEEDS {
        let data = gen_dataset(20_000, seed).unwrap();
        let real = coeff_stats(&data).unwrap();
        let fake_stats = |kind, half_batch| {
            let cfg = TrainConfig {
                epochs: 30,
                batch_size: 128,
                filter: kind,
                sigma: 0.15,
                schedule: TimeSchedule::Fixed(8),
                half_batch,
                seed,
                ..Default::default()
            };
            let ckpt = train(&cfg, &data).unwrap().checkpoint;
            coeff_stats(&generate(&ckpt, 4096, seed ^ 0xFACE).unwrap()).unwrap()
        };
        let ss = fake_stats(FilterKind::Ss, false);
        let nss = fake_stats(FilterKind::Nss, true);
        let ss_ratio8 = ss.std[7] / real.std[7];
        let nss_ratios: Vec<f64> = (0..ORDER).map(|i| nss.std[i] / real.std[i]).collect();
        let nss_min = nss_ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let ss_ok = ss_ratio8 < 0.5;
        let nss_ok = nss_min >= 0.5;
        seed_passes += usize::from(ss_ok && nss_ok);
        let fmt: Vec<String> = nss_ratios.iter().map(|r| format!("{r:.2}")).collect();
        parts.push(format!(
            "seed {seed}: SS α8 ratio {ss_ratio8:.3} {} / NSS ratios [{}] {}",
            if ss_ok { "ok" } else { "x" },
            fmt.join(" "),
            if nss_ok { "ok" } else { "x" }
        ));
    }
    Verdict {
        ok: seed_passes * 2 > SEEDS.len(),
        detail: format!("{seed_passes}/3 seeds pass; {}", parts.join("; ")),
    }
}

fn a7() -> Verdict {
    let sched = AnnealSchedule {
        t0: 256,
        beta: 20.0,
    };
    let start = anneal_t(0.0, &sched).unwrap();
    let end = anneal_t(1.0, &sched).unwrap();
    let grid: Vec<u32> = (0..=1000)
        .map(|k| anneal_t(k as f64 / 1000.0, &sched).unwrap())
        .collect();
    let monotone = grid.windows(2).all(|w| w[1] <= w[0]);
    Verdict {
        ok: start == 256 && end == 0 && monotone,
        detail: format!("t(0)={start}, t(1)={end}, non-increasing on 1001 points: {monotone}"),
    }
}

fn a8() -> Verdict {
    let stats = coeff_stats(&gen_dataset(5000, 8).unwrap()).unwrap();
    let self_d = coeff_frechet(&stats, &stats).unwrap();
    let mut eye = [[0.0; ORDER]; ORDER];
    for (i, row) in eye.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mu = [0.3, -0.2, 1.0, 0.0, -1.5, 0.25, 0.5, -0.75];
    let shift = frechet_gaussian(&mu, &eye, &[0.0; ORDER], &eye).unwrap();
    let expected: f64 = mu.iter().map(|v| v * v).sum();
    let shift_err = (shift - expected).abs();
    let root = sym_psd_sqrt(&stats.cov).unwrap();
    let mut recon_err = 0.0f64;
    for i in 0..ORDER {
        for j in 0..ORDER {
            let v: f64 = (0..ORDER).map(|k| root[i][k] * root[k][j]).sum();
            recon_err = recon_err.max((v - stats.cov[i][j]).abs());
        }
    }
    Verdict {
        ok: self_d < 1e-8 && shift_err < 1e-8 && recon_err < 1e-8,
        detail: format!(
            "d(S,S) {self_d:.1e}, mean-shift err {shift_err:.1e}, sqrt recon err {recon_err:.1e}"
        ),
    }
}

fn a9() -> Verdict {
    let data = gen_dataset(4096, 9).unwrap();
    let base = TrainConfig {
        epochs: 3,
        seed: 99,
        ..Default::default()
    };
    let none = TrainConfig {
        filter: FilterKind::None,
        ..base.clone()
    };
    let nss = TrainConfig {
        filter: FilterKind::Nss,
        schedule: TimeSchedule::Anneal(AnnealSchedule { t0: 0, beta: 20.0 }),
        ..base
    };
    let a = train(&none, &data).unwrap();
    let b = train(&nss, &data).unwrap();
    let bytes_equal = a.checkpoint.to_bytes() == b.checkpoint.to_bytes();
    let history_equal = a.history == b.history;
    Verdict {
        ok: bytes_equal && history_equal,
        detail: format!(
            "{} steps; checkpoint bytes identical: {bytes_equal}, history identical: {history_equal}",
            a.history.records.len()
        ),
    }
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        run("A1", "closed-form equivalence", Some(secs(5)), a1),
        run("A2", "noise-space variance law", Some(secs(10)), a2),
        run("A3", "SS <= NSS <= NS ordering", Some(secs(60)), a3),
        run("A4", "Hadamard roundtrip", Some(secs(5)), a4),
        run("A5", "gradient integrity", Some(secs(30)), a5),
        run("A6", "coefficient diversity", None, a6),
        run("A7", "annealing endpoints", Some(secs(1)), a7),
        run("A8", "proxy metric sanity", Some(secs(1)), a8),
        run("A9", "baseline equivalence", Some(secs(60)), a9),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
