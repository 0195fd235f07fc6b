//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run a subset with `cargo test --test acceptance -- 4 5`.

mod common;

use common::{gradient_check, iterated_integrals, mean_se, random_path, regression_oracle, toy_model};
use njode_core::generators::{generate, GeneratorConfig};
use njode_core::harness::{compare_losses, sweep, train, write_metrics_csv, ExperimentConfig, Profile};
use njode_core::model::Trajectory;
use njode_core::objectives::{noise_adapted_loss, LossConfig, LossKind};
use njode_core::oracles::{bm_noisy_oracle, gbm_oracle, oracle_trajectory, poisson_oracle};
use njode_core::signature::{chen_concatenate, path_signature, signature_len};
use njode_core::GeneratorKind;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use std::time::Instant;

const DESK_BUDGET_SECS: f64 = 30.0 * 60.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn bm_noise_desk() -> Verdict {
    let cfg = ExperimentConfig::preset(GeneratorKind::BmNoisy, Profile::Desk);
    let start = Instant::now();
    let ds = generate(&cfg.generator).unwrap();
    let rows = compare_losses(&cfg, &ds, &[LossKind::NoiseAdapted, LossKind::Standard]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let noise = rows[0].min_eval;
    let standard = rows[1].min_eval;
    let ratio = standard / noise;
    verdict(
        noise <= 5e-3 && ratio >= 5.0 && secs <= DESK_BUDGET_SECS,
        format!("noise-adapted min eval {noise:.3e} (<= 5e-3), standard {standard:.3e}, ratio {ratio:.2} (>= 5), {secs:.0} s for both runs"),
    )
}

fn gbm_desk() -> Verdict {
    let cfg = ExperimentConfig::preset(GeneratorKind::GbmDependent, Profile::Desk);
    let out = train(&cfg).unwrap();
    let r = &out.report;
    verdict(
        r.min_eval <= 5e-3 && r.wall_clock_secs <= DESK_BUDGET_SECS,
        format!("min eval {:.3e} (<= 5e-3) at epoch {}, {:.0} s", r.min_eval, r.min_eval_epoch, r.wall_clock_secs),
    )
}

fn noise_sweep() -> Verdict {
    let cfg = ExperimentConfig::preset(GeneratorKind::HighdimNoisy, Profile::Desk);
    let zetas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let rows = sweep(&cfg, &zetas, &[LossKind::NoiseAdapted, LossKind::Standard]).unwrap();
    let curve = |k: LossKind| -> Vec<f64> { rows.iter().filter(|r| r.variant == k).map(|r| r.min_eval).collect() };
    let noise = curve(LossKind::NoiseAdapted);
    let standard = curve(LossKind::Standard);
    // least-squares line through the noise-adapted curve
    let n = zetas.len() as f64;
    let zm = zetas.iter().sum::<f64>() / n;
    let ym = noise.iter().sum::<f64>() / n;
    let slope = zetas.iter().zip(&noise).map(|(z, y)| (z - zm) * (y - ym)).sum::<f64>()
        / zetas.iter().map(|z| (z - zm).powi(2)).sum::<f64>();
    let icpt = ym - slope * zm;
    let worst = zetas
        .iter()
        .zip(&noise)
        .map(|(z, y)| (y - (icpt + slope * z)).abs() / (icpt + slope * z))
        .fold(0.0, f64::max);
    let crossing = zetas.iter().zip(noise.iter().zip(&standard)).find(|(_, (a, b))| b > a).map(|(z, _)| *z);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ");
    verdict(
        worst <= 0.5 && crossing.is_some(),
        format!(
            "noise-adapted [{}] max deviation from linear fit {:.0}% (<= 50%); standard [{}]; standard above from zeta {:?}",
            fmt(&noise),
            100.0 * worst,
            fmt(&standard),
            crossing
        ),
    )
}

fn signatures() -> Verdict {
    let start = Instant::now();
    let mut rng = common::rng(404);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=3);
        let m = rng.random_range(1..=4);
        let segs = rng.random_range(2..=8);
        let path = random_path(&mut rng, d, segs);
        let sig = path_signature(&path, m).unwrap();
        let quad = iterated_integrals(&path, m);
        let cut = rng.random_range(0..path.len());
        let chen = chen_concatenate(
            &path_signature(&path[..=cut], m).unwrap(),
            &path_signature(&path[cut..], m).unwrap(),
        )
        .unwrap();
        for ((a, b), c) in sig.coeffs().iter().zip(&quad).zip(chen.coeffs()) {
            worst = worst.max((a - b).abs()).max((a - c).abs());
        }
    }
    let dims_ok = (1..=4usize)
        .all(|d| (0..=5usize).all(|m| signature_len(d, m) == (0..=m).map(|k| d.pow(k as u32)).sum::<usize>()));
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-8 && dims_ok && secs < 10.0,
        format!("max abs error {worst:.1e} (< 1e-8), dimension formula {dims_ok}, {secs:.2} s (< 10 s)"),
    )
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let losses = [
        LossConfig { eps: 1e-3, ..LossConfig::new(LossKind::Standard) },
        LossConfig::new(LossKind::NoiseAdapted),
        LossConfig { bias: vec![0.1, -0.05], ..LossConfig::new(LossKind::BiasAdjusted) },
        LossConfig { eps: 1e-3, ..LossConfig::new(LossKind::DtWeightedStandard) },
    ];
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for l in &losses {
        let a = gradient_check(&mut toy_model(true, true, 100.0), l);
        let b = gradient_check(&mut toy_model(false, false, 0.3), l);
        let g = a.merge(b);
        worst = worst.max(g.worst_rel);
        parts.push(format!(
            "{} {:.1e} (abs {:.1e}, max |grad| {:.1e}, {} weights)",
            l.kind.name(),
            g.worst_rel,
            g.max_abs_err,
            g.max_grad,
            g.checked
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 60.0,
        format!("worst relative error {} (< 1e-4), {secs:.1} s (< 60 s)", parts.join(", ")),
    )
}

fn oracles() -> Verdict {
    let times = [0.3, 0.7];
    let query = [0.5, -0.2];
    let reg = regression_oracle(times, 0.8, 0.5, 1_000_000, query);
    let bm = bm_noisy_oracle(&times, &query, 0.5, 0.8).unwrap();
    let bm_ok = (reg - bm).abs() < 1e-2;

    let mut rng = common::rng(61);
    let (mu, vol, dt): (f64, f64, f64) = (2.0, 0.3, 0.1);
    let xs: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            ((mu - 0.5 * vol * vol) * dt + vol * dt.sqrt() * z).exp()
        })
        .collect();
    let (gm, gse) = mean_se(&xs);
    let g = gbm_oracle(1.0, 0.0, mu, dt);
    let gbm_ok = (gm - g).abs() < 3.0 * gse;

    let p = Poisson::new(1.0).unwrap();
    let ns: Vec<f64> = (0..1_000_000).map(|_| 3.0 + p.sample(&mut rng)).collect();
    let (pm, pse) = mean_se(&ns);
    let po = poisson_oracle(3.0, 0.2, 2.0, 0.7);
    let poi_ok = (pm - po).abs() < 3.0 * pse;

    let t = [0.1, 0.4, 0.75];
    let o = [0.3, -0.5, 0.9];
    let ladder: Vec<f64> =
        [1e-2, 1e-4, 1e-6].iter().map(|&s| (bm_noisy_oracle(&t, &o, s, 0.9).unwrap() - 0.9).abs()).collect();
    let ladder_ok = ladder.windows(2).all(|w| w[1] < w[0]) && ladder.iter().zip([1e-2, 1e-4, 1e-6]).all(|(d, s)| *d < 10.0 * s);
    verdict(
        bm_ok && gbm_ok && poi_ok && ladder_ok,
        format!(
            "bm |{bm:.4} - regression {reg:.4}| = {:.1e} (< 1e-2); gbm {g:.5} vs MC {gm:.5} +- {gse:.1e}; poisson {po:.3} vs MC {pm:.4} +- {pse:.1e}; sigma ladder {ladder:?}",
            (reg - bm).abs()
        ),
    )
}

fn orthogonality() -> Verdict {
    let cfg = GeneratorConfig { n_paths: 20_000, seed: 77, ..GeneratorConfig::bm_noisy() };
    let ds = generate(&cfg).unwrap();
    let delta = 0.1;
    let mut base = Vec::with_capacity(ds.len());
    let mut shifted = Vec::with_capacity(ds.len());
    let mut events = 0usize;
    for p in &ds.paths {
        let fw = &p.framework;
        let times = fw.times().to_vec();
        events += fw.n();
        let o = oracle_trajectory(&ds.header, p, &times).unwrap().values;
        let traj = |shift: f64| {
            let pre: Vec<Vec<f64>> =
                o.iter().enumerate().map(|(i, v)| v.iter().map(|x| x + if i > 0 { shift } else { 0.0 }).collect()).collect();
            Trajectory { times: times.clone(), values: pre.clone(), obs_times: times.clone(), pre_jump: pre.clone(), post_jump: pre }
        };
        base.push(traj(0.0));
        shifted.push(traj(delta));
    }
    let fws: Vec<_> = ds.paths.iter().map(|p| &p.framework).collect();
    let a: Vec<_> = fws.iter().copied().zip(&base).collect();
    let b: Vec<_> = fws.iter().copied().zip(&shifted).collect();
    let l0 = noise_adapted_loss(&a).unwrap();
    let l1 = noise_adapted_loss(&b).unwrap();
    let predicted = l0 + delta * delta;
    let rel = (l1 - predicted).abs() / (delta * delta);
    verdict(
        events >= 100_000 && l0 < l1 && rel <= 0.1,
        format!(
            "{events} events; loss(oracle) {l0:.5} + mean sq perturbation {:.2e} = {predicted:.5} vs loss(oracle+delta) {l1:.5}; deviation {:.1}% of the perturbation (<= 10%)",
            delta * delta,
            100.0 * rel
        ),
    )
}

fn determinism() -> Verdict {
    let mut cfg = ExperimentConfig::preset(GeneratorKind::BmNoisy, Profile::Desk).with_seed(8);
    cfg.generator.n_paths = 300;
    cfg.training.epochs = 3;
    cfg.training.batch_size = 50;
    cfg.model.dropout = 0.1;
    cfg.threads = 1;
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let r = train(&cfg).unwrap().report;
        let path = dir.path().join(format!("metrics{k}.csv"));
        let mut f = std::fs::File::create(&path).unwrap();
        write_metrics_csv(&r, &mut f).unwrap();
        files.push(std::fs::read(&path).unwrap());
    }
    verdict(files[0] == files[1], format!("two runs wrote {} and {} identical bytes: {}", files[0].len(), files[1].len(), files[0] == files[1]))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Verdict); 8] = [
        (1, "BM + noise, desk scale", bm_noise_desk),
        (2, "GBM with dependent observations, desk scale", gbm_desk),
        (3, "noise sweep crossover", noise_sweep),
        (4, "signature correctness", signatures),
        (5, "gradient correctness", gradients),
        (6, "oracle correctness", oracles),
        (7, "orthogonality of the noise-adapted loss", orthogonality),
        (8, "determinism", determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id} ({name}): {} [{:.1} s]", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
