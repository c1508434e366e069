//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. Criterion 8 needs the CIFAR-10 training batches under
//! `$STAGECUT_DATA_DIR`; without them it reports BLOCKED and does not fail.
//! Set `STAGECUT_FULL=1` to run the full-size variant of criterion 8.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stagecut::budget::{round_half_up, training_pflops, TrainingBudget};
use stagecut::cluster::{self, GridSpec, Objective};
use stagecut::dataset::{self, Dataset, DATA_DIR_ENV};
use stagecut::denoiser::OptimalDenoiser;
use stagecut::sampler::{self, SampleInit, SampleOptions};
use stagecut::schedule::{KernelParams, NoiseSchedule, VpSchedule};
use stagecut::similarity::{self, EndpointSample, PairSample, SimilarityConfig};

enum Verdict {
    Pass(String),
    Fail(String),
    Blocked(String),
}

type Check = fn() -> Verdict;

fn timed(limit: Option<Duration>, body: impl FnOnce() -> Result<String, String>) -> Verdict {
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    match outcome {
        Err(msg) => Verdict::Fail(format!("{msg} ({:.2} s)", elapsed.as_secs_f64())),
        Ok(msg) => match limit {
            Some(l) if elapsed > l => {
                Verdict::Fail(format!("{msg}; took {:.2} s, limit {} s", elapsed.as_secs_f64(), l.as_secs()))
            }
            _ => Verdict::Pass(format!("{msg} ({:.2} s)", elapsed.as_secs_f64())),
        },
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_dataset(rng: &mut ChaCha8Rng, n_points: usize, dim: usize) -> Dataset {
    let flat: Vec<f64> = (0..n_points * dim).map(|_| rng.random::<f64>()).collect();
    Dataset::from_flat(flat, dim, (0.0, 1.0), "random").unwrap()
}

fn rel_norm(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Plain linear-domain weights, no max shift.
fn naive_eps(d: &Dataset, k: &KernelParams, x: &[f64]) -> Vec<f64> {
    let mut num = vec![0.0; d.dim()];
    let mut den = 0.0;
    for y in d.iter() {
        let d2: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - k.s * yi).powi(2)).sum();
        let w = (-d2 / (2.0 * k.s * k.s * k.sigma * k.sigma)).exp();
        den += w;
        for (acc, yi) in num.iter_mut().zip(y) {
            *acc += w * yi;
        }
    }
    x.iter().zip(&num).map(|(xi, ni)| (xi - k.s * ni / den) / (k.s * k.sigma)).collect()
}

fn denoiser_oracle() -> Verdict {
    timed(Some(Duration::from_secs(10)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let n_points = rng.random_range(1..=100);
            let dim = rng.random_range(1..=16);
            let d = random_dataset(&mut rng, n_points, dim);
            let k = KernelParams::new(rng.random_range(0.3..=1.0), rng.random_range(0.2..=5.0));
            let anchor = d.point(rng.random_range(0..n_points)).to_vec();
            let z = normal_vec(&mut rng, dim);
            let x: Vec<f64> = anchor.iter().zip(&z).map(|(y, e)| k.s * y + k.s * k.sigma * e).collect();
            let got = OptimalDenoiser::new(&d).optimal_eps(&k, &x).map_err(|e| e.to_string())?.eps_star;
            worst = worst.max(rel_norm(&got, &naive_eps(&d, &k, &x)));
        }
        if worst <= 1e-10 {
            Ok(format!("200 instances, worst relative error {worst:.2e}"))
        } else {
            Err(format!("worst relative error {worst:.2e} > 1e-10"))
        }
    })
}

fn score_gradient() -> Verdict {
    timed(Some(Duration::from_secs(30)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let n_points = rng.random_range(1..=50);
            let dim = rng.random_range(1..=8);
            let d = random_dataset(&mut rng, n_points, dim);
            let k = KernelParams::new(rng.random_range(0.3..=1.0), rng.random_range(0.2..=5.0));
            let anchor = d.point(rng.random_range(0..n_points)).to_vec();
            let z = normal_vec(&mut rng, dim);
            let x: Vec<f64> = anchor.iter().zip(&z).map(|(y, e)| k.s * y + k.s * k.sigma * e).collect();
            let den = OptimalDenoiser::new(&d);
            let score = den.score(&k, &x).map_err(|e| e.to_string())?;
            let h = 1e-4 * k.s * k.sigma;
            let fd: Vec<f64> = (0..dim)
                .map(|j| {
                    let (mut up, mut dn) = (x.clone(), x.clone());
                    up[j] += h;
                    dn[j] -= h;
                    (den.log_density(&k, &up).unwrap() - den.log_density(&k, &dn).unwrap()) / (2.0 * h)
                })
                .collect();
            worst = worst.max(rel_norm(&score, &fd));
        }
        if worst <= 1e-5 {
            Ok(format!("100 instances, worst relative error {worst:.2e}"))
        } else {
            Err(format!("worst relative error {worst:.2e} > 1e-5"))
        }
    })
}

fn schedule_identities() -> Verdict {
    timed(None, || {
        let vp = VpSchedule::default();
        let mut var_err = 0.0f64;
        let mut trip_err = 0.0f64;
        let mut fd_err = 0.0f64;
        for i in 0..1000 {
            let t = vp.t_min + (1.0 - vp.t_min) * i as f64 / 999.0;
            let k = vp.kernel_at(t).map_err(|e| e.to_string())?;
            var_err = var_err.max((k.s * k.s * (1.0 + k.sigma * k.sigma) - 1.0).abs());
            let back = vp.t_of_snr(vp.snr(t).unwrap()).map_err(|e| e.to_string())?;
            trip_err = trip_err.max((back - t).abs());

            // f = d ln s / dt and g^2 = s^2 d(sigma^2)/dt, both by central differences
            let h = 1e-6;
            if t - h >= 0.0 && t + h <= 1.0 {
                let (a, b) = (vp.kernel_at(t - h).unwrap(), vp.kernel_at(t + h).unwrap());
                let f_fd = (b.s.ln() - a.s.ln()) / (2.0 * h);
                let g2_fd = k.s * k.s * (b.sigma * b.sigma - a.sigma * a.sigma) / (2.0 * h);
                let (f, g2) = vp.drift_diffusion(t).unwrap();
                fd_err = fd_err.max(((f - f_fd) / f).abs()).max(((g2 - g2_fd) / g2).abs());
            }
        }
        let msg = format!("variance {var_err:.1e}, round trip {trip_err:.1e}, drift/diffusion {fd_err:.1e}");
        if var_err <= 1e-12 && trip_err <= 1e-9 && fd_err <= 1e-6 {
            Ok(msg)
        } else {
            Err(msg)
        }
    })
}

fn threshold_exactness() -> Verdict {
    timed(None, || {
        let k = 300_000;
        let store: Vec<EndpointSample> = (0..k)
            .map(|i| {
                let t = (i as f64 + 0.5) / k as f64;
                EndpointSample { k: i, t, s0: f64::from(u8::from(t < 0.3)), s1: f64::from(u8::from(t > 0.7)) }
            })
            .collect();
        let t_min = stagecut::schedule::DEFAULT_T_MIN;
        let grid = GridSpec::threshold_default(t_min, cluster::DEFAULT_GRID_POINTS).map_err(|e| e.to_string())?;
        // the store supports any tau below 1/3 + 0.5/K; no grid point falls in that sliver
        let below = grid.points.iter().copied().filter(|&p| p <= 1.0 / 3.0).fold(f64::NAN, f64::max);
        let above = grid.points.iter().copied().filter(|&p| p >= 2.0 / 3.0).fold(f64::NAN, f64::min);
        let sliver = 0.5 / k as f64;
        if grid
            .points
            .iter()
            .any(|&p| (p > 1.0 / 3.0 && p <= 1.0 / 3.0 + sliver) || (p < 2.0 / 3.0 && p >= 2.0 / 3.0 - sliver))
        {
            return Err("a grid point falls inside the sampling sliver; the closed form is ambiguous".into());
        }
        let p = cluster::solve_three_interval(&store, 0.9, &grid, cluster::DEFAULT_MIN_SUPPORT)
            .map_err(|e| e.to_string())?;
        if p.cuts == [below, above] {
            Ok(format!("t1 = {below}, t2 = {above}"))
        } else {
            Err(format!("got {:?}, expected [{below}, {above}]", p.cuts))
        }
    })
}

fn brute_force(store: &[PairSample], candidates: &[f64], n: usize, objective: Objective) -> (Vec<f64>, f64) {
    fn cost(store: &[PairSample], cuts: &[f64], objective: Objective) -> f64 {
        let label = |t: f64| cuts.iter().filter(|&&c| c < t).count();
        store
            .iter()
            .filter(|p| label(p.t_a) == label(p.t_b))
            .map(|p| match objective {
                Objective::WithinDissimilarity => 1.0 - p.s,
                Objective::WithinSimilarityLiteral => p.s,
            })
            .sum()
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut idx: Vec<usize> = (0..n - 1).collect();
    loop {
        let cuts: Vec<f64> = idx.iter().map(|&i| candidates[i]).collect();
        let c = cost(store, &cuts, objective);
        // lexicographic enumeration: only a strictly better value replaces the incumbent
        if best.as_ref().is_none_or(|(_, b)| c < *b) {
            best = Some((cuts, c));
        }
        let m = candidates.len();
        let Some(pos) = (0..idx.len()).rev().find(|&j| idx[j] < m - (idx.len() - j)) else { break };
        idx[pos] += 1;
        for j in pos + 1..idx.len() {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best.unwrap()
}

fn dp_exactness() -> Verdict {
    timed(Some(Duration::from_secs(10)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        let grid = GridSpec::uniform(1.0 / 15.0, 1.0, 15).map_err(|e| e.to_string())?;
        let candidates = grid.cut_candidates().to_vec();
        let mut checked = 0;
        for _ in 0..50 {
            let size = rng.random_range(20..=200);
            let store: Vec<PairSample> = (0..size)
                .map(|k| PairSample {
                    k,
                    t_a: rng.random(),
                    t_b: rng.random(),
                    s: f64::from(rng.random_range(0..=16u8)) / 16.0,
                })
                .collect();
            for n in 2..=4 {
                for objective in [Objective::WithinDissimilarity, Objective::WithinSimilarityLiteral] {
                    let p = cluster::solve_n_interval(&store, n, &grid, objective).map_err(|e| e.to_string())?;
                    let (cuts, value) = brute_force(&store, &candidates, n, objective);
                    if p.cuts != cuts || p.objective_value != Some(value) {
                        return Err(format!(
                            "n={n} {objective:?}: dp {:?}/{:?}, exhaustive {cuts:?}/{value}",
                            p.cuts, p.objective_value
                        ));
                    }
                    checked += 1;
                }
            }
        }
        Ok(format!("{checked} (store, n, objective) cases identical"))
    })
}

fn budget_table() -> Verdict {
    timed(None, || {
        let rows = [
            (4.5e5, 17.65, 7.94),
            (2.5e5, 18.65, 4.66),
            (5.7e5, 17.65, 10.06),
            (4.3e5, 19.25, 8.28),
            (4.9e5, 88.39, 43.31),
            (1.7e5, 76.19, 12.95),
        ];
        for (iterations, gflops_per_eval, expect) in rows {
            let p = training_pflops(&TrainingBudget { iterations, gflops_per_eval }).map_err(|e| e.to_string())?;
            if round_half_up(p, 2) != expect {
                return Err(format!("{iterations} x {gflops_per_eval} gave {p}, expected {expect}"));
            }
        }
        Ok("6 of 6 values".into())
    })
}

fn sampler_validation() -> Verdict {
    timed(Some(Duration::from_secs(60)), || {
        let vp = VpSchedule::default();
        let opts = SampleOptions::default();
        let end = vp.kernel_at(vp.t_min).unwrap();
        let start = vp.kernel_at(1.0).unwrap();
        let mut worst = 0.0f64;
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        for seed in 0..20u64 {
            let dim = rng.random_range(1..=16);
            let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let d = Dataset::from_flat(y.clone(), dim, (-1.0, 1.0), "single").unwrap();
            let run = sampler::sample(&OptimalDenoiser::new(&d), &vp, SampleInit::Seed(seed), &opts)
                .map_err(|e| e.to_string())?;
            // linear flow: the standardized offset (x - s y) / (s sigma) is conserved
            for ((&yj, &x0), &x1) in y.iter().zip(&run.x_init).zip(&run.x_final) {
                let z = (x0 - start.s * yj) / (start.s * start.sigma);
                let exact = end.s * yj + end.s * end.sigma * z;
                worst = worst.max((x1 - exact).abs());
            }
        }
        if worst > 1e-3 {
            return Err(format!("single point: max deviation {worst:.2e} > 1e-3"));
        }

        let dim = 8;
        let mut flat = vec![0.0; dim * dim];
        for i in 0..dim {
            flat[i * dim + i] = 2.0;
        }
        let d = Dataset::from_flat(flat, dim, (0.0, 2.0), "one-hot").unwrap();
        let separation = 2.0 * 2f64.sqrt();
        let den = OptimalDenoiser::new(&d);
        let mut far = 0.0f64;
        for seed in 0..100 {
            let run = sampler::sample(&den, &vp, SampleInit::Seed(seed), &opts).map_err(|e| e.to_string())?;
            far = far.max(sampler::nearest_point(&d, &run.x_final).unwrap().1);
        }
        if far <= 0.05 * separation {
            Ok(format!("single point max deviation {worst:.2e}; 100/100 endpoints within {far:.3} of a data point"))
        } else {
            Err(format!("an endpoint ended {far:.3} from every data point (limit {:.3})", 0.05 * separation))
        }
    })
}

fn cifar_paths() -> Option<Vec<PathBuf>> {
    let dir = PathBuf::from(std::env::var_os(DATA_DIR_ENV)?);
    let paths = dataset::cifar10_train_paths(&dir);
    paths.iter().all(|p| p.is_file()).then_some(paths)
}

fn cifar_reproduction() -> Verdict {
    let Some(paths) = cifar_paths() else {
        return Verdict::Blocked(format!("CIFAR-10 training batches not found under ${DATA_DIR_ENV}"));
    };
    let full = std::env::var("STAGECUT_FULL").is_ok_and(|v| v == "1");
    timed(None, || {
        let all = dataset::load_cifar10(&paths).map_err(|e| e.to_string())?;
        let (data, k, tol) = if full {
            (all, 50_000, 0.025)
        } else {
            (dataset::subsample(&all, 10_000, 0).map_err(|e| e.to_string())?, 10_000, 0.06)
        };
        let sched = NoiseSchedule::default();
        let cfg = SimilarityConfig { k_samples: k, seed: 0, ..SimilarityConfig::for_schedule(&sched) };
        let den = OptimalDenoiser::new(&data).with_nearest_shortcut(true);

        let ep = similarity::run_endpoint_study(&den, &sched, &cfg, None).map_err(|e| e.to_string())?;
        let grid = GridSpec::threshold_default(sched.t_min(), cluster::DEFAULT_GRID_POINTS).unwrap();
        let p =
            cluster::solve_three_interval(&ep, 0.9, &grid, cluster::DEFAULT_MIN_SUPPORT).map_err(|e| e.to_string())?;
        let (t1, t2) = (p.cuts[0], p.cuts[1]);
        let mut report = format!("t1 = {t1:.4} (dev {:+.4}), t2 = {t2:.4} (dev {:+.4})", t1 - 0.442, t2 - 0.631);
        let mut ok = (t1 - 0.442).abs() <= tol && (t2 - 0.631).abs() <= tol;

        let pairs = similarity::run_pair_study(&den, &sched, &cfg, None).map_err(|e| e.to_string())?;
        let reference: [&[f64]; 3] = [&[0.476], &[0.376, 0.526, 0.726], &[0.376, 0.476, 0.626, 0.776]];
        for want in reference {
            let n = want.len() + 1;
            let q = cluster::solve_n_interval(&pairs, n, &GridSpec::pair_default(), Objective::default())
                .map_err(|e| e.to_string())?;
            let dev = q.cuts.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ok &= dev <= 0.05;
            report.push_str(&format!("; n={n} cuts {:?} (max dev {dev:.3})", q.cuts));
        }
        let label = if full { "full" } else { "reduced" };
        if ok {
            Ok(format!("{label}: {report}"))
        } else {
            Err(format!("{label}: {report}"))
        }
    })
}

fn determinism() -> Verdict {
    timed(None, || {
        let centers: Vec<Vec<f64>> =
            (0..6).map(|c| (0..12).map(|j| ((c * 7 + j * 5) % 13) as f64 / 13.0).collect()).collect();
        let d = dataset::synth_clusters(&centers, 5, 0.01, 9).map_err(|e| e.to_string())?;
        let sched = NoiseSchedule::default();
        let cfg = SimilarityConfig { k_samples: 1000, seed: 42, ..SimilarityConfig::for_schedule(&sched) };
        let den = OptimalDenoiser::new(&d);
        let mut outputs = Vec::new();
        for threads in [1, 8] {
            let ep = similarity::run_endpoint_study(&den, &sched, &cfg, Some(threads)).map_err(|e| e.to_string())?;
            let pr = similarity::run_pair_study(&den, &sched, &cfg, Some(threads)).map_err(|e| e.to_string())?;
            let grid = GridSpec::threshold_default(sched.t_min(), 1000).unwrap();
            let p3 = cluster::solve_three_interval(&ep, 0.5, &grid, cluster::DEFAULT_MIN_SUPPORT);
            let pn = cluster::solve_n_interval(&pr, 3, &GridSpec::pair_default(), Objective::default());
            outputs.push((
                similarity::endpoint_csv(&ep),
                similarity::pair_csv(&pr),
                format!("{p3:?}"),
                serde_json::to_string(&pn.map_err(|e| e.to_string())?).unwrap(),
            ));
        }
        if outputs[0] == outputs[1] {
            Ok("stores and partitions byte-identical at 1 and 8 threads".into())
        } else {
            Err("outputs differ between 1 and 8 threads".into())
        }
    })
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("optimal denoiser vs linear-domain oracle", denoiser_oracle),
        ("score vs finite-difference gradient", score_gradient),
        ("schedule identities", schedule_identities),
        ("threshold search on step store", threshold_exactness),
        ("n-interval DP vs exhaustive search", dp_exactness),
        ("training PFLOPs table", budget_table),
        ("probability-flow sampler", sampler_validation),
        ("CIFAR-10 cut reproduction", cifar_reproduction),
        ("thread-count determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let (tag, detail) = match check() {
            Verdict::Pass(m) => ("PASS", m),
            Verdict::Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Verdict::Blocked(m) => ("BLOCKED", m),
        };
        println!("criterion {} {tag}: {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
