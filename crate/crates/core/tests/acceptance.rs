//! Acceptance suite: one PASS/FAIL line per criterion. Set `QKAN_ACCEPTANCE_STRICT=1`
//! to turn any failure into a nonzero exit.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ccqkan::data::{load_digits, synthetic_dataset, Digits};
use ccqkan::experiments::{
    run_grid, run_mnist_binary, run_mnist_ova, write_results_csv, GridSpec, MnistSpec,
};
use ccqkan::rng::{Purpose, RngStream};
use ccqkan::statevector::{
    eigenvalue_scale_factor, estimate_sq_overlap_uniform, sample_counts, swap_test_p0,
};
use ccqkan::stats::{mean_std, wilcoxon};
use ccqkan::{
    depolarize_swap, depolarize_uniform, forward, init_params, resources, train, EvalCondition,
    ExecutionMode, ModelVariant, NetworkConfig, NoiseMode, Params, RunRecord, TrainConfig,
    REFERENCE_CONFIGS,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

const TABLE_I: [[usize; 9]; 10] = [
    [2, 2, 12, 1, 2, 6, 3, 3, 1],
    [2, 3, 12, 1, 2, 6, 3, 3, 1],
    [2, 4, 18, 1, 3, 6, 4, 3, 1],
    [3, 2, 24, 1, 2, 12, 4, 4, 2],
    [3, 3, 24, 1, 2, 12, 4, 4, 2],
    [3, 4, 36, 1, 3, 12, 4, 4, 1],
    [4, 2, 40, 1, 2, 20, 4, 5, 2],
    [4, 3, 40, 1, 2, 20, 4, 5, 2],
    [4, 4, 60, 1, 3, 20, 5, 5, 2],
    [4, 5, 60, 1, 3, 20, 5, 5, 2],
];

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(
        elapsed <= limit,
        format!(
            "{detail}; {:.1}s (limit {}s)",
            elapsed.as_secs_f64(),
            limit.as_secs()
        ),
    )
}

fn table_i() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    for row in TABLE_I {
        let r = resources(row[0], row[1]).map_err(|e| e.to_string())?;
        let got = [
            r.n,
            r.degree,
            r.q_par,
            r.c_par,
            r.q_seq,
            r.c_seq,
            r.q_red,
            r.c_red,
            r.delta_q as usize,
        ];
        if got != row {
            mismatches.push(format!("{got:?} != {row:?}"));
        }
    }
    if !mismatches.is_empty() {
        return Err(mismatches.join("; "));
    }
    within(
        start.elapsed(),
        Duration::from_secs(1),
        "10/10 rows match".into(),
    )
}

fn functional_equivalence() -> Outcome {
    let start = Instant::now();
    let ideal = EvalCondition::ideal();
    let mut rng = RngStream::new(2024, 1);
    let mut none = RngStream::new(0, 0);
    let mut worst = 0.0f64;
    for &(n, d) in &REFERENCE_CONFIGS {
        let seq = NetworkConfig::new(n, d, ExecutionMode::Sequential).map_err(|e| e.to_string())?;
        let merged = seq.with_mode(ExecutionMode::Merged);
        for _ in 0..1000 {
            let mut p: Params = init_params(n, d, &mut rng);
            p.set_gfcf(rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let a = forward(&p, &x, &seq, &ideal, &mut none).map_err(|e| e.to_string())?;
            let b = forward(&p, &x, &merged, &ideal, &mut none).map_err(|e| e.to_string())?;
            worst = worst.max((a - b).abs());
        }
    }
    check(
        worst <= 1e-10,
        format!("max |y_merged - y_seq| = {worst:.3e} over 10000 cases"),
    )
    .and_then(|d| within(start.elapsed(), Duration::from_secs(60), d))
}

fn identical_trajectories() -> Outcome {
    let start = Instant::now();
    let ideal = EvalCondition::ideal();
    let tcfg = TrainConfig::default();
    let mut worst = 0.0f64;
    for &(n, d) in &REFERENCE_CONFIGS {
        let data = synthetic_dataset(n, 30, 0).map_err(|e| e.to_string())?;
        let p0: Params = init_params(
            n,
            d,
            &mut RngStream::keyed(0, Purpose::Init, &[n as u64, d as u64]),
        );
        let mut traces = Vec::new();
        for mode in [ExecutionMode::Sequential, ExecutionMode::Merged] {
            let cfg = NetworkConfig::new(n, d, mode).map_err(|e| e.to_string())?;
            let out = train(&p0, &data, &cfg, &tcfg, &ideal, &mut RngStream::new(0, 0))
                .map_err(|e| e.to_string())?;
            if out.losses.len() != 21 {
                return Err(format!("n={n} d={d}: {} losses recorded", out.losses.len()));
            }
            traces.push(out.losses);
        }
        for (a, b) in traces[0].iter().zip(&traces[1]) {
            worst = worst.max((a - b).abs());
        }
    }
    check(
        worst <= 1e-9,
        format!("max trace gap {worst:.3e} over 10 configs x 20 steps"),
    )
    .and_then(|d| within(start.elapsed(), Duration::from_secs(600), d))
}

fn finals(records: &[RunRecord], n: usize, d: usize, model: ModelVariant) -> Vec<f64> {
    let mut rows: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.n == n && r.degree == d && r.model == model)
        .collect();
    rows.sort_by_key(|r| r.seed);
    rows.iter()
        .map(|r| r.final_loss().unwrap_or(f64::NAN))
        .collect()
}

fn ideal_grid() -> GridSpec {
    GridSpec {
        configs: vec![(2, 2), (3, 3)],
        conditions: vec![EvalCondition::ideal()],
        models: ModelVariant::ALL.to_vec(),
        seeds: 0..16,
        ..GridSpec::default()
    }
}

fn warm_start(records: &[RunRecord]) -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (n, d) in [(2, 2), (3, 3)] {
        let o = finals(records, n, d, ModelVariant::Original);
        let t = finals(records, n, d, ModelVariant::RedT);
        let w = wilcoxon(&o, &t).map_err(|e| format!("n={n} d={d}: {e}"))?;
        let (mo, _) = mean_std(&o);
        let (mt, _) = mean_std(&t);
        let pass = w.p_two_sided < 0.01
            && mt < mo
            && (0.04..=0.30).contains(&mo)
            && (0.01..=0.10).contains(&mt);
        ok &= pass;
        details.push(format!(
            "[{n},{n},1] d={d}: orig {mo:.4} red_t {mt:.4} p={:.2e}",
            w.p_two_sided
        ));
    }
    check(ok, details.join("; "))
}

fn non_degradation(records: &[RunRecord]) -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (n, d) in [(2, 2), (3, 3)] {
        let o = finals(records, n, d, ModelVariant::Original);
        let i = finals(records, n, d, ModelVariant::RedI);
        let w = wilcoxon(&o, &i).map_err(|e| format!("n={n} d={d}: {e}"))?;
        ok &= w.p_two_sided >= 0.05 || w.r_rank_biserial.abs() <= 0.5;
        details.push(format!(
            "[{n},{n},1] d={d}: p={:.3} r={:.3}",
            w.p_two_sided, w.r_rank_biserial
        ));
    }
    check(ok, details.join("; "))
}

fn shot_noise() -> Outcome {
    let start = Instant::now();
    let spec = GridSpec {
        configs: vec![(2, 2)],
        conditions: vec![EvalCondition::shots(1000)],
        models: ModelVariant::ALL.to_vec(),
        seeds: 0..16,
        ..GridSpec::default()
    };
    let records = run_grid(&spec).map_err(|e| e.to_string())?;
    if let Some(r) = records.iter().find(|r| r.failure.is_some()) {
        return Err(format!("run failed: {:?}", r.failure));
    }
    let mut ok = true;
    let mut details = Vec::new();
    for m in ModelVariant::ALL {
        let f = finals(&records, 2, 2, m);
        let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ok &= lo >= 1.0 && hi <= 4.0;
        details.push(format!(
            "{m} in [{lo:.3}, {hi:.3}] mean {:.3}",
            mean_std(&f).0
        ));
    }
    let w = wilcoxon(
        &finals(&records, 2, 2, ModelVariant::Original),
        &finals(&records, 2, 2, ModelVariant::RedI),
    )
    .map_err(|e| e.to_string())?;
    ok &= w.p_two_sided >= 0.05;
    details.push(format!("orig vs red_i p={:.3}", w.p_two_sided));
    check(ok, details.join("; "))
        .and_then(|d| within(start.elapsed(), Duration::from_secs(3600), d))
}

fn estimator_statistics() -> Outcome {
    const N: u64 = 1000;
    const TRIALS: usize = 10_000;
    let mut rng = RngStream::new(7, 7);
    let mut details = Vec::new();
    let mut ok = true;
    for p in [0.5, 0.68, 0.9] {
        // SWAP estimator: outcome probability (1+s)/2 with s = 2p-1, i.e. P(0) = p.
        let swap: Vec<f64> = (0..TRIALS)
            .map(|_| 2.0 * sample_counts(p, N, &mut rng).unwrap() as f64 / N as f64 - 1.0)
            .collect();
        let (m, _) = mean_std(&swap);
        let sigma = 2.0 * (p * (1.0 - p) / N as f64).sqrt() / (TRIALS as f64).sqrt();
        let target = 2.0 * p - 1.0;
        ok &= (m - target).abs() <= 3.0 * sigma;
        details.push(format!("swap p={p}: {:.2}σ", (m - target).abs() / sigma));

        let uni: Vec<f64> = (0..TRIALS)
            .map(|_| estimate_sq_overlap_uniform::<f64>(sample_counts(p, N, &mut rng).unwrap(), N))
            .collect();
        let (m, _) = mean_std(&uni);
        let sigma = (p * (1.0 - p) / N as f64).sqrt() / (TRIALS as f64).sqrt();
        ok &= (m - p).abs() <= 3.0 * sigma;
        details.push(format!("uniform p={p}: {:.2}σ", (m - p).abs() / sigma));
    }
    // The SWAP pathway maps s to P(0) = (1+s)/2; check that link too.
    ok &= (swap_test_p0(0.36f64).unwrap() - 0.68).abs() < 1e-15;
    check(ok, details.join("; "))
}

fn random_state(dim: usize, rng: &mut RngStream) -> DVector<f64> {
    let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    let norm = v.norm();
    v / norm
}

fn depolarized(psi: &DVector<f64>, p: f64) -> DMatrix<f64> {
    let dim = psi.len();
    psi * psi.transpose() * (1.0 - p) + DMatrix::identity(dim, dim) * (p / dim as f64)
}

fn channel_oracle() -> Outcome {
    let mut rng = RngStream::new(11, 3);
    let mut worst = 0.0f64;
    for dim in [2usize, 4, 8, 32] {
        let uniform = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
        for _ in 0..50 {
            let p = rng.random_range(0.0..1.0);
            let a = random_state(dim, &mut rng);
            let b = random_state(dim, &mut rng);
            let s_ab = a.dot(&b).powi(2);
            let rho_a = depolarized(&a, p);
            let rho_b = depolarized(&b, p);
            let swap_oracle = (&rho_a * &rho_b).trace();
            let got = depolarize_swap(s_ab, p, dim, NoiseMode::ExactChannel)
                .map_err(|e| e.to_string())?;
            worst = worst.max((got - swap_oracle).abs());

            let s_u = a.dot(&uniform).powi(2);
            let uni_oracle = (uniform.transpose() * &rho_a * &uniform)[(0, 0)];
            let got = depolarize_uniform(s_u, p, dim, NoiseMode::ExactChannel)
                .map_err(|e| e.to_string())?;
            worst = worst.max((got - uni_oracle).abs());
        }
    }
    let lambda: f64 = eigenvalue_scale_factor(0.01, 32);
    let ok = worst <= 1e-12 && (lambda - 0.9903125).abs() < 1e-15;
    check(
        ok,
        format!("max deviation {worst:.3e}; eigenvalue-scale factor {lambda}"),
    )
}

fn enumerated_p(d: &[f64]) -> f64 {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut rank = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = (r + 1) as f64;
    }
    let w_plus: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| rank[i]).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let t = w_plus.min(total - w_plus);
    let hits = (0u32..1 << n)
        .filter(|mask| {
            let w: f64 = (0..n)
                .filter(|&i| mask >> i & 1 == 1)
                .map(|i| rank[i])
                .sum();
            w <= t + 1e-9
        })
        .count();
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

fn wilcoxon_oracle() -> Outcome {
    let mut rng = RngStream::new(5, 9);
    let mut worst = 0.0f64;
    for n in [5usize, 8, 10, 12] {
        for _ in 0..100 {
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) + 0.3).collect();
            let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x - y).collect();
            let got = wilcoxon(&xs, &ys).map_err(|e| e.to_string())?;
            worst = worst.max((got.p_two_sided - enumerated_p(&diffs)).abs());
        }
    }
    let xs: Vec<f64> = (1..=16).map(|k| k as f64).collect();
    let ys = vec![0.0; 16];
    let all_pos = wilcoxon(&xs, &ys).map_err(|e| e.to_string())?;
    let ok = worst <= 1e-12
        && (all_pos.p_two_sided - 3.05e-5).abs() < 0.01e-5
        && all_pos.r_rank_biserial == 1.0;
    check(
        ok,
        format!(
            "max |p - p_enum| = {worst:.1e}; all-positive n=16: p={:.3e} r={}",
            all_pos.p_two_sided, all_pos.r_rank_biserial
        ),
    )
}

fn digits() -> Result<Digits, String> {
    load_digits(concat!(env!("CARGO_MANIFEST_DIR"), "/data/digits.csv")).map_err(|e| e.to_string())
}

fn mnist_binary(digits: &Digits) -> Outcome {
    let start = Instant::now();
    let spec = MnistSpec {
        widths: vec![4],
        ..MnistSpec::binary_default()
    };
    let report = run_mnist_binary(&spec, digits).map_err(|e| e.to_string())?;
    if let Some(r) = report.splits.iter().find(|r| r.failure.is_some()) {
        return Err(format!(
            "split {} {} failed: {:?}",
            r.split, r.model, r.failure
        ));
    }
    let mut ok = report.aggregates.len() == 3;
    let mut details = Vec::new();
    for a in &report.aggregates {
        ok &= a.test_accuracy_mean >= 0.95;
        details.push(format!("{} acc {:.3}", a.model, a.test_accuracy_mean));
    }
    check(ok, details.join("; "))
        .and_then(|d| within(start.elapsed(), Duration::from_secs(1800), d))
}

fn mnist_ova(digits: &Digits) -> Outcome {
    let start = Instant::now();
    let spec = MnistSpec {
        widths: vec![4],
        splits: 3,
        ..MnistSpec::ova_default()
    };
    let report = run_mnist_ova(&spec, digits).map_err(|e| e.to_string())?;
    if let Some(r) = report.splits.iter().find(|r| r.failure.is_some()) {
        return Err(format!(
            "split {} {} failed: {:?}",
            r.split, r.model, r.failure
        ));
    }
    let acc = |m: ModelVariant| {
        report
            .aggregates
            .iter()
            .find(|a| a.model == m)
            .map(|a| a.test_accuracy_mean)
            .unwrap_or(f64::NAN)
    };
    let (o, i) = (acc(ModelVariant::Original), acc(ModelVariant::RedI));
    let ok = o >= 0.40 && i >= 0.40 && (o - i).abs() <= 0.15;
    check(
        ok,
        format!("original {o:.3}; red_i {i:.3}; gap {:.3}", (o - i).abs()),
    )
    .and_then(|d| within(start.elapsed(), Duration::from_secs(4 * 3600), d))
}

fn determinism(first: &[RunRecord]) -> Outcome {
    let again = run_grid(&ideal_grid()).map_err(|e| e.to_string())?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_results_csv(first, &mut a).map_err(|e| e.to_string())?;
    write_results_csv(&again, &mut b).map_err(|e| e.to_string())?;
    check(
        a == b && !a.is_empty(),
        format!("{} bytes, identical: {}", a.len(), a == b),
    )
}

fn main() -> ExitCode {
    let mut failed: Vec<u32> = Vec::new();
    let mut report = |id: u32, name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS [{id:>2}] {name}: {detail}"),
        Err(detail) => {
            failed.push(id);
            println!("FAIL [{id:>2}] {name}: {detail}");
        }
    };

    report(1, "resource table", table_i());
    report(
        2,
        "merged/sequential functional equivalence",
        functional_equivalence(),
    );
    report(
        3,
        "identical training trajectories",
        identical_trajectories(),
    );

    let grid_start = Instant::now();
    let grid = run_grid(&ideal_grid());
    let grid_time = grid_start.elapsed();
    match &grid {
        Ok(records) => {
            let failed = records.iter().filter(|r| r.failure.is_some()).count();
            let c4 = if failed > 0 {
                Err(format!("{failed} runs failed"))
            } else {
                warm_start(records).and_then(|d| within(grid_time, Duration::from_secs(1800), d))
            };
            report(4, "warm-start significance", c4);
            report(
                5,
                "original vs independent-init non-degradation",
                non_degradation(records),
            );
        }
        Err(e) => {
            report(4, "warm-start significance", Err(e.to_string()));
            report(
                5,
                "original vs independent-init non-degradation",
                Err(e.to_string()),
            );
        }
    }
    report(6, "shot-noise regime", shot_noise());
    report(7, "estimator statistics", estimator_statistics());
    report(8, "depolarizing channel oracle", channel_oracle());
    report(9, "wilcoxon enumeration oracle", wilcoxon_oracle());

    match digits() {
        Ok(d) => {
            report(10, "digits binary classification", mnist_binary(&d));
            report(11, "digits one-vs-all classification", mnist_ova(&d));
        }
        Err(e) => {
            report(10, "digits binary classification", Err(e.clone()));
            report(11, "digits one-vs-all classification", Err(e));
        }
    }

    let c12 = match &grid {
        Ok(records) => determinism(records),
        Err(e) => Err(e.to_string()),
    };
    report(12, "grid determinism", c12);

    if failed.is_empty() {
        println!("acceptance: 12/12 criteria passed");
        return ExitCode::SUCCESS;
    }
    let ids: Vec<String> = failed.iter().map(u32::to_string).collect();
    println!(
        "acceptance: {}/12 criteria passed; failed: {}",
        12 - failed.len(),
        ids.join(", ")
    );
    // Failures are reported, not fatal, unless strict mode is requested.
    if std::env::var("QKAN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
