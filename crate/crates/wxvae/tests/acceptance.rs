//! End-to-end acceptance criteria. Runs without the libtest harness so every
//! criterion prints one `criterion N: PASS|FAIL` line whether or not it fails.
//! Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use wxvae::format::{write_checkpoint, write_cubes};
use wxvae::qq_io::qq_csv;
use wxvae_core::data::{
    gen_synthetic_monsoon, normalize, plan_windows, split_indices, split_train_test,
    window_samples, CubeDataset, GridSeries, MonsoonGenConfig, Role, WindowConfig,
};
use wxvae_core::gradcheck::{check_vae, toy_config, GradCheckConfig};
use wxvae_core::model::{kl_normal, LatentStats, ModelConfig};
use wxvae_core::qq::{
    ecdf_sorted, qq_curve, qq_divergence, quantiles, reference_extremes, Direction, ExtremeRefSpec,
};
use wxvae_core::rng;
use wxvae_core::sampler::{synthesize, SamplerConfig};
use wxvae_core::tensor::{Graph, Tensor};
use wxvae_core::train::{beta_schedule, train, Checkpoint, TrainConfig, TrainHistory};

const SIGMAS: [f64; 7] = [0.3, 0.5, 0.65, 0.75, 0.85, 1.0, 1.3];
const N_SYNTH: usize = 512;
const DESK_EPOCHS: usize = 40;
const TRAIN_SEEDS: [u64; 3] = [0, 1, 2];

/// Outcome of one criterion: whether it held and the numbers behind it.
type Verdict = (bool, String);

fn main() {
    let wanted: BTreeSet<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, fn() -> Verdict); 10] = [
        (1, gradients),
        (2, kl_against_monte_carlo),
        (3, adjoint_identity),
        (4, warm_up),
        (5, desk_training),
        (6, monotone_sigma_control),
        (7, extreme_set_coherence),
        (8, bulk_fidelity),
        (9, reproducibility),
        (10, dataset_construction),
    ];
    let mut failed = Vec::new();
    for (n, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let (ok, detail) = match panic::catch_unwind(AssertUnwindSafe(run)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                (false, format!("panicked: {}", msg.unwrap_or_default()))
            }
        };
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!(
            "criterion {n}: {verdict} ({:.1} s) {detail}",
            started.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn gradients() -> Verdict {
    let started = Instant::now();
    let cfg = GradCheckConfig {
        step: 1e-4,
        rel_tol: 1e-3,
        ..GradCheckConfig::default()
    };
    let report = check_vae(&toy_config(), 2, 1.0, 0, cfg).unwrap();
    let elapsed = started.elapsed();
    let ok = report.passed() && elapsed < Duration::from_secs(120);
    (
        ok,
        format!(
            "{} coordinates over {} tensors, max relative error {:.2e}, {:.1} s",
            report.checked(),
            report.params.len(),
            report.max_rel_err(),
            elapsed.as_secs_f64()
        ),
    )
}

/// `E_q[log q(z) − log p(z)]` from `draws` samples of `q = N(μ, diag e^{log_var})`.
fn monte_carlo_kl(mu: &[f64], log_var: &[f64], draws: usize, r: &mut impl Rng) -> f64 {
    let mut acc = 0.0;
    for _ in 0..draws {
        let mut log_ratio = 0.0;
        for (&m, &lv) in mu.iter().zip(log_var) {
            let e: f64 = r.sample(StandardNormal);
            let z = m + (0.5 * lv).exp() * e;
            // log N(z; m, s²) − log N(z; 0, 1), the 2π terms cancel
            log_ratio += -0.5 * lv - 0.5 * e * e + 0.5 * z * z;
        }
        acc += log_ratio;
    }
    acc / draws as f64
}

fn kl_against_monte_carlo() -> Verdict {
    let mut r = rng::seeded(2, 100);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = r.random_range(1..=2);
        let mu: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
        let log_var: Vec<f64> = (0..k).map(|_| r.random_range(-1.0..1.0)).collect();
        let stats = LatentStats::new(
            Tensor::new(&[1, k], mu.clone()).unwrap(),
            Tensor::new(&[1, k], log_var.clone()).unwrap(),
        )
        .unwrap();
        let mc = monte_carlo_kl(&mu, &log_var, 1_000_000, &mut r);
        worst = worst.max((kl_normal(&stats) - mc).abs());
    }
    let zeros = (1..=30).all(|k| {
        let z = LatentStats::new(Tensor::<f64>::zeros(&[3, k]), Tensor::zeros(&[3, k])).unwrap();
        let z32 = LatentStats::new(Tensor::<f32>::zeros(&[3, k]), Tensor::zeros(&[3, k])).unwrap();
        kl_normal(&z) == 0.0 && kl_normal(&z32) == 0.0
    });
    (
        worst <= 1e-2 && zeros,
        format!("max |analytic − MC| {worst:.2e} over 50 pairs, exact zeros {zeros}"),
    )
}

fn graph_conv(
    x: &Tensor<f64>,
    k: &Tensor<f64>,
    stride: usize,
    pad: usize,
    transpose: Option<usize>,
) -> Tensor<f64> {
    let c_out = if transpose.is_some() {
        k.shape()[1]
    } else {
        k.shape()[0]
    };
    let mut g = Graph::new();
    let (xv, kv, bv) = (
        g.constant(x.clone()),
        g.constant(k.clone()),
        g.constant(Tensor::zeros(&[c_out])),
    );
    let out = match transpose {
        None => g.conv3(xv, kv, bv, stride, pad),
        Some(op) => g.conv3_transpose(xv, kv, bv, stride, pad, op),
    };
    g.value(out.unwrap()).clone()
}

fn adjoint_identity() -> Verdict {
    let mut r = rng::seeded(3, 100);
    let mut shapes = 0;
    let mut worst: f64 = 0.0;
    while shapes < 100 {
        let stride = r.random_range(1..=3);
        let pad = r.random_range(0..=1);
        let ks: [usize; 3] = std::array::from_fn(|_| r.random_range(1..=3));
        let (n, ci, co) = (
            r.random_range(1..=2),
            r.random_range(1..=3),
            r.random_range(1..=3),
        );
        let dims: [usize; 3] = std::array::from_fn(|a| r.random_range(ks[a]..=7));
        let out: [usize; 3] = std::array::from_fn(|a| (dims[a] + 2 * pad - ks[a]) / stride + 1);
        let op: [usize; 3] =
            std::array::from_fn(|a| dims[a] + 2 * pad - ((out[a] - 1) * stride + ks[a]));
        if op.iter().any(|&o| o != op[0]) {
            // one output_padding serves all axes; redraw until the transpose lands on x exactly
            continue;
        }
        let x = Tensor::from_fn(&[n, ci, dims[0], dims[1], dims[2]], |_| {
            r.random_range(-1.0..1.0)
        });
        let k = Tensor::from_fn(&[co, ci, ks[0], ks[1], ks[2]], |_| {
            r.random_range(-1.0..1.0)
        });
        let y = Tensor::from_fn(&[n, co, out[0], out[1], out[2]], |_| {
            r.random_range(-1.0..1.0)
        });
        let cx = graph_conv(&x, &k, stride, pad, None);
        // conv3_transpose reads its kernel as [in, out, ...], which is conv3's [out, in, ...]
        let ty = graph_conv(&y, &k, stride, pad, Some(op[0]));
        assert_eq!(cx.shape(), y.shape());
        assert_eq!(ty.shape(), x.shape());
        let (lhs, rhs) = (cx.dot(&y).unwrap(), x.dot(&ty).unwrap());
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12));
        shapes += 1;
    }
    (
        worst <= 1e-6,
        format!("max relative gap {worst:.2e} over {shapes} shapes"),
    )
}

fn warm_up() -> Verdict {
    let desk = desk_run(0);
    let cfg = &desk.ckpt.train;
    let records = &desk.history.records;
    let mut ok = records.len() > 10 && cfg.warmup_epochs == 10 && cfg.beta_target > 0.0;
    for r in records {
        let expected = if r.epoch < 10 { 0.0 } else { cfg.beta_target };
        ok &= r.beta == expected && beta_schedule(r.epoch, cfg) == expected;
    }
    let zero = records.iter().filter(|r| r.beta == 0.0).count();
    (
        ok,
        format!(
            "{zero} epochs at beta 0, then {} at {}",
            records.len() - zero,
            cfg.beta_target
        ),
    )
}

/// Held-out and normalized training cubes for the desk-scale criteria.
struct DeskData {
    train: CubeDataset,
    test: CubeDataset,
}

fn monsoon_grid() -> &'static GridSeries {
    static G: OnceLock<GridSeries> = OnceLock::new();
    G.get_or_init(|| gen_synthetic_monsoon(&MonsoonGenConfig::default()).unwrap())
}

fn desk_data() -> &'static DeskData {
    static D: OnceLock<DeskData> = OnceLock::new();
    D.get_or_init(|| {
        let cfg = WindowConfig {
            n_samples: 1875,
            ..WindowConfig::desk()
        };
        let cubes = window_samples(monsoon_grid(), &cfg).unwrap();
        let (train, test) = split_train_test(cubes, 0.2, 0).unwrap();
        DeskData {
            train: normalize(train).unwrap(),
            test,
        }
    })
}

struct DeskRun {
    ckpt: Checkpoint,
    history: TrainHistory,
    elapsed: Duration,
}

fn desk_train_config(model: &ModelConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: DESK_EPOCHS,
        // run every epoch so the timing covers all 40
        early_stop_patience: DESK_EPOCHS,
        seed,
        ..TrainConfig::for_model(model)
    }
}

fn desk_run(seed: u64) -> &'static DeskRun {
    static RUNS: [OnceLock<DeskRun>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = TRAIN_SEEDS.iter().position(|&s| s == seed).unwrap();
    RUNS[slot].get_or_init(|| {
        let data = desk_data();
        let model = ModelConfig {
            input_extent: data.train.extent().unwrap(),
            ..ModelConfig::desk()
        };
        let cfg = desk_train_config(&model, seed);
        let started = Instant::now();
        let (params, history) = train(&data.train, &model, &cfg).unwrap();
        let elapsed = started.elapsed();
        DeskRun {
            ckpt: Checkpoint {
                params,
                model,
                train: cfg,
                norm: data.train.norm().unwrap(),
            },
            history,
            elapsed,
        }
    })
}

fn desk_training() -> Verdict {
    let data = desk_data();
    let run = desk_run(0);
    let records = &run.history.records;
    let (first, last) = (records[0].train_rec, records.last().unwrap().train_rec);
    let ok = data.train.len() == 1500
        && data.train.extent() == Some([16, 16, 16])
        && run.ckpt.model.latent_dim == 8
        && records.len() == DESK_EPOCHS
        && run.elapsed < Duration::from_secs(15 * 60)
        && last < 0.5 * first;
    (
        ok,
        format!(
            "{} cubes, {} epochs in {:.0} s, train_rec {first:.5} -> {last:.5} (ratio {:.3})",
            data.train.len(),
            records.len(),
            run.elapsed.as_secs_f64(),
            last / first
        ),
    )
}

fn synth_mean(ckpt: &Checkpoint, sigma: f64) -> f64 {
    synthesize(ckpt, &SamplerConfig::scaled(sigma, N_SYNTH, 0))
        .unwrap()
        .pixel_mean()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            out[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn monotone_sigma_control() -> Verdict {
    let mut ok = true;
    let mut detail = Vec::new();
    for seed in TRAIN_SEEDS {
        let run = desk_run(seed);
        let means: Vec<f64> = SIGMAS.iter().map(|&s| synth_mean(&run.ckpt, s)).collect();
        let rho = spearman(&SIGMAS, &means);
        let strict = means.windows(2).all(|w| w[0] < w[1]);
        ok &= strict && rho == 1.0;
        let shown: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
        detail.push(format!(
            "seed {seed}: means [{}] rho {rho:.3}",
            shown.join(", ")
        ));
    }
    (ok, detail.join("; "))
}

fn reference(direction: Direction) -> CubeDataset {
    reference_extremes(
        &desk_data().test,
        &ExtremeRefSpec::new(0.1, direction).unwrap(),
    )
    .unwrap()
}

fn divergence(a: &CubeDataset, b: &[wxvae_core::data::FieldCube], upto: f64) -> f64 {
    qq_divergence(
        &qq_curve(a.cubes(), b, wxvae_core::qq::DEFAULT_N_PROBS).unwrap(),
        upto,
    )
    .unwrap()
}

fn extreme_set_coherence() -> Verdict {
    let ckpt = &desk_run(0).ckpt;
    let (top, bottom) = (reference(Direction::Top), reference(Direction::Bottom));
    let margin_holds = |near: f64, far: f64| near < far && far - near >= 0.1 * near.max(far);
    let high = synthesize(ckpt, &SamplerConfig::scaled(1.3, N_SYNTH, 0))
        .unwrap()
        .fields;
    let (h_top, h_bottom) = (
        divergence(&top, &high, 1.0),
        divergence(&bottom, &high, 1.0),
    );
    let low = synthesize(ckpt, &SamplerConfig::scaled(0.3, N_SYNTH, 0))
        .unwrap()
        .fields;
    let (l_top, l_bottom) = (divergence(&top, &low, 1.0), divergence(&bottom, &low, 1.0));
    (
        margin_holds(h_top, h_bottom) && margin_holds(l_bottom, l_top),
        format!(
            "sigma 1.3: top {h_top:.3} vs bottom {h_bottom:.3}; sigma 0.3: bottom {l_bottom:.3} vs top {l_top:.3} \
             ({} reference cubes each)",
            top.len()
        ),
    )
}

fn bulk_fidelity() -> Verdict {
    let test = &desk_data().test;
    let mut pool: Vec<f32> = test
        .cubes()
        .iter()
        .flat_map(|c| c.values().iter().copied())
        .collect();
    pool.sort_by(f32::total_cmp);
    let q90 = quantiles(&pool, &[0.9]).unwrap()[0];
    let p_star = ecdf_sorted(&pool, q90);
    let synth = synthesize(&desk_run(0).ckpt, &SamplerConfig::scaled(1.0, N_SYNTH, 0))
        .unwrap()
        .fields;
    let d = divergence(test, &synth, p_star - 1e-12);
    let bound = 0.15 * q90;
    (
        d <= bound,
        format!("divergence {d:.3} mm/day below p* = {p_star:.4}, bound {bound:.3} (q90 {q90:.3})"),
    )
}

fn reproducibility() -> Verdict {
    let cfg = WindowConfig {
        n_samples: 160,
        ..WindowConfig::desk()
    };
    let run = || {
        let cubes = window_samples(monsoon_grid(), &cfg).unwrap();
        let (train_set, test) = split_train_test(cubes, 0.2, 7).unwrap();
        let train_set = normalize(train_set).unwrap();
        let model = ModelConfig {
            input_extent: train_set.extent().unwrap(),
            ..ModelConfig::desk()
        };
        let tc = TrainConfig {
            epochs: 4,
            warmup_epochs: 2,
            seed: 5,
            ..TrainConfig::for_model(&model)
        };
        let (params, history) = train(&train_set, &model, &tc).unwrap();
        let ckpt = Checkpoint {
            params,
            model,
            train: tc,
            norm: train_set.norm().unwrap(),
        };
        let mut ckpt_bytes = Vec::new();
        write_checkpoint(&mut ckpt_bytes, &ckpt).unwrap();
        let mut synth_bytes = Vec::new();
        let mut csvs = String::new();
        for sampler in [
            SamplerConfig::scaled(1.3, 32, 3),
            SamplerConfig::tail(1.5, 32, 3),
        ] {
            let batch = synthesize(&ckpt, &sampler).unwrap();
            synth_bytes.extend(batch.latents.data().iter().flat_map(|v| v.to_le_bytes()));
            let set = CubeDataset::new(batch.fields, None, Role::Test).unwrap();
            write_cubes(&mut synth_bytes, &set).unwrap();
            csvs.push_str(&qq_csv(&qq_curve(test.cubes(), set.cubes(), 199).unwrap()));
        }
        (history, ckpt_bytes, synth_bytes, csvs)
    };
    let (a, b) = (run(), run());
    let same = [a.0 == b.0, a.1 == b.1, a.2 == b.2, a.3 == b.3];
    (
        same.iter().all(|&s| s),
        format!(
            "history {}, checkpoint {} ({} bytes), synthesis {}, QQ CSV {}",
            same[0],
            same[1],
            a.1.len(),
            same[2],
            same[3]
        ),
    )
}

fn dataset_construction() -> Verdict {
    let cfg = WindowConfig::paper();
    let grid = monsoon_grid();
    let plan = plan_windows(grid, &cfg).unwrap();
    let mut cubes = 0;
    let mut shaped = true;
    for cube in plan.cubes(grid) {
        shaped &= cube.unwrap().extent() == [32, 32, 32];
        cubes += 1;
    }
    let (train_idx, test_idx) = split_indices(cubes, 0.2, cfg.seed).unwrap();
    let train_set: BTreeSet<usize> = train_idx.iter().copied().collect();
    let test_set: BTreeSet<usize> = test_idx.iter().copied().collect();
    let disjoint = train_set.is_disjoint(&test_set);
    let exhaustive =
        train_set.union(&test_set).copied().eq(0..cubes) && train_set.len() == train_idx.len();
    let ok = cubes == 18_000
        && shaped
        && train_idx.len() == 14_400
        && test_idx.len() == 3_600
        && disjoint
        && exhaustive;
    (
        ok,
        format!(
            "{cubes} cubes of 32x32x32, split {}/{}, disjoint {disjoint}, exhaustive {exhaustive}",
            train_idx.len(),
            test_idx.len()
        ),
    )
}
