//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criterion 6 needs the public TON_IOT network CSV: set `TON_IOT_CSV` to
//! the file and `TON_IOT_SCHEMA` to a schema JSON for it.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gowerfed::centralized::{self, GcConfig};
use gowerfed::data::{self, Column, FeatureKind, FeatureSchema, InstanceTable, Value};
use gowerfed::experiment::{self, DataSource, MatrixMode, RunConfig, TrainMode};
use gowerfed::federated::{self, AgentMatrices, ClientResult, GfConfig, ServerUpdate};
use gowerfed::gower::{self, GowerEngine, GowerMatrix};
use gowerfed::nn::{self, DropoutMask, ModelParameters, DROPOUT_RATE};
use gowerfed::synth;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// ---------------------------------------------------------------- 1

fn mixed_table(n: usize, seed: u64) -> InstanceTable {
    let mut columns = Vec::new();
    for i in 0..5 {
        columns.push(Column {
            name: format!("num{i}"),
            kind: FeatureKind::Numerical,
        });
        columns.push(Column {
            name: format!("cat{i}"),
            kind: FeatureKind::Categorical,
        });
    }
    let schema = Arc::new(FeatureSchema::new(columns, "label", Vec::new()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cats = ["a", "b", "c", "d"];
    let rows: Vec<Vec<Value>> = (0..n)
        .map(|_| {
            schema
                .columns()
                .iter()
                .map(|c| {
                    if rng.gen::<f64>() < 0.10 {
                        Value::Missing
                    } else if c.kind == FeatureKind::Numerical {
                        Value::Number(rng.gen_range(-50.0..150.0))
                    } else {
                        Value::token(cats[rng.gen_range(0..cats.len())])
                    }
                })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
    InstanceTable::new(schema, rows, labels).unwrap()
}

/// Max minus min of each numerical feature; 0 when unobserved or categorical.
fn oracle_ranges(rows: &[Vec<Value>], kinds: &[FeatureKind]) -> Vec<f64> {
    (0..kinds.len())
        .map(|f| {
            if kinds[f] == FeatureKind::Categorical {
                return 0.0;
            }
            let xs: Vec<f64> = rows
                .iter()
                .filter_map(|r| match r[f] {
                    Value::Number(x) => Some(x),
                    _ => None,
                })
                .collect();
            if xs.is_empty() {
                0.0
            } else {
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            }
        })
        .collect()
}

fn oracle_distance(a: &[Value], b: &[Value], kinds: &[FeatureKind], ranges: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for f in 0..kinds.len() {
        let d = match (&a[f], &b[f]) {
            (Value::Missing, _) | (_, Value::Missing) => continue,
            (Value::Number(x), Value::Number(y)) => {
                if ranges[f] == 0.0 {
                    0.0
                } else {
                    ((x - y).abs() / ranges[f]).min(1.0)
                }
            }
            (x, y) => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
        };
        sum += d;
        count += 1;
    }
    if count == 0 {
        1.0
    } else {
        sum / count as f64
    }
}

fn compare_block(
    m: &GowerMatrix,
    rows: &[Vec<Value>],
    cols: &[Vec<Value>],
    kinds: &[FeatureKind],
    ranges: &[f64],
) -> Result<f64, String> {
    if (m.rows(), m.cols()) != (rows.len(), cols.len()) {
        return Err(format!(
            "shape {}x{}, expected {}x{}",
            m.rows(),
            m.cols(),
            rows.len(),
            cols.len()
        ));
    }
    let mut worst = 0.0f64;
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let want = oracle_distance(r, c, kinds, ranges);
            let got = f64::from(m.get(i, j));
            if !(0.0..=1.0).contains(&got) {
                return Err(format!("value {got} at ({i},{j}) outside [0,1]"));
            }
            worst = worst.max((got - want).abs());
        }
    }
    Ok(worst)
}

fn criterion_1() -> Verdict {
    let started = Instant::now();
    let table = mixed_table(200, 11);
    let kinds: Vec<FeatureKind> = table.schema().columns().iter().map(|c| c.kind).collect();
    let all = table.rows();
    let (k, width) = (150, 120);
    let train = table.select(&(0..k).collect::<Vec<_>>());
    let train_ranges = oracle_ranges(&all[..k], &kinds);
    let all_ranges = oracle_ranges(all, &kinds);

    let run = || -> Result<(f64, String), String> {
        let e = |e: gowerfed::Error| e.to_string();
        let full = gower::gower_matrix(&train).map_err(e)?;
        let mut worst = compare_block(&full, &all[..k], &all[..k], &kinds, &train_ranges)?;
        for i in 0..k {
            if full.get(i, i) != 0.0 {
                return Err(format!("diagonal ({i},{i}) = {}", full.get(i, i)));
            }
            for j in 0..i {
                if full.get(i, j) != full.get(j, i) {
                    return Err(format!("asymmetric at ({i},{j})"));
                }
            }
        }
        let limited = gower::gower_matrix_limit_cols(&table, width).map_err(e)?;
        worst = worst.max(compare_block(&limited, all, &all[..width], &kinds, &all_ranges)?);
        let sliced = gower::sliced_gower_matrix_limit_cols(&table, k, width).map_err(e)?;
        worst = worst.max(compare_block(&sliced, &all[k..], &all[..width], &kinds, &train_ranges)?);

        let ranges = gower::compute_ranges(&train);
        let mut grown = full.clone();
        for (i, row) in all[k..].iter().enumerate() {
            let new = gower::append_row(&grown, row, &train, &ranges).map_err(e)?;
            grown.push_row(&new, table.labels()[k + i]).map_err(e)?;
        }
        worst = worst.max(compare_block(&grown, all, &all[..k], &kinds, &train_ranges)?);
        Ok((worst, format!("4 constructions, 200 instances, max |err| {worst:.2e}")))
    };
    match run() {
        Ok((worst, msg)) => {
            let t = started.elapsed();
            verdict(worst <= 1e-6 && within(t, 10.0), format!("{msg}, {:.2}s (limit 10s)", t.as_secs_f64()))
        }
        Err(msg) => Verdict::Fail(msg),
    }
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let started = Instant::now();
    let k = 20;
    let params = nn::init_model(k, 2024).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array2::from_shape_fn((8, k), |_| rng.gen_range(0.0..1.0));
    let y = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
    let mask = DropoutMask::sample(8, DROPOUT_RATE, &mut rng);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for m in [None, Some(&mask)] {
        let (grads, _) = nn::backward(&params, x.view(), &y, m).unwrap();
        let loss = |p: &ModelParameters| nn::bce_loss(&nn::forward_with_mask(p, x.view(), m).unwrap(), &y).unwrap();
        for li in 0..params.layers().len() {
            let layer = &params.layers()[li];
            let (rows, cols) = layer.weights.dim();
            let (mut diff, mut scale_fd, mut scale_an) = (0.0f64, 0.0f64, 0.0f64);
            let mut probe = |bump: &dyn Fn(&mut ModelParameters, f64), analytic: f64| {
                let mut plus = params.clone();
                bump(&mut plus, h);
                let mut minus = params.clone();
                bump(&mut minus, -h);
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                diff += (fd - analytic).powi(2);
                scale_fd += fd * fd;
                scale_an += analytic * analytic;
            };
            for r in 0..rows {
                for c in 0..cols {
                    probe(
                        &|p, d| p.layers_mut()[li].weights[[r, c]] += d,
                        grads.layers()[li].weights[[r, c]],
                    );
                }
            }
            for c in 0..cols {
                probe(&|p, d| p.layers_mut()[li].biases[c] += d, grads.layers()[li].biases[c]);
            }
            let denom = scale_fd.max(scale_an).sqrt();
            let rel = if denom > 0.0 { diff.sqrt() / denom } else { 0.0 };
            worst = worst.max(rel);
        }
    }
    let t = started.elapsed();
    verdict(
        worst < 1e-4 && within(t, 30.0),
        format!(
            "7 layers, mask off and pinned, max relative error {worst:.2e} (limit 1e-4), {:.2}s",
            t.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn filled(k: usize, f: impl Fn(usize) -> f64) -> ModelParameters {
    let mut p = ModelParameters::zeros(k);
    let mut i = 0;
    for layer in p.layers_mut() {
        for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
            *w = f(i);
            i += 1;
        }
    }
    p
}

fn client(id: usize, params: ModelParameters, n: usize) -> ClientResult {
    ClientResult {
        agent_id: id,
        params,
        n_train_instances: n,
        local_train_loss: None,
        local_auc: 0.5,
        auc_degenerate: false,
    }
}

fn synthetic_gf(node_number: usize, rounds: usize, attention: Option<f64>, seed: u64) -> GfConfig {
    GfConfig {
        run_name: "acceptance".into(),
        node_number,
        training_dataset_size: 2000,
        test_dataset_size: 400,
        balance_dataset: false,
        total_rounds: rounds,
        nodes_per_round: node_number,
        local_epochs_per_round: 2,
        server_learning_rate: 1.0,
        client_learning_rate: 1e-3,
        training_batch_size: 32,
        test_batch_size: 64,
        seed,
        attention_proportion: attention,
        server_update: ServerUpdate::Replace,
    }
}

fn criterion_3() -> Verdict {
    let k = 3;
    let global = filled(k, |i| (i as f64 * 0.37).cos());
    let a = filled(k, |i| (i as f64 * 0.11).sin() * 3.0);
    let b = filled(k, |i| 1.0 / (1.0 + i as f64));
    let c = filled(k, |i| (i % 7) as f64 - 2.5);

    let single = federated::aggregate_fedavg(&[client(4, a.clone(), 17)], &global, ServerUpdate::Replace, 1.0).unwrap();
    let identity = single == a;

    let (na, nb, nc) = (10usize, 30usize, 60usize);
    let total = (na + nb + nc) as f64;
    let res = [client(2, c.clone(), nc), client(0, a.clone(), na), client(1, b.clone(), nb)];
    let mean = federated::aggregate_fedavg(&res, &global, ServerUpdate::Replace, 1.0).unwrap();
    let eta = 0.25;
    let stepped = federated::aggregate_fedavg(&res, &global, ServerUpdate::ServerSgd, eta).unwrap();
    let mut worst = 0.0f64;
    let vals = |p: &ModelParameters| p.values().collect::<Vec<_>>();
    let (ga, gb, gc, gg) = (vals(&a), vals(&b), vals(&c), vals(&global));
    for (i, (m, s)) in mean.values().zip(stepped.values()).enumerate() {
        let expect = (na as f64 * ga[i] + nb as f64 * gb[i] + nc as f64 * gc[i]) / total;
        worst = worst.max((m - expect).abs());
        worst = worst.max((s - (gg[i] + eta * (expect - gg[i]))).abs());
    }

    let table = synth::synth_table(1200, 8).unwrap();
    let mut cfg = synthetic_gf(4, 4, None, 3);
    cfg.training_dataset_size = 1000;
    cfg.test_dataset_size = 200;
    let agents = experiment::build_agent_matrices(&experiment::partition_for(&table, &cfg).unwrap(), &GowerEngine::default()).unwrap();
    let vanilla = federated::run_gf(&cfg, &agents).unwrap();
    cfg.attention_proportion = Some(1.0);
    let am = federated::run_gf(&cfg, &agents).unwrap();
    let reduction = vanilla.global == am.global && vanilla.rounds == am.rounds && vanilla.agent_metrics == am.agent_metrics;

    verdict(
        identity && worst <= 1e-12 && reduction,
        format!(
            "single-client identity {identity}, weighted mean max |err| {worst:.2e} (limit 1e-12), P=1 matches vanilla {reduction}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Verdict {
    let table = synth::synth_table(200, 21).unwrap();
    let k = 170;
    let train = table.select(&(0..k).collect::<Vec<_>>());
    let agent = AgentMatrices {
        agent_id: 0,
        train: gower::gower_matrix(&train).unwrap(),
        test: gower::sliced_gower_matrix_limit_cols(&table, k, k).unwrap(),
    };
    let (rounds, local) = (3usize, 4usize);
    let mut cfg = synthetic_gf(1, rounds, Some(1.0), 77);
    cfg.local_epochs_per_round = local;
    cfg.training_batch_size = 16;
    let fed = federated::run_gf(&cfg, std::slice::from_ref(&agent)).unwrap();

    let init = federated::initialize(agent.train.cols(), cfg.seed).unwrap().global;
    let (central, _) = centralized::train_fixed_epochs(
        init,
        &agent.train,
        rounds * local,
        cfg.training_batch_size,
        cfg.client_learning_rate,
        |e| federated::client_epoch_seed(cfg.seed, e / local, 0, e % local),
    )
    .unwrap();
    let same = fed.global == central;
    let max_diff = fed
        .global
        .values()
        .zip(central.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    verdict(
        same,
        format!("R={rounds} x E={local} vs {} centralized epochs, bit-identical {same}, max |diff| {max_diff:.1e}", rounds * local),
    )
}

// ---------------------------------------------------------------- 5

fn synthetic_gc(seed: u64) -> GcConfig {
    GcConfig {
        run_name: "acceptance-gc".into(),
        training_dataset_size: 2000,
        test_dataset_size: 400,
        balance_dataset: false,
        epochs: 100,
        learning_rate: 1e-4,
        batch_size: 64,
        seed,
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[(s.len() - 1) / 2]
}

/// Five fixed run seeds on one dataset; the gate uses the median run so a
/// single unlucky initialization neither passes nor fails the criterion.
fn criterion_5() -> Verdict {
    let table = synth::synth_table(2400, 26).unwrap();
    let engine = GowerEngine::default();
    let seeds = 26..=30u64;
    let (mut gc_accs, mut gf_accs, mut epochs, mut slowest) = (Vec::new(), Vec::new(), Vec::new(), 0.0f64);
    for seed in seeds {
        let started = Instant::now();
        let gc_cfg = synthetic_gc(seed);
        let (train, test) = experiment::build_cnl_matrices(&table, &gc_cfg, &engine).unwrap();
        let gc = experiment::run_gc_on(&gc_cfg, &train, &test).unwrap();
        slowest = slowest.max(started.elapsed().as_secs_f64());
        gc_accs.push(gc.summary.headline.accuracy);
        epochs.push(gc.summary.steps_run);

        let mut gf_cfg = synthetic_gf(5, 40, None, seed);
        gf_cfg.local_epochs_per_round = 10;
        gf_cfg.client_learning_rate = 1e-4;
        let agents = experiment::build_agent_matrices(&experiment::partition_for(&table, &gf_cfg).unwrap(), &engine).unwrap();
        let gf = experiment::run_gf_on(TrainMode::Gf, &gf_cfg, &agents).unwrap();
        gf_accs.push(gf.summary.headline.accuracy);
    }
    let (gc_med, gf_med) = (median(&gc_accs), median(&gf_accs));
    let gap = (gc_med - gf_med).abs();
    verdict(
        gc_med >= 0.95 && epochs.iter().all(|&e| e <= 100) && slowest < 120.0 && gap <= 0.05,
        format!(
            "GC accuracy per seed {gc_accs:.3?} median {gc_med:.3} (>= 0.95), epochs {epochs:?}, slowest {slowest:.1}s (limit 120s); \
             GF median accuracy per seed {gf_accs:.3?} median {gf_med:.3}, gap {gap:.3} (limit 0.05)"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Verdict {
    let (Some(csv), Some(schema)) = (std::env::var_os("TON_IOT_CSV"), std::env::var_os("TON_IOT_SCHEMA")) else {
        return Verdict::Skip("TON_IOT_CSV / TON_IOT_SCHEMA not set".into());
    };
    let run = || -> gowerfed::Result<(f64, f64)> {
        let schema = FeatureSchema::from_json_path(Path::new(&schema))?;
        let table = data::load_csv(Path::new(&csv), &schema)?;
        let engine = GowerEngine::default();
        let gc_cfg = GcConfig {
            run_name: "ton-gc".into(),
            training_dataset_size: 8000,
            test_dataset_size: 1600,
            balance_dataset: true,
            epochs: 100,
            learning_rate: 0.0001,
            batch_size: 64,
            seed: 26,
        };
        let (train, test) = experiment::build_cnl_matrices(&table, &gc_cfg, &engine)?;
        let gc = experiment::run_gc_on(&gc_cfg, &train, &test)?;
        let gf_cfg = GfConfig {
            run_name: "ton-gf".into(),
            node_number: 10,
            training_dataset_size: 6860,
            test_dataset_size: 1140,
            balance_dataset: false,
            total_rounds: 40,
            nodes_per_round: 4,
            local_epochs_per_round: 10,
            server_learning_rate: 0.0001,
            client_learning_rate: 0.00001,
            training_batch_size: 128,
            test_batch_size: 32,
            seed: 28,
            attention_proportion: None,
            server_update: ServerUpdate::Replace,
        };
        let agents = experiment::build_agent_matrices(&experiment::partition_for(&table, &gf_cfg)?, &engine)?;
        let gf = experiment::run_gf_on(TrainMode::Gf, &gf_cfg, &agents)?;
        Ok((gc.summary.headline.accuracy, gf.summary.headline.accuracy))
    };
    match run() {
        Ok((gc, gf)) => verdict(
            gc >= 0.88 && gf >= 0.75,
            format!("GC accuracy {gc:.4} (>= 0.88), GF median accuracy {gf:.4} (>= 0.75)"),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Verdict {
    let table = synth::synth_table(2400, 13).unwrap();
    let cfg = synthetic_gf(10, 40, Some(0.8), 13);
    let mut partition = experiment::partition_for(&table, &cfg).unwrap();
    let noised = [0usize, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for &id in &noised {
        let a = &mut partition.agents[id];
        let flip = |t: &InstanceTable, rng: &mut ChaCha8Rng| {
            let labels = (0..t.len()).map(|_| rng.gen_range(0..2u8)).collect();
            t.with_labels(labels).unwrap()
        };
        a.train = flip(&a.train, &mut rng);
        a.test = flip(&a.test, &mut rng);
    }
    let agents = experiment::build_agent_matrices(&partition, &GowerEngine::default()).unwrap();
    let out = experiment::run_gf_on(TrainMode::GfAm, &cfg, &agents).unwrap();
    let sampled = out.summary.sampled_counts.unwrap();
    let selected = out.summary.selected_counts.unwrap();
    let rate: Vec<f64> = selected
        .iter()
        .zip(&sampled)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s as f64 / n as f64 })
        .collect();
    let noisy_max = noised.iter().map(|&i| rate[i]).fold(0.0, f64::max);
    let clean_min = (0..rate.len())
        .filter(|i| !noised.contains(i))
        .map(|i| rate[i])
        .fold(1.0, f64::min);
    verdict(
        noisy_max < clean_min,
        format!("selection rates {rate:.2?}; noised max {noisy_max:.2} < clean min {clean_min:.2}"),
    )
}

// ---------------------------------------------------------------- 8

fn run_pipeline(threads: usize, root: &Path) -> Vec<(String, Vec<u8>)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut files = Vec::new();
        let source = DataSource::Synthetic { rows: 900, seed: 4 };
        let engine = GowerEngine::default();
        let gc = RunConfig::Gc(GcConfig {
            training_dataset_size: 600,
            test_dataset_size: 200,
            epochs: 8,
            ..synthetic_gc(31)
        });
        let mut gf_cfg = synthetic_gf(6, 6, Some(0.7), 31);
        gf_cfg.training_dataset_size = 700;
        gf_cfg.test_dataset_size = 140;
        gf_cfg.nodes_per_round = 4;
        let gf = RunConfig::Gf(gf_cfg);
        for (name, mm, tm, cfg) in [
            ("gc", MatrixMode::Cnl, TrainMode::Gc, &gc),
            ("gf", MatrixMode::Fl, TrainMode::GfAm, &gf),
        ] {
            let mdir = root.join(format!("{name}-matrices"));
            let rdir = root.join(format!("{name}-run"));
            experiment::create_matrices(mm, &source, cfg, &mdir, &engine).unwrap();
            experiment::run_experiment(tm, cfg, &mdir, &rdir).unwrap();
            for dir in [&mdir, &rdir] {
                let mut names: Vec<_> = std::fs::read_dir(dir)
                    .unwrap()
                    .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                    .filter(|n| n != "manifest.json")
                    .collect();
                names.sort();
                for n in names {
                    files.push((format!("{name}/{n}"), std::fs::read(dir.join(&n)).unwrap()));
                }
            }
        }
        files
    })
}

fn criterion_8() -> Verdict {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let a = run_pipeline(1, dirs[0].path());
    let b = run_pipeline(4, dirs[1].path());
    let c = run_pipeline(4, dirs[2].path());
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .zip(&c)
        .filter(|((x, y), z)| x != y || y != z)
        .map(|((x, _), _)| x.0.as_str())
        .collect();
    let same_set = a.len() == b.len() && b.len() == c.len();
    let has_core = ["gc/summary.json", "gc/model.gown", "gc/loss_history.csv", "gf/summary.json", "gf/model.gown", "gf/round_history.csv"]
        .iter()
        .all(|n| a.iter().any(|(f, _)| f == n));
    verdict(
        same_set && has_core && differing.is_empty(),
        format!(
            "{} artifacts compared across widths 1, 4, 4; differing: {differing:?}",
            a.len()
        ),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 8] = [
        ("gower oracle equivalence", criterion_1),
        ("gradient fidelity", criterion_2),
        ("fedavg algebra", criterion_3),
        ("single-agent equivalence", criterion_4),
        ("synthetic end-to-end", criterion_5),
        ("ton_iot scaled runs", criterion_6),
        ("attention selection under label noise", criterion_7),
        ("determinism across thread counts", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let t = started.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {id} {name}: {detail} [{t:.1}s]");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
