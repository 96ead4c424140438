use evopca::data::{split_rows, DataTable, TRAIN_RATIO};
use evopca::es::{self, es_step_partial, evaluate_candidate, sample_noise, EsConfig, ObjectiveMode, TrainingData};
use evopca::harness::percentile;
use evopca::transforms::{build_stack, EncodedBatch, InputEncoder, TransformStack, VariableSchema};
use evopca::{rng_from_seed, Matrix};
use rand::Rng;
use rand_distr::StandardNormal;

fn encode(table: &DataTable) -> (EncodedBatch, EncodedBatch) {
    let s = split_rows(table.n_rows(), TRAIN_RATIO, 0).unwrap();
    let enc = InputEncoder::fit(table, &s.train).unwrap();
    (
        enc.encode_rows(table, &s.train).unwrap(),
        enc.encode_rows(table, &s.validation).unwrap(),
    )
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn partial_objective(stack: &TransformStack, params: &[f64], batch: &EncodedBatch, l: usize) -> f64 {
    evaluate_candidate(stack, params, batch, None).unwrap().partial(1)[l]
}

#[test]
fn partial_step_follows_segment_finite_differences() {
    let mut rng = rng_from_seed(3);
    let n = 200;
    let mut x = Matrix::zeros(n, 2);
    for i in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = a;
        x[(i, 1)] = 0.6 * a + 0.8 * b;
    }
    let table = DataTable::from_numeric(&["a", "b"], &x).unwrap();
    let enc = InputEncoder::fit(&table, &(0..n).collect::<Vec<_>>()).unwrap();
    let batch = enc.encode_rows(&table, &(0..n).collect::<Vec<_>>()).unwrap();
    let schemas = vec![VariableSchema::numerical("a"), VariableSchema::numerical("b")];
    let stack = TransformStack::with_hidden(schemas, 4).unwrap();

    let cfg = EsConfig {
        population: 400,
        noise_std: 1e-3,
        subtract_mean: true,
        ..EsConfig::default()
    };
    let mut cosines = Vec::new();
    for trial in 0..20u64 {
        let theta = stack.init_params(trial);
        let noise = sample_noise(cfg.population, theta.len(), &mut rng);
        let objectives: Vec<Vec<f64>> = noise
            .iter()
            .map(|e| {
                let cand: Vec<f64> = theta.as_slice().iter().zip(e).map(|(t, v)| t + cfg.noise_std * v).collect();
                evaluate_candidate(&stack, &cand, &batch, None).unwrap().partial(1)
            })
            .collect();
        let step = es_step_partial(&theta, &objectives, &noise, &cfg, &stack).unwrap();
        for l in 0..2 {
            let seg = stack.segment(l);
            let h = 1e-5;
            let fd: Vec<f64> = seg
                .clone()
                .map(|i| {
                    let mut up = theta.0.clone();
                    let mut down = theta.0.clone();
                    up[i] += h;
                    down[i] -= h;
                    (partial_objective(&stack, &up, &batch, l) - partial_objective(&stack, &down, &batch, l)) / (2.0 * h)
                })
                .collect();
            let delta: Vec<f64> = seg.map(|i| step.params.0[i] - theta.0[i]).collect();
            cosines.push(cosine(&delta, &fd));
        }
    }
    let med = percentile(&cosines, 50.0).unwrap();
    assert!(med >= 0.4, "median cosine {med}");
}

/// Ten variables driven by one latent factor through different non-linear
/// maps, so each variable needs its own transform to line up.
fn latent_fixture(seed: u64) -> DataTable {
    let mut rng = rng_from_seed(seed);
    let n = 300;
    let mut x = Matrix::zeros(n, 10);
    for i in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let maps: [fn(f64) -> f64; 10] = [
            |z| z,
            |z| z * z,
            |z| z.abs(),
            |z| z.powi(3),
            |z| z.exp(),
            |z| (-z).exp(),
            |z| z.tanh(),
            |z| (z * z + 1.0).ln(),
            |z| z.max(0.0),
            |z| (-z).max(0.0),
        ];
        for (l, f) in maps.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            x[(i, l)] = f(z) + 0.1 * e;
        }
    }
    let names: Vec<String> = (0..10).map(|l| format!("x{l}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    DataTable::from_numeric(&names, &x).unwrap()
}

#[test]
fn partial_objective_beats_global_on_latent_fixture() {
    let mut wins = 0;
    for seed in 0..10u64 {
        let table = latent_fixture(seed);
        let (train, validation) = encode(&table);
        let data = TrainingData {
            train: &train,
            validation: &validation,
        };
        let mut finals = [0.0; 2];
        for (slot, objective) in [ObjectiveMode::Global, ObjectiveMode::Partial].into_iter().enumerate() {
            let (stack, theta) = build_stack(table.schemas().to_vec(), seed).unwrap();
            let cfg = EsConfig {
                generations: 30,
                population: 60,
                objective,
                seed,
                ..EsConfig::default()
            };
            let out = es::train(&stack, theta, data, &cfg).unwrap();
            finals[slot] = es::evaluate_split(&stack, out.params.as_slice(), data, 1)
                .unwrap()
                .validation_proportion;
        }
        if finals[1] >= finals[0] {
            wins += 1;
        }
    }
    assert!(wins >= 6, "partial won {wins}/10");
}

#[test]
fn training_is_bitwise_reproducible() {
    let table = latent_fixture(1);
    let (train, validation) = encode(&table);
    let data = TrainingData {
        train: &train,
        validation: &validation,
    };
    let run = || {
        let (stack, theta) = build_stack(table.schemas().to_vec(), 9).unwrap();
        let cfg = EsConfig {
            generations: 4,
            population: 10,
            pca_refresh: 2,
            objective: ObjectiveMode::Partial,
            seed: 9,
            ..EsConfig::default()
        };
        es::train(&stack, theta, data, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.params, b.params);
    let bits = |o: &es::TrainOutcome| -> Vec<u64> {
        o.history.iter().map(|g| g.validation_proportion.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn history_has_one_report_per_generation() {
    let table = latent_fixture(2);
    let (train, validation) = encode(&table);
    let (stack, theta) = build_stack(table.schemas().to_vec(), 0).unwrap();
    let cfg = EsConfig {
        generations: 5,
        population: 8,
        ..EsConfig::default()
    };
    let out = es::train(&stack, theta.clone(), TrainingData { train: &train, validation: &validation }, &cfg).unwrap();
    assert_eq!(out.history.len(), 5);
    assert!(out.history.iter().all(|g| (0.0..=1.0 + 1e-9).contains(&g.validation_proportion)));
    assert_ne!(out.params, theta);
}
