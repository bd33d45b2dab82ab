use gemfnn::config::{study_config, ConfigFile, RunSettings};
use gemfnn::dataset::{read_dataset, write_dataset};
use gemfnn::experiment::{
    emit_results, modeling_cost, parse_results, result_rows, run_study, CellResult, StudyConfig, StudyResult,
    RESULTS_HEADER,
};
use gemfnn::model_file::{model_from_str, model_to_string};
use gemfnn::Error;
use gemfnn_core::datagen::{build_dataset, BenchmarkCase, SamplingPlan};
use gemfnn_core::models::{Architecture, CompositeSurrogate, ModelVariant};
use gemfnn_core::training::NormalizationScalers;
use gemfnn_core::validation::aggregate;
use tempfile::TempDir;

#[test]
fn dataset_round_trip_is_exact() {
    let data = build_dataset(
        BenchmarkCase::F20d,
        SamplingPlan::LatinHypercube,
        7,
        11,
        SamplingPlan::LatinHypercube,
        5,
        9,
    )
    .unwrap();
    let mut buf = Vec::new();
    write_dataset(&data, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let head = text.lines().next().unwrap();
    assert!(head.starts_with("x_1,x_2,") && head.ends_with(",dy_20,fidelity"));
    assert_eq!(text.lines().count(), 1 + 7 + 11 + 5);
    assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);

    let mut no_grad = data.clone();
    no_grad.high.grad = None;
    no_grad.low = None;
    let mut buf = Vec::new();
    write_dataset(&no_grad, &mut buf).unwrap();
    assert_eq!(read_dataset(buf.as_slice()).unwrap(), no_grad);
}

#[test]
fn dataset_rejects_inconsistent_rows() {
    let mixed = "x_1,y,dy_1,fidelity\n0.5,1.0,2.0,high\n0.7,1.0,,high\n";
    assert!(matches!(read_dataset(mixed.as_bytes()), Err(Error::Data(_))));
    let tag = "x_1,y,dy_1,fidelity\n0.5,1.0,2.0,medium\n";
    assert!(matches!(read_dataset(tag.as_bytes()), Err(Error::Data(m)) if m.contains("medium")));
    let number = "x_1,y,dy_1,fidelity\n0.5,abc,2.0,high\n";
    assert!(matches!(read_dataset(number.as_bytes()), Err(Error::Data(m)) if m.contains("column y")));
    let only_low = "x_1,y,dy_1,fidelity\n0.5,1.0,2.0,low\n";
    assert!(read_dataset(only_low.as_bytes()).is_err());
}

#[test]
fn model_round_trip_is_exact() {
    let arch = Architecture {
        low_hidden: vec![4, 3],
        linear_hidden: vec![2],
        nonlinear_hidden: vec![5],
    };
    for (i, v) in ModelVariant::ALL.into_iter().enumerate() {
        let mut m = CompositeSurrogate::new(v, 3, &arch, i as u64).unwrap();
        m.params.omega = 0.1 + 1e-17 * i as f64 + 1.0 / 3.0;
        m.scalers = NormalizationScalers {
            x_mean: vec![0.1, -2.5e-300, 7.0],
            x_std: vec![1.0 / 3.0, 2.0, 1e300],
            y_high: (-4.25, 0.125),
            y_low: v.is_multifidelity().then_some((1.0 / 7.0, 3.5)),
        };
        let text = model_to_string(&m);
        assert_eq!(model_from_str(&text).unwrap(), m, "{v}");
    }
    assert!(model_from_str("gemfnn-model 1\nvariant XX\n").is_err());
    assert!(model_from_str("not a model").is_err());
}

fn cell(variant: ModelVariant, m_high: usize, r2: &[f64]) -> CellResult {
    CellResult {
        variant,
        m_high,
        cost: modeling_cost(variant, m_high),
        r2_values: r2.to_vec(),
        failures: Vec::new(),
        stats: aggregate(r2).ok(),
        wall_time_s: 0.1 + m_high as f64 / 3.0,
    }
}

#[test]
fn results_round_trip_and_summary() {
    let dir = TempDir::new().unwrap();
    let empty = StudyResult {
        case: BenchmarkCase::Rastrigin2d,
        target_r2: 0.99,
        variants: vec![ModelVariant::Nn],
        cells: Vec::new(),
    };
    emit_results(&empty, dir.path()).unwrap();
    let table = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(table, format!("{RESULTS_HEADER}\n"));

    let mut invalid = cell(ModelVariant::Nn, 80, &[0.3]);
    invalid.stats = None;
    let result = StudyResult {
        cells: vec![
            cell(ModelVariant::Nn, 40, &[0.9, 0.95, 0.97]),
            cell(ModelVariant::Nn, 60, &[0.991, 0.993, 0.999]),
            invalid,
            cell(ModelVariant::Genn, 40, &[0.5, 0.6, 0.7]),
        ],
        variants: vec![ModelVariant::Nn, ModelVariant::Genn],
        ..empty
    };
    emit_results(&result, dir.path()).unwrap();
    let path = dir.path().join("results.csv");
    let rows = parse_results(&path).unwrap();
    assert_eq!(rows.len(), 4);
    let text = std::fs::read_to_string(&path).unwrap();
    for (line, row) in text.lines().skip(1).zip(&rows) {
        assert_eq!(line, row.to_line());
    }
    assert!(rows[2].mu_r2.is_nan());
    for (a, b) in rows.iter().zip(result_rows(&result)) {
        assert_eq!(a.to_line(), b.to_line());
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("rastrigin2d,NN,0.99,60,60"));
    assert!(summary.contains("rastrigin2d,GENN,0.99,not reached"));
    assert_eq!(result.cost_to_target(ModelVariant::Nn), Some(60));
    assert_eq!(result.cost_to_target(ModelVariant::Genn), None);
}

#[test]
fn modeling_cost_accounting() {
    assert_eq!(modeling_cost(ModelVariant::Nn, 10), 10);
    assert_eq!(modeling_cost(ModelVariant::Genn, 60), 120);
    assert_eq!(modeling_cost(ModelVariant::Gemfnn, 300), 600);
    for m in 1..200 {
        for v in ModelVariant::ALL {
            assert!(modeling_cost(v, m + 1) > modeling_cost(v, m));
        }
        assert_eq!(modeling_cost(ModelVariant::Genn, m), 2 * modeling_cost(ModelVariant::Nn, m));
        assert_eq!(modeling_cost(ModelVariant::Mfnn, m), modeling_cost(ModelVariant::Nn, m));
    }
}

#[test]
fn single_repetition_study() {
    let cfg = StudyConfig {
        variants: vec![ModelVariant::Mfnn],
        hf_schedule: vec![5],
        n_t: 1,
        m_test: 64,
        train: gemfnn_core::training::TrainConfig {
            epochs: 50,
            ..StudyConfig::for_case(BenchmarkCase::Forrester1d).train
        },
        ..StudyConfig::for_case(BenchmarkCase::Forrester1d)
    };
    let r = run_study(&cfg).unwrap();
    assert_eq!(r.cells.len(), 1);
    let c = &r.cells[0];
    assert_eq!(c.r2_values.len(), 1);
    assert_eq!(c.sigma_r2(), Some(0.0));
    assert_eq!(c.stats, aggregate(&c.r2_values).ok());
}

#[test]
fn config_resolution() {
    let file = ConfigFile::parse(
        r#"
seed = 5
[case]
name = "f20d"
m_low = 100
[optimizer]
epochs = 7
[study]
variants = ["GEMFNN", "nn"]
hf_schedule = [10, 20]
n_t = 2
[study.schedules]
NN = [20, 40]
"#,
    )
    .unwrap();
    let run = RunSettings::resolve(&file).unwrap();
    assert_eq!(run.case, BenchmarkCase::F20d);
    assert_eq!(run.architecture.low_hidden, vec![128; 6]);
    assert_eq!(run.train.epochs, 7);
    assert_eq!(run.train.batch_size, 64);
    assert_eq!(run.train.seed, 5);
    let study = study_config(&file).unwrap();
    assert_eq!(study.variants, vec![ModelVariant::Gemfnn, ModelVariant::Nn]);
    assert_eq!(study.schedule(ModelVariant::Gemfnn), &[10, 20]);
    assert_eq!(study.schedule(ModelVariant::Nn), &[20, 40]);
    assert_eq!(study.m_low, 100);
    assert_eq!(study.base_seed, 5);

    let bad = |text: &str| match study_config(&ConfigFile::parse(text).unwrap()) {
        Err(Error::Config(m)) => m,
        other => panic!("expected config error, got {other:?}"),
    };
    assert!(bad("[study]\nn_t = 1\n").contains("case"));
    assert!(bad("[case]\nname = \"forrester1d\"\n[study]\nhf_schedule = [5, 5]\n").contains("strictly increasing"));
    assert!(bad("[case]\nname = \"forrester1d\"\n[study]\nn_t = 0\n").contains("n_t"));
    assert!(bad("[case]\nname = \"forrester1d\"\n[study]\nvariants = [\"SVM\"]\n").contains("SVM"));
    assert!(bad("[case]\nname = \"moon\"\n").contains("moon"));
    assert!(ConfigFile::parse("[case]\nextra = 1\n").is_err());
}
