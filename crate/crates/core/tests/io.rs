mod common;

use common::{gaussian, random_psd, rng};
use metricfit::datagen::{generate, SyntheticSpec};
use metricfit::io::{
    parse_label, read_dataset_file, read_tabular, write_dataset_file, ModelDocument, ModelMetadata, PairColumns,
    TabularSpec, CREATED_TAG,
};
use metricfit::normalize::{normalize, Normalization};
use metricfit::{pull_back, Dataset, Error, FactorModel, Hypothesis, Label, MetricModel, NoiseKind};
use nalgebra::DMatrix;

#[test]
fn model_document_file_round_trip_is_exact() {
    let mut r = rng(11);
    let a = gaussian(6, 3, &mut r);
    let f = FactorModel::new(a, 0.123456789012345678).unwrap();
    let m = f.to_metric();
    let meta = ModelMetadata {
        seed: Some(42),
        noise_kind: Some(NoiseKind::Laplace),
        ..Default::default()
    };
    let mut doc = ModelDocument::new(&m, Some(&f), meta);
    doc.noise_scale = Some(0.2070123456789);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    doc.write(&path).unwrap();
    let back = ModelDocument::read(&path).unwrap();
    assert_eq!(back, doc);
    assert_eq!(back.metric::<f64>().unwrap(), m);
    assert_eq!(back.factor_model::<f64>().unwrap().unwrap(), f);
    assert_eq!(back.metadata.created, CREATED_TAG);

    // Writing twice gives identical bytes.
    let again = dir.path().join("again.json");
    back.write(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn model_document_without_factor_omits_field() {
    let m = MetricModel::new(random_psd(3, &mut rng(2)), 1.0).unwrap();
    let doc = ModelDocument::new(&m, None, ModelMetadata::default());
    let text = serde_json::to_string(&doc).unwrap();
    assert!(!text.contains("factor"));
    assert!(!text.contains("noise_scale"));
    let back: ModelDocument = serde_json::from_str(&text).unwrap();
    assert!(back.factor_model::<f64>().unwrap().is_none());
}

#[test]
fn model_document_rejects_bad_shapes_and_matrices() {
    let mut doc = ModelDocument::new(
        &MetricModel::identity(2, 1.0).unwrap(),
        None,
        ModelMetadata::default(),
    );
    doc.matrix.pop();
    assert!(matches!(doc.metric::<f64>(), Err(Error::Format(_))));
    doc.matrix = vec![1.0, 2.0, 0.0, 1.0];
    assert!(doc.metric::<f64>().is_err());
    doc.matrix = vec![1.0, 0.0, 0.0, -1.0];
    assert!(doc.metric::<f64>().is_err());
}

#[test]
fn dataset_file_round_trip_with_and_without_clean_labels() {
    let mut spec = SyntheticSpec::canonical();
    spec.n_pairs = 300;
    spec.n_train = 200;
    spec.seed = 5;
    let g = generate::<f64>(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let path = dir.path().join("train.csv");
    write_dataset_file(&g.train, &path).unwrap();
    let back: Dataset<f64> = read_dataset_file(&path).unwrap();
    assert_eq!(back.zs(), g.train.zs());
    assert_eq!(back.labels(), g.train.labels());
    assert_eq!(back.clean_labels(), g.train.clean_labels());

    let bare = Dataset::new(g.test.zs().clone(), g.test.labels().to_vec(), None).unwrap();
    let path = dir.path().join("bare.csv");
    write_dataset_file(&bare, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",label"));
    let back: Dataset<f64> = read_dataset_file(&path).unwrap();
    assert_eq!(back, bare);
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = read_dataset_file::<f64>(&dir.path().join("nope.csv"));
    assert!(matches!(r, Err(Error::Io(_))));
    assert!(matches!(ModelDocument::read(&dir.path().join("nope.json")), Err(Error::Io(_))));
}

#[test]
fn label_codes() {
    for s in ["-1", "-1.0", "close", "CLOSE", " 0 ", "0.0"] {
        assert_eq!(parse_label(s, 1).unwrap(), Label::Close, "{s}");
    }
    for s in ["1", "+1", "1.0", "Far"] {
        assert_eq!(parse_label(s, 1).unwrap(), Label::Far, "{s}");
    }
    for s in ["2", "", "near", "0.5"] {
        assert!(matches!(parse_label(s, 7), Err(Error::Format(_))), "{s}");
    }
}

#[test]
fn tabular_direct_named_columns() {
    let text = "id,a,b,c,y\n0,1.5,2,3,close\n1,-1,0,4,1\n";
    let spec = TabularSpec {
        label_column: "y".into(),
        delimiter: ',',
        pairs: PairColumns::Direct {
            columns: vec!["c".into(), "a".into()],
        },
    };
    let ds: Dataset<f64> = read_tabular(text.as_bytes(), &spec).unwrap();
    assert_eq!(ds.zs(), &DMatrix::from_column_slice(2, 2, &[3.0, 1.5, 4.0, -1.0]));
    assert_eq!(ds.labels(), &[Label::Close, Label::Far]);
    assert!(ds.clean_labels().is_none());
}

#[test]
fn tabular_errors() {
    let text = "a,b,y\n1,2,1\n";
    let missing = TabularSpec {
        label_column: "label".into(),
        delimiter: ',',
        pairs: PairColumns::Direct { columns: vec![] },
    };
    assert!(matches!(read_tabular::<f64, _>(text.as_bytes(), &missing), Err(Error::Format(_))));
    let uneven = TabularSpec {
        label_column: "y".into(),
        delimiter: ',',
        pairs: PairColumns::Difference {
            x: vec!["a".into(), "b".into()],
            y: vec!["a".into()],
        },
    };
    assert!(matches!(
        read_tabular::<f64, _>(text.as_bytes(), &uneven),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn tabular_spec_parses_from_json() {
    let spec: TabularSpec =
        serde_json::from_str(r#"{"label_column":"s","pairs":{"mode":"difference","x":["p"],"y":["q"]}}"#).unwrap();
    assert_eq!(spec.delimiter, ',');
    assert_eq!(
        spec.pairs,
        PairColumns::Difference {
            x: vec!["p".into()],
            y: vec!["q".into()]
        }
    );
}

#[test]
fn pulled_back_model_reproduces_predictions() {
    let mut r = rng(3);
    let raw = gaussian(4, 200, &mut r);
    let scales = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 10.0, 0.1, 3.0]));
    let zs = &scales * raw;
    let ds = Dataset::new(zs, vec![Label::Far; 200], None).unwrap();
    for mode in [Normalization::Standardize, Normalization::Whiten] {
        let (t, u) = normalize(&ds, mode).unwrap();
        let m_prime = MetricModel::new(random_psd(4, &mut r), 2.0).unwrap();
        let m = pull_back(&m_prime, &u).unwrap();
        let on_t = m_prime.predict_all(t.zs()).unwrap();
        let on_raw = m.predict_all(ds.zs()).unwrap();
        let q_t = m_prime.quad_forms(t.zs()).unwrap();
        let q_raw = m.quad_forms(ds.zs()).unwrap();
        for i in 0..200 {
            assert!((q_t[i] - q_raw[i]).abs() <= 1e-9 * (1.0 + q_t[i].abs()));
            if (q_t[i] - 2.0).abs() > 1e-9 {
                assert_eq!(on_t[i], on_raw[i]);
            }
        }
    }
}
