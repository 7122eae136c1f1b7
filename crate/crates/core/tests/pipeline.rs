use coxcut::classify::{predict_proba_batch, ClassModel};
use coxcut::cv::{default_grid, loo_cv};
use coxcut::data::{gen_concentric_circles, partition, zero_one_error, Dataset};
use coxcut::mrf::{build_energy, energy_of, joint_unnormalized_log_prob};
use coxcut::{ssl_solve, Kernel};

#[test]
fn csv_round_trip_then_ssl() {
    let data = gen_concentric_circles(30, &[1.0, 5.0], 0.1, 11).unwrap();
    let split = partition(&data, 4, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("semi.csv");
    split.combined().save_csv(&path).unwrap();

    let loaded = Dataset::load_csv(&path, "label", None).unwrap();
    assert_eq!(loaded, split.combined());
    let (labeled, unlabeled, _) = loaded.split_labeled();
    assert_eq!(unlabeled.len(), 52);

    let models = ClassModel::shared(Kernel::squared_exponential(0.25, 1.0).unwrap(), 2);
    let s = ssl_solve(&models, &labeled, &unlabeled).unwrap();
    assert!(s.exact);
    assert!(zero_one_error(s.labeling.as_slice(), &split.withheld) <= 2.0 / 52.0);

    // The solver's energy is the negated log joint of the completed dataset.
    let mut labels = labeled.labels().to_vec();
    labels.extend(s.labeling.as_slice().iter().map(|&l| Some(l)));
    let mut cov = labeled.covariates().to_vec();
    cov.extend(unlabeled.iter().cloned());
    let full = Dataset::new(cov, labels, 2).unwrap();
    let joint = joint_unnormalized_log_prob(&models, &full).unwrap();
    let e = build_energy(&models, &labeled, &unlabeled).unwrap();
    assert!((energy_of(&e, &s.labeling).unwrap() + joint).abs() < 1e-9 * joint.abs().max(1.0));
}

#[test]
fn loo_selection_beats_chance_on_circles() {
    let data = gen_concentric_circles(40, &[1.0, 3.0], 0.1, 2).unwrap();
    let split = partition(&data, 20, 2).unwrap();
    let template = Kernel::squared_exponential(1.0, 1.0).unwrap();
    let cv = loo_cv(&split.labeled, &template, &default_grid(data.covariates()).unwrap()).unwrap();
    let models = ClassModel::shared(template.with_length_scale(cv.best_length_scale).unwrap(), 2);
    let pred: Vec<usize> = predict_proba_batch(&models, &split.labeled, split.unlabeled.covariates())
        .unwrap()
        .iter()
        .map(|p| p.label())
        .collect();
    assert!(zero_one_error(&pred, &split.withheld) < 0.2);
}
