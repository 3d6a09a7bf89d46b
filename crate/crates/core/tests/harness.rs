use sba_core::classifiers::ClassifierKind;
use sba_core::dataset::{AgeGroup, Cohort, CohortTag, Gender};
use sba_core::embedding::{load_layer, LayerId};
use sba_core::features::{FeatureSetId, FeatureTable};
use sba_core::harness::*;
use sba_core::metrics::Dimension;
use sba_core::synthetic::*;

fn cohort_of(spec: &SyntheticSpec) -> (Cohort, FeatureTable) {
    let c = gen_cohort(spec).unwrap();
    let cohort = Cohort::new(c.records, CohortTag::Imbalanced).unwrap();
    let table = FeatureTable::from_vectors(spec.feature_set(), c.features).unwrap();
    (cohort, table)
}

fn rf(task: Task, condition: Condition, feature: FeatureSetId) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(task, condition, feature, ClassifierKind::Rf);
    c.train.rf.n_trees = 30;
    c
}

#[test]
fn sweep_peaks_at_the_most_separated_layer() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::uniform(15, 4, shift_for_auc(0.95, 1.0), 1.0, 3);
    let layers: Vec<LayerShift> = (1..=12)
        .map(|i| LayerShift {
            layer: LayerId::hidden(i).unwrap(),
            scale: if i == 9 { 1.0 } else { 0.15 },
        })
        .collect();
    let index = write_layer_archives(&spec, &layers, 4, dir.path()).unwrap();
    let index: Vec<_> = index
        .into_iter()
        .map(|mut e| {
            e.path = dir.path().join(&e.path);
            e
        })
        .collect();
    let (cohort, _) = cohort_of(&spec);
    let ids: Vec<LayerId> = layers.iter().map(|l| l.layer).collect();
    let template = rf(Task::CiVsNci, Condition::Imb, FeatureSetId::Custom("x".into()));
    let rows = layer_sweep(&template, &cohort, &index, &ids, &[ClassifierKind::Rf]).unwrap();
    assert_eq!(rows.len(), 12);
    let best = rows
        .iter()
        .max_by(|a, b| a.result.mean.uar.total_cmp(&b.result.mean.uar))
        .unwrap();
    assert_eq!(best.layer, LayerId::hidden(9).unwrap());

    // a sweep row is exactly the experiment on that layer's pooled features
    let layer = LayerId::hidden(4).unwrap();
    let table = FeatureTable::from_vectors(FeatureSetId::W2v2(layer), load_layer(&index, layer).unwrap()).unwrap();
    let mut config = template.clone();
    config.feature = FeatureSetId::W2v2(layer);
    let direct = run_experiment(&config, &cohort, &table).unwrap();
    assert_eq!(rows[3].result, direct);
}

/// Groups whose depression status coincides with CI status.
fn aligned_spec(n: usize, seed: u64) -> SyntheticSpec {
    let mut groups = Vec::new();
    for gender in [Gender::F, Gender::M] {
        for age_group in [AgeGroup::Group1, AgeGroup::Group2] {
            for depressed in [false, true] {
                groups.push(GroupSpec {
                    gender,
                    age_group,
                    depressed,
                    n_ci: if depressed { n } else { 0 },
                    n_nci: if depressed { 0 } else { n },
                    shift: shift_for_auc(0.85, 1.0),
                });
            }
        }
    }
    SyntheticSpec {
        groups,
        dim: 3,
        sigma: 1.0,
        seed,
        feature_name: "synthetic".into(),
    }
}

#[test]
fn cross_task_with_coinciding_labels_equals_the_direct_task() {
    let spec = aligned_spec(20, 4);
    let (cohort, table) = cohort_of(&spec);
    let direct = run_experiment(&rf(Task::CiVsNci, Condition::Cigb, spec.feature_set()), &cohort, &table).unwrap();
    for task in [Task::CrossTrainCiTestD, Task::CrossTrainDTestCi] {
        let cross = cross_task_eval(&rf(task, Condition::Cigb, spec.feature_set()), &cohort, &table).unwrap();
        assert_eq!(cross.mean, direct.mean, "{task}");
        assert_eq!(
            cross.runs.iter().map(|r| r.test_ids_hash.clone()).collect::<Vec<_>>(),
            direct.runs.iter().map(|r| r.test_ids_hash.clone()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn cross_task_to_an_unrelated_label_is_near_chance() {
    let spec = SyntheticSpec::uniform(20, 3, shift_for_auc(0.95, 1.0), 1.0, 8);
    let (cohort, table) = cohort_of(&spec);
    let r = cross_task_eval(&rf(Task::CrossTrainCiTestD, Condition::Cigb, spec.feature_set()), &cohort, &table).unwrap();
    assert!((r.mean.uar - 0.5).abs() < 0.1, "uar {}", r.mean.uar);
}

#[test]
fn cross_task_needs_the_gender_balanced_condition() {
    let spec = SyntheticSpec::uniform(5, 2, 1.0, 1.0, 1);
    let (cohort, table) = cohort_of(&spec);
    let err = cross_task_eval(&rf(Task::CrossTrainCiTestD, Condition::Imb, spec.feature_set()), &cohort, &table)
        .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let err = cross_task_eval(&rf(Task::CiVsNci, Condition::Cigb, spec.feature_set()), &cohort, &table).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let spec = SyntheticSpec::uniform(10, 3, 1.5, 1.0, 2);
    let (cohort, table) = cohort_of(&spec);
    let config = rf(Task::CiVsNci, Condition::Cib, spec.feature_set());
    let many = run_experiment(&config, &cohort, &table).unwrap();
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_experiment(&config, &cohort, &table).unwrap());
    assert_eq!(many, one);
}

#[test]
fn every_condition_and_task_runs() {
    let mut spec = SyntheticSpec::uniform(12, 3, 2.0, 1.0, 6);
    for g in &mut spec.groups {
        // CI surplus among women, NCI surplus among men
        if g.gender == Gender::F {
            g.n_ci += 6;
        } else {
            g.n_nci += 4;
        }
    }
    let (cohort, table) = cohort_of(&spec);
    for condition in [Condition::Imb, Condition::Cib, Condition::Cigb, Condition::TrainBalTestRem] {
        for task in [Task::CiVsNci, Task::DciVsNdci] {
            let r = run_experiment(&rf(task, condition, spec.feature_set()), &cohort, &table)
                .unwrap_or_else(|e| panic!("{task} {condition}: {e}"));
            assert_eq!(r.runs.len(), 5);
            for run in &r.runs {
                assert!(run.n_train > 0 && run.n_test > 0);
                assert_ne!(run.train_ids_hash, run.test_ids_hash);
            }
        }
    }
}

#[test]
fn balanced_census_leaves_nothing_to_test_on() {
    let spec = SyntheticSpec::uniform(6, 2, 1.0, 1.0, 1);
    let (cohort, table) = cohort_of(&spec);
    let err = run_experiment(&rf(Task::CiVsNci, Condition::TrainBalTestRem, spec.feature_set()), &cohort, &table)
        .unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("remain"));
}

#[test]
fn depression_task_only_sees_ci_subjects() {
    let spec = SyntheticSpec::uniform(12, 3, 2.0, 1.0, 6);
    let (cohort, table) = cohort_of(&spec);
    let r = run_experiment(&rf(Task::DciVsNdci, Condition::Imb, spec.feature_set()), &cohort, &table).unwrap();
    let ci: std::collections::HashSet<&str> = cohort
        .members()
        .iter()
        .filter(|m| m.labels.ci)
        .map(|m| m.record.subject_id.as_str())
        .collect();
    for run in &r.runs {
        assert_eq!(run.n_train + run.n_test, ci.len());
        assert!(run.scores.iter().all(|s| ci.contains(s.subject_id.as_str())));
    }
}

#[test]
fn bias_analysis_sees_an_injected_gender_gap() {
    let mut spec = SyntheticSpec::uniform(40, 3, 0.0, 1.0, 12);
    for g in &mut spec.groups {
        g.shift = shift_for_auc(if g.gender == Gender::M { 0.97 } else { 0.7 }, 1.0);
    }
    let (cohort, table) = cohort_of(&spec);
    let r = run_experiment(&rf(Task::CiVsNci, Condition::Imb, spec.feature_set()), &cohort, &table).unwrap();
    let b = bias_analysis(&r, &cohort, &[Dimension::Gender], 30).unwrap();
    let g = &b.dimensions[0];
    assert_eq!((g.group_a.group.as_str(), g.group_b.group.as_str()), ("male", "female"));
    assert!(g.group_a.auc.unwrap() - g.group_b.auc.unwrap() > 0.1);
    assert_eq!(g.group_a.n_pos + g.group_a.n_neg + g.group_b.n_pos + g.group_b.n_neg, r.runs.iter().map(|x| x.n_test).sum::<usize>());
}
