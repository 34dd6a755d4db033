use taskcp::conformal::lwr_stats;
use taskcp::testbed::{generate_dataset, make_problem, ProblemSpec};

#[test]
fn task_spread_shrinks_with_more_measurements() {
    let problem = make_problem(&ProblemSpec::default(), 17).unwrap();
    let data = generate_dataset(&problem, 10_000, 16, 17).unwrap();
    let mean_spread: Vec<f64> = data
        .rounds()
        .iter()
        .map(|recs| {
            recs.iter()
                .map(|r| lwr_stats(&r.task_samples).unwrap().std)
                .sum::<f64>()
                / recs.len() as f64
        })
        .collect();
    for w in mean_spread.windows(2) {
        assert!(w[1] < w[0], "spread did not shrink: {mean_spread:?}");
    }
}

#[test]
fn classes_are_roughly_balanced() {
    let problem = make_problem(&ProblemSpec::default(), 3).unwrap();
    let data = generate_dataset(&problem, 4000, 2, 3).unwrap();
    let ones = data
        .round(1)
        .unwrap()
        .iter()
        .filter(|r| r.class_label == 1)
        .count();
    // Zero bias and a symmetric prior: a fair coin, so 4 SE is about 0.032.
    assert!((ones as f64 / 4000.0 - 0.5).abs() < 0.032, "{ones}");
}

#[test]
fn seeds_select_distinct_datasets() {
    let problem = make_problem(&ProblemSpec::default(), 1).unwrap();
    let a = generate_dataset(&problem, 20, 4, 1).unwrap();
    let b = generate_dataset(&problem, 20, 4, 1).unwrap();
    let c = generate_dataset(&problem, 20, 4, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
