//! Group fairness gaps on a small labelled sample.

use eopfair::metrics;
use eopfair::GroupId;

fn main() {
    let y = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
    let yhat = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0];
    let z: Vec<GroupId> = [0, 0, 0, 0, 1, 1, 1, 1].into_iter().map(GroupId).collect();

    let reports = [
        metrics::statistical_parity_gap(&yhat, &z).unwrap(),
        metrics::equality_of_odds_gap(&y, &yhat, &z).unwrap(),
        metrics::predictive_value_parity_gap(&y, &yhat, &z).unwrap(),
        metrics::accuracy_parity_gap(&y, &yhat, &z).unwrap(),
        metrics::mean_difference(&yhat, &z).unwrap(),
    ];
    for r in &reports {
        println!("{:<28} gap={:.4} per_group={:?}", r.name, r.gap, r.per_group);
    }

    let scores = [0.9, 0.1, 0.4, 0.8, 0.6, 0.7, 0.2, 0.5];
    let prd = metrics::positive_residual_difference(&y, &scores, &z).unwrap();
    let nrd = metrics::negative_residual_difference(&y, &scores, &z).unwrap();
    println!("positive residual difference {:.4}", prd.gap);
    println!("negative residual difference {:.4}", nrd.gap);
}
