//! Brute-force check of which predictors optimize each fairness criterion.

use eopfair::tradeoffs::{self, random_case, Criterion, Realizability};
use eopfair::TaskMode;

fn main() {
    let case = random_case(3, TaskMode::Regression, Realizability::Unrealizable, 4, 16);
    println!("{} hypotheses, y_min={} y_max={}", case.class.hypotheses.len(), case.class.y_min(), case.class.y_max());
    for c in Criterion::SUPPORTED {
        let opt = tradeoffs::optimal_hypotheses(&case.class, &case.population, c).unwrap();
        let shown: Vec<&Vec<f64>> = opt.iter().map(|&h| &case.class.hypotheses[h]).collect();
        println!("{c}: {shown:?}");
    }

    for cell in tradeoffs::verify_table(20).unwrap() {
        println!("{cell}");
    }
}
