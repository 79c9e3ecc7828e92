//! Exhaustive check of the four metric/EOP equivalences, plus one witness.

use eopfair::eop::{self, check_rawlsian_eop, FiniteJointDistribution};
use eopfair::rational::Q;

fn main() {
    let denominator = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    for s in eop::run_proposition_suite(denominator) {
        println!("{s}");
    }

    // group 0 always predicted 1, group 1 half the time
    let d = FiniteJointDistribution::binary_cube(&[0, 2, 0, 2, 1, 1, 1, 1], 8).unwrap();
    let v = check_rawlsian_eop(&d, |_: &Q| Q::from_integer(0.into()), |a| a.yhat.clone());
    println!("constant-effort Rawlsian EOP satisfied: {} (gap {})", v.satisfied, v.gap);
    if let Some(w) = v.witness {
        println!("worst pair z={} vs z={} at {}, u={}", w.z, w.z_other, w.conditioning, w.u);
    }
}
