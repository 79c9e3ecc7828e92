//! Benefit tables, their affine closed form and the crime utilities.

use eopfair::rational::q;
use eopfair::utility::{advantage, coefficients_from_benefit_table, BenefitTable};
use eopfair::{GroupId, UtilitySpec};

fn main() {
    let table = BenefitTable::new(q(1, 1), q(3, 2), q(0, 1), q(5, 4));
    let c = coefficients_from_benefit_table(&table);
    println!("c0={} c1={} d0={} d1={}", c.c0, c.c1, c.d0, c.d1);
    for (y, yhat) in [(false, false), (false, true), (true, false), (true, true)] {
        let v = c.reconstruct(y, if yhat { q(1, 1) } else { q(0, 1) });
        println!("b[{}][{}] = {v}", u8::from(y), u8::from(yhat));
    }

    println!("advantage(3, 1) = {}", advantage(3.0, 1.0));

    let spec = UtilitySpec::crime();
    for (z, y, yhat) in [(0, 1.0, 1.0), (0, 0.5, 0.8), (1, 1.0, 1.0), (1, 0.2, 0.3)] {
        let u = spec.evaluate(GroupId(z), y, yhat).unwrap();
        println!("u(z={z}, y={y}, yhat={yhat}) = {u}");
    }
}
