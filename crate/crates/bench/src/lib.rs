//! Benchmark scenarios shared by the criterion targets.

use lqr_accel::harness::{gen_integrator_chain, gen_olqr_chain, gen_random_medium};
use lqr_accel::{Gain, LqrProblem, Matrix};

/// A problem together with the stabilizing gain the scenario starts from.
pub struct Scenario {
    pub name: &'static str,
    pub problem: LqrProblem,
    pub k0: Matrix,
}

fn row(values: &[f64]) -> Matrix {
    Gain::row(values).expect("finite gain").into_matrix()
}

/// Triple integrator from `[5, 100, 15]`.
pub fn example1() -> Scenario {
    Scenario { name: "example1", problem: gen_integrator_chain(3).unwrap(), k0: row(&[5.0, 100.0, 15.0]) }
}

/// Triple integrator from `[1, 2, 2]`, where momentum tends to overshoot near the optimum.
pub fn example2() -> Scenario {
    Scenario { name: "example2", problem: gen_integrator_chain(3).unwrap(), k0: row(&[1.0, 2.0, 2.0]) }
}

/// Ten-fold integrator from the binomial gain.
pub fn example3() -> Scenario {
    Scenario {
        name: "example3",
        problem: gen_integrator_chain(10).unwrap(),
        k0: row(&[1.0, 10.0, 45.0, 120.0, 210.0, 252.0, 210.0, 120.0, 45.0, 10.0]),
    }
}

/// Random medium-size instance from the zero gain.
pub fn example4(n: usize, m: usize, seed: u64) -> Scenario {
    let problem = gen_random_medium(n, m, seed).unwrap();
    let k0 = problem.zero_gain().into_matrix();
    Scenario { name: "example4", problem, k0 }
}

/// Output-feedback chain from gain 1.
pub fn olqr_chain() -> Scenario {
    Scenario { name: "olqr_chain3", problem: gen_olqr_chain(3).unwrap(), k0: row(&[1.0]) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lqr_accel::lqr::is_stabilizing;

    #[test]
    fn scenarios_start_stabilized() {
        for s in [example1(), example2(), example3(), example4(10, 3, 0), olqr_chain()] {
            assert!(is_stabilizing(&s.problem, &s.k0), "{}", s.name);
        }
    }
}
