use ppapep::certificate::{aggregate_a3, certify, multipliers, sos_decompose};
use ppapep::schedule::StepSchedule;

fn main() {
    for alphas in [vec![1.0], vec![1.0, 1.0], vec![3.0, 1.0, 1.0], vec![1.0, 1.0, 1.0, 1.0]] {
        let sched = StepSchedule::new(alphas.clone()).unwrap();
        let report = certify(&sched);
        println!("alphas {alphas:?}: s = {}, case {:?}, passed {}", report.separator, report.case, report.passed());

        for (id, v) in multipliers(&sched).iter().filter(|(_, v)| *v != 0.0) {
            println!("  lambda[{id}] = {v:.6}");
        }
        let a3 = aggregate_a3(&multipliers(&sched)).unwrap();
        println!("  A3 = {:?}", a3.matrix().to_rows());
        for row in sos_decompose(&sched).rows() {
            println!("  square: weight {:.6}, coeffs {:?}", row[0], &row[1..]);
        }
        println!("  ||g_N||^2 <= {}", report.bound);
    }
}
