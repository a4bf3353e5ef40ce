use ppapep::pep::{reduction_drop_set, ConstraintId};
use ppapep::schedule::StepSchedule;
use ppapep::worstcase::inactive_constraint_probe;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

fn main() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    for n in [2, 4, 6] {
        let sched = StepSchedule::random(n, &mut rng).unwrap();
        let reduced = inactive_constraint_probe(&sched, 1.0, &reduction_drop_set(n), 1e-7, 1e-9).unwrap();
        let last = inactive_constraint_probe(&sched, 1.0, &[ConstraintId::FNonneg(n)], 1e-7, 1e-9).unwrap();
        println!(
            "N={n}: full {:.10}, reduced {:.10} (same: {}), without f_nonneg({n}) {:.10} (same: {})",
            reduced.value_full, reduced.value_dropped, reduced.same, last.value_dropped, last.same
        );
    }
}
