use ppapep::pep::{build_pep, reduce_pep};
use ppapep::schedule::StepSchedule;
use ppapep::sdp::{self, rank_profile};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let sched = StepSchedule::random(n, &mut Xoshiro256PlusPlus::seed_from_u64(7)).unwrap();
    let full = build_pep(&sched, 1.0).unwrap();
    let reduced = reduce_pep(&full);

    for (name, inst) in [("full", &full), ("reduced", &reduced)] {
        let sol = sdp::solve(inst, 1e-9, sdp::DEFAULT_MAX_ITER).unwrap();
        println!(
            "{name:>8}: {} constraints, value {:.12}, sqrt {:.12}, rank {}, {} iterations",
            inst.len(),
            sol.objective,
            sol.objective.sqrt(),
            rank_profile(&sol, 1e-5),
            sol.iterations
        );
    }
    println!("   1/sum: {:.12}", 1.0 / sched.total());
}
