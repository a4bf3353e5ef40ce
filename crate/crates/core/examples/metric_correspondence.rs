use ppapep::families::random_spd;
use ppapep::ppa::{check_bounds, metric_correspondence_gap, run_ppa, MaxAffine, Metric};
use ppapep::schedule::StepSchedule;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

fn main() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    let metric = Metric::new(random_spd(&mut rng, 2)).unwrap();
    println!("B = {:?}", metric.matrix().to_rows());

    // f(x) = max(|x_1|, |x_2|)
    let slopes = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
    let f = MaxAffine::new(slopes, vec![0.0; 4]).unwrap().with_minimizer(vec![0.0, 0.0]).unwrap();
    let sched = StepSchedule::random(8, &mut rng).unwrap();
    let x0 = [6.0, -3.0];
    let radius = metric.norm(&x0);

    let traj = run_ppa(&f, &sched, &x0, &metric, radius).unwrap();
    let rep = check_bounds(&traj).unwrap();
    println!("||g_N||_(B^-1) = {:.6e} <= R/sum = {:.6e}", rep.subgrad_norm, rep.subgrad_bound);

    let gap = metric_correspondence_gap(&f, &sched, &x0, &metric, radius).unwrap();
    println!("B-metric run vs Euclidean run on f(B^(-1/2) z): max gap {gap:.2e}");
}
