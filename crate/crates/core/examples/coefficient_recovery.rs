use ppapep::certificate::{recover_bound_coefficients, Ansatz};
use ppapep::pep::build_pep;
use ppapep::schedule::StepSchedule;
use ppapep::sdp;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

fn main() {
    let n = 3;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    let samples: Vec<(StepSchedule, f64)> = (0..n + 2)
        .map(|_| {
            let s = StepSchedule::random(n, &mut rng).unwrap();
            let v = sdp::solve(&build_pep(&s, 1.0).unwrap(), 1e-9, sdp::DEFAULT_MAX_ITER).unwrap().objective;
            println!("alphas {:?}: worst |g_N| = {:.9}", s.alphas(), v.sqrt());
            (s, v.sqrt())
        })
        .collect();

    let c = recover_bound_coefficients(&samples, Ansatz::ConstantOverLinear).unwrap();
    println!("numerator   {:?}", c.numerator);
    println!("denominator {:?}", c.denominator);
    println!("conditioning {:.2e}, residual {:.2e}", c.conditioning, c.residual);
}
