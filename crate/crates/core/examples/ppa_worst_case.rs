use ppapep::ppa::{check_bounds, run_ppa};
use ppapep::schedule::StepSchedule;
use ppapep::worstcase::{closed_form_trajectory, l1_instance};

fn main() {
    let sched = StepSchedule::new(vec![1.0, 2.0, 3.0]).unwrap();
    let radius = 1.0;
    let inst = l1_instance(&sched, radius, 1.0).unwrap();
    println!("f(x) = {}|x|, x0 = {:?}", inst.function.coeff(), inst.x0);

    let traj = run_ppa(&inst.function, &sched, &inst.x0, &inst.metric, radius).unwrap();
    let cf = closed_form_trajectory(&sched, radius);
    for (i, (x, p)) in traj.x.iter().zip(&cf.p).enumerate() {
        println!("x_{i} = {:+.6}   closed form {:+.6}", x[0] + 0.0, p + 0.0);
    }

    let rep = check_bounds(&traj).unwrap();
    println!("|g_N| = {:.6}, bound R/sum = {:.6}", rep.subgrad_norm, rep.subgrad_bound);
    println!("f(x_N) - f* = {:.6}, bound R^2/(4 sum) = {:.6}", rep.fval_gap, rep.fval_bound);
}
