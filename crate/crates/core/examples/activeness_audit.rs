use ppapep::schedule::StepSchedule;
use ppapep::worstcase::activeness_audit;

fn main() {
    let sched = StepSchedule::new(vec![1.0, 1.0, 1.0]).unwrap();
    let rep = activeness_audit(&sched, 1.0).unwrap();
    for e in &rep.entries {
        println!(
            "{:<12} slack {:+.3e}  {}{}",
            e.id.to_string(),
            e.slack,
            if e.active { "active" } else { "inactive" },
            if e.reduced { "" } else { "  (dropped by reduction)" }
        );
    }
    println!("all reduced constraints active: {}", rep.all_reduced_active());
}
