use ppapep::certificate::{aggregate_a3, certify, f_cancellation_check, multipliers, sos_decompose};
use ppapep::pep::{build_pep, evaluate_feasibility, is_feasible, reduce_pep, ConstraintId};
use ppapep::ppa::{check_bounds, interpolation_violation, run_ppa, Metric, ProxFunction, ScaledL1};
use ppapep::schedule::StepSchedule;
use ppapep::worstcase::{closed_form_trajectory, l1_instance};
use proptest::prelude::*;

fn schedule(max_n: usize) -> impl Strategy<Value = StepSchedule> {
    prop::collection::vec(1e-3..1.0f64, 1..=max_n).prop_map(|a| StepSchedule::new(a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn multipliers_are_dual_feasible(s in schedule(30)) {
        let ms = multipliers(&s);
        prop_assert_eq!(ms.len(), 3 * s.len());
        prop_assert!(ms.iter().all(|(_, v)| v >= 0.0));
        let sep = ms.separator().index();
        prop_assert!(ms.get(ConstraintId::AtOpt(sep)) >= 0.0);
        prop_assert!(f_cancellation_check(&ms).iter().all(|r| r.abs() <= 1e-12));
    }

    #[test]
    fn sos_reconstructs_a3(s in schedule(20)) {
        let n = s.len();
        let a3 = aggregate_a3(&multipliers(&s)).unwrap();
        let sos = sos_decompose(&s);
        prop_assert!(sos.squares.iter().all(|q| q.weight >= 0.0));
        let diff = sos.reconstruct(n + 1).sub(a3.matrix()).max_abs();
        prop_assert!(diff <= 1e-10 * (1.0 + a3.matrix().max_abs()), "{diff}");
        prop_assert!(a3.matrix().symmetric_eigen().unwrap().min() >= -1e-10);
    }

    #[test]
    fn certificate_passes(s in schedule(15)) {
        let r = certify(&s);
        prop_assert!(r.passed(), "{:?}", r.failures);
        prop_assert!((r.bound_for_radius(1.0) - 1.0 / s.total()).abs() <= 1e-12 / s.total());
    }

    #[test]
    fn closed_form_is_ppa_on_l1(s in schedule(40), r in 0.1..5.0f64) {
        let inst = l1_instance(&s, r, 1.0).unwrap();
        let traj = run_ppa(&inst.function, &s, &inst.x0, &inst.metric, r).unwrap();
        let cf = closed_form_trajectory(&s, r);
        for (x, p) in traj.x.iter().zip(&cf.p) {
            prop_assert!((x[0] - p).abs() <= 1e-12 * r.max(1.0));
        }
        prop_assert!((cf.final_residual(&s) - r / s.total()).abs() <= 1e-12 * r.max(1.0));
    }

    #[test]
    fn ppa_data_is_feasible_for_the_pep(s in schedule(12), c in 0.1..3.0f64, x0 in -2.0..2.0f64) {
        prop_assume!(x0.abs() > 1e-3);
        let f = ScaledL1::new(c, 1).unwrap();
        let r = x0.abs();
        let traj = run_ppa(&f, &s, &[x0], &Metric::identity(1), r).unwrap();
        prop_assert!(interpolation_violation(&traj).unwrap() <= 1e-12);
        let inst = build_pep(&s, r).unwrap();
        prop_assert!(is_feasible(&evaluate_feasibility(&inst, &traj).unwrap(), 1e-10));
        prop_assert!(is_feasible(&evaluate_feasibility(&reduce_pep(&inst), &traj).unwrap(), 1e-10));
        prop_assert!(check_bounds(&traj).unwrap().ok());
    }

    #[test]
    fn scalar_metric_l1_is_tight(s in schedule(20), b in 0.1..10.0f64, r in 0.1..3.0f64) {
        let inst = l1_instance(&s, r, b).unwrap();
        prop_assert_eq!(inst.function.kind(), "l1");
        let traj = run_ppa(&inst.function, &s, &inst.x0, &inst.metric, r).unwrap();
        let rep = check_bounds(&traj).unwrap();
        prop_assert!((rep.subgrad_norm - rep.subgrad_bound).abs() <= 1e-12 * rep.subgrad_bound.max(1.0));
    }
}
