mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vdaudit::fairpick::{solve_deletions, ClusteredData, SolverConfig};

#[test]
fn integer_plans_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..20 {
        let counts = common::random_counts_2x2(&mut rng);
        for (t, penalty) in [(0.0, 0.0), (0.4, 0.0), (0.8, 0.0), (0.5, 1e-3)] {
            let cfg = SolverConfig { deletion_penalty: penalty, refine_passes: 0, ..SolverConfig::new(t) };
            let plan = solve_deletions(&ClusteredData::<f64>::from_counts(counts.clone()), &cfg).unwrap();
            let got = common::plan_objective(&counts, &plan.del, t, penalty);
            let best = common::brute_force_2x2(&counts, t, penalty);
            assert!((got - best).abs() <= 1e-6, "case {case} {counts:?} t={t} penalty={penalty}: {got} vs {best}");
        }
    }
}
