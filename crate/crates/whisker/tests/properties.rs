//! Property tests for the subspace calculus, the correspondence algebra and
//! the condition-constant derivations.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::sync::Arc;
use whisker::conditions::{ab_from_additive_lipschitz, check_ab_empirical, SamplePlan};
use whisker::correspondence::CorrespondenceHandle;
use whisker::grassmann::{gap_metrics, graph_chart, graph_chart_inverse, GraphChart, Subspace};

fn subspace_strategy(n: usize, k: usize) -> impl Strategy<Value = Subspace> {
    proptest::collection::vec(-1.0f64..1.0, n * k)
        .prop_filter_map("independent basis", move |v| {
            Subspace::new(DMatrix::from_column_slice(n, k, &v)).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gap_ordering_holds(a in subspace_strategy(5, 2), b in subspace_strategy(5, 3)) {
        let g = gap_metrics(&a, &b).unwrap();
        prop_assert!(g.alpha <= g.delta + 1e-12);
        prop_assert!(g.delta <= g.d + 1e-12);
        prop_assert!(g.d <= 2.0 * g.delta + 1e-12);
        prop_assert!(g.dhat >= g.d - 1e-12);
    }

    #[test]
    fn chart_round_trip_within_half_alpha(entries in proptest::collection::vec(-1.0f64..1.0, 6)) {
        let base = Subspace::coordinate(5, &[0, 1]);
        let trans = Subspace::coordinate(5, &[2, 3, 4]);
        let alpha = gap_metrics(&base, &trans).unwrap().alpha;
        let mut f = DMatrix::from_column_slice(3, 2, &entries);
        let norm = whisker::linalg::op_norm(&f);
        if norm > 0.0 {
            f *= (alpha / 2.0 * 0.99) / norm.max(alpha / 2.0);
        }
        let chart = GraphChart { base: base.clone(), transversal: trans.clone(), map: f.clone() };
        let graph = graph_chart_inverse(&chart).unwrap();
        let back = graph_chart(&base, &trans, &graph).unwrap();
        prop_assert!(whisker::linalg::op_norm(&(&back.map - &f)) <= 1e-9);
    }

    #[test]
    fn dual_is_involutive_on_linear_pairs(a in 0.2f64..0.9, b in 1.2f64..3.0, x in -1.0f64..1.0, z in -1.0f64..1.0) {
        let h = CorrespondenceHandle::from_generating_maps(
            Arc::new(move |x: &DVector<f64>, _: &DVector<f64>| a * x),
            Arc::new(move |_: &DVector<f64>, z: &DVector<f64>| z / b),
            (1.0, 1.0),
            (1, 1),
        );
        let dd = h.dual().dual();
        let xv = DVector::from_vec(vec![x]);
        let zv = DVector::from_vec(vec![z]);
        prop_assert!((dd.pair.f(&xv, &zv) - h.pair.f(&xv, &zv)).norm() <= 1e-13);
        prop_assert!((dd.pair.g(&xv, &zv) - h.pair.g(&xv, &zv)).norm() <= 1e-13);
        // membership symmetry through the dual
        let y1 = h.pair.g(&xv, &zv);
        let x2 = h.pair.f(&xv, &zv);
        let r = h.dual().membership_residual((&zv, &x2), (&y1, &xv));
        prop_assert!(r <= 1e-12);
    }

    #[test]
    fn additive_constants_round_trip(
        at in 0.0f64..0.2,
        bt in 0.0f64..0.2,
        ls in 0.05f64..0.9,
        lu in 0.05f64..0.9,
    ) {
        prop_assume!(ls * lu < 1.0);
        let margin = 1.0 - (ls * lu).sqrt();
        prop_assume!(at * bt < margin * margin * 0.98);
        let c = ab_from_additive_lipschitz(at, bt, ls, lu, 1.0).unwrap();
        prop_assert!(c.alpha * c.beta < 1.0);
        prop_assert!(c.lambda_cs * c.lambda_u < 1.0);
        // the derived constants pass the exhaustive implication check on the
        // matched scalar linear model
        let h = CorrespondenceHandle::from_generating_maps(
            Arc::new(move |x: &DVector<f64>, z: &DVector<f64>| ls * x + at * z),
            Arc::new(move |x: &DVector<f64>, z: &DVector<f64>| bt * x + lu * z),
            (1.0, 1.0),
            (1, 1),
        );
        let report = check_ab_empirical(&h, &c, &SamplePlan::new(400, 1.0, 1.0, 99));
        prop_assert!(report.passed, "violation: {:?}", report.violated_pairs.first());
    }
}
