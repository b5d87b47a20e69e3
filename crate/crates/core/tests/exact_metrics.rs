use num_rational::Ratio;
use proptest::prelude::*;
use vdaudit::dataset::GroupTag;
use vdaudit::metrics::{recall_by_bin, vulnerability_disparity, MemberOutcome, VdInput};
use vdaudit::{Exact, ExactVdReport, VdReport64};

fn outcome() -> impl Strategy<Value = MemberOutcome> {
    (any::<bool>(), any::<bool>(), 0.0f64..=1.0).prop_map(|(hit, protected, probability)| MemberOutcome {
        predicted_member: hit,
        group: if protected { GroupTag::Protected } else { GroupTag::Unprotected },
        probability,
    })
}

fn input() -> impl Strategy<Value = VdInput> {
    prop::collection::vec(outcome(), 2..300)
        .prop_filter("both groups present", |m| {
            m.iter().any(|o| o.group == GroupTag::Protected) && m.iter().any(|o| o.group == GroupTag::Unprotected)
        })
        .prop_map(|members| VdInput { members })
}

#[test]
fn rational_vd_is_a_difference_of_counted_recalls() {
    let mk = |hit, g, p| MemberOutcome { predicted_member: hit, group: g, probability: p };
    let input = VdInput {
        members: vec![
            mk(true, GroupTag::Protected, 0.95),
            mk(false, GroupTag::Protected, 0.2),
            mk(true, GroupTag::Protected, 0.55),
            mk(true, GroupTag::Unprotected, 0.95),
            mk(false, GroupTag::Unprotected, 0.1),
        ],
    };
    let vd: Exact = vulnerability_disparity(&input).unwrap();
    assert_eq!(vd, Ratio::new(2, 3) - Ratio::new(1, 2));
    let report: ExactVdReport = recall_by_bin(&input).unwrap();
    assert_eq!(report.bin_difference_sum(), Ratio::new(1, 6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bin_identity_is_exact_in_rationals(input in input()) {
        let report: ExactVdReport = recall_by_bin(&input).unwrap();
        prop_assert_eq!(report.bin_difference_sum(), report.vd);
        let float: VdReport64 = recall_by_bin(&input).unwrap();
        prop_assert!((float.bin_difference_sum() - float.vd).abs() <= 1e-12);
        let swapped: Exact = vulnerability_disparity(&input.swapped()).unwrap();
        prop_assert_eq!(swapped, -report.vd);
    }
}
