use hpcheck::arbitrary::small_obligation;
use hpcheck::checker::{certify, check, SearchConfig};
use proptest::prelude::*;

fn config(seed: u64) -> SearchConfig {
    SearchConfig { budget: 50_000, seed, ..SearchConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn findings_recertify_exactly(ob in small_obligation(), seed in 0u64..4) {
        let v = check(&ob, &config(seed)).unwrap();
        match &v.certificate {
            Some(cx) => {
                prop_assert!(v.is_finding());
                prop_assert!(cx.exact, "{}", ob.text());
                prop_assert!(certify(cx, &ob), "{}", ob.text());
                prop_assert!(certify(cx, &ob.negated()), "dual of {}", ob.text());
            }
            None => {
                prop_assert!(!v.is_finding());
                prop_assert!(v.stats.exhaustive, "{} not enumerated", ob.text());
            }
        }
    }

    #[test]
    fn verdicts_repeat_for_a_seed(ob in small_obligation(), seed in 0u64..4) {
        let a = check(&ob, &config(seed)).unwrap();
        let b = check(&ob, &config(seed)).unwrap();
        prop_assert_eq!(a.outcome, b.outcome);
        prop_assert_eq!(a.stats.evaluations, b.stats.evaluations);
        prop_assert_eq!(
            a.certificate.map(|c| format!("{:?}", c.assignment)),
            b.certificate.map(|c| format!("{:?}", c.assignment))
        );
    }

    #[test]
    fn exhaustive_duals_agree(ob in small_obligation()) {
        let a = check(&ob, &config(0)).unwrap();
        let b = check(&ob.negated(), &config(0)).unwrap();
        prop_assert_eq!(a.is_finding(), b.is_finding(), "{}", ob.text());
    }
}
