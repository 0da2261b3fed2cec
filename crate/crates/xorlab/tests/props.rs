//! Property tests over arbitrary positive rational tables: the invariants
//! that must hold for every input, not just the seeded fixtures.

use proptest::collection::vec;
use proptest::prelude::*;

use xorlab::constructions::coupled_mismatch_exact;
use xorlab::info::{advantage_rat, entropy, kl_divergence, mutual_information, tv_distance};
use xorlab::rational::{rat, rat_to_f64, Rat};
use xorlab::table::{BitVar, JointTable, Variable};

fn table2(w: &[u32]) -> JointTable {
    let total: i64 = w.iter().map(|&x| i64::from(x)).sum();
    let masses = w
        .iter()
        .enumerate()
        .map(|(i, &x)| (vec![(i / 2) as u32, (i % 2) as u32], rat(i64::from(x), total)))
        .collect();
    JointTable::new(vec![Variable::binary("a"), Variable::binary("b")], masses).unwrap()
}

fn bern(name: &str, ones: u32, zeros: u32) -> JointTable {
    let total = i64::from(ones + zeros);
    JointTable::new(
        vec![Variable::binary(name)],
        vec![
            (vec![0], rat(i64::from(zeros), total)),
            (vec![1], rat(i64::from(ones), total)),
        ],
    )
    .unwrap()
}

proptest! {
    #[test]
    fn entropy_stays_within_its_bounds(w in vec(1u32..10, 4)) {
        let t = table2(&w);
        let ha = entropy(&t, &["a"], &[]).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&ha));
        let hab = entropy(&t, &["a", "b"], &[]).unwrap();
        prop_assert!(hab <= 2.0 + 1e-12);
        let cond = entropy(&t, &["a"], &["b"]).unwrap();
        prop_assert!(cond <= ha + 1e-12, "conditioning reduces entropy");
        let mi = mutual_information(&t, &["a"], &["b"], &[]).unwrap();
        prop_assert!((mi - (ha - cond)).abs() <= 1e-12);
    }

    #[test]
    fn pinsker_holds_everywhere(p in vec(1u32..10, 4), q in vec(1u32..10, 4)) {
        let tp = table2(&p);
        let tq = table2(&q);
        let kl = kl_divergence(&tp, &tq, &["a", "b"]).unwrap();
        prop_assert!(kl >= -1e-12);
        let tv = rat_to_f64(&tv_distance(&tp, &tq, &["a", "b"]).unwrap());
        prop_assert!(kl + 1e-12 >= tv * tv / (2.0 * std::f64::consts::LN_2));
    }

    #[test]
    fn coupling_mismatch_sits_between_half_tv_and_tv(
        a in 1u32..20, b in 1u32..20, c in 1u32..20, d in 1u32..20,
    ) {
        let mu = bern("b", a, b);
        let nu = bern("b", c, d);
        let q = coupled_mismatch_exact(&mu, &nu).unwrap();
        let tv = tv_distance(&mu, &nu, &["b"]).unwrap();
        prop_assert!(q <= tv);
        prop_assert!(&q + &q >= tv);
    }

    #[test]
    fn xor_advantage_multiplies_exactly(
        a in 1u32..20, b in 1u32..20, c in 1u32..20, d in 1u32..20,
    ) {
        let u = bern("u", a, b);
        let v = bern("v", c, d);
        let t = u.product(&v).unwrap();
        let joint = advantage_rat(
            &t,
            &BitVar::xor2(BitVar::Var("u".into()), BitVar::Var("v".into())),
            None,
        )
        .unwrap();
        let au = advantage_rat(&t, &BitVar::Var("u".into()), None).unwrap();
        let av = advantage_rat(&t, &BitVar::Var("v".into()), None).unwrap();
        prop_assert_eq!(joint, au * av);
    }

    #[test]
    fn tv_is_a_metric_sample(p in vec(1u32..10, 4), q in vec(1u32..10, 4), r in vec(1u32..10, 4)) {
        let tp = table2(&p);
        let tq = table2(&q);
        let tr = table2(&r);
        let pq = tv_distance(&tp, &tq, &["a", "b"]).unwrap();
        let qp = tv_distance(&tq, &tp, &["a", "b"]).unwrap();
        prop_assert_eq!(&pq, &qp);
        let pr = tv_distance(&tp, &tr, &["a", "b"]).unwrap();
        let rq = tv_distance(&tr, &tq, &["a", "b"]).unwrap();
        prop_assert!(pq <= pr + rq);
        prop_assert!(pq >= Rat::from_integer(0.into()));
    }
}
