//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line with its headline numbers and runtime. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use xorlab::constructions::{boost_majority, coupled_draw, coupled_mismatch_exact, embed_single, naive_xor};
use xorlab::costs::{standardize, theta_cost};
use xorlab::decompose::{
    advantage_table, audit_tree, conditional_decompose, ed_means, finalize_leaf,
    pointwise_linearity, recursive_decompose, select_good_leaf, SelectThresholds,
};
use xorlab::gen::{Gen, DEFAULT_SEED};
use xorlab::info::{advantage_rat, kl_divergence};
use xorlab::io::{noisy_single, p1, two_round};
use xorlab::protocol::{
    condition_protocol, information_cost, output_stats, partial_rectangle_check, split_coords,
    FunctionTable, SplitSpec,
};
use xorlab::rational::{format_rat, rat, rat_to_f64, Rat};
use xorlab::suites::{control_verdict, info_suite, negative_controls, Control};
use xorlab::table::{BitVar, Event, JointTable, Variable};
use xorlab::Error;

const TOL: f64 = 1e-9;

fn conclude(id: &str, name: &str, started: Instant, limit_s: f64, pass: bool, detail: String) {
    let secs = started.elapsed().as_secs_f64();
    let ok = pass && secs < limit_s;
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("[{id}] {name}: {verdict} ({detail}, {secs:.2}s)");
    assert!(ok, "[{id}] {detail} after {secs:.2}s (limit {limit_s}s)");
}

#[test]
fn a01_information_theory_suite() {
    let t0 = Instant::now();
    let rep = info_suite(DEFAULT_SEED, TOL, 200).unwrap();
    conclude(
        "A01",
        "information-theory suite on 200 seeded tables",
        t0,
        10.0,
        rep.pass,
        format!("{} checks, max violation {:.2e}", rep.items.len(), rep.max_violation()),
    );
}

#[test]
fn a02_advantage_multiplicativity() {
    let t0 = Instant::now();
    let mut g = Gen::new(DEFAULT_SEED, 21);
    let mut worst = 0.0f64;
    let mut exact = true;
    for _ in 0..100 {
        let u = g.bernoulli("u").unwrap();
        let v = g.bernoulli("v").unwrap();
        let t = u.product(&v).unwrap();
        let joint = advantage_rat(
            &t,
            &BitVar::xor2(BitVar::Var("u".into()), BitVar::Var("v".into())),
            None,
        )
        .unwrap();
        let each = advantage_rat(&t, &BitVar::Var("u".into()), None).unwrap()
            * advantage_rat(&t, &BitVar::Var("v".into()), None).unwrap();
        exact &= joint == each;
        worst = worst.max((rat_to_f64(&joint) - rat_to_f64(&each)).abs());
    }
    let base = noisy_single(rat(1, 20)).unwrap();
    let f = FunctionTable::and();
    let per_copy = output_stats(&base, &f).unwrap().advantage;
    let pair = output_stats(&naive_xor(&base, 2).unwrap(), &f).unwrap().advantage;
    let naive_ok = per_copy == rat(9, 10) && pair == rat(81, 100);
    conclude(
        "A02",
        "advantage multiplies across independent bits",
        t0,
        1.0,
        exact && worst <= 1e-12 && naive_ok,
        format!("100 pairs worst gap {worst:.1e}, naive 9/10 → {}", format_rat(&pair)),
    );
}

#[test]
fn a03_p1_fixture() {
    let t0 = Instant::now();
    let (p, f, mu) = p1();
    let ic = information_cost(&p);
    let stats = output_stats(&p, &f).unwrap();
    let std = standardize(&p, &mu).unwrap();
    let fixed = std.protocol.joint() == p.joint();
    let theta = theta_cost(&p, &mu).unwrap();
    let pass = (ic - 1.5).abs() <= TOL && stats.error == rat(0, 1) && fixed && theta.abs() <= TOL;
    conclude(
        "A03",
        "P1: IC 3/2, error 0, standardization fixed point, θ = 0",
        t0,
        1.0,
        pass,
        format!("ic {ic}, θ {theta:.1e}, fixed point {fixed}"),
    );
}

#[test]
fn a04_theta_equals_kl() {
    let t0 = Instant::now();
    let mut g = Gen::new(DEFAULT_SEED, 22);
    let mut worst = 0.0f64;
    for i in 0..50usize {
        let p = g.standard_protocol(i % 2 == 0).unwrap();
        let mu = p.input_marginal();
        let on: &[&str] = match i % 3 {
            0 => &["m1"],
            1 => &["y", "m1"],
            _ => &["x", "m1"],
        };
        let ev = g.event_on(p.joint(), on).unwrap();
        let q = condition_protocol(&p, &ev).unwrap();
        let theta = theta_cost(&q, &mu).unwrap();
        let eta = standardize(&q, &mu).unwrap();
        let names: Vec<&str> = q.joint().vars().iter().map(|v| v.name.as_str()).collect();
        let kl = kl_divergence(q.joint(), eta.protocol.joint(), &names).unwrap();
        worst = worst.max((theta - kl).abs());
    }
    conclude(
        "A04",
        "θ = KL(π‖standardize(π,μ)) on 50 generalized protocols",
        t0,
        30.0,
        worst <= TOL,
        format!("worst gap {worst:.2e}"),
    );
}

#[test]
fn a05_pointwise_linearity() {
    let t0 = Instant::now();
    let mut g = Gen::new(DEFAULT_SEED, 23);
    let and = FunctionTable::and();
    let sp = SplitSpec::at("");
    let mut pass = true;
    let mut detail = String::new();
    for i in 0..20 {
        let mu2 = g
            .positive_table(vec![Variable::binary("x"), Variable::binary("y")])
            .unwrap();
        let first = rat(1, 4 + g.pick(8) as i64);
        let answer = rat(1, 10 + g.pick(10) as i64);
        let base = two_round(&and, mu2, first, answer).unwrap();
        let root = naive_xor(&base, 2).unwrap();
        pass &= partial_rectangle_check(&root, &sp).unwrap().pass;
        let rmu = root.input_marginal();
        let za = advantage_table(&root, &and, &sp).unwrap();
        let mut zs: Vec<Rat> = za.rows.iter().map(|r| r.z.clone()).collect();
        zs.sort();
        zs.dedup();
        let alpha = zs[zs.len() / 2].clone();
        let (cond, _) = conditional_decompose(&root, &and, &sp, &alpha, "").unwrap();
        let rep = pointwise_linearity(&cond, &sp, &rmu, TOL).unwrap();
        pass &= rep.pass;
        if !rep.pass && detail.is_empty() {
            detail = format!("trial {i} fails: {:?}", rep.failures());
        }
    }
    conclude(
        "A05",
        "pointwise θ/γ linearity and rectangle inheritance, 20 protocols",
        t0,
        60.0,
        pass,
        if detail.is_empty() { "every support point exact".into() } else { detail },
    );
}

#[test]
fn a06_one_level_noisy_pair() {
    let t0 = Instant::now();
    let and = FunctionTable::and();
    let p = naive_xor(&noisy_single(rat(1, 20)).unwrap(), 2).unwrap();
    let sp = SplitSpec::at("");
    let za = advantage_table(&p, &and, &sp).unwrap();

    // Z = A₀·A₁ per row, with both factors recomputed independently as
    // conditional advantages of the halves' XOR targets.
    let joint = p.joint();
    let names: Vec<&str> = za.vars.iter().map(|s| s.as_str()).collect();
    let (lc, rc) = split_coords(&p, &sp).unwrap();
    let b0 = and.xor_over(&lc);
    let b1 = and.xor_over(&rc);
    let mut product_ok = true;
    let mut recompute_worst = 0.0f64;
    for row in &za.rows {
        product_ok &= row.z == &row.a0 * &row.a1;
        let key = row.key.clone();
        let ev = Event::from_predicate(joint, &names, move |k| k == &key[..]).unwrap();
        let a0 = advantage_rat(joint, &b0, Some(&ev)).unwrap();
        let a1 = advantage_rat(joint, &b1, Some(&ev)).unwrap();
        recompute_worst = recompute_worst
            .max((rat_to_f64(&a0) - rat_to_f64(&row.a0)).abs())
            .max((rat_to_f64(&a1) - rat_to_f64(&row.a1)).abs());
    }

    let alpha = rat(31, 50);
    let (_, ns) = conditional_decompose(&p, &and, &sp, &alpha, "").unwrap();
    let eps = output_stats(&p, &and).unwrap().disadvantage;
    let a = rat_to_f64(&alpha);
    let ezw = rat_to_f64(&ns.e_z_given_w);
    let eps01 = rat_to_f64(&(&ns.eps_children.0 + &ns.eps_children.1));
    let c1 = eps01 <= 2.0 / (1.0 + a.sqrt()) * (1.0 - ezw) + TOL;
    let c2 = rat_to_f64(&ns.p) >= (1.0 - rat_to_f64(&eps) - a) / (ezw - a) - TOL;
    let c3 = ezw >= 1.0 - rat_to_f64(&eps) - TOL;
    conclude(
        "A06",
        "one-level conditional decomposition of noisy AND^{⊕2}",
        t0,
        10.0,
        product_ok && recompute_worst <= TOL && c1 && c2 && c3,
        format!(
            "p(W) {}, E[Z|W] {}, children ε ({}, {})",
            format_rat(&ns.p),
            format_rat(&ns.e_z_given_w),
            format_rat(&ns.eps_children.0),
            format_rat(&ns.eps_children.1)
        ),
    );
}

#[test]
fn a07_full_recursion_on_four_ands() {
    let t0 = Instant::now();
    let and = FunctionTable::and();
    let p = naive_xor(&noisy_single(rat(1, 20)).unwrap(), 4).unwrap();
    let mu = p.input_marginal();
    let tree = recursive_decompose(&p, &and, &mu, None, xorlab::DEFAULT_ENTRY_BUDGET, TOL).unwrap();
    let audit = audit_tree(&tree, TOL).unwrap();
    let mut leaf_eps: Vec<Rat> = tree.leaves().map(|n| n.eps.clone()).collect();
    leaf_eps.sort();
    let frozen = leaf_eps == vec![rat(0, 1), rat(0, 1), rat(0, 1), rat(1, 20)];
    let (ed_eps, _, _) = ed_means(&tree);
    let detail = if audit.pass {
        format!(
            "{} audit items, leaf ε {{{}}}, E_D[ε] {}",
            audit.items.len(),
            leaf_eps.iter().map(format_rat).collect::<Vec<_>>().join(", "),
            format_rat(&ed_eps)
        )
    } else {
        format!("audit red: {:?}", audit.failures().iter().take(4).collect::<Vec<_>>())
    };
    conclude(
        "A07",
        "full recursion and audit on noisy AND^{⊕4}",
        t0,
        300.0,
        audit.pass && frozen && ed_eps == rat(1, 80) && tree.config.m == 2 && tree.nodes.len() == 7,
        detail,
    );
}

#[test]
fn a08_finalize_leaf_bounds() {
    let t0 = Instant::now();
    let and = FunctionTable::and();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [2usize, 4] {
        let p = naive_xor(&noisy_single(rat(1, 20)).unwrap(), n).unwrap();
        let mu = p.input_marginal();
        let tree =
            recursive_decompose(&p, &and, &mu, None, xorlab::DEFAULT_ENTRY_BUDGET, TOL).unwrap();
        let leaf = select_good_leaf(&tree, &SelectThresholds::default()).unwrap();
        let fin = finalize_leaf(&tree, &leaf.s, TOL).unwrap();
        pass &= fin.report.pass;
        if fin.report.pass {
            parts.push(format!(
                "n={n} leaf {} error(η) {} ic(η) {:.4}",
                leaf.s,
                format_rat(&fin.audit.error_eta),
                fin.audit.ic_eta
            ));
        } else {
            parts.push(format!("n={n} red {:?}", fin.report.failures()));
        }
    }
    conclude(
        "A08",
        "finalize-leaf error and IC bounds",
        t0,
        30.0,
        pass,
        parts.join("; "),
    );
}

#[test]
fn a09_embedding() {
    let t0 = Instant::now();
    let (base, f, _) = p1();
    let p = naive_xor(&base, 2).unwrap();
    let e = embed_single(&p, &f).unwrap();
    let mix = e.mixture.as_ref().expect("coordinates share alphabets");
    let mix_err = output_stats(mix, &f).unwrap().error;
    let ic_sum: f64 = e.ic_per_j.iter().sum();
    let bound = information_cost(&p) + 4.0 + TOL;
    let ic_mix = e.ic_mixture.unwrap();
    let mean_ok = (ic_mix - ic_sum / 2.0).abs() <= TOL;
    conclude(
        "A09",
        "per-coordinate embedding of the P1 XOR pair",
        t0,
        10.0,
        e.report.pass && mix_err == rat(0, 1) && ic_sum <= bound && mean_ok,
        format!("error(η) {}, Σ IC {ic_sum:.4} ≤ {bound:.4}, IC(η) {ic_mix:.4}", format_rat(&mix_err)),
    );
}

#[test]
fn a10_boosting() {
    let t0 = Instant::now();
    let p = noisy_single(rat(1, 20)).unwrap();
    let f = FunctionTable::and();
    let b = boost_majority(&p, 3).unwrap();
    let stats = output_stats(&b, &f).unwrap();
    let ic_b = information_cost(&b);
    let ic_p = information_cost(&p);
    conclude(
        "A10",
        "three-vote majority boost",
        t0,
        5.0,
        stats.error == rat(29, 4000) && ic_b <= 3.0 * ic_p + TOL,
        format!("error {} = 0.00725, IC {ic_b:.4} ≤ 3·{ic_p:.4}", format_rat(&stats.error)),
    );
}

#[test]
fn a11_coupling() {
    let t0 = Instant::now();
    let bern = |num: i64, den: i64| -> JointTable {
        JointTable::new(
            vec![Variable::binary("b")],
            vec![(vec![0], rat(den - num, den)), (vec![1], rat(num, den))],
        )
        .unwrap()
    };
    let half = bern(1, 2);
    let quarter = bern(1, 4);
    let canonical = coupled_mismatch_exact(&half, &quarter).unwrap() == rat(2, 5);

    let mut g = Gen::new(DEFAULT_SEED, 24);
    let mut le_tv = true;
    for _ in 0..100 {
        let mu = g.bernoulli("b").unwrap();
        let nu = g.bernoulli("b").unwrap();
        let q = coupled_mismatch_exact(&mu, &nu).unwrap();
        let mut tv = rat(0, 1);
        for s in 0..2u32 {
            let d = mu.mass(&[s]) - nu.mass(&[s]);
            tv += if d < rat(0, 1) { -d } else { d };
        }
        le_tv &= q <= tv;
    }

    let r1 = coupled_draw(&half, &quarter, DEFAULT_SEED, 100_000).unwrap();
    let r2 = coupled_draw(&half, &quarter, DEFAULT_SEED, 100_000).unwrap();
    let deterministic = r1.mismatches == r2.mismatches
        && r1.samples == r2.samples
        && r1.counts_mu == r2.counts_mu
        && r1.counts_nu == r2.counts_nu;
    let n = r1.draws as f64;
    let mut marginals = true;
    for (counts, table) in [(&r1.counts_mu, &half), (&r1.counts_nu, &quarter)] {
        for s in 0..2u32 {
            let prob = rat_to_f64(&table.mass(&[s]));
            let sd = (n * prob * (1.0 - prob)).sqrt();
            marginals &= (counts[s as usize] as f64 - n * prob).abs() <= 3.0 * sd;
        }
    }
    conclude(
        "A11",
        "coupled sampling: 2/5 exact, q ≤ ‖μ−ν‖₁, 10⁵ draws within 3σ",
        t0,
        10.0,
        canonical && le_tv && deterministic && r1.z_score.abs() <= 3.0 && marginals,
        format!("empirical {:.5} vs 2/5, z {:.2}", r1.empirical, r1.z_score),
    );
}

#[test]
fn a12_negative_controls() {
    let t0 = Instant::now();
    let rep = negative_controls().unwrap();
    let mut raw_ok = true;
    for c in Control::ALL {
        match control_verdict(c, TOL) {
            Ok(v) => raw_ok &= !v.pass,
            Err(Error::MalformedKernel(_)) => raw_ok &= c == Control::KernelRowSum,
            Err(Error::NonAbsolutelyContinuous(_)) => raw_ok &= c == Control::MissingSupport,
            Err(_) => raw_ok = false,
        }
    }
    conclude(
        "A12",
        "five corrupted fixtures, each caught by name",
        t0,
        5.0,
        rep.pass && rep.items.len() == 5 && raw_ok,
        rep.items
            .iter()
            .map(|i| i.id.rsplit('/').next().unwrap())
            .collect::<Vec<_>>()
            .join(", "),
    );
}
