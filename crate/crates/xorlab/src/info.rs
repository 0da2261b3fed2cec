//! Entropy, divergence, and advantage functionals over joint tables.
//!
//! All information quantities are in bits. Masses and advantages are exact
//! rationals; only the logarithms are floating point. Terms with zero mass
//! are skipped, which implements the 0·log(1/0) = 0 convention.

use num::{One, Signed, Zero};

use crate::rational::{log2_rat, rat, rat_to_f64, Rat};
use crate::table::{BitVar, Event, JointTable};
use crate::{Error, Result};

/// Conditional Shannon entropy H(vars | given), in bits.
pub fn entropy(t: &JointTable, vars: &[&str], given: &[&str]) -> Result<f64> {
    let gi = t.indices(given)?;
    let vi = t.indices(vars)?;
    let mut union = gi.clone();
    for i in vi {
        if !union.contains(&i) {
            union.push(i);
        }
    }
    let joint = t.project(&union);
    let cond = t.project(&gi);
    let mut h = 0.0;
    for (key, m) in &joint {
        let g = &key[..gi.len()];
        let mg = cond.get(g).expect("group mass covers its members");
        if mg != m {
            h += rat_to_f64(m) * log2_rat(&(mg / m));
        }
    }
    Ok(h)
}

/// Conditional mutual information I(a : b | given), in bits.
pub fn mutual_information(t: &JointTable, a: &[&str], b: &[&str], given: &[&str]) -> Result<f64> {
    let mut bg: Vec<&str> = b.to_vec();
    for g in given {
        if !bg.contains(g) {
            bg.push(g);
        }
    }
    Ok(entropy(t, a, given)? - entropy(t, a, &bg)?)
}

/// KL divergence D(p‖q) in bits over the named variables of both tables.
/// Requires p ≪ q on that marginal.
pub fn kl_divergence(p: &JointTable, q: &JointTable, vars: &[&str]) -> Result<f64> {
    let pm = p.marginal(vars)?;
    let qm = q.marginal(vars)?;
    if pm.vars() != qm.vars() {
        return Err(Error::AlphabetMismatch(
            "KL arguments disagree on variable alphabets".into(),
        ));
    }
    let mut d = 0.0;
    for (key, mp) in pm.support() {
        match qm.get(key) {
            Some(mq) => {
                if mp != mq {
                    d += rat_to_f64(mp) * log2_rat(&(mp / mq));
                }
            }
            None => {
                return Err(Error::NonAbsolutelyContinuous(format!(
                    "p has mass at {:?} where q has none",
                    pm.symbols_of(key)
                )))
            }
        }
    }
    Ok(d)
}

/// Unhalved total variation Σ|p−q| over the named variables; ranges over [0,2].
pub fn tv_distance(p: &JointTable, q: &JointTable, vars: &[&str]) -> Result<Rat> {
    let pm = p.marginal(vars)?;
    let qm = q.marginal(vars)?;
    if pm.vars() != qm.vars() {
        return Err(Error::AlphabetMismatch(
            "TV arguments disagree on variable alphabets".into(),
        ));
    }
    let mut total = Rat::zero();
    for (key, mp) in pm.support() {
        total += (mp - qm.mass(key)).abs();
    }
    for (key, mq) in qm.support() {
        if pm.get(key).is_none() {
            total += mq;
        }
    }
    Ok(total)
}

/// Binary entropy H(p) in bits.
pub fn binary_entropy(p: &Rat) -> Result<f64> {
    if p.is_negative() || p > &Rat::one() {
        return Err(Error::OutOfRange(format!(
            "binary entropy argument {}",
            rat_to_f64(p)
        )));
    }
    if p.is_zero() || p.is_one() {
        return Ok(0.0);
    }
    let q = Rat::one() - p;
    Ok(rat_to_f64(p) * log2_rat(&(Rat::one() / p)) + rat_to_f64(&q) * log2_rat(&(Rat::one() / &q)))
}

/// Advantage |2·Pr(bit = 0) − 1| as an exact rational, optionally
/// conditioned on an event.
pub fn advantage_rat(t: &JointTable, bit: &BitVar, given: Option<&Event>) -> Result<Rat> {
    let cb = bit.compile(t)?;
    let resolved = match given {
        Some(e) => Some(e.resolve(t)?),
        None => None,
    };
    let mut total = Rat::zero();
    let mut zeros = Rat::zero();
    for (key, p) in t.support() {
        if let Some(ev) = &resolved {
            if !ev.accepts(key) {
                continue;
            }
        }
        total += p;
        if cb.eval(key) == 0 {
            zeros += p;
        }
    }
    if total.is_zero() {
        return Err(Error::ZeroProbabilityEvent);
    }
    Ok((rat(2, 1) * zeros / total - Rat::one()).abs())
}

/// Float view of [`advantage_rat`].
pub fn advantage(t: &JointTable, bit: &BitVar, given: Option<&Event>) -> Result<f64> {
    Ok(rat_to_f64(&advantage_rat(t, bit, given)?))
}

/// Conditions a table on an event (thin alias kept for API symmetry).
pub fn condition_table(t: &JointTable, ev: &Event) -> Result<JointTable> {
    t.condition(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat_one;
    use crate::table::Variable;

    fn bern(name: &str, p: Rat) -> JointTable {
        JointTable::from_symbols(
            vec![Variable::binary(name)],
            vec![(vec!["1"], p.clone()), (vec!["0"], rat_one() - p)],
        )
        .unwrap()
    }

    fn and_pair() -> JointTable {
        JointTable::from_symbols(
            vec![Variable::binary("x"), Variable::binary("y"), Variable::binary("z")],
            vec![
                (vec!["0", "0", "0"], rat(1, 4)),
                (vec!["0", "1", "0"], rat(1, 4)),
                (vec!["1", "0", "0"], rat(1, 4)),
                (vec!["1", "1", "1"], rat(1, 4)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn entropy_of_and_triple() {
        let t = and_pair();
        assert!((entropy(&t, &["x"], &[]).unwrap() - 1.0).abs() < 1e-12);
        // H(Z) = H(1/4) = 2 - (3/4)·log2(3).
        let h_quarter = 2.0 - 0.75 * 3f64.log2();
        assert!((entropy(&t, &["z"], &[]).unwrap() - h_quarter).abs() < 1e-12);
        // Z is a function of (X, Y).
        assert!(entropy(&t, &["z"], &["x", "y"]).unwrap().abs() < 1e-12);
        // I(Z : X) = H(Z) - H(Z|X) = 2 - (3/4)log2(3) - (1/2)·1 ... check via both orders.
        let mi_a = mutual_information(&t, &["z"], &["x"], &[]).unwrap();
        let mi_b = mutual_information(&t, &["x"], &["z"], &[]).unwrap();
        assert!((mi_a - mi_b).abs() < 1e-12, "MI must be symmetric");
    }

    #[test]
    fn kl_frozen_value() {
        let p = bern("b", rat(1, 2));
        let q = bern("b", rat(1, 4));
        // D(1/2 ‖ 1/4) = 1 - log2(3)/2.
        let expect = 1.0 - 3f64.log2() / 2.0;
        let d = kl_divergence(&p, &q, &["b"]).unwrap();
        assert!((d - expect).abs() < 1e-12, "got {d}, want {expect}");
        assert!(kl_divergence(&p, &p, &["b"]).unwrap().abs() < 1e-15);

        let point = bern("b", rat_one());
        assert!(matches!(
            kl_divergence(&p, &point, &["b"]),
            Err(Error::NonAbsolutelyContinuous(_))
        ));
    }

    #[test]
    fn tv_frozen_value_and_range() {
        let p = bern("b", rat(1, 2));
        let q = bern("b", rat(1, 4));
        assert_eq!(tv_distance(&p, &q, &["b"]).unwrap(), rat(1, 2));
        let far = bern("b", rat_one());
        let near = bern("b", rat(0, 1));
        assert_eq!(tv_distance(&far, &near, &["b"]).unwrap(), rat(2, 1));
    }

    #[test]
    fn binary_entropy_frozen_values() {
        assert_eq!(binary_entropy(&rat(0, 1)).unwrap(), 0.0);
        assert_eq!(binary_entropy(&rat(1, 1)).unwrap(), 0.0);
        assert!((binary_entropy(&rat(1, 2)).unwrap() - 1.0).abs() < 1e-15);
        let expect = 2.0 - 0.75 * 3f64.log2();
        assert!((binary_entropy(&rat(1, 4)).unwrap() - expect).abs() < 1e-12);
        assert!(binary_entropy(&rat(3, 2)).is_err());
        assert!(binary_entropy(&rat(-1, 2)).is_err());
    }

    #[test]
    fn advantage_values() {
        let t = bern("b", rat(3, 4));
        let bit = BitVar::Var("b".into());
        assert_eq!(advantage_rat(&t, &bit, None).unwrap(), rat(1, 2));

        let t = and_pair();
        let z = BitVar::Var("z".into());
        assert_eq!(advantage_rat(&t, &z, None).unwrap(), rat(1, 2));
        let ev = Event::from_symbols(&t, &["x"], &[vec!["1"]]).unwrap();
        assert_eq!(advantage_rat(&t, &z, Some(&ev)).unwrap(), rat(0, 1));
    }

    #[test]
    fn pinsker_on_frozen_pair() {
        let p = bern("b", rat(1, 2));
        let q = bern("b", rat(1, 4));
        let tv = rat_to_f64(&tv_distance(&p, &q, &["b"]).unwrap());
        let kl = kl_divergence(&p, &q, &["b"]).unwrap();
        assert!(tv <= (2.0 * std::f64::consts::LN_2 * kl).sqrt() + 1e-12);
    }
}
