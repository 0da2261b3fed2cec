//! Standardization and pointwise cost accounting.
//!
//! The standardization of a protocol against a reference input μ keeps the
//! public round and replaces every message by its kernel as seen from the
//! sender (own input plus transcript), re-based on μ. Pointwise costs θ
//! and γ measure how far a protocol sits from its standardization and how
//! much the transcript tells each party about the other's input.

use std::collections::BTreeMap;

use num::Zero;

use crate::info::{binary_entropy, kl_divergence, tv_distance};
use crate::protocol::{
    check_reference_input, extract_spec, output_stats, round_var, FunctionTable, Kind, Protocol,
    Sender,
};
use crate::rational::{log2_rat, rat, rat_to_f64, Rat};
use crate::report::VerdictReport;
use crate::table::{JointTable, Key, Variable};
use crate::{Error, Result, DEFAULT_ENTRY_BUDGET};

/// A protocol's standardization, with a record of where the kernels had to
/// be extended beyond the original support.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub protocol: Protocol,
    /// Per round: number of contexts that got a uniform fallback row.
    pub extensions: Vec<(usize, usize)>,
    /// Mass routed through fallback rows, summed over rounds.
    pub extended_total: Rat,
}

/// Builds the standardization η of `p` against the reference input `mu`.
pub fn standardize(p: &Protocol, mu: &JointTable) -> Result<Standardized> {
    check_reference_input(p, mu)?;
    let spec = extract_spec(p)?;
    let joint = p.joint();

    let mut vars: Vec<Variable> = mu.vars().to_vec();
    vars.push(joint.var(&round_var(0))?.clone());
    let mut entries: Vec<(Vec<u32>, Rat)> = Vec::new();
    for (key, w) in mu.support() {
        for (sym, q) in &spec.public.dist {
            if q.is_zero() {
                continue;
            }
            let mut k = key.to_vec();
            k.push(*sym);
            entries.push((k, w * q));
        }
    }

    let mut extensions = Vec::new();
    let mut extended_total = Rat::zero();
    for (pos, kernel) in spec.kernels.iter().enumerate() {
        let i = pos + 1;
        let dep_pos: Vec<usize> = kernel
            .depends
            .iter()
            .map(|d| vars.iter().position(|v| v.name == *d).expect("extracted depends exist"))
            .collect();
        let alpha_len = kernel.alphabet.len();
        let uniform: Vec<(u32, Rat)> = (0..alpha_len as u32)
            .map(|s| (s, rat(1, alpha_len as i64)))
            .collect();
        let mut extended_here: BTreeMap<Key, ()> = BTreeMap::new();
        let mut next = Vec::with_capacity(entries.len() * alpha_len);
        for (key, w) in &entries {
            let ctx: Key = dep_pos.iter().map(|&p| key[p]).collect();
            let row = match kernel.rows.get(&ctx) {
                Some(row) => row,
                None => {
                    extended_here.entry(ctx).or_insert(());
                    extended_total += w;
                    &uniform
                }
            };
            for (sym, q) in row {
                if q.is_zero() {
                    continue;
                }
                let mut k = key.clone();
                k.push(*sym);
                next.push((k, w * q));
            }
        }
        entries = next;
        if entries.len() > DEFAULT_ENTRY_BUDGET {
            return Err(Error::EntryBudget {
                entries: entries.len(),
                budget: DEFAULT_ENTRY_BUDGET,
            });
        }
        if !extended_here.is_empty() {
            extensions.push((i, extended_here.len()));
        }
        vars.push(Variable {
            name: round_var(i),
            alphabet: kernel.alphabet.clone(),
        });
    }

    let alternates = (1..=p.last_round()).all(|i| p.rounds()[i].sender == Sender::expected(i));
    let kind = if alternates { Kind::Standard } else { Kind::Generalized };
    let protocol = Protocol::new(
        JointTable::new(vars, entries)?,
        p.x_vars().to_vec(),
        p.y_vars().to_vec(),
        p.rounds().to_vec(),
        kind,
        p.output_round(),
        p.coordinates().to_vec(),
    )?;
    Ok(Standardized {
        protocol,
        extensions,
        extended_total,
    })
}

/// Costs attached to one support point of a protocol.
#[derive(Debug, Clone)]
pub struct PointCost {
    pub key: Key,
    pub mass: Rat,
    pub theta: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GammaCost {
    pub total: f64,
    pub alice: f64,
    pub bob: f64,
}

#[derive(Debug, Clone)]
pub struct CostBreakdown {
    pub points: Vec<PointCost>,
    pub theta: f64,
    pub gamma: GammaCost,
}

/// Pointwise θ and γ of `p` against the reference input `mu`.
///
/// θ at a point telescopes to log₂[π(x,y,m)/η(x,y,m)], so its mean is
/// KL(π‖η). γ_A is log₂[π(x|y,m)/μ(x|y)] over the full transcript, so for
/// a standard protocol on its own input marginal the mean of γ_A + γ_B is
/// exactly the information cost.
pub fn point_costs(p: &Protocol, mu: &JointTable) -> Result<CostBreakdown> {
    check_reference_input(p, mu)?;
    let joint = p.joint();
    let r = p.last_round();
    let nx = p.x_vars().len();
    let x_idxs = p.x_indices();
    let y_idxs = p.y_indices();
    let m_all = p.round_indices(r);

    let pm0 = joint.project(&[m_all[0]]);
    let mut side_prev: Vec<BTreeMap<Key, Rat>> = Vec::with_capacity(r);
    let mut side_cur: Vec<BTreeMap<Key, Rat>> = Vec::with_capacity(r);
    let mut side_pos: Vec<Vec<usize>> = Vec::with_capacity(r);
    for i in 1..=r {
        let side = match p.rounds()[i].sender {
            Sender::Alice => &x_idxs,
            Sender::Bob => &y_idxs,
            Sender::Public => unreachable!("constructor rejects public senders past round 0"),
        };
        let mut prev: Vec<usize> = side.clone();
        prev.extend_from_slice(&m_all[..i]);
        let mut cur = prev.clone();
        cur.push(m_all[i]);
        side_prev.push(joint.project(&prev));
        side_cur.push(joint.project(&cur));
        side_pos.push(cur);
    }
    let mut ym: Vec<usize> = y_idxs.clone();
    ym.extend_from_slice(&m_all);
    let mut xm: Vec<usize> = x_idxs.clone();
    xm.extend_from_slice(&m_all);
    let pym = joint.project(&ym);
    let pxm = joint.project(&xm);
    let mu_x_pos: Vec<usize> = (0..nx).collect();
    let mu_y_pos: Vec<usize> = (nx..mu.vars().len()).collect();
    let mu_x = mu.project(&mu_x_pos);
    let mu_y = mu.project(&mu_y_pos);

    let mut points = Vec::with_capacity(joint.entry_count());
    let mut theta_sum = 0.0;
    let mut ga_sum = 0.0;
    let mut gb_sum = 0.0;
    for (key, mass) in joint.support() {
        let xk = JointTable::sub_key(key, &x_idxs);
        let yk = JointTable::sub_key(key, &y_idxs);
        let mut mu_key = xk.to_vec();
        mu_key.extend_from_slice(&yk);
        let w = mu.get(&mu_key).ok_or_else(|| {
            Error::NonAbsolutelyContinuous(format!(
                "protocol has mass at inputs {:?} where the reference has none",
                mu.symbols_of(&mu_key)
            ))
        })?;

        // θ: π(x,y,m) / (μ(x,y)·π(m0)) · ∏ᵢ π(side,m^{<i}) / π(side,m^{≤i}).
        let m0_mass = &pm0[&JointTable::sub_key(key, &m_all[..1])];
        let mut ratio = mass / (w * m0_mass);
        for i in 1..=r {
            let cur_key = JointTable::sub_key(key, &side_pos[i - 1]);
            let prev_key: Key = cur_key[..cur_key.len() - 1].to_vec().into_boxed_slice();
            ratio *= &side_prev[i - 1][&prev_key] / &side_cur[i - 1][&cur_key];
        }
        let theta = log2_rat(&ratio);

        let ga = log2_rat(&(mass * &mu_y[&yk] / (&pym[&JointTable::sub_key(key, &ym)] * w)));
        let gb = log2_rat(&(mass * &mu_x[&xk] / (&pxm[&JointTable::sub_key(key, &xm)] * w)));

        let mf = rat_to_f64(mass);
        theta_sum += mf * theta;
        ga_sum += mf * ga;
        gb_sum += mf * gb;
        points.push(PointCost {
            key: key.to_vec().into_boxed_slice(),
            mass: mass.clone(),
            theta,
            gamma_a: ga,
            gamma_b: gb,
        });
    }
    Ok(CostBreakdown {
        points,
        theta: theta_sum,
        gamma: GammaCost {
            total: ga_sum + gb_sum,
            alice: ga_sum,
            bob: gb_sum,
        },
    })
}

/// Mean θ, cross-checked against KL(π‖η) through the standardization.
pub fn theta_cost(p: &Protocol, mu: &JointTable) -> Result<f64> {
    let breakdown = point_costs(p, mu)?;
    let eta = standardize(p, mu)?;
    let names: Vec<&str> = p.joint().vars().iter().map(|v| v.name.as_str()).collect();
    let kl = kl_divergence(p.joint(), eta.protocol.joint(), &names)?;
    assert!(
        (breakdown.theta - kl).abs() <= 1e-9,
        "pointwise θ sum {} disagrees with KL(π‖η) {}",
        breakdown.theta,
        kl
    );
    Ok(breakdown.theta)
}

pub fn gamma_cost(p: &Protocol, mu: &JointTable) -> Result<GammaCost> {
    Ok(point_costs(p, mu)?.gamma)
}

/// What standardization costs in correctness and information.
#[derive(Debug)]
pub struct LossAudit {
    pub eta: Standardized,
    pub kl_bits: f64,
    /// Unhalved total variation ‖π − η‖₁ ∈ [0, 2].
    pub tv: Rat,
    pub error_p: Rat,
    pub error_eta: Rat,
    pub ic_p: f64,
    pub ic_eta: f64,
    pub report: VerdictReport,
}

/// Checks the standardization loss bounds: with t = ‖π−η‖₁/2,
/// error(η) ≤ error(π) + t exactly, and
/// IC(η) ≤ IC(π) + 2·H(min(t,½)) + t·log₂|X×Y| + tol.
pub fn standardization_loss_audit(
    p: &Protocol,
    mu: &JointTable,
    f: &FunctionTable,
    tol: f64,
) -> Result<LossAudit> {
    let eta = standardize(p, mu)?;
    let names: Vec<&str> = p.joint().vars().iter().map(|v| v.name.as_str()).collect();
    let kl_bits = kl_divergence(p.joint(), eta.protocol.joint(), &names)?;
    let tv = tv_distance(p.joint(), eta.protocol.joint(), &names)?;
    let t = &tv / rat(2, 1);
    let error_p = output_stats(p, f)?.error;
    let error_eta = output_stats(&eta.protocol, f)?.error;
    let ic_p = crate::protocol::information_cost(p);
    let ic_eta = crate::protocol::information_cost(&eta.protocol);

    let mut rep = VerdictReport::new();
    rep.check_le_exact(
        "loss/error_le",
        &error_eta,
        &(&error_p + &t),
        "error(η) ≤ error(π) + t",
    );
    let half = rat(1, 2);
    let t_cap = if t > half { half } else { t.clone() };
    let input_cells: usize = p
        .x_vars()
        .iter()
        .chain(p.y_vars())
        .map(|v| p.joint().var(v).expect("validated").alphabet.len())
        .product();
    let slack = 2.0 * binary_entropy(&t_cap)? + rat_to_f64(&t) * (input_cells as f64).log2();
    rep.check_le(
        "loss/ic_le",
        ic_eta,
        ic_p + slack + tol,
        tol,
        "IC(η) ≤ IC(π) + 2H(t) + t·log|X×Y| + tol",
    );
    Ok(LossAudit {
        eta,
        kl_bits,
        tv,
        error_p,
        error_eta,
        ic_p,
        ic_eta,
        report: rep.finish(),
    })
}
