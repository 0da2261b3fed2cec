//! Recursive binary decomposition of XOR protocols.
//!
//! A node holds a protocol over 2^j coordinates together with the
//! reference input it is measured against. Splitting a node conditions it
//! on the event W = {Z ≥ α}, where Z is the per-row product of the two
//! halves' target advantages, and produces one child per half: the left
//! child keeps the left inputs and receives the right y's inside round 1,
//! the right child keeps the right inputs and receives the left x's
//! inside the public round. Each child ends with an appended guess round
//! for its own target, which becomes its output.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};

use crate::costs::{
    gamma_cost, point_costs, standardization_loss_audit, theta_cost, CostBreakdown, LossAudit,
    PointCost,
};
use crate::info::{binary_entropy, mutual_information};
use crate::protocol::{
    append_bit, check_reference_input, condition_protocol, information_cost, output_stats,
    partial_rectangle_check, rectangle_check, round_var, split_coords, Coordinate, FunctionTable,
    Kind, Protocol, RoundMeta, Sender, SplitSpec,
};
use crate::rational::{format_rat, ln_rat, rat, rat_to_f64, Rat};
use crate::report::VerdictReport;
use crate::table::{compose_index, composed_alphabet, Event, JointTable, Key, Variable};
use crate::{Error, Result};

/// One row of a node's advantage table: a positive-mass assignment of
/// (left x's, right y's, transcript) with the two halves' advantages.
#[derive(Debug, Clone)]
pub struct ZaRow {
    pub key: Key,
    pub mass: Rat,
    pub a0: Rat,
    pub a1: Rat,
    pub z: Rat,
}

/// The advantage table of a node under a split.
#[derive(Debug, Clone)]
pub struct ZATable {
    /// Left x variables, right y variables, then every round variable.
    pub vars: Vec<String>,
    pub sizes: Vec<usize>,
    pub rows: Vec<ZaRow>,
}

impl ZATable {
    pub fn expected_z(&self) -> Rat {
        let mut total = Rat::zero();
        let mut acc = Rat::zero();
        for r in &self.rows {
            acc += &r.mass * &r.z;
            total += &r.mass;
        }
        acc / total
    }
}

/// Per-row advantages of the two halves' targets given (left x's, right
/// y's, transcript), with Z their product. Valid only when the halves are
/// conditionally independent, so the partial rectangle property is
/// checked first.
pub fn advantage_table(p: &Protocol, f: &FunctionTable, split: &SplitSpec) -> Result<ZATable> {
    let pr = partial_rectangle_check(p, split)?;
    if !pr.pass {
        return Err(Error::RectangleViolation {
            max: pr.max_violation(),
        });
    }
    let (left, right) = split_coords(p, split)?;
    let joint = p.joint();
    let mut vars: Vec<String> = left.iter().map(|c| c.x_var.clone()).collect();
    vars.extend(right.iter().map(|c| c.y_var.clone()));
    vars.extend((0..=p.last_round()).map(round_var));
    let names: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
    let idxs = joint.indices(&names)?;
    let sizes: Vec<usize> = idxs.iter().map(|&i| joint.vars()[i].alphabet.len()).collect();

    let bit0 = f.xor_over(&left).compile(joint)?;
    let bit1 = f.xor_over(&right).compile(joint)?;

    let mut rows = Vec::new();
    for (key, members) in joint.group_by(&idxs) {
        let mut total = Rat::zero();
        let mut z0 = Rat::zero();
        let mut z1 = Rat::zero();
        for &(k, m) in &members {
            total += m;
            if bit0.eval(k) == 0 {
                z0 += m;
            }
            if bit1.eval(k) == 0 {
                z1 += m;
            }
        }
        let a0 = (rat(2, 1) * z0 / &total - Rat::one()).abs();
        let a1 = (rat(2, 1) * z1 / &total - Rat::one()).abs();
        let z = &a0 * &a1;
        rows.push(ZaRow {
            key,
            mass: total,
            a0,
            a1,
            z,
        });
    }
    Ok(ZATable { vars, sizes, rows })
}

/// What conditioning a node on W = {Z ≥ α} produced.
#[derive(Debug, Clone)]
pub struct NodeSplit {
    pub za: ZATable,
    pub w: Event,
    pub p: Rat,
    pub e_z_given_w: Rat,
    pub e_a_given_w: (Rat, Rat),
    /// 1 − E[A_side | W]: the children's disadvantages.
    pub eps_children: (Rat, Rat),
}

/// Conditions `p` on W = {Z ≥ α} and reports the split statistics.
pub fn conditional_decompose(
    p: &Protocol,
    f: &FunctionTable,
    split: &SplitSpec,
    alpha: &Rat,
    node: &str,
) -> Result<(Protocol, NodeSplit)> {
    let za = advantage_table(p, f, split)?;
    let mut accepted = std::collections::BTreeSet::new();
    let mut pw = Rat::zero();
    let mut ez = Rat::zero();
    let mut ea0 = Rat::zero();
    let mut ea1 = Rat::zero();
    for row in &za.rows {
        if row.z >= *alpha {
            accepted.insert(row.key.clone());
            pw += &row.mass;
            ez += &row.mass * &row.z;
            ea0 += &row.mass * &row.a0;
            ea1 += &row.mass * &row.a1;
        }
    }
    if pw.is_zero() {
        return Err(Error::DegenerateConditioning {
            node: node.to_string(),
            reason: format!("no row reaches z ≥ {}", format_rat(alpha)),
        });
    }
    ez /= &pw;
    ea0 /= &pw;
    ea1 /= &pw;
    let w = Event::from_keys(za.vars.clone(), za.sizes.clone(), accepted);
    let cond = condition_protocol(p, &w)?;
    let eps_children = (Rat::one() - &ea0, Rat::one() - &ea1);
    Ok((
        cond,
        NodeSplit {
            za,
            w,
            p: pw,
            e_z_given_w: ez,
            e_a_given_w: (ea0, ea1),
            eps_children,
        },
    ))
}

/// How one child of a binary decomposition is assembled from the parent:
/// which input columns survive, and which columns fold into one round.
struct ChildPlan {
    keep: Vec<usize>,
    composed_round: usize,
    parts: Vec<usize>,
    part_sizes: Vec<usize>,
    round_idxs: Vec<usize>,
    vars: Vec<Variable>,
    rounds: Vec<RoundMeta>,
    x_names: Vec<String>,
    y_names: Vec<String>,
    coords: Vec<Coordinate>,
}

impl ChildPlan {
    /// The child support key a parent support key lands on.
    fn image(&self, key: &[u32]) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.vars.len());
        for &i in &self.keep {
            out.push(key[i]);
        }
        for (pos, &ri) in self.round_idxs.iter().enumerate() {
            if pos == self.composed_round {
                let parts: Vec<u32> = self.parts.iter().map(|&i| key[i]).collect();
                out.push(compose_index(&self.part_sizes, &parts));
            } else {
                out.push(key[ri]);
            }
        }
        out
    }
}

/// The left child keeps (X_L, Y_L) and folds Y_R into round 1; the right
/// keeps (X_R, Y_R) and folds X_L into the public round.
fn child_plan(cond: &Protocol, split: &SplitSpec, left_side: bool) -> Result<ChildPlan> {
    let (left, right) = split_coords(cond, split)?;
    let joint = cond.joint();
    let idx_of = |name: &str| joint.var_index(name);
    let round_idxs = cond.round_indices(cond.last_round());
    let (own, other, composed_round) = if left_side {
        (left, right, 1)
    } else {
        (right, left, 0)
    };
    let mut keep = Vec::new();
    let mut vars = Vec::new();
    for c in &own {
        keep.push(idx_of(&c.x_var)?);
        vars.push(joint.var(&c.x_var)?.clone());
    }
    for c in &own {
        keep.push(idx_of(&c.y_var)?);
        vars.push(joint.var(&c.y_var)?.clone());
    }
    let mut parts: Vec<usize> = other
        .iter()
        .map(|c| idx_of(if left_side { &c.y_var } else { &c.x_var }))
        .collect::<Result<_>>()?;
    parts.push(round_idxs[composed_round]);
    let part_sizes: Vec<usize> = parts
        .iter()
        .map(|&i| joint.vars()[i].alphabet.len())
        .collect();
    let part_alphas: Vec<&[String]> = parts
        .iter()
        .map(|&i| &joint.vars()[i].alphabet[..])
        .collect();
    let composed = composed_alphabet(&part_alphas);
    let mut rounds = cond.rounds().to_vec();
    rounds[composed_round].alphabet = composed;
    for r in &rounds {
        vars.push(Variable {
            name: round_var(r.index),
            alphabet: r.alphabet.clone(),
        });
    }
    Ok(ChildPlan {
        keep,
        composed_round,
        parts,
        part_sizes,
        round_idxs,
        vars,
        rounds,
        x_names: own.iter().map(|c| c.x_var.clone()).collect(),
        y_names: own.iter().map(|c| c.y_var.clone()).collect(),
        coords: own,
    })
}

fn apply_plan(cond: &Protocol, plan: &ChildPlan) -> Result<Protocol> {
    let mut masses: BTreeMap<Vec<u32>, Rat> = BTreeMap::new();
    for (key, m) in cond.joint().support() {
        *masses.entry(plan.image(key)).or_insert_with(Rat::zero) += m;
    }
    let joint = JointTable::new(plan.vars.clone(), masses.into_iter().collect())?;
    Protocol::new(
        joint,
        plan.x_names.clone(),
        plan.y_names.clone(),
        plan.rounds.clone(),
        Kind::Generalized,
        cond.output_round(),
        plan.coords.clone(),
    )
}

/// Appends the per-group argmax guess of this protocol's own target as a
/// final deterministic round (ties resolve to 0).
fn append_guess(p: &Protocol, f: &FunctionTable, sender: Sender) -> Result<Protocol> {
    let joint = p.joint();
    let side = match sender {
        Sender::Alice => p.x_vars(),
        Sender::Bob => p.y_vars(),
        Sender::Public => return Err(Error::InvalidInput("the guess needs a party".into())),
    };
    let side_names: Vec<&str> = side.iter().map(|s| s.as_str()).collect();
    let mut idxs = joint.indices(&side_names)?;
    idxs.extend(p.round_indices(p.last_round()));
    let target = f.xor_over(p.coordinates()).compile(joint)?;
    let mut guess: BTreeMap<Key, u8> = BTreeMap::new();
    for (gkey, members) in joint.group_by(&idxs) {
        let mut m0 = Rat::zero();
        let mut m1 = Rat::zero();
        for &(k, m) in &members {
            if target.eval(k) == 0 {
                m0 += m;
            } else {
                m1 += m;
            }
        }
        guess.insert(gkey, if m0 >= m1 { 0 } else { 1 });
    }
    append_bit(p, sender, Kind::Generalized, |key| {
        guess[&JointTable::sub_key(key, &idxs)]
    })
}

/// The two rearranged children, before any guess round is appended.
pub fn binary_decompose_raw(cond: &Protocol, split: &SplitSpec) -> Result<(Protocol, Protocol)> {
    if cond.last_round() < 1 {
        return Err(Error::InvalidInput("decomposition needs a message round".into()));
    }
    let lp = child_plan(cond, split, true)?;
    let rp = child_plan(cond, split, false)?;
    Ok((apply_plan(cond, &lp)?, apply_plan(cond, &rp)?))
}

/// Splits a conditioned node into its two children, guess rounds included.
pub fn binary_decompose(
    cond: &Protocol,
    f: &FunctionTable,
    split: &SplitSpec,
) -> Result<(Protocol, Protocol)> {
    let (c0, c1) = binary_decompose_raw(cond, split)?;
    Ok((
        append_guess(&c0, f, Sender::Alice)?,
        append_guess(&c1, f, Sender::Bob)?,
    ))
}

/// Verifies that θ and γ are additive under binary decomposition at every
/// support point: the parent point's cost equals the sum over the two
/// pre-guess children at its image points. Exact given the partial
/// rectangle and a reference μ that is a product across the two halves.
/// Also checks that both children inherit the rectangle property.
pub fn pointwise_linearity(
    cond: &Protocol,
    split: &SplitSpec,
    mu: &JointTable,
    tol: f64,
) -> Result<VerdictReport> {
    fn input_names(p: &Protocol) -> Vec<&str> {
        p.x_vars()
            .iter()
            .chain(p.y_vars())
            .map(|s| s.as_str())
            .collect()
    }
    let lp = child_plan(cond, split, true)?;
    let rp = child_plan(cond, split, false)?;
    let c0 = apply_plan(cond, &lp)?;
    let c1 = apply_plan(cond, &rp)?;
    let mu0 = mu.marginal(&input_names(&c0))?;
    let mu1 = mu.marginal(&input_names(&c1))?;
    let parent = point_costs(cond, mu)?;
    let by_key = |b: CostBreakdown| -> BTreeMap<Key, PointCost> {
        b.points.into_iter().map(|p| (p.key.clone(), p)).collect()
    };
    let pc0 = by_key(point_costs(&c0, &mu0)?);
    let pc1 = by_key(point_costs(&c1, &mu1)?);

    let mut worst_theta = 0.0f64;
    let mut worst_ga = 0.0f64;
    let mut worst_gb = 0.0f64;
    for pt in &parent.points {
        let k0: Key = lp.image(&pt.key).into_boxed_slice();
        let k1: Key = rp.image(&pt.key).into_boxed_slice();
        let q0 = &pc0[&k0];
        let q1 = &pc1[&k1];
        worst_theta = worst_theta.max((pt.theta - q0.theta - q1.theta).abs());
        worst_ga = worst_ga.max((pt.gamma_a - q0.gamma_a - q1.gamma_a).abs());
        worst_gb = worst_gb.max((pt.gamma_b - q0.gamma_b - q1.gamma_b).abs());
    }

    let mut rep = VerdictReport::new();
    rep.check_le(
        "point/theta_linear",
        worst_theta,
        0.0,
        tol,
        "θ at a point = θ₀ + θ₁ at its images",
    );
    rep.check_le(
        "point/gamma_a_linear",
        worst_ga,
        0.0,
        tol,
        "γ_A at a point = γ_A₀ + γ_A₁ at its images",
    );
    rep.check_le(
        "point/gamma_b_linear",
        worst_gb,
        0.0,
        tol,
        "γ_B at a point = γ_B₀ + γ_B₁ at its images",
    );
    let r0 = rectangle_check(&c0, &mu0)?;
    rep.flag(
        "point/rect_left",
        r0.pass,
        format!("left child keeps the rectangle property (max {:.3e})", r0.max_violation()),
    );
    let r1 = rectangle_check(&c1, &mu1)?;
    rep.flag(
        "point/rect_right",
        r1.pass,
        format!("right child keeps the rectangle property (max {:.3e})", r1.max_violation()),
    );
    Ok(rep.finish())
}

#[derive(Debug, Clone)]
pub struct TreeConfig {
    pub alpha: Rat,
    /// Root disadvantage ε.
    pub eps: Rat,
    /// τ = −log₂((1+√α)/2).
    pub tau: f64,
    /// Depth: the root has 2^m coordinates.
    pub m: usize,
    pub budget: usize,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct DecompositionNode {
    pub s: String,
    pub protocol: Protocol,
    pub mu: JointTable,
    pub eps: Rat,
    pub info_cost: f64,
    pub theta: f64,
    pub gamma: f64,
    /// Product of W-probabilities along the path from the root.
    pub chi: Rat,
    pub lambda: f64,
    pub split: Option<NodeSplit>,
}

#[derive(Debug, Clone)]
pub struct DecompositionTree {
    pub config: TreeConfig,
    pub nodes: BTreeMap<String, DecompositionNode>,
    pub f: FunctionTable,
    pub base_mu: JointTable,
}

impl DecompositionTree {
    pub fn root(&self) -> &DecompositionNode {
        &self.nodes[""]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &DecompositionNode> {
        let m = self.config.m;
        self.nodes.values().filter(move |n| n.s.len() == m)
    }
}

/// Λ_S = 2^{−|S|}·ln(1/χ_S) + ((1+√α)/2)^{|S|}·ε_S/ε, the second term 0
/// when ε_S is. The potential decreases down the tree; the log is natural.
pub fn lambda_value(chi: &Rat, eps_s: &Rat, eps_root: &Rat, alpha: &Rat, k: usize) -> f64 {
    let phi = 2f64.powi(-(k as i32)) * -ln_rat(chi);
    let psi = if eps_s.is_zero() {
        0.0
    } else {
        let c = (1.0 + rat_to_f64(alpha).sqrt()) / 2.0;
        c.powi(k as i32) * rat_to_f64(&(eps_s / eps_root))
    };
    phi + psi
}

/// Builds the full decomposition tree of a standard XOR protocol.
///
/// α defaults to 1 − 2ε; overriding it changes W everywhere and may void
/// the potential bookkeeping, which the audit will then report.
pub fn recursive_decompose(
    p: &Protocol,
    f: &FunctionTable,
    mu: &JointTable,
    alpha_override: Option<Rat>,
    budget: usize,
    tol: f64,
) -> Result<DecompositionTree> {
    let n = p.coordinates().len();
    if !n.is_power_of_two() {
        return Err(Error::NonPowerOfTwo(n));
    }
    let m = n.trailing_zeros() as usize;
    if p.kind() != Kind::Standard {
        return Err(Error::InvalidInput("the root must be a standard protocol".into()));
    }
    let v = crate::protocol::validate_standard(p);
    if !v.pass {
        return Err(Error::InvalidInput(format!(
            "the root fails the standard factorization: {:?}",
            v.failures()
        )));
    }
    check_reference_input(p, mu)?;
    let stats = output_stats(p, f)?;
    let eps = stats.disadvantage;
    if eps >= rat(1, 2) {
        return Err(Error::DisadvantageTooLarge(format_rat(&eps)));
    }
    let alpha = match alpha_override {
        Some(a) => a,
        None => Rat::one() - rat(2, 1) * &eps,
    };
    if alpha <= Rat::zero() || alpha > Rat::one() {
        return Err(Error::OutOfRange(format!("alpha {}", format_rat(&alpha))));
    }
    let c = (1.0 + rat_to_f64(&alpha).sqrt()) / 2.0;
    let config = TreeConfig {
        alpha: alpha.clone(),
        eps: eps.clone(),
        tau: -c.log2(),
        m,
        budget,
        tol,
    };

    let mut nodes = BTreeMap::new();
    let mut stack: Vec<(String, Protocol, JointTable, Rat)> =
        vec![(String::new(), p.clone(), mu.clone(), Rat::one())];
    while let Some((label, proto, nmu, chi)) = stack.pop() {
        if proto.joint().entry_count() > budget {
            return Err(Error::EntryBudget {
                entries: proto.joint().entry_count(),
                budget,
            });
        }
        let node_eps = output_stats(&proto, f)?.disadvantage;
        let info_cost = information_cost(&proto);
        let theta = theta_cost(&proto, &nmu)?;
        let gamma = gamma_cost(&proto, &nmu)?.total;
        let k = label.len();
        let lambda = lambda_value(&chi, &node_eps, &eps, &alpha, k);
        let split = if k < m {
            let sp = SplitSpec::at(label.clone());
            let (cond, ns) = conditional_decompose(&proto, f, &sp, &alpha, &label)?;
            let (c0, c1) = binary_decompose(&cond, f, &sp)?;
            let child_chi = &chi * &ns.p;
            for (suffix, child) in [("0", c0), ("1", c1)] {
                let names: Vec<&str> = child
                    .x_vars()
                    .iter()
                    .chain(child.y_vars())
                    .map(|s| s.as_str())
                    .collect();
                let cmu = nmu.marginal(&names)?;
                stack.push((format!("{label}{suffix}"), child, cmu, child_chi.clone()));
            }
            Some(ns)
        } else {
            None
        };
        nodes.insert(
            label.clone(),
            DecompositionNode {
                s: label,
                protocol: proto,
                mu: nmu,
                eps: node_eps,
                info_cost,
                theta,
                gamma,
                chi,
                lambda,
                split,
            },
        );
    }
    Ok(DecompositionTree {
        config,
        nodes,
        f: f.clone(),
        base_mu: mu.clone(),
    })
}

/// Normalized leaf weights χ_S / Σχ.
pub fn leaf_distribution(t: &DecompositionTree) -> Vec<(String, Rat)> {
    let total: Rat = t.leaves().map(|n| n.chi.clone()).sum();
    t.leaves()
        .map(|n| (n.s.clone(), &n.chi / &total))
        .collect()
}

fn chi_sum(t: &DecompositionTree) -> Rat {
    t.leaves().map(|n| n.chi.clone()).sum()
}

/// Means under the leaf distribution: (E_D[ε] exact, E_D[Θ], E_D[Γ]).
pub fn ed_means(t: &DecompositionTree) -> (Rat, f64, f64) {
    let total = chi_sum(t);
    let mut e_eps = Rat::zero();
    let mut e_theta = 0.0;
    let mut e_gamma = 0.0;
    for n in t.leaves() {
        let w = &n.chi / &total;
        e_eps += &w * &n.eps;
        let wf = rat_to_f64(&w);
        e_theta += wf * n.theta;
        e_gamma += wf * n.gamma;
    }
    (e_eps, e_theta, e_gamma)
}

/// Verifies every bookkeeping identity and inequality of a tree.
pub fn audit_tree(t: &DecompositionTree, tol: f64) -> Result<VerdictReport> {
    let mut rep = VerdictReport::new();
    let zero = Rat::zero();
    let cfg = &t.config;
    let eps_root = &cfg.eps;

    for node in t.nodes.values() {
        let s = &node.s;
        let id = |what: &str| format!("node[{s}]/{what}");

        let stats = output_stats(&node.protocol, &t.f)?;
        rep.check_eq_exact(id("eps_val"), &node.eps, &stats.disadvantage, "stored ε matches the protocol");
        rep.check_le_exact(id("eps_le_root"), &node.eps, eps_root, "ε_S ≤ ε");
        let lam = lambda_value(&node.chi, &node.eps, eps_root, &cfg.alpha, s.len());
        rep.check_eq(id("lambda_val"), node.lambda, lam, 1e-12, "stored Λ matches χ and ε");
        rep.check_le(id("gamma_ge_info"), node.info_cost, node.gamma, tol, "I_S ≤ Γ_S");
        let rect = rectangle_check(&node.protocol, &node.mu)?;
        rep.flag(
            id("rect"),
            rect.pass,
            format!("rectangle property against μ_S (max deviation {:.3e})", rect.max_violation()),
        );

        let Some(split) = &node.split else { continue };
        let sp = SplitSpec::at(s.clone());

        let pr = partial_rectangle_check(&node.protocol, &sp)?;
        rep.flag(
            id("partial_rect"),
            pr.pass,
            format!("X_R ⊥ Y_L given rows (max deviation {:.3e})", pr.max_violation()),
        );
        let cond = condition_protocol(&node.protocol, &split.w)?;
        let prw = partial_rectangle_check(&cond, &sp)?;
        rep.flag(
            id("partial_rect_w"),
            prw.pass,
            format!("conditioning on W keeps the partial rectangle (max {:.3e})", prw.max_violation()),
        );
        let mut escaped = false;
        for (k, _) in cond.joint().support() {
            if node.protocol.joint().get(k).is_none() {
                escaped = true;
                break;
            }
        }
        rep.flag(id("remove_w"), !escaped, "W-conditioning only removes support");

        // Z rows must equal the advantage of the XOR of the two targets,
        // which is exactly the independence of the halves per row.
        let joint = node.protocol.joint();
        let names: Vec<&str> = split.za.vars.iter().map(|v| v.as_str()).collect();
        let idxs = joint.indices(&names)?;
        let (lc, rc) = split_coords(&node.protocol, &sp)?;
        let bxor = BitXorPair {
            b0: t.f.xor_over(&lc).compile(joint)?,
            b1: t.f.xor_over(&rc).compile(joint)?,
        };
        let groups = joint.group_by(&idxs);
        let mut worst = Rat::zero();
        for (row, (gkey, members)) in split.za.rows.iter().zip(&groups) {
            debug_assert_eq!(&row.key, gkey);
            let mut even = Rat::zero();
            let mut total = Rat::zero();
            for &(k, m) in members {
                total += m;
                if bxor.eval(k) == 0 {
                    even += m;
                }
            }
            let adv = (rat(2, 1) * even / total - Rat::one()).abs();
            let dev = (&row.z - adv).abs();
            if dev > worst {
                worst = dev;
            }
        }
        rep.check_eq_exact(
            id("z_product"),
            &worst,
            &zero,
            "Z = A₀·A₁ equals the XOR advantage per row",
        );

        // Conditioning bookkeeping.
        rep.check_le_exact(
            id("w_prob"),
            &(Rat::one() - &node.eps - &cfg.alpha),
            &(&split.p * (&split.e_z_given_w - &cfg.alpha)),
            "p·(E[Z|W]−α) ≥ 1−ε_S−α",
        );
        rep.check_le_exact(
            id("ez_w"),
            &(Rat::one() - &node.eps),
            &split.e_z_given_w,
            "E[Z|W] ≥ 1−ε_S",
        );

        for (side, suffix) in [(0usize, "0"), (1, "1")] {
            let child = &t.nodes[&format!("{s}{suffix}")];
            let claimed = if side == 0 {
                &split.eps_children.0
            } else {
                &split.eps_children.1
            };
            rep.check_eq_exact(
                id(&format!("eps_child{suffix}")),
                &child.eps,
                claimed,
                "child ε equals 1 − E[A|W]",
            );
            rep.check_eq_exact(
                id(&format!("chi_val{suffix}")),
                &child.chi,
                &(&node.chi * &split.p),
                "χ_child = χ_S·p_S",
            );
            let h = binary_entropy(&split.p)?;
            let pf = rat_to_f64(&split.p);
            rep.check_le(
                id(&format!("theta_rec{suffix}")),
                child.theta,
                (node.theta + h) / pf,
                tol,
                "Θ_child ≤ (Θ_S + H(p))/p",
            );
            rep.check_le(
                id(&format!("gamma_rec{suffix}")),
                child.gamma,
                (node.gamma + 2.0 * h) / pf + 4.0,
                tol,
                "Γ_child ≤ (Γ_S + 2H(p))/p + 4",
            );

            // The appended guess round: deterministic per (side, transcript)
            // and worth at most one bit.
            let cj = child.protocol.joint();
            let last = child.protocol.last_round();
            let side_vars = if side == 0 { child.protocol.x_vars() } else { child.protocol.y_vars() };
            let mut gidx: Vec<usize> = Vec::new();
            for v in side_vars {
                gidx.push(cj.var_index(v)?);
            }
            gidx.extend(child.protocol.round_indices(last - 1));
            let b_idx = cj.var_index(&round_var(last))?;
            let deterministic = cj
                .group_by(&gidx)
                .values()
                .all(|ms| {
                    let first = ms[0].0[b_idx];
                    ms.iter().all(|&(k, _)| k[b_idx] == first)
                });
            rep.flag(
                id(&format!("b_round{suffix}")),
                deterministic,
                "guess round is a function of its sender's view",
            );
            let b_name = round_var(last);
            let earlier: Vec<String> = (0..last).map(round_var).collect();
            let earlier_refs: Vec<&str> = earlier.iter().map(|s| s.as_str()).collect();
            let inputs: Vec<&str> = child
                .protocol
                .x_vars()
                .iter()
                .chain(child.protocol.y_vars())
                .map(|s| s.as_str())
                .collect();
            let mi = mutual_information(cj, &[&b_name], &earlier_refs, &inputs)?;
            rep.check_le(id(&format!("b_info{suffix}")), mi, 1.0, tol, "I(B : M | X,Y) ≤ 1");
        }

        rep.check_le(
            id("lambda_rec"),
            t.nodes[&format!("{s}0")].lambda + t.nodes[&format!("{s}1")].lambda,
            node.lambda,
            tol,
            "Λ_{S0} + Λ_{S1} ≤ Λ_S",
        );
    }

    // Level sums.
    let root = t.root();
    let eps_f = rat_to_f64(eps_root);
    for k in 0..=cfg.m {
        let level: Vec<&DecompositionNode> = t.nodes.values().filter(|n| n.s.len() == k).collect();
        let eps_sum: Rat = level.iter().map(|n| n.eps.clone()).sum();
        rep.check_le(
            format!("level[{k}]/eps_sum"),
            rat_to_f64(&eps_sum),
            (2f64.powf(cfg.tau)).powi(k as i32) * eps_f,
            tol,
            "Σ ε_S ≤ 2^{τk}·ε",
        );
        let chi_theta: f64 = level.iter().map(|n| rat_to_f64(&n.chi) * n.theta).sum();
        rep.check_le(
            format!("level[{k}]/chi_theta"),
            chi_theta,
            2f64.powi(k as i32) * (root.theta + k as f64),
            tol,
            "Σ χ·Θ ≤ 2^k·(Θ_∅ + k)",
        );
        let chi_gamma: f64 = level.iter().map(|n| rat_to_f64(&n.chi) * n.gamma).sum();
        rep.check_le(
            format!("level[{k}]/chi_gamma"),
            chi_gamma,
            2f64.powi(k as i32) * (root.gamma + 6.0 * k as f64),
            tol,
            "Σ χ·Γ ≤ 2^k·(Γ_∅ + 6k)",
        );
    }

    // Tree-level consequences.
    let n = 2f64.powi(cfg.m as i32);
    let total_chi = chi_sum(t);
    rep.check_le(
        "tree/chi_leaf_sum",
        n / std::f64::consts::E,
        rat_to_f64(&total_chi),
        tol,
        "Σ_leaves χ ≥ n/e",
    );
    let expected_lambda_root = if eps_root.is_zero() { 0.0 } else { 1.0 };
    rep.check_eq(
        "tree/lambda_root",
        root.lambda,
        expected_lambda_root,
        1e-12,
        "Λ_∅ is 1 when ε > 0, else 0",
    );
    let (ed_eps, ed_theta, ed_gamma) = ed_means(t);
    let e = std::f64::consts::E;
    rep.check_le(
        "tree/ed_eps",
        rat_to_f64(&ed_eps),
        e * (2f64.powf(cfg.tau)).powi(cfg.m as i32) * eps_f / n,
        tol,
        "E_D[ε] ≤ e·2^{τm}·ε/n",
    );
    rep.check_le(
        "tree/ed_theta",
        ed_theta,
        e * (root.theta + cfg.m as f64),
        tol,
        "E_D[Θ] ≤ e·(Θ_∅ + m)",
    );
    rep.check_le(
        "tree/ed_gamma",
        ed_gamma,
        e * (root.gamma + 6.0 * cfg.m as f64),
        tol,
        "E_D[Γ] ≤ e·(Γ_∅ + 6m)",
    );
    Ok(rep.finish())
}

struct BitXorPair {
    b0: crate::table::CompiledBit,
    b1: crate::table::CompiledBit,
}

impl BitXorPair {
    fn eval(&self, key: &[u32]) -> u8 {
        self.b0.eval(key) ^ self.b1.eval(key)
    }
}

/// Multipliers against the leaf-distribution means a good leaf must meet.
#[derive(Debug, Clone, Copy)]
pub struct SelectThresholds {
    pub eps_mult: f64,
    pub theta_mult: f64,
    pub gamma_mult: f64,
}

impl Default for SelectThresholds {
    fn default() -> Self {
        SelectThresholds {
            eps_mult: 100.0,
            theta_mult: 100.0,
            gamma_mult: 100.0,
        }
    }
}

/// Picks a leaf whose ε, Θ and Γ all sit within the multipliers of the
/// leaf-distribution means. Markov's inequality guarantees one exists at
/// the default multipliers; if none qualifies the error names the closest.
pub fn select_good_leaf<'t>(
    t: &'t DecompositionTree,
    th: &SelectThresholds,
) -> Result<&'t DecompositionNode> {
    let (ed_eps, ed_theta, ed_gamma) = ed_means(t);
    let ed_eps_f = rat_to_f64(&ed_eps);
    let mut best: Option<(f64, &str)> = None;
    let mut chosen: Option<(f64, &DecompositionNode)> = None;
    for leaf in t.leaves() {
        let r_eps = ratio(rat_to_f64(&leaf.eps), th.eps_mult * ed_eps_f, 1e-12);
        let r_theta = ratio(leaf.theta, th.theta_mult * ed_theta, 1e-9);
        let r_gamma = ratio(leaf.gamma, th.gamma_mult * ed_gamma, 1e-9);
        let worst = r_eps.max(r_theta).max(r_gamma);
        if best.as_ref().is_none_or(|(b, _)| worst < *b) {
            best = Some((worst, &leaf.s));
        }
        if worst <= 1.0 && chosen.as_ref().is_none_or(|(b, _)| worst < *b) {
            chosen = Some((worst, leaf));
        }
    }
    match chosen {
        Some((_, leaf)) => Ok(leaf),
        None => Err(Error::NoQualifyingLeaf {
            best: best.map(|(_, s)| s.to_string()).unwrap_or_default(),
        }),
    }
}

fn ratio(value: f64, bound: f64, slack: f64) -> f64 {
    if value <= bound + slack {
        if bound > 0.0 {
            (value / bound).min(1.0)
        } else {
            0.0
        }
    } else if bound + slack > 0.0 {
        value / (bound + slack)
    } else {
        f64::INFINITY
    }
}

/// A selected leaf, standardized and audited.
#[derive(Debug)]
pub struct LeafReport {
    pub label: String,
    pub audit: LossAudit,
    pub report: VerdictReport,
}

/// Standardizes a leaf and checks what survives: the leaf's error is
/// exactly ε_S/2, the standardization loses at most t of it, and the
/// standardized cost stays within the γ bound.
pub fn finalize_leaf(t: &DecompositionTree, label: &str, tol: f64) -> Result<LeafReport> {
    let leaf = t
        .nodes
        .get(label)
        .ok_or_else(|| Error::InvalidInput(format!("no node labeled `{label}`")))?;
    if leaf.s.len() != t.config.m {
        return Err(Error::InvalidInput(format!("node `{label}` is not a leaf")));
    }
    let audit = standardization_loss_audit(&leaf.protocol, &leaf.mu, &t.f, tol)?;
    let mut rep = VerdictReport::new();
    rep.check_eq_exact(
        "leaf/error_eq_eps_half",
        &audit.error_p,
        &(&leaf.eps / rat(2, 1)),
        "the leaf's error is exactly ε_S/2",
    );
    let tv_half = &audit.tv / rat(2, 1);
    rep.check_le_exact(
        "leaf/error_le",
        &audit.error_eta,
        &(&leaf.eps / rat(2, 1) + &tv_half),
        "error(η) ≤ ε_S/2 + t",
    );
    let input_cells: usize = leaf
        .protocol
        .x_vars()
        .iter()
        .chain(leaf.protocol.y_vars())
        .map(|v| leaf.protocol.joint().var(v).expect("validated").alphabet.len())
        .product();
    let half = rat(1, 2);
    let t_cap = if tv_half > half { half } else { tv_half.clone() };
    let slack = 2.0 * binary_entropy(&t_cap)? + rat_to_f64(&tv_half) * (input_cells as f64).log2();
    rep.check_le(
        "leaf/ic",
        audit.ic_eta,
        leaf.gamma + slack,
        tol,
        "IC(η) ≤ Γ_S + 2H(t) + t·log|X×Y|",
    );
    for item in &audit.report.items {
        rep.check_le(
            format!("leaf/{}", item.id),
            item.lhs,
            item.rhs,
            item.tol,
            item.note.clone(),
        );
    }
    Ok(LeafReport {
        label: label.to_string(),
        audit,
        report: rep.finish(),
    })
}

/// One CSV line per node, sorted by label.
pub fn tree_csv(t: &DecompositionTree) -> String {
    let mut out = String::from("s,size,eps,info,theta,gamma,p_num,p_den,chi_num,chi_den,lambda\n");
    for node in t.nodes.values() {
        let (p_num, p_den) = match &node.split {
            Some(sp) => (sp.p.numer().to_string(), sp.p.denom().to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            node.s,
            node.s.len(),
            format_rat(&node.eps),
            node.info_cost,
            node.theta,
            node.gamma,
            p_num,
            p_den,
            node.chi.numer(),
            node.chi.denom(),
            node.lambda,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::naive_xor;
    use crate::io::{noisy_single, two_round, uniform_mu};
    use crate::protocol::validate_standard;

    fn naive2() -> (Protocol, FunctionTable, JointTable) {
        let base = noisy_single(rat(1, 20)).unwrap();
        let p = naive_xor(&base, 2).unwrap();
        let mu = p.input_marginal();
        (p, FunctionTable::and(), mu)
    }

    #[test]
    fn one_level_decomposition_of_two_noisy_ands() {
        let (p, f, mu) = naive2();
        assert!(validate_standard(&p).pass);
        let h = binary_entropy(&rat(1, 20)).unwrap();
        assert!((information_cost(&p) - (3.0 - h)).abs() < 1e-9);
        let stats = output_stats(&p, &f).unwrap();
        assert_eq!(stats.advantage, rat(81, 100));
        assert_eq!(stats.disadvantage, rat(19, 100));

        let t = recursive_decompose(&p, &f, &mu, None, 1 << 20, 1e-9).unwrap();
        assert_eq!(t.config.alpha, rat(31, 50));
        let root = t.root();
        let split = root.split.as_ref().unwrap();
        assert_eq!(split.p, rat(1, 1), "every row passes z ≥ α here");
        assert_eq!(split.e_z_given_w, rat(19, 20));
        assert_eq!(split.eps_children, (rat(1, 20), rat(0, 1)));
        assert_eq!(t.nodes["0"].eps, rat(1, 20));
        assert_eq!(t.nodes["1"].eps, rat(0, 1));
        assert_eq!(t.nodes["0"].chi, rat(1, 1));

        let audit = audit_tree(&t, 1e-9).unwrap();
        assert!(audit.pass, "{}", audit.lines());
    }

    #[test]
    fn advantage_table_requires_the_partial_rectangle() {
        // A base whose first round garbles x, so the transcript does not pin
        // the inputs and cross-half events have room to correlate them.
        let base = two_round(
            &FunctionTable::and(),
            uniform_mu(&["0", "1"], &["0", "1"]),
            rat(1, 8),
            rat(1, 20),
        )
        .unwrap();
        let p = naive_xor(&base, 2).unwrap();
        let f = FunctionTable::and();
        // Conditioning on a cross-half relation between X_R and Y_L breaks
        // the partial rectangle, which the table must refuse.
        let ev = Event::from_predicate(p.joint(), &["x1", "y0"], |k| k[0] == k[1]).unwrap();
        let cond = condition_protocol(&p, &ev).unwrap();
        match advantage_table(&cond, &f, &SplitSpec::at("")) {
            Err(Error::RectangleViolation { max }) => assert!(max > 0.0),
            other => panic!("expected a rectangle violation, got {other:?}"),
        }
    }

    #[test]
    fn good_leaf_exists_and_finalizes() {
        let (p, f, mu) = naive2();
        let t = recursive_decompose(&p, &f, &mu, None, 1 << 20, 1e-9).unwrap();
        let leaf = select_good_leaf(&t, &SelectThresholds::default()).unwrap();
        assert_eq!(leaf.s, "1", "the exact leaf dominates");
        let fin = finalize_leaf(&t, &leaf.s, 1e-9).unwrap();
        assert!(fin.report.pass, "{}", fin.report.lines());
        assert_eq!(fin.audit.error_p, rat(0, 1));
    }

    #[test]
    fn alpha_override_can_degenerate() {
        let (p, f, mu) = naive2();
        match recursive_decompose(&p, &f, &mu, Some(rat(999, 1000)), 1 << 20, 1e-9) {
            Err(Error::DegenerateConditioning { .. }) => {}
            // With root rows at z ∈ {9/10, 1}, α = 999/1000 keeps only the
            // exact rows; the tree still builds and the audit decides.
            Ok(t) => assert!(t.root().split.as_ref().unwrap().p < rat(1, 1)),
            Err(other) => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_has_one_line_per_node() {
        let (p, f, mu) = naive2();
        let t = recursive_decompose(&p, &f, &mu, None, 1 << 20, 1e-9).unwrap();
        let csv = tree_csv(&t);
        assert_eq!(csv.lines().count(), 1 + t.nodes.len());
        assert!(csv.lines().nth(1).unwrap().starts_with(",0,19/100,"));
    }
}
