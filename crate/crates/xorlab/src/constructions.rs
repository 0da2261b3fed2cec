//! Protocol constructions: XOR powers, majority boosting, coordinate
//! embeddings, and the coupled sampler used to compare nearby inputs.

use std::collections::BTreeMap;

use num::{BigUint, One, Signed, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::protocol::{
    information_cost, output_stats, round_var, validate_standard, Coordinate, FunctionTable, Kind,
    Protocol, RoundMeta, Sender,
};
use crate::rational::{rat_to_f64, Rat};
use crate::report::VerdictReport;
use crate::table::{cartesian, compose_index, composed_alphabet, JointTable, Variable, COMPOSE};
use crate::{Error, Result, DEFAULT_ENTRY_BUDGET};

/// Global round plan for scheduling copies of a protocol back to back.
struct Schedule {
    /// Global slot of each copy's round i ≥ 1, per copy.
    slots: Vec<Vec<usize>>,
    /// Filler slots (unit alphabet) inserted to keep the alternation.
    fillers: Vec<usize>,
    /// Slot of the final answer round.
    answer: usize,
    answer_sender: Sender,
}

/// Lays copies of `r`-round bodies end to end. A standard protocol's body
/// starts on an odd (Alice) slot, so a filler round pads every odd-length
/// body; generalized protocols concatenate as they are.
fn schedule(copies: usize, r: usize, standard: bool) -> Schedule {
    let mut slots = Vec::with_capacity(copies);
    let mut fillers = Vec::new();
    let mut next = 1usize;
    for _ in 0..copies {
        if standard && next.is_multiple_of(2) {
            fillers.push(next);
            next += 1;
        }
        slots.push((next..next + r).collect());
        next += r;
    }
    let answer = next;
    let answer_sender = if standard {
        Sender::expected(answer)
    } else {
        Sender::Alice
    };
    Schedule {
        slots,
        fillers,
        answer,
        answer_sender,
    }
}

fn binary_round(alphabet: &[String]) -> bool {
    alphabet == ["0", "1"]
}

/// The n-fold XOR power of a single-coordinate protocol: independent
/// copies run back to back, followed by one round announcing the XOR of
/// their answers. Coordinates get fixed-width binary labels.
pub fn naive_xor(p: &Protocol, n: usize) -> Result<Protocol> {
    if n < 2 {
        return Err(Error::InvalidInput("the XOR power needs at least two copies".into()));
    }
    if p.coordinates().len() != 1 {
        return Err(Error::InvalidInput("the base protocol must have one coordinate".into()));
    }
    let out = &p.rounds()[p.output_round()];
    if !binary_round(&out.alphabet) {
        return Err(Error::AlphabetMismatch(format!(
            "output round {} is not binary",
            out.index
        )));
    }
    let joint = p.joint();
    let support: Vec<(&[u32], &Rat)> = joint.support().collect();
    let mut total: u128 = 1;
    for _ in 0..n {
        total = total.saturating_mul(support.len() as u128);
    }
    if total > DEFAULT_ENTRY_BUDGET as u128 {
        return Err(Error::EntryBudget {
            entries: total.min(usize::MAX as u128) as usize,
            budget: DEFAULT_ENTRY_BUDGET,
        });
    }

    let width = usize::BITS as usize - (n - 1).leading_zeros() as usize;
    let labels: Vec<String> = (0..n).map(|j| format!("{j:0width$b}")).collect();

    let r = p.last_round();
    let standard = p.kind() == Kind::Standard;
    let plan = schedule(n, r, standard);
    let x_idx = joint.var_index(p.x_vars()[0].as_str())?;
    let y_idx = joint.var_index(p.y_vars()[0].as_str())?;
    let round_idx = p.round_indices(r);
    let out_idx = round_idx[p.output_round()];

    let x_alpha = joint.vars()[x_idx].alphabet.clone();
    let y_alpha = joint.vars()[y_idx].alphabet.clone();
    let m0_alpha: Vec<&[String]> = (0..n).map(|_| &p.rounds()[0].alphabet[..]).collect();
    let m0_composed = composed_alphabet(&m0_alpha);
    let m0_sizes = vec![p.rounds()[0].alphabet.len(); n];

    let mut vars: Vec<Variable> = Vec::new();
    let mut coordinates = Vec::with_capacity(n);
    for label in &labels {
        vars.push(Variable {
            name: format!("x{label}"),
            alphabet: x_alpha.clone(),
        });
    }
    for label in &labels {
        vars.push(Variable {
            name: format!("y{label}"),
            alphabet: y_alpha.clone(),
        });
        coordinates.push(Coordinate {
            label: label.clone(),
            x_var: format!("x{label}"),
            y_var: format!("y{label}"),
        });
    }
    let mut rounds = vec![RoundMeta {
        index: 0,
        sender: Sender::Public,
        alphabet: m0_composed.clone(),
    }];
    for slot in 1..=plan.answer {
        let meta = if plan.fillers.contains(&slot) {
            RoundMeta {
                index: slot,
                sender: Sender::expected(slot),
                alphabet: vec!["-".to_string()],
            }
        } else if slot == plan.answer {
            RoundMeta {
                index: slot,
                sender: plan.answer_sender,
                alphabet: vec!["0".to_string(), "1".to_string()],
            }
        } else {
            let pos = plan
                .slots
                .iter()
                .find_map(|s| s.iter().position(|&g| g == slot).map(|i| i + 1))
                .expect("every slot is assigned");
            RoundMeta {
                index: slot,
                sender: p.rounds()[pos].sender,
                alphabet: p.rounds()[pos].alphabet.clone(),
            }
        };
        rounds.push(meta);
    }
    for meta in &rounds {
        vars.push(Variable {
            name: round_var(meta.index),
            alphabet: meta.alphabet.clone(),
        });
    }

    let var_count = vars.len();
    let mut entries = Vec::with_capacity(total as usize);
    for combo in cartesian(&vec![support.len(); n]) {
        let mut key = vec![0u32; var_count];
        let mut mass = Rat::one();
        let mut m0_parts = vec![0u32; n];
        let mut answer = 0u32;
        for (j, &ci) in combo.iter().enumerate() {
            let (ck, cm) = support[ci as usize];
            mass *= cm;
            key[j] = ck[x_idx];
            key[n + j] = ck[y_idx];
            m0_parts[j] = ck[round_idx[0]];
            for (i, &slot) in plan.slots[j].iter().enumerate() {
                key[2 * n + slot] = ck[round_idx[i + 1]];
            }
            answer ^= ck[out_idx];
        }
        key[2 * n] = compose_index(&m0_sizes, &m0_parts);
        key[2 * n + plan.answer] = answer;
        entries.push((key, mass));
    }

    let x_names: Vec<String> = labels.iter().map(|l| format!("x{l}")).collect();
    let y_names: Vec<String> = labels.iter().map(|l| format!("y{l}")).collect();
    Protocol::new(
        JointTable::new(vars, entries)?,
        x_names,
        y_names,
        rounds,
        p.kind(),
        plan.answer,
        coordinates,
    )
}

/// Runs `t` transcripts of `p` on shared inputs and answers with the
/// majority of their output bits. `t` must be odd so the vote is decisive.
pub fn boost_majority(p: &Protocol, t: usize) -> Result<Protocol> {
    if t.is_multiple_of(2) || t == 0 {
        return Err(Error::EvenT(t));
    }
    if p.coordinates().len() != 1 {
        return Err(Error::InvalidInput("boosting needs a one-coordinate protocol".into()));
    }
    let out = &p.rounds()[p.output_round()];
    if !binary_round(&out.alphabet) {
        return Err(Error::AlphabetMismatch(format!(
            "output round {} is not binary",
            out.index
        )));
    }
    let joint = p.joint();
    let x_name = p.x_vars()[0].clone();
    let y_name = p.y_vars()[0].clone();
    let x_idx = joint.var_index(&x_name)?;
    let y_idx = joint.var_index(&y_name)?;
    let r = p.last_round();
    let round_idx = p.round_indices(r);
    let out_idx = round_idx[p.output_round()];
    let standard = p.kind() == Kind::Standard;
    let plan = schedule(t, r, standard);

    let groups = joint.group_by(&[x_idx, y_idx]);
    let mut budget_check: u128 = 0;
    for members in groups.values() {
        let mut c: u128 = 1;
        for _ in 0..t {
            c = c.saturating_mul(members.len() as u128);
        }
        budget_check = budget_check.saturating_add(c);
    }
    if budget_check > DEFAULT_ENTRY_BUDGET as u128 {
        return Err(Error::EntryBudget {
            entries: budget_check.min(usize::MAX as u128) as usize,
            budget: DEFAULT_ENTRY_BUDGET,
        });
    }

    let m0_alpha: Vec<&[String]> = (0..t).map(|_| &p.rounds()[0].alphabet[..]).collect();
    let m0_composed = composed_alphabet(&m0_alpha);
    let m0_sizes = vec![p.rounds()[0].alphabet.len(); t];

    let mut vars = vec![
        joint.vars()[x_idx].clone(),
        joint.vars()[y_idx].clone(),
    ];
    let mut rounds = vec![RoundMeta {
        index: 0,
        sender: Sender::Public,
        alphabet: m0_composed,
    }];
    for slot in 1..=plan.answer {
        let meta = if plan.fillers.contains(&slot) {
            RoundMeta {
                index: slot,
                sender: Sender::expected(slot),
                alphabet: vec!["-".to_string()],
            }
        } else if slot == plan.answer {
            RoundMeta {
                index: slot,
                sender: plan.answer_sender,
                alphabet: vec!["0".to_string(), "1".to_string()],
            }
        } else {
            let pos = plan
                .slots
                .iter()
                .find_map(|s| s.iter().position(|&g| g == slot).map(|i| i + 1))
                .expect("every slot is assigned");
            RoundMeta {
                index: slot,
                sender: p.rounds()[pos].sender,
                alphabet: p.rounds()[pos].alphabet.clone(),
            }
        };
        rounds.push(meta);
    }
    for meta in &rounds {
        vars.push(Variable {
            name: round_var(meta.index),
            alphabet: meta.alphabet.clone(),
        });
    }

    let var_count = vars.len();
    let mut entries = Vec::new();
    for members in groups.values() {
        let w = members.iter().fold(Rat::zero(), |acc, &(_, m)| acc + m);
        for combo in cartesian(&vec![members.len(); t]) {
            let mut key = vec![0u32; var_count];
            let mut mass = Rat::one();
            let mut m0_parts = vec![0u32; t];
            let mut votes = 0usize;
            for (c, &ci) in combo.iter().enumerate() {
                let (ck, cm) = members[ci as usize];
                mass *= cm;
                key[0] = ck[x_idx];
                key[1] = ck[y_idx];
                m0_parts[c] = ck[round_idx[0]];
                for (i, &slot) in plan.slots[c].iter().enumerate() {
                    key[2 + slot] = ck[round_idx[i + 1]];
                }
                votes += ck[out_idx] as usize;
            }
            for _ in 1..t {
                mass /= &w;
            }
            key[2] = compose_index(&m0_sizes, &m0_parts);
            key[2 + plan.answer] = if votes * 2 > t { 1 } else { 0 };
            entries.push((key, mass));
        }
    }

    Protocol::new(
        JointTable::new(vars, entries)?,
        vec![x_name],
        vec![y_name],
        rounds,
        p.kind(),
        plan.answer,
        p.coordinates().to_vec(),
    )
}

/// One coordinate of a multi-coordinate protocol, embedded as a protocol
/// of its own, with everything else pushed into the public round or the
/// parties' private randomness.
#[derive(Debug)]
pub struct Embedding {
    pub per_j: Vec<Protocol>,
    pub errors: Vec<Rat>,
    pub ic_per_j: Vec<f64>,
    pub error_p: Rat,
    pub ic_p: f64,
    /// Uniform public mixture of the embeddings, when the coordinates
    /// share alphabets.
    pub mixture: Option<Protocol>,
    pub ic_mixture: Option<f64>,
    pub report: VerdictReport,
}

/// Embeds each coordinate of `p` as a single-coordinate protocol.
///
/// For coordinate j, the x's below j and the y's above j become public,
/// Alice treats the remaining x's as private randomness and Bob the
/// remaining y's, and two closing rounds exchange the XOR corrections so
/// the last round answers f on coordinate j alone. Requires the input
/// distribution to be a product over coordinates.
pub fn embed_single(p: &Protocol, f: &FunctionTable) -> Result<Embedding> {
    let n = p.coordinates().len();
    let joint = p.joint();
    let mi = p.input_marginal();

    let mut pair_marginals = Vec::with_capacity(n);
    for c in p.coordinates() {
        pair_marginals.push(joint.marginal(&[&c.x_var, &c.y_var])?);
    }
    let mut mi_pairs = Vec::with_capacity(n);
    for c in p.coordinates() {
        mi_pairs.push((mi.var_index(&c.x_var)?, mi.var_index(&c.y_var)?));
    }
    for (key, mass) in mi.support() {
        let mut expected = Rat::one();
        for (j, &(xi, yi)) in mi_pairs.iter().enumerate() {
            expected *= pair_marginals[j]
                .get(&[key[xi], key[yi]])
                .cloned()
                .unwrap_or_else(Rat::zero);
        }
        if expected != *mass {
            return Err(Error::NonProductInput(format!(
                "the input distribution does not factor over coordinates at {:?}",
                mi.symbols_of(key)
            )));
        }
    }

    let stats = output_stats(p, f)?;
    let ic_p = information_cost(p);
    let r = p.last_round();
    let round_idx = p.round_indices(r);
    let out_idx = round_idx[p.output_round()];
    let mut report = VerdictReport::new();
    let mut per_j = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    let mut ic_per_j = Vec::with_capacity(n);

    for (j, coord) in p.coordinates().iter().enumerate() {
        let xj = joint.var_index(&coord.x_var)?;
        let yj = joint.var_index(&coord.y_var)?;
        // Public composition: x's below j, y's above j, then the old m0.
        let mut pub_parts: Vec<usize> = Vec::new();
        for c in &p.coordinates()[..j] {
            pub_parts.push(joint.var_index(&c.x_var)?);
        }
        for c in &p.coordinates()[j + 1..] {
            pub_parts.push(joint.var_index(&c.y_var)?);
        }
        pub_parts.push(round_idx[0]);
        let pub_sizes: Vec<usize> = pub_parts
            .iter()
            .map(|&i| joint.vars()[i].alphabet.len())
            .collect();
        let pub_alphas: Vec<&[String]> = pub_parts
            .iter()
            .map(|&i| &joint.vars()[i].alphabet[..])
            .collect();
        let pub_alpha = composed_alphabet(&pub_alphas);

        // Who closes: the correction bit goes to whoever speaks next.
        let alice_first = r.is_multiple_of(2);
        let bit_alpha = vec!["0".to_string(), "1".to_string()];
        let mut rounds = vec![RoundMeta {
            index: 0,
            sender: Sender::Public,
            alphabet: pub_alpha.clone(),
        }];
        for meta in &p.rounds()[1..] {
            rounds.push(meta.clone());
        }
        rounds.push(RoundMeta {
            index: r + 1,
            sender: if alice_first { Sender::Alice } else { Sender::Bob },
            alphabet: bit_alpha.clone(),
        });
        rounds.push(RoundMeta {
            index: r + 2,
            sender: if alice_first { Sender::Bob } else { Sender::Alice },
            alphabet: bit_alpha.clone(),
        });

        let mut vars = vec![
            joint.vars()[xj].clone(),
            joint.vars()[yj].clone(),
        ];
        for meta in &rounds {
            vars.push(Variable {
                name: round_var(meta.index),
                alphabet: meta.alphabet.clone(),
            });
        }

        let mut coord_pairs = Vec::with_capacity(n);
        for c in p.coordinates() {
            coord_pairs.push((joint.var_index(&c.x_var)?, joint.var_index(&c.y_var)?));
        }
        let mut masses: BTreeMap<Vec<u32>, Rat> = BTreeMap::new();
        for (key, mass) in joint.support() {
            let mut b_a = 0u8;
            for &(xi, yi) in &coord_pairs[j + 1..] {
                b_a ^= f.value(key[xi], key[yi]);
            }
            let mut b_b = 0u8;
            for &(xi, yi) in &coord_pairs[..j] {
                b_b ^= f.value(key[xi], key[yi]);
            }
            let first = if alice_first { b_a } else { b_b };
            let ans = (key[out_idx] as u8) ^ b_a ^ b_b;

            let mut out = Vec::with_capacity(vars.len());
            out.push(key[xj]);
            out.push(key[yj]);
            let parts: Vec<u32> = pub_parts.iter().map(|&i| key[i]).collect();
            out.push(compose_index(&pub_sizes, &parts));
            for &ri in &round_idx[1..] {
                out.push(key[ri]);
            }
            out.push(first as u32);
            out.push(ans as u32);
            *masses.entry(out).or_insert_with(Rat::zero) += mass;
        }

        let pj = Protocol::new(
            JointTable::new(vars, masses.into_iter().collect())?,
            vec![coord.x_var.clone()],
            vec![coord.y_var.clone()],
            rounds,
            Kind::Standard,
            r + 2,
            vec![Coordinate {
                label: coord.label.clone(),
                x_var: coord.x_var.clone(),
                y_var: coord.y_var.clone(),
            }],
        )?;
        let st = output_stats(&pj, f)?;
        report.check_eq_exact(
            format!("embed/error_exact[{j}]"),
            &st.error,
            &stats.error,
            "the embedded coordinate errs exactly as often as p",
        );
        let v = validate_standard(&pj);
        report.flag(
            format!("embed/standard[{j}]"),
            v.pass,
            "the embedding is a standard protocol",
        );
        errors.push(st.error);
        ic_per_j.push(information_cost(&pj));
        per_j.push(pj);
    }

    let ic_sum: f64 = ic_per_j.iter().sum();
    report.check_le(
        "embed/ic_sum",
        ic_sum,
        ic_p + 2.0 * n as f64,
        1e-9,
        "Σ_j IC(π_j) ≤ IC(p) + 2n",
    );
    report.check_le(
        "embed/ic_mixture",
        ic_sum / n as f64,
        ic_p / n as f64 + 2.0,
        1e-9,
        "the mean embedded cost is within 2 of IC(p)/n",
    );

    let c0 = &p.coordinates()[0];
    let x0_al = &joint.var(&c0.x_var)?.alphabet;
    let y0_al = &joint.var(&c0.y_var)?.alphabet;
    let uniform_shape = p.coordinates().iter().all(|c| {
        joint.var(&c.x_var).map(|v| &v.alphabet == x0_al).unwrap_or(false)
            && joint.var(&c.y_var).map(|v| &v.alphabet == y0_al).unwrap_or(false)
    });
    let (mixture, ic_mixture) = if uniform_shape {
        let mix = mix_embeddings(&per_j)?;
        let ic_mix = information_cost(&mix);
        let mix_stats = output_stats(&mix, f)?;
        let mean_err = errors.iter().cloned().sum::<Rat>() / Rat::from_integer(n.into());
        report.check_eq_exact(
            "embed/mixture_error",
            &mix_stats.error,
            &mean_err,
            "the mixture errs at the mean embedded rate",
        );
        report.check_eq(
            "embed/ic_mixture_eq",
            ic_mix,
            ic_sum / n as f64,
            1e-9,
            "IC of the public-j mixture is the mean embedded cost",
        );
        let vm = validate_standard(&mix);
        report.flag("embed/mixture_standard", vm.pass, "the mixture is a standard protocol");
        (Some(mix), Some(ic_mix))
    } else {
        (None, None)
    };

    Ok(Embedding {
        per_j,
        errors,
        ic_per_j,
        error_p: stats.error,
        ic_p,
        mixture,
        ic_mixture,
        report: report.finish(),
    })
}

/// Folds the embedded coordinates into one protocol whose public round
/// first names a uniform j, then plays π_j. Inputs take coordinate 0's
/// variable names; the per-j public symbols are tagged with their j.
fn mix_embeddings(per_j: &[Protocol]) -> Result<Protocol> {
    let n = per_j.len();
    let first = &per_j[0];
    let x_name = first.x_vars()[0].clone();
    let y_name = first.y_vars()[0].clone();
    let weight = Rat::new(1.into(), n.into());

    let mut m0_alpha = Vec::new();
    let mut offsets = Vec::with_capacity(n);
    for (j, pj) in per_j.iter().enumerate() {
        offsets.push(m0_alpha.len() as u32);
        let m0 = pj.joint().var(&round_var(0))?;
        m0_alpha.extend(m0.alphabet.iter().map(|s| format!("{j}{COMPOSE}{s}")));
    }

    let mut rounds = first.rounds().to_vec();
    rounds[0].alphabet = m0_alpha;
    let mut vars = vec![
        first.joint().var(&x_name)?.clone(),
        first.joint().var(&y_name)?.clone(),
    ];
    for meta in &rounds {
        vars.push(Variable {
            name: round_var(meta.index),
            alphabet: meta.alphabet.clone(),
        });
    }

    // Keys align across j: every embedding lays out (x, y, m0, m1, …).
    let mut masses: BTreeMap<Vec<u32>, Rat> = BTreeMap::new();
    for (j, pj) in per_j.iter().enumerate() {
        for (key, mass) in pj.joint().support() {
            let mut out = key.to_vec();
            out[2] += offsets[j];
            *masses.entry(out).or_insert_with(Rat::zero) += mass * &weight;
        }
    }

    Protocol::new(
        JointTable::new(vars, masses.into_iter().collect())?,
        vec![x_name.clone()],
        vec![y_name.clone()],
        rounds,
        Kind::Standard,
        first.output_round(),
        vec![Coordinate {
            label: String::new(),
            x_var: x_name,
            y_var: y_name,
        }],
    )
}

/// Exact mismatch probability of the coupled sampler below: with t the
/// total variation between the tables, the chains desynchronize with
/// probability 2t/(2+t) ≤ t.
pub fn coupled_mismatch_exact(mu: &JointTable, nu: &JointTable) -> Result<Rat> {
    let tv = single_var_tv(mu, nu)?;
    let two = crate::rational::rat(2, 1);
    Ok(&tv * &two / (&tv + &two))
}

fn single_var_tv(mu: &JointTable, nu: &JointTable) -> Result<Rat> {
    if mu.vars().len() != 1 || nu.vars().len() != 1 {
        return Err(Error::InvalidInput("the coupling compares single-variable tables".into()));
    }
    if mu.vars()[0].alphabet != nu.vars()[0].alphabet {
        return Err(Error::AlphabetMismatch(format!(
            "{} vs {}",
            mu.vars()[0].name, nu.vars()[0].name
        )));
    }
    let mut tv = Rat::zero();
    for s in 0..mu.vars()[0].alphabet.len() as u32 {
        let a = mu.get(&[s]).cloned().unwrap_or_else(Rat::zero);
        let b = nu.get(&[s]).cloned().unwrap_or_else(Rat::zero);
        tv += (a - b).abs();
    }
    Ok(tv)
}

#[derive(Debug, Clone)]
pub struct CouplingResult {
    /// Exact mismatch probability 2t/(2+t).
    pub exact: Rat,
    /// Unhalved total variation between the tables.
    pub tv: Rat,
    pub draws: u64,
    pub mismatches: u64,
    pub empirical: f64,
    /// Binomial standard deviation of the empirical rate.
    pub sigma: f64,
    pub z_score: f64,
    pub seed: u64,
    /// The first few (μ-sample, ν-sample) pairs.
    pub samples: Vec<(u32, u32)>,
    /// Per-symbol tallies of each chain's accepted draws.
    pub counts_mu: Vec<u64>,
    pub counts_nu: Vec<u64>,
}

/// Draws from μ and ν through one shared proposal stream per draw. Each
/// chain accepts the first proposal that passes its own exact threshold;
/// a draw mismatches when the two chains accept different proposals.
/// Draw d uses stream d of the seeded generator, so results do not
/// depend on evaluation order.
pub fn coupled_draw(
    mu: &JointTable,
    nu: &JointTable,
    seed: u64,
    draws: u64,
) -> Result<CouplingResult> {
    let tv = single_var_tv(mu, nu)?;
    let exact = coupled_mismatch_exact(mu, nu)?;
    let size = mu.vars()[0].alphabet.len() as u32;
    let two64 = BigUint::one() << 64u32;
    let accepts = |table: &JointTable, s: u32, rho: u64| -> bool {
        match table.get(&[s]) {
            None => false,
            Some(m) => {
                BigUint::from(rho) * m.denom().to_biguint().expect("masses are nonnegative")
                    < m.numer().to_biguint().expect("masses are nonnegative") * &two64
            }
        }
    };

    let mut mismatches = 0u64;
    let mut samples = Vec::new();
    let mut counts_mu = vec![0u64; size as usize];
    let mut counts_nu = vec![0u64; size as usize];
    for d in 0..draws {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(d);
        rng.set_word_pos(0);
        let mut mu_hit: Option<(u64, u32)> = None;
        let mut nu_hit: Option<(u64, u32)> = None;
        let mut k = 0u64;
        while mu_hit.is_none() || nu_hit.is_none() {
            let s = rng.gen_range(0..size);
            let rho = rng.next_u64();
            if mu_hit.is_none() && accepts(mu, s, rho) {
                mu_hit = Some((k, s));
            }
            if nu_hit.is_none() && accepts(nu, s, rho) {
                nu_hit = Some((k, s));
            }
            k += 1;
        }
        let (km, sm) = mu_hit.expect("found");
        let (kn, sn) = nu_hit.expect("found");
        if km != kn {
            mismatches += 1;
        }
        counts_mu[sm as usize] += 1;
        counts_nu[sn as usize] += 1;
        if samples.len() < 64 {
            samples.push((sm, sn));
        }
    }

    let q = rat_to_f64(&exact);
    let empirical = if draws == 0 { 0.0 } else { mismatches as f64 / draws as f64 };
    let sigma = if draws == 0 { 0.0 } else { (q * (1.0 - q) / draws as f64).sqrt() };
    let z_score = if sigma > 0.0 { (empirical - q) / sigma } else { 0.0 };
    Ok(CouplingResult {
        exact,
        tv,
        draws,
        mismatches,
        empirical,
        sigma,
        z_score,
        seed,
        samples,
        counts_mu,
        counts_nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::advantage_rat;
    use crate::io::{bernoulli_table, noisy_single, p1, uniform_mu, two_round};
    use crate::protocol::condition_protocol;
    use crate::rational::rat;
    use crate::table::{BitVar, Event};

    #[test]
    fn naive_two_copies_of_a_noisy_and() {
        let base = noisy_single(rat(1, 20)).unwrap();
        let p = naive_xor(&base, 2).unwrap();
        assert_eq!(p.kind(), Kind::Standard);
        assert!(validate_standard(&p).pass);
        // Per copy: one clean bit from Alice plus a noisy answer, so the cost
        // is 2 + (1 - H(1/20)) over both directions.
        let h = crate::info::binary_entropy(&rat(1, 20)).unwrap();
        assert!((information_cost(&p) - (3.0 - h)).abs() < 1e-9);
        let stats = output_stats(&p, &FunctionTable::and()).unwrap();
        assert_eq!(stats.error, rat(19, 200));
        assert_eq!(stats.advantage, rat(81, 100));

        // The answer bit advantage multiplies across independent copies.
        let m2 = BitVar::Var("m2".into());
        let m4 = BitVar::Var("m4".into());
        let and0 = FunctionTable::and().bit_for("x0", "y0");
        let and1 = FunctionTable::and().bit_for("x1", "y1");
        let a0 = advantage_rat(p.joint(), &BitVar::xor2(m2, and0), None).unwrap();
        let a1 = advantage_rat(p.joint(), &BitVar::xor2(m4, and1), None).unwrap();
        assert_eq!(a0, rat(9, 10));
        assert_eq!(&a0 * &a1, rat(81, 100));
    }

    #[test]
    fn naive_rejects_oversized_powers() {
        let base = noisy_single(rat(1, 20)).unwrap();
        match naive_xor(&base, 12) {
            Err(Error::EntryBudget { .. }) => {}
            other => panic!("expected a budget error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn boost_three_votes() {
        let base = noisy_single(rat(1, 20)).unwrap();
        assert!(matches!(boost_majority(&base, 2), Err(Error::EvenT(2))));
        let p = boost_majority(&base, 3).unwrap();
        assert_eq!(p.kind(), Kind::Standard);
        assert!(validate_standard(&p).pass);
        let stats = output_stats(&p, &FunctionTable::and()).unwrap();
        assert_eq!(stats.error, rat(29, 4000));
    }

    #[test]
    fn embedding_recovers_the_single_coordinate_cost() {
        let base = noisy_single(rat(1, 20)).unwrap();
        let p = naive_xor(&base, 2).unwrap();
        let emb = embed_single(&p, &FunctionTable::and()).unwrap();
        assert!(emb.report.pass, "{}", emb.report.lines());
        assert_eq!(emb.errors, vec![rat(19, 200), rat(19, 200)]);
        let ic_sum: f64 = emb.ic_per_j.iter().sum();
        assert!(ic_sum <= emb.ic_p + 4.0 + 1e-9);
    }

    #[test]
    fn embedding_requires_a_product_input() {
        let base = noisy_single(rat(1, 20)).unwrap();
        let p = naive_xor(&base, 2).unwrap();
        let ev = Event::from_predicate(p.joint(), &["x0", "x1"], |k| k[0] == k[1]).unwrap();
        let cond = condition_protocol(&p, &ev).unwrap();
        assert!(matches!(
            embed_single(&cond, &FunctionTable::and()),
            Err(Error::NonProductInput(_))
        ));
    }

    #[test]
    fn embedding_p1_is_p1_shaped() {
        let (p, f, _) = p1();
        let emb = embed_single(&p, &f).unwrap();
        assert!(emb.report.pass, "{}", emb.report.lines());
        assert_eq!(emb.errors, vec![rat(0, 1)]);
    }

    #[test]
    fn coupling_mismatch_rate_is_two_t_over_two_plus_t() {
        let mu = bernoulli_table("b", rat(1, 2)).unwrap();
        let nu = bernoulli_table("b", rat(1, 4)).unwrap();
        assert_eq!(single_var_tv(&mu, &nu).unwrap(), rat(1, 2));
        let q = coupled_mismatch_exact(&mu, &nu).unwrap();
        assert_eq!(q, rat(2, 5));
        assert!(q <= rat(1, 2), "q ≤ t");
    }

    #[test]
    fn coupled_draws_are_deterministic_and_consistent() {
        let mu = bernoulli_table("b", rat(1, 2)).unwrap();
        let nu = bernoulli_table("b", rat(1, 4)).unwrap();
        let a = coupled_draw(&mu, &nu, 7, 4000).unwrap();
        let b = coupled_draw(&mu, &nu, 7, 4000).unwrap();
        assert_eq!(a.mismatches, b.mismatches);
        assert_eq!(a.samples, b.samples);
        assert!(a.z_score.abs() < 5.0, "z = {}", a.z_score);
        let c = coupled_draw(&mu, &nu, 8, 4000).unwrap();
        assert!(c.mismatches != a.mismatches || c.samples != a.samples);
    }

    #[test]
    fn coupling_of_identical_tables_never_mismatches() {
        let mu = bernoulli_table("b", rat(1, 3)).unwrap();
        let r = coupled_draw(&mu, &mu.clone(), 1, 500).unwrap();
        assert_eq!(r.mismatches, 0);
        assert_eq!(r.exact, rat(0, 1));
        assert!(r.samples.iter().all(|(a, b)| a == b));
    }

    #[test]
    fn schedule_keeps_the_alternation() {
        // Odd-length bodies need a filler between copies.
        let plan = schedule(3, 3, true);
        assert_eq!(plan.slots[0], vec![1, 2, 3]);
        assert_eq!(plan.fillers, vec![4, 8]);
        assert_eq!(plan.slots[1], vec![5, 6, 7]);
        assert_eq!(plan.answer, 12);

        let even = schedule(2, 2, true);
        assert!(even.fillers.is_empty());
        assert_eq!(even.answer, 5);
        assert_eq!(even.answer_sender, Sender::Alice);
    }

    #[test]
    fn mismatched_base_protocols_are_rejected() {
        let f = FunctionTable::and();
        let mu = uniform_mu(&["0", "1"], &["0", "1"]);
        let p = two_round(&f, mu, rat(0, 1), rat(0, 1)).unwrap();
        let multi = naive_xor(&p, 2).unwrap();
        assert!(matches!(
            naive_xor(&multi, 2),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(naive_xor(&p, 1), Err(Error::InvalidInput(_))));
    }
}
