//! Two-party protocols as explicit joint distributions.
//!
//! A protocol is a joint over input variables (Alice's `x_*`, Bob's `y_*`)
//! and transcript rounds `m0..mr`. Round 0 is the public round; in a
//! standard protocol odd rounds are Alice's and even rounds (≥ 2) are
//! Bob's, and each message depends only on the sender's input and the
//! transcript so far. Generalized protocols carry the same metadata but
//! allow arbitrary dependence (they arise from conditioning and from
//! decomposition). The last round is the designated output unless a
//! transformation re-designates it.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::info::mutual_information;
use crate::rational::{format_rat, rat, Rat};
use crate::report::VerdictReport;
use crate::table::{BitVar, Event, JointTable, Key, Variable};
use crate::{Error, Result, DEFAULT_ENTRY_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sender {
    Public,
    Alice,
    Bob,
}

impl Sender {
    /// The sender round index `i` must have in an alternating protocol.
    pub fn expected(i: usize) -> Sender {
        if i == 0 {
            Sender::Public
        } else if i % 2 == 1 {
            Sender::Alice
        } else {
            Sender::Bob
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Standard,
    Generalized,
}

/// Metadata of one transcript round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundMeta {
    pub index: usize,
    pub sender: Sender,
    pub alphabet: Vec<String>,
}

/// One input coordinate: a label plus the pair of variables it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coordinate {
    pub label: String,
    pub x_var: String,
    pub y_var: String,
}

/// A node split: coordinates whose label extends `prefix` with '0' go
/// left, with '1' go right.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub prefix: String,
}

impl SplitSpec {
    pub fn at(prefix: impl Into<String>) -> Self {
        SplitSpec { prefix: prefix.into() }
    }
}

/// Joint variable name of transcript round `i`.
pub fn round_var(i: usize) -> String {
    format!("m{i}")
}

/// A protocol: joint distribution plus round/coordinate metadata.
#[derive(Debug, Clone)]
pub struct Protocol {
    joint: JointTable,
    x_vars: Vec<String>,
    y_vars: Vec<String>,
    rounds: Vec<RoundMeta>,
    kind: Kind,
    output_round: usize,
    coordinates: Vec<Coordinate>,
}

impl Protocol {
    pub fn new(
        joint: JointTable,
        x_vars: Vec<String>,
        y_vars: Vec<String>,
        rounds: Vec<RoundMeta>,
        kind: Kind,
        output_round: usize,
        coordinates: Vec<Coordinate>,
    ) -> Result<Self> {
        if rounds.is_empty() {
            return Err(Error::InvalidInput("a protocol needs at least the public round".into()));
        }
        for (i, r) in rounds.iter().enumerate() {
            if r.index != i {
                return Err(Error::InvalidInput(format!(
                    "round at position {i} claims index {}",
                    r.index
                )));
            }
            if (i == 0) != (r.sender == Sender::Public) {
                return Err(Error::InvalidInput(
                    "round 0 and only round 0 is the public round".into(),
                ));
            }
            let v = joint.var(&round_var(i))?;
            if v.alphabet != r.alphabet {
                return Err(Error::AlphabetMismatch(format!(
                    "round {i} metadata disagrees with joint alphabet"
                )));
            }
        }
        if output_round >= rounds.len() {
            return Err(Error::OutOfRange(format!("output round {output_round}")));
        }
        let mut named = 0usize;
        for name in x_vars.iter().chain(&y_vars) {
            joint.var(name)?;
            named += 1;
        }
        if x_vars.iter().any(|x| y_vars.contains(x)) {
            return Err(Error::InvalidInput("x and y variables overlap".into()));
        }
        if named + rounds.len() != joint.vars().len() {
            return Err(Error::InvalidInput(
                "joint has variables outside inputs and rounds".into(),
            ));
        }
        if coordinates.is_empty() {
            return Err(Error::InvalidInput("a protocol needs at least one coordinate".into()));
        }
        let mut seen_x: Vec<&str> = Vec::new();
        let mut seen_y: Vec<&str> = Vec::new();
        let mut labels: Vec<&str> = Vec::new();
        for c in &coordinates {
            if labels.contains(&c.label.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate coordinate label `{}`", c.label)));
            }
            labels.push(&c.label);
            if !x_vars.contains(&c.x_var) || seen_x.contains(&c.x_var.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "coordinate `{}` does not own a fresh x variable",
                    c.label
                )));
            }
            if !y_vars.contains(&c.y_var) || seen_y.contains(&c.y_var.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "coordinate `{}` does not own a fresh y variable",
                    c.label
                )));
            }
            seen_x.push(&c.x_var);
            seen_y.push(&c.y_var);
        }
        if seen_x.len() != x_vars.len() || seen_y.len() != y_vars.len() {
            return Err(Error::InvalidInput("coordinates do not cover all input variables".into()));
        }
        Ok(Protocol {
            joint,
            x_vars,
            y_vars,
            rounds,
            kind,
            output_round,
            coordinates,
        })
    }

    pub fn joint(&self) -> &JointTable {
        &self.joint
    }

    pub fn x_vars(&self) -> &[String] {
        &self.x_vars
    }

    pub fn y_vars(&self) -> &[String] {
        &self.y_vars
    }

    pub fn rounds(&self) -> &[RoundMeta] {
        &self.rounds
    }

    pub fn last_round(&self) -> usize {
        self.rounds.len() - 1
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn output_round(&self) -> usize {
        self.output_round
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        &self.coordinates
    }

    pub fn x_indices(&self) -> Vec<usize> {
        self.x_vars.iter().map(|v| self.joint.var_index(v).expect("validated")).collect()
    }

    pub fn y_indices(&self) -> Vec<usize> {
        self.y_vars.iter().map(|v| self.joint.var_index(v).expect("validated")).collect()
    }

    /// Joint positions of rounds `0..=upto` (exclusive of later rounds).
    pub fn round_indices(&self, upto: usize) -> Vec<usize> {
        (0..=upto)
            .map(|i| self.joint.var_index(&round_var(i)).expect("validated"))
            .collect()
    }

    /// Marginal over all input variables, x's first.
    pub fn input_marginal(&self) -> JointTable {
        let names: Vec<&str> = self.x_vars.iter().chain(&self.y_vars).map(|s| s.as_str()).collect();
        self.joint.marginal(&names).expect("inputs exist")
    }

    /// Same protocol with a different claimed kind.
    pub fn with_kind(mut self, kind: Kind) -> Self {
        self.kind = kind;
        self
    }
}

/// A boolean function given as a total truth table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionTable {
    pub name: String,
    pub x_alphabet: Vec<String>,
    pub y_alphabet: Vec<String>,
    values: Vec<u8>,
}

impl FunctionTable {
    pub fn new(
        name: impl Into<String>,
        x_alphabet: Vec<String>,
        y_alphabet: Vec<String>,
        values: Vec<u8>,
    ) -> Result<Self> {
        if x_alphabet.is_empty() || y_alphabet.is_empty() {
            return Err(Error::InvalidInput("function alphabets must be nonempty".into()));
        }
        if values.len() != x_alphabet.len() * y_alphabet.len() {
            return Err(Error::InvalidInput(format!(
                "truth table has {} entries, expected {}",
                values.len(),
                x_alphabet.len() * y_alphabet.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::OutOfRange("truth table values must be bits".into()));
        }
        Ok(FunctionTable {
            name: name.into(),
            x_alphabet,
            y_alphabet,
            values,
        })
    }

    fn binary(name: &str, values: [u8; 4]) -> Self {
        FunctionTable::new(
            name,
            vec!["0".into(), "1".into()],
            vec!["0".into(), "1".into()],
            values.to_vec(),
        )
        .expect("binary table is well formed")
    }

    pub fn and() -> Self {
        FunctionTable::binary("and", [0, 0, 0, 1])
    }

    pub fn xor() -> Self {
        FunctionTable::binary("xor", [0, 1, 1, 0])
    }

    /// Value at symbol indices (row-major in x).
    pub fn value(&self, x: u32, y: u32) -> u8 {
        self.values[x as usize * self.y_alphabet.len() + y as usize]
    }

    /// The function applied to one coordinate's variable pair.
    pub fn bit_for(&self, x_var: &str, y_var: &str) -> BitVar {
        let mut table = BTreeMap::new();
        for x in 0..self.x_alphabet.len() as u32 {
            for y in 0..self.y_alphabet.len() as u32 {
                table.insert(vec![x, y].into_boxed_slice(), self.value(x, y));
            }
        }
        BitVar::Apply {
            vars: vec![x_var.into(), y_var.into()],
            alphabets: vec![self.x_alphabet.clone(), self.y_alphabet.clone()],
            table,
        }
    }

    /// XOR of the function over every listed coordinate.
    pub fn xor_over(&self, coords: &[Coordinate]) -> BitVar {
        BitVar::Xor(
            coords
                .iter()
                .map(|c| self.bit_for(&c.x_var, &c.y_var))
                .collect(),
        )
    }

    /// The n-fold XOR power as a single truth table over composed
    /// (∘-joined) tuple alphabets, coordinate order matching label order.
    pub fn xor_power(&self, n: usize) -> Result<FunctionTable> {
        if n == 0 {
            return Err(Error::InvalidInput("xor power needs n >= 1".into()));
        }
        let xs: Vec<&[String]> = std::iter::repeat_n(&self.x_alphabet[..], n).collect();
        let ys: Vec<&[String]> = std::iter::repeat_n(&self.y_alphabet[..], n).collect();
        let x_alphabet = crate::table::composed_alphabet(&xs);
        let y_alphabet = crate::table::composed_alphabet(&ys);
        let x_sizes = vec![self.x_alphabet.len(); n];
        let y_sizes = vec![self.y_alphabet.len(); n];
        let mut values = Vec::with_capacity(x_alphabet.len() * y_alphabet.len());
        for xk in crate::table::cartesian(&x_sizes) {
            for yk in crate::table::cartesian(&y_sizes) {
                let mut b = 0u8;
                for i in 0..n {
                    b ^= self.value(xk[i], yk[i]);
                }
                values.push(b);
            }
        }
        FunctionTable::new(format!("{}_xor{}", self.name, n), x_alphabet, y_alphabet, values)
    }
}

/// The public round of a standard protocol: input-independent randomness.
#[derive(Debug, Clone)]
pub struct PublicRound {
    pub alphabet: Vec<String>,
    pub dist: Vec<(u32, Rat)>,
}

/// One message kernel of a standard protocol.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub sender: Sender,
    pub alphabet: Vec<String>,
    /// Variables the kernel reads: sender-side inputs and earlier rounds.
    pub depends: Vec<String>,
    /// Context assignment (over `depends`, in order) to sparse distribution.
    pub rows: BTreeMap<Key, Vec<(u32, Rat)>>,
}

/// The kernel form of a standard protocol.
#[derive(Debug, Clone)]
pub struct StandardSpec {
    pub mu: JointTable,
    pub x_vars: Vec<String>,
    pub y_vars: Vec<String>,
    pub coordinates: Vec<Coordinate>,
    pub public: PublicRound,
    pub kernels: Vec<Kernel>,
    pub output_round: usize,
}

fn check_dist(dist: &[(u32, Rat)], alphabet_len: usize, what: &str) -> Result<()> {
    let mut total = Rat::zero();
    for (sym, p) in dist {
        if *sym as usize >= alphabet_len {
            return Err(Error::MalformedKernel(format!("{what}: symbol {sym} out of range")));
        }
        if p.is_negative() {
            return Err(Error::MalformedKernel(format!("{what}: negative probability")));
        }
        total += p;
    }
    if !total.is_one() {
        return Err(Error::MalformedKernel(format!(
            "{what}: row sums to {}, expected exactly 1",
            format_rat(&total)
        )));
    }
    Ok(())
}

/// Materializes the joint of a standard protocol from its kernels.
pub fn compile_standard(spec: &StandardSpec) -> Result<Protocol> {
    let mu_names: Vec<&str> = spec.mu.vars().iter().map(|v| v.name.as_str()).collect();
    let want: Vec<&str> = spec.x_vars.iter().chain(&spec.y_vars).map(|s| s.as_str()).collect();
    if mu_names != want {
        return Err(Error::InvalidInput(
            "input distribution variables must be the x variables then the y variables".into(),
        ));
    }
    check_dist(&spec.public.dist, spec.public.alphabet.len(), "public round")?;

    let mut vars: Vec<Variable> = spec.mu.vars().to_vec();
    vars.push(Variable {
        name: round_var(0),
        alphabet: spec.public.alphabet.clone(),
    });
    let mut rounds = vec![RoundMeta {
        index: 0,
        sender: Sender::Public,
        alphabet: spec.public.alphabet.clone(),
    }];

    let mut entries: Vec<(Vec<u32>, Rat)> = Vec::new();
    for (key, w) in spec.mu.support() {
        for (sym, q) in &spec.public.dist {
            if q.is_zero() {
                continue;
            }
            let mut k = key.to_vec();
            k.push(*sym);
            entries.push((k, w * q));
        }
    }

    for (pos, kernel) in spec.kernels.iter().enumerate() {
        let i = pos + 1;
        let expected = Sender::expected(i);
        if kernel.sender != expected {
            return Err(Error::InvalidInput(format!(
                "round {i} of a standard protocol must be sent by {expected:?}"
            )));
        }
        let side = match kernel.sender {
            Sender::Alice => &spec.x_vars,
            Sender::Bob => &spec.y_vars,
            Sender::Public => unreachable!(),
        };
        let mut dep_pos = Vec::with_capacity(kernel.depends.len());
        for d in &kernel.depends {
            let legal_round = (0..i).any(|j| *d == round_var(j));
            if !side.contains(d) && !legal_round {
                return Err(Error::MalformedKernel(format!(
                    "round {i} kernel may not read `{d}`"
                )));
            }
            dep_pos.push(
                vars.iter()
                    .position(|v| v.name == *d)
                    .ok_or_else(|| Error::UnknownVariable(d.clone()))?,
            );
        }
        for (ctx, row) in &kernel.rows {
            if ctx.len() != kernel.depends.len() {
                return Err(Error::MalformedKernel(format!("round {i}: context arity mismatch")));
            }
            for (pos_in_ctx, &sym) in ctx.iter().enumerate() {
                if sym as usize >= vars[dep_pos[pos_in_ctx]].alphabet.len() {
                    return Err(Error::MalformedKernel(format!(
                        "round {i}: context symbol out of range"
                    )));
                }
            }
            check_dist(row, kernel.alphabet.len(), &format!("round {i}"))?;
        }

        let mut next = Vec::with_capacity(entries.len() * kernel.alphabet.len());
        for (key, w) in &entries {
            let ctx: Key = dep_pos.iter().map(|&p| key[p]).collect();
            let row = kernel.rows.get(&ctx).ok_or_else(|| {
                Error::UnreachablePrefix(format!(
                    "round {i}, context over {:?}",
                    kernel.depends
                ))
            })?;
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
        vars.push(Variable {
            name: round_var(i),
            alphabet: kernel.alphabet.clone(),
        });
        rounds.push(RoundMeta {
            index: i,
            sender: kernel.sender,
            alphabet: kernel.alphabet.clone(),
        });
    }

    let joint = JointTable::new(vars, entries)?;
    Protocol::new(
        joint,
        spec.x_vars.clone(),
        spec.y_vars.clone(),
        rounds,
        Kind::Standard,
        spec.output_round,
        spec.coordinates.clone(),
    )
}

/// Reads the kernel form back off a protocol's joint. For a genuinely
/// standard protocol, `compile_standard(extract_spec(p))` reproduces the
/// joint exactly.
pub fn extract_spec(p: &Protocol) -> Result<StandardSpec> {
    let joint = p.joint();
    let mu = p.input_marginal();
    let m0 = joint.marginal(&[&round_var(0)])?;
    let public = PublicRound {
        alphabet: p.rounds()[0].alphabet.clone(),
        dist: m0.support().map(|(k, q)| (k[0], q.clone())).collect(),
    };
    let mut kernels = Vec::new();
    for i in 1..=p.last_round() {
        let sender = p.rounds()[i].sender;
        let side = match sender {
            Sender::Alice => &p.x_vars,
            Sender::Bob => &p.y_vars,
            Sender::Public => {
                return Err(Error::InvalidInput(format!("round {i} claims the public sender")))
            }
        };
        let mut depends: Vec<String> = side.clone();
        for j in 0..i {
            depends.push(round_var(j));
        }
        let dep_names: Vec<&str> = depends.iter().map(|s| s.as_str()).collect();
        let dep_idxs = joint.indices(&dep_names)?;
        let tgt = joint.var_index(&round_var(i))?;
        let mut rows = BTreeMap::new();
        for (ctx, members) in joint.group_by(&dep_idxs) {
            let total: Rat = members.iter().map(|(_, m)| (*m).clone()).sum();
            let mut dist: BTreeMap<u32, Rat> = BTreeMap::new();
            for (key, m) in members {
                *dist.entry(key[tgt]).or_insert_with(Rat::zero) += m;
            }
            rows.insert(
                ctx,
                dist.into_iter().map(|(s, m)| (s, m / &total)).collect::<Vec<_>>(),
            );
        }
        kernels.push(Kernel {
            sender,
            alphabet: p.rounds()[i].alphabet.clone(),
            depends,
            rows,
        });
    }
    Ok(StandardSpec {
        mu,
        x_vars: p.x_vars.clone(),
        y_vars: p.y_vars.clone(),
        coordinates: p.coordinates.to_vec(),
        public,
        kernels,
        output_round: p.output_round(),
    })
}

/// Max deviation from independence of the `a` and `b` projections within a
/// group of support entries, as an exact rational on the probability scale.
pub(crate) fn independence_violation(
    members: &[(&[u32], &Rat)],
    a_idxs: &[usize],
    b_idxs: &[usize],
) -> Rat {
    let mut am: BTreeMap<Key, Rat> = BTreeMap::new();
    let mut bm: BTreeMap<Key, Rat> = BTreeMap::new();
    let mut abm: BTreeMap<Key, Rat> = BTreeMap::new();
    let mut total = Rat::zero();
    for &(key, m) in members {
        let a = JointTable::sub_key(key, a_idxs);
        let b = JointTable::sub_key(key, b_idxs);
        let mut ab = a.to_vec();
        ab.extend_from_slice(&b);
        *am.entry(a).or_insert_with(Rat::zero) += m;
        *bm.entry(b).or_insert_with(Rat::zero) += m;
        *abm.entry(ab.into_boxed_slice()).or_insert_with(Rat::zero) += m;
        total += m;
    }
    let tt = &total * &total;
    let mut worst = Rat::zero();
    for (a, ma) in &am {
        for (b, mb) in &bm {
            let mut ab = a.to_vec();
            ab.extend_from_slice(b);
            let mab = abm.get(ab.as_slice()).cloned().unwrap_or_else(Rat::zero);
            let v = (mab * &total - ma * mb).abs() / &tt;
            if v > worst {
                worst = v;
            }
        }
    }
    worst
}

/// Checks the standard factorization: the public round is input-independent
/// and every later round is conditionally independent of the other party's
/// input given the sender's input and the transcript so far. Also checks
/// the alternation convention.
pub fn validate_standard(p: &Protocol) -> VerdictReport {
    let mut rep = VerdictReport::new();
    let joint = p.joint();
    let zero = Rat::zero();

    let mut bad_alt = None;
    for i in 1..=p.last_round() {
        if p.rounds()[i].sender != Sender::expected(i) {
            bad_alt = Some(i);
            break;
        }
    }
    rep.flag(
        "structure/alternation",
        bad_alt.is_none(),
        match bad_alt {
            None => "odd rounds Alice, even rounds Bob".to_string(),
            Some(i) => format!("round {i} breaks the alternation"),
        },
    );

    let input_idxs: Vec<usize> = p.x_indices().into_iter().chain(p.y_indices()).collect();
    let m0_idx = joint.var_index(&round_var(0)).expect("validated");
    let all: Vec<(&[u32], &Rat)> = joint.support().collect();
    let v0 = independence_violation(&all, &[m0_idx], &input_idxs);
    rep.check_eq_exact(
        "factorization/round0",
        &v0,
        &zero,
        "public round independent of the inputs",
    );

    for i in 1..=p.last_round() {
        let sender = p.rounds()[i].sender;
        let (side_idxs, other_idxs) = match sender {
            Sender::Alice => (p.x_indices(), p.y_indices()),
            Sender::Bob => (p.y_indices(), p.x_indices()),
            Sender::Public => unreachable!("constructor rejects public senders past round 0"),
        };
        let mut ctx = side_idxs;
        ctx.extend(p.round_indices(i - 1));
        let tgt = joint.var_index(&round_var(i)).expect("validated");
        let mut worst = Rat::zero();
        for members in joint.group_by(&ctx).values() {
            let v = independence_violation(members, &[tgt], &other_idxs);
            if v > worst {
                worst = v;
            }
        }
        rep.check_eq_exact(
            format!("factorization/round{i}"),
            &worst,
            &zero,
            format!("round {i} reads only the {sender:?} side and the transcript"),
        );
    }
    rep.finish()
}

/// Internal information cost I(M:X|Y,M⁰) + I(M:Y|X,M⁰), in bits, where M
/// is the transcript past the public round.
pub fn information_cost(p: &Protocol) -> f64 {
    let joint = p.joint();
    let msgs: Vec<String> = (1..=p.last_round()).map(round_var).collect();
    let m: Vec<&str> = msgs.iter().map(|s| s.as_str()).collect();
    let x: Vec<&str> = p.x_vars().iter().map(|s| s.as_str()).collect();
    let y: Vec<&str> = p.y_vars().iter().map(|s| s.as_str()).collect();
    let m0 = round_var(0);
    let mut y0: Vec<&str> = y.clone();
    y0.push(&m0);
    let mut x0: Vec<&str> = x.clone();
    x0.push(&m0);
    let a = mutual_information(joint, &m, &x, &y0).expect("protocol variables exist");
    let b = mutual_information(joint, &m, &y, &x0).expect("protocol variables exist");
    a + b
}

/// Exact output statistics of a protocol against the XOR of `f` over its
/// coordinates.
#[derive(Debug, Clone)]
pub struct OutputStats {
    pub error: Rat,
    pub advantage: Rat,
    pub disadvantage: Rat,
}

pub fn output_stats(p: &Protocol, f: &FunctionTable) -> Result<OutputStats> {
    let out = &p.rounds()[p.output_round()];
    if out.alphabet != ["0", "1"] {
        return Err(Error::AlphabetMismatch(format!(
            "output round {} is not binary",
            out.index
        )));
    }
    let ebit = BitVar::xor2(
        BitVar::Var(round_var(p.output_round())),
        f.xor_over(p.coordinates()),
    );
    let cb = ebit.compile(p.joint())?;
    let mut error = Rat::zero();
    for (key, m) in p.joint().support() {
        if cb.eval(key) == 1 {
            error += m;
        }
    }
    let advantage = (Rat::one() - rat(2, 1) * &error).abs();
    let disadvantage = Rat::one() - &advantage;
    Ok(OutputStats {
        error,
        advantage,
        disadvantage,
    })
}

/// Conditions a protocol's joint on an event. The result is generalized:
/// conditioning usually breaks the standard factorization.
pub fn condition_protocol(p: &Protocol, ev: &Event) -> Result<Protocol> {
    let joint = p.joint().condition(ev)?;
    Protocol::new(
        joint,
        p.x_vars.clone(),
        p.y_vars.clone(),
        p.rounds.clone(),
        Kind::Generalized,
        p.output_round,
        p.coordinates.clone(),
    )
}

/// A kernel for one appended round, keyed by full support assignments of
/// the protocol it extends.
#[derive(Debug, Clone)]
pub struct AppendKernel {
    pub sender: Sender,
    pub alphabet: Vec<String>,
    pub rows: BTreeMap<Key, Vec<(u32, Rat)>>,
}

/// Appends one round and re-designates it as the output. The result is
/// marked generalized; callers that provably preserve standardness adjust
/// the kind themselves.
pub fn append_message(p: &Protocol, kernel: &AppendKernel) -> Result<Protocol> {
    for row in kernel.rows.values() {
        check_dist(row, kernel.alphabet.len(), "appended round")?;
    }
    append_round_with(p, kernel.sender, kernel.alphabet.clone(), Kind::Generalized, |key| {
        kernel
            .rows
            .get(key)
            .cloned()
            .ok_or_else(|| Error::MalformedKernel("appended round misses a support point".into()))
    })
}

/// Appends a deterministic bit round computed from each support point.
pub(crate) fn append_bit(
    p: &Protocol,
    sender: Sender,
    kind: Kind,
    mut bit: impl FnMut(&[u32]) -> u8,
) -> Result<Protocol> {
    let alphabet = vec!["0".to_string(), "1".to_string()];
    append_round_with(p, sender, alphabet, kind, |key| {
        Ok(vec![(bit(key) as u32, Rat::one())])
    })
}

pub(crate) fn append_round_with(
    p: &Protocol,
    sender: Sender,
    alphabet: Vec<String>,
    kind: Kind,
    mut rows: impl FnMut(&[u32]) -> Result<Vec<(u32, Rat)>>,
) -> Result<Protocol> {
    if sender == Sender::Public {
        return Err(Error::InvalidInput("appended rounds need a sending party".into()));
    }
    let new_round = p.last_round() + 1;
    let mut vars = p.joint().vars().to_vec();
    vars.push(Variable {
        name: round_var(new_round),
        alphabet: alphabet.clone(),
    });
    let mut entries = Vec::new();
    for (key, m) in p.joint().support() {
        for (sym, q) in rows(key)? {
            if q.is_zero() {
                continue;
            }
            if sym as usize >= alphabet.len() {
                return Err(Error::MalformedKernel("appended round symbol out of range".into()));
            }
            let mut k = key.to_vec();
            k.push(sym);
            entries.push((k, m * q));
        }
    }
    let joint = JointTable::new(vars, entries)?;
    let mut rounds = p.rounds.clone();
    rounds.push(RoundMeta {
        index: new_round,
        sender,
        alphabet,
    });
    Protocol::new(
        joint,
        p.x_vars.clone(),
        p.y_vars.clone(),
        rounds,
        kind,
        new_round,
        p.coordinates.clone(),
    )
}

/// Splits coordinates on the label character right after `prefix`.
pub fn split_coords(p: &Protocol, split: &SplitSpec) -> Result<(Vec<Coordinate>, Vec<Coordinate>)> {
    let pre = &split.prefix;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for c in p.coordinates() {
        if !c.label.starts_with(pre.as_str()) || c.label.len() <= pre.len() {
            return Err(Error::InvalidInput(format!(
                "coordinate `{}` does not extend prefix `{pre}`",
                c.label
            )));
        }
        match c.label.as_bytes()[pre.len()] {
            b'0' => left.push(c.clone()),
            b'1' => right.push(c.clone()),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "coordinate `{}` is not binary past prefix `{pre}`",
                    c.label
                )))
            }
        }
    }
    if left.is_empty() || left.len() != right.len() {
        return Err(Error::OddCoordinateCount(format!(
            "{} left vs {} right under `{pre}`",
            left.len(),
            right.len()
        )));
    }
    Ok((left, right))
}

fn push_detail_cap(rep: &mut VerdictReport, shown: &mut usize, id: String, v: &Rat, note: String) {
    const DETAIL_CAP: usize = 16;
    if *shown < DETAIL_CAP {
        rep.check_eq_exact(id, v, &Rat::zero(), note);
        *shown += 1;
    }
}

/// Requires `mu` to range over exactly the protocol's inputs, x variables
/// first, with matching alphabets.
pub(crate) fn check_reference_input(p: &Protocol, mu: &JointTable) -> Result<()> {
    let mu_names: Vec<&str> = mu.vars().iter().map(|v| v.name.as_str()).collect();
    let want: Vec<&str> = p.x_vars.iter().chain(&p.y_vars).map(|s| s.as_str()).collect();
    if mu_names != want {
        return Err(Error::AlphabetMismatch(
            "reference input must range over the protocol's x then y variables".into(),
        ));
    }
    for v in mu.vars() {
        if p.joint().var(&v.name)?.alphabet != v.alphabet {
            return Err(Error::AlphabetMismatch(format!(
                "reference input variable `{}` has a different alphabet",
                v.name
            )));
        }
    }
    Ok(())
}

/// Checks the rectangle property of `p` against the reference input `mu`:
/// for every transcript, the likelihood ratio h(x,y) = π(x,y,m)/μ(x,y)
/// factors as g₁(x)·g₂(y) across the whole μ-support (zero cells included).
pub fn rectangle_check(p: &Protocol, mu: &JointTable) -> Result<VerdictReport> {
    let joint = p.joint();
    let nx = p.x_vars.len();
    check_reference_input(p, mu)?;

    let x_idxs = p.x_indices();
    let y_idxs = p.y_indices();
    let m_idxs = p.round_indices(p.last_round());
    let mu_cells: Vec<(Key, Key, &Rat)> = mu
        .support()
        .map(|(k, w)| {
            (
                k[..nx].to_vec().into_boxed_slice(),
                k[nx..].to_vec().into_boxed_slice(),
                w,
            )
        })
        .collect();

    let mut rep = VerdictReport::new();
    let mut worst = Rat::zero();
    let mut shown = 0usize;
    for (m_key, members) in joint.group_by(&m_idxs) {
        let mut h: BTreeMap<(Key, Key), Rat> = BTreeMap::new();
        for &(key, mass) in &members {
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
            h.insert((xk, yk), mass / w);
        }
        let v = rank1_violation(&h, &mu_cells);
        if !v.is_zero() {
            let syms: Vec<&str> = m_key
                .iter()
                .zip(m_idxs.iter())
                .map(|(&s, &i)| joint.vars()[i].alphabet[s as usize].as_str())
                .collect();
            push_detail_cap(
                &mut rep,
                &mut shown,
                format!("rect/transcript[{}]", syms.join(",")),
                &v,
                "h does not factor as g1(x)·g2(y)".into(),
            );
            if v > worst {
                worst = v;
            }
        }
    }
    rep.check_eq_exact(
        "rect/summary",
        &worst,
        &Rat::zero(),
        "max factorization deviation over all transcripts",
    );
    Ok(rep.finish())
}

/// Max |h − g₁·g₂| over the μ-support cells, with g's fixed by a spanning
/// tree of the positive cells per connected component.
fn rank1_violation(h: &BTreeMap<(Key, Key), Rat>, mu_cells: &[(Key, Key, &Rat)]) -> Rat {
    let mut row_adj: BTreeMap<Key, Vec<(Key, Rat)>> = BTreeMap::new();
    let mut col_adj: BTreeMap<Key, Vec<(Key, Rat)>> = BTreeMap::new();
    for ((xk, yk), v) in h {
        row_adj.entry(xk.clone()).or_default().push((yk.clone(), v.clone()));
        col_adj.entry(yk.clone()).or_default().push((xk.clone(), v.clone()));
    }
    let mut g1: BTreeMap<Key, Rat> = BTreeMap::new();
    let mut g2: BTreeMap<Key, Rat> = BTreeMap::new();
    let starts: Vec<Key> = row_adj.keys().cloned().collect();
    for start in starts {
        if g1.contains_key(&start) {
            continue;
        }
        g1.insert(start.clone(), Rat::one());
        let mut queue: Vec<(bool, Key)> = vec![(true, start)];
        while let Some((is_row, k)) = queue.pop() {
            if is_row {
                let gr = g1.get(&k).expect("queued rows are assigned").clone();
                for (yk, v) in row_adj.get(&k).into_iter().flatten() {
                    if !g2.contains_key(yk) {
                        g2.insert(yk.clone(), v / &gr);
                        queue.push((false, yk.clone()));
                    }
                }
            } else {
                let gc = g2.get(&k).expect("queued cols are assigned").clone();
                for (xk, v) in col_adj.get(&k).into_iter().flatten() {
                    if !g1.contains_key(xk) {
                        g1.insert(xk.clone(), v / &gc);
                        queue.push((true, xk.clone()));
                    }
                }
            }
        }
    }
    let zero = Rat::zero();
    let mut worst = Rat::zero();
    for (xk, yk, _) in mu_cells {
        let hv = h.get(&(xk.clone(), yk.clone())).unwrap_or(&zero);
        let a = g1.get(xk).unwrap_or(&zero);
        let b = g2.get(yk).unwrap_or(&zero);
        let v = (hv - a * b).abs();
        if v > worst {
            worst = v;
        }
    }
    worst
}

/// Checks the partial rectangle property for a split: the right-half x
/// inputs are conditionally independent of the left-half y inputs given
/// the left-half x's, right-half y's and the full transcript.
pub fn partial_rectangle_check(p: &Protocol, split: &SplitSpec) -> Result<VerdictReport> {
    let (left, right) = split_coords(p, split)?;
    let joint = p.joint();
    let idx_of = |name: &str| joint.var_index(name).expect("validated");
    let mut given: Vec<usize> = left.iter().map(|c| idx_of(&c.x_var)).collect();
    given.extend(right.iter().map(|c| idx_of(&c.y_var)));
    given.extend(p.round_indices(p.last_round()));
    let a_idxs: Vec<usize> = right.iter().map(|c| idx_of(&c.x_var)).collect();
    let b_idxs: Vec<usize> = left.iter().map(|c| idx_of(&c.y_var)).collect();

    let mut rep = VerdictReport::new();
    let mut worst = Rat::zero();
    let mut shown = 0usize;
    for (g_key, members) in joint.group_by(&given) {
        let v = independence_violation(&members, &a_idxs, &b_idxs);
        if !v.is_zero() {
            push_detail_cap(
                &mut rep,
                &mut shown,
                format!("partial_rect/group[{g_key:?}]"),
                &v,
                "x-right and y-left are correlated here".into(),
            );
            if v > worst {
                worst = v;
            }
        }
    }
    rep.check_eq_exact(
        "partial_rect/summary",
        &worst,
        &Rat::zero(),
        "max conditional dependence across groups",
    );
    Ok(rep.finish())
}

/// Max violation reported by a finished rectangle/partial-rectangle report.
pub fn report_violation(rep: &VerdictReport) -> f64 {
    rep.items
        .iter()
        .map(|i| i.gap.abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{noisy_single, p1, two_round, uniform_mu};
    use crate::rational::{rat, rat_one};

    #[test]
    fn p1_information_cost_and_stats() {
        let (p, f, _mu) = p1();
        assert!((information_cost(&p) - 1.5).abs() < 1e-9);
        let stats = output_stats(&p, &f).unwrap();
        assert_eq!(stats.error, rat(0, 1));
        assert_eq!(stats.advantage, rat_one());
        assert_eq!(stats.disadvantage, rat(0, 1));
        assert!(validate_standard(&p).pass);
    }

    #[test]
    fn x_public_variant_halves_the_cost() {
        // Same AND computation, but x is broadcast in the public round:
        // only Bob's answer still carries information, I = H(AND|X) = 1/2.
        let mu = uniform_mu(&["0", "1"], &["0", "1"]);
        let mut entries = Vec::new();
        for (key, w) in mu.support() {
            let (x, y) = (key[0], key[1]);
            entries.push((vec![x, y, x, x & y], w.clone()));
        }
        let joint = JointTable::new(
            vec![
                Variable::binary("x"),
                Variable::binary("y"),
                Variable::binary("m0"),
                Variable::binary("m1"),
            ],
            entries,
        )
        .unwrap();
        let p = Protocol::new(
            joint,
            vec!["x".into()],
            vec!["y".into()],
            vec![
                RoundMeta {
                    index: 0,
                    sender: Sender::Public,
                    alphabet: vec!["0".into(), "1".into()],
                },
                RoundMeta {
                    index: 1,
                    sender: Sender::Alice,
                    alphabet: vec!["0".into(), "1".into()],
                },
            ],
            Kind::Generalized,
            1,
            vec![Coordinate {
                label: String::new(),
                x_var: "x".into(),
                y_var: "y".into(),
            }],
        )
        .unwrap();
        assert!((information_cost(&p) - 0.5).abs() < 1e-9);
        let rep = validate_standard(&p);
        assert!(!rep.pass, "correlated public round must fail");
        assert!(rep.failures().contains(&"factorization/round0"));
    }

    #[test]
    fn compile_extract_round_trip_is_exact() {
        let (p, _, _) = p1();
        let spec = extract_spec(&p).unwrap();
        let q = compile_standard(&spec).unwrap();
        assert_eq!(p.joint(), q.joint());
        let noisy = noisy_single(rat(1, 20)).unwrap();
        let spec = extract_spec(&noisy).unwrap();
        let q = compile_standard(&spec).unwrap();
        assert_eq!(noisy.joint(), q.joint());
    }

    #[test]
    fn noisy_single_stats() {
        let p = noisy_single(rat(1, 20)).unwrap();
        let stats = output_stats(&p, &FunctionTable::and()).unwrap();
        assert_eq!(stats.error, rat(1, 20));
        assert_eq!(stats.advantage, rat(9, 10));
        assert_eq!(stats.disadvantage, rat(1, 10));
        assert!(validate_standard(&p).pass);
    }

    #[test]
    fn conditioning_p1_stays_standard_but_noisy_first_does_not() {
        let (p, _, _) = p1();
        // P1's messages are deterministic given the visible context, so any
        // conditioning still passes the factorization check.
        let ev = Event::from_predicate(p.joint(), &["m1", "y"], |k| k[0] == k[1]).unwrap();
        let cond = condition_protocol(&p, &ev).unwrap();
        assert!(validate_standard(&cond).pass);

        // With a noisy first message, conditioning on {m1 = y} correlates
        // Alice's round with y.
        let noisy = two_round(
            &FunctionTable::and(),
            uniform_mu(&["0", "1"], &["0", "1"]),
            rat(1, 4),
            rat(1, 20),
        )
        .unwrap();
        let ev = Event::from_predicate(noisy.joint(), &["m1", "y"], |k| k[0] == k[1]).unwrap();
        let cond = condition_protocol(&noisy, &ev).unwrap();
        let rep = validate_standard(&cond);
        assert!(!rep.pass);
        assert!(rep.failures().contains(&"factorization/round1"));

        // Conditioning on an (x, m2)-measurable event correlates Bob's
        // noisy answer with x.
        let ev = Event::from_predicate(noisy.joint(), &["x", "m2"], |k| k[0] == 0 || k[1] == 1).unwrap();
        let cond = condition_protocol(&noisy, &ev).unwrap();
        let rep = validate_standard(&cond);
        assert!(!rep.pass);
        assert!(rep.failures().contains(&"factorization/round2"));
    }

    #[test]
    fn rectangle_check_accepts_standard_and_rejects_diagonal() {
        let (p, _, mu) = p1();
        let rep = rectangle_check(&p, &mu).unwrap();
        assert!(rep.pass, "standard protocols have the rectangle property");

        // Diagonal correlation with a trivial transcript cannot factor.
        let joint = JointTable::from_symbols(
            vec![
                Variable::binary("x"),
                Variable::binary("y"),
                Variable::unit("m0"),
                Variable::unit("m1"),
            ],
            vec![
                (vec!["0", "0", "-", "-"], rat(1, 2)),
                (vec!["1", "1", "-", "-"], rat(1, 2)),
            ],
        )
        .unwrap();
        let diag = Protocol::new(
            joint,
            vec!["x".into()],
            vec!["y".into()],
            vec![
                RoundMeta {
                    index: 0,
                    sender: Sender::Public,
                    alphabet: vec!["-".into()],
                },
                RoundMeta {
                    index: 1,
                    sender: Sender::Alice,
                    alphabet: vec!["-".into()],
                },
            ],
            Kind::Generalized,
            1,
            vec![Coordinate {
                label: String::new(),
                x_var: "x".into(),
                y_var: "y".into(),
            }],
        )
        .unwrap();
        let rep = rectangle_check(&diag, &mu).unwrap();
        assert!(!rep.pass, "diagonal support over full-support mu is not a rectangle");

        let bad_mu = JointTable::from_symbols(
            vec![Variable::binary("x"), Variable::binary("y")],
            vec![
                (vec!["0", "0"], rat(1, 2)),
                (vec!["0", "1"], rat(1, 2)),
            ],
        )
        .unwrap();
        assert!(matches!(
            rectangle_check(&p, &bad_mu),
            Err(Error::NonAbsolutelyContinuous(_))
        ));
    }

    #[test]
    fn appended_transcript_bit_costs_nothing() {
        let p = noisy_single(rat(1, 20)).unwrap();
        let base = information_cost(&p);
        let m1 = p.joint().var_index("m1").unwrap();
        let m2 = p.joint().var_index("m2").unwrap();
        let q = append_bit(&p, Sender::Alice, Kind::Generalized, |key| {
            (key[m1] ^ key[m2]) as u8
        })
        .unwrap();
        assert_eq!(q.output_round(), 3, "appended round becomes the output");
        assert!((information_cost(&q) - base).abs() < 1e-9);
    }

    #[test]
    fn xor_power_truth_table() {
        let f = FunctionTable::and();
        let f2 = f.xor_power(2).unwrap();
        assert_eq!(f2.x_alphabet.len(), 4);
        // x = (1,1), y = (1,0): AND(1,1) ⊕ AND(1,0) = 1.
        let x = 3u32; // "1∘1"
        let y = 2u32; // "1∘0"
        assert_eq!(f2.value(x, y), 1);
        assert_eq!(f2.value(3, 3), 0);
    }

    #[test]
    fn split_coords_validation() {
        let (p, _, _) = p1();
        assert!(matches!(
            split_coords(&p, &SplitSpec::at("")),
            Err(Error::InvalidInput(_))
        ));
    }
}
