//! Finite joint distributions over named variables, with exact masses.
//!
//! A [`JointTable`] stores only positive masses, keyed by symbol indices
//! into each variable's alphabet. Construction enforces the two table
//! invariants: every mass is nonnegative and the total is exactly 1.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Signed, Zero};

use crate::rational::{format_rat, Rat};
use crate::{Error, Result};

/// Symbol used when composing several symbols into one.
pub const COMPOSE: &str = "∘";

/// A named variable with a finite ordered alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub alphabet: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, alphabet: &[&str]) -> Self {
        Variable {
            name: name.into(),
            alphabet: alphabet.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// A `{0,1}`-valued variable.
    pub fn binary(name: impl Into<String>) -> Self {
        Variable::new(name, &["0", "1"])
    }

    /// A one-symbol placeholder variable.
    pub fn unit(name: impl Into<String>) -> Self {
        Variable::new(name, &["-"])
    }
}

/// An assignment of symbol indices, one per variable.
pub type Key = Box<[u32]>;

/// A joint distribution over a fixed variable list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointTable {
    vars: Vec<Variable>,
    masses: BTreeMap<Key, Rat>,
}

impl JointTable {
    /// Builds a table from index-keyed entries. Zero masses are dropped;
    /// negative masses, duplicate keys, out-of-range indices, and totals
    /// other than exactly 1 are rejected.
    pub fn new(vars: Vec<Variable>, entries: Vec<(Vec<u32>, Rat)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in &vars {
            if !seen.insert(v.name.clone()) {
                return Err(Error::InvalidInput(format!("duplicate variable `{}`", v.name)));
            }
            if v.alphabet.is_empty() {
                return Err(Error::InvalidInput(format!("empty alphabet for `{}`", v.name)));
            }
            let mut syms = BTreeSet::new();
            for s in &v.alphabet {
                if !syms.insert(s) {
                    return Err(Error::InvalidInput(format!(
                        "duplicate symbol `{s}` in alphabet of `{}`",
                        v.name
                    )));
                }
            }
        }
        let mut masses: BTreeMap<Key, Rat> = BTreeMap::new();
        let mut total = Rat::zero();
        for (key, p) in entries {
            if key.len() != vars.len() {
                return Err(Error::InvalidInput(format!(
                    "assignment arity {} does not match {} variables",
                    key.len(),
                    vars.len()
                )));
            }
            for (i, &s) in key.iter().enumerate() {
                if s as usize >= vars[i].alphabet.len() {
                    return Err(Error::OutOfRange(format!(
                        "symbol index {s} for variable `{}`",
                        vars[i].name
                    )));
                }
            }
            if p.is_negative() {
                return Err(Error::OutOfRange(format!("negative mass {}", format_rat(&p))));
            }
            if p.is_zero() {
                continue;
            }
            total += &p;
            if masses.insert(key.into_boxed_slice(), p).is_some() {
                return Err(Error::InvalidInput("duplicate assignment".into()));
            }
        }
        if !total.is_one() {
            return Err(Error::InvalidInput(format!(
                "masses sum to {}, expected exactly 1",
                format_rat(&total)
            )));
        }
        Ok(JointTable { vars, masses })
    }

    /// Builds a table from symbol-named entries.
    pub fn from_symbols(vars: Vec<Variable>, entries: Vec<(Vec<&str>, Rat)>) -> Result<Self> {
        let mut indexed = Vec::with_capacity(entries.len());
        for (syms, p) in entries {
            if syms.len() != vars.len() {
                return Err(Error::InvalidInput(format!(
                    "assignment arity {} does not match {} variables",
                    syms.len(),
                    vars.len()
                )));
            }
            let mut key = Vec::with_capacity(syms.len());
            for (v, s) in vars.iter().zip(&syms) {
                let idx = v
                    .alphabet
                    .iter()
                    .position(|a| a == s)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown symbol `{s}` for `{}`", v.name)))?;
                key.push(idx as u32);
            }
            indexed.push((key, p));
        }
        JointTable::new(vars, indexed)
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Result<&Variable> {
        self.vars
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.into()))
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.into()))
    }

    pub fn indices(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.var_index(n)).collect()
    }

    pub fn entry_count(&self) -> usize {
        self.masses.len()
    }

    /// Iterates the support in key order.
    pub fn support(&self) -> impl Iterator<Item = (&[u32], &Rat)> {
        self.masses.iter().map(|(k, v)| (&k[..], v))
    }

    pub fn get(&self, key: &[u32]) -> Option<&Rat> {
        self.masses.get(key)
    }

    /// Mass at `key`, zero when off-support.
    pub fn mass(&self, key: &[u32]) -> Rat {
        self.masses.get(key).cloned().unwrap_or_else(Rat::zero)
    }

    /// Restriction of `key` to the given positions.
    pub fn sub_key(key: &[u32], idxs: &[usize]) -> Key {
        idxs.iter().map(|&i| key[i]).collect()
    }

    /// Marginal masses over the given positions.
    pub fn project(&self, idxs: &[usize]) -> BTreeMap<Key, Rat> {
        let mut out: BTreeMap<Key, Rat> = BTreeMap::new();
        for (key, p) in self.support() {
            let sub = Self::sub_key(key, idxs);
            *out.entry(sub).or_insert_with(Rat::zero) += p;
        }
        out
    }

    /// Support entries grouped by their restriction to the given positions.
    pub fn group_by<'a>(&'a self, idxs: &[usize]) -> BTreeMap<Key, Vec<(&'a [u32], &'a Rat)>> {
        let mut out: BTreeMap<Key, Vec<(&[u32], &Rat)>> = BTreeMap::new();
        for (key, p) in self.support() {
            out.entry(Self::sub_key(key, idxs)).or_default().push((key, p));
        }
        out
    }

    /// Marginal distribution over the named variables, in the given order.
    pub fn marginal(&self, names: &[&str]) -> Result<JointTable> {
        let idxs = self.indices(names)?;
        let vars = idxs.iter().map(|&i| self.vars[i].clone()).collect();
        let entries = self
            .project(&idxs)
            .into_iter()
            .map(|(k, p)| (k.into_vec(), p))
            .collect();
        JointTable::new(vars, entries)
    }

    /// Probability of an event.
    pub fn event_prob(&self, ev: &Event) -> Result<Rat> {
        let ev = ev.resolve(self)?;
        let mut total = Rat::zero();
        for (key, p) in self.support() {
            if ev.accepts(key) {
                total += p;
            }
        }
        Ok(total)
    }

    /// Conditions on an event and renormalizes exactly.
    pub fn condition(&self, ev: &Event) -> Result<JointTable> {
        let resolved = ev.resolve(self)?;
        let mut kept = Vec::new();
        let mut total = Rat::zero();
        for (key, p) in self.support() {
            if resolved.accepts(key) {
                total += p;
                kept.push((key.to_vec(), p.clone()));
            }
        }
        if total.is_zero() {
            return Err(Error::ZeroProbabilityEvent);
        }
        for (_, p) in &mut kept {
            *p /= &total;
        }
        JointTable::new(self.vars.clone(), kept)
    }

    /// Independent product; variable names must be disjoint.
    pub fn product(&self, other: &JointTable) -> Result<JointTable> {
        for v in &other.vars {
            if self.vars.iter().any(|w| w.name == v.name) {
                return Err(Error::InvalidInput(format!(
                    "product would duplicate variable `{}`",
                    v.name
                )));
            }
        }
        let mut vars = self.vars.clone();
        vars.extend(other.vars.iter().cloned());
        let mut entries = Vec::with_capacity(self.entry_count() * other.entry_count());
        for (k1, p1) in self.support() {
            for (k2, p2) in other.support() {
                let mut key = k1.to_vec();
                key.extend_from_slice(k2);
                entries.push((key, p1 * p2));
            }
        }
        JointTable::new(vars, entries)
    }

    /// Same distribution with one variable renamed.
    pub fn rename_var(&self, old: &str, new: &str) -> Result<JointTable> {
        let idx = self.var_index(old)?;
        if self.vars.iter().any(|v| v.name == new) {
            return Err(Error::InvalidInput(format!("variable `{new}` already exists")));
        }
        let mut vars = self.vars.clone();
        vars[idx].name = new.into();
        let entries = self.support().map(|(k, p)| (k.to_vec(), p.clone())).collect();
        JointTable::new(vars, entries)
    }

    /// Symbol names of an assignment, for display.
    pub fn symbols_of(&self, key: &[u32]) -> Vec<&str> {
        key.iter()
            .zip(&self.vars)
            .map(|(&s, v)| v.alphabet[s as usize].as_str())
            .collect()
    }

    /// Index of a symbol within a variable's alphabet.
    pub fn symbol_index(&self, var: &str, symbol: &str) -> Result<u32> {
        let v = self.var(var)?;
        v.alphabet
            .iter()
            .position(|s| s == symbol)
            .map(|i| i as u32)
            .ok_or_else(|| Error::InvalidInput(format!("unknown symbol `{symbol}` for `{var}`")))
    }
}

/// An event over a subset of a table's variables: an explicit set of
/// accepted partial assignments.
#[derive(Debug, Clone)]
pub struct Event {
    vars: Vec<String>,
    sizes: Vec<usize>,
    accepted: BTreeSet<Key>,
}

impl Event {
    /// Enumerates the full cartesian alphabet of the listed variables and
    /// keeps the assignments the predicate accepts.
    pub fn from_predicate(
        t: &JointTable,
        vars: &[&str],
        mut pred: impl FnMut(&[u32]) -> bool,
    ) -> Result<Event> {
        let idxs = t.indices(vars)?;
        let sizes: Vec<usize> = idxs.iter().map(|&i| t.vars()[i].alphabet.len()).collect();
        let mut accepted = BTreeSet::new();
        for key in cartesian(&sizes) {
            if pred(&key) {
                accepted.insert(key.into_boxed_slice());
            }
        }
        Ok(Event {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            sizes,
            accepted,
        })
    }

    /// Event accepting exactly the listed symbol assignments.
    pub fn from_symbols(t: &JointTable, vars: &[&str], rows: &[Vec<&str>]) -> Result<Event> {
        let idxs = t.indices(vars)?;
        let sizes: Vec<usize> = idxs.iter().map(|&i| t.vars()[i].alphabet.len()).collect();
        let mut accepted = BTreeSet::new();
        for row in rows {
            if row.len() != vars.len() {
                return Err(Error::InvalidInput("event row arity mismatch".into()));
            }
            let mut key = Vec::with_capacity(row.len());
            for (v, s) in vars.iter().zip(row) {
                key.push(t.symbol_index(v, s)?);
            }
            accepted.insert(key.into_boxed_slice());
        }
        Ok(Event {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            sizes,
            accepted,
        })
    }

    /// Event from pre-indexed accepted rows (indices must match the
    /// alphabets of the table the event will be resolved against).
    pub fn from_keys(vars: Vec<String>, sizes: Vec<usize>, accepted: BTreeSet<Key>) -> Event {
        Event { vars, sizes, accepted }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn accepted(&self) -> &BTreeSet<Key> {
        &self.accepted
    }

    /// Binds the event to a table's variable positions, checking that the
    /// alphabets still have the sizes the event was built against.
    pub fn resolve<'e>(&'e self, t: &JointTable) -> Result<ResolvedEvent<'e>> {
        let names: Vec<&str> = self.vars.iter().map(|s| s.as_str()).collect();
        let idxs = t.indices(&names)?;
        for (pos, &i) in idxs.iter().enumerate() {
            if t.vars()[i].alphabet.len() != self.sizes[pos] {
                return Err(Error::AlphabetMismatch(format!(
                    "event variable `{}` now has a different alphabet",
                    self.vars[pos]
                )));
            }
        }
        Ok(ResolvedEvent {
            idxs,
            accepted: &self.accepted,
        })
    }
}

/// An [`Event`] bound to one table's variable positions.
pub struct ResolvedEvent<'e> {
    idxs: Vec<usize>,
    accepted: &'e BTreeSet<Key>,
}

impl ResolvedEvent<'_> {
    pub fn accepts(&self, key: &[u32]) -> bool {
        let sub: Vec<u32> = self.idxs.iter().map(|&i| key[i]).collect();
        self.accepted.contains(sub.as_slice())
    }
}

/// A `{0,1}`-valued expression over a table's variables.
#[derive(Debug, Clone)]
pub enum BitVar {
    /// A binary variable; its alphabet must be exactly `["0","1"]`.
    Var(String),
    /// A total truth table over the listed variables.
    Apply {
        vars: Vec<String>,
        alphabets: Vec<Vec<String>>,
        table: BTreeMap<Key, u8>,
    },
    /// XOR of the parts.
    Xor(Vec<BitVar>),
}

impl BitVar {
    pub fn xor2(a: BitVar, b: BitVar) -> BitVar {
        BitVar::Xor(vec![a, b])
    }

    /// Binds the expression to a table, validating alphabets and totality.
    pub fn compile(&self, t: &JointTable) -> Result<CompiledBit> {
        let mut atoms = Vec::new();
        self.collect(t, &mut atoms)?;
        Ok(CompiledBit { atoms })
    }

    fn collect(&self, t: &JointTable, atoms: &mut Vec<Atom>) -> Result<()> {
        match self {
            BitVar::Var(name) => {
                let idx = t.var_index(name)?;
                if t.vars()[idx].alphabet != ["0", "1"] {
                    return Err(Error::AlphabetMismatch(format!(
                        "bit variable `{name}` must have alphabet [0,1]"
                    )));
                }
                atoms.push(Atom::Var(idx));
            }
            BitVar::Apply { vars, alphabets, table } => {
                let names: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
                let idxs = t.indices(&names)?;
                let mut size = 1usize;
                for (pos, &i) in idxs.iter().enumerate() {
                    if t.vars()[i].alphabet != alphabets[pos] {
                        return Err(Error::AlphabetMismatch(format!(
                            "function argument `{}` has alphabet {:?}, table expects {:?}",
                            vars[pos],
                            t.vars()[i].alphabet,
                            alphabets[pos]
                        )));
                    }
                    size *= alphabets[pos].len();
                }
                if table.len() != size {
                    return Err(Error::InvalidInput(format!(
                        "truth table over {vars:?} is not total ({} of {size} rows)",
                        table.len()
                    )));
                }
                atoms.push(Atom::Table {
                    idxs,
                    map: table.clone(),
                });
            }
            BitVar::Xor(parts) => {
                for p in parts {
                    p.collect(t, atoms)?;
                }
            }
        }
        Ok(())
    }
}

enum Atom {
    Var(usize),
    Table { idxs: Vec<usize>, map: BTreeMap<Key, u8> },
}

/// A [`BitVar`] bound to one table's variable positions.
pub struct CompiledBit {
    atoms: Vec<Atom>,
}

impl CompiledBit {
    pub fn eval(&self, key: &[u32]) -> u8 {
        let mut acc = 0u8;
        for atom in &self.atoms {
            acc ^= match atom {
                Atom::Var(i) => key[*i] as u8,
                Atom::Table { idxs, map } => {
                    let sub: Vec<u32> = idxs.iter().map(|&i| key[i]).collect();
                    *map.get(sub.as_slice()).expect("truth table is total")
                }
            };
        }
        acc
    }
}

/// Iterator over all index assignments for the given alphabet sizes,
/// last position varying fastest.
pub fn cartesian(sizes: &[usize]) -> Cartesian {
    Cartesian {
        sizes: sizes.to_vec(),
        next: if sizes.contains(&0) {
            None
        } else {
            Some(vec![0; sizes.len()])
        },
    }
}

pub struct Cartesian {
    sizes: Vec<usize>,
    next: Option<Vec<u32>>,
}

impl Iterator for Cartesian {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let current = self.next.clone()?;
        let mut bump = current.clone();
        let mut done = true;
        for i in (0..bump.len()).rev() {
            if (bump[i] as usize) + 1 < self.sizes[i] {
                bump[i] += 1;
                for b in bump.iter_mut().skip(i + 1) {
                    *b = 0;
                }
                done = false;
                break;
            }
        }
        self.next = if done || bump.is_empty() { None } else { Some(bump) };
        Some(current)
    }
}

/// Cartesian product of alphabets with symbols joined by [`COMPOSE`];
/// index order matches [`cartesian`] (last part fastest).
pub fn composed_alphabet(parts: &[&[String]]) -> Vec<String> {
    let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
    cartesian(&sizes)
        .map(|key| {
            key.iter()
                .enumerate()
                .map(|(i, &s)| parts[i][s as usize].as_str())
                .collect::<Vec<_>>()
                .join(COMPOSE)
        })
        .collect()
}

/// Index of a composed symbol from its part indices.
pub fn compose_index(sizes: &[usize], parts: &[u32]) -> u32 {
    debug_assert_eq!(sizes.len(), parts.len());
    let mut idx = 0usize;
    for (s, &p) in sizes.iter().zip(parts) {
        idx = idx * s + p as usize;
    }
    idx as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_one};

    fn xy_table() -> JointTable {
        // AND-correlated pair: mass 1/4 each on the four (x, y) cells.
        JointTable::from_symbols(
            vec![Variable::binary("x"), Variable::binary("y")],
            vec![
                (vec!["0", "0"], rat(1, 4)),
                (vec!["0", "1"], rat(1, 4)),
                (vec!["1", "0"], rat(1, 4)),
                (vec!["1", "1"], rat(1, 4)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn construction_rejects_bad_masses() {
        let vars = vec![Variable::binary("x")];
        assert!(matches!(
            JointTable::new(vars.clone(), vec![(vec![0], rat(1, 2))]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            JointTable::new(vars.clone(), vec![(vec![0], rat(3, 2)), (vec![1], rat(-1, 2))]),
            Err(Error::OutOfRange(_))
        ));
        assert!(matches!(
            JointTable::new(vars.clone(), vec![(vec![0], rat(1, 2)), (vec![0], rat(1, 2))]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            JointTable::new(vars, vec![(vec![2], rat_one())]),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn marginal_and_condition() {
        let t = xy_table();
        let mx = t.marginal(&["x"]).unwrap();
        assert_eq!(mx.mass(&[0]), rat(1, 2));

        let ev = Event::from_symbols(&t, &["x"], &[vec!["1"]]).unwrap();
        assert_eq!(t.event_prob(&ev).unwrap(), rat(1, 2));
        let cond = t.condition(&ev).unwrap();
        assert_eq!(cond.mass(&[1, 0]), rat(1, 2));
        assert_eq!(cond.mass(&[0, 0]), rat(0, 1));

        let never = Event::from_predicate(&t, &["x", "y"], |_| false).unwrap();
        assert!(matches!(t.condition(&never), Err(Error::ZeroProbabilityEvent)));
    }

    #[test]
    fn product_is_independent() {
        let t = xy_table();
        let a = t.marginal(&["x"]).unwrap();
        let b = t.marginal(&["y"]).unwrap().rename_var("y", "z").unwrap();
        let prod = a.product(&b).unwrap();
        assert_eq!(prod.mass(&[1, 1]), rat(1, 4));
        assert!(a.product(&a).is_err(), "duplicate names must be rejected");
    }

    #[test]
    fn bitvar_eval_and_validation() {
        let t = xy_table();
        let and_table: BTreeMap<Key, u8> = vec![
            (vec![0u32, 0].into_boxed_slice(), 0u8),
            (vec![0u32, 1].into_boxed_slice(), 0),
            (vec![1u32, 0].into_boxed_slice(), 0),
            (vec![1u32, 1].into_boxed_slice(), 1),
        ]
        .into_iter()
        .collect();
        let bit = BitVar::xor2(
            BitVar::Var("x".into()),
            BitVar::Apply {
                vars: vec!["x".into(), "y".into()],
                alphabets: vec![
                    vec!["0".into(), "1".into()],
                    vec!["0".into(), "1".into()],
                ],
                table: and_table,
            },
        );
        let cb = bit.compile(&t).unwrap();
        assert_eq!(cb.eval(&[0, 0]), 0);
        assert_eq!(cb.eval(&[1, 0]), 1);
        assert_eq!(cb.eval(&[1, 1]), 0);
        assert!(BitVar::Var("missing".into()).compile(&t).is_err());
    }

    #[test]
    fn cartesian_order_and_compose() {
        let keys: Vec<Vec<u32>> = cartesian(&[2, 3]).collect();
        assert_eq!(keys.len(), 6);
        assert_eq!(keys[0], vec![0, 0]);
        assert_eq!(keys[1], vec![0, 1]);
        assert_eq!(keys[5], vec![1, 2]);
        for (i, k) in keys.iter().enumerate() {
            assert_eq!(compose_index(&[2, 3], k), i as u32);
        }
        let a = vec!["a".to_string(), "b".to_string()];
        let c = vec!["0".to_string(), "1".to_string(), "2".to_string()];
        let composed = composed_alphabet(&[&a, &c]);
        assert_eq!(composed[1], "a∘1");
        assert_eq!(composed[5], "b∘2");
    }
}
