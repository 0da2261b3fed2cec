//! Seeded random fixtures for the self-check suites. Every draw is a
//! function of (seed, stream), so suite runs are reproducible bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use num::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::protocol::{
    compile_standard, Coordinate, FunctionTable, Kernel, Protocol, PublicRound, Sender,
    StandardSpec,
};
use crate::rational::{rat, Rat};
use crate::table::{cartesian, Event, JointTable, Variable};
use crate::Result;

pub const DEFAULT_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

pub struct Gen {
    rng: ChaCha12Rng,
}

impl Gen {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.set_word_pos(0);
        Gen { rng }
    }

    fn weights(&mut self, count: usize, min: i64) -> Vec<i64> {
        loop {
            let w: Vec<i64> = (0..count).map(|_| self.rng.gen_range(min..10)).collect();
            if w.iter().any(|&x| x > 0) {
                return w;
            }
        }
    }

    /// Uniform index below `n`.
    pub fn pick(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// `count` rational masses summing exactly to one; zeros allowed.
    pub fn masses(&mut self, count: usize) -> Vec<Rat> {
        let w = self.weights(count, 0);
        let total: i64 = w.iter().sum();
        w.into_iter().map(|x| rat(x, total)).collect()
    }

    /// Like `masses`, with every entry positive.
    pub fn positive_masses(&mut self, count: usize) -> Vec<Rat> {
        let w = self.weights(count, 1);
        let total: i64 = w.iter().sum();
        w.into_iter().map(|x| rat(x, total)).collect()
    }

    /// Variables named from `names`, alphabets of 2 or 3 symbols.
    pub fn variables(&mut self, names: &[&str]) -> Vec<Variable> {
        names
            .iter()
            .map(|n| {
                let size = self.rng.gen_range(2..=3usize);
                Variable::new(*n, &["0", "1", "2"][..size])
            })
            .collect()
    }

    /// A random joint table; zero cells are dropped from the support.
    pub fn table(&mut self, vars: Vec<Variable>) -> Result<JointTable> {
        self.table_with(vars, false)
    }

    /// A random joint table with full support.
    pub fn positive_table(&mut self, vars: Vec<Variable>) -> Result<JointTable> {
        self.table_with(vars, true)
    }

    fn table_with(&mut self, vars: Vec<Variable>, positive: bool) -> Result<JointTable> {
        let sizes: Vec<usize> = vars.iter().map(|v| v.alphabet.len()).collect();
        let cells: Vec<Vec<u32>> = cartesian(&sizes).collect();
        let masses = if positive {
            self.positive_masses(cells.len())
        } else {
            self.masses(cells.len())
        };
        let entries: Vec<(Vec<u32>, Rat)> = cells
            .into_iter()
            .zip(masses)
            .filter(|(_, m)| !m.is_zero())
            .collect();
        JointTable::new(vars, entries)
    }

    pub fn bernoulli(&mut self, name: &str) -> Result<JointTable> {
        let p = self.positive_masses(2);
        JointTable::new(
            vec![Variable::binary(name)],
            vec![(vec![0], p[0].clone()), (vec![1], p[1].clone())],
        )
    }

    /// An event over `vars` whose probability is strictly between 0 and 1.
    pub fn event_on(&mut self, t: &JointTable, vars: &[&str]) -> Result<Event> {
        let idxs = t.indices(vars)?;
        let sizes: Vec<usize> = idxs.iter().map(|&i| t.vars()[i].alphabet.len()).collect();
        let cells: Vec<Vec<u32>> = cartesian(&sizes).collect();
        let groups = t.project(&idxs);
        loop {
            let mut accepted = BTreeSet::new();
            for cell in &cells {
                if self.rng.gen_bool(0.5) {
                    accepted.insert(cell.clone().into_boxed_slice());
                }
            }
            let mass: Rat = groups
                .iter()
                .filter(|(k, _)| accepted.contains(&k[..]))
                .map(|(_, m)| m.clone())
                .sum();
            if !mass.is_zero() && mass != rat(1, 1) {
                let names: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
                return Ok(Event::from_keys(names, sizes, accepted));
            }
        }
    }

    /// A random standard protocol in kernel form: one public round plus
    /// two or three message rounds with full-context kernels.
    pub fn standard_spec(&mut self, binary_output: bool) -> Result<StandardSpec> {
        let inputs = self.variables(&["x", "y"]);
        let mu = self.positive_table(inputs.clone())?;
        let pub_size = self.rng.gen_range(1..=2usize);
        let public = PublicRound {
            alphabet: (0..pub_size).map(|i| i.to_string()).collect(),
            dist: self
                .positive_masses(pub_size)
                .into_iter()
                .enumerate()
                .map(|(i, m)| (i as u32, m))
                .collect(),
        };
        let rounds = self.rng.gen_range(2..=3usize);
        let mut kernels = Vec::with_capacity(rounds);
        let mut prev_alphabets: Vec<Vec<String>> = vec![public.alphabet.clone()];
        for i in 1..=rounds {
            let sender = Sender::expected(i);
            let own = if sender == Sender::Alice { &inputs[0] } else { &inputs[1] };
            let size = if i == rounds && !binary_output {
                self.rng.gen_range(2..=3usize)
            } else {
                2
            };
            let alphabet: Vec<String> = (0..size).map(|s| s.to_string()).collect();
            let mut depends = vec![own.name.clone()];
            depends.extend((0..i).map(|r| format!("m{r}")));
            let mut ctx_sizes = vec![own.alphabet.len()];
            ctx_sizes.extend(prev_alphabets.iter().map(|a| a.len()));
            let mut rows = BTreeMap::new();
            for ctx in cartesian(&ctx_sizes) {
                let dist: Vec<(u32, Rat)> = self
                    .positive_masses(size)
                    .into_iter()
                    .enumerate()
                    .map(|(s, m)| (s as u32, m))
                    .collect();
                rows.insert(ctx.into_boxed_slice(), dist);
            }
            kernels.push(Kernel {
                sender,
                alphabet: alphabet.clone(),
                depends,
                rows,
            });
            prev_alphabets.push(alphabet);
        }
        Ok(StandardSpec {
            mu,
            x_vars: vec!["x".into()],
            y_vars: vec!["y".into()],
            coordinates: vec![Coordinate {
                label: String::new(),
                x_var: "x".into(),
                y_var: "y".into(),
            }],
            public,
            kernels,
            output_round: rounds,
        })
    }

    pub fn standard_protocol(&mut self, binary_output: bool) -> Result<Protocol> {
        compile_standard(&self.standard_spec(binary_output)?)
    }

    /// A random boolean function table over `p`'s single-coordinate inputs.
    pub fn function(&mut self, p: &Protocol) -> Result<FunctionTable> {
        let x_al = p.joint().var(&p.x_vars()[0])?.alphabet.clone();
        let y_al = p.joint().var(&p.y_vars()[0])?.alphabet.clone();
        let values: Vec<u8> = (0..x_al.len() * y_al.len())
            .map(|_| self.rng.gen_range(0..2u8))
            .collect();
        FunctionTable::new("g", x_al, y_al, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::validate_standard;

    #[test]
    fn draws_are_reproducible() {
        let mut a = Gen::new(DEFAULT_SEED, 3);
        let mut b = Gen::new(DEFAULT_SEED, 3);
        assert_eq!(a.masses(5), b.masses(5));
        let ta = a.table(a_vars()).unwrap();
        let tb = b.table(a_vars()).unwrap();
        assert_eq!(ta, tb);
        let mut c = Gen::new(DEFAULT_SEED, 4);
        assert_ne!(a.masses(5), c.masses(5));
    }

    fn a_vars() -> Vec<Variable> {
        vec![Variable::binary("a"), Variable::binary("b")]
    }

    #[test]
    fn masses_sum_to_one() {
        let mut g = Gen::new(1, 0);
        for count in 1..6 {
            let m: Rat = g.masses(count).into_iter().sum();
            assert_eq!(m, rat(1, 1));
        }
    }

    #[test]
    fn generated_protocols_are_standard() {
        for stream in 0..6 {
            let mut g = Gen::new(DEFAULT_SEED, stream);
            let p = g.standard_protocol(stream % 2 == 0).unwrap();
            let v = validate_standard(&p);
            assert!(v.pass, "stream {stream}: {}", v.lines());
        }
    }

    #[test]
    fn events_are_nondegenerate() {
        let mut g = Gen::new(DEFAULT_SEED, 9);
        let t = g.positive_table(a_vars()).unwrap();
        for _ in 0..10 {
            let ev = g.event_on(&t, &["a"]).unwrap();
            let resolved = ev.resolve(&t).unwrap();
            let mass: Rat = t
                .support()
                .filter(|(k, _)| resolved.accepts(k))
                .map(|(_, m)| m.clone())
                .sum();
            assert!(!mass.is_zero() && mass != rat(1, 1));
        }
    }
}
