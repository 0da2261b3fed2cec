//! JSON file formats and canonical example protocols.
//!
//! Tables, functions and protocols round-trip through serde structs whose
//! probabilities are rational strings ("3/4"), so files are exact.

use std::collections::BTreeMap;
use std::path::Path;

use num::{One, Zero};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::protocol::{
    compile_standard, Coordinate, FunctionTable, Kernel, Kind, Protocol, PublicRound, RoundMeta,
    Sender, StandardSpec,
};
use crate::rational::{format_rat, parse_rat, rat, rat_int, Rat};
use crate::table::{JointTable, Variable};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableFile {
    pub name: String,
    pub alphabet: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassEntry {
    pub assignment: Vec<String>,
    pub p: String,
}

/// An exact joint distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableFile {
    pub variables: Vec<VariableFile>,
    pub masses: Vec<MassEntry>,
}

pub fn table_to_file(t: &JointTable) -> TableFile {
    TableFile {
        variables: t
            .vars()
            .iter()
            .map(|v| VariableFile {
                name: v.name.clone(),
                alphabet: v.alphabet.clone(),
            })
            .collect(),
        masses: t
            .support()
            .map(|(k, p)| MassEntry {
                assignment: t.symbols_of(k).iter().map(|s| s.to_string()).collect(),
                p: format_rat(p),
            })
            .collect(),
    }
}

pub fn table_from_file(tf: &TableFile) -> Result<JointTable> {
    let vars: Vec<Variable> = tf
        .variables
        .iter()
        .map(|v| Variable {
            name: v.name.clone(),
            alphabet: v.alphabet.clone(),
        })
        .collect();
    let mut entries = Vec::with_capacity(tf.masses.len());
    for m in &tf.masses {
        let syms: Vec<&str> = m.assignment.iter().map(|s| s.as_str()).collect();
        entries.push((syms, parse_rat(&m.p)?));
    }
    JointTable::from_symbols(vars, entries)
}

/// A boolean function, values row-major in the x symbol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionFile {
    pub name: String,
    pub x_alphabet: Vec<String>,
    pub y_alphabet: Vec<String>,
    pub values: Vec<Vec<u8>>,
}

pub fn function_to_file(f: &FunctionTable) -> FunctionFile {
    FunctionFile {
        name: f.name.clone(),
        x_alphabet: f.x_alphabet.clone(),
        y_alphabet: f.y_alphabet.clone(),
        values: f
            .x_alphabet
            .iter()
            .enumerate()
            .map(|(x, _)| {
                (0..f.y_alphabet.len())
                    .map(|y| f.value(x as u32, y as u32))
                    .collect()
            })
            .collect(),
    }
}

pub fn function_from_file(ff: &FunctionFile) -> Result<FunctionTable> {
    let mut values = Vec::with_capacity(ff.x_alphabet.len() * ff.y_alphabet.len());
    if ff.values.len() != ff.x_alphabet.len() {
        return Err(Error::InvalidInput("function file has wrong row count".into()));
    }
    for row in &ff.values {
        if row.len() != ff.y_alphabet.len() {
            return Err(Error::InvalidInput("function file has a ragged row".into()));
        }
        values.extend_from_slice(row);
    }
    FunctionTable::new(ff.name.clone(), ff.x_alphabet.clone(), ff.y_alphabet.clone(), values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoordFile {
    pub label: String,
    pub x_var: String,
    pub y_var: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundFile {
    pub sender: Sender,
    pub alphabet: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymMass {
    pub symbol: String,
    pub p: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublicFile {
    pub alphabet: Vec<String>,
    pub dist: Vec<SymMass>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelRow {
    pub given: Vec<String>,
    pub dist: Vec<SymMass>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelFile {
    pub sender: Sender,
    pub alphabet: Vec<String>,
    pub depends: Vec<String>,
    pub rows: Vec<KernelRow>,
}

/// The kernel form of a standard protocol, with its input distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelsFile {
    pub mu: TableFile,
    pub public: PublicFile,
    pub rounds: Vec<KernelFile>,
}

/// A protocol on disk: either the kernel form (compiled on load) or an
/// explicit joint with per-round senders.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolFile {
    pub x_vars: Vec<String>,
    pub y_vars: Vec<String>,
    pub coordinates: Vec<CoordFile>,
    pub output_round: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<KernelsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<TableFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<RoundFile>>,
}

pub fn protocol_to_file(p: &Protocol) -> ProtocolFile {
    ProtocolFile {
        x_vars: p.x_vars().to_vec(),
        y_vars: p.y_vars().to_vec(),
        coordinates: p
            .coordinates()
            .iter()
            .map(|c| CoordFile {
                label: c.label.clone(),
                x_var: c.x_var.clone(),
                y_var: c.y_var.clone(),
            })
            .collect(),
        output_round: p.output_round(),
        kind: Some(p.kind()),
        kernels: None,
        joint: Some(table_to_file(p.joint())),
        rounds: Some(
            p.rounds()
                .iter()
                .map(|r| RoundFile {
                    sender: r.sender,
                    alphabet: r.alphabet.clone(),
                })
                .collect(),
        ),
    }
}

fn parse_dist(dist: &[SymMass], alphabet: &[String], what: &str) -> Result<Vec<(u32, Rat)>> {
    let mut out = Vec::with_capacity(dist.len());
    for s in dist {
        let idx = alphabet
            .iter()
            .position(|a| *a == s.symbol)
            .ok_or_else(|| Error::MalformedKernel(format!("{what}: unknown symbol `{}`", s.symbol)))?;
        out.push((idx as u32, parse_rat(&s.p)?));
    }
    Ok(out)
}

pub fn protocol_from_file(pf: &ProtocolFile) -> Result<Protocol> {
    let coordinates: Vec<Coordinate> = pf
        .coordinates
        .iter()
        .map(|c| Coordinate {
            label: c.label.clone(),
            x_var: c.x_var.clone(),
            y_var: c.y_var.clone(),
        })
        .collect();

    if let Some(kf) = &pf.kernels {
        let mu = table_from_file(&kf.mu)?;
        // Alphabets visible to kernel contexts, by variable name.
        let mut alphabets: BTreeMap<String, Vec<String>> = mu
            .vars()
            .iter()
            .map(|v| (v.name.clone(), v.alphabet.clone()))
            .collect();
        alphabets.insert(crate::protocol::round_var(0), kf.public.alphabet.clone());
        let public = PublicRound {
            alphabet: kf.public.alphabet.clone(),
            dist: parse_dist(&kf.public.dist, &kf.public.alphabet, "public round")?,
        };
        let mut kernels = Vec::with_capacity(kf.rounds.len());
        for (pos, k) in kf.rounds.iter().enumerate() {
            let i = pos + 1;
            let mut rows = BTreeMap::new();
            for row in &k.rows {
                if row.given.len() != k.depends.len() {
                    return Err(Error::MalformedKernel(format!(
                        "round {i}: row context arity mismatch"
                    )));
                }
                let mut ctx = Vec::with_capacity(row.given.len());
                for (d, sym) in k.depends.iter().zip(&row.given) {
                    let alpha = alphabets.get(d).ok_or_else(|| {
                        Error::MalformedKernel(format!("round {i} may not read `{d}`"))
                    })?;
                    let idx = alpha.iter().position(|a| a == sym).ok_or_else(|| {
                        Error::MalformedKernel(format!("round {i}: unknown symbol `{sym}` for `{d}`"))
                    })?;
                    ctx.push(idx as u32);
                }
                rows.insert(
                    ctx.into_boxed_slice(),
                    parse_dist(&row.dist, &k.alphabet, &format!("round {i}"))?,
                );
            }
            alphabets.insert(crate::protocol::round_var(i), k.alphabet.clone());
            kernels.push(Kernel {
                sender: k.sender,
                alphabet: k.alphabet.clone(),
                depends: k.depends.clone(),
                rows,
            });
        }
        return compile_standard(&StandardSpec {
            mu,
            x_vars: pf.x_vars.clone(),
            y_vars: pf.y_vars.clone(),
            coordinates,
            public,
            kernels,
            output_round: pf.output_round,
        });
    }

    let joint = table_from_file(
        pf.joint
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("protocol file needs `kernels` or `joint`".into()))?,
    )?;
    let rounds_file = pf
        .rounds
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("explicit protocol files need `rounds`".into()))?;
    let rounds = rounds_file
        .iter()
        .enumerate()
        .map(|(i, r)| RoundMeta {
            index: i,
            sender: r.sender,
            alphabet: r.alphabet.clone(),
        })
        .collect();
    let kind = pf
        .kind
        .ok_or_else(|| Error::InvalidInput("explicit protocol files need `kind`".into()))?;
    Protocol::new(
        joint,
        pf.x_vars.clone(),
        pf.y_vars.clone(),
        rounds,
        kind,
        pf.output_round,
        coordinates,
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Json(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::Json(format!("{}: {e}", path.display())))
}

/// Uniform product input over single variables `x` and `y`.
pub fn uniform_mu(xs: &[&str], ys: &[&str]) -> JointTable {
    let total = (xs.len() * ys.len()) as i64;
    let mut entries = Vec::with_capacity(total as usize);
    for x in 0..xs.len() as u32 {
        for y in 0..ys.len() as u32 {
            entries.push((vec![x, y], rat(1, total)));
        }
    }
    JointTable::new(
        vec![Variable::new("x", xs), Variable::new("y", ys)],
        entries,
    )
    .expect("uniform table is well formed")
}

/// Bernoulli(p) over a single binary variable.
pub fn bernoulli_table(name: &str, p: Rat) -> Result<JointTable> {
    JointTable::new(
        vec![Variable::binary(name)],
        vec![(vec![0], Rat::one() - &p), (vec![1], p)],
    )
}

/// The canonical two-round protocol: Alice sends a (possibly noisy) copy of
/// her input, Bob answers with a (possibly noisy) evaluation of `f` on the
/// received symbol and his input.
pub fn two_round(
    f: &FunctionTable,
    mu: JointTable,
    first_noise: Rat,
    answer_noise: Rat,
) -> Result<Protocol> {
    if mu.vars().len() != 2 {
        return Err(Error::InvalidInput("two_round needs single-variable inputs".into()));
    }
    let x = mu.vars()[0].clone();
    let y = mu.vars()[1].clone();
    if f.x_alphabet != x.alphabet || f.y_alphabet != y.alphabet {
        return Err(Error::AlphabetMismatch(format!(
            "function `{}` does not match the input alphabets",
            f.name
        )));
    }
    for noise in [&first_noise, &answer_noise] {
        if noise < &Rat::zero() || noise > &Rat::one() {
            return Err(Error::OutOfRange(format!("noise rate {}", format_rat(noise))));
        }
    }
    let k = x.alphabet.len();
    if k < 2 && !first_noise.is_zero() {
        return Err(Error::InvalidInput("cannot garble a one-symbol alphabet".into()));
    }

    let mut first_rows = BTreeMap::new();
    for xi in 0..k as u32 {
        let mut dist = vec![(xi, Rat::one() - &first_noise)];
        if !first_noise.is_zero() {
            let other = &first_noise / rat_int((k - 1) as i64);
            for s in 0..k as u32 {
                if s != xi {
                    dist.push((s, other.clone()));
                }
            }
        }
        first_rows.insert(vec![xi].into_boxed_slice(), dist);
    }

    let mut answer_rows = BTreeMap::new();
    for yi in 0..y.alphabet.len() as u32 {
        for mi in 0..k as u32 {
            let b = f.value(mi, yi) as u32;
            let mut dist = vec![(b, Rat::one() - &answer_noise)];
            if !answer_noise.is_zero() {
                dist.push((1 - b, answer_noise.clone()));
            }
            answer_rows.insert(vec![yi, mi].into_boxed_slice(), dist);
        }
    }

    let spec = StandardSpec {
        mu,
        x_vars: vec![x.name.clone()],
        y_vars: vec![y.name.clone()],
        coordinates: vec![Coordinate {
            label: String::new(),
            x_var: x.name.clone(),
            y_var: y.name.clone(),
        }],
        public: PublicRound {
            alphabet: vec!["-".into()],
            dist: vec![(0, Rat::one())],
        },
        kernels: vec![
            Kernel {
                sender: Sender::Alice,
                alphabet: x.alphabet.clone(),
                depends: vec![x.name.clone()],
                rows: first_rows,
            },
            Kernel {
                sender: Sender::Bob,
                alphabet: vec!["0".into(), "1".into()],
                depends: vec![y.name.clone(), crate::protocol::round_var(1)],
                rows: answer_rows,
            },
        ],
        output_round: 2,
    };
    compile_standard(&spec)
}

/// AND over uniform inputs, both messages exact.
pub fn p1() -> (Protocol, FunctionTable, JointTable) {
    let f = FunctionTable::and();
    let mu = uniform_mu(&["0", "1"], &["0", "1"]);
    let p = two_round(&f, mu.clone(), Rat::zero(), Rat::zero()).expect("p1 is well formed");
    (p, f, mu)
}

/// AND over uniform inputs with a noisy answer.
pub fn noisy_single(rate: Rat) -> Result<Protocol> {
    two_round(
        &FunctionTable::and(),
        uniform_mu(&["0", "1"], &["0", "1"]),
        Rat::zero(),
        rate,
    )
}

/// Both parties announce noisy copies of their bits; Alice then announces
/// `f` of the two announcements.
pub fn input_noisy(f: &FunctionTable, mu: JointTable, rate: Rat) -> Result<Protocol> {
    if mu.vars().len() != 2 {
        return Err(Error::InvalidInput("input_noisy needs single-variable inputs".into()));
    }
    let x = mu.vars()[0].clone();
    let y = mu.vars()[1].clone();
    if x.alphabet != ["0", "1"] || y.alphabet != ["0", "1"] {
        return Err(Error::AlphabetMismatch("input_noisy needs binary inputs".into()));
    }
    if rate < Rat::zero() || rate > Rat::one() {
        return Err(Error::OutOfRange(format!("noise rate {}", format_rat(&rate))));
    }
    let binary = vec!["0".to_string(), "1".to_string()];
    let mut flip_rows = BTreeMap::new();
    for b in 0..2u32 {
        let mut dist = vec![(b, Rat::one() - &rate)];
        if !rate.is_zero() {
            dist.push((1 - b, rate.clone()));
        }
        flip_rows.insert(vec![b].into_boxed_slice(), dist);
    }
    let mut eval_rows = BTreeMap::new();
    for a in 0..2u32 {
        for b in 0..2u32 {
            eval_rows.insert(
                vec![a, b].into_boxed_slice(),
                vec![(f.value(a, b) as u32, Rat::one())],
            );
        }
    }
    let spec = StandardSpec {
        mu,
        x_vars: vec![x.name.clone()],
        y_vars: vec![y.name.clone()],
        coordinates: vec![Coordinate {
            label: String::new(),
            x_var: x.name.clone(),
            y_var: y.name.clone(),
        }],
        public: PublicRound {
            alphabet: vec!["-".into()],
            dist: vec![(0, Rat::one())],
        },
        kernels: vec![
            Kernel {
                sender: Sender::Alice,
                alphabet: binary.clone(),
                depends: vec![x.name.clone()],
                rows: flip_rows.clone(),
            },
            Kernel {
                sender: Sender::Bob,
                alphabet: binary.clone(),
                depends: vec![y.name.clone()],
                rows: flip_rows,
            },
            Kernel {
                sender: Sender::Alice,
                alphabet: binary,
                depends: vec![crate::protocol::round_var(1), crate::protocol::round_var(2)],
                rows: eval_rows,
            },
        ],
        output_round: 3,
    };
    compile_standard(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{output_stats, validate_standard};

    #[test]
    fn table_file_round_trip() {
        let (_, _, mu) = p1();
        let tf = table_to_file(&mu);
        let back = table_from_file(&tf).unwrap();
        assert_eq!(mu, back);
    }

    #[test]
    fn protocol_file_round_trip() {
        let (p, _, _) = p1();
        let pf = protocol_to_file(&p);
        let back = protocol_from_file(&pf).unwrap();
        assert_eq!(p.joint(), back.joint());
        assert_eq!(p.output_round(), back.output_round());
        assert_eq!(p.kind(), back.kind());
    }

    #[test]
    fn kernel_file_compiles_and_rejects_missing_rows() {
        let (p, _, _) = p1();
        let spec = crate::protocol::extract_spec(&p).unwrap();
        let alphabet_of = |name: &str| p.joint().var(name).unwrap().alphabet.clone();
        let mut pf = protocol_to_file(&p);
        pf.joint = None;
        pf.rounds = None;
        pf.kind = None;
        pf.kernels = Some(KernelsFile {
            mu: table_to_file(&spec.mu),
            public: PublicFile {
                alphabet: spec.public.alphabet.clone(),
                dist: spec
                    .public
                    .dist
                    .iter()
                    .map(|(s, p)| SymMass {
                        symbol: spec.public.alphabet[*s as usize].clone(),
                        p: format_rat(p),
                    })
                    .collect(),
            },
            rounds: spec
                .kernels
                .iter()
                .map(|k| KernelFile {
                    sender: k.sender,
                    alphabet: k.alphabet.clone(),
                    depends: k.depends.clone(),
                    rows: k
                        .rows
                        .iter()
                        .map(|(ctx, dist)| KernelRow {
                            given: ctx
                                .iter()
                                .zip(&k.depends)
                                .map(|(&s, d)| alphabet_of(d)[s as usize].clone())
                                .collect(),
                            dist: dist
                                .iter()
                                .map(|(s, p)| SymMass {
                                    symbol: k.alphabet[*s as usize].clone(),
                                    p: format_rat(p),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        });
        let compiled = protocol_from_file(&pf).unwrap();
        assert_eq!(compiled.joint(), p.joint());

        // Dropping a reachable context row must fail the compile.
        let kf = pf.kernels.as_mut().unwrap();
        kf.rounds[1].rows.pop();
        assert!(matches!(
            protocol_from_file(&pf),
            Err(Error::UnreachablePrefix(_))
        ));
    }

    #[test]
    fn input_noisy_is_standard() {
        let f = FunctionTable::xor();
        let mu = uniform_mu(&["0", "1"], &["0", "1"]);
        let p = input_noisy(&f, mu, rat(1, 20)).unwrap();
        assert!(validate_standard(&p).pass);
        // Answer is wrong iff exactly one announcement flipped.
        let stats = output_stats(&p, &f).unwrap();
        assert_eq!(stats.error, rat(2, 1) * rat(1, 20) * rat(19, 20));
    }
}
