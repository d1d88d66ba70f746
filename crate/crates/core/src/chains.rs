//! The alternating image/preimage chains of a pair `(A, B)` and the index `ν`.
//!
//! `M_0 = X`, `M_n = B⁻¹(A(M_{n−1}))` is non-increasing; `N_1 = N(A)`,
//! `N_n = A⁻¹(B(N_{n−1}))` is non-decreasing. Both stabilize within
//! `dim X` steps. Chain vectors store the computed prefix up to and including
//! the first repeated term; indexing past the end returns the stable value.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::relation::LinearRelation;
use crate::subspace::Subspace;
use crate::verdict::{Audit, Verdict};

/// `ν(A:B)`: a positive integer or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Nu {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Nu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nu::Finite(n) => write!(f, "{n}"),
            Nu::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Nu {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Nu::Finite(n) => s.serialize_u64(*n as u64),
            Nu::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Nu {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Nu::Finite(n as usize)),
            Raw::S(s) if s == "inf" => Ok(Nu::Infinite),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected integer or \"inf\", got {s:?}"))),
        }
    }
}

/// A chain prefix that ends once a term repeats (or a step cap is hit).
#[derive(Debug, Clone)]
pub struct Chain {
    terms: Vec<Subspace>,
    /// Index of the first term equal to its predecessor.
    pub stabilized_at: Option<usize>,
    first_index: usize,
}

impl Chain {
    /// Term with the chain's own indexing (`M_0…` or `N_1…`).
    pub fn at(&self, index: usize) -> &Subspace {
        assert!(index >= self.first_index, "chain starts at index {}", self.first_index);
        let i = index - self.first_index;
        &self.terms[i.min(self.terms.len() - 1)]
    }

    pub fn terms(&self) -> &[Subspace] {
        &self.terms
    }

    pub fn first_index(&self) -> usize {
        self.first_index
    }

    /// Last index actually computed.
    pub fn last_index(&self) -> usize {
        self.first_index + self.terms.len() - 1
    }

    pub fn dims(&self) -> Vec<usize> {
        self.terms.iter().map(Subspace::dim).collect()
    }
}

fn check_pair(a: &LinearRelation, b: &LinearRelation) -> Result<()> {
    if a.x_dim() != b.x_dim() || a.y_dim() != b.y_dim() {
        return Err(Error::RelationMismatch { x1: a.x_dim(), y1: a.y_dim(), x2: b.x_dim(), y2: b.y_dim() });
    }
    Ok(())
}

fn iterate(
    first: Subspace,
    first_index: usize,
    max_n: usize,
    audit: &mut Audit,
    mut step: impl FnMut(&Subspace) -> Result<Subspace>,
) -> Result<Chain> {
    let mut terms = vec![first];
    let mut stabilized_at = None;
    while first_index + terms.len() - 1 < max_n {
        let next = step(terms.last().expect("nonempty"))?;
        let repeated = audit.same(&next, terms.last().expect("nonempty"))?;
        terms.push(next);
        if repeated {
            stabilized_at = Some(first_index + terms.len() - 1);
            break;
        }
    }
    Ok(Chain { terms, stabilized_at, first_index })
}

fn m_chain_audited(a: &LinearRelation, b: &LinearRelation, max_n: usize, audit: &mut Audit) -> Result<Chain> {
    check_pair(a, b)?;
    iterate(Subspace::full(a.x_dim()), 0, max_n, audit, |m| b.preimage(&a.image(m)?))
}

fn n_chain_audited(a: &LinearRelation, b: &LinearRelation, max_n: usize, audit: &mut Audit) -> Result<Chain> {
    check_pair(a, b)?;
    iterate(a.kernel().clone(), 1, max_n.max(1), audit, |n| a.preimage(&b.image(n)?))
}

/// `M_0, M_1, …` up to `M_{max_n}` or the first repetition.
pub fn m_chain(a: &LinearRelation, b: &LinearRelation, max_n: usize) -> Result<Chain> {
    m_chain_audited(a, b, max_n, &mut Audit::new())
}

/// `N_1, N_2, …` up to `N_{max_n}` or the first repetition.
pub fn n_chain(a: &LinearRelation, b: &LinearRelation, max_n: usize) -> Result<Chain> {
    n_chain_audited(a, b, max_n, &mut Audit::new())
}

/// `(M′, N′)` chains of the adjoint pair.
pub fn dual_chains(a: &LinearRelation, b: &LinearRelation, max_n: usize) -> Result<(Chain, Chain)> {
    let (ad, bd) = (a.adjoint(), b.adjoint());
    Ok((m_chain(&ad, &bd, max_n)?, n_chain(&ad, &bd, max_n)?))
}

/// Enough steps for either chain to reach and confirm its stable value.
fn full_length(a: &LinearRelation) -> usize {
    a.x_dim() + 1
}

fn nu_from(m: &Chain, n1: &Subspace, audit: &mut Audit) -> Result<Nu> {
    for n in 1..=m.last_index() {
        if !audit.contains(m.at(n), n1)? {
            return Ok(Nu::Finite(n));
        }
    }
    Ok(Nu::Infinite)
}

pub fn nu(a: &LinearRelation, b: &LinearRelation) -> Result<Nu> {
    Ok(chain_report(a, b, full_length(a))?.nu)
}

#[derive(Debug, Clone)]
pub struct ChainReport {
    pub m_chain: Chain,
    pub n_chain: Chain,
    /// First index at which the `M` chain repeats.
    pub stabilized_at: Option<usize>,
    pub nu: Nu,
    /// Row `k − 1`, column `j`: `N_k ⊆ M_j`.
    pub containment_table: Vec<Vec<bool>>,
    pub audit: Audit,
}

/// Both chains to stabilization (capped at `max_n`), `ν` and the
/// containment table.
pub fn chain_report(a: &LinearRelation, b: &LinearRelation, max_n: usize) -> Result<ChainReport> {
    let mut audit = Audit::new();
    audit.note_relation(a);
    audit.note_relation(b);
    let m = m_chain_audited(a, b, max_n.max(full_length(a)), &mut audit)?;
    let n = n_chain_audited(a, b, max_n.max(full_length(a)), &mut audit)?;
    let nu = nu_from(&m, n.at(1), &mut audit)?;
    let mut table = Vec::new();
    for nk in n.terms() {
        let row = m.terms().iter().map(|mj| audit.contains(mj, nk)).collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    Ok(ChainReport { stabilized_at: m.stabilized_at, m_chain: m, n_chain: n, nu, containment_table: table, audit })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub m_dims: Vec<usize>,
    pub n_dims: Vec<usize>,
    pub stabilized_at: Option<usize>,
    pub nu: Nu,
    pub containment_table: Vec<Vec<bool>>,
    #[serde(with = "crate::io::extended")]
    pub min_margin: f64,
}

impl ChainReport {
    pub fn summary(&self) -> ChainSummary {
        ChainSummary {
            m_dims: self.m_chain.dims(),
            n_dims: self.n_chain.dims(),
            stabilized_at: self.stabilized_at,
            nu: self.nu,
            containment_table: self.containment_table.clone(),
            min_margin: self.audit.min_margin,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub n: usize,
    /// Entry `r − 1`: `N_r ⊆ M_{n−r+1}`.
    pub conditions: Vec<bool>,
    /// Entry `k − 1`: `N_k ⊆ D(B)` and `N_k ⊆ B⁻¹(A(N_{k+1}))`.
    pub kappa: Vec<bool>,
    pub all_agree: bool,
    pub kappa_implied: bool,
    pub verdict: Verdict,
    #[serde(skip)]
    pub audit: Audit,
}

/// Evaluates the `n` chain conditions and the per-element `κ` condition;
/// they must all agree, and all-true must force `κ`. Requires `B(0) ⊆ A(0)`.
pub fn check_equivalent_conditions(a: &LinearRelation, b: &LinearRelation, n: usize) -> Result<EquivalenceReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    check_pair(a, b)?;
    let mut audit = Audit::new();
    audit.note_relation(a);
    audit.note_relation(b);
    let gate = audit.contains(a.multivalued_part(), b.multivalued_part())?;
    let m = m_chain_audited(a, b, n.max(full_length(a)), &mut audit)?;
    let nc = n_chain_audited(a, b, (n + 1).max(full_length(a)), &mut audit)?;

    let mut conditions = Vec::with_capacity(n);
    for r in 1..=n {
        conditions.push(audit.contains(m.at(n - r + 1), nc.at(r))?);
    }
    let mut kappa = Vec::with_capacity(n);
    for k in 1..=n {
        let nk = nc.at(k);
        let in_domain = audit.contains(b.domain(), nk)?;
        let target = b.preimage(&a.image(nc.at(k + 1))?)?;
        kappa.push(in_domain && audit.contains(&target, nk)?);
    }
    let all_agree = conditions.iter().all(|&c| c == conditions[0]);
    let kappa_implied = !conditions.iter().all(|&c| c) || kappa.iter().all(|&k| k);
    let verdict = if !gate { Verdict::NotApplicable } else { audit.verdict(all_agree && kappa_implied) };
    Ok(EquivalenceReport { n, conditions, kappa, all_agree, kappa_implied, verdict, audit })
}

#[derive(Debug, Clone, Serialize)]
pub struct NuDualityReport {
    pub applicable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<&'static str>,
    /// `M′_1 = (B(N_1))^⊥`.
    pub first_dual_m_equality: bool,
    pub nu: Nu,
    pub nu_dual: Nu,
    /// `M′_n ⊆ (B(N_n))^⊥` and `N′_n ⊆ (A(M_{n−1}))^⊥` up to stabilization.
    pub adjoint_sequences: bool,
    pub verdict: Verdict,
    #[serde(skip)]
    pub audit: Audit,
}

/// Duality of the chains for everywhere-defined pairs with `B(0) ⊆ A(0)`.
pub fn verify_nu_duality(a: &LinearRelation, b: &LinearRelation) -> Result<NuDualityReport> {
    check_pair(a, b)?;
    let mut audit = Audit::new();
    audit.note_relation(a);
    audit.note_relation(b);
    let reason = if !a.is_everywhere_defined() {
        Some("D(A) ≠ X")
    } else if !b.is_everywhere_defined() {
        Some("D(B) ≠ X")
    } else if !audit.contains(a.multivalued_part(), b.multivalued_part())? {
        Some("B(0) ⊄ A(0)")
    } else {
        None
    };
    if reason.is_some() {
        return Ok(NuDualityReport {
            applicable: false,
            reason,
            first_dual_m_equality: false,
            nu: Nu::Infinite,
            nu_dual: Nu::Infinite,
            adjoint_sequences: false,
            verdict: Verdict::NotApplicable,
            audit,
        });
    }

    let (ad, bd) = (a.adjoint(), b.adjoint());
    audit.note_relation(&ad);
    audit.note_relation(&bd);
    let steps = a.x_dim().max(a.y_dim()) + 1;
    let m = m_chain_audited(a, b, steps, &mut audit)?;
    let n = n_chain_audited(a, b, steps, &mut audit)?;
    let md = m_chain_audited(&ad, &bd, steps, &mut audit)?;
    let nd = n_chain_audited(&ad, &bd, steps, &mut audit)?;
    let nu = nu_from(&m, n.at(1), &mut audit)?;
    let nu_dual = nu_from(&md, nd.at(1), &mut audit)?;

    let first = audit.same(md.at(1), &b.image(n.at(1))?.annihilator())?;
    let last = m.last_index().max(n.last_index()).max(md.last_index()).max(nd.last_index());
    let mut sequences = true;
    for k in 1..=last {
        sequences &= audit.contains(&b.image(n.at(k))?.annihilator(), md.at(k))?;
        sequences &= audit.contains(&a.image(m.at(k - 1))?.annihilator(), nd.at(k))?;
    }
    let ok = first && nu == nu_dual && sequences;
    Ok(NuDualityReport {
        applicable: true,
        reason: None,
        first_dual_m_equality: first,
        nu,
        nu_dual,
        adjoint_sequences: sequences,
        verdict: audit.verdict(ok),
        audit,
    })
}
