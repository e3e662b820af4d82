//! Security certification of coefficient schemes.
//!
//! Three tools live here:
//! - a rank audit over every collusion set of size at most `T`, checking the
//!   sufficient full-row-rank conditions for relay and server security;
//! - an exact oracle that enumerates every input and source-key realisation
//!   and tests the conditional independence the security definitions demand;
//! - the attack that breaks every zero-row-sum scheme once `(U-1)V` users
//!   collude with relay 1.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, Combinations};
use crate::error::{HsaError, Result};
use crate::field::FieldSpec;
use crate::matrix::FqMatrix;
use crate::protocol::RoundTranscript;
use crate::rates::HsaConfig;
use crate::scheme::{all_users, external_scheme, CoefficientScheme, UserId};

/// Default cap on rank checks performed by [`audit`].
pub const DEFAULT_AUDIT_BUDGET: u128 = 1_000_000;

/// Default cap on `(W, N)` tuples enumerated by the exact oracle.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Users whose inputs and keys are known to the adversary. Kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<[usize; 2]>", into = "Vec<[usize; 2]>")]
pub struct CollusionSet {
    members: Vec<UserId>,
}

impl CollusionSet {
    pub fn new(mut members: Vec<UserId>) -> Result<Self> {
        members.sort();
        if members.windows(2).any(|p| p[0] == p[1]) {
            return Err(HsaError::InvalidArgument(
                "collusion set lists a user twice".into(),
            ));
        }
        Ok(Self { members })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn members(&self) -> &[UserId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.members.binary_search(&user).is_ok()
    }

    fn check_within(&self, cfg: &HsaConfig) -> Result<()> {
        match self.members.iter().find(|w| !w.is_valid(cfg)) {
            Some(w) => Err(HsaError::InvalidArgument(format!(
                "colluder {w} outside the network"
            ))),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<[usize; 2]>> for CollusionSet {
    type Error = HsaError;

    fn try_from(raw: Vec<[usize; 2]>) -> Result<Self> {
        Self::new(raw.into_iter().map(|[u, v]| UserId::new(u, v)).collect())
    }
}

impl From<CollusionSet> for Vec<[usize; 2]> {
    fn from(c: CollusionSet) -> Self {
        c.members.iter().map(|w| [w.u, w.v]).collect()
    }
}

/// Every collusion set of exactly `size` users, in lexicographic order.
pub fn collusion_sets(cfg: &HsaConfig, size: usize) -> impl Iterator<Item = CollusionSet> + '_ {
    Combinations::new(cfg.users(), size).map(move |idx| CollusionSet {
        members: idx
            .into_iter()
            .map(|k| UserId::from_ordinal(k, cfg))
            .collect(),
    })
}

/// Rows of relay `u`'s users outside `tset`, followed by every colluder's row.
pub fn relay_condition_matrix(
    scheme: &CoefficientScheme,
    u: usize,
    tset: &CollusionSet,
) -> FqMatrix {
    let v = scheme.cfg().v;
    let mut users: Vec<UserId> = (1..=v)
        .map(|j| UserId::new(u, j))
        .filter(|&w| !tset.contains(w))
        .collect();
    users.extend_from_slice(tset.members());
    scheme.rows_for(&users)
}

/// Relays whose whole cluster lies inside `tset`.
pub fn fully_covered_clusters(cfg: &HsaConfig, tset: &CollusionSet) -> Vec<usize> {
    (1..=cfg.u)
        .filter(|&u| (1..=cfg.v).all(|j| tset.contains(UserId::new(u, j))))
        .collect()
}

/// Cluster-sum rows for all but the last cluster not fully inside `tset`,
/// followed by every colluder's row.
pub fn server_condition_matrix(scheme: &CoefficientScheme, tset: &CollusionSet) -> FqMatrix {
    let cfg = *scheme.cfg();
    let f = scheme.field();
    let n = scheme.n_source();
    let covered = fully_covered_clusters(&cfg, tset);
    let open: Vec<usize> = (1..=cfg.u).filter(|u| !covered.contains(u)).collect();
    let keep = open.len().saturating_sub(1);
    let mut rows: Vec<Vec<u64>> = open[..keep]
        .iter()
        .map(|&u| {
            (0..n)
                .map(|c| f.sum((1..=cfg.v).map(|j| scheme.coefficients(UserId::new(u, j))[c])))
                .collect()
        })
        .collect();
    rows.extend(
        tset.members()
            .iter()
            .map(|&w| scheme.coefficients(w).to_vec()),
    );
    FqMatrix::from_rows(f, n, &rows).expect("rows have n_source entries")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Relay,
    Server,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Relay under test, absent for server checks.
    pub relay: Option<usize>,
    pub collusion: CollusionSet,
    pub observed_rank: usize,
    pub required_rank: usize,
}

impl Violation {
    fn sort_key(&self) -> (ViolationKind, Option<usize>, &CollusionSet) {
        (self.kind, self.relay, &self.collusion)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub relay_ok: bool,
    pub server_ok: bool,
    pub checks_performed: u64,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.relay_ok && self.server_ok
    }
}

/// Rank checks needed to audit collusion sets up to size `t_limit`.
pub fn audit_cost(cfg: &HsaConfig, t_limit: usize) -> u128 {
    (0..=t_limit.min(cfg.users()))
        .map(|t| binomial(cfg.users(), t).saturating_mul(cfg.u as u128 + 1))
        .fold(0u128, u128::saturating_add)
}

fn check_collusion_set(scheme: &CoefficientScheme, tset: &CollusionSet) -> Vec<Violation> {
    let mut out = Vec::new();
    for u in 1..=scheme.cfg().u {
        let m = relay_condition_matrix(scheme, u, tset);
        let rank = m.rank();
        if rank < m.rows() {
            out.push(Violation {
                kind: ViolationKind::Relay,
                relay: Some(u),
                collusion: tset.clone(),
                observed_rank: rank,
                required_rank: m.rows(),
            });
        }
    }
    let m = server_condition_matrix(scheme, tset);
    let rank = m.rank();
    if rank < m.rows() {
        out.push(Violation {
            kind: ViolationKind::Server,
            relay: None,
            collusion: tset.clone(),
            observed_rank: rank,
            required_rank: m.rows(),
        });
    }
    out
}

/// Exhaustive rank audit at the scheme's own collusion level with the
/// default budget.
pub fn audit(scheme: &CoefficientScheme) -> Result<AuditReport> {
    audit_with(scheme, scheme.cfg().t, DEFAULT_AUDIT_BUDGET)
}

/// Checks the relay and server rank conditions for every collusion set of
/// size at most `t_limit`. Refuses to start if more than `budget` rank
/// checks would be needed.
pub fn audit_with(scheme: &CoefficientScheme, t_limit: usize, budget: u128) -> Result<AuditReport> {
    let cfg = *scheme.cfg();
    let t_limit = t_limit.min(cfg.users());
    let required = audit_cost(&cfg, t_limit);
    if required > budget {
        return Err(HsaError::BudgetExceeded {
            required,
            cap: budget,
        });
    }
    let mut violations: Vec<Violation> = (0..=t_limit)
        .flat_map(|t| collusion_sets(&cfg, t).collect::<Vec<_>>())
        .collect::<Vec<_>>()
        .par_iter()
        .flat_map_iter(|tset| check_collusion_set(scheme, tset))
        .collect();
    violations.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(AuditReport {
        relay_ok: !violations.iter().any(|v| v.kind == ViolationKind::Relay),
        server_ok: !violations.iter().any(|v| v.kind == ViolationKind::Server),
        checks_performed: required as u64,
        violations,
    })
}

/// What the adversary observes in the exact oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndependenceMode {
    /// Relay `u` sees `X_{u,1..V}`.
    Relay(usize),
    /// The server sees `Y_1..Y_U` and learns the input sum anyway.
    Server,
}

/// A cell where `N(a,b,c) N(c) != N(a,c) N(b,c)`: `a` is the adversary's
/// view, `b` the full input vector, `c` the conditioning data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub view: Vec<u64>,
    pub inputs: Vec<u64>,
    pub conditioning: Vec<u64>,
    pub joint_times_marginal: u128,
    pub product_of_pairs: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Independent { tuples: u128, cells_checked: u128 },
    Dependent { witness: Witness },
}

impl Verdict {
    pub fn is_independent(&self) -> bool {
        matches!(self, Verdict::Independent { .. })
    }
}

fn encode(digits: impl IntoIterator<Item = u64>, q: u64) -> u64 {
    digits.into_iter().fold(0, |acc, d| acc * q + d)
}

fn decode(mut code: u64, len: usize, q: u64) -> Vec<u64> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = code % q;
        code /= q;
    }
    out
}

#[derive(Default)]
struct Counts {
    abc: HashMap<(u64, u64, u64), u64>,
    ac: HashMap<(u64, u64), u64>,
    bc: HashMap<(u64, u64), u64>,
    c: HashMap<u64, u64>,
}

impl Counts {
    fn add(&mut self, a: u64, b: u64, c: u64) {
        *self.abc.entry((a, b, c)).or_default() += 1;
        *self.ac.entry((a, c)).or_default() += 1;
        *self.bc.entry((b, c)).or_default() += 1;
        *self.c.entry(c).or_default() += 1;
    }

    fn merge(mut self, other: Counts) -> Counts {
        for (k, n) in other.abc {
            *self.abc.entry(k).or_default() += n;
        }
        for (k, n) in other.ac {
            *self.ac.entry(k).or_default() += n;
        }
        for (k, n) in other.bc {
            *self.bc.entry(k).or_default() += n;
        }
        for (k, n) in other.c {
            *self.c.entry(k).or_default() += n;
        }
        self
    }
}

/// Exact conditional-independence test by enumerating every input vector
/// `W` in `F_q^{UV}` and source key `N` in `F_q^n` (one symbol each).
///
/// Relay mode checks that relay `u`'s messages are independent of `W` given
/// the colluders' inputs and keys. Server mode checks that all relay
/// messages are independent of `W` given the colluders' data and the input
/// sum. Counting is exact; no probabilities are formed.
pub fn exact_independence_check(
    scheme: &CoefficientScheme,
    mode: IndependenceMode,
    tset: &CollusionSet,
    cap: u128,
) -> Result<Verdict> {
    let cfg = *scheme.cfg();
    tset.check_within(&cfg)?;
    if let IndependenceMode::Relay(u) = mode {
        if !(1..=cfg.u).contains(&u) {
            return Err(HsaError::InvalidArgument(format!(
                "relay {u} outside 1..={}",
                cfg.u
            )));
        }
    }
    let f = scheme.field();
    let q = f.q();
    let users = cfg.users();
    let n = scheme.n_source();
    let tuples = (q as u128)
        .checked_pow((users + n) as u32)
        .unwrap_or(u128::MAX);
    if tuples > cap {
        return Err(HsaError::BudgetExceeded {
            required: tuples,
            cap,
        });
    }
    let w_space = (q as u128).pow(users as u32) as u64;
    let n_space = (q as u128).pow(n as u32) as u64;
    let rows: Vec<Vec<u64>> = all_users(&cfg)
        .iter()
        .map(|&w| scheme.coefficients(w).to_vec())
        .collect();
    let colluders: Vec<usize> = tset.members().iter().map(|w| w.ordinal(&cfg)).collect();
    let view_len = match mode {
        IndependenceMode::Relay(_) => cfg.v,
        IndependenceMode::Server => cfg.u,
    };
    let cond_len = 2 * colluders.len() + usize::from(mode == IndependenceMode::Server);

    let counts = (0..w_space)
        .into_par_iter()
        .fold(Counts::default, |mut acc, b| {
            let w = decode(b, users, q);
            let w_sum = f.sum(w.iter().copied());
            for code in 0..n_space {
                let source = decode(code, n, q);
                let z: Vec<u64> = rows.iter().map(|h| f.dot(h, &source)).collect();
                let x = |k: usize| f.add(w[k], z[k]);
                let a = match mode {
                    IndependenceMode::Relay(u) => {
                        encode((0..cfg.v).map(|j| x((u - 1) * cfg.v + j)), q)
                    }
                    IndependenceMode::Server => encode(
                        (0..cfg.u).map(|r| f.sum((0..cfg.v).map(|j| x(r * cfg.v + j)))),
                        q,
                    ),
                };
                let mut cond: Vec<u64> = colluders.iter().flat_map(|&k| [w[k], z[k]]).collect();
                if mode == IndependenceMode::Server {
                    cond.push(w_sum);
                }
                acc.add(a, b, encode(cond, q));
            }
            acc
        })
        .reduce(Counts::default, Counts::merge);

    // group the observed view and input values by conditioning cell
    let mut a_by_c: HashMap<u64, Vec<u64>> = HashMap::new();
    for &(a, c) in counts.ac.keys() {
        a_by_c.entry(c).or_default().push(a);
    }
    let mut b_by_c: HashMap<u64, Vec<u64>> = HashMap::new();
    for &(b, c) in counts.bc.keys() {
        b_by_c.entry(c).or_default().push(b);
    }
    let mut cells: Vec<u64> = counts.c.keys().copied().collect();
    cells.sort_unstable();
    let mut checked: u128 = 0;
    for c in cells {
        let nc = counts.c[&c] as u128;
        let mut a_vals = a_by_c.remove(&c).unwrap_or_default();
        let mut b_vals = b_by_c.remove(&c).unwrap_or_default();
        a_vals.sort_unstable();
        b_vals.sort_unstable();
        for &a in &a_vals {
            let nac = counts.ac[&(a, c)] as u128;
            for &b in &b_vals {
                let nbc = counts.bc[&(b, c)] as u128;
                let nabc = counts.abc.get(&(a, b, c)).copied().unwrap_or(0) as u128;
                checked += 1;
                if nabc * nc != nac * nbc {
                    return Ok(Verdict::Dependent {
                        witness: Witness {
                            view: decode(a, view_len, q),
                            inputs: decode(b, users, q),
                            conditioning: decode(c, cond_len, q),
                            joint_times_marginal: nabc * nc,
                            product_of_pairs: nac * nbc,
                        },
                    });
                }
            }
        }
    }
    Ok(Verdict::Independent {
        tuples,
        cells_checked: checked,
    })
}

/// One exact-oracle result inside [`exact_audit`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactCheck {
    pub mode: IndependenceMode,
    pub collusion: CollusionSet,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Runs the exact oracle for every relay and the server against every
/// collusion set of size at most the scheme's `T`.
pub fn exact_audit(scheme: &CoefficientScheme, cap: u128) -> Result<Vec<ExactCheck>> {
    let cfg = *scheme.cfg();
    let mut out = Vec::new();
    for t in 0..=cfg.t.min(cfg.users()) {
        for tset in collusion_sets(&cfg, t) {
            let modes = (1..=cfg.u)
                .map(IndependenceMode::Relay)
                .chain(std::iter::once(IndependenceMode::Server));
            for mode in modes {
                let verdict = exact_independence_check(scheme, mode, &tset, cap)?;
                out.push(ExactCheck {
                    mode,
                    collusion: tset.clone(),
                    verdict,
                });
            }
        }
    }
    Ok(out)
}

/// Result of the collusion attack on one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub recovered: Vec<u64>,
    pub truth: Vec<u64>,
    pub success: bool,
}

/// Relay 1 colludes with every user of clusters `2..=U`. The colluders
/// rebuild `Y_2..Y_U` from their own inputs and keys; adding relay 1's
/// message cancels every key by the zero row sum, and subtracting the
/// colluders' inputs leaves `sum_v W_{1,v}`.
pub fn infeasibility_attack(
    scheme: &CoefficientScheme,
    transcript: &RoundTranscript,
) -> AttackOutcome {
    let cfg = *scheme.cfg();
    let f = scheme.field();
    let l = transcript.inputs.l;
    let mut recovered = transcript.y[0].clone();
    for w in all_users(&cfg).into_iter().filter(|w| w.u >= 2) {
        let k = w.ordinal(&cfg);
        for (i, acc) in recovered.iter_mut().enumerate() {
            // (W + Z) added into the rebuilt relay message, W removed again
            let own_y = f.add(transcript.inputs.w[k][i], transcript.keys[i].individual[k]);
            *acc = f.sub(f.add(*acc, own_y), transcript.inputs.w[k][i]);
        }
    }
    let truth: Vec<u64> = (0..l)
        .map(|i| f.sum((0..cfg.v).map(|j| transcript.inputs.w[j][i])))
        .collect();
    AttackOutcome {
        success: recovered == truth,
        recovered,
        truth,
    }
}

/// The colluding set used by [`infeasibility_attack`].
pub fn attack_collusion_set(cfg: &HsaConfig) -> CollusionSet {
    CollusionSet {
        members: all_users(cfg).into_iter().filter(|w| w.u >= 2).collect(),
    }
}

/// First zero-row-sum matrix with `cols` columns (free rows enumerated in
/// base-`q` order, last row the negated sum) whose scheme passes the rank
/// audit. Refuses if more than `cap` candidates would have to be tried.
pub fn search_audit_clean_scheme(
    cfg: &HsaConfig,
    field: FieldSpec,
    cols: usize,
    cap: u128,
) -> Result<Option<CoefficientScheme>> {
    let free = (cfg.users() - 1) * cols;
    let q = field.q();
    let candidates = (q as u128).checked_pow(free as u32).unwrap_or(u128::MAX);
    if candidates > cap {
        return Err(HsaError::BudgetExceeded {
            required: candidates,
            cap,
        });
    }
    let found = (0..candidates as u64).into_par_iter().find_first(|&code| {
        candidate_scheme(cfg, field, cols, code)
            .and_then(|s| audit(&s).ok())
            .is_some_and(|r| r.is_clean())
    });
    Ok(found.and_then(|code| candidate_scheme(cfg, field, cols, code)))
}

fn candidate_scheme(
    cfg: &HsaConfig,
    field: FieldSpec,
    cols: usize,
    code: u64,
) -> Option<CoefficientScheme> {
    let free = (cfg.users() - 1) * cols;
    let mut data = decode(code, free, field.q());
    let parity: Vec<u64> = (0..cols)
        .map(|c| field.neg(field.sum((0..cfg.users() - 1).map(|r| data[r * cols + c]))))
        .collect();
    data.extend(parity);
    let h = FqMatrix::new(field, cfg.users(), cols, data).ok()?;
    external_scheme(cfg, h).ok()
}
