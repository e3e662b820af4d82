//! Construction of linear key-generation schemes.
//!
//! Each user `(u, v)` receives the individual key `Z_{u,v} = h_{u,v} . N` where
//! `N` is the vector of i.i.d. uniform source-key symbols and `h_{u,v}` is that
//! user's row of the coefficient matrix `H`. Rows of `H` always sum to zero, so
//! the keys cancel once the server adds up every relay message.
//!
//! The optimal construction takes `H` to be a parity-extended Vandermonde
//! matrix over nodes `x_0 = 0`, `x_{i+1} - x_i = gamma^{i+1}`. The builder
//! searches for the smallest prime and `gamma` for which every maximal square
//! submatrix is nonsingular and the exhaustive security audit passes.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit;
use crate::combinatorics::Combinations;
use crate::error::{HsaError, Result};
use crate::field::{is_prime, next_prime, FieldSpec};
use crate::matrix::FqMatrix;
use crate::rates::HsaConfig;
use crate::vandermonde::{extended_vandermonde, ElementSet};

/// Largest prime the builder will try before giving up.
pub const MAX_SEARCH_PRIME: u64 = 1 << 16;

/// Label attached to schemes built past the feasibility boundary.
pub const INSECURE_LABEL: &str = "insecure_by_construction";

/// User `v` of relay `u`, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId {
    pub u: usize,
    pub v: usize,
}

impl UserId {
    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }

    /// Position in lexicographic `(u, v)` order.
    pub fn ordinal(&self, cfg: &HsaConfig) -> usize {
        (self.u - 1) * cfg.v + (self.v - 1)
    }

    pub fn from_ordinal(k: usize, cfg: &HsaConfig) -> Self {
        Self {
            u: k / cfg.v + 1,
            v: k % cfg.v + 1,
        }
    }

    pub fn is_valid(&self, cfg: &HsaConfig) -> bool {
        (1..=cfg.u).contains(&self.u) && (1..=cfg.v).contains(&self.v)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.u, self.v)
    }
}

impl FromStr for UserId {
    type Err = HsaError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HsaError::Format(format!("bad user label {s:?}, expected \"u,v\""));
        let (u, v) = s.split_once(',').ok_or_else(bad)?;
        let u = u.trim().parse().map_err(|_| bad())?;
        let v = v.trim().parse().map_err(|_| bad())?;
        Ok(Self { u, v })
    }
}

/// All users in lexicographic order.
pub fn all_users(cfg: &HsaConfig) -> Vec<UserId> {
    (0..cfg.users())
        .map(|k| UserId::from_ordinal(k, cfg))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ExtendedVandermonde,
    Baseline,
    External,
}

impl SchemeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::ExtendedVandermonde => "extended_vandermonde",
            SchemeKind::Baseline => "baseline",
            SchemeKind::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeParams {
    pub cfg: HsaConfig,
    pub field: FieldSpec,
    pub gamma: Option<u64>,
    pub elements: ElementSet,
    pub n_source: usize,
}

/// A coefficient matrix together with its user-to-row assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientScheme {
    params: SchemeParams,
    h: FqMatrix,
    /// Row of `h` for each user, indexed by user ordinal.
    row_index: Vec<usize>,
    kind: SchemeKind,
    label: Option<String>,
}

impl CoefficientScheme {
    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn cfg(&self) -> &HsaConfig {
        &self.params.cfg
    }

    pub fn field(&self) -> FieldSpec {
        self.params.field
    }

    pub fn n_source(&self) -> usize {
        self.params.n_source
    }

    pub fn matrix(&self) -> &FqMatrix {
        &self.h
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn row_of(&self, user: UserId) -> usize {
        self.row_index[user.ordinal(&self.params.cfg)]
    }

    /// Coefficient vector `h_{u,v}`.
    pub fn coefficients(&self, user: UserId) -> &[u64] {
        self.h.row(self.row_of(user))
    }

    /// Rows stacked in the user order given.
    pub fn rows_for(&self, users: &[UserId]) -> FqMatrix {
        let idx: Vec<usize> = users.iter().map(|&w| self.row_of(w)).collect();
        self.h.select_rows(&idx)
    }

    /// `H` with rows reordered to lexicographic user order.
    pub fn user_ordered_matrix(&self) -> FqMatrix {
        self.h.select_rows(&self.row_index)
    }

    /// Short human-readable identifier.
    pub fn descriptor(&self) -> String {
        let c = &self.params.cfg;
        format!(
            "{}:U={},V={},T={},q={}",
            self.kind.as_str(),
            c.u,
            c.v,
            c.t,
            self.params.field.q()
        )
    }

    /// Copy of this scheme with one user's coefficient row overwritten. The
    /// result is not validated (it usually breaks the zero row sum) and is
    /// meant for adversarial testing of the auditors.
    pub fn with_row_replaced(&self, user: UserId, row: &[u64]) -> Result<CoefficientScheme> {
        if row.len() != self.h.cols() {
            return Err(HsaError::DimensionMismatch(format!(
                "replacement row has {} entries, expected {}",
                row.len(),
                self.h.cols()
            )));
        }
        let target = self.row_of(user);
        let mut data = self.h.data().to_vec();
        let cols = self.h.cols();
        data[target * cols..(target + 1) * cols].copy_from_slice(row);
        Ok(CoefficientScheme {
            h: FqMatrix::new(self.h.field(), self.h.rows(), cols, data)?,
            kind: SchemeKind::External,
            label: Some("tampered".into()),
            ..self.clone()
        })
    }

    /// Reinterprets this scheme under a different collusion level, keeping
    /// the matrix unchanged.
    pub fn with_collusion_level(&self, t: usize) -> CoefficientScheme {
        let mut out = self.clone();
        out.params.cfg.t = t;
        out
    }
}

/// Source key and the individual keys derived from it, for one input symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub source: Vec<u64>,
    /// Individual keys indexed by user ordinal.
    pub individual: Vec<u64>,
}

impl KeyMaterial {
    pub fn key_of(&self, user: UserId, cfg: &HsaConfig) -> u64 {
        self.individual[user.ordinal(cfg)]
    }
}

/// `Z_{u,v} = h_{u,v} . source` for every user.
pub fn derive_keys(scheme: &CoefficientScheme, source: &[u64]) -> Result<KeyMaterial> {
    if source.len() != scheme.n_source() {
        return Err(HsaError::DimensionMismatch(format!(
            "source key has {} symbols, scheme needs {}",
            source.len(),
            scheme.n_source()
        )));
    }
    let f = scheme.field();
    if let Some(x) = source.iter().find(|&&x| !f.is_canonical(x)) {
        return Err(HsaError::InvalidArgument(format!(
            "source symbol {x} is not a residue mod {}",
            f.q()
        )));
    }
    let individual = all_users(scheme.cfg())
        .iter()
        .map(|&w| f.dot(scheme.coefficients(w), source))
        .collect();
    Ok(KeyMaterial {
        source: source.to_vec(),
        individual,
    })
}

/// Nodes `x_0 = 0`, `x_i = gamma + gamma^2 + ... + gamma^i`.
pub fn build_elements(gamma: u64, count: usize, field: FieldSpec) -> ElementSet {
    let mut xs = Vec::with_capacity(count);
    let mut x = 0;
    let mut power = 1 % field.q();
    for i in 0..count {
        if i > 0 {
            power = field.mul(power, gamma);
            x = field.add(x, power);
        }
        xs.push(x);
    }
    ElementSet::new(xs)
}

/// First `n`-subset of rows (lexicographic) whose square submatrix is
/// singular, where `n` is the column count.
pub fn find_singular_square_submatrix(h: &FqMatrix) -> Option<Vec<usize>> {
    Combinations::new(h.rows(), h.cols())
        .find(|rows| h.select_rows(rows).determinant().expect("square") == 0)
}

fn candidate_matrix(
    cfg: &HsaConfig,
    field: FieldSpec,
    gamma: u64,
) -> Option<(ElementSet, FqMatrix)> {
    let m = cfg.users() - 1;
    let xs = build_elements(gamma, m, field);
    if !xs.is_distinct() {
        return None;
    }
    let h = extended_vandermonde(field, &xs, cfg.source_key_symbols()).ok()?;
    find_singular_square_submatrix(&h)
        .is_none()
        .then_some((xs, h))
}

fn search_gamma_where<P>(cfg: &HsaConfig, field: FieldSpec, accept: P) -> Option<u64>
where
    P: Fn(u64, ElementSet, FqMatrix) -> bool + Sync,
{
    let q = field.q();
    let m = cfg.users() - 1;
    if m as u64 > q || m < cfg.source_key_symbols() {
        return None;
    }
    (2..q)
        .into_par_iter()
        .find_first(|&g| candidate_matrix(cfg, field, g).is_some_and(|(xs, h)| accept(g, xs, h)))
}

/// Smallest `gamma >= 2` whose spaced nodes are distinct and whose
/// extended Vandermonde matrix has every maximal square submatrix
/// nonsingular.
pub fn search_gamma(cfg: &HsaConfig, field: FieldSpec) -> Option<u64> {
    search_gamma_where(cfg, field, |_, _, _| true)
}

fn assemble_vandermonde(
    cfg: HsaConfig,
    field: FieldSpec,
    gamma: u64,
    xs: ElementSet,
    h: FqMatrix,
) -> CoefficientScheme {
    let users = cfg.users();
    // parity row goes to the last user, the others take Vandermonde rows in order
    let row_index = (0..users)
        .map(|k| if k + 1 == users { 0 } else { k + 1 })
        .collect();
    CoefficientScheme {
        params: SchemeParams {
            cfg,
            field,
            gamma: Some(gamma),
            elements: xs,
            n_source: h.cols(),
        },
        h,
        row_index,
        kind: SchemeKind::ExtendedVandermonde,
        label: None,
    }
}

/// Tries a single field. On failure reports the next prime to try.
pub fn build_scheme_at(cfg: &HsaConfig, field: FieldSpec) -> Result<CoefficientScheme> {
    let cfg = HsaConfig::new(cfg.u, cfg.v, cfg.t)?;
    cfg.ensure_feasible()?;
    let accept = |g: u64, xs: ElementSet, h: FqMatrix| {
        let scheme = assemble_vandermonde(cfg, field, g, xs, h);
        matches!(audit::audit(&scheme), Ok(r) if r.is_clean())
    };
    match search_gamma_where(&cfg, field, accept) {
        Some(g) => {
            let (xs, h) = candidate_matrix(&cfg, field, g).expect("accepted candidate");
            Ok(assemble_vandermonde(cfg, field, g, xs, h))
        }
        None => Err(HsaError::SearchExhausted {
            last_q: field.q(),
            next_prime: next_prime(field.q() + 1),
        }),
    }
}

/// Builds the optimal extended-Vandermonde scheme, starting the prime search
/// at `q_hint` (or the smallest prime above `UV`) and advancing until a
/// certified `(q, gamma)` pair is found.
pub fn build_scheme(cfg: &HsaConfig, q_hint: Option<u64>) -> Result<CoefficientScheme> {
    let cfg = HsaConfig::new(cfg.u, cfg.v, cfg.t)?;
    cfg.ensure_feasible()?;
    let mut q = match q_hint {
        Some(q) if !is_prime(q) => return Err(HsaError::NotPrime(q)),
        Some(q) => q,
        None => next_prime(cfg.users() as u64 + 1),
    };
    let mut last = q;
    while q <= MAX_SEARCH_PRIME {
        match build_scheme_at(&cfg, FieldSpec::new(q)?) {
            Ok(s) => return Ok(s),
            Err(HsaError::SearchExhausted { .. }) => {
                last = q;
                q = next_prime(q + 1);
            }
            Err(e) => return Err(e),
        }
    }
    Err(HsaError::SearchExhausted {
        last_q: last,
        next_prime: q,
    })
}

fn baseline_matrix(cfg: &HsaConfig, field: FieldSpec) -> FqMatrix {
    let n = cfg.users() - 1;
    let mut data = FqMatrix::identity(field, n).data().to_vec();
    data.extend(std::iter::repeat_n(field.neg(1), n));
    FqMatrix::new(field, n + 1, n, data).expect("baseline shape")
}

fn baseline_field(cfg: &HsaConfig, q_hint: Option<u64>) -> Result<FieldSpec> {
    FieldSpec::new(q_hint.unwrap_or_else(|| next_prime(cfg.users() as u64 + 1)))
}

fn assemble_baseline(cfg: HsaConfig, field: FieldSpec, label: Option<String>) -> CoefficientScheme {
    let h = baseline_matrix(&cfg, field);
    CoefficientScheme {
        params: SchemeParams {
            cfg,
            field,
            gamma: None,
            elements: ElementSet::new(Vec::new()),
            n_source: h.cols(),
        },
        row_index: (0..cfg.users()).collect(),
        h,
        kind: SchemeKind::Baseline,
        label,
    }
}

/// One-hop baseline: identity keys for all users but the last, whose key is
/// the negated sum of the others.
pub fn build_baseline(cfg: &HsaConfig, q_hint: Option<u64>) -> Result<CoefficientScheme> {
    let cfg = HsaConfig::new(cfg.u, cfg.v, cfg.t)?;
    cfg.ensure_feasible()?;
    Ok(assemble_baseline(cfg, baseline_field(&cfg, q_hint)?, None))
}

/// Baseline matrix for a configuration past the feasibility boundary,
/// labelled [`INSECURE_LABEL`]. Exists to stage the infeasibility attack.
pub fn build_insecure_baseline(cfg: &HsaConfig, q_hint: Option<u64>) -> Result<CoefficientScheme> {
    let cfg = HsaConfig::new(cfg.u, cfg.v, cfg.t)?;
    let label = (!cfg.is_feasible()).then(|| INSECURE_LABEL.to_string());
    Ok(assemble_baseline(cfg, baseline_field(&cfg, q_hint)?, label))
}

/// Wraps an arbitrary matrix (rows in lexicographic user order) as an external
/// scheme after checking shape and the zero row sum.
pub fn external_scheme(cfg: &HsaConfig, h: FqMatrix) -> Result<CoefficientScheme> {
    let cfg = HsaConfig::new(cfg.u, cfg.v, cfg.t)?;
    let row_index = (0..cfg.users()).collect();
    validated(
        cfg,
        h,
        row_index,
        SchemeKind::External,
        None,
        ElementSet::new(Vec::new()),
        None,
    )
}

fn validated(
    cfg: HsaConfig,
    h: FqMatrix,
    row_index: Vec<usize>,
    kind: SchemeKind,
    gamma: Option<u64>,
    elements: ElementSet,
    label: Option<String>,
) -> Result<CoefficientScheme> {
    if h.rows() != cfg.users() {
        return Err(HsaError::Format(format!(
            "matrix has {} rows but the network has {} users",
            h.rows(),
            cfg.users()
        )));
    }
    if h.cols() == 0 {
        return Err(HsaError::Format("matrix has no columns".into()));
    }
    if !h.has_zero_row_sum() {
        return Err(HsaError::CorrectnessViolation(format!(
            "coefficient rows sum to {:?}, not zero",
            h.column_sums()
        )));
    }
    Ok(CoefficientScheme {
        params: SchemeParams {
            cfg,
            field: h.field(),
            gamma,
            elements,
            n_source: h.cols(),
        },
        h,
        row_index,
        kind,
        label,
    })
}

#[derive(Serialize, Deserialize)]
struct SchemeJson {
    #[serde(rename = "U")]
    u: usize,
    #[serde(rename = "V")]
    v: usize,
    #[serde(rename = "T")]
    t: usize,
    q: u64,
    #[serde(default)]
    gamma: Option<u64>,
    #[serde(default = "default_kind")]
    kind: SchemeKind,
    #[serde(default)]
    elements: Vec<u64>,
    #[serde(rename = "H")]
    h: FqMatrix,
    #[serde(default)]
    row_index: Option<Vec<(String, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

fn default_kind() -> SchemeKind {
    SchemeKind::External
}

impl CoefficientScheme {
    pub fn to_json(&self, pretty: bool) -> Result<String> {
        let c = self.params.cfg;
        let raw = SchemeJson {
            u: c.u,
            v: c.v,
            t: c.t,
            q: self.params.field.q(),
            gamma: self.params.gamma,
            kind: self.kind,
            elements: self.params.elements.as_slice().to_vec(),
            h: self.h.clone(),
            row_index: Some(
                all_users(&c)
                    .into_iter()
                    .map(|w| (w.to_string(), self.row_of(w)))
                    .collect(),
            ),
            label: self.label.clone(),
        };
        Ok(if pretty {
            serde_json::to_string_pretty(&raw)?
        } else {
            serde_json::to_string(&raw)?
        })
    }

    /// Loads a persisted scheme, keeping its recorded kind. Built kinds are
    /// re-derived from their parameters and must match the stored matrix.
    pub fn from_json(json: &str) -> Result<CoefficientScheme> {
        let raw: SchemeJson = serde_json::from_str(json)?;
        let cfg = HsaConfig::new(raw.u, raw.v, raw.t)?;
        if raw.h.field().q() != raw.q {
            return Err(HsaError::Format(format!(
                "scheme field q={} but matrix field q={}",
                raw.q,
                raw.h.field().q()
            )));
        }
        let row_index = parse_row_index(&cfg, raw.row_index.as_deref())?;
        let field = raw.h.field();
        let elements = ElementSet::new(raw.elements);
        let scheme = validated(
            cfg, raw.h, row_index, raw.kind, raw.gamma, elements, raw.label,
        )?;
        match scheme.kind {
            SchemeKind::ExtendedVandermonde => {
                let gamma = scheme.params.gamma.ok_or_else(|| {
                    HsaError::Format("extended_vandermonde scheme without gamma".into())
                })?;
                let xs = build_elements(gamma, cfg.users() - 1, field);
                let expected = extended_vandermonde(field, &xs, scheme.h.cols())?;
                let fresh = assemble_vandermonde(cfg, field, gamma, xs, expected);
                if fresh.h != scheme.h
                    || fresh.row_index != scheme.row_index
                    || fresh.params.elements != scheme.params.elements
                {
                    return Err(HsaError::Format(
                        "stored matrix does not match its extended Vandermonde parameters".into(),
                    ));
                }
            }
            SchemeKind::Baseline => {
                if scheme.h != baseline_matrix(&cfg, field)
                    || scheme.row_index != (0..cfg.users()).collect::<Vec<_>>()
                {
                    return Err(HsaError::Format(
                        "stored matrix is not the baseline matrix".into(),
                    ));
                }
            }
            SchemeKind::External => {}
        }
        Ok(scheme)
    }
}

fn parse_row_index(cfg: &HsaConfig, entries: Option<&[(String, usize)]>) -> Result<Vec<usize>> {
    let users = cfg.users();
    let Some(entries) = entries else {
        return Ok((0..users).collect());
    };
    let mut index = vec![usize::MAX; users];
    let mut taken = vec![false; users];
    for (label, row) in entries {
        let w: UserId = label.parse()?;
        if !w.is_valid(cfg) {
            return Err(HsaError::Format(format!("user {w} outside the network")));
        }
        if *row >= users || taken[*row] {
            return Err(HsaError::Format(format!(
                "row {row} out of range or assigned twice"
            )));
        }
        let k = w.ordinal(cfg);
        if index[k] != usize::MAX {
            return Err(HsaError::Format(format!("user {w} listed twice")));
        }
        index[k] = *row;
        taken[*row] = true;
    }
    if index.contains(&usize::MAX) {
        return Err(HsaError::Format(
            "row_index does not cover every user".into(),
        ));
    }
    Ok(index)
}

/// Imports a hand-written or adversarial matrix. The result is always of
/// kind `external`; the zero row sum is enforced.
pub fn import_scheme(json: &str) -> Result<CoefficientScheme> {
    let mut scheme = CoefficientScheme::from_json(json)?;
    scheme.kind = SchemeKind::External;
    Ok(scheme)
}
