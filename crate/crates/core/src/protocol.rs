//! One aggregation round over the two-hop network: users mask their inputs,
//! relays add what they receive, the server adds the relay messages.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HsaError, Result};
use crate::rates::HsaConfig;
use crate::scheme::{all_users, derive_keys, CoefficientScheme, KeyMaterial, UserId};

/// Inputs of every user for one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundInputs {
    /// Input vectors indexed by user ordinal, each of length `l`.
    pub w: Vec<Vec<u64>>,
    pub l: usize,
    pub seed: Option<u64>,
}

impl RoundInputs {
    pub fn new(w: Vec<Vec<u64>>, l: usize) -> Self {
        Self { w, l, seed: None }
    }

    /// Same input vector for every user.
    pub fn constant(cfg: &HsaConfig, symbols: &[u64]) -> Self {
        Self::new(vec![symbols.to_vec(); cfg.users()], symbols.len())
    }

    pub fn of(&self, user: UserId, cfg: &HsaConfig) -> &[u64] {
        &self.w[user.ordinal(cfg)]
    }

    /// Componentwise sum of all inputs.
    pub fn total(&self, scheme: &CoefficientScheme) -> Vec<u64> {
        let f = scheme.field();
        (0..self.l)
            .map(|i| f.sum(self.w.iter().map(|w| w[i])))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledRound {
    pub inputs: RoundInputs,
    /// One independent key draw per symbol position.
    pub keys: Vec<KeyMaterial>,
}

/// Draws inputs and `l` fresh source keys uniformly from `F_q`. Inputs are
/// drawn first (user by user), then source keys (symbol by symbol).
pub fn sample_round(scheme: &CoefficientScheme, l: usize, seed: u64) -> Result<SampledRound> {
    if l == 0 {
        return Err(HsaError::InvalidArgument(
            "input length L must be at least 1".into(),
        ));
    }
    let q = scheme.field().q();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = (0..scheme.cfg().users())
        .map(|_| (0..l).map(|_| rng.gen_range(0..q)).collect())
        .collect();
    let keys = (0..l)
        .map(|_| {
            let source: Vec<u64> = (0..scheme.n_source())
                .map(|_| rng.gen_range(0..q))
                .collect();
            derive_keys(scheme, &source)
        })
        .collect::<Result<_>>()?;
    Ok(SampledRound {
        inputs: RoundInputs {
            w,
            l,
            seed: Some(seed),
        },
        keys,
    })
}

/// Full record of a round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTranscript {
    pub inputs: RoundInputs,
    pub keys: Vec<KeyMaterial>,
    /// User-to-relay messages by user ordinal.
    pub x: Vec<Vec<u64>>,
    /// Relay-to-server messages by relay (0-based).
    pub y: Vec<Vec<u64>>,
    pub decoded: Vec<u64>,
}

impl RoundTranscript {
    pub fn key_vector(&self, user: UserId, cfg: &HsaConfig) -> Vec<u64> {
        self.keys.iter().map(|k| k.key_of(user, cfg)).collect()
    }
}

fn check_shapes(
    scheme: &CoefficientScheme,
    inputs: &RoundInputs,
    keys: &[KeyMaterial],
) -> Result<()> {
    let users = scheme.cfg().users();
    let f = scheme.field();
    if inputs.l == 0 {
        return Err(HsaError::DimensionMismatch("input length L is zero".into()));
    }
    if inputs.w.len() != users {
        return Err(HsaError::DimensionMismatch(format!(
            "{} input vectors for {users} users",
            inputs.w.len()
        )));
    }
    if let Some(w) = inputs.w.iter().find(|w| w.len() != inputs.l) {
        return Err(HsaError::DimensionMismatch(format!(
            "input vector of length {} where L={}",
            w.len(),
            inputs.l
        )));
    }
    if inputs.w.iter().flatten().any(|&x| !f.is_canonical(x)) {
        return Err(HsaError::InvalidArgument(format!(
            "input symbol outside F_{}",
            f.q()
        )));
    }
    if keys.len() != inputs.l {
        return Err(HsaError::DimensionMismatch(format!(
            "{} key draws for L={}",
            keys.len(),
            inputs.l
        )));
    }
    for k in keys {
        if k.individual.len() != users || k.source.len() != scheme.n_source() {
            return Err(HsaError::DimensionMismatch(
                "key material does not match the scheme".into(),
            ));
        }
        if derive_keys(scheme, &k.source)? != *k {
            return Err(HsaError::InvalidArgument(
                "individual keys are not derived from their source".into(),
            ));
        }
    }
    Ok(())
}

/// Computes every message and the decoded sum. Fails with
/// [`HsaError::CorrectnessViolation`] if the server's sum differs from the
/// true input sum.
pub fn run_round(
    scheme: &CoefficientScheme,
    inputs: &RoundInputs,
    keys: &[KeyMaterial],
) -> Result<RoundTranscript> {
    check_shapes(scheme, inputs, keys)?;
    let cfg = *scheme.cfg();
    let f = scheme.field();
    let x: Vec<Vec<u64>> = all_users(&cfg)
        .iter()
        .map(|&w| {
            let k = w.ordinal(&cfg);
            (0..inputs.l)
                .map(|i| f.add(inputs.w[k][i], keys[i].individual[k]))
                .collect()
        })
        .collect();
    let y: Vec<Vec<u64>> = (0..cfg.u)
        .map(|r| {
            (0..inputs.l)
                .map(|i| f.sum((0..cfg.v).map(|j| x[r * cfg.v + j][i])))
                .collect()
        })
        .collect();
    let decoded: Vec<u64> = (0..inputs.l)
        .map(|i| f.sum(y.iter().map(|yu| yu[i])))
        .collect();
    let truth = inputs.total(scheme);
    if decoded != truth {
        return Err(HsaError::CorrectnessViolation(format!(
            "server decoded {decoded:?} but inputs sum to {truth:?}"
        )));
    }
    Ok(RoundTranscript {
        inputs: inputs.clone(),
        keys: keys.to_vec(),
        x,
        y,
        decoded,
    })
}

/// Symbol counts of a round and the rates they imply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedRates {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "L_X")]
    pub l_x: usize,
    #[serde(rename = "L_Y")]
    pub l_y: usize,
    #[serde(rename = "L_Z")]
    pub l_z: usize,
    #[serde(rename = "L_Zsigma")]
    pub l_z_sigma: usize,
}

impl ObservedRates {
    pub fn r_x(&self) -> f64 {
        self.l_x as f64 / self.l as f64
    }

    pub fn r_y(&self) -> f64 {
        self.l_y as f64 / self.l as f64
    }

    pub fn r_z(&self) -> f64 {
        self.l_z as f64 / self.l as f64
    }

    pub fn r_z_sigma(&self) -> f64 {
        self.l_z_sigma as f64 / self.l as f64
    }

    /// Rates as exact integers when every count is a multiple of `L`.
    pub fn integral(&self) -> Option<(usize, usize, usize, usize)> {
        let l = self.l;
        let all = [self.l_x, self.l_y, self.l_z, self.l_z_sigma];
        all.iter()
            .all(|c| c % l == 0)
            .then(|| (self.l_x / l, self.l_y / l, self.l_z / l, self.l_z_sigma / l))
    }
}

/// Longest message, longest individual key and total source-key length,
/// each counted in symbols.
pub fn measure_rates(transcript: &RoundTranscript) -> ObservedRates {
    ObservedRates {
        l: transcript.inputs.l,
        l_x: transcript.x.iter().map(Vec::len).max().unwrap_or(0),
        l_y: transcript.y.iter().map(Vec::len).max().unwrap_or(0),
        l_z: transcript.keys.len(),
        l_z_sigma: transcript.keys.iter().map(|k| k.source.len()).sum(),
    }
}

#[derive(Serialize, Deserialize)]
struct TranscriptJson {
    scheme_ref: String,
    q: u64,
    #[serde(rename = "L")]
    l: usize,
    seed: Option<u64>,
    #[serde(rename = "W")]
    w: BTreeMap<String, Vec<u64>>,
    #[serde(rename = "Z")]
    z: BTreeMap<String, Vec<u64>>,
    source: Vec<Vec<u64>>,
    #[serde(rename = "X")]
    x: BTreeMap<String, Vec<u64>>,
    #[serde(rename = "Y")]
    y: BTreeMap<String, Vec<u64>>,
    decoded: Vec<u64>,
}

impl RoundTranscript {
    pub fn to_json(&self, scheme: &CoefficientScheme, pretty: bool) -> Result<String> {
        let cfg = *scheme.cfg();
        let users = all_users(&cfg);
        let by_user = |vals: &[Vec<u64>]| -> BTreeMap<String, Vec<u64>> {
            users
                .iter()
                .map(|w| (w.to_string(), vals[w.ordinal(&cfg)].clone()))
                .collect()
        };
        let z: Vec<Vec<u64>> = users.iter().map(|&w| self.key_vector(w, &cfg)).collect();
        let raw = TranscriptJson {
            scheme_ref: scheme.descriptor(),
            q: scheme.field().q(),
            l: self.inputs.l,
            seed: self.inputs.seed,
            w: by_user(&self.inputs.w),
            z: by_user(&z),
            source: self.keys.iter().map(|k| k.source.clone()).collect(),
            x: by_user(&self.x),
            y: self
                .y
                .iter()
                .enumerate()
                .map(|(r, v)| ((r + 1).to_string(), v.clone()))
                .collect(),
            decoded: self.decoded.clone(),
        };
        Ok(if pretty {
            serde_json::to_string_pretty(&raw)?
        } else {
            serde_json::to_string(&raw)?
        })
    }

    /// Reloads a transcript and replays it against `scheme`; every stored
    /// message must agree with the replay.
    pub fn from_json(scheme: &CoefficientScheme, json: &str) -> Result<RoundTranscript> {
        let raw: TranscriptJson = serde_json::from_str(json)?;
        if raw.q != scheme.field().q() {
            return Err(HsaError::Format(format!(
                "transcript over F_{} but scheme over F_{}",
                raw.q,
                scheme.field().q()
            )));
        }
        let cfg = *scheme.cfg();
        let mut w = vec![Vec::new(); cfg.users()];
        for (label, vals) in raw.w {
            let user: UserId = label.parse()?;
            if !user.is_valid(&cfg) {
                return Err(HsaError::Format(format!("user {user} outside the network")));
            }
            w[user.ordinal(&cfg)] = vals;
        }
        let keys = raw
            .source
            .iter()
            .map(|s| derive_keys(scheme, s))
            .collect::<Result<Vec<_>>>()?;
        let inputs = RoundInputs {
            w,
            l: raw.l,
            seed: raw.seed,
        };
        let replay = run_round(scheme, &inputs, &keys)?;
        let stored_x: Vec<Option<&Vec<u64>>> = all_users(&cfg)
            .iter()
            .map(|u| raw.x.get(&u.to_string()))
            .collect();
        let x_ok = stored_x.iter().zip(&replay.x).all(|(s, r)| *s == Some(r));
        let y_ok = (0..cfg.u).all(|r| raw.y.get(&(r + 1).to_string()) == Some(&replay.y[r]));
        if !x_ok || !y_ok || raw.decoded != replay.decoded {
            return Err(HsaError::Format(
                "stored messages disagree with the scheme".into(),
            ));
        }
        Ok(replay)
    }
}
