//! Quasimorphisms on braid groups built from the link signature.

use std::collections::HashMap;
use std::fmt;
use std::sync::{OnceLock, RwLock};

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::braid::{full_twist, BraidWord, Letter};
use crate::error::{Error, Result};
use crate::seifert::signature;

/// Default homogenization depth.
pub const DEFAULT_DEPTH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvariantKind {
    /// Writhe, the linking-number homomorphism.
    Writhe,
    RawSignature,
    /// Signature minus the multiple of the writhe that kills the full twist.
    SCombination,
}

impl fmt::Display for InvariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvariantKind::Writhe => "writhe",
            InvariantKind::RawSignature => "raw-signature",
            InvariantKind::SCombination => "s-combination",
        })
    }
}

/// `σ(wᵏ)/k` for `k = 1..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Homogenized {
    pub estimate: f64,
    pub sequence: Vec<f64>,
    /// `K·|a_K − a_{K−1}|`, which bounds the distance to the limit for a
    /// quasimorphism whose increments have settled.
    pub gap: f64,
}

/// Homogenized signature `σ(w^K)/K` with its convergence sequence.
pub fn homogenized_signature(word: &BraidWord, depth: usize) -> Result<Homogenized> {
    if depth < 2 {
        return Err(Error::Invalid(format!("homogenization depth must be at least 2, got {depth}")));
    }
    let mut power = BraidWord::identity(word.strands());
    let mut sequence = Vec::with_capacity(depth);
    for k in 1..=depth {
        power = power.concat(word);
        sequence.push(signature(&power) as f64 / k as f64);
    }
    let last = sequence[depth - 1];
    let gap = depth as f64 * (last - sequence[depth - 2]).abs();
    Ok(Homogenized {
        estimate: last,
        sequence,
        gap,
    })
}

/// Calibrated `sign̄(Δ_n)/lk(Δ_n)` for one strand count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    pub strands: usize,
    pub depth: usize,
    pub ratio: Ratio<i64>,
    /// `σ(Δᵏ)` for `k = 1..=K`.
    pub signatures: Vec<i64>,
}

impl Calibration {
    pub fn ratio_f64(&self) -> f64 {
        self.ratio.to_f64().unwrap_or(f64::NAN)
    }
}

fn cache() -> &'static RwLock<HashMap<(usize, usize), Calibration>> {
    static CACHE: OnceLock<RwLock<HashMap<(usize, usize), Calibration>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Computes `lim σ(Δᵏ)/k` divided by `lk(Δ) = n(n−1)`. The limit is read
/// off the last increment `σ(Δ^K) − σ(Δ^{K−1})`; the last two increments
/// must agree. Results are cached per `(n, K)`.
pub fn calibrate_ratio(strands: usize, depth: usize) -> Result<Calibration> {
    if strands < 2 {
        return Err(Error::Invalid(format!("calibration needs at least 2 strands, got {strands}")));
    }
    if depth < 3 {
        return Err(Error::Invalid(format!("calibration depth must be at least 3, got {depth}")));
    }
    if let Some(c) = cache().read().expect("calibration cache poisoned").get(&(strands, depth)) {
        return Ok(c.clone());
    }
    let delta = full_twist(strands)?;
    let mut power = BraidWord::identity(strands);
    let mut signatures = Vec::with_capacity(depth);
    for _ in 0..depth {
        power = power.concat(&delta);
        signatures.push(signature(&power));
    }
    let inc = |k: usize| signatures[k] - signatures[k - 1];
    let (d1, d0) = (inc(depth - 1), inc(depth - 2));
    if d1 != d0 {
        let a = |k: usize| signatures[k] as f64 / (k + 1) as f64;
        return Err(Error::NotCauchy {
            gap: depth as f64 * (a(depth - 1) - a(depth - 2)).abs(),
            tolerance: 0.0,
        });
    }
    let lk = (strands * (strands - 1)) as i64;
    let c = Calibration {
        strands,
        depth,
        ratio: Ratio::new(d1, lk),
        signatures,
    };
    log::debug!("calibrated ratio for {strands} strands: {}", c.ratio);
    cache()
        .write()
        .expect("calibration cache poisoned")
        .insert((strands, depth), c.clone());
    Ok(c)
}

/// A braid quasimorphism as used in the Monte Carlo integrand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmOnBraids {
    pub kind: InvariantKind,
    /// Calibrated ratio together with the strand count it belongs to.
    pub calibration: Option<(usize, Ratio<i64>)>,
    pub depth: usize,
    /// Homogenize every word before evaluating (`K`-fold powering).
    pub homogenize: bool,
}

impl QmOnBraids {
    pub fn writhe() -> Self {
        QmOnBraids {
            kind: InvariantKind::Writhe,
            calibration: None,
            depth: DEFAULT_DEPTH,
            homogenize: false,
        }
    }

    pub fn raw_signature() -> Self {
        QmOnBraids {
            kind: InvariantKind::RawSignature,
            ..QmOnBraids::writhe()
        }
    }

    /// s-combination calibrated for `strands`.
    pub fn s_combination(strands: usize, depth: usize) -> Result<Self> {
        let c = calibrate_ratio(strands, depth.max(3))?;
        Ok(QmOnBraids {
            kind: InvariantKind::SCombination,
            calibration: Some((strands, c.ratio)),
            depth,
            homogenize: false,
        })
    }

    pub fn homogenized(mut self, on: bool) -> Self {
        self.homogenize = on;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Result<Self> {
        if depth < 1 {
            return Err(Error::Invalid("homogenization depth must be positive".into()));
        }
        self.depth = depth;
        Ok(self)
    }

    fn signature_part(&self, word: &BraidWord) -> Result<f64> {
        if self.homogenize {
            Ok(homogenized_signature(word, self.depth.max(2))?.estimate)
        } else {
            Ok(signature(word) as f64)
        }
    }

    pub fn evaluate(&self, word: &BraidWord) -> Result<f64> {
        match self.kind {
            InvariantKind::Writhe => Ok(word.writhe() as f64),
            InvariantKind::RawSignature => self.signature_part(word),
            InvariantKind::SCombination => s_value(word, self),
        }
    }
}

/// `σ̄(w) − ratio·writhe(w)`, with `σ̄` the `K`-term homogenization. If
/// `qm.homogenize` is off the raw signature is used instead.
pub fn s_value(word: &BraidWord, qm: &QmOnBraids) -> Result<f64> {
    let (n, ratio) = qm.calibration.ok_or(Error::Uncalibrated(word.strands()))?;
    if n != word.strands() {
        return Err(Error::Uncalibrated(word.strands()));
    }
    if word.is_empty() {
        return Ok(0.0);
    }
    let correction = (ratio * word.writhe()).to_f64().unwrap_or(f64::NAN);
    Ok(qm.signature_part(word)? - correction)
}

/// Empirical `max |r(xy) − r(x) − r(y)|` over `trials` sampled pairs.
pub fn defect_estimate<S>(qm: &QmOnBraids, mut sampler: S, trials: usize) -> Result<f64>
where
    S: FnMut() -> (BraidWord, BraidWord),
{
    if trials == 0 {
        return Err(Error::Invalid("defect estimate needs at least one trial".into()));
    }
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (x, y) = sampler();
        let d = qm.evaluate(&x.concat(&y))? - qm.evaluate(&x)? - qm.evaluate(&y)?;
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

/// Uniformly random word of `len` letters on `strands` strands.
pub fn random_word<R: Rng + ?Sized>(rng: &mut R, strands: usize, len: usize) -> BraidWord {
    let gens: Vec<i64> = (0..len)
        .map(|_| {
            let k = rng.gen_range(1..strands as i64);
            if rng.gen::<bool>() {
                k
            } else {
                -k
            }
        })
        .collect();
    BraidWord::from_signed(strands, &gens).expect("generators are in range")
}

/// Random pure braid: a random word followed by positive letters that
/// sort the strands back into place.
pub fn random_pure_word<R: Rng + ?Sized>(rng: &mut R, strands: usize, len: usize) -> BraidWord {
    let mut word = random_word(rng, strands, len);
    let mut arr: Vec<usize> = (0..strands).collect();
    for l in word.letters() {
        arr.swap(l.pos - 1, l.pos);
    }
    let mut swapped = true;
    while swapped {
        swapped = false;
        for k in 0..strands - 1 {
            if arr[k] > arr[k + 1] {
                arr.swap(k, k + 1);
                word.push(Letter::new(k + 1, 1));
                swapped = true;
            }
        }
    }
    word
}
