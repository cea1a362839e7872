//! Monte Carlo estimation of `Φ(f) = ∫ r(γ(f; x)) dν(x)` over configurations
//! of `n` points on the sphere.
//!
//! Sample `i` draws its configuration and projection direction from the
//! ChaCha8 stream `i` of the run seed. Rejected configurations are redrawn
//! from the same stream. Per-sample values are collected in index order and
//! summed sequentially, so results do not depend on the thread count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{sample_direction, sample_uniform, MeasureConvention};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flow::{lp_length, Exponent, FlowSpec};
use crate::qm::{InvariantKind, QmOnBraids};
use crate::quad::QuadOptions;
use crate::trace::{base_tuple, build_loop, ConfigTuple, LoopOptions, DEFAULT_BASE_RADIUS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub n_points: usize,
    pub samples: usize,
    pub seed: u64,
    pub measure: MeasureConvention,
    pub loop_options: LoopOptions,
    pub base_radius: f64,
    /// Largest tolerated fraction of rejected draws.
    pub rejection_ceiling: f64,
    pub max_attempts: usize,
    pub omega_retries: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl EstimatorConfig {
    pub fn new(n_points: usize, samples: usize, seed: u64) -> Self {
        EstimatorConfig {
            n_points,
            samples,
            seed,
            measure: MeasureConvention::PROBABILITY,
            loop_options: LoopOptions::default(),
            base_radius: DEFAULT_BASE_RADIUS,
            rejection_ceiling: 0.05,
            max_attempts: 64,
            omega_retries: 8,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_measure(mut self, measure: MeasureConvention) -> Self {
        self.measure = measure;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::Invalid(format!("need at least 2 points, got {}", self.n_points)));
        }
        if self.samples < 2 {
            return Err(Error::Invalid(format!("need at least 2 samples, got {}", self.samples)));
        }
        if !(0.0..1.0).contains(&self.rejection_ceiling) || self.max_attempts == 0 {
            return Err(Error::Invalid("bad rejection settings".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QMEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub rejected: usize,
    pub n_points: usize,
    pub duration: f64,
    pub invariant_kind: InvariantKind,
    pub seed: u64,
}

/// `g(x) = r([l(x)])` for one configuration and projection direction.
pub fn integrand(
    spec: &FlowSpec,
    x: &ConfigTuple,
    qm: &QmOnBraids,
    omega: Complex64,
    base: &ConfigTuple,
    opts: &LoopOptions,
    omega_retries: usize,
) -> Result<f64> {
    let lp = build_loop(spec, x, base, opts)?;
    let (word, _) = lp.extract_braid_retrying(omega, omega_retries)?;
    qm.evaluate(&word)
}

struct Draws {
    /// `values[i][k]`: sample `i`, flow `k`.
    values: Vec<Vec<f64>>,
    rejected: usize,
}

fn draw_sample(specs: &[FlowSpec], qm: &QmOnBraids, cfg: &EstimatorConfig, base: &ConfigTuple, index: usize) -> Result<(Vec<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut last = None;
    for attempt in 0..cfg.max_attempts {
        let pts: Vec<_> = (0..cfg.n_points).map(|_| sample_uniform(&mut rng)).collect();
        let omega = sample_direction(&mut rng);
        let result = ConfigTuple::from_chart(&pts, cfg.loop_options.separation).and_then(|x| {
            specs
                .iter()
                .map(|s| integrand(s, &x, qm, omega, base, &cfg.loop_options, cfg.omega_retries))
                .collect::<Result<Vec<f64>>>()
        });
        match result {
            Ok(v) => return Ok((v, attempt)),
            Err(e) if e.is_rejection() => {
                log::trace!("sample {index} attempt {attempt} rejected: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Rejected(format!(
        "sample {index}: {} consecutive rejections, last: {}",
        cfg.max_attempts,
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn draw(specs: &[FlowSpec], qm: &QmOnBraids, cfg: &EstimatorConfig) -> Result<Draws> {
    cfg.validate()?;
    let base = base_tuple(cfg.n_points, cfg.base_radius)?;
    let results = cfg.exec.map_indexed(cfg.samples, |i| draw_sample(specs, qm, cfg, &base, i));
    let mut values = Vec::with_capacity(cfg.samples);
    let mut rejected = 0;
    for r in results {
        let (v, rej) = r.map_err(|e| match e {
            Error::Rejected(_) => Error::RejectionCeiling {
                rejected: cfg.max_attempts,
                attempted: cfg.max_attempts,
            },
            other => other,
        })?;
        rejected += rej;
        values.push(v);
    }
    let attempted = rejected + cfg.samples;
    if rejected as f64 > cfg.rejection_ceiling * attempted as f64 {
        return Err(Error::RejectionCeiling { rejected, attempted });
    }
    if rejected > 0 {
        log::info!("{rejected} of {attempted} draws rejected");
    }
    Ok(Draws { values, rejected })
}

/// Mean and standard error of the mean, summed in order.
fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn estimate_from(column: impl Iterator<Item = f64> + Clone, mass: f64, draws: &Draws, duration: f64, qm: &QmOnBraids, cfg: &EstimatorConfig) -> QMEstimate {
    let (m, se) = mean_stderr(column);
    QMEstimate {
        value: mass * m,
        stderr: mass * se,
        samples: cfg.samples,
        rejected: draws.rejected,
        n_points: cfg.n_points,
        duration,
        invariant_kind: qm.kind,
        seed: cfg.seed,
    }
}

/// `Φ(f)` as the sample mean of the integrand times the configuration-space
/// mass of the chosen measure convention.
pub fn phi_estimate(spec: &FlowSpec, qm: &QmOnBraids, cfg: &EstimatorConfig) -> Result<QMEstimate> {
    let draws = draw(std::slice::from_ref(spec), qm, cfg)?;
    let mass = cfg.measure.product_mass(cfg.n_points);
    Ok(estimate_from(draws.values.iter().map(|v| v[0]), mass, &draws, spec.duration(), qm, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiBarEstimate {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub per_t: Vec<QMEstimate>,
    /// Mean residual of `Φ(f_T)` from the fitted line, per duration.
    pub residuals: Vec<f64>,
    pub residual_stderr: Vec<f64>,
    /// Some per-T residual exceeds three of its standard errors.
    pub nonlinear: bool,
    pub samples: usize,
    pub rejected: usize,
    pub n_points: usize,
    pub invariant_kind: InvariantKind,
    pub seed: u64,
}

/// Slope of `T ↦ Φ(f_T)` over `durations`, with the same configurations
/// and directions reused for every duration.
pub fn phi_bar_estimate(spec: &FlowSpec, durations: &[f64], qm: &QmOnBraids, cfg: &EstimatorConfig) -> Result<PhiBarEstimate> {
    if durations.len() < 3 {
        return Err(Error::Invalid(format!("need at least 3 durations, got {}", durations.len())));
    }
    if durations.windows(2).any(|w| !(w[1] > w[0])) || !(durations[0] > 0.0) {
        return Err(Error::Invalid("durations must be positive and increasing".into()));
    }
    let specs = durations.iter().map(|&t| spec.with_duration(t)).collect::<Result<Vec<_>>>()?;
    let draws = draw(&specs, qm, cfg)?;
    let mass = cfg.measure.product_mass(cfg.n_points);
    let m = durations.len();
    let tbar = durations.iter().sum::<f64>() / m as f64;
    let sxx: f64 = durations.iter().map(|t| (t - tbar) * (t - tbar)).sum();
    // Per-sample line fits.
    let fits: Vec<(f64, f64)> = draws
        .values
        .iter()
        .map(|g| {
            let gbar = g.iter().sum::<f64>() / m as f64;
            let b = durations.iter().zip(g).map(|(t, y)| (t - tbar) * (y - gbar)).sum::<f64>() / sxx;
            (gbar - b * tbar, b)
        })
        .collect();
    let (slope, stderr) = mean_stderr(fits.iter().map(|f| f.1));
    let (intercept, _) = mean_stderr(fits.iter().map(|f| f.0));
    let mut per_t = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    let mut residual_stderr = Vec::with_capacity(m);
    let mut nonlinear = false;
    for (k, &t) in durations.iter().enumerate() {
        per_t.push(estimate_from(draws.values.iter().map(|v| v[k]), mass, &draws, t, qm, cfg));
        let (r, se) = mean_stderr(draws.values.iter().zip(&fits).map(|(v, (a, b))| v[k] - a - b * t));
        if r.abs() > 3.0 * se + 1e-12 {
            nonlinear = true;
        }
        residuals.push(mass * r);
        residual_stderr.push(mass * se);
    }
    if nonlinear {
        log::warn!("Φ(f_T) deviates from a line beyond 3σ at some T");
    }
    Ok(PhiBarEstimate {
        slope: mass * slope,
        stderr: mass * stderr,
        intercept: mass * intercept,
        per_t,
        residuals,
        residual_stderr,
        nonlinear,
        samples: cfg.samples,
        rejected: draws.rejected,
        n_points: cfg.n_points,
        invariant_kind: qm.kind,
        seed: cfg.seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectEstimate {
    /// Mean of `g_{fg} − g_f − g_g`; its absolute value estimates the defect.
    pub value: f64,
    pub stderr: f64,
    pub phi_fg: QMEstimate,
    pub phi_f: QMEstimate,
    pub phi_g: QMEstimate,
}

/// `Φ(fg) − Φ(f) − Φ(g)` from paired samples.
pub fn qm_property_monitor(f: &FlowSpec, g: &FlowSpec, qm: &QmOnBraids, cfg: &EstimatorConfig) -> Result<DefectEstimate> {
    let fg = f.compose(g)?;
    let draws = draw(&[fg.clone(), f.clone(), g.clone()], qm, cfg)?;
    let mass = cfg.measure.product_mass(cfg.n_points);
    let (d, se) = mean_stderr(draws.values.iter().map(|v| v[0] - v[1] - v[2]));
    let col = |k: usize, t: f64| estimate_from(draws.values.iter().map(move |v| v[k]), mass, &draws, t, qm, cfg);
    Ok(DefectEstimate {
        value: mass * d,
        stderr: mass * se,
        phi_fg: col(0, fg.duration()),
        phi_f: col(1, f.duration()),
        phi_g: col(2, g.duration()),
    })
}

/// `|Φ̄(f)| / ‖f‖_p` for each flow, the empirical Lipschitz ratio of the
/// homogenized quasimorphism against the Lᵖ length.
pub fn lipschitz_ratios(specs: &[FlowSpec], durations: &[f64], p: Exponent, qm: &QmOnBraids, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    specs
        .iter()
        .map(|s| {
            let unit = s.with_duration(1.0)?;
            let slope = phi_bar_estimate(&unit, durations, qm, cfg)?.slope;
            Ok(slope.abs() / lp_length(&unit, p, QuadOptions::default())?)
        })
        .collect()
}
