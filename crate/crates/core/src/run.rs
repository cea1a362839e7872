//! Reproducible experiment runs behind the command-line tool.
//!
//! Each command takes a JSON configuration, fills in defaults, hashes the
//! canonical form of the effective configuration and produces CSV and JSON
//! artifacts plus an exit code. Nothing here touches the file system except
//! [`Outcome::write_to`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{default_annuli, default_psi_grid, embedding_report, gg_rhs_flow, psi0_bound_scan, psi_from_psi0};
use crate::chart::{sample_direction, sample_uniform, MeasureConvention};
use crate::error::{Error, Result};
use crate::estimator::{phi_bar_estimate, phi_estimate, qm_property_monitor, EstimatorConfig, QMEstimate};
use crate::exec::Exec;
use crate::flow::{lp_length, Exponent, FlowSpec};
use crate::profile::RadialProfile;
use crate::qm::{InvariantKind, QmOnBraids, DEFAULT_DEPTH};
use crate::quad::QuadOptions;
use crate::trace::{base_tuple, build_loop, ConfigTuple, LoopOptions, LoopTrace, ShortPathMode, DEFAULT_BASE_RADIUS};

pub const ARTIFACT_VERSION: &str = concat!("spherebraid/", env!("CARGO_PKG_VERSION"));

pub const EXIT_PASS: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 2;
pub const EXIT_REJECTION: i32 = 3;
pub const EXIT_INVALID: i32 = 4;

/// Keys that do not affect results and are left out of the hash.
const UNHASHED_KEYS: [&str; 2] = ["out", "threads"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GgCheck,
    PsiBound,
    EmbedDemo,
    BraidOfFlow,
    CoareaCheck,
    LpLength,
    PhiEstimate,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::GgCheck,
        Command::PsiBound,
        Command::EmbedDemo,
        Command::BraidOfFlow,
        Command::CoareaCheck,
        Command::LpLength,
        Command::PhiEstimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GgCheck => "gg-check",
            Command::PsiBound => "psi-bound",
            Command::EmbedDemo => "embed-demo",
            Command::BraidOfFlow => "braid-of-flow",
            Command::CoareaCheck => "coarea-check",
            Command::LpLength => "lp-length",
            Command::PhiEstimate => "phi-estimate",
        }
    }

    fn stem(self) -> String {
        self.name().replace('-', "_")
    }

    pub fn from_name(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    #[default]
    #[serde(rename = "prob")]
    Prob,
    #[serde(rename = "2pi")]
    TwoPi,
}

impl Measure {
    pub fn parse(s: &str) -> Result<Measure> {
        match s {
            "prob" => Ok(Measure::Prob),
            "2pi" => Ok(Measure::TwoPi),
            _ => Err(Error::Parse(format!("measure must be 'prob' or '2pi', got {s:?}"))),
        }
    }

    pub fn convention(self) -> MeasureConvention {
        match self {
            Measure::Prob => MeasureConvention::PROBABILITY,
            Measure::TwoPi => MeasureConvention::FUBINI_STUDY,
        }
    }
}

/// Result of one command: exit code, a console summary and named artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub stdout: String,
    pub files: BTreeMap<String, String>,
}

impl Outcome {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    pub fn json(&self, name: &str) -> Option<Value> {
        self.files.get(name).and_then(|s| serde_json::from_str(s).ok())
    }
}

/// Exit code for an error.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Invalid(_) | Error::Parse(_) => EXIT_INVALID,
        Error::RejectionCeiling { .. }
        | Error::Rejected(_)
        | Error::Degenerate(_)
        | Error::Antipodal
        | Error::AtInfinity
        | Error::Refinement(_)
        | Error::Singular(_) => EXIT_REJECTION,
        _ => EXIT_TOLERANCE,
    }
}

fn format_number(x: f64) -> String {
    if x.is_finite() && x == x.trunc() && x.abs() < 9.007_199_254_740_992e15 {
        format!("{}", x as i64)
    } else if x.is_finite() {
        format!("{x:e}")
    } else {
        "null".into()
    }
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => out.push_str(&i.to_string()),
            (None, Some(u)) => out.push_str(&u.to_string()),
            _ => out.push_str(&format_number(n.as_f64().unwrap_or(f64::NAN))),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(x, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
    }
}

/// Rewrites integral floating-point numbers as integers, recursively, so
/// `5.0` and `5` configure the same run.
pub fn normalize_numbers(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.as_i64().is_none() && n.as_u64().is_none() => match n.as_f64() {
            Some(x) if x == x.trunc() && x.abs() < 9.007_199_254_740_992e15 => json!(x as i64),
            _ => v.clone(),
        },
        Value::Array(items) => Value::Array(items.iter().map(normalize_numbers).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, x)| (k.clone(), normalize_numbers(x))).collect()),
        _ => v.clone(),
    }
}

/// Canonical JSON text: sorted keys, no whitespace, integral numbers
/// written as integers and all other numbers in shortest exponent form.
pub fn canonical_json(v: &Value) -> String {
    let mut s = String::new();
    write_canonical(v, &mut s);
    s
}

/// SHA-256 of the canonical form of `{"command": .., "config": ..}`.
pub fn config_hash(cmd: Command, config: &Value) -> String {
    let mut cfg = config.clone();
    if let Value::Object(m) = &mut cfg {
        for k in UNHASHED_KEYS {
            m.remove(k);
        }
    }
    let doc = json!({ "command": cmd.name(), "config": cfg });
    hex::encode(Sha256::digest(canonical_json(&doc).as_bytes()))
}

/// Simple CSV table with a header row and LF line endings.
struct Table {
    out: String,
}

impl Table {
    fn new(header: &[&str]) -> Table {
        let mut out = header.join(",");
        out.push('\n');
        Table { out }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    fn finish(self) -> String {
        self.out
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn parse_config<T: DeserializeOwned + Serialize>(config: &Value) -> Result<(T, Value)> {
    let typed: T = serde_json::from_value(config.clone()).map_err(|e| Error::Invalid(format!("bad config: {e}")))?;
    let effective = serde_json::to_value(&typed).map_err(|e| Error::Internal(e.to_string()))?;
    if let (Value::Object(given), Value::Object(known)) = (config, &effective) {
        for k in given.keys() {
            if !known.contains_key(k) && !UNHASHED_KEYS.contains(&k.as_str()) {
                log::warn!("ignoring unknown config key {k:?}");
            }
        }
    }
    Ok((typed, effective))
}

fn with_header(cmd: Command, effective: &Value, seed: Option<u64>, mut body: Map<String, Value>) -> String {
    body.insert("command".into(), json!(cmd.name()));
    body.insert("artifact_version".into(), json!(ARTIFACT_VERSION));
    body.insert("config_hash".into(), json!(config_hash(cmd, effective)));
    body.insert("seed".into(), json!(seed));
    body.insert("config".into(), effective.clone());
    let mut s = serde_json::to_string_pretty(&Value::Object(body)).expect("JSON values serialize");
    s.push('\n');
    s
}

fn to_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Runs `cmd` with the given (already merged) configuration. Errors are
/// turned into an exit code and a diagnostic JSON artifact.
pub fn execute(cmd: Command, config: &Value, exec: Exec) -> Outcome {
    let config = &normalize_numbers(config);
    let result = match cmd {
        Command::GgCheck => gg_check(config, exec),
        Command::PsiBound => psi_bound(config),
        Command::EmbedDemo => embed_demo(config),
        Command::BraidOfFlow => braid_of_flow(config),
        Command::CoareaCheck => coarea_check(config, exec),
        Command::LpLength => lp_length_cmd(config),
        Command::PhiEstimate => phi_estimate_cmd(config, exec),
    };
    result.unwrap_or_else(|e| {
        let code = exit_code_for(&e);
        let seed = config.get("seed").and_then(Value::as_u64);
        let mut body = Map::new();
        body.insert("error".into(), json!(e.to_string()));
        body.insert("exit_code".into(), json!(code));
        let mut files = BTreeMap::new();
        files.insert(format!("{}.json", cmd.stem()), with_header(cmd, config, seed, body));
        Outcome {
            exit_code: code,
            stdout: format!("{}: error: {e}\n", cmd.name()),
            files,
        }
    })
}

fn default_step() -> RadialProfile {
    RadialProfile::step_at_area_coordinate(1.0, 0.5, 0.0).expect("valid default step")
}

fn one_to_eight() -> Vec<f64> {
    (1..=8).map(f64::from).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GgCheckConfig {
    pub profile: RadialProfile,
    pub weight: f64,
    pub n_points: usize,
    /// Half the point count in the closed formula; defaults to `n_points/2`.
    pub gg_n: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub t_list: Vec<f64>,
    pub measure: Measure,
    pub invariant: InvariantKind,
    pub depth: usize,
    pub rel_tolerance: f64,
    pub sigmas: f64,
}

impl Default for GgCheckConfig {
    fn default() -> Self {
        GgCheckConfig {
            profile: default_step(),
            weight: 1.0,
            n_points: 4,
            gg_n: None,
            samples: 2000,
            seed: 1,
            t_list: one_to_eight(),
            measure: Measure::Prob,
            invariant: InvariantKind::SCombination,
            depth: DEFAULT_DEPTH,
            rel_tolerance: 0.1,
            sigmas: 3.0,
        }
    }
}

fn make_qm(kind: InvariantKind, n_points: usize, depth: usize) -> Result<QmOnBraids> {
    match kind {
        InvariantKind::Writhe => Ok(QmOnBraids::writhe()),
        InvariantKind::RawSignature => QmOnBraids::raw_signature().with_depth(depth),
        InvariantKind::SCombination => QmOnBraids::s_combination(n_points, depth),
    }
}

fn estimates_table(rows: &[QMEstimate]) -> String {
    let mut t = Table::new(&["T", "phi", "stderr", "samples", "rejected"]);
    for e in rows {
        t.row([num(e.duration), num(e.value), num(e.stderr), e.samples.to_string(), e.rejected.to_string()]);
    }
    t.finish()
}

fn gg_check(config: &Value, exec: Exec) -> Result<Outcome> {
    let (cfg, effective): (GgCheckConfig, Value) = parse_config(config)?;
    if cfg.n_points < 4 || cfg.n_points % 2 != 0 {
        return Err(Error::Invalid(format!("gg-check needs an even point count >= 4, got {}", cfg.n_points)));
    }
    let gg_n = cfg.gg_n.unwrap_or(cfg.n_points / 2);
    let spec = FlowSpec::single(cfg.profile.clone(), cfg.weight, 1.0)?;
    let qm = make_qm(cfg.invariant, cfg.n_points, cfg.depth)?;
    let est_cfg = EstimatorConfig::new(cfg.n_points, cfg.samples, cfg.seed)
        .with_measure(cfg.measure.convention())
        .with_exec(exec);
    let est = phi_bar_estimate(&spec, &cfg.t_list, &qm, &est_cfg)?;
    let gg = gg_rhs_flow(&spec, gg_n)?;
    let expected = gg * cfg.measure.convention().product_mass(cfg.n_points);
    let allowed = (cfg.sigmas * est.stderr).max(cfg.rel_tolerance * expected.abs()).max(1e-9);
    let deviation = (est.slope - expected).abs();
    let pass = deviation <= allowed;
    let mut body = Map::new();
    body.insert("slope".into(), json!(est.slope));
    body.insert("slope_stderr".into(), json!(est.stderr));
    body.insert("intercept".into(), json!(est.intercept));
    body.insert("gg_rhs".into(), json!(gg));
    body.insert("expected_slope".into(), json!(expected));
    body.insert("deviation".into(), json!(deviation));
    body.insert("allowed_deviation".into(), json!(allowed));
    body.insert("nonlinear".into(), json!(est.nonlinear));
    body.insert("residuals".into(), json!(est.residuals));
    body.insert("rejected".into(), json!(est.rejected));
    body.insert("verdict".into(), json!(verdict(pass)));
    let stem = Command::GgCheck.stem();
    let mut files = BTreeMap::new();
    files.insert(format!("{stem}.csv"), estimates_table(&est.per_t));
    files.insert(format!("{stem}.json"), with_header(Command::GgCheck, &effective, Some(cfg.seed), body));
    Ok(Outcome {
        exit_code: if pass { EXIT_PASS } else { EXIT_TOLERANCE },
        stdout: format!(
            "gg-check: {} slope {} ± {} expected {} (allowed deviation {})\n",
            verdict(pass),
            est.slope,
            est.stderr,
            expected,
            allowed
        ),
        files,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PsiBoundConfig {
    pub grid: Vec<f64>,
    pub tol: f64,
}

impl Default for PsiBoundConfig {
    fn default() -> Self {
        PsiBoundConfig {
            grid: default_psi_grid(),
            tol: 1e-8,
        }
    }
}

fn psi_bound(config: &Value) -> Result<Outcome> {
    let (cfg, effective): (PsiBoundConfig, Value) = parse_config(config)?;
    let scan = psi0_bound_scan(&cfg.grid, cfg.tol)?;
    let mut t = Table::new(&["abs_a", "value", "ratio"]);
    for r in &scan.rows {
        t.row([num(r.abs_a), num(r.psi0), num(r.ratio)]);
    }
    let mut checks = Vec::new();
    let finite = scan.rows.iter().all(|r| r.ratio.is_finite());
    checks.push(("ratio_finite", finite));
    for r in &scan.rows {
        if r.abs_a == 0.0 {
            checks.push(("origin_value", ((r.psi0 - PI * PI / 2.0) / (PI * PI / 2.0)).abs() <= 1e-3));
        }
        if r.abs_a == 100.0 {
            checks.push(("tail_at_100", (r.psi0 * r.abs_a / PI - 1.0).abs() <= 0.02));
        }
    }
    let pass = checks.iter().all(|c| c.1);
    let mut body = Map::new();
    body.insert("c_star".into(), json!(scan.c_star));
    body.insert("argmax_abs_a".into(), json!(scan.argmax));
    body.insert("c1".into(), json!(scan.c1));
    body.insert("c2".into(), json!(scan.c2));
    // ψ = 2(|a|² + 1)ψ₀, so ψ ≤ 2·C*·(1 + |a|²)^{1/2}.
    body.insert("psi_bound_constant".into(), json!(2.0 * scan.c_star));
    body.insert(
        "psi_over_sqrt".into(),
        json!(scan
            .rows
            .iter()
            .map(|r| psi_from_psi0(r.abs_a, r.psi0) / (1.0 + r.abs_a * r.abs_a).sqrt())
            .collect::<Vec<_>>()),
    );
    body.insert("checks".into(), json!(checks.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>()));
    body.insert("verdict".into(), json!(verdict(pass)));
    let stem = Command::PsiBound.stem();
    let mut files = BTreeMap::new();
    files.insert(format!("{stem}.csv"), t.finish());
    files.insert(format!("{stem}.json"), with_header(Command::PsiBound, &effective, None, body));
    Ok(Outcome {
        exit_code: if pass { EXIT_PASS } else { EXIT_TOLERANCE },
        stdout: format!("psi-bound: {} C* = {} at |a| = {}\n", verdict(pass), scan.c_star, scan.argmax),
        files,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub d: usize,
    pub p: f64,
    pub vectors: usize,
    pub seed: u64,
    /// Defaults to the concentric annuli recipe.
    pub profiles: Option<Vec<RadialProfile>>,
    pub min_normalized_det: f64,
    pub max_spread: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            d: 2,
            p: 3.0,
            vectors: 20,
            seed: 1,
            profiles: None,
            min_normalized_det: 1e-6,
            max_spread: 20.0,
        }
    }
}

fn embed_demo(config: &Value) -> Result<Outcome> {
    let (cfg, effective): (EmbedConfig, Value) = parse_config(config)?;
    if !(1..=4).contains(&cfg.d) {
        return Err(Error::Invalid(format!("embedding dimension must be 1..=4, got {}", cfg.d)));
    }
    let profiles = match &cfg.profiles {
        Some(p) if p.len() == cfg.d => p.clone(),
        Some(p) => return Err(Error::Invalid(format!("{} profiles given for d = {}", p.len(), cfg.d))),
        None => default_annuli(cfg.d)?,
    };
    let p = Exponent::finite(cfg.p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vectors: Vec<Vec<f64>> = (0..cfg.vectors)
        .map(|_| (0..cfg.d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let report = embedding_report(&profiles, &vectors, p)?;
    let mut header: Vec<String> = (0..cfg.d).map(|i| format!("v{i}")).collect();
    header.extend(["lower", "upper", "ratio"].map(String::from));
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for b in &report.bounds {
        let mut cells: Vec<String> = b.v.iter().map(|&x| num(x)).collect();
        cells.extend([num(b.lower), num(b.upper), b.ratio.map(num).unwrap_or_default()]);
        t.row(cells);
    }
    let pass = report.matrix.normalized_determinant.abs() > cfg.min_normalized_det
        && report.ratio_spread.is_finite()
        && report.ratio_spread < cfg.max_spread;
    let mut body = to_map(serde_json::to_value(&report).map_err(|e| Error::Internal(e.to_string()))?);
    body.insert("verdict".into(), json!(verdict(pass)));
    let stem = Command::EmbedDemo.stem();
    let mut files = BTreeMap::new();
    files.insert(format!("{stem}.csv"), t.finish());
    files.insert(format!("{stem}.json"), with_header(Command::EmbedDemo, &effective, Some(cfg.seed), body));
    Ok(Outcome {
        exit_code: if pass { EXIT_PASS } else { EXIT_TOLERANCE },
        stdout: format!(
            "embed-demo: {} d = {} normalized det {} ratio spread {}\n",
            verdict(pass),
            cfg.d,
            report.matrix.normalized_determinant,
            report.ratio_spread
        ),
        files,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BraidOfFlowConfig {
    pub profile: RadialProfile,
    pub weight: f64,
    pub duration: f64,
    /// Chart coordinates `[re, im]`; sampled from the seed when absent.
    pub points: Option<Vec<[f64; 2]>>,
    pub n_points: usize,
    /// Projection direction angle in radians; sampled when absent.
    pub omega_angle: Option<f64>,
    pub seed: u64,
    pub mode: ShortPathMode,
    pub base_radius: f64,
    pub retries: usize,
}

impl Default for BraidOfFlowConfig {
    fn default() -> Self {
        BraidOfFlowConfig {
            profile: default_step(),
            weight: 1.0,
            duration: 1.0,
            points: None,
            n_points: 2,
            omega_angle: None,
            seed: 1,
            mode: ShortPathMode::Linear,
            base_radius: DEFAULT_BASE_RADIUS,
            retries: 8,
        }
    }
}

fn braid_of_flow(config: &Value) -> Result<Outcome> {
    let (cfg, effective): (BraidOfFlowConfig, Value) = parse_config(config)?;
    let opts = LoopOptions {
        mode: cfg.mode,
        ..LoopOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spec = FlowSpec::single(cfg.profile.clone(), cfg.weight, cfg.duration)?;
    let x = match &cfg.points {
        Some(p) => ConfigTuple::new(p.iter().map(|c| Complex64::new(c[0], c[1])).collect(), opts.separation)?,
        None => {
            let pts: Vec<_> = (0..cfg.n_points).map(|_| sample_uniform(&mut rng)).collect();
            ConfigTuple::from_chart(&pts, opts.separation)?
        }
    };
    let omega = match cfg.omega_angle {
        Some(a) => Complex64::from_polar(1.0, a),
        None => sample_direction(&mut rng),
    };
    let base = base_tuple(x.len(), cfg.base_radius)?;
    let trace = build_loop(&spec, &x, &base, &opts)?;
    let (word, used) = trace.extract_braid_retrying(omega, cfg.retries)?;
    let pure = word.is_pure();
    let n = x.len();
    let mut windings = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            windings.push(json!({ "i": i, "j": j, "winding": trace.winding(i, j)? }));
        }
    }
    let text = word.to_string();
    let mut body = Map::new();
    body.insert("word".into(), json!(text));
    body.insert("strands".into(), json!(n));
    body.insert("letters".into(), json!(word.len()));
    body.insert("writhe".into(), json!(word.writhe()));
    body.insert("permutation_identity".into(), json!(pure));
    body.insert("omega".into(), json!([used.re, used.im]));
    body.insert("points".into(), json!(x.points().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()));
    body.insert("windings".into(), Value::Array(windings));
    let stem = Command::BraidOfFlow.stem();
    let mut files = BTreeMap::new();
    files.insert(format!("{stem}.csv"), trace.to_csv());
    files.insert(format!("{stem}.txt"), format!("{text}\n"));
    files.insert(format!("{stem}.json"), with_header(Command::BraidOfFlow, &effective, Some(cfg.seed), body));
    Ok(Outcome {
        exit_code: if pure { EXIT_PASS } else { EXIT_TOLERANCE },
        stdout: format!("{text}\npermutation: {}\n", if pure { "identity" } else { "NOT identity" }),
        files,
    })
}

/// One random test loop: a step-profile flow applied to random points.
#[derive(Clone, Debug)]
pub struct LoopCase {
    pub spec: FlowSpec,
    pub trace: LoopTrace,
    pub omega: Complex64,
    pub rejected: usize,
}

/// Random test loop: `n ∈ 2..=4` points, a step profile with
/// `|λ| ∈ [1/4, 2]`, step position `u₀ ∈ [−0.8, 0.8]`, ramp 0 or in
/// `[0.05, 0.5]`, duration in `[0.5, 3]`. Rejected draws are redrawn.
pub fn random_loop_case<R: Rng>(rng: &mut R, max_attempts: usize) -> Result<LoopCase> {
    let opts = LoopOptions::default();
    let mut last = None;
    for attempt in 0..max_attempts {
        let n = rng.gen_range(2..=4usize);
        let lambda = rng.gen_range(0.25..2.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let u0 = rng.gen_range(-0.8..0.8);
        let ramp = if rng.gen::<bool>() { 0.0 } else { rng.gen_range(0.05..0.5) };
        let duration = rng.gen_range(0.5..3.0);
        let pts: Vec<_> = (0..n).map(|_| sample_uniform(rng)).collect();
        let omega = sample_direction(rng);
        let built = RadialProfile::step_at_area_coordinate(lambda, u0, ramp)
            .and_then(|p| FlowSpec::single(p, 1.0, duration))
            .and_then(|spec| {
                let x = ConfigTuple::from_chart(&pts, opts.separation)?;
                let base = base_tuple(n, DEFAULT_BASE_RADIUS)?;
                let trace = build_loop(&spec, &x, &base, &opts)?;
                Ok((spec, trace))
            });
        match built {
            Ok((spec, trace)) => {
                return Ok(LoopCase {
                    spec,
                    trace,
                    omega,
                    rejected: attempt,
                })
            }
            Err(e) if e.is_rejection() => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::Rejected("no attempts".into())))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CoareaConfig {
    pub loops: usize,
    pub directions: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub rejection_ceiling: f64,
    /// Loops whose total variation (in turns, summed over pairs) is below
    /// this are redrawn: with `m` directions the count resolves the
    /// variation only to about one part in `m·variation`.
    pub min_variation: f64,
}

impl Default for CoareaConfig {
    fn default() -> Self {
        CoareaConfig {
            loops: 100,
            directions: 1000,
            seed: 1,
            tolerance: 0.02,
            rejection_ceiling: 0.05,
            min_variation: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoareaRow {
    pub index: usize,
    pub n_points: usize,
    pub duration: f64,
    pub variation: f64,
    pub mean_crossings: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    pub writhe: i64,
    pub twice_winding: i64,
    pub max_winding_offset: f64,
    pub rejected: usize,
    pub low_variation: usize,
}

fn coarea_row(cfg: &CoareaConfig, index: usize) -> Result<CoareaRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut rejected = 0;
    let mut low_variation = 0;
    let (case, variation) = loop {
        let case = random_loop_case(&mut rng, 64)?;
        rejected += case.rejected;
        let t = &case.trace;
        let mut variation = 0.0;
        for i in 0..t.strands() {
            for j in i + 1..t.strands() {
                variation += t.total_angular_variation(i, j)?;
            }
        }
        if variation >= cfg.min_variation {
            break (case, variation);
        }
        low_variation += 1;
        if low_variation >= 64 {
            return Err(Error::Rejected(format!("loop {index}: no draw reached variation {}", cfg.min_variation)));
        }
    };
    let t = &case.trace;
    let n = t.strands();
    // One uniform shift per loop, then an equispaced set of directions.
    let shift: f64 = rng.gen();
    let mut crossings = 0usize;
    let mut twice_winding = 0i64;
    let mut max_offset: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let w = t.winding(i, j)?;
            max_offset = max_offset.max((w - w.round()).abs());
            twice_winding += 2 * w.round() as i64;
            for k in 0..cfg.directions {
                let theta = 2.0 * PI * (k as f64 + shift) / cfg.directions as f64;
                crossings += t.crossing_count(i, j, Complex64::from_polar(1.0, theta))?;
            }
        }
    }
    let mean = crossings as f64 / cfg.directions as f64;
    let (word, _) = t.extract_braid_retrying(case.omega, 8)?;
    Ok(CoareaRow {
        index,
        n_points: n,
        duration: case.spec.duration(),
        variation,
        mean_crossings: mean,
        abs_error: (mean - variation).abs(),
        rel_error: if variation > 0.0 { (mean - variation).abs() / variation } else { mean },
        writhe: word.writhe(),
        twice_winding,
        max_winding_offset: max_offset,
        rejected,
        low_variation,
    })
}

/// Co-area and writhe–winding checks on random loops.
pub fn coarea_rows(cfg: &CoareaConfig, exec: Exec) -> Result<Vec<CoareaRow>> {
    if cfg.loops == 0 || cfg.directions == 0 {
        return Err(Error::Invalid("need at least one loop and one direction".into()));
    }
    exec.map_indexed(cfg.loops, |i| coarea_row(cfg, i)).into_iter().collect()
}

fn coarea_check(config: &Value, exec: Exec) -> Result<Outcome> {
    let (cfg, effective): (CoareaConfig, Value) = parse_config(config)?;
    let rows = coarea_rows(&cfg, exec)?;
    let rejected: usize = rows.iter().map(|r| r.rejected).sum();
    let attempted = rejected + rows.len();
    let rejection_ok = rejected as f64 <= cfg.rejection_ceiling * attempted as f64;
    let max_rel = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    let max_abs = rows.iter().map(|r| r.abs_error).fold(0.0, f64::max);
    let low_variation: usize = rows.iter().map(|r| r.low_variation).sum();
    let coarea_ok = max_rel <= cfg.tolerance;
    let writhe_ok = rows.iter().all(|r| r.writhe == r.twice_winding && r.max_winding_offset < 1e-6);
    let mut t = Table::new(&[
        "loop",
        "n_points",
        "duration",
        "variation",
        "mean_crossings",
        "rel_error",
        "writhe",
        "twice_winding",
    ]);
    for r in &rows {
        t.row([
            r.index.to_string(),
            r.n_points.to_string(),
            num(r.duration),
            num(r.variation),
            num(r.mean_crossings),
            num(r.rel_error),
            r.writhe.to_string(),
            r.twice_winding.to_string(),
        ]);
    }
    let pass = coarea_ok && writhe_ok && rejection_ok;
    let mut body = Map::new();
    body.insert("loops".into(), json!(rows.len()));
    body.insert("max_rel_error".into(), json!(max_rel));
    body.insert("max_abs_error".into(), json!(max_abs));
    body.insert("redrawn_low_variation".into(), json!(low_variation));
    body.insert("coarea_pass".into(), json!(coarea_ok));
    body.insert("writhe_winding_pass".into(), json!(writhe_ok));
    body.insert("rejected".into(), json!(rejected));
    body.insert("rejection_fraction".into(), json!(rejected as f64 / attempted as f64));
    body.insert("verdict".into(), json!(verdict(pass)));
    let stem = Command::CoareaCheck.stem();
    let mut files = BTreeMap::new();
    files.insert(format!("{stem}.csv"), t.finish());
    files.insert(format!("{stem}.json"), with_header(Command::CoareaCheck, &effective, Some(cfg.seed), body));
    let code = if !rejection_ok {
        EXIT_REJECTION
    } else if pass {
        EXIT_PASS
    } else {
        EXIT_TOLERANCE
    };
    Ok(Outcome {
        exit_code: code,
        stdout: format!(
            "coarea-check: {} max relative error {} writhe-winding {}\n",
            verdict(pass),
            max_rel,
            verdict(writhe_ok)
        ),
        files,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LpLengthConfig {
    pub profile: RadialProfile,
    pub weight: f64,
    pub durations: Vec<f64>,
    /// Finite exponent; `null` selects `p = ∞`.
    pub p: Option<f64>,
    pub measure: Measure,
    pub tolerance: f64,
}

impl Default for LpLengthConfig {
    fn default() -> Self {
        LpLengthConfig {
            profile: RadialProfile::constant(1.0),
            weight: 1.0,
            durations: vec![1.0, 2.0, 4.0, 8.0],
            p: Some(2.0),
            measure: Measure::TwoPi,
            tolerance: 1e-6,
        }
    }
}

/// `‖rigid rotation‖_p` for unit duration in the Fubini–Study convention,
/// where closed forms are available.
fn rigid_closed_form(p: Exponent) -> Option<f64> {
    match p {
        Exponent::Finite(2.0) => Some(2.0 * PI * (PI / 3.0).sqrt()),
        Exponent::Infinity => Some(PI),
        _ => None,
    }
}

fn lp_length_cmd(config: &Value) -> Result<Outcome> {
    let (cfg, effective): (LpLengthConfig, Value) = parse_config(config)?;
    if cfg.durations.is_empty() {
        return Err(Error::Invalid("need at least one duration".into()));
    }
    let p = match cfg.p {
        Some(p) => Exponent::finite(p)?,
        None => Exponent::Infinity,
    };
    // Lengths scale with the total mass as mass^{1/p}.
    let factor = match (cfg.measure, p) {
        (Measure::TwoPi, _) | (_, Exponent::Infinity) => 1.0,
        (Measure::Prob, Exponent::Finite(p)) => (1.0 / (2.0 * PI)).powf(1.0 / p),
    };
    let unit = FlowSpec::single(cfg.profile.clone(), cfg.weight, 1.0)?;
    let base = factor * lp_length(&unit, p, QuadOptions::default())?;
    let rigid = cfg.profile == RadialProfile::constant(1.0) && cfg.measure == Measure::TwoPi;
    let closed = if rigid { rigid_closed_form(p).map(|c| c * cfg.weight.abs()) } else { None };
    let mut t = Table::new(&["T", "p", "length", "length_over_T", "closed_form"]);
    let mut scaling_ok = true;
    let mut closed_ok = true;
    let p_text = cfg.p.map(num).unwrap_or_else(|| "inf".into());
    for &d in &cfg.durations {
        let len = factor * lp_length(&unit.with_duration(d)?, p, QuadOptions::default())?;
        scaling_ok &= ((len / d - base) / base.max(1e-300)).abs() <= 1e-9;
        let cf = closed.map(|c| c * d);
        if let Some(c) = cf {
            closed_ok &= ((len - c) / c).abs() <= cfg.tolerance;
        }
        t.row([num(d), p_text.clone(), num(len), num(len / d), cf.map(num).unwrap_or_default()]);
    }
    let doubled = factor * lp_length(&FlowSpec::single(cfg.profile.clone(), 2.0 * cfg.weight, 1.0)?, p, QuadOptions::default())?;
    let weight_ok = ((doubled - 2.0 * base) / base.max(1e-300)).abs() <= 1e-9;
    let pass = scaling_ok && closed_ok && weight_ok;
    let mut body = Map::new();
    body.insert("unit_length".into(), json!(base));
    body.insert("linear_in_weight".into(), json!(weight_ok));
    body.insert("closed_form_unit".into(), json!(closed));
    body.insert("linear_in_duration".into(), json!(scaling_ok));
    body.insert("closed_form_match".into(), json!(closed.map(|_| closed_ok)));
    body.insert("verdict".into(), json!(verdict(pass)));
    let stem = Command::LpLength.stem();
    let mut files = BTreeMap::new();
    files.insert(format!("{stem}.csv"), t.finish());
    files.insert(format!("{stem}.json"), with_header(Command::LpLength, &effective, None, body));
    Ok(Outcome {
        exit_code: if pass { EXIT_PASS } else { EXIT_TOLERANCE },
        stdout: format!("lp-length: {} unit length {}\n", verdict(pass), base),
        files,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Second flow of the pair; its support must avoid the first profile's.
    pub profile: RadialProfile,
    pub weight: f64,
    pub durations: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PhiEstimateConfig {
    pub profile: RadialProfile,
    pub weight: f64,
    pub n_points: usize,
    pub samples: usize,
    pub seed: u64,
    /// Three or more durations also yield the slope `Φ̄`.
    pub t_list: Vec<f64>,
    pub measure: Measure,
    pub invariant: InvariantKind,
    pub depth: usize,
    pub homogenize: bool,
    pub monitor: Option<MonitorConfig>,
}

impl Default for PhiEstimateConfig {
    fn default() -> Self {
        PhiEstimateConfig {
            profile: default_step(),
            weight: 1.0,
            n_points: 4,
            samples: 1000,
            seed: 1,
            t_list: one_to_eight(),
            measure: Measure::Prob,
            invariant: InvariantKind::SCombination,
            depth: DEFAULT_DEPTH,
            homogenize: false,
            monitor: None,
        }
    }
}

/// One row of the quasimorphism defect monitor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub duration: f64,
    pub defect: f64,
    pub stderr: f64,
    pub phi_fg: f64,
    pub phi_f: f64,
    pub phi_f_stderr: f64,
    pub phi_g: f64,
}

fn phi_estimate_cmd(config: &Value, exec: Exec) -> Result<Outcome> {
    let (cfg, effective): (PhiEstimateConfig, Value) = parse_config(config)?;
    let spec = FlowSpec::single(cfg.profile.clone(), cfg.weight, 1.0)?;
    let qm = make_qm(cfg.invariant, cfg.n_points, cfg.depth)?.homogenized(cfg.homogenize);
    let est_cfg = EstimatorConfig::new(cfg.n_points, cfg.samples, cfg.seed)
        .with_measure(cfg.measure.convention())
        .with_exec(exec);
    let mut body = Map::new();
    let stem = Command::PhiEstimate.stem();
    let mut files = BTreeMap::new();
    let mut summary = String::new();
    if cfg.t_list.len() >= 3 {
        let est = phi_bar_estimate(&spec, &cfg.t_list, &qm, &est_cfg)?;
        body.insert("slope".into(), json!(est.slope));
        body.insert("slope_stderr".into(), json!(est.stderr));
        body.insert("intercept".into(), json!(est.intercept));
        body.insert("nonlinear".into(), json!(est.nonlinear));
        body.insert("rejected".into(), json!(est.rejected));
        let _ = writeln!(summary, "phi-estimate: slope {} ± {}", est.slope, est.stderr);
        files.insert(format!("{stem}.csv"), estimates_table(&est.per_t));
    } else {
        let mut rows = Vec::new();
        for &t in &cfg.t_list {
            let e = phi_estimate(&spec.with_duration(t)?, &qm, &est_cfg)?;
            let _ = writeln!(summary, "phi-estimate: T = {t} Φ = {} ± {}", e.value, e.stderr);
            rows.push(e);
        }
        files.insert(format!("{stem}.csv"), estimates_table(&rows));
    }
    if let Some(m) = &cfg.monitor {
        if !cfg.profile.disjoint_from(&m.profile) {
            log::warn!("monitor profiles overlap; the defect bound still holds but the pair is not commuting");
        }
        let mut rows = Vec::new();
        for &t in &m.durations {
            let f = FlowSpec::single(cfg.profile.clone(), cfg.weight, t)?;
            let g = FlowSpec::single(m.profile.clone(), m.weight, t)?;
            let d = qm_property_monitor(&f, &g, &qm, &est_cfg)?;
            rows.push(MonitorRow {
                duration: t,
                defect: d.value,
                stderr: d.stderr,
                phi_fg: d.phi_fg.value,
                phi_f: d.phi_f.value,
                phi_f_stderr: d.phi_f.stderr,
                phi_g: d.phi_g.value,
            });
        }
        let mut t = Table::new(&["T", "defect", "stderr", "phi_fg", "phi_f", "phi_g"]);
        for r in &rows {
            t.row([num(r.duration), num(r.defect), num(r.stderr), num(r.phi_fg), num(r.phi_f), num(r.phi_g)]);
        }
        files.insert("monitor.csv".into(), t.finish());
        let _ = writeln!(
            summary,
            "phi-estimate: monitor defects {:?}",
            rows.iter().map(|r| r.defect).collect::<Vec<_>>()
        );
        body.insert("monitor".into(), serde_json::to_value(&rows).map_err(|e| Error::Internal(e.to_string()))?);
    }
    files.insert(format!("{stem}.json"), with_header(Command::PhiEstimate, &effective, Some(cfg.seed), body));
    Ok(Outcome {
        exit_code: EXIT_PASS,
        stdout: summary,
        files,
    })
}

/// Merges flag overrides into a configuration object; flags win.
pub fn merge_overrides(mut config: Value, overrides: &[(&str, Value)]) -> Result<Value> {
    if config.is_null() {
        config = Value::Object(Map::new());
    }
    let Value::Object(map) = &mut config else {
        return Err(Error::Invalid("configuration must be a JSON object".into()));
    };
    for (k, v) in overrides {
        map.insert((*k).to_string(), v.clone());
    }
    Ok(config)
}
