//! Scenario configuration, case studies, and benchmark sweeps.
//!
//! This module turns a JSON scenario description into concrete runs of the
//! private evaluation protocol:
//!
//! * [`run_scenario`] — evaluate each configured polynomial over a horizon,
//!   with optional mid-run dropouts;
//! * [`run_game`] — a noncooperative game in which every player's
//!   gradient-projection step consumes a privately evaluated polynomial of
//!   the neighbors' decisions;
//! * [`run_consensus`] — a discretized consensus controller whose coupling
//!   term is evaluated privately each step;
//! * [`run_bench`] — a grid sweep over key lengths and neighbor counts
//!   reporting median per-step wall time and bytes on the wire;
//! * [`analyze`] — a collusion identifiability report for a corrupt set.
//!
//! Every run is deterministic given `(config, seed)` except for wall-clock
//! timings. Each case study also runs a crypto-free baseline with the same
//! quantization and reports the maximum deviation between the two paths.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::agent::AgentId;
use crate::codec::FieldParams;
use crate::error::{AnalysisError, NetError, ProtocolError};
use crate::modmath::{gen_prime, PrimeParams};
use crate::netsim::Topology;
use crate::poly::{
    decompose, BivariatePart, BivariateTerm, Factor, Monomial, MultiplicativeTerm,
    PolynomialSpec, UnivariatePoly,
};
use crate::privacy::{self, Verdict};
use crate::protocol::QuerySession;
use crate::shares::ShareMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

// --- configuration -----------------------------------------------------------

/// Graph given either by a named family or an explicit edge list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TopologyConfig {
    Ring { n: u32 },
    Complete { n: u32 },
    Star { n: u32 },
    Explicit { nodes: Vec<u32>, edges: Vec<(u32, u32)> },
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig::Ring { n: 5 }
    }
}

impl TopologyConfig {
    pub fn build(&self) -> Result<Topology, NetError> {
        Ok(match self {
            TopologyConfig::Ring { n } => Topology::ring(*n),
            TopologyConfig::Complete { n } => Topology::complete(*n),
            TopologyConfig::Star { n } => Topology::star(*n),
            TopologyConfig::Explicit { nodes, edges } => Topology::build(
                nodes.iter().copied().map(AgentId),
                edges.iter().map(|(a, b)| (AgentId(*a), AgentId(*b))),
            )?,
        })
    }
}

/// One monomial of a configured polynomial: a coefficient and a map from
/// agent id to exponent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonomialConfig {
    pub coeff: f64,
    pub exponents: BTreeMap<u32, u32>,
}

/// A scheduled dropout: `agent` stops responding right before round `step`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DropoutEvent {
    pub step: u64,
    pub agent: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameParams {
    /// Gradient step size.
    pub tau: f64,
    /// Decision box `[gamma_min, gamma_max]`, also the draw range for the
    /// private cost coefficients.
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Constraint multiplier, held constant.
    pub lambda: f64,
}

impl Default for GameParams {
    fn default() -> Self {
        GameParams {
            tau: 0.01,
            gamma_min: 0.0,
            gamma_max: 2.0,
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusParams {
    /// Forward-Euler step.
    pub step_size: f64,
    /// Smallest admissible objective gradient magnitude; smaller aborts.
    pub gradient_guard: f64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            step_size: 0.1,
            gradient_guard: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchParams {
    pub sigmas: Vec<u64>,
    pub neighbor_counts: Vec<u32>,
    /// Runs per grid cell; the median is reported.
    pub repetitions: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            sigmas: vec![512, 1024, 2048],
            neighbor_counts: vec![3, 9, 27],
            repetitions: 5,
        }
    }
}

fn default_sigma() -> u64 {
    512
}
fn default_omega_bits() -> u64 {
    200
}
fn default_frac_bits() -> u32 {
    16
}
fn default_share_mode() -> String {
    "prf".into()
}

/// Full scenario description, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub topology: TopologyConfig,
    /// Per-owner polynomials as monomial lists.
    #[serde(default)]
    pub polynomials: BTreeMap<u32, Vec<MonomialConfig>>,
    #[serde(default)]
    pub initial_values: BTreeMap<u32, f64>,
    #[serde(default = "default_sigma")]
    pub sigma_bits: u64,
    #[serde(default = "default_omega_bits")]
    pub omega_bits: u64,
    #[serde(default = "default_frac_bits")]
    pub frac_bits: u32,
    /// `"direct"` or `"prf"`.
    #[serde(default = "default_share_mode")]
    pub share_mode: String,
    /// Number of protocol rounds after the initial one.
    #[serde(default)]
    pub horizon: u64,
    #[serde(default)]
    pub dropouts: Vec<DropoutEvent>,
    #[serde(default)]
    pub seed: u64,
    /// Colluding agents for `analyze`.
    #[serde(default)]
    pub corrupt: Vec<u32>,
    #[serde(default)]
    pub game: GameParams,
    #[serde(default)]
    pub consensus: ConsensusParams,
    #[serde(default)]
    pub bench: BenchParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, NetError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| NetError::ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn share_mode(&self) -> Result<ShareMode, NetError> {
        match self.share_mode.as_str() {
            "direct" => Ok(ShareMode::Direct),
            "prf" => Ok(ShareMode::Prf),
            other => Err(NetError::ConfigError(format!(
                "unknown share mode {other:?}; expected \"direct\" or \"prf\""
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.sigma_bits < 2 * self.omega_bits + 64 {
            return Err(NetError::ConfigError(format!(
                "key length {} too short for a {}-bit field; need at least {}",
                self.sigma_bits,
                self.omega_bits,
                2 * self.omega_bits + 64
            )));
        }
        if self.frac_bits == 0 || self.frac_bits > 64 {
            return Err(NetError::ConfigError(format!(
                "frac_bits {} outside the supported range 1..=64",
                self.frac_bits
            )));
        }
        self.share_mode()?;
        let topo = self.topology.build()?;
        let nodes = topo.nodes();
        let check = |id: u32, role: &str| -> Result<(), NetError> {
            if nodes.contains(&AgentId(id)) {
                Ok(())
            } else {
                Err(NetError::ConfigError(format!(
                    "{role} references agent {id}, which is not in the topology"
                )))
            }
        };
        for (owner, monomials) in &self.polynomials {
            check(*owner, "polynomial owner")?;
            for m in monomials {
                for agent in m.exponents.keys() {
                    check(*agent, "monomial")?;
                }
            }
        }
        for agent in self.initial_values.keys() {
            check(*agent, "initial value")?;
        }
        for ev in &self.dropouts {
            check(ev.agent, "dropout event")?;
        }
        for agent in &self.corrupt {
            check(*agent, "corrupt set")?;
        }
        Ok(())
    }

    /// The public prime field of this scenario, derived deterministically
    /// from the seed.
    pub fn field(&self) -> FieldParams {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed ^ 0x6f6d656761);
        FieldParams::new(
            gen_prime(&PrimeParams::new(self.omega_bits), &mut rng),
            self.frac_bits,
        )
    }

    /// Initial value of `agent`, defaulting to 0 when unspecified.
    fn initial(&self, agent: AgentId) -> f64 {
        self.initial_values.get(&agent.0).copied().unwrap_or(0.0)
    }
}

/// Rounds to the nearest multiple of `2^-frac_bits` — the single quantization
/// applied to every input before it enters either evaluation path.
pub fn quantize(v: f64, frac_bits: u32) -> f64 {
    let s = (1u64 << frac_bits) as f64;
    (v * s).round() / s
}

// --- reports -----------------------------------------------------------------

/// Trajectories and counters from one case-study run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// Column order of the trajectory rows.
    pub agents: Vec<u32>,
    /// `horizon + 1` states per agent from the protocol path.
    pub private: Vec<Vec<f64>>,
    /// Same trajectory computed without cryptography.
    pub plain: Vec<Vec<f64>>,
    pub max_deviation: f64,
    /// Input quantization step `2^-frac_bits`.
    pub quantization_bound: f64,
    /// Multiplier on the quantization step bounding the admissible
    /// private-vs-plain deviation per step.
    pub condition_factor: f64,
    pub messages: u64,
    pub bytes: u64,
    /// Wall time per protocol round, milliseconds.
    pub step_millis: Vec<f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV row per step: `k, private values..., plain values...`.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("k");
        for a in &self.agents {
            out.push_str(&format!(",private_{a}"));
        }
        for a in &self.agents {
            out.push_str(&format!(",plain_{a}"));
        }
        out.push('\n');
        for (k, (pr, pl)) in self.private.iter().zip(&self.plain).enumerate() {
            out.push_str(&k.to_string());
            for v in pr.iter().chain(pl) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// One cell of the benchmark grid.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub sigma_bits: u64,
    pub neighbors: u32,
    pub median_step_millis: f64,
    pub bytes_per_step: u64,
    pub messages_per_step: u64,
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("sigma_bits,neighbors,median_step_millis,bytes_per_step,messages_per_step\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.sigma_bits, r.neighbors, r.median_step_millis, r.bytes_per_step, r.messages_per_step
        ));
    }
    out
}

/// Identifiability verdict for one noncorrupt agent.
#[derive(Debug, Clone, Serialize)]
pub struct VerdictRow {
    pub agent: u32,
    /// `"identified"`, `"not_identified"`, or `"unknown"`.
    pub verdict: String,
    /// A second consistent assignment of all noncorrupt values, when found.
    pub witness: Option<Vec<f64>>,
}

pub fn verdicts_csv(rows: &[VerdictRow]) -> String {
    let mut out = String::from("agent,verdict,witness\n");
    for r in rows {
        let w = r
            .witness
            .as_ref()
            .map(|v| {
                v.iter()
                    .map(f64::to_string)
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.agent, r.verdict, w));
    }
    out
}

// --- generic scenario run ----------------------------------------------------

/// Evaluates each configured polynomial over the horizon at the (fixed)
/// initial values, applying scheduled dropouts. Trajectory rows hold the
/// per-round query results; the plain path evaluates the same (possibly
/// dropout-reduced) polynomial without cryptography.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, ProtocolError> {
    config.validate()?;
    let topo = config.topology.build()?;
    let field = config.field();
    let mode = config.share_mode()?;
    let f = config.frac_bits;

    let mut owners: Vec<AgentId> = Vec::new();
    let mut sessions: Vec<QuerySession> = Vec::new();
    for (owner, monomials) in &config.polynomials {
        let owner = AgentId(*owner);
        let ms: Vec<Monomial> = monomials
            .iter()
            .map(|m| {
                let exps: Vec<(u32, u32)> =
                    m.exponents.iter().map(|(a, e)| (*a, *e)).collect();
                Monomial::from_f64(quantize(m.coeff, f), &exps)
            })
            .collect();
        let spec = decompose(&ms, owner, topo.neighbors(owner))?;
        let session = QuerySession::new(
            spec,
            field.clone(),
            mode,
            config.sigma_bits,
            config.seed.wrapping_add(owner.0 as u64),
        )?;
        owners.push(owner);
        sessions.push(session);
    }

    let values: BTreeMap<AgentId, f64> = topo
        .nodes()
        .iter()
        .map(|a| (*a, quantize(config.initial(*a), f)))
        .collect();

    let mut private = Vec::new();
    let mut plain = Vec::new();
    let mut step_millis = Vec::new();
    let mut messages = 0u64;
    let mut bytes = 0u64;
    let mut max_dev = 0.0f64;
    for k in 0..=config.horizon {
        for ev in &config.dropouts {
            if ev.step == k {
                for session in sessions.iter_mut() {
                    if session.spec().neighbors.contains(&AgentId(ev.agent)) {
                        session.handle_dropout(AgentId(ev.agent))?;
                    }
                }
            }
        }
        let t0 = Instant::now();
        let mut row_priv = Vec::new();
        let mut row_plain = Vec::new();
        for session in sessions.iter_mut() {
            let r = session.run_at(k, &values)?;
            messages += r.messages;
            bytes += r.bytes;
            let oracle = session.spec().evaluate_plain(&values)?;
            max_dev = max_dev.max((r.value - oracle).abs());
            row_priv.push(r.value);
            row_plain.push(oracle);
        }
        step_millis.push(t0.elapsed().as_secs_f64() * 1e3);
        private.push(row_priv);
        plain.push(row_plain);
    }

    Ok(RunReport {
        agents: owners.iter().map(|a| a.0).collect(),
        private,
        plain,
        max_deviation: max_dev,
        quantization_bound: (config.frac_bits as f64).exp2().recip(),
        condition_factor: 8.0,
        messages,
        bytes,
        step_millis,
    })
}

// --- the noncooperative game -------------------------------------------------

/// Private cost parameters of one player, drawn under the run seed.
struct PlayerCost {
    /// Quadratic self-cost weight.
    a: f64,
    /// Linear coupling weight per neighbor.
    c_linear: BTreeMap<AgentId, f64>,
    /// Product-term coefficients `(c_1, c_2)` per closed-neighborhood member.
    c_prod: BTreeMap<AgentId, (f64, f64)>,
}

/// The polynomial a player must evaluate privately each step: the part of
/// the cost gradient that involves the neighbors,
/// `sum_j c_j x_j + W_own(x_own) * prod_j (c_j1 x_j + c_j2 x_j^2)`
/// with `W_own = c_own1 + 2 c_own2 x_own`.
fn game_spec(owner: AgentId, cost: &PlayerCost) -> PolynomialSpec {
    let rat = |v: f64| BigRational::from_float(v).expect("finite");
    let neighbors: BTreeSet<AgentId> = cost.c_linear.keys().copied().collect();
    let bivariate = cost
        .c_linear
        .iter()
        .map(|(j, c)| {
            (
                *j,
                BivariatePart {
                    neighbor: *j,
                    terms: vec![BivariateTerm {
                        coeff: rat(*c),
                        owner_exp: 0,
                        neighbor_exp: 1,
                    }],
                },
            )
        })
        .collect();
    let mut factors: BTreeMap<AgentId, Factor> = BTreeMap::new();
    for (j, (c1, c2)) in &cost.c_prod {
        let mut poly = UnivariatePoly::zero();
        if *j == owner {
            // derivative factor of the owner's own product term
            poly.add_term(0, rat(*c1));
            poly.add_term(1, rat(2.0 * *c2));
        } else {
            poly.add_term(1, rat(*c1));
            poly.add_term(2, rat(*c2));
        }
        factors.insert(*j, Factor::private(poly));
    }
    PolynomialSpec {
        owner,
        neighbors,
        owner_part: UnivariatePoly::zero(),
        bivariate,
        multiplicative: vec![MultiplicativeTerm { factors }],
    }
}

/// Runs the gradient-projection game. Each player's update is
/// `x <- proj_box(x - tau * (2 a x + g - lambda))` where `g` is the coupling
/// gradient evaluated by the private protocol; the plain path runs the
/// identical arithmetic without cryptography. States and drawn coefficients
/// are quantized to the configured fractional precision, so both paths see
/// identical inputs.
pub fn run_game(config: &ScenarioConfig) -> Result<RunReport, ProtocolError> {
    config.validate()?;
    let topo = config.topology.build()?;
    let field = config.field();
    let mode = config.share_mode()?;
    let f = config.frac_bits;
    let gp = &config.game;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x67616d65);

    let players: Vec<AgentId> = topo.nodes().iter().copied().collect();
    let mut costs = BTreeMap::new();
    for i in &players {
        // a_i kept away from zero so every player's own curvature contracts
        let a = quantize(rng.gen_range(0.5..=gp.gamma_max.max(0.6)), f);
        let c_linear = topo
            .neighbors(*i)
            .iter()
            .map(|j| (*j, quantize(rng.gen_range(gp.gamma_min..=gp.gamma_max), f)))
            .collect();
        let c_prod = topo
            .closed_neighborhood(*i)
            .iter()
            .map(|j| {
                (
                    *j,
                    (
                        quantize(rng.gen_range(gp.gamma_min..=gp.gamma_max), f),
                        quantize(rng.gen_range(gp.gamma_min..=gp.gamma_max), f),
                    ),
                )
            })
            .collect();
        costs.insert(*i, PlayerCost { a, c_linear, c_prod });
    }

    let mut sessions: Vec<(AgentId, QuerySession)> = Vec::new();
    for i in &players {
        let spec = game_spec(*i, &costs[i]);
        sessions.push((
            *i,
            QuerySession::new(
                spec,
                field.clone(),
                mode,
                config.sigma_bits,
                config.seed.wrapping_add(i.0 as u64),
            )?,
        ));
    }

    let mut x_priv: BTreeMap<AgentId, f64> = players
        .iter()
        .map(|i| {
            let v = if config.initial_values.contains_key(&i.0) {
                config.initial(*i)
            } else {
                rng.gen_range(gp.gamma_min..=gp.gamma_max)
            };
            (*i, quantize(v, f))
        })
        .collect();
    let mut x_plain = x_priv.clone();

    let mut private = vec![players.iter().map(|i| x_priv[i]).collect::<Vec<_>>()];
    let mut plain = vec![players.iter().map(|i| x_plain[i]).collect::<Vec<_>>()];
    let mut step_millis = Vec::new();
    let mut messages = 0u64;
    let mut bytes = 0u64;
    let mut max_dev = 0.0f64;
    let proj = |v: f64| v.clamp(gp.gamma_min, gp.gamma_max);

    for k in 0..config.horizon {
        let t0 = Instant::now();
        let mut next_priv = BTreeMap::new();
        let mut next_plain = BTreeMap::new();
        for (i, session) in sessions.iter_mut() {
            let r = session.run_at(k, &x_priv)?;
            messages += r.messages;
            bytes += r.bytes;
            let g_priv = r.value;
            let g_plain = session.spec().evaluate_plain(&x_plain)?;
            let cost = &costs[i];
            next_priv.insert(
                *i,
                quantize(
                    proj(x_priv[i] - gp.tau * (2.0 * cost.a * x_priv[i] + g_priv - gp.lambda)),
                    f,
                ),
            );
            next_plain.insert(
                *i,
                quantize(
                    proj(x_plain[i] - gp.tau * (2.0 * cost.a * x_plain[i] + g_plain - gp.lambda)),
                    f,
                ),
            );
        }
        x_priv = next_priv;
        x_plain = next_plain;
        step_millis.push(t0.elapsed().as_secs_f64() * 1e3);
        for i in &players {
            max_dev = max_dev.max((x_priv[i] - x_plain[i]).abs());
        }
        private.push(players.iter().map(|i| x_priv[i]).collect());
        plain.push(players.iter().map(|i| x_plain[i]).collect());
    }

    Ok(RunReport {
        agents: players.iter().map(|a| a.0).collect(),
        private,
        plain,
        max_deviation: max_dev,
        quantization_bound: (config.frac_bits as f64).exp2().recip(),
        condition_factor: 8.0,
        messages,
        bytes,
        step_millis,
    })
}

// --- consensus on the arithmetic mean ----------------------------------------

/// Runs the discretized consensus controller
/// `x_i <- x_i - h * (1/|grad J|) * sum_j (x_i - x_j)` with `J` the
/// arithmetic mean (`|grad J| = 1/N`). The coupling sum is an affine
/// polynomial evaluated by the private protocol; the `1/|grad J|` factor is
/// the owner's local public knowledge and is applied after decryption.
pub fn run_consensus(config: &ScenarioConfig) -> Result<RunReport, ProtocolError> {
    config.validate()?;
    let topo = config.topology.build()?;
    let field = config.field();
    let mode = config.share_mode()?;
    let f = config.frac_bits;
    let n = topo.nodes().len() as f64;
    let grad = 1.0 / n;
    if grad.abs() < config.consensus.gradient_guard {
        return Err(NetError::ConfigError(format!(
            "objective gradient magnitude {grad:e} below the guard threshold"
        ))
        .into());
    }
    let gain = config.consensus.step_size / grad;

    let agents: Vec<AgentId> = topo.nodes().iter().copied().collect();
    let mut sessions: Vec<(AgentId, QuerySession)> = Vec::new();
    for i in &agents {
        let neighbors = topo.neighbors(*i).clone();
        let mut owner_part = UnivariatePoly::zero();
        owner_part.add_term(1, BigRational::from_integer(BigInt::from(neighbors.len())));
        let bivariate = neighbors
            .iter()
            .map(|j| {
                (
                    *j,
                    BivariatePart {
                        neighbor: *j,
                        terms: vec![BivariateTerm {
                            coeff: BigRational::from_integer(BigInt::from(-1)),
                            owner_exp: 0,
                            neighbor_exp: 1,
                        }],
                    },
                )
            })
            .collect();
        let spec = PolynomialSpec {
            owner: *i,
            neighbors,
            owner_part,
            bivariate,
            multiplicative: Vec::new(),
        };
        sessions.push((
            *i,
            QuerySession::new(
                spec,
                field.clone(),
                mode,
                config.sigma_bits,
                config.seed.wrapping_add(i.0 as u64),
            )?,
        ));
    }

    let mut x_priv: BTreeMap<AgentId, f64> = agents
        .iter()
        .map(|i| (*i, quantize(config.initial(*i), f)))
        .collect();
    let mut x_plain = x_priv.clone();

    let mut private = vec![agents.iter().map(|i| x_priv[i]).collect::<Vec<_>>()];
    let mut plain = vec![agents.iter().map(|i| x_plain[i]).collect::<Vec<_>>()];
    let mut step_millis = Vec::new();
    let mut messages = 0u64;
    let mut bytes = 0u64;
    let mut max_dev = 0.0f64;

    for k in 0..config.horizon {
        let t0 = Instant::now();
        let mut next_priv = BTreeMap::new();
        let mut next_plain = BTreeMap::new();
        for (i, session) in sessions.iter_mut() {
            let r = session.run_at(k, &x_priv)?;
            messages += r.messages;
            bytes += r.bytes;
            let g_plain = session.spec().evaluate_plain(&x_plain)?;
            next_priv.insert(*i, quantize(x_priv[i] - gain * r.value, f));
            next_plain.insert(*i, quantize(x_plain[i] - gain * g_plain, f));
        }
        x_priv = next_priv;
        x_plain = next_plain;
        step_millis.push(t0.elapsed().as_secs_f64() * 1e3);
        for i in &agents {
            max_dev = max_dev.max((x_priv[i] - x_plain[i]).abs());
        }
        private.push(agents.iter().map(|i| x_priv[i]).collect());
        plain.push(agents.iter().map(|i| x_plain[i]).collect());
    }

    Ok(RunReport {
        agents: agents.iter().map(|a| a.0).collect(),
        private,
        plain,
        max_deviation: max_dev,
        quantization_bound: (config.frac_bits as f64).exp2().recip(),
        condition_factor: 8.0,
        messages,
        bytes,
        step_millis,
    })
}

// --- benchmark sweep ---------------------------------------------------------

/// Sweeps the `(key length, neighbor count)` grid with a star-topology query
/// that has one bivariate part per neighbor plus one three-factor product,
/// reporting per-cell median step time and wire traffic. Key generation is
/// excluded from the timings. The product is capped at three participating
/// factors so decoded results stay inside the field at every grid size; the
/// per-neighbor ciphertext traffic that drives the measured trends is
/// unaffected.
pub fn run_bench(config: &ScenarioConfig) -> Result<Vec<BenchRow>, ProtocolError> {
    config.validate()?;
    let field = config.field();
    let mode = config.share_mode()?;
    let f = config.frac_bits;
    let mut rows = Vec::new();
    for &sigma in &config.bench.sigmas {
        for &nn in &config.bench.neighbor_counts {
            let owner = AgentId(1);
            let neighbors: BTreeSet<AgentId> = (2..2 + nn).map(AgentId).collect();
            let rat = |v: f64| BigRational::from_float(v).expect("finite");
            let bivariate = neighbors
                .iter()
                .map(|j| {
                    (
                        *j,
                        BivariatePart {
                            neighbor: *j,
                            terms: vec![BivariateTerm {
                                coeff: rat(1.5),
                                owner_exp: 1,
                                neighbor_exp: 2,
                            }],
                        },
                    )
                })
                .collect();
            let mut factors: BTreeMap<AgentId, Factor> = BTreeMap::new();
            for j in neighbors.iter().take(2) {
                let mut poly = UnivariatePoly::zero();
                poly.add_term(1, rat(0.5));
                poly.add_term(2, rat(0.25));
                factors.insert(*j, Factor::private(poly));
            }
            let mut own = UnivariatePoly::zero();
            own.add_term(0, rat(1.0));
            own.add_term(1, rat(0.5));
            factors.insert(owner, Factor::private(own));
            let spec = PolynomialSpec {
                owner,
                neighbors: neighbors.clone(),
                owner_part: UnivariatePoly::zero(),
                bivariate,
                multiplicative: vec![MultiplicativeTerm { factors }],
            };
            let mut session = QuerySession::new(
                spec,
                field.clone(),
                mode,
                sigma,
                config.seed.wrapping_add(sigma).wrapping_add(nn as u64),
            )?;
            let mut value_rng =
                ChaCha20Rng::seed_from_u64(config.seed ^ 0xbe7c ^ sigma ^ nn as u64);
            let mut times = Vec::new();
            let mut bytes_per_step = 0;
            let mut messages_per_step = 0;
            for rep in 0..config.bench.repetitions.max(1) as u64 {
                let values: BTreeMap<AgentId, f64> = std::iter::once(owner)
                    .chain(neighbors.iter().copied())
                    .map(|a| (a, quantize(value_rng.gen_range(0.0..=1.0), f)))
                    .collect();
                let t0 = Instant::now();
                let r = session.run_at(rep, &values)?;
                times.push(t0.elapsed().as_secs_f64() * 1e3);
                bytes_per_step = r.bytes;
                messages_per_step = r.messages;
            }
            times.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                sigma_bits: sigma,
                neighbors: nn,
                median_step_millis: times[times.len() / 2],
                bytes_per_step,
                messages_per_step,
            });
        }
    }
    Ok(rows)
}

// --- collusion analysis ------------------------------------------------------

/// Builds the colluders' pooled equation system from the configured corrupt
/// set and polynomials, and reports an identifiability verdict per
/// noncorrupt agent appearing in those queries. Query results are taken from
/// plain evaluation at the configured initial values.
pub fn analyze(config: &ScenarioConfig) -> Result<Vec<VerdictRow>, AnalysisError> {
    config
        .validate()
        .map_err(|e| AnalysisError::StructureViolation(e.to_string()))?;
    let topo = config
        .topology
        .build()
        .map_err(|e| AnalysisError::StructureViolation(e.to_string()))?;
    let corrupt: BTreeSet<AgentId> = config.corrupt.iter().copied().map(AgentId).collect();
    let rat = |v: f64| BigRational::from_float(v).expect("finite");
    let f = config.frac_bits;

    let mut queries = Vec::new();
    let mut results = Vec::new();
    for (owner, monomials) in &config.polynomials {
        let owner = AgentId(*owner);
        if !corrupt.contains(&owner) {
            continue;
        }
        let ms: Vec<Monomial> = monomials
            .iter()
            .map(|m| {
                let exps: Vec<(u32, u32)> =
                    m.exponents.iter().map(|(a, e)| (*a, *e)).collect();
                Monomial::from_f64(quantize(m.coeff, f), &exps)
            })
            .collect();
        let spec = decompose(&ms, owner, topo.neighbors(owner))
            .map_err(|e| AnalysisError::StructureViolation(e.to_string()))?;
        let values: BTreeMap<AgentId, BigRational> = spec
            .group()
            .into_iter()
            .map(|a| (a, rat(quantize(config.initial(a), f))))
            .collect();
        let result = spec
            .evaluate_exact(&values)
            .map_err(|e| AnalysisError::StructureViolation(e.to_string()))?;
        queries.push(spec);
        results.push(result);
    }
    let corrupt_values: BTreeMap<AgentId, BigRational> = corrupt
        .iter()
        .map(|a| (*a, rat(quantize(config.initial(*a), f))))
        .collect();
    let mut instance = privacy::build_system(&queries, &corrupt_values, &results)?;
    // the analyzer knows the ground truth here, enabling the falsifier
    instance.truth = Some(
        instance
            .noncorrupt
            .iter()
            .map(|a| rat(quantize(config.initial(*a), f)))
            .collect(),
    );

    let mut rows = Vec::new();
    for (i, agent) in instance.noncorrupt.iter().enumerate() {
        let verdict = privacy::check_general(&instance, i, 2000);
        let (name, witness) = match verdict {
            Verdict::Identified => ("identified", None),
            Verdict::NotIdentified { witness } => ("not_identified", Some(witness)),
            Verdict::Unknown => ("unknown", None),
        };
        rows.push(VerdictRow {
            agent: agent.0,
            verdict: name.into(),
            witness,
        });
    }
    Ok(rows)
}
