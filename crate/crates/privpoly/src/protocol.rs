//! The private evaluation protocol.
//!
//! The query owner learns the value of its decomposed polynomial over the
//! neighbors' private values; no neighbor learns another agent's value or the
//! result. Bivariate parts travel as Paillier ciphertexts of owner-side
//! coefficients, exponentiated by neighbors with powers of their encoded
//! values and masked additively. Product terms are evaluated factor by
//! factor under multiplicative masks; one distinguished neighbor folds the
//! owner's partial product into its own masked message so the owner only ever
//! sees the masked total.
//!
//! All field values carry fixed-point scale exponents. A per-query scale
//! plan picks one common exponent `E` at which every additive contribution
//! lands, choosing per-coefficient encoding scales so products of encodings
//! telescope to `E` exactly.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet};

use crate::agent::AgentId;
use crate::codec::{self, EncodedValue, FieldParams};
use crate::error::{CodecError, NetError, PolyError, ProtocolError};
use crate::modmath;
use crate::netsim::{Envelope, Network, Topology};
use crate::paillier::{self, Ciphertext, PublicKey, SecretKey};
use crate::poly::{Factor, PolynomialSpec};
use crate::shares::{AgentShares, ShareMode, ShareSystem};

/// Pointwise transforms applicable to a private value before encoding; the
/// crypto path is unchanged, so the protocol evaluates the polynomial in the
/// transformed values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    Power(i32),
    Exp,
    Sin,
    Abs,
    /// `1/x`, rejected within `1e-6` of the pole.
    RecipGuarded,
}

impl Transform {
    pub fn apply(&self, x: f64) -> Result<f64, CodecError> {
        let y = match self {
            Transform::Identity => x,
            Transform::Power(p) => x.powi(*p),
            Transform::Exp => x.exp(),
            Transform::Sin => x.sin(),
            Transform::Abs => x.abs(),
            Transform::RecipGuarded => {
                if x.abs() < 1e-6 {
                    return Err(CodecError::EncodingOverflow);
                }
                1.0 / x
            }
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(CodecError::EncodingOverflow)
        }
    }
}

/// Per-agent transforms; a missing entry means identity. `bivariate` applies
/// to values used in the owner-part and bivariate terms, `factor` to values
/// used inside product-term factors.
#[derive(Debug, Clone, Default)]
pub struct Transforms {
    pub bivariate: BTreeMap<AgentId, Transform>,
    pub factor: BTreeMap<AgentId, Transform>,
}

impl Transforms {
    fn apply_all(
        &self,
        values: &BTreeMap<AgentId, f64>,
    ) -> Result<(BTreeMap<AgentId, f64>, BTreeMap<AgentId, f64>), CodecError> {
        let mut biv = BTreeMap::new();
        let mut fac = BTreeMap::new();
        for (a, x) in values {
            biv.insert(
                *a,
                self.bivariate.get(a).unwrap_or(&Transform::Identity).apply(*x)?,
            );
            fac.insert(
                *a,
                self.factor.get(a).unwrap_or(&Transform::Identity).apply(*x)?,
            );
        }
        Ok((biv, fac))
    }
}

/// How the distinguished neighbor is picked. The owner's input is never
/// consulted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistinguishedPolicy {
    MinId,
    /// Order-invariant choice keyed by a shared seed.
    SeededHash(u64),
}

/// Picks the distinguished neighbor among `neighbors`.
pub fn select_distinguished(
    neighbors: &BTreeSet<AgentId>,
    policy: DistinguishedPolicy,
) -> Result<AgentId, ProtocolError> {
    let first = neighbors
        .iter()
        .next()
        .ok_or(ProtocolError::InsufficientNeighbors)?;
    match policy {
        DistinguishedPolicy::MinId => Ok(*first),
        DistinguishedPolicy::SeededHash(seed) => {
            // deterministic score per id; set iteration order cannot matter
            let score = |a: &AgentId| {
                let mut h = seed ^ 0x9e37_79b9_7f4a_7c15u64;
                h ^= (a.0 as u64).wrapping_mul(0xff51_afd7_ed55_8ccd);
                h = h.rotate_left(31).wrapping_mul(0xc4ce_b9fe_1a85_ec53);
                h
            };
            Ok(*neighbors
                .iter()
                .min_by_key(|a| (score(a), a.0))
                .expect("nonempty"))
        }
    }
}

/// A masked factor evaluation: a ciphertext when the factor's coefficients
/// are private, a bare (but multiplicatively masked) field element otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum MuValue {
    Enc(Ciphertext),
    Plain(BigUint),
}

/// Wire messages of one query round.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryMessage {
    /// Owner's public key, broadcast once per session.
    PublishKey(PublicKey),
    /// Owner -> neighbor: encrypted bivariate coefficients (tagged with the
    /// neighbor-side exponent) and, per product term, encrypted factor
    /// coefficients (`None` when the neighbor can compute locally:
    /// identity or public-coefficient factors, or the distinguished role).
    EncCoeffs {
        bivariate: Vec<(Ciphertext, u32)>,
        factors: Vec<Option<Vec<(Ciphertext, u32)>>>,
    },
    /// Ordinary neighbor -> owner: masked bivariate sum and masked factor
    /// values, one per product term.
    SigmaMu { sigma: Ciphertext, mu: Vec<MuValue> },
    /// Owner -> distinguished neighbor: per product term, encryptions of the
    /// partial product folded into each distinguished-factor coefficient.
    PsiForward { per_term: Vec<Vec<(Ciphertext, u32)>> },
    /// Distinguished neighbor -> owner: masked bivariate sum combined with
    /// all folded product terms.
    SigmaPsi(Ciphertext),
    /// Opaque share-contribution relay (payload modeled by capability).
    SealedShare,
    /// Owner tells survivors that an agent left.
    DropoutNotice(AgentId),
}

impl QueryMessage {
    fn wire_bytes(&self, field: &FieldParams) -> u64 {
        let fe = (field.omega().bits() + 7) / 8 + 4;
        let body: u64 = match self {
            QueryMessage::PublishKey(pk) => pk.to_bytes().len() as u64,
            QueryMessage::EncCoeffs { bivariate, factors } => {
                let b: u64 = bivariate.iter().map(|(c, _)| c.wire_len() as u64 + 4).sum();
                let f: u64 = factors
                    .iter()
                    .flatten()
                    .flatten()
                    .map(|(c, _)| c.wire_len() as u64 + 4)
                    .sum();
                b + f
            }
            QueryMessage::SigmaMu { sigma, mu } => {
                sigma.wire_len() as u64
                    + mu.iter()
                        .map(|m| match m {
                            MuValue::Enc(c) => c.wire_len() as u64,
                            MuValue::Plain(_) => fe,
                        })
                        .sum::<u64>()
            }
            QueryMessage::PsiForward { per_term } => per_term
                .iter()
                .flatten()
                .map(|(c, _)| c.wire_len() as u64 + 4)
                .sum(),
            QueryMessage::SigmaPsi(c) => c.wire_len() as u64,
            QueryMessage::SealedShare => fe + 32,
            QueryMessage::DropoutNotice(_) => 4,
        };
        body + 8
    }
}

/// Result of one query round.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub value: f64,
    /// The result as a field residue at the common scale exponent.
    pub residue: EncodedValue,
    pub messages: u64,
    pub bytes: u64,
}

/// Outcome of dropout handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutOutcome {
    Handled,
    /// The dropped agent held the distinguished role; a new one was chosen.
    DistinguishedReplaced(AgentId),
}

// --- scale planning ----------------------------------------------------------

struct TermPlan {
    /// Sum of the non-distinguished factor scales (the scale of the partial
    /// product the owner forwards).
    psi_scale: u32,
    /// Encoding scale per member factor (0 for identity factors).
    factor_scale: BTreeMap<AgentId, u32>,
}

/// The per-query scale layout: one common exponent `E` plus per-term factor
/// scales chosen so every contribution lands at `E`.
pub struct ScalePlan {
    pub common: u32,
    terms: Vec<TermPlan>,
}

fn factor_of(spec: &PolynomialSpec, t: usize, a: AgentId) -> Factor {
    spec.multiplicative[t]
        .factors
        .get(&a)
        .cloned()
        .unwrap_or_else(Factor::identity)
}

impl ScalePlan {
    pub fn new(
        spec: &PolynomialSpec,
        distinguished: Option<AgentId>,
    ) -> Result<ScalePlan, ProtocolError> {
        let mut common = spec.owner_part.degree() + 1;
        for part in spec.bivariate.values() {
            for term in &part.terms {
                common = common.max(term.owner_exp + term.neighbor_exp + 1);
            }
        }
        let mut terms = Vec::new();
        for t in 0..spec.multiplicative.len() {
            let d = distinguished.ok_or(ProtocolError::InsufficientNeighbors)?;
            let mut factor_scale = BTreeMap::new();
            let mut psi_scale = 0;
            let mut d_deg = 0;
            for a in spec.group() {
                let f = factor_of(spec, t, a);
                let s = if f.is_identity() { 0 } else { f.poly.degree() + 1 };
                factor_scale.insert(a, s);
                if a == d {
                    d_deg = if f.is_identity() { 0 } else { f.poly.degree() };
                } else {
                    psi_scale += s;
                }
            }
            common = common.max(psi_scale + d_deg + 1);
            terms.push(TermPlan { psi_scale, factor_scale });
        }
        Ok(ScalePlan { common, terms })
    }
}

// --- field-arithmetic reference path ----------------------------------------

fn field_mul(a: &BigUint, b: &BigUint, omega: &BigUint) -> BigUint {
    a * b % omega
}

fn encoded_power(
    value: f64,
    exp: u32,
    field: &FieldParams,
) -> Result<BigUint, ProtocolError> {
    if exp == 0 {
        return Ok(BigUint::one());
    }
    let base = codec::encode(value, field, 1)?;
    Ok(modmath::mod_pow(
        base.residue(),
        &BigUint::from(exp),
        field.omega(),
    )
    .map_err(crate::error::CryptoError::from)?)
}

fn encode_coeff(
    c: &num_rational::BigRational,
    field: &FieldParams,
    scale: u32,
) -> Result<BigUint, CodecError> {
    Ok(codec::encode_rational(c, field, scale)?.residue().clone())
}

/// A factor polynomial evaluated in the field at its plan scale: coefficients
/// quantized at `scale - q`, multiplied by encoded powers of the value.
fn factor_value(
    factor: &Factor,
    value: f64,
    scale: u32,
    field: &FieldParams,
) -> Result<BigUint, ProtocolError> {
    if factor.is_identity() {
        return Ok(BigUint::one());
    }
    let omega = field.omega();
    let mut acc = BigUint::zero();
    for (q, c) in factor.poly.terms() {
        let cr = encode_coeff(c, field, scale - q)?;
        let xp = encoded_power(value, *q, field)?;
        acc = (acc + field_mul(&cr, &xp, omega)) % omega;
    }
    Ok(acc)
}

/// Crypto-free reference: evaluates the spec in the exact field arithmetic
/// the protocol uses (same quantization points, same scale plan), so a
/// protocol run must reproduce this residue bit for bit.
pub fn evaluate_encoded(
    spec: &PolynomialSpec,
    values_biv: &BTreeMap<AgentId, f64>,
    values_fact: &BTreeMap<AgentId, f64>,
    field: &FieldParams,
    distinguished: Option<AgentId>,
) -> Result<EncodedValue, ProtocolError> {
    for a in spec.group() {
        if !values_biv.contains_key(&a) || !values_fact.contains_key(&a) {
            return Err(PolyError::MissingAgent(a).into());
        }
    }
    let plan = ScalePlan::new(spec, distinguished)?;
    let e = plan.common;
    let omega = field.omega();
    let x_owner = values_biv[&spec.owner];
    let mut acc = BigUint::zero();
    for (q, c) in spec.owner_part.terms() {
        let cr = encode_coeff(c, field, e - q)?;
        let xp = encoded_power(x_owner, *q, field)?;
        acc = (acc + field_mul(&cr, &xp, omega)) % omega;
    }
    for part in spec.bivariate.values() {
        let xj = values_biv[&part.neighbor];
        for term in &part.terms {
            let cr = encode_coeff(&term.coeff, field, e - term.owner_exp - term.neighbor_exp)?;
            let xi = encoded_power(x_owner, term.owner_exp, field)?;
            let xn = encoded_power(xj, term.neighbor_exp, field)?;
            acc = (acc + field_mul(&field_mul(&cr, &xi, omega), &xn, omega)) % omega;
        }
    }
    for (t, tp) in plan.terms.iter().enumerate() {
        let d = distinguished.expect("plan construction required a distinguished id");
        // partial product over non-distinguished members
        let mut psi = BigUint::one();
        for a in spec.group() {
            if a == d {
                continue;
            }
            let f = factor_of(spec, t, a);
            psi = field_mul(
                &psi,
                &factor_value(&f, values_fact[&a], tp.factor_scale[&a], field)?,
                omega,
            );
        }
        // distinguished factor with coefficients quantized at E - q - psi_scale
        let df = factor_of(spec, t, d);
        let xd = values_fact[&d];
        let mut folded = BigUint::zero();
        for (q, c) in df.poly.terms() {
            let cr = encode_coeff(c, field, e - q - tp.psi_scale)?;
            let xp = encoded_power(xd, *q, field)?;
            folded = (folded + field_mul(&field_mul(&cr, &psi, omega), &xp, omega)) % omega;
        }
        acc = (acc + folded) % omega;
    }
    Ok(EncodedValue::from_residue(acc, e))
}

// --- the protocol session ----------------------------------------------------

/// One owner's long-lived query context: key material, share state, the
/// star-shaped communication pattern around the owner, and the (mutable
/// under dropout) polynomial spec.
pub struct QuerySession {
    spec: PolynomialSpec,
    field: FieldParams,
    pk: PublicKey,
    sk: SecretKey,
    shares: ShareSystem,
    network: Network<QueryMessage>,
    distinguished: AgentId,
    transforms: Transforms,
    rng: ChaCha20Rng,
}

impl QuerySession {
    pub fn new(
        spec: PolynomialSpec,
        field: FieldParams,
        share_mode: ShareMode,
        modulus_bits: u64,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        if spec.neighbors.len() < 2 {
            return Err(ProtocolError::InsufficientNeighbors);
        }
        let omega_bits = field.omega().bits();
        if modulus_bits < 2 * omega_bits + 64 {
            return Err(NetError::ConfigError(format!(
                "key length {modulus_bits} too short for a {omega_bits}-bit field; need at least {}",
                2 * omega_bits + 64
            ))
            .into());
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pk, sk) = paillier::keygen(modulus_bits, &mut rng);
        let shares = ShareSystem::new(share_mode, field.omega().clone(), spec.group(), seed)?;
        let owner = spec.owner;
        let topology = Topology::build(
            spec.group(),
            spec.neighbors.iter().map(|j| (owner, *j)),
        )?;
        let mut network = Network::new(topology);
        let distinguished = select_distinguished(&spec.neighbors, DistinguishedPolicy::MinId)?;

        // session setup traffic: key broadcast, plus pairwise mask keys in
        // Prf mode (relayed sealed through the owner between non-adjacent
        // members)
        for j in &spec.neighbors {
            let msg = QueryMessage::PublishKey(pk.clone());
            let bytes = msg.wire_bytes(&field);
            network.send(Envelope {
                from: owner,
                to: *j,
                relay: None,
                kind: "publish-key",
                payload: msg,
                sealed: false,
                bytes,
            })?;
        }
        if share_mode == ShareMode::Prf {
            let members: Vec<AgentId> = spec.group().into_iter().collect();
            for (i, a) in members.iter().enumerate() {
                for b in &members[i + 1..] {
                    Self::send_sealed(&mut network, &field, owner, *a, *b)?;
                }
            }
        }
        network.advance_tick();

        Ok(QuerySession {
            spec,
            field,
            pk,
            sk,
            shares,
            network,
            distinguished,
            transforms: Transforms::default(),
            rng,
        })
    }

    pub fn with_transforms(mut self, transforms: Transforms) -> Self {
        self.transforms = transforms;
        self
    }

    pub fn spec(&self) -> &PolynomialSpec {
        &self.spec
    }

    pub fn distinguished(&self) -> AgentId {
        self.distinguished
    }

    pub fn network(&self) -> &Network<QueryMessage> {
        &self.network
    }

    pub fn field(&self) -> &FieldParams {
        &self.field
    }

    fn send_sealed(
        network: &mut Network<QueryMessage>,
        field: &FieldParams,
        owner: AgentId,
        from: AgentId,
        to: AgentId,
    ) -> Result<(), ProtocolError> {
        let relay = if from == owner || to == owner { None } else { Some(owner) };
        let msg = QueryMessage::SealedShare;
        let bytes = msg.wire_bytes(field);
        network.send(Envelope {
            from,
            to,
            relay,
            kind: "sealed-share",
            payload: msg,
            sealed: true,
            bytes,
        })?;
        Ok(())
    }

    fn send(
        &mut self,
        from: AgentId,
        to: AgentId,
        kind: &'static str,
        msg: QueryMessage,
    ) -> Result<(), ProtocolError> {
        let bytes = msg.wire_bytes(&self.field);
        self.network.send(Envelope {
            from,
            to,
            relay: None,
            kind,
            payload: msg,
            sealed: false,
            bytes,
        })?;
        Ok(())
    }

    /// Runs one full query round at evaluation index `k`. The same `k` must
    /// not be reused: masks are consumed once.
    pub fn run_at(
        &mut self,
        k: u64,
        values: &BTreeMap<AgentId, f64>,
    ) -> Result<QueryResult, ProtocolError> {
        for a in self.spec.group() {
            if !values.contains_key(&a) {
                return Err(PolyError::MissingAgent(a).into());
            }
        }
        let (vbiv, vfact) = self.transforms.apply_all(values)?;
        let msg0 = self.network.messages_sent();
        let byte0 = self.network.bytes_sent();

        // per-round share traffic (Direct mode only)
        if self.shares.mode() == ShareMode::Direct {
            let owner = self.spec.owner;
            let members = self.shares.active_members();
            for a in &members {
                for b in &members {
                    if a != b {
                        Self::send_sealed(&mut self.network, &self.field, owner, *a, *b)?;
                    }
                }
            }
            self.network.advance_tick();
        }
        let share_map = self.shares.shares_at(k, self.spec.t_count());

        let plan = ScalePlan::new(&self.spec, Some(self.distinguished))?;
        let result = self.round(&plan, &share_map, &vbiv, &vfact);
        result.map(|residue| QueryResult {
            value: codec::decode(&residue, &self.field),
            residue,
            messages: self.network.messages_sent() - msg0,
            bytes: self.network.bytes_sent() - byte0,
        })
    }

    /// Pops `agent`'s inbox until a message satisfying `want` appears,
    /// skipping setup traffic (key broadcasts, sealed share relays, dropout
    /// notices) still queued from earlier ticks.
    fn recv_matching(
        &mut self,
        agent: AgentId,
        want: fn(&QueryMessage) -> bool,
    ) -> Option<QueryMessage> {
        while let Some(env) = self.network.recv(agent) {
            if want(&env.payload) {
                return Some(env.payload);
            }
        }
        None
    }

    /// The message schedule of one round.
    fn round(
        &mut self,
        plan: &ScalePlan,
        share_map: &BTreeMap<AgentId, AgentShares>,
        vbiv: &BTreeMap<AgentId, f64>,
        vfact: &BTreeMap<AgentId, f64>,
    ) -> Result<EncodedValue, ProtocolError> {
        let owner = self.spec.owner;
        let omega = self.field.omega().clone();
        let e = plan.common;
        let t_count = self.spec.t_count();
        let with_products = t_count > 0;
        let d = self.distinguished;
        let ordinary: Vec<AgentId> = self
            .spec
            .neighbors
            .iter()
            .copied()
            .filter(|j| !(with_products && *j == d))
            .collect();

        // owner sends encrypted coefficients to every neighbor
        let x_owner = vbiv[&owner];
        for j in self.spec.neighbors.clone() {
            let mut bivariate = Vec::new();
            if let Some(part) = self.spec.bivariate.get(&j).cloned() {
                for term in &part.terms {
                    let cr = encode_coeff(
                        &term.coeff,
                        &self.field,
                        e - term.owner_exp - term.neighbor_exp,
                    )?;
                    let xi = encoded_power(x_owner, term.owner_exp, &self.field)?;
                    let m = field_mul(&cr, &xi, &omega);
                    bivariate.push((
                        paillier::encrypt(&self.pk, &m, &mut self.rng)?,
                        term.neighbor_exp,
                    ));
                }
            }
            let mut factors = Vec::new();
            for t in 0..t_count {
                let f = factor_of(&self.spec, t, j);
                if j == d || f.is_identity() || f.coeffs_public {
                    factors.push(None);
                } else {
                    let s = plan.terms[t].factor_scale[&j];
                    let mut list = Vec::new();
                    for (q, c) in f.poly.terms() {
                        let cr = encode_coeff(c, &self.field, s - q)?;
                        list.push((paillier::encrypt(&self.pk, &cr, &mut self.rng)?, *q));
                    }
                    factors.push(Some(list));
                }
            }
            self.send(owner, j, "enc-coeffs", QueryMessage::EncCoeffs { bivariate, factors })?;
        }
        self.network.advance_tick();

        // ordinary neighbors answer with masked sums and factor values
        for j in &ordinary {
            let msg = self
                .recv_matching(*j, |m| matches!(m, QueryMessage::EncCoeffs { .. }))
                .expect("owner sent coefficients to every neighbor");
            let QueryMessage::EncCoeffs { bivariate, factors } = msg else {
                unreachable!("filtered above");
            };
            let sh = &share_map[j];
            let sigma = self.masked_bivariate(&bivariate, vbiv[j], &sh.additive)?;
            let mut mu = Vec::new();
            for t in 0..t_count {
                mu.push(self.factor_mu(t, *j, &factors[t], vfact[j], &sh.multiplicative[t], plan)?);
            }
            self.send(*j, owner, "sigma-mu", QueryMessage::SigmaMu { sigma, mu })?;
        }
        self.network.advance_tick();

        // owner folds its own part, decrypts the masked bivariate sums, and
        // multiplies the masked factor values into partial products
        let mut acc = BigUint::zero();
        for (q, c) in self.spec.owner_part.terms() {
            let cr = encode_coeff(c, &self.field, e - q)?;
            let xp = encoded_power(x_owner, *q, &self.field)?;
            acc = (acc + field_mul(&cr, &xp, &omega)) % &omega;
        }
        let mut psi = vec![BigUint::one(); t_count];
        for _ in &ordinary {
            let msg = self
                .recv_matching(owner, |m| matches!(m, QueryMessage::SigmaMu { .. }))
                .expect("every ordinary neighbor answered");
            let QueryMessage::SigmaMu { sigma, mu } = msg else {
                unreachable!("filtered above");
            };
            acc = (acc + paillier::decrypt(&self.sk, &self.pk, &sigma)? % &omega) % &omega;
            for (t, m) in mu.into_iter().enumerate() {
                let v = match m {
                    MuValue::Enc(c) => paillier::decrypt(&self.sk, &self.pk, &c)? % &omega,
                    MuValue::Plain(v) => v,
                };
                psi[t] = field_mul(&psi[t], &v, &omega);
            }
        }

        if with_products {
            // owner's own masked factor joins each partial product
            let own_shares = &share_map[&owner];
            for t in 0..t_count {
                let f = factor_of(&self.spec, t, owner);
                let fv = factor_value(&f, vfact[&owner], plan.terms[t].factor_scale[&owner], &self.field)?;
                let masked = field_mul(&own_shares.multiplicative[t], &fv, &omega);
                psi[t] = field_mul(&psi[t], &masked, &omega);
            }
            // forward each partial product folded into the distinguished
            // factor's coefficients
            let mut per_term = Vec::new();
            for t in 0..t_count {
                let df = factor_of(&self.spec, t, d);
                let mut list = Vec::new();
                for (q, c) in df.poly.terms() {
                    let cr = encode_coeff(c, &self.field, e - q - plan.terms[t].psi_scale)?;
                    let folded = field_mul(&cr, &psi[t], &omega);
                    list.push((paillier::encrypt(&self.pk, &folded, &mut self.rng)?, *q));
                }
                per_term.push(list);
            }
            self.send(owner, d, "psi-forward", QueryMessage::PsiForward { per_term })?;
            self.network.advance_tick();

            // distinguished neighbor combines its bivariate answer with every
            // folded product and replies once
            let coeffs = self
                .recv_matching(d, |m| matches!(m, QueryMessage::EncCoeffs { .. }))
                .expect("owner sent coefficients first");
            let QueryMessage::EncCoeffs { bivariate, .. } = coeffs else {
                unreachable!("filtered above");
            };
            let fwd = self
                .recv_matching(d, |m| matches!(m, QueryMessage::PsiForward { .. }))
                .expect("owner forwarded the partial products");
            let QueryMessage::PsiForward { per_term } = fwd else {
                unreachable!("filtered above");
            };
            let sh = &share_map[&d];
            let mut combined = self.masked_bivariate(&bivariate, vbiv[&d], &sh.additive)?;
            for (t, list) in per_term.iter().enumerate() {
                for (ct, q) in list {
                    let exp = field_mul(
                        &sh.multiplicative[t],
                        &encoded_power(vfact[&d], *q, &self.field)?,
                        &omega,
                    );
                    combined = paillier::homomorphic_add(
                        &self.pk,
                        &combined,
                        &paillier::scalar_mul(&self.pk, ct, &exp)?,
                    )?;
                }
            }
            self.send(d, owner, "sigma-psi", QueryMessage::SigmaPsi(combined))?;
            self.network.advance_tick();

            let msg = self
                .recv_matching(owner, |m| matches!(m, QueryMessage::SigmaPsi(_)))
                .expect("distinguished neighbor replied");
            let QueryMessage::SigmaPsi(ct) = msg else {
                unreachable!("filtered above");
            };
            acc = (acc + paillier::decrypt(&self.sk, &self.pk, &ct)? % &omega) % &omega;
        }

        // owner's own additive share closes the telescoping sum
        acc = (acc + &share_map[&owner].additive) % &omega;
        Ok(EncodedValue::from_residue(acc, e))
    }

    /// `sigma`: product of received coefficient ciphertexts raised to encoded
    /// powers of the local value, times a fresh encryption of the additive
    /// share.
    fn masked_bivariate(
        &mut self,
        bivariate: &[(Ciphertext, u32)],
        value: f64,
        additive: &BigUint,
    ) -> Result<Ciphertext, ProtocolError> {
        let mut acc = paillier::encrypt(&self.pk, additive, &mut self.rng)?;
        for (ct, p) in bivariate {
            let xp = encoded_power(value, *p, &self.field)?;
            acc = paillier::homomorphic_add(
                &self.pk,
                &acc,
                &paillier::scalar_mul(&self.pk, ct, &xp)?,
            )?;
        }
        Ok(acc)
    }

    /// A neighbor's masked factor value for term `t`: encrypted-coefficient
    /// path when the owner sent ciphertexts, plaintext path for identity or
    /// public-coefficient factors (still multiplicatively masked).
    fn factor_mu(
        &mut self,
        t: usize,
        j: AgentId,
        received: &Option<Vec<(Ciphertext, u32)>>,
        value: f64,
        mask: &BigUint,
        plan: &ScalePlan,
    ) -> Result<MuValue, ProtocolError> {
        let omega = self.field.omega().clone();
        match received {
            Some(list) => {
                let mut acc: Option<Ciphertext> = None;
                for (ct, q) in list {
                    let exp = field_mul(mask, &encoded_power(value, *q, &self.field)?, &omega);
                    let part = paillier::scalar_mul(&self.pk, ct, &exp)?;
                    acc = Some(match acc {
                        None => part,
                        Some(prev) => paillier::homomorphic_add(&self.pk, &prev, &part)?,
                    });
                }
                Ok(MuValue::Enc(acc.expect("factor polynomials are nonempty")))
            }
            None => {
                let f = factor_of(&self.spec, t, j);
                let fv = factor_value(&f, value, plan.terms[t].factor_scale[&j], &self.field)?;
                Ok(MuValue::Plain(field_mul(mask, &fv, &omega)))
            }
        }
    }

    /// Removes a neighbor mid-run: the network silences it, survivors are
    /// notified, a designated survivor absorbs its share column, and the spec
    /// shrinks by the substitute-one rule. Results for earlier indices are
    /// unaffected; later rounds evaluate the reduced polynomial.
    pub fn handle_dropout(&mut self, dropped: AgentId) -> Result<DropoutOutcome, ProtocolError> {
        if dropped == self.spec.owner {
            return Err(crate::error::ShareError::ProtocolAbort.into());
        }
        if !self.spec.neighbors.contains(&dropped) {
            return Err(PolyError::MissingAgent(dropped).into());
        }
        if self.spec.neighbors.len() <= 2 {
            return Err(ProtocolError::InsufficientNeighbors);
        }
        self.network.inject_dropout(dropped);
        let survivors: BTreeSet<AgentId> = self
            .spec
            .neighbors
            .iter()
            .copied()
            .filter(|j| *j != dropped)
            .collect();
        let owner = self.spec.owner;
        for j in &survivors {
            self.send(owner, *j, "dropout-notice", QueryMessage::DropoutNotice(dropped))?;
        }
        self.network.advance_tick();
        let absorber = *survivors.iter().next().expect("at least two survivors");
        self.shares.drop_member(dropped, absorber)?;
        self.spec = self.spec.drop_agent(dropped);
        if dropped == self.distinguished {
            self.distinguished = select_distinguished(&survivors, DistinguishedPolicy::MinId)?;
            return Ok(DropoutOutcome::DistinguishedReplaced(self.distinguished));
        }
        Ok(DropoutOutcome::Handled)
    }
}

/// Convenience wrapper: a one-shot query at index 0 with a fresh session.
pub fn run_query(
    spec: PolynomialSpec,
    values: &BTreeMap<AgentId, f64>,
    field: FieldParams,
    share_mode: ShareMode,
    modulus_bits: u64,
    seed: u64,
) -> Result<QueryResult, ProtocolError> {
    QuerySession::new(spec, field, share_mode, modulus_bits, seed)?.run_at(0, values)
}
