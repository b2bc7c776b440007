//! Multiplicative-additive secret shares over the public prime field.
//!
//! For each evaluation index `k`, every group member `j` holds an additive
//! share `a_j(k)` and one multiplicative share `m_j^t(k)` per product term,
//! satisfying `sum_j a_j(k) = 0` and `prod_j m_j^t(k) = 1` modulo `Omega`.
//!
//! Shares are built from a matrix of pairwise contributions: member `h`
//! contributes an entry to every member `j`, with `h`'s own diagonal entry
//! chosen so the row cancels. In `Direct` mode the off-diagonal entries are
//! fresh randomness that must be exchanged each round; in `Prf` mode they are
//! pseudorandom values derived from pairwise one-time keys, so after the key
//! setup no share traffic is needed for any fresh `k`. When a member drops
//! out, a designated survivor absorbs the dropped member's column, restoring
//! both relations over the remaining group.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet};

use crate::agent::AgentId;
use crate::error::ShareError;
use crate::modmath::{mod_inv, mod_neg};

/// How pairwise contributions are sourced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareMode {
    /// Fresh randomness exchanged (sealed, relayed) every round.
    Direct,
    /// Contributions derived from pairwise AES-128 one-time keys; no
    /// per-round traffic.
    Prf,
}

/// One member's shares for a single evaluation index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentShares {
    pub additive: BigUint,
    /// One multiplicative share per product term.
    pub multiplicative: Vec<BigUint>,
}

/// A 128-bit pairwise key for pseudorandom contribution derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrfKey(pub [u8; 16]);

fn aes_block(key: &[u8; 16], block: [u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut b = GenericArray::clone_from_slice(&block);
    cipher.encrypt_block(&mut b);
    b.into()
}

/// Round tag: a public per-index value all members derive from a shared seed.
fn gamma(seed: &[u8; 16], k: u64) -> [u8; 16] {
    let mut block = [0u8; 16];
    block[..8].copy_from_slice(&k.to_le_bytes());
    aes_block(seed, block)
}

/// Expands `AES_key` output into a uniform field element via rejection
/// sampling; the counter stream continues across rejected draws, so both key
/// holders agree on the result. `nonzero` forces a unit (for multiplicative
/// contributions).
fn prf_field_element(
    key: &PrfKey,
    gamma_k: &[u8; 16],
    tweak: u64,
    omega: &BigUint,
    nonzero: bool,
) -> BigUint {
    let nbits = omega.bits();
    let nbytes = ((nbits + 7) / 8) as usize;
    let nblocks = (nbytes + 15) / 16;
    let top_mask: u8 = if nbits % 8 == 0 {
        0xff
    } else {
        (1u8 << (nbits % 8)) - 1
    };
    let mut ctr: u64 = 0;
    loop {
        let mut bytes = Vec::with_capacity(nblocks * 16);
        for _ in 0..nblocks {
            let mut block = *gamma_k;
            for (b, t) in block[..8].iter_mut().zip(tweak.to_le_bytes()) {
                *b ^= t;
            }
            for (b, c) in block[8..].iter_mut().zip(ctr.to_le_bytes()) {
                *b ^= c;
            }
            ctr += 1;
            bytes.extend_from_slice(&aes_block(&key.0, block));
        }
        bytes.truncate(nbytes);
        bytes[nbytes - 1] &= top_mask;
        let v = BigUint::from_bytes_le(&bytes);
        if v < *omega && !(nonzero && v.is_zero()) {
            return v;
        }
    }
}

fn tweak(purpose: u8, term: usize, reversed: bool) -> u64 {
    ((purpose as u64) << 56) | ((term as u64) << 8) | (reversed as u64)
}

/// Generates and tracks shares for one group across evaluation indices.
#[derive(Debug, Clone)]
pub struct ShareSystem {
    mode: ShareMode,
    omega: BigUint,
    members: Vec<AgentId>,
    master_seed: u64,
    /// Unordered pairwise keys, keyed by `(low, high)` member id.
    pair_keys: BTreeMap<(AgentId, AgentId), PrfKey>,
    gamma_seed: [u8; 16],
    /// Dropped member -> survivor absorbing its column.
    absorbed: BTreeMap<AgentId, AgentId>,
}

impl ShareSystem {
    pub fn new(
        mode: ShareMode,
        omega: BigUint,
        members: BTreeSet<AgentId>,
        master_seed: u64,
    ) -> Result<Self, ShareError> {
        if members.len() < 2 {
            return Err(ShareError::GroupTooSmall);
        }
        let members: Vec<AgentId> = members.into_iter().collect();
        // key setup: one exchanged key per unordered pair, plus the shared
        // round-tag seed; in Direct mode these stay unused
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed ^ 0x5eed_5eed_5eed_5eed);
        let mut gamma_seed = [0u8; 16];
        rng.fill(&mut gamma_seed);
        let mut pair_keys = BTreeMap::new();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                let mut key = [0u8; 16];
                rng.fill(&mut key);
                pair_keys.insert((*a, *b), PrfKey(key));
            }
        }
        Ok(ShareSystem {
            mode,
            omega,
            members,
            master_seed,
            pair_keys,
            gamma_seed,
            absorbed: BTreeMap::new(),
        })
    }

    pub fn mode(&self) -> ShareMode {
        self.mode
    }

    pub fn omega(&self) -> &BigUint {
        &self.omega
    }

    /// Members still participating.
    pub fn active_members(&self) -> Vec<AgentId> {
        self.members
            .iter()
            .filter(|m| !self.absorbed.contains_key(m))
            .copied()
            .collect()
    }

    /// One-time messages needed before the first round: pairwise key
    /// exchanges in `Prf` mode, nothing in `Direct` mode.
    pub fn setup_message_count(&self) -> u64 {
        match self.mode {
            ShareMode::Direct => 0,
            ShareMode::Prf => self.pair_keys.len() as u64,
        }
    }

    /// Messages needed to distribute shares for one fresh evaluation index.
    pub fn round_message_count(&self) -> u64 {
        match self.mode {
            ShareMode::Direct => {
                let n = self.active_members().len() as u64;
                n * (n - 1)
            }
            ShareMode::Prf => 0,
        }
    }

    /// Marks `dropped` as gone; `absorber` takes over its share column for
    /// all indices. Idempotent for an already-dropped member.
    pub fn drop_member(&mut self, dropped: AgentId, absorber: AgentId) -> Result<(), ShareError> {
        if self.absorbed.contains_key(&dropped) {
            return Ok(());
        }
        if !self.members.contains(&dropped) || !self.members.contains(&absorber) {
            return Err(ShareError::MissingContribution(dropped));
        }
        if dropped == absorber || self.absorbed.contains_key(&absorber) {
            return Err(ShareError::ProtocolAbort);
        }
        if self.active_members().len() <= 2 {
            return Err(ShareError::GroupTooSmall);
        }
        self.absorbed.insert(dropped, absorber);
        Ok(())
    }

    fn pair_key(&self, a: AgentId, b: AgentId) -> (&PrfKey, bool) {
        if a < b {
            (&self.pair_keys[&(a, b)], false)
        } else {
            (&self.pair_keys[&(b, a)], true)
        }
    }

    /// The contribution member `sender` makes toward `receiver`'s share
    /// (off-diagonal only; diagonal corrections are computed from the row).
    fn contribution(
        &self,
        k: u64,
        purpose: u8,
        term: usize,
        sender: AgentId,
        receiver: AgentId,
        direct_rng: &mut ChaCha20Rng,
    ) -> BigUint {
        match self.mode {
            ShareMode::Direct => {
                if purpose == 0 {
                    direct_rng.gen_biguint_below(&self.omega)
                } else {
                    loop {
                        let v = direct_rng.gen_biguint_below(&self.omega);
                        if !v.is_zero() {
                            break v;
                        }
                    }
                }
            }
            ShareMode::Prf => {
                let (key, reversed) = self.pair_key(sender, receiver);
                let g = gamma(&self.gamma_seed, k);
                prf_field_element(key, &g, tweak(purpose, term, reversed), &self.omega, purpose == 1)
            }
        }
    }

    /// Computes every active member's shares for index `k`, with `t_count`
    /// multiplicative shares each and dropped members' columns folded into
    /// their absorbers. Shares for term `t` do not depend on `t_count`, so a
    /// mid-run change of the term count leaves earlier terms' masks intact.
    pub fn shares_at(&self, k: u64, t_count: usize) -> BTreeMap<AgentId, AgentShares> {
        let mut direct_rng = {
            let mut seed = [0u8; 32];
            seed[..8].copy_from_slice(&self.master_seed.to_le_bytes());
            seed[8..16].copy_from_slice(&k.to_le_bytes());
            seed[16] = 0xd1;
            ChaCha20Rng::from_seed(seed)
        };

        // additive contribution matrix: column sums become shares
        let mut additive: BTreeMap<AgentId, BigUint> =
            self.members.iter().map(|m| (*m, BigUint::zero())).collect();
        for sender in &self.members {
            let mut row_sum = BigUint::zero();
            for receiver in &self.members {
                if receiver == sender {
                    continue;
                }
                let c = self.contribution(k, 0, 0, *sender, *receiver, &mut direct_rng);
                row_sum = (row_sum + &c) % &self.omega;
                let target = self.resolve(*receiver);
                *additive.get_mut(&target).expect("member present") += c;
            }
            // diagonal correction so the row cancels
            let diag = mod_neg(&row_sum, &self.omega);
            let target = self.resolve(*sender);
            *additive.get_mut(&target).expect("member present") += diag;
        }

        // one multiplicative matrix per product term
        let mut multiplicative: BTreeMap<AgentId, Vec<BigUint>> = self
            .members
            .iter()
            .map(|m| (*m, vec![BigUint::one(); t_count]))
            .collect();
        for t in 0..t_count {
            for sender in &self.members {
                let mut row_prod = BigUint::one();
                for receiver in &self.members {
                    if receiver == sender {
                        continue;
                    }
                    let c = self.contribution(k, 1, t, *sender, *receiver, &mut direct_rng);
                    row_prod = row_prod * &c % &self.omega;
                    let target = self.resolve(*receiver);
                    let slot = &mut multiplicative.get_mut(&target).expect("member present")[t];
                    *slot = &*slot * &c % &self.omega;
                }
                let diag = mod_inv(&row_prod, &self.omega)
                    .expect("unit contributions are invertible mod a prime");
                let target = self.resolve(*sender);
                let slot = &mut multiplicative.get_mut(&target).expect("member present")[t];
                *slot = &*slot * diag % &self.omega;
            }
        }

        self.active_members()
            .into_iter()
            .map(|m| {
                (
                    m,
                    AgentShares {
                        additive: &additive[&m] % &self.omega,
                        multiplicative: multiplicative[&m].clone(),
                    },
                )
            })
            .collect()
    }

    /// Follows absorption chains to the live holder of a column.
    fn resolve(&self, member: AgentId) -> AgentId {
        let mut m = member;
        while let Some(next) = self.absorbed.get(&m) {
            m = *next;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn omega() -> BigUint {
        (BigUint::one() << 89u32) - BigUint::one()
    }

    fn group(n: u32) -> BTreeSet<AgentId> {
        (1..=n).map(AgentId).collect()
    }

    fn assert_relations(sys: &ShareSystem, k: u64, t_count: usize) {
        let shares = sys.shares_at(k, t_count);
        assert_eq!(shares.len(), sys.active_members().len());
        let omega = sys.omega();
        let sum = shares
            .values()
            .fold(BigUint::zero(), |acc, s| (acc + &s.additive) % omega);
        assert!(sum.is_zero(), "additive shares must cancel at k={k}");
        for t in 0..t_count {
            let prod = shares
                .values()
                .fold(BigUint::one(), |acc, s| acc * &s.multiplicative[t] % omega);
            assert!(prod.is_one(), "multiplicative shares must cancel at k={k}, t={t}");
        }
    }

    #[test]
    fn relations_hold_in_both_modes() {
        for mode in [ShareMode::Direct, ShareMode::Prf] {
            let sys = ShareSystem::new(mode, omega(), group(5), 42).unwrap();
            for k in 0..20 {
                assert_relations(&sys, k, 3);
            }
        }
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        for mode in [ShareMode::Direct, ShareMode::Prf] {
            let a = ShareSystem::new(mode, omega(), group(4), 7).unwrap();
            let b = ShareSystem::new(mode, omega(), group(4), 7).unwrap();
            assert_eq!(a.shares_at(3, 2), b.shares_at(3, 2));
        }
    }

    #[test]
    fn distinct_indices_give_distinct_shares() {
        for mode in [ShareMode::Direct, ShareMode::Prf] {
            let sys = ShareSystem::new(mode, omega(), group(4), 9).unwrap();
            let a = sys.shares_at(0, 1);
            let b = sys.shares_at(1, 1);
            assert_ne!(a, b);
        }
    }

    #[test]
    fn multiplicative_shares_are_units() {
        let sys = ShareSystem::new(ShareMode::Prf, omega(), group(6), 11).unwrap();
        for (_, s) in sys.shares_at(5, 2) {
            for m in &s.multiplicative {
                assert!(!m.is_zero());
            }
        }
    }

    #[test]
    fn dropout_merge_preserves_relations() {
        for mode in [ShareMode::Direct, ShareMode::Prf] {
            let mut sys = ShareSystem::new(mode, omega(), group(6), 13).unwrap();
            sys.drop_member(AgentId(3), AgentId(1)).unwrap();
            for k in 0..10 {
                assert_relations(&sys, k, 2);
            }
            sys.drop_member(AgentId(5), AgentId(2)).unwrap();
            assert_eq!(sys.active_members().len(), 4);
            for k in 0..10 {
                assert_relations(&sys, k, 2);
            }
        }
    }

    #[test]
    fn chained_absorption_preserves_relations() {
        let mut sys = ShareSystem::new(ShareMode::Prf, omega(), group(5), 17).unwrap();
        sys.drop_member(AgentId(2), AgentId(3)).unwrap();
        sys.drop_member(AgentId(3), AgentId(4)).unwrap();
        for k in 0..5 {
            assert_relations(&sys, k, 1);
        }
    }

    #[test]
    fn drop_is_idempotent_and_validated() {
        let mut sys = ShareSystem::new(ShareMode::Direct, omega(), group(4), 21).unwrap();
        sys.drop_member(AgentId(2), AgentId(1)).unwrap();
        sys.drop_member(AgentId(2), AgentId(4)).unwrap(); // already gone: no-op
        assert_eq!(sys.active_members(), vec![AgentId(1), AgentId(3), AgentId(4)]);
        assert!(matches!(
            sys.drop_member(AgentId(3), AgentId(2)),
            Err(ShareError::ProtocolAbort)
        ));
        assert!(matches!(
            sys.drop_member(AgentId(9), AgentId(1)),
            Err(ShareError::MissingContribution(AgentId(9)))
        ));
    }

    #[test]
    fn cannot_shrink_below_two() {
        let mut sys = ShareSystem::new(ShareMode::Direct, omega(), group(3), 23).unwrap();
        sys.drop_member(AgentId(3), AgentId(1)).unwrap();
        assert!(matches!(
            sys.drop_member(AgentId(2), AgentId(1)),
            Err(ShareError::GroupTooSmall)
        ));
    }

    #[test]
    fn group_of_one_rejected() {
        assert!(matches!(
            ShareSystem::new(ShareMode::Prf, omega(), group(1), 1),
            Err(ShareError::GroupTooSmall)
        ));
    }

    #[test]
    fn message_counts_per_mode() {
        let direct = ShareSystem::new(ShareMode::Direct, omega(), group(5), 1).unwrap();
        assert_eq!(direct.setup_message_count(), 0);
        assert_eq!(direct.round_message_count(), 20);
        let prf = ShareSystem::new(ShareMode::Prf, omega(), group(5), 1).unwrap();
        assert_eq!(prf.setup_message_count(), 10);
        assert_eq!(prf.round_message_count(), 0);
    }

    #[test]
    fn prf_shares_look_uniform_in_coarse_bins() {
        // low-resolution sanity check on the high nibble of the additive share
        let sys = ShareSystem::new(ShareMode::Prf, omega(), group(3), 31).unwrap();
        let omega = sys.omega().clone();
        let bin_width = &omega / 16u32;
        let mut counts = [0u64; 16];
        for k in 0..600 {
            let shares = sys.shares_at(k, 0);
            let s = &shares[&AgentId(1)].additive;
            let bin = (s / &bin_width).min(BigUint::from(15u32));
            counts[bin.to_u32_digits().first().copied().unwrap_or(0) as usize] += 1;
        }
        // chi-square with 15 dof; 37.7 is the 0.999 quantile
        let expected = 600.0 / 16.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(stat < 37.697, "chi-square statistic too large: {stat}");
    }
}
