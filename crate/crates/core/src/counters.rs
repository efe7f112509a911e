//! Ciphertext operation counters.

use core::ops::{Add, Sub};
use core::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::paillier::{Ciphertext, PublicKey, SecretKey};

#[derive(Debug, Default)]
pub struct OpCounters {
    encryptions: AtomicU64,
    decryptions: AtomicU64,
    additions: AtomicU64,
    scalar_muls: AtomicU64,
    obfuscations: AtomicU64,
}

/// Plain snapshot of [`OpCounters`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub encryptions: u64,
    pub decryptions: u64,
    /// Homomorphic additions and subtractions.
    pub additions: u64,
    pub scalar_muls: u64,
    pub obfuscations: u64,
}

impl OpCounters {
    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            encryptions: self.encryptions.load(Ordering::Relaxed),
            decryptions: self.decryptions.load(Ordering::Relaxed),
            additions: self.additions.load(Ordering::Relaxed),
            scalar_muls: self.scalar_muls.load(Ordering::Relaxed),
            obfuscations: self.obfuscations.load(Ordering::Relaxed),
        }
    }

    fn bump(field: &AtomicU64) {
        field.fetch_add(1, Ordering::Relaxed);
    }
}

impl Add for OpCounts {
    type Output = OpCounts;
    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            encryptions: self.encryptions + o.encryptions,
            decryptions: self.decryptions + o.decryptions,
            additions: self.additions + o.additions,
            scalar_muls: self.scalar_muls + o.scalar_muls,
            obfuscations: self.obfuscations + o.obfuscations,
        }
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, o: OpCounts) -> OpCounts {
        OpCounts {
            encryptions: self.encryptions - o.encryptions,
            decryptions: self.decryptions - o.decryptions,
            additions: self.additions - o.additions,
            scalar_muls: self.scalar_muls - o.scalar_muls,
            obfuscations: self.obfuscations - o.obfuscations,
        }
    }
}

/// A public key whose homomorphic operations are tallied.
#[derive(Clone, Copy)]
pub struct CountingKey<'a> {
    pub key: &'a PublicKey,
    pub counters: &'a OpCounters,
}

impl<'a> CountingKey<'a> {
    pub fn new(key: &'a PublicKey, counters: &'a OpCounters) -> Self {
        Self { key, counters }
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        OpCounters::bump(&self.counters.additions);
        self.key.add(a, b)
    }

    pub fn add_assign(&self, acc: &mut Ciphertext, b: &Ciphertext) -> Result<()> {
        OpCounters::bump(&self.counters.additions);
        self.key.add_assign(acc, b)
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        OpCounters::bump(&self.counters.additions);
        self.key.sub(a, b)
    }

    pub fn shift_left(&self, c: &Ciphertext, bits: u64) -> Result<Ciphertext> {
        OpCounters::bump(&self.counters.scalar_muls);
        self.key.shift_left(c, bits)
    }

    pub fn obfuscate<R: RngCore + CryptoRng>(&self, c: &Ciphertext, rng: &mut R) -> Result<Ciphertext> {
        OpCounters::bump(&self.counters.obfuscations);
        self.key.obfuscate(c, rng)
    }
}

/// Secret-key side of the tallies (guest only).
#[derive(Clone, Copy)]
pub struct CountingSecret<'a> {
    pub key: &'a SecretKey,
    pub counters: &'a OpCounters,
}

impl<'a> CountingSecret<'a> {
    pub fn new(key: &'a SecretKey, counters: &'a OpCounters) -> Self {
        Self { key, counters }
    }

    pub fn encrypt<R: RngCore + CryptoRng>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        OpCounters::bump(&self.counters.encryptions);
        self.key.encrypt(m, rng)
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint> {
        OpCounters::bump(&self.counters.decryptions);
        self.key.decrypt(c)
    }
}
