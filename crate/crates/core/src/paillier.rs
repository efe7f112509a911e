//! Paillier cryptosystem with `g = n + 1`.
//!
//! Only the additive properties are used by the boosting protocol:
//! `E(a) * E(b) = E(a + b)` and `E(a)^k = E(k * a)` modulo `n²`.
//! The secret key keeps the prime factors so the guest can encrypt and
//! decrypt through the Chinese remainder theorem; hosts only ever see a
//! [`PublicKey`].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Smallest accepted modulus size.
pub const MIN_KEY_BITS: u64 = 256;

/// Truncated SHA-256 of the modulus. Identifies which key a ciphertext
/// belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub [u8; 8]);

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    fingerprint: Fingerprint,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("bits", &self.n.bits())
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Result<Self> {
        if n.bits() < MIN_KEY_BITS || n.is_even() {
            return Err(Error::Config(alloc::format!(
                "invalid Paillier modulus of {} bits",
                n.bits()
            )));
        }
        let mut hasher = Sha256::new();
        hasher.update(b"paillier-n");
        hasher.update(n.to_bytes_be());
        let digest = hasher.finalize();
        let mut fp = [0u8; 8];
        fp.copy_from_slice(&digest[..8]);
        Ok(Self {
            n_squared: &n * &n,
            n,
            fingerprint: Fingerprint(fp),
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    /// Bit length of the largest plaintext the packing layer may use,
    /// `bit_length(n) - 1`.
    pub fn max_plaintext_bits(&self) -> u64 {
        self.n.bits() - 1
    }

    fn check_plaintext(&self, m: &BigUint) -> Result<()> {
        let bound = self.max_plaintext_bits();
        if m.bits() > bound {
            return Err(Error::PlaintextOverflow {
                bits: m.bits(),
                bound,
            });
        }
        Ok(())
    }

    fn check(&self, c: &Ciphertext) -> Result<()> {
        if c.fingerprint != self.fingerprint {
            return Err(Error::KeyMismatch);
        }
        Ok(())
    }

    /// `g^m mod n²` for `g = n + 1`, which is `1 + m·n`.
    fn g_pow(&self, m: &BigUint) -> BigUint {
        (BigUint::one() + m * &self.n) % &self.n_squared
    }

    pub fn encrypt<R: RngCore + CryptoRng>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        self.check_plaintext(m)?;
        let r = random_unit(&self.n, rng);
        let value = self.g_pow(m) * r.modpow(&self.n, &self.n_squared) % &self.n_squared;
        Ok(Ciphertext {
            value,
            fingerprint: self.fingerprint,
        })
    }

    /// Deterministic encryption with randomness `r = 1`. Used as the
    /// additive identity of ciphertext accumulators; never sent as is.
    pub fn encrypt_trivial(&self, m: &BigUint) -> Ciphertext {
        Ciphertext {
            value: self.g_pow(m),
            fingerprint: self.fingerprint,
        }
    }

    pub fn zero(&self) -> Ciphertext {
        Ciphertext {
            value: BigUint::one(),
            fingerprint: self.fingerprint,
        }
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check(a)?;
        self.check(b)?;
        Ok(Ciphertext {
            value: &a.value * &b.value % &self.n_squared,
            fingerprint: self.fingerprint,
        })
    }

    pub fn add_assign(&self, acc: &mut Ciphertext, b: &Ciphertext) -> Result<()> {
        self.check(acc)?;
        self.check(b)?;
        acc.value = &acc.value * &b.value % &self.n_squared;
        Ok(())
    }

    /// `E(-m)`, i.e. `E(n - m)`, via the modular inverse of the ciphertext.
    pub fn negate(&self, c: &Ciphertext) -> Result<Ciphertext> {
        self.check(c)?;
        let inv = c
            .value
            .modinv(&self.n_squared)
            .ok_or_else(|| Error::Corruption("ciphertext is not invertible modulo n²".into()))?;
        Ok(Ciphertext {
            value: inv,
            fingerprint: self.fingerprint,
        })
    }

    /// `E(a - b)`. The plaintext wraps modulo `n` when `b > a`; callers
    /// keep every packed field of `a` at least as large as in `b`.
    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let neg = self.negate(b)?;
        self.add(a, &neg)
    }

    pub fn scalar_mul(&self, k: &BigUint, c: &Ciphertext) -> Result<Ciphertext> {
        self.check(c)?;
        Ok(Ciphertext {
            value: c.value.modpow(k, &self.n_squared),
            fingerprint: self.fingerprint,
        })
    }

    /// Multiply the plaintext by `2^bits`.
    pub fn shift_left(&self, c: &Ciphertext, bits: u64) -> Result<Ciphertext> {
        self.scalar_mul(&(BigUint::one() << bits), c)
    }

    /// Re-randomize a ciphertext without changing its plaintext.
    pub fn obfuscate<R: RngCore + CryptoRng>(
        &self,
        c: &Ciphertext,
        rng: &mut R,
    ) -> Result<Ciphertext> {
        self.check(c)?;
        let r = random_unit(&self.n, rng);
        let value = &c.value * r.modpow(&self.n, &self.n_squared) % &self.n_squared;
        Ok(Ciphertext {
            value,
            fingerprint: self.fingerprint,
        })
    }
}

/// Secret key. Keeps `p` and `q` for CRT decryption and fast encryption.
#[derive(Clone)]
pub struct SecretKey {
    public: PublicKey,
    p: BigUint,
    q: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    lambda: BigUint,
    mu: BigUint,
    // CRT helpers
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    q2_inv_p2: BigUint,
    n_mod_phi_p2: BigUint,
    n_mod_phi_q2: BigUint,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("fingerprint", &self.public.fingerprint)
            .finish_non_exhaustive()
    }
}

impl SecretKey {
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self> {
        if p == q {
            return Err(Error::Config("Paillier primes must be distinct".into()));
        }
        let (p, q) = if p > q { (p, q) } else { (q, p) };
        let public = PublicKey::from_modulus(&p * &q)?;
        let one = BigUint::one();
        let p1 = &p - &one;
        let q1 = &q - &one;
        let lambda = p1.lcm(&q1);
        let mu = lambda
            .modinv(public.n())
            .ok_or_else(|| Error::Config("gcd(lambda, n) != 1".into()))?;
        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let g = public.n() + &one;
        let hp = l_function(&g.modpow(&p1, &p_squared), &p)
            .modinv(&p)
            .ok_or_else(|| Error::Config("degenerate prime p".into()))?;
        let hq = l_function(&g.modpow(&q1, &q_squared), &q)
            .modinv(&q)
            .ok_or_else(|| Error::Config("degenerate prime q".into()))?;
        let q_inv_p = q
            .modinv(&p)
            .ok_or_else(|| Error::Config("primes not coprime".into()))?;
        let q2_inv_p2 = q_squared
            .modinv(&p_squared)
            .ok_or_else(|| Error::Config("primes not coprime".into()))?;
        let n_mod_phi_p2 = public.n() % (&p * &p1);
        let n_mod_phi_q2 = public.n() % (&q * &q1);
        Ok(Self {
            public,
            p,
            q,
            p_squared,
            q_squared,
            lambda,
            mu,
            hp,
            hq,
            q_inv_p,
            q2_inv_p2,
            n_mod_phi_p2,
            n_mod_phi_q2,
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn primes(&self) -> (&BigUint, &BigUint) {
        (&self.p, &self.q)
    }

    /// Encryption using the factorization: `r^n mod n²` is assembled from
    /// its residues modulo `p²` and `q²`. Output distribution is identical
    /// to [`PublicKey::encrypt`].
    pub fn encrypt<R: RngCore + CryptoRng>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        let pk = &self.public;
        pk.check_plaintext(m)?;
        let r = random_unit(pk.n(), rng);
        let rp = (&r % &self.p_squared).modpow(&self.n_mod_phi_p2, &self.p_squared);
        let rq = (&r % &self.q_squared).modpow(&self.n_mod_phi_q2, &self.q_squared);
        let rn = crt_combine(&rp, &rq, &self.p_squared, &self.q_squared, &self.q2_inv_p2);
        let value = pk.g_pow(m) * rn % pk.n_squared();
        Ok(Ciphertext {
            value,
            fingerprint: pk.fingerprint,
        })
    }

    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint> {
        self.public.check(c)?;
        let one = BigUint::one();
        let cp = (&c.value % &self.p_squared).modpow(&(&self.p - &one), &self.p_squared);
        let mp = l_function(&cp, &self.p) * &self.hp % &self.p;
        let cq = (&c.value % &self.q_squared).modpow(&(&self.q - &one), &self.q_squared);
        let mq = l_function(&cq, &self.q) * &self.hq % &self.q;
        Ok(crt_combine(&mp, &mq, &self.p, &self.q, &self.q_inv_p))
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
    pub key_bits: u64,
}

impl KeyPair {
    pub fn max_plaintext_bits(&self) -> u64 {
        self.public.max_plaintext_bits()
    }
}

/// Generate a key pair whose modulus has exactly `key_bits` bits.
pub fn keygen<R: RngCore + CryptoRng>(key_bits: u64, rng: &mut R) -> Result<KeyPair> {
    if key_bits < MIN_KEY_BITS || key_bits % 2 != 0 {
        return Err(Error::Config(alloc::format!(
            "key_bits must be an even number >= {MIN_KEY_BITS}, got {key_bits}"
        )));
    }
    let half = key_bits / 2;
    loop {
        let p = generate_prime(half, rng);
        let q = generate_prime(half, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != key_bits {
            continue;
        }
        // gcd(n, (p-1)(q-1)) = 1 holds for equal-size primes; check anyway
        let phi = (&p - 1u32) * (&q - 1u32);
        if !n.gcd(&phi).is_one() {
            continue;
        }
        let secret = SecretKey::from_primes(p, q)?;
        return Ok(KeyPair {
            public: secret.public.clone(),
            secret,
            key_bits,
        });
    }
}

/// Deterministic key generation for tests and reproducible runs.
pub fn keygen_seeded(key_bits: u64, seed: u64) -> Result<KeyPair> {
    keygen(key_bits, &mut ChaCha20Rng::seed_from_u64(seed))
}

#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    fingerprint: Fingerprint,
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bits, key {})", self.value.bits(), self.fingerprint)
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    /// Wire form: `u32` big-endian byte count, the value big-endian, then
    /// the 8-byte key fingerprint.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        let value = self.value.to_bytes_be();
        out.extend_from_slice(&(value.len() as u32).to_be_bytes());
        out.extend_from_slice(&value);
        out.extend_from_slice(&self.fingerprint.0);
    }

    /// Parse one ciphertext from the front of `bytes`, returning the number
    /// of bytes consumed.
    pub fn read_from(bytes: &[u8]) -> Result<(Self, usize)> {
        let short = || Error::Decode("truncated ciphertext".into());
        let len_bytes: [u8; 4] = bytes.get(..4).ok_or_else(short)?.try_into().unwrap();
        let len = u32::from_be_bytes(len_bytes) as usize;
        let value = bytes.get(4..4 + len).ok_or_else(short)?;
        let fp: [u8; 8] = bytes
            .get(4 + len..12 + len)
            .ok_or_else(short)?
            .try_into()
            .unwrap();
        Ok((
            Ciphertext {
                value: BigUint::from_bytes_be(value),
                fingerprint: Fingerprint(fp),
            },
            12 + len,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (c, used) = Self::read_from(bytes)?;
        if used != bytes.len() {
            return Err(Error::Decode("trailing bytes after ciphertext".into()));
        }
        Ok(c)
    }

    /// Check the value lies in `[0, n²)` for the given key.
    pub fn validate(&self, pk: &PublicKey) -> Result<()> {
        pk.check(self)?;
        if &self.value >= pk.n_squared() || self.value.is_zero() {
            return Err(Error::Corruption("ciphertext outside Z*_{n²}".into()));
        }
        Ok(())
    }
}

fn l_function(x: &BigUint, n: &BigUint) -> BigUint {
    (x - 1u32) / n
}

/// `x ≡ a (mod m1)`, `x ≡ b (mod m2)` given `m2^-1 mod m1`.
fn crt_combine(a: &BigUint, b: &BigUint, m1: &BigUint, m2: &BigUint, m2_inv_m1: &BigUint) -> BigUint {
    let b_mod = b % m1;
    let diff = if a >= &b_mod { a - &b_mod } else { a + m1 - &b_mod };
    let h = diff * m2_inv_m1 % m1;
    b + h * m2
}

/// Uniform integer in `[0, bound)`.
pub(crate) fn random_below<R: RngCore>(bound: &BigUint, rng: &mut R) -> BigUint {
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    let excess = (bytes as u64) * 8 - bits;
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xff >> excess;
        let x = BigUint::from_bytes_be(&buf);
        if &x < bound {
            return x;
        }
    }
}

fn random_unit<R: RngCore>(n: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let r = random_below(n, rng);
        if !r.is_zero() && r.gcd(n).is_one() {
            return r;
        }
    }
}

const SMALL_PRIMES: [u32; 24] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

/// Miller-Rabin with `rounds` random bases.
pub fn is_probable_prime<R: RngCore>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    if n.is_even() {
        return n == &two;
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let span = n - 3u32;
    'witness: for _ in 0..rounds {
        let a = random_below(&span, rng) + &two;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random prime with exactly `bits` bits and the top two bits set, so the
/// product of two such primes has exactly `2 * bits` bits.
pub fn generate_prime<R: RngCore>(bits: u64, rng: &mut R) -> BigUint {
    let bound = BigUint::one() << bits;
    let top = BigUint::from(3u32) << (bits - 2);
    loop {
        let mut candidate = random_below(&bound, rng) | &top | BigUint::one();
        // walk forward over odd numbers until the top bits would change
        for _ in 0..512 {
            if candidate.bits() != bits {
                break;
            }
            if is_probable_prime(&candidate, 40, rng) {
                return candidate;
            }
            candidate += 2u32;
        }
    }
}
