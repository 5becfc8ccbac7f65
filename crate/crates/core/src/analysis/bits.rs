//! Packed output bit streams and their exact balance / flip-hold counts.

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Anything that consumes emitted bits one at a time.
pub trait BitSink {
    fn push_bit(&mut self, bit: bool);
}

/// Bits packed LSB-first into bytes; `bit_count` is exact and pad bits in
/// the last byte are kept at zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitStream {
    bytes: Vec<u8>,
    bit_count: u64,
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: u64) -> Self {
        BitStream {
            bytes: Vec::with_capacity(bits.div_ceil(8) as usize),
            bit_count: 0,
        }
    }

    /// Wraps packed bytes. Pad bits beyond `bit_count` are cleared.
    pub fn from_bytes(mut bytes: Vec<u8>, bit_count: u64) -> Result<Self> {
        let needed = bit_count.div_ceil(8);
        if needed > bytes.len() as u64 {
            return Err(Error::domain(format!(
                "bit count {bit_count} needs {needed} bytes, only {} given",
                bytes.len()
            )));
        }
        bytes.truncate(needed as usize);
        let rem = bit_count % 8;
        if rem != 0 {
            if let Some(last) = bytes.last_mut() {
                *last &= (1u8 << rem) - 1;
            }
        }
        Ok(BitStream { bytes, bit_count })
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = BitStream::new();
        for b in bits {
            s.push(b);
        }
        s
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        let pos = (self.bit_count % 8) as u32;
        if pos == 0 {
            self.bytes.push(0);
        }
        if bit {
            // Just pushed or already present.
            *self.bytes.last_mut().unwrap() |= 1 << pos;
        }
        self.bit_count += 1;
    }

    pub fn len(&self) -> u64 {
        self.bit_count
    }

    pub fn is_empty(&self) -> bool {
        self.bit_count == 0
    }

    pub fn get(&self, i: u64) -> Option<bool> {
        (i < self.bit_count).then(|| self.bytes[(i / 8) as usize] >> (i % 8) & 1 == 1)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.bit_count).map(move |i| self.bytes[(i / 8) as usize] >> (i % 8) & 1 == 1)
    }
}

impl BitSink for BitStream {
    #[inline]
    fn push_bit(&mut self, bit: bool) {
        self.push(bit);
    }
}

/// Partial counts over a contiguous run of bits.
///
/// Tallies of adjacent runs merge associatively, counting the pair that
/// straddles the boundary; this is what makes chunked evaluation exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BitTally {
    pub bits: u64,
    pub ones: u64,
    /// Adjacent pairs with differing bits.
    pub flips: u64,
    pub first: bool,
    pub last: bool,
}

impl BitTally {
    pub fn merge(self, next: BitTally) -> BitTally {
        if self.bits == 0 {
            return next;
        }
        if next.bits == 0 {
            return self;
        }
        BitTally {
            bits: self.bits + next.bits,
            ones: self.ones + next.ones,
            flips: self.flips + next.flips + u64::from(self.last != next.first),
            first: self.first,
            last: next.last,
        }
    }

    /// Tally of the low `n` bits (1..=64) of `w`, LSB first.
    #[inline]
    fn of_word(w: u64, n: u32) -> BitTally {
        debug_assert!((1..=64).contains(&n));
        let w = if n == 64 { w } else { w & ((1u64 << n) - 1) };
        let pair_mask = if n == 64 { u64::MAX >> 1 } else { (1u64 << (n - 1)) - 1 };
        BitTally {
            bits: u64::from(n),
            ones: u64::from(w.count_ones()),
            flips: u64::from(((w ^ (w >> 1)) & pair_mask).count_ones()),
            first: w & 1 == 1,
            last: (w >> (n - 1)) & 1 == 1,
        }
    }

    /// Tally of the first `nbits` bits of LSB-first packed `bytes`.
    pub fn of_bytes(bytes: &[u8], nbits: u64) -> BitTally {
        let mut acc = BitTally::default();
        let mut remaining = nbits;
        let mut chunks = bytes.chunks_exact(8);
        for c in &mut chunks {
            if remaining == 0 {
                return acc;
            }
            let w = u64::from_le_bytes(c.try_into().unwrap());
            let n = remaining.min(64) as u32;
            acc = acc.merge(BitTally::of_word(w, n));
            remaining -= u64::from(n);
        }
        if remaining > 0 {
            let rest = chunks.remainder();
            let mut buf = [0u8; 8];
            buf[..rest.len()].copy_from_slice(rest);
            let n = remaining.min(rest.len() as u64 * 8) as u32;
            if n > 0 {
                acc = acc.merge(BitTally::of_word(u64::from_le_bytes(buf), n));
            }
        }
        acc
    }
}

impl BitSink for BitTally {
    #[inline]
    fn push_bit(&mut self, bit: bool) {
        if self.bits == 0 {
            self.first = bit;
        } else {
            self.flips += u64::from(self.last != bit);
        }
        self.bits += 1;
        self.ones += u64::from(bit);
        self.last = bit;
    }
}

/// Balance and flip/hold statistics of an output stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamStats {
    pub n0: u64,
    pub n1: u64,
    /// Adjacent equal pairs.
    pub n_hold: u64,
    /// Adjacent differing pairs.
    pub n_flip: u64,
    /// `(n1 - n0) / (n1 + n0)`.
    pub rel_dev_balance: f64,
    /// `(n_flip - n_hold) / (n_flip + n_hold)`.
    pub rel_dev_flip: f64,
    /// Standard deviation of a relative deviation for a fair source,
    /// `N^(-1/2)`.
    pub sigma: f64,
    pub balance_sigmas: f64,
    pub flip_sigmas: f64,
}

impl StreamStats {
    /// Builds statistics from raw counts, checking `n_hold + n_flip = N - 1`.
    pub fn from_counts(n0: u64, n1: u64, n_hold: u64, n_flip: u64) -> Result<Self> {
        let n = n0 + n1;
        if n < 2 {
            return Err(Error::domain("need at least two bits"));
        }
        if n_hold + n_flip != n - 1 {
            return Err(Error::domain(format!(
                "pair counts {n_hold} + {n_flip} do not add up to N - 1 = {}",
                n - 1
            )));
        }
        let rel_dev_balance = (n1 as f64 - n0 as f64) / n as f64;
        let rel_dev_flip = (n_flip as f64 - n_hold as f64) / (n - 1) as f64;
        let sigma = sigma_threshold(n)?;
        Ok(StreamStats {
            n0,
            n1,
            n_hold,
            n_flip,
            rel_dev_balance,
            rel_dev_flip,
            sigma,
            balance_sigmas: rel_dev_balance / sigma,
            flip_sigmas: rel_dev_flip / sigma,
        })
    }

    pub fn from_tally(t: &BitTally) -> Result<Self> {
        if t.bits < 2 {
            return Err(Error::domain("need at least two bits"));
        }
        Self::from_counts(t.bits - t.ones, t.ones, t.bits - 1 - t.flips, t.flips)
    }

    pub fn bit_count(&self) -> u64 {
        self.n0 + self.n1
    }
}

/// `N^(-1/2)`.
pub fn sigma_threshold(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("N must be positive"));
    }
    Ok(1.0 / (n as f64).sqrt())
}

/// Default chunk size for parallel counting, bytes.
pub const DEFAULT_CHUNK_BYTES: usize = 1 << 20;

/// Exact statistics of `stream`, counted in parallel chunks.
pub fn bit_stats(stream: &BitStream) -> Result<StreamStats> {
    StreamStats::from_tally(&tally(stream, Execution::Parallel, DEFAULT_CHUNK_BYTES))
}

/// Tally of `stream` in chunks of `chunk_bytes` (rounded up to whole
/// 64-bit words) merged in order.
pub fn tally(stream: &BitStream, exec: Execution, chunk_bytes: usize) -> BitTally {
    let chunk_bytes = chunk_bytes.max(8).next_multiple_of(8);
    let bytes = stream.as_bytes();
    let nchunks = bytes.len().div_ceil(chunk_bytes);
    let nbits = stream.len();
    par::map_reduce(
        exec,
        nchunks,
        |i| {
            let start = i * chunk_bytes;
            let end = (start + chunk_bytes).min(bytes.len());
            let avail = nbits.saturating_sub(start as u64 * 8);
            BitTally::of_bytes(&bytes[start..end], avail.min((end - start) as u64 * 8))
        },
        BitTally::default,
        BitTally::merge,
    )
}
