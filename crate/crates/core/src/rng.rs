//! Counter-based random streams.
//!
//! Every random quantity in the crate is a pure function of a [`StreamKey`]
//! and an index. A key is a 64-bit value derived from the master seed by
//! repeatedly mixing in tags (`root(seed).child(epoch).child(position)`),
//! and the `i`-th draw of a stream is
//!
//! ```text
//! mix64(key + (i + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer. This is exactly the SplitMix64
//! sequence started at `key`, so any implementation with 64-bit wrapping
//! arithmetic reproduces the streams. Uniforms take the top 53 bits and are
//! centered in their bucket, so they lie strictly inside (0, 1). Normals use
//! Acklam's rational approximation of the inverse normal CDF.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies an independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix64(seed ^ 0x6D32_6D5F_726F_6F74))
    }

    pub fn child(self, tag: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(tag.wrapping_add(GOLDEN))))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn u64_at(self, index: u64) -> u64 {
        mix64(
            self.0
                .wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)),
        )
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn uniform_at(self, index: u64) -> f64 {
        ((self.u64_at(index) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal_at(self, index: u64) -> f64 {
        inverse_normal_cdf(self.uniform_at(index))
    }

    pub fn stream(self) -> Stream {
        self.stream_at(0)
    }

    /// Sequential reader starting at draw `start`.
    pub fn stream_at(self, start: u64) -> Stream {
        Stream {
            key: self,
            counter: start,
        }
    }
}

/// Sequential reader over a keyed stream.
#[derive(Clone, Debug)]
pub struct Stream {
    key: StreamKey,
    counter: u64,
}

impl Stream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = self.key.u64_at(self.counter);
        self.counter += 1;
        v
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        let v = self.key.uniform_at(self.counter);
        self.counter += 1;
        v
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }

    pub fn position(&self) -> u64 {
        self.counter
    }
}

/// Acklam's inverse of the standard normal CDF (relative error < 1.2e-9).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    debug_assert!(p > 0.0 && p < 1.0);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
