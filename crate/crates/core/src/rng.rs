//! Counter-based Philox4x32-10 generator.
//!
//! Every draw is a pure function of `(key, counter)`, so any path at any step
//! can be regenerated without touching the others.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

#[inline]
fn round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (hi0, lo0) = mulhilo(M0, ctr[0]);
    let (hi1, lo1) = mulhilo(M1, ctr[2]);
    [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0]
}

/// Philox4x32 with ten rounds.
#[inline]
pub fn philox4x32(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for r in 0..10 {
        if r > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        ctr = round(ctr, key);
    }
    ctr
}

/// Key derived from a 64-bit seed.
#[inline]
pub fn seed_key(seed: u64) -> [u32; 2] {
    [seed as u32, (seed >> 32) as u32]
}

/// Maps 64 random bits to a uniform in `(0, 1]`.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Two independent standard normals from one Philox block (Box–Muller).
#[inline]
pub fn normal_pair(ctr: [u32; 4], key: [u32; 2]) -> (f64, f64) {
    let r = philox4x32(ctr, key);
    let u1 = open_unit(((r[0] as u64) << 32) | r[1] as u64);
    let u2 = open_unit(((r[2] as u64) << 32) | r[3] as u64);
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

/// Uniform in `(0, 1]` from the first half of a Philox block.
#[inline]
pub fn uniform(ctr: [u32; 4], key: [u32; 2]) -> f64 {
    let r = philox4x32(ctr, key);
    open_unit(((r[0] as u64) << 32) | r[1] as u64)
}

/// Sequential stream on top of Philox, for sampling tasks that are not
/// indexed by (path, step).
#[derive(Debug, Clone)]
pub struct Stream {
    key: [u32; 2],
    tag: u32,
    counter: u64,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64, tag: u32) -> Self {
        Stream { key: seed_key(seed), tag, counter: 0, spare: None }
    }

    fn next_ctr(&mut self) -> [u32; 4] {
        let c = self.counter;
        self.counter += 1;
        [c as u32, (c >> 32) as u32, self.tag, 0x5354_524D]
    }

    pub fn uniform(&mut self) -> f64 {
        let ctr = self.next_ctr();
        uniform(ctr, self.key)
    }

    /// Uniform on `[lo, hi]`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let ctr = self.next_ctr();
        let (a, b) = normal_pair(ctr, self.key);
        self.spare = Some(b);
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors from the Random123 distribution.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn stream_moments() {
        let mut s = Stream::new(7, 1);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            m1 += z;
            m2 += z * z;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 5.0 / (n as f64).sqrt());
        assert!((m2 - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
        let u = s.uniform();
        assert!(u > 0.0 && u <= 1.0);
    }
}
