//! Amplitude statistics: Marcum Q, detection probability and the
//! truncated Rician / Rayleigh amplitude densities.
//!
//! Amplitudes are normalized so the complex noise has unit total power
//! (variance ½ per quadrature component). A path with normalized amplitude
//! `u` then produces a Rician measured amplitude with density
//! `2z·exp(−(z²+u²))·I₀(2uz)`, and a noise-only cell a Rayleigh amplitude
//! `2z·exp(−z²)`.

use crate::error::{Error, Result};

/// Upper clamp on the detection probability.
pub const PD_MAX: f64 = 0.999;

// Chebyshev coefficients for exp(-x) I0(x) (Cephes i0e).
const I0E_A: [f64; 30] = [
    -4.415_341_646_479_339_379_50E-18,
    3.330_794_518_822_238_097_83E-17,
    -2.431_279_846_547_954_693_59E-16,
    1.715_391_285_555_133_030_61E-15,
    -1.168_533_287_799_345_168_08E-14,
    7.676_185_498_604_935_616_88E-14,
    -4.856_446_783_111_929_460_90E-13,
    2.955_052_663_129_639_834_61E-12,
    -1.726_826_291_441_555_707_23E-11,
    9.675_809_035_373_236_912_24E-11,
    -5.189_795_601_635_262_906_66E-10,
    2.659_823_724_682_386_650_35E-9,
    -1.300_025_009_986_248_042_12E-8,
    6.046_995_022_541_918_949_32E-8,
    -2.670_793_853_940_611_733_91E-7,
    1.117_387_539_120_103_718_15E-6,
    -4.416_738_358_458_750_563_59E-6,
    1.644_844_807_072_889_708_93E-5,
    -5.754_195_010_082_103_703_98E-5,
    1.885_028_850_958_416_557_29E-4,
    -5.763_755_745_385_823_658_85E-4,
    1.639_475_616_941_335_798_42E-3,
    -4.324_309_995_050_575_944_30E-3,
    1.054_646_039_459_499_831_83E-2,
    -2.373_741_480_589_946_881_56E-2,
    4.930_528_423_967_070_848_78E-2,
    -9.490_109_704_804_764_442_10E-2,
    1.716_209_015_222_087_753_49E-1,
    -3.046_826_723_431_983_986_83E-1,
    6.767_952_744_094_760_849_95E-1,
];

const I0E_B: [f64; 25] = [
    -7.233_180_487_874_753_954_56E-18,
    -4.830_504_485_944_182_071_26E-18,
    4.465_621_420_296_759_999_01E-17,
    3.461_222_867_697_461_093_10E-17,
    -2.827_623_980_516_583_484_94E-16,
    -3.425_485_619_677_219_134_62E-16,
    1.772_560_133_056_526_383_60E-15,
    3.811_680_669_352_622_420_75E-15,
    -9.554_846_698_828_307_648_70E-15,
    -4.150_569_347_287_222_086_63E-14,
    1.540_086_217_521_409_826_91E-14,
    3.852_778_382_742_142_701_14E-13,
    7.180_124_451_383_666_233_67E-13,
    -1.794_178_531_506_806_117_78E-12,
    -1.321_581_184_044_771_311_88E-11,
    -3.149_916_527_963_241_364_54E-11,
    1.188_914_710_784_643_834_24E-11,
    4.940_602_388_224_969_589_10E-10,
    3.396_232_025_708_386_345_15E-9,
    2.266_668_990_498_178_064_59E-8,
    2.048_918_589_469_063_741_83E-7,
    2.891_370_520_834_756_482_97E-6,
    6.889_758_346_916_823_984_26E-5,
    3.369_116_478_255_694_089_90E-3,
    8.044_904_110_141_088_316_08E-1,
];

fn chbevl(x: f64, coef: &[f64]) -> f64 {
    let mut b0 = coef[0];
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in &coef[1..] {
        b2 = b1;
        b1 = b0;
        b0 = x * b1 - b2 + c;
    }
    0.5 * (b0 - b2)
}

/// Exponentially scaled modified Bessel function `exp(−|x|)·I₀(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= 8.0 {
        chbevl(x / 2.0 - 2.0, &I0E_A)
    } else {
        chbevl(32.0 / x - 2.0, &I0E_B) / x.sqrt()
    }
}

/// Generalized Marcum Q function of order one,
/// `Q₁(a, b) = ∫_b^∞ t·exp(−(t²+a²)/2)·I₀(at) dt`, for `0 ≤ a, b ≤ 50`.
pub fn marcum_q1(a: f64, b: f64) -> Result<f64> {
    if !(0.0..=50.0).contains(&a) || !(0.0..=50.0).contains(&b) {
        return Err(Error::invalid(format!(
            "marcum_q1 arguments must lie in [0, 50], got ({a}, {b})"
        )));
    }
    Ok(marcum_q1_unchecked(a, b))
}

/// Poisson-mixture series: `Q₁(a,b) = Σ_k P(N_λ = k)·P(N_μ ≤ k)` with
/// `λ = a²/2`, `μ = b²/2`. All terms are probabilities, so the sum is
/// stable; pmfs are advanced in the log domain.
pub(crate) fn marcum_q1_unchecked(a: f64, b: f64) -> f64 {
    let lam = 0.5 * a * a;
    let mu = 0.5 * b * b;
    if mu == 0.0 {
        return 1.0;
    }
    if lam == 0.0 {
        return (-mu).exp();
    }
    let (ln_lam, ln_mu) = (lam.ln(), mu.ln());
    let mut lp_lam = -lam; // ln P(N_λ = k)
    let mut lp_mu = -mu; // ln P(N_μ = k)
    let mut cdf_mu = 0.0;
    let mut sum = 0.0;
    let mut k = 0u32;
    loop {
        cdf_mu += lp_mu.exp();
        let p_lam = lp_lam.exp();
        sum += p_lam * cdf_mu.min(1.0);
        k += 1;
        let kf = k as f64;
        // remaining λ-tail is bounded by a geometric series once past the mode
        if kf > lam + 1.0 && p_lam * kf / (kf - lam) < 1e-18 {
            break;
        }
        if k > 100_000 {
            break;
        }
        lp_lam += ln_lam - kf.ln();
        lp_mu += ln_mu - kf.ln();
    }
    sum.min(1.0)
}

/// Rician detection probability `min(Q₁(√2·u, √2·u_th), PD_MAX)`.
pub fn detection_prob(u: f64, u_th: f64) -> f64 {
    q1_amplitude(u.max(0.0), u_th).min(PD_MAX)
}

// Unclamped P(z ≥ u_th | u).
fn q1_amplitude(u: f64, u_th: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    if u - u_th > 8.0 {
        return 1.0;
    }
    marcum_q1_unchecked(s * u, s * u_th)
}

/// Truncated Rician amplitude density `f(z | u)` on `[u_th, ∞)`.
pub fn amplitude_likelihood(z: f64, u: f64, u_th: f64) -> Result<f64> {
    if z < u_th {
        return Err(Error::invalid(format!(
            "amplitude {z} below detection threshold {u_th}"
        )));
    }
    Ok(log_rice_density(z, u).exp() / q1_amplitude(u.max(0.0), u_th))
}

/// `ln(2z·exp(−(z²+u²))·I₀(2uz))`, evaluated without overflow.
pub fn log_rice_density(z: f64, u: f64) -> f64 {
    let d = z - u;
    (2.0 * z).ln() - d * d + bessel_i0e(2.0 * u * z).ln()
}

/// False-alarm amplitude density: unit-noise Rayleigh truncated to
/// `[u_th, ∞)`, `2z·exp(−(z² − u_th²))`.
pub fn fa_amplitude_density(z: f64, u_th: f64) -> Result<f64> {
    if z < u_th {
        return Err(Error::invalid(format!(
            "amplitude {z} below detection threshold {u_th}"
        )));
    }
    Ok(log_fa_density(z, u_th).exp())
}

pub fn log_fa_density(z: f64, u_th: f64) -> f64 {
    (2.0 * z).ln() - (z * z - u_th * u_th)
}

/// Tabulated `P(z ≥ u_th | u)` for a fixed threshold, linearly
/// interpolated. Used on the particle hot path.
#[derive(Debug, Clone)]
pub struct DetectionTable {
    u_th: f64,
    step: f64,
    q1: Vec<f64>,
    ln_q1: Vec<f64>,
}

impl DetectionTable {
    const STEP: f64 = 1e-3;
    const SPAN: f64 = 8.0;

    pub fn new(u_th: f64) -> Self {
        let n = ((u_th + Self::SPAN) / Self::STEP).ceil() as usize + 2;
        let q1: Vec<f64> = (0..n)
            .map(|i| q1_amplitude(i as f64 * Self::STEP, u_th))
            .collect();
        let ln_q1 = q1.iter().map(|q| q.ln()).collect();
        Self {
            u_th,
            step: Self::STEP,
            q1,
            ln_q1,
        }
    }

    pub fn u_th(&self) -> f64 {
        self.u_th
    }

    fn lookup(&self, table: &[f64], u: f64, beyond: f64) -> f64 {
        let x = u.max(0.0) / self.step;
        let i = x as usize;
        if i + 1 >= table.len() {
            return beyond;
        }
        let f = x - i as f64;
        table[i] + f * (table[i + 1] - table[i])
    }

    /// Unclamped `Q₁(√2·u, √2·u_th)`.
    pub fn q1(&self, u: f64) -> f64 {
        self.lookup(&self.q1, u, 1.0)
    }

    pub fn ln_q1(&self, u: f64) -> f64 {
        self.lookup(&self.ln_q1, u, 0.0)
    }

    /// Clamped detection probability.
    pub fn pd(&self, u: f64) -> f64 {
        self.q1(u).min(PD_MAX)
    }

    /// `ln(p_d(u) · f(z | u))` where `f` is the truncated Rician density.
    pub fn ln_detected_amplitude(&self, z: f64, u: f64) -> f64 {
        let ln_q = self.ln_q1(u);
        let ln_pd = ln_q.min(PD_MAX.ln());
        ln_pd + log_rice_density(z, u) - ln_q
    }
}
