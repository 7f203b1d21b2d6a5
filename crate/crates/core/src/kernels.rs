//! Dense-layer inner loops shared by inference and training.
//!
//! Each kernel is compiled twice: once for the baseline target and once with
//! AVX2 enabled, picked at runtime. Both versions perform the same IEEE
//! operations in the same order (no fused multiply-add), so results are
//! bitwise identical whichever one runs.

macro_rules! dispatch {
    ($(#[$m:meta])* $vis:vis fn $name:ident => $kernel:ident ($($arg:ident : $ty:ty),* $(,)?)) => {
        $(#[$m])*
        $vis fn $name($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            {
                if std::arch::is_x86_feature_detected!("avx2") {
                    #[target_feature(enable = "avx2")]
                    unsafe fn wide($($arg: $ty),*) {
                        $kernel($($arg),*)
                    }
                    // SAFETY: the CPU supports AVX2, checked above.
                    return unsafe { wide($($arg),*) };
                }
            }
            $kernel($($arg),*)
        }
    };
}

/// `exp(r)` for `r` in `[-41, 0]`: round-to-nearest range reduction by ln 2
/// and a degree-12 Taylor polynomial on `|f| <= ln2 / 2`.
#[inline(always)]
fn exp_nonpositive(r: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    const INV_LN2: f64 = std::f64::consts::LOG2_E;
    // 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    let t = r * INV_LN2 + SHIFT;
    let kf = t - SHIFT;
    let f = (r - kf * LN2_HI) - kf * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * f + 1.0 / 39_916_800.0;
    p = p * f + 1.0 / 3_628_800.0;
    p = p * f + 1.0 / 362_880.0;
    p = p * f + 1.0 / 40_320.0;
    p = p * f + 1.0 / 5_040.0;
    p = p * f + 1.0 / 720.0;
    p = p * f + 1.0 / 120.0;
    p = p * f + 1.0 / 24.0;
    p = p * f + 1.0 / 6.0;
    p = p * f + 0.5;
    p = p * f + 1.0;
    p = p * f + 1.0;
    let k = t.to_bits().wrapping_sub(SHIFT.to_bits());
    let scale = f64::from_bits(k.wrapping_add(1023) << 52);
    p * scale
}

/// Hidden-layer activation. Agrees with `f64::tanh` to within 1e-15.
#[inline(always)]
pub fn act_tanh(x: f64) -> f64 {
    let a = x.abs().min(20.0);
    let e = exp_nonpositive(-2.0 * a);
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

#[inline(always)]
fn tanh_kernel(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = act_tanh(*x);
    }
}

/// `out[b] = W x[b] + bias` for each row `b`, with `wt` the transposed
/// (`fan_in x fan_out`) weights.
#[inline(always)]
fn affine_kernel(fan_in: usize, fan_out: usize, wt: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    for (xb, ob) in x.chunks_exact(fan_in).zip(out.chunks_exact_mut(fan_out)) {
        ob.copy_from_slice(bias);
        for (i, &xi) in xb.iter().enumerate() {
            let row = &wt[i * fan_out..(i + 1) * fan_out];
            for (o, &w) in ob.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

/// Weight and bias gradients of one layer: `gw += delta^T a_in`, `gb += sum delta`.
#[inline(always)]
fn grad_kernel(
    fan_in: usize,
    fan_out: usize,
    delta: &[f64],
    a_in: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
) {
    for (db, xb) in delta.chunks_exact(fan_out).zip(a_in.chunks_exact(fan_in)) {
        for (o, &dz) in db.iter().enumerate() {
            gb[o] += dz;
            for (g, &x) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(xb) {
                *g += dz * x;
            }
        }
    }
}

/// Error at the previous layer's tanh outputs: `prev = (delta W) * (1 - a^2)`.
#[inline(always)]
fn backprop_kernel(
    fan_in: usize,
    fan_out: usize,
    delta: &[f64],
    w: &[f64],
    a_in: &[f64],
    prev: &mut [f64],
) {
    for ((db, pb), ab) in delta
        .chunks_exact(fan_out)
        .zip(prev.chunks_exact_mut(fan_in))
        .zip(a_in.chunks_exact(fan_in))
    {
        pb.fill(0.0);
        for (o, &dz) in db.iter().enumerate() {
            for (p, &wv) in pb.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                *p += dz * wv;
            }
        }
        for (p, &a) in pb.iter_mut().zip(ab) {
            *p *= 1.0 - a * a;
        }
    }
}

dispatch!(pub(crate) fn tanh_in_place => tanh_kernel(v: &mut [f64]));
dispatch!(pub(crate) fn affine => affine_kernel(
    fan_in: usize,
    fan_out: usize,
    wt: &[f64],
    bias: &[f64],
    x: &[f64],
    out: &mut [f64],
));
dispatch!(pub(crate) fn accumulate_grads => grad_kernel(
    fan_in: usize,
    fan_out: usize,
    delta: &[f64],
    a_in: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
));
dispatch!(pub(crate) fn backprop => backprop_kernel(
    fan_in: usize,
    fan_out: usize,
    delta: &[f64],
    w: &[f64],
    a_in: &[f64],
    prev: &mut [f64],
));
