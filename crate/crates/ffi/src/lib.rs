//! C interface to the `pmm` simulator.
//!
//! Every function returns a [`PmmStatus`]. On failure the message is kept in
//! thread-local storage and can be copied out with [`pmm_last_error_message`].
//! Channels are passed around as opaque [`PmmChannel`] handles that the
//! caller releases with [`pmm_channel_free`].

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use num_complex::Complex64;
use pmm::channel::draw_channel;
use pmm::codec::{self, usable_permutations};
use pmm::detect::{complexity_row, Detector};
use pmm::gmm::uniform_weights;
use pmm::harness::{derive_stream, run_ser, PowerPreset, SnrGrid, SweepSpec};
use pmm::linalg::{CMatrix, CVector};
use pmm::optpower::{optimize_power, OptimizerConfig};
use pmm::rate;
use pmm::{ChannelRealization, Constellation, Error, PowerAllocation};

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidPermutation = 3,
    InvalidPower = 4,
    OutOfRange = 5,
    DimensionMismatch = 6,
    NotPositiveDefinite = 7,
    SingularChannel = 8,
    SearchSpaceTooLarge = 9,
    Overflow = 10,
    NotConverged = 11,
    BufferTooSmall = 12,
    Unsupported = 13,
    Io = 14,
    Panic = 15,
}

impl From<&Error> for PmmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidPermutation(_) => PmmStatus::InvalidPermutation,
            Error::InvalidPower(_) => PmmStatus::InvalidPower,
            Error::InvalidArgument(_) => PmmStatus::InvalidArgument,
            Error::OutOfRange { .. } => PmmStatus::OutOfRange,
            Error::DimensionMismatch { .. } => PmmStatus::DimensionMismatch,
            Error::NotPositiveDefinite => PmmStatus::NotPositiveDefinite,
            Error::MissingSvd(_) | Error::Unsupported(_) => PmmStatus::Unsupported,
            Error::SingularChannel => PmmStatus::SingularChannel,
            Error::SearchSpaceTooLarge { .. } => PmmStatus::SearchSpaceTooLarge,
            Error::Overflow => PmmStatus::Overflow,
            Error::NotConverged { .. } => PmmStatus::NotConverged,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => PmmStatus::Io,
        }
    }
}

/// Rate schemes understood by [`pmm_rate`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmmScheme {
    Pmm = 0,
    PmmCapacity = 1,
    Sm = 2,
    Gsm = 3,
    VblastCapacity = 4,
    /// PMM on the SVD-precoded link, with the best merge.
    PmmCsit = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmmDetector {
    Ml = 0,
    Zf = 1,
}

fn detector(code: u32) -> Result<Detector, PmmStatus> {
    match code {
        c if c == PmmDetector::Ml as u32 => Ok(Detector::Ml),
        c if c == PmmDetector::Zf as u32 => Ok(Detector::Zf),
        other => Err(fail(
            PmmStatus::InvalidArgument,
            format!("unknown detector {other}"),
        )),
    }
}

fn scheme(code: u32) -> Result<PmmScheme, PmmStatus> {
    use PmmScheme::*;
    [Pmm, PmmCapacity, Sm, Gsm, VblastCapacity, PmmCsit]
        .into_iter()
        .find(|s| *s as u32 == code)
        .ok_or_else(|| fail(PmmStatus::InvalidArgument, format!("unknown scheme {code}")))
}

/// Opaque channel realization.
pub struct PmmChannel {
    inner: ChannelRealization,
}

/// How a frame of bits divides between symbols and the permutation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PmmBitSplit {
    pub symbol_bits: u32,
    pub permutation_bits: u32,
    pub usable_permutations: u64,
}

/// Flop counts for one configuration.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PmmFlops {
    pub ml: u64,
    pub zf: u64,
    /// Zero when the receive and transmit counts differ.
    pub zf_direct: u64,
    pub ratio: f64,
}

/// Symbol-error-rate sweep over an SNR grid.
///
/// `power_fractions` may be null, in which case `power` selects a preset:
/// 0 for the tabulated allocation, 1 for the sparser 4-antenna one.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PmmSerConfig {
    pub tx: u32,
    pub rx: u32,
    pub mod_order: u32,
    /// A [`PmmDetector`] value.
    pub detector: u32,
    pub power: u32,
    pub power_fractions: *const f64,
    pub snr_start_db: f64,
    pub snr_stop_db: f64,
    pub snr_step_db: f64,
    pub bits_per_point: u64,
    pub master_seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PmmSerPoint {
    pub snr_db: f64,
    pub symbol_errors: u64,
    pub symbols_sent: u64,
    pub ser: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

/// Detected permutation index, and the decoded frame as a bit word with
/// symbol bits first, most significant bit first.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PmmDetection {
    pub permutation_index: u64,
    pub bit_word: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn fail(status: PmmStatus, message: impl Into<String>) -> PmmStatus {
    set_error(message.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), PmmStatus>) -> PmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            PmmStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(PmmStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, PmmStatus>;
}

impl<T> OrStatus<T> for pmm::Result<T> {
    fn or_status(self) -> Result<T, PmmStatus> {
        self.map_err(|e| fail(PmmStatus::from(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), PmmStatus> {
    if p.is_null() {
        Err(fail(PmmStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], PmmStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable values.
unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], PmmStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or point to a writable `T`.
unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), PmmStatus> {
    non_null(p, what)?;
    p.write(value);
    Ok(())
}

/// # Safety
/// `ch` must be null or a handle from this library that has not been freed.
unsafe fn channel<'a>(ch: *const PmmChannel) -> Result<&'a ChannelRealization, PmmStatus> {
    non_null(ch, "channel")?;
    Ok(&(*ch).inner)
}

fn to_u64(v: u128) -> Result<u64, PmmStatus> {
    u64::try_from(v).map_err(|_| fail(PmmStatus::Overflow, "flop count does not fit in 64 bits"))
}

/// Copies the last error message of the calling thread into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pmm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pmm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `out` must point to a writable [`PmmBitSplit`].
#[no_mangle]
pub unsafe extern "C" fn pmm_split_bits(n: u32, q: u32, out: *mut PmmBitSplit) -> PmmStatus {
    guard(|| {
        let s = codec::split_bits(n as usize, q as usize).or_status()?;
        write(
            out,
            PmmBitSplit {
                symbol_bits: s.symbol_bits,
                permutation_bits: s.permutation_bits,
                usable_permutations: s.usable_permutations,
            },
            "out",
        )
    })
}

/// Writes the permutation addressed by `word` into `map[0..n]`, where row
/// `k` of the permutation matrix has its one in column `map[k]`.
///
/// # Safety
/// `map` must point to `n` writable values.
#[no_mangle]
pub unsafe extern "C" fn pmm_bits_to_permutation(word: u64, n: u32, map: *mut u32) -> PmmStatus {
    guard(|| {
        let p = codec::bits_to_permutation(word, n as usize).or_status()?;
        let out = output(map, n as usize, "map")?;
        for (o, &v) in out.iter_mut().zip(p.as_slice()) {
            *o = v as u32;
        }
        Ok(())
    })
}

/// Inverse of [`pmm_bits_to_permutation`].
///
/// # Safety
/// `map` must point to `n` readable values and `word` to a writable `u64`.
#[no_mangle]
pub unsafe extern "C" fn pmm_permutation_to_bits(
    map: *const u32,
    n: u32,
    word: *mut u64,
) -> PmmStatus {
    guard(|| {
        let m = input(map, n as usize, "map")?;
        let p = pmm::Permutation::new(m.iter().map(|&v| v as usize).collect()).or_status()?;
        write(word, codec::permutation_to_bits(&p).or_status()?, "word")
    })
}

/// Builds a channel from row-major real and imaginary parts of an `m × n`
/// matrix.
///
/// # Safety
/// `re` and `im` must point to `m·n` readable values and `out` to a
/// writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn pmm_channel_new(
    m: u32,
    n: u32,
    re: *const f64,
    im: *const f64,
    out: *mut *mut PmmChannel,
) -> PmmStatus {
    guard(|| {
        if m == 0 || n == 0 {
            return Err(fail(
                PmmStatus::InvalidArgument,
                "channel dimensions must be positive",
            ));
        }
        let len = (m as usize) * (n as usize);
        let re = input(re, len, "re")?;
        let im = input(im, len, "im")?;
        let h = CMatrix::from_row_iterator(
            m as usize,
            n as usize,
            re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)),
        );
        let handle = Box::into_raw(Box::new(PmmChannel {
            inner: ChannelRealization::new(h),
        }));
        write(out, handle, "out").inspect_err(|_| drop(Box::from_raw(handle)))
    })
}

/// Draws a Rayleigh channel from the stream addressed by
/// `(seed, point, trial)`, the same stream the simulator uses.
///
/// # Safety
/// `out` must point to a writable handle pointer.
#[no_mangle]
pub unsafe extern "C" fn pmm_channel_draw(
    m: u32,
    n: u32,
    seed: u64,
    point: u64,
    trial: u64,
    out: *mut *mut PmmChannel,
) -> PmmStatus {
    guard(|| {
        if m == 0 || n == 0 {
            return Err(fail(
                PmmStatus::InvalidArgument,
                "channel dimensions must be positive",
            ));
        }
        non_null(out, "out")?;
        let inner = draw_channel(
            m as usize,
            n as usize,
            &mut derive_stream(seed, point, trial),
        );
        out.write(Box::into_raw(Box::new(PmmChannel { inner })));
        Ok(())
    })
}

/// Copies the channel matrix out in row-major order.
///
/// # Safety
/// `ch` must be a live handle; `re` and `im` must point to `rx·tx` writable
/// values.
#[no_mangle]
pub unsafe extern "C" fn pmm_channel_matrix(
    ch: *const PmmChannel,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> PmmStatus {
    guard(|| {
        let h = channel(ch)?.matrix();
        if len < h.len() {
            return Err(fail(
                PmmStatus::BufferTooSmall,
                format!("need {} entries", h.len()),
            ));
        }
        let re = output(re, h.len(), "re")?;
        let im = output(im, h.len(), "im")?;
        let cols = h.ncols();
        for i in 0..h.nrows() {
            for j in 0..cols {
                re[i * cols + j] = h[(i, j)].re;
                im[i * cols + j] = h[(i, j)].im;
            }
        }
        Ok(())
    })
}

/// Writes the receive and transmit antenna counts.
///
/// # Safety
/// `ch` must be a live handle; `rx` and `tx` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmm_channel_dims(
    ch: *const PmmChannel,
    rx: *mut u32,
    tx: *mut u32,
) -> PmmStatus {
    guard(|| {
        let c = channel(ch)?;
        write(rx, c.rx() as u32, "rx")?;
        write(tx, c.tx() as u32, "tx")
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `ch` must be null or a live handle, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pmm_channel_free(ch: *mut PmmChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Rate in bits per channel use, with equiprobable components. `scheme` is
/// a [`PmmScheme`] value.
///
/// `gamma` holds one power per transmit antenna; its sum is the total power
/// used by the baselines. `gsm_active` of zero means half the antennas.
///
/// # Safety
/// `ch` must be a live handle, `gamma` must point to `n` readable values and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmm_rate(
    ch: *const PmmChannel,
    scheme: u32,
    gamma: *const f64,
    n: u32,
    gsm_active: u32,
    out: *mut f64,
) -> PmmStatus {
    guard(|| {
        let c = channel(ch)?;
        let g = input(gamma, n as usize, "gamma")?;
        let rho: f64 = g.iter().sum();
        let pa = || PowerAllocation::new(g.to_vec(), rho).or_status();
        let perms = || usable_permutations(n as usize).or_status();
        let value = match self::scheme(scheme)? {
            PmmScheme::Pmm => {
                let set = perms()?;
                rate::pmm_rate(c, &set, &pa()?, &uniform_weights(set.len()))
            }
            PmmScheme::PmmCsit => {
                let set = perms()?;
                pa()?;
                rate::csit_refined(c, &set, g, &uniform_weights(set.len())).map(|(r, _)| r)
            }
            PmmScheme::PmmCapacity => rate::capacity(c, &pa()?),
            PmmScheme::Sm => {
                let t = rate::sm_covariances(n as usize, rho).len();
                rate::sm_rate(c, rho, &uniform_weights(t))
            }
            PmmScheme::Gsm => {
                let active = if gsm_active == 0 {
                    (n as usize / 2).max(1)
                } else {
                    gsm_active as usize
                };
                let v = rate::gsm_covariances(n as usize, active, rho)
                    .or_status()?
                    .len();
                rate::gsm_rate(c, rho, active, &uniform_weights(v))
            }
            PmmScheme::VblastCapacity => rate::vblast_capacity(c, rho),
        }
        .or_status()?;
        write(out, value, "out")
    })
}

/// Detects one received vector with a [`PmmDetector`]. `symbols` receives `n` constellation
/// indices in natural (not Gray) order.
///
/// # Safety
/// `ch` must be a live handle; `gamma` must point to `n` values; `y_re` and
/// `y_im` to `rx` values; `symbols` to `n` writable values; `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn pmm_detect(
    ch: *const PmmChannel,
    detector: u32,
    gamma: *const f64,
    n: u32,
    mod_order: u32,
    y_re: *const f64,
    y_im: *const f64,
    symbols: *mut u32,
    out: *mut PmmDetection,
) -> PmmStatus {
    guard(|| {
        let c = channel(ch)?;
        let g = input(gamma, n as usize, "gamma")?;
        let pa = PowerAllocation::new(g.to_vec(), g.iter().sum()).or_status()?;
        let set = usable_permutations(n as usize).or_status()?;
        let con = Constellation::psk(mod_order as usize).or_status()?;
        let re = input(y_re, c.rx(), "y_re")?;
        let im = input(y_im, c.rx(), "y_im")?;
        let y = CVector::from_iterator(
            c.rx(),
            re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)),
        );
        let det = self::detector(detector)?
            .detect(&y, c, &set, &pa, &con)
            .or_status()?;
        let sym = output(symbols, n as usize, "symbols")?;
        for (o, &s) in sym.iter_mut().zip(&det.symbol_indices) {
            *o = s as u32;
        }
        let word = codec::bits_to_word(&det.bits);
        write(
            out,
            PmmDetection {
                permutation_index: det.permutation_index as u64,
                bit_word: word,
            },
            "out",
        )
    })
}

/// Flop counts for ML and ZF detection. Fails with `Overflow` when a count
/// exceeds 64 bits.
///
/// # Safety
/// `out` must point to a writable [`PmmFlops`].
#[no_mangle]
pub unsafe extern "C" fn pmm_flops(n: u32, m: u32, q: u32, out: *mut PmmFlops) -> PmmStatus {
    guard(|| {
        let row = complexity_row(n, m, q).or_status()?;
        let flops = PmmFlops {
            ml: to_u64(row.ml_flops)?,
            zf: to_u64(row.zf_flops)?,
            zf_direct: row.zf_flops_direct.map(to_u64).transpose()?.unwrap_or(0),
            ratio: row.ratio,
        };
        write(out, flops, "out")
    })
}

/// Runs a symbol-error-rate sweep. `written` receives the number of SNR
/// points; if `capacity` is smaller, nothing is written to `points` and the
/// call fails with `BufferTooSmall`.
///
/// # Safety
/// `config` must be readable (and its `power_fractions` null or `tx`
/// values long); `points` must point to `capacity` writable entries and
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmm_run_ser(
    config: *const PmmSerConfig,
    points: *mut PmmSerPoint,
    capacity: usize,
    written: *mut usize,
) -> PmmStatus {
    guard(|| {
        non_null(config, "config")?;
        let cfg = &*config;
        let mut spec = SweepSpec::new(cfg.tx as usize, cfg.rx as usize);
        spec.mod_order = cfg.mod_order as usize;
        spec.detector = detector(cfg.detector)?;
        spec.power = if cfg.power_fractions.is_null() {
            match cfg.power {
                0 => PowerPreset::Table2,
                1 => PowerPreset::Pa2,
                other => {
                    return Err(fail(
                        PmmStatus::InvalidArgument,
                        format!("unknown power preset {other}"),
                    ))
                }
            }
        } else {
            PowerPreset::File {
                path: String::new(),
                fractions: input(cfg.power_fractions, cfg.tx as usize, "power_fractions")?.to_vec(),
            }
        };
        spec.snr = SnrGrid::new(cfg.snr_start_db, cfg.snr_stop_db, cfg.snr_step_db).or_status()?;
        spec.bits_per_point = cfg.bits_per_point;
        spec.master_seed = cfg.master_seed;
        let count = spec.snr.points().len();
        write(written, count, "written")?;
        if capacity < count {
            return Err(fail(
                PmmStatus::BufferTooSmall,
                format!("need {count} points"),
            ));
        }
        let result = run_ser(&spec).or_status()?;
        let out = output(points, count, "points")?;
        for (o, p) in out.iter_mut().zip(result) {
            *o = PmmSerPoint {
                snr_db: p.snr_db,
                symbol_errors: p.symbol_errors,
                symbols_sent: p.symbols_sent,
                ser: p.ser,
                wilson_low: p.wilson_low,
                wilson_high: p.wilson_high,
            };
        }
        Ok(())
    })
}

/// Optimizes the power split on the SVD-precoded link of a square channel,
/// starting from the tabulated allocation at total power `rho`.
///
/// # Safety
/// `ch` must be a live handle; `gamma` must point to `n` writable values;
/// `rate` and `kkt_residual` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pmm_optimize_power(
    ch: *const PmmChannel,
    rho: f64,
    gamma: *mut f64,
    n: u32,
    rate: *mut f64,
    kkt_residual: *mut f64,
) -> PmmStatus {
    guard(|| {
        let c = channel(ch)?;
        if c.tx() != n as usize {
            return Err(fail(
                PmmStatus::DimensionMismatch,
                format!("channel has {} transmit antennas, buffer holds {n}", c.tx()),
            ));
        }
        let set = usable_permutations(n as usize).or_status()?;
        let res = optimize_power(
            c,
            &set,
            &uniform_weights(set.len()),
            rho,
            &OptimizerConfig::default(),
        )
        .or_status()?;
        output(gamma, n as usize, "gamma")?.copy_from_slice(&res.gamma);
        write(rate, res.rate, "rate")?;
        write(kkt_residual, res.kkt_residual, "kkt_residual")
    })
}
