//! Indoor-factory downlink channel model.
//!
//! Large-scale loss follows the 3GPP indoor-factory NLOS model for dense
//! clutter with a low base station, taken as the maximum of the
//! dense-clutter, line-of-sight and sparse-clutter formulas. Shadowing is
//! lognormal and drawn once per user per slot; fast fading is Rayleigh,
//! drawn independently per (user, subchannel) with unit-mean power.
//!
//! All sampling is driven by an explicit seed so a slot's gain matrix is
//! bit-reproducible.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::units::db_to_linear;
use crate::Result;

/// Link-level parameters shared by every user in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub carrier_freq_ghz: f64,
    pub tx_antenna_gain_dbi: f64,
    pub rx_antenna_gain_dbi: f64,
    /// Noise power spectral density in dBm/Hz.
    pub noise_psd_dbm_hz: f64,
    /// Per-subchannel bandwidth B in Hz.
    pub subchannel_bw_hz: f64,
    /// Number of subchannels K.
    pub num_subchannels: usize,
    pub cell_radius_m: f64,
    /// Shadow-fading standard deviation in dB.
    pub shadow_sigma_db: f64,
    /// Extra margin folded into the per-subchannel noise power, modelling
    /// a flat interference floor. Zero by default.
    pub interference_margin_db: f64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if self.carrier_freq_ghz <= 0.0 {
            return Err(Error::domain("carrier_freq_ghz must be > 0"));
        }
        if self.subchannel_bw_hz <= 0.0 {
            return Err(Error::domain("subchannel_bw_hz must be > 0"));
        }
        if self.num_subchannels < 1 {
            return Err(Error::domain("num_subchannels must be >= 1"));
        }
        if !(1.0..=MAX_DISTANCE_M).contains(&self.cell_radius_m) {
            return Err(Error::domain(format!(
                "cell_radius_m must lie in [1, {MAX_DISTANCE_M}] (path-loss model validity)"
            )));
        }
        if self.shadow_sigma_db < 0.0 {
            return Err(Error::domain("shadow_sigma_db must be >= 0"));
        }
        Ok(())
    }

    /// Per-subchannel noise (plus interference margin) power in watts.
    pub fn noise_power_w(&self) -> f64 {
        db_to_linear(self.noise_psd_dbm_hz - 30.0)
            * self.subchannel_bw_hz
            * db_to_linear(self.interference_margin_db)
    }
}

/// Per-slot channel realisation: linear power gains for N users on K
/// subchannels plus the noise power they are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// `gains[[i, j]]` is the linear power gain from the BS to user `i`
    /// on subchannel `j`.
    pub gains: Array2<f64>,
    /// Per-subchannel noise power sigma^2 in watts.
    pub noise_power_w: f64,
    /// Subchannel bandwidth B in Hz.
    pub subchannel_bw_hz: f64,
}

impl ChannelState {
    pub fn num_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn num_subchannels(&self) -> usize {
        self.gains.ncols()
    }
}

/// Test hooks: shadowing and fast fading can be disabled independently,
/// leaving the deterministic distance-dependent loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelOptions {
    pub shadowing: bool,
    pub fast_fading: bool,
}

impl Default for ChannelOptions {
    fn default() -> Self {
        ChannelOptions {
            shadowing: true,
            fast_fading: true,
        }
    }
}

/// Validity range of the indoor-factory path-loss formulas.
pub const MAX_DISTANCE_M: f64 = 100.0;

fn check_distance(d_3d_m: f64, f_c_ghz: f64) -> Result<()> {
    if !(1.0..=MAX_DISTANCE_M).contains(&d_3d_m) {
        return Err(Error::domain(format!(
            "distance {d_3d_m} m outside [1, {MAX_DISTANCE_M}] m"
        )));
    }
    if f_c_ghz <= 0.0 {
        return Err(Error::domain("carrier frequency must be > 0 GHz"));
    }
    Ok(())
}

/// Dense-clutter, low-BS indoor-factory path loss in dB.
pub fn path_loss_inf_dl(d_3d_m: f64, f_c_ghz: f64) -> Result<f64> {
    check_distance(d_3d_m, f_c_ghz)?;
    Ok(18.6 + 35.7 * d_3d_m.log10() + 20.0 * f_c_ghz.log10())
}

/// Indoor-factory line-of-sight path loss in dB.
pub fn path_loss_inf_los(d_3d_m: f64, f_c_ghz: f64) -> Result<f64> {
    check_distance(d_3d_m, f_c_ghz)?;
    Ok(31.84 + 21.5 * d_3d_m.log10() + 19.0 * f_c_ghz.log10())
}

/// Sparse-clutter, low-BS indoor-factory path loss in dB.
pub fn path_loss_inf_sl(d_3d_m: f64, f_c_ghz: f64) -> Result<f64> {
    check_distance(d_3d_m, f_c_ghz)?;
    Ok(33.0 + 25.5 * d_3d_m.log10() + 20.0 * f_c_ghz.log10())
}

/// NLOS path loss: the maximum of the three component models.
pub fn path_loss_nlos(d_3d_m: f64, f_c_ghz: f64) -> Result<f64> {
    let dl = path_loss_inf_dl(d_3d_m, f_c_ghz)?;
    let los = path_loss_inf_los(d_3d_m, f_c_ghz)?;
    let sl = path_loss_inf_sl(d_3d_m, f_c_ghz)?;
    Ok(dl.max(los).max(sl))
}

/// Standard normal via Box-Muller; hand-rolled so the stream stays stable
/// regardless of distribution-crate internals.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Unit-mean exponential (squared Rayleigh envelope) via inverse CDF.
fn unit_exponential<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random(); // [0, 1)
    -(1.0 - u).ln()
}

/// Draws one slot's gain matrix for users at the given distances.
pub fn sample_channel(params: &LinkParams, user_distances: &[f64], rng_seed: u64) -> Result<ChannelState> {
    sample_channel_with(params, user_distances, rng_seed, ChannelOptions::default())
}

/// [`sample_channel`] with the shadowing/fading hooks exposed.
pub fn sample_channel_with(
    params: &LinkParams,
    user_distances: &[f64],
    rng_seed: u64,
    opts: ChannelOptions,
) -> Result<ChannelState> {
    params.validate()?;
    for (i, &d) in user_distances.iter().enumerate() {
        if !(1.0..=params.cell_radius_m).contains(&d) {
            return Err(Error::domain(format!(
                "user {i} distance {d} m outside [1, {} m]",
                params.cell_radius_m
            )));
        }
    }

    let n = user_distances.len();
    let k = params.num_subchannels;
    let mut rng = ChaCha12Rng::seed_from_u64(rng_seed);
    let mut gains = Array2::<f64>::zeros((n, k));
    let gain_offset_db = params.tx_antenna_gain_dbi + params.rx_antenna_gain_dbi;

    for (i, &d) in user_distances.iter().enumerate() {
        let pl_db = path_loss_nlos(d, params.carrier_freq_ghz)?;
        let sf_db = if opts.shadowing {
            params.shadow_sigma_db * standard_normal(&mut rng)
        } else {
            0.0
        };
        let large_scale = db_to_linear(-(pl_db + sf_db - gain_offset_db));
        for j in 0..k {
            let fading = if opts.fast_fading {
                unit_exponential(&mut rng)
            } else {
                1.0
            };
            gains[[i, j]] = large_scale * fading;
        }
    }

    Ok(ChannelState {
        gains,
        noise_power_w: params.noise_power_w(),
        subchannel_bw_hz: params.subchannel_bw_hz,
    })
}
