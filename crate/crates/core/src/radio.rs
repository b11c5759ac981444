//! First-order radio energy model.
//!
//! Transmitting `k` bits over distance `d` costs the electronics energy
//! `k * e_elec` plus an amplifier term that is free-space (`eps_fs * d^2`)
//! below the crossover distance `d0` and multipath (`eps_mp * d^4`) at or
//! above it. Receiving costs the electronics energy only. All values are
//! joules, bits and meters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_E_ELEC: f64 = 50e-9;
pub const DEFAULT_EPS_FS: f64 = 10e-12;
pub const DEFAULT_EPS_MP: f64 = 0.0013e-12;
pub const DEFAULT_E_DA: f64 = 5e-9;
pub const DEFAULT_PACKET_BITS: u64 = 2000;

/// Radio coefficients. `d0` is derived from the amplifier coefficients and
/// cannot be set independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRadioParams", into = "RawRadioParams")]
pub struct RadioParams {
    e_elec: f64,
    eps_fs: f64,
    eps_mp: f64,
    e_da: f64,
    packet_bits: u64,
    d0: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRadioParams {
    e_elec: f64,
    eps_fs: f64,
    eps_mp: f64,
    e_da: f64,
    packet_bits: u64,
    #[serde(default, skip_deserializing)]
    d0: f64,
}

impl TryFrom<RawRadioParams> for RadioParams {
    type Error = Error;

    fn try_from(raw: RawRadioParams) -> Result<Self> {
        RadioParams::new(raw.e_elec, raw.eps_fs, raw.eps_mp, raw.e_da, raw.packet_bits)
    }
}

impl From<RadioParams> for RawRadioParams {
    fn from(p: RadioParams) -> Self {
        RawRadioParams {
            e_elec: p.e_elec,
            eps_fs: p.eps_fs,
            eps_mp: p.eps_mp,
            e_da: p.e_da,
            packet_bits: p.packet_bits,
            d0: p.d0,
        }
    }
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams::new(
            DEFAULT_E_ELEC,
            DEFAULT_EPS_FS,
            DEFAULT_EPS_MP,
            DEFAULT_E_DA,
            DEFAULT_PACKET_BITS,
        )
        .expect("default radio parameters are valid")
    }
}

impl RadioParams {
    /// `e_da` may be zero to disable aggregation cost; every other
    /// coefficient must be strictly positive.
    pub fn new(e_elec: f64, eps_fs: f64, eps_mp: f64, e_da: f64, packet_bits: u64) -> Result<Self> {
        if !(e_elec > 0.0 && e_elec.is_finite()) {
            return Err(Error::invalid(format!("e_elec must be positive, got {e_elec}")));
        }
        if !(e_da >= 0.0 && e_da.is_finite()) {
            return Err(Error::invalid(format!("e_da must be non-negative, got {e_da}")));
        }
        if packet_bits == 0 {
            return Err(Error::invalid("packet_bits must be at least 1"));
        }
        let d0 = crossover_distance(eps_fs, eps_mp)?;
        Ok(RadioParams {
            e_elec,
            eps_fs,
            eps_mp,
            e_da,
            packet_bits,
            d0,
        })
    }

    pub fn e_elec(&self) -> f64 {
        self.e_elec
    }

    pub fn eps_fs(&self) -> f64 {
        self.eps_fs
    }

    pub fn eps_mp(&self) -> f64 {
        self.eps_mp
    }

    pub fn e_da(&self) -> f64 {
        self.e_da
    }

    pub fn packet_bits(&self) -> u64 {
        self.packet_bits
    }

    /// Crossover distance between the free-space and multipath branches.
    pub fn d0(&self) -> f64 {
        self.d0
    }
}

/// `sqrt(eps_fs / eps_mp)`: the distance at which both amplifier terms agree.
pub fn crossover_distance(eps_fs: f64, eps_mp: f64) -> Result<f64> {
    if !(eps_fs > 0.0 && eps_fs.is_finite()) {
        return Err(Error::invalid(format!("eps_fs must be positive, got {eps_fs}")));
    }
    if !(eps_mp > 0.0 && eps_mp.is_finite()) {
        return Err(Error::invalid(format!("eps_mp must be positive, got {eps_mp}")));
    }
    Ok((eps_fs / eps_mp).sqrt())
}

fn check_bits(k: u64) -> Result<()> {
    if k == 0 {
        Err(Error::invalid("bit count must be at least 1"))
    } else {
        Ok(())
    }
}

/// Energy to transmit `k` bits over `d` meters.
pub fn tx_energy(params: &RadioParams, k: u64, d: f64) -> Result<f64> {
    check_bits(k)?;
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::invalid(format!(
            "distance must be finite and non-negative, got {d}"
        )));
    }
    let bits = k as f64;
    let amp = if d < params.d0 {
        params.eps_fs * d * d
    } else {
        params.eps_mp * d * d * d * d
    };
    Ok(bits * params.e_elec + bits * amp)
}

/// Energy to receive `k` bits.
pub fn rx_energy(params: &RadioParams, k: u64) -> Result<f64> {
    check_bits(k)?;
    Ok(params.e_elec * k as f64)
}

/// Energy to fuse `n_signals` incoming signals of `k` bits each.
pub fn aggregation_energy(params: &RadioParams, k: u64, n_signals: u64) -> Result<f64> {
    check_bits(k)?;
    Ok(params.e_da * k as f64 * n_signals as f64)
}
