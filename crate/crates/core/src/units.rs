//! Unit conversions. Rates are carried in bps and powers in watts
//! internally; dBm/Mbps appear only at the configuration and reporting
//! boundaries.

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Watts to dBm. Zero (or negative) power maps to `-inf`.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1e3).log10()
}

/// dB value to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn mbps_to_bps(mbps: f64) -> f64 {
    mbps * 1e6
}

pub fn bps_to_mbps(bps: f64) -> f64 {
    bps * 1e-6
}

/// SNR-gap factor for uncoded M-QAM at the given bit error rate.
/// `beta = 1.5 / -ln(5 BER)`; BER must lie in (0, 0.2) so the log is
/// negative.
pub fn snr_gap_from_ber(ber: f64) -> crate::Result<f64> {
    if !(ber > 0.0 && ber < 0.2) {
        return Err(crate::Error::domain(format!(
            "BER must lie in (0, 0.2), got {ber}"
        )));
    }
    Ok(1.5 / -(5.0 * ber).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_round_trip() {
        assert!((dbm_to_watts(23.0) - 0.19952623149688797).abs() < 1e-15);
        assert!((watts_to_dbm(dbm_to_watts(17.3)) - 17.3).abs() < 1e-12);
        assert_eq!(watts_to_dbm(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn snr_gap_reference_value() {
        // BER 1e-6 -> 1.5/ln(2e5)
        let beta = snr_gap_from_ber(1e-6).unwrap();
        assert!((beta - 0.12288965038638332).abs() < 1e-15);
        assert!(snr_gap_from_ber(0.0).is_err());
        assert!(snr_gap_from_ber(0.3).is_err());
    }
}
