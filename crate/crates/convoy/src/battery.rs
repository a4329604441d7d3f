//! Li-Ion battery discharge/charge model.
//!
//! The discharge behaviour is an empirical rational curve fitted to a
//! 1200 mAh pack: `voltage_curve` maps accumulated discharge (mAh) to the
//! combined quantity `V·Iⁿ`. Terminal voltage under a given electrical
//! load is then recovered from that quantity, and the drawn current is
//! integrated into the accumulated discharge each step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliamp-hours drained per amp-second.
pub const MAH_PER_AMP_SECOND: f64 = 1000.0 / 3600.0;

/// Power draws below this are treated as an open circuit.
const MIN_LOAD_W: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError {
    /// The fitted curve denominator vanished inside the operating range.
    #[error("voltage curve pole at {discharge_mah:.3} mAh (denominator {denominator:.3e})")]
    CurvePole { discharge_mah: f64, denominator: f64 },
    /// The fitted curve produced a non-positive value; coefficients are bad.
    #[error("voltage curve non-positive at {discharge_mah:.3} mAh")]
    CurveDomain { discharge_mah: f64 },
    /// The step would push accumulated discharge past capacity.
    #[error("battery depleted (capacity {capacity_mah:.0} mAh exhausted)")]
    Depleted {
        capacity_mah: f64,
        /// State saturated at capacity, for final bookkeeping.
        state: BatteryState,
    },
}

/// Curve-fit coefficients and pack ratings for one battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Rational-fit coefficients `a1..a6`.
    pub a: [f64; 6],
    /// Exponent of the `V·Iⁿ` fit, dimensionless, in (0, 1).
    pub n: f64,
    pub capacity_mah: f64,
    pub v_full: f64,
    /// Constant recharge current while parked at a hub.
    pub charge_rate_ma: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            a: [12.0, 3.409, 39.55, -0.002653, -0.03203, -8.112e-8],
            n: 0.005,
            capacity_mah: 1200.0,
            v_full: 12.0,
            charge_rate_ma: 1200.0,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.capacity_mah > 0.0) {
            return Err("capacity_mah must be > 0".into());
        }
        if !(self.n > 0.0 && self.n < 1.0) {
            return Err("exponent n must lie in (0, 1)".into());
        }
        if self.charge_rate_ma < 0.0 {
            return Err("charge_rate_ma must be >= 0".into());
        }
        if !(self.v_full > 0.0) {
            return Err("v_full must be > 0".into());
        }
        Ok(())
    }
}

/// Mutable battery quantities carried by each robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    /// Accumulated discharge `D`, mAh, clamped to `[0, capacity]`.
    pub discharge_mah: f64,
    /// Terminal voltage `V_t` at the last evaluation.
    pub voltage: f64,
    /// Current `I_t` drawn during the last step, amperes.
    pub last_current_a: f64,
}

impl BatteryState {
    /// Fresh state at a given accumulated discharge.
    pub fn at_discharge(params: &BatteryParams, discharge_mah: f64) -> Result<Self, BatteryError> {
        let d = discharge_mah.clamp(0.0, params.capacity_mah);
        Ok(Self {
            discharge_mah: d,
            voltage: open_circuit_voltage(params, d)?,
            last_current_a: 0.0,
        })
    }

    pub fn full(params: &BatteryParams) -> Self {
        Self::at_discharge(params, 0.0).expect("default coefficients are pole-free at D=0")
    }
}

/// Evaluates the fitted rational curve: the quantity `V·Iⁿ` at discharge `d`.
///
/// `(a1 + a3·d + a5·d²) / (1 + a2·d + a4·d² + a6·d³)`
pub fn voltage_curve(params: &BatteryParams, d: f64) -> Result<f64, BatteryError> {
    let [a1, a2, a3, a4, a5, a6] = params.a;
    let num = a1 + a3 * d + a5 * d * d;
    let den = 1.0 + a2 * d + a4 * d * d + a6 * d * d * d;
    if den.abs() < 1e-12 {
        return Err(BatteryError::CurvePole {
            discharge_mah: d,
            denominator: den,
        });
    }
    Ok(num / den)
}

/// Voltage reported when no meaningful load is applied: the curve value with
/// the `Iⁿ` factor at its no-load limit, capped at the pack's full voltage.
fn open_circuit_voltage(params: &BatteryParams, d: f64) -> Result<f64, BatteryError> {
    let c = voltage_curve(params, d)?;
    if c <= 0.0 {
        return Err(BatteryError::CurveDomain { discharge_mah: d });
    }
    Ok(c.min(params.v_full))
}

/// One discrete discharge step under an electrical load of `electrical_power_w`
/// for `dt` seconds.
///
/// Solves `V_t = (V·Iⁿ(D_prev) / P_eⁿ)^(1/(1-n))`, derives `I_t = P_e / V_t`
/// and accumulates `D_t = D_prev + I_t·dt` in mAh. Fails with `Depleted` when
/// the step would exceed capacity; the returned error carries the saturated
/// state so the caller can record it before halting the robot.
pub fn discharge_step(
    params: &BatteryParams,
    state: &BatteryState,
    electrical_power_w: f64,
    dt: f64,
) -> Result<BatteryState, BatteryError> {
    debug_assert!(dt > 0.0);
    debug_assert!(electrical_power_w >= 0.0);
    if electrical_power_w < MIN_LOAD_W {
        // P_eⁿ → 0 blows the closed form up; hold D and report open-circuit V.
        return Ok(BatteryState {
            discharge_mah: state.discharge_mah,
            voltage: open_circuit_voltage(params, state.discharge_mah)?,
            last_current_a: 0.0,
        });
    }
    let c = voltage_curve(params, state.discharge_mah)?;
    if c <= 0.0 {
        return Err(BatteryError::CurveDomain {
            discharge_mah: state.discharge_mah,
        });
    }
    let n = params.n;
    let v_t = (c / electrical_power_w.powf(n)).powf(1.0 / (1.0 - n));
    let v_t = v_t.min(params.v_full);
    let i_t = electrical_power_w / v_t;
    let d_t = state.discharge_mah + i_t * dt * MAH_PER_AMP_SECOND;
    if d_t > params.capacity_mah {
        return Err(BatteryError::Depleted {
            capacity_mah: params.capacity_mah,
            state: BatteryState {
                discharge_mah: params.capacity_mah,
                voltage: v_t,
                last_current_a: i_t,
            },
        });
    }
    Ok(BatteryState {
        discharge_mah: d_t,
        voltage: v_t,
        last_current_a: i_t,
    })
}

/// One constant-current recharge step of `dt` seconds; discharge shrinks by
/// `charge_rate_ma·dt/3600`, floored at zero (full).
pub fn charge_step(
    params: &BatteryParams,
    state: &BatteryState,
    dt: f64,
) -> Result<BatteryState, BatteryError> {
    debug_assert!(dt > 0.0);
    let d = (state.discharge_mah - params.charge_rate_ma * dt / 3600.0).max(0.0);
    Ok(BatteryState {
        discharge_mah: d,
        voltage: open_circuit_voltage(params, d)?,
        last_current_a: 0.0,
    })
}

/// Remaining charge as a fraction of capacity, in `[0, 1]`.
pub fn remaining_fraction(params: &BatteryParams, state: &BatteryState) -> f64 {
    1.0 - state.discharge_mah / params.capacity_mah
}

/// Inverts `voltage_curve` for the discharge at which the curve first drops
/// to `target`; bisection over `[0, capacity]`. Returns capacity when the
/// curve never reaches the target.
pub fn discharge_at_curve_value(params: &BatteryParams, target: f64) -> Result<f64, BatteryError> {
    let at_zero = voltage_curve(params, 0.0)?;
    if at_zero <= target {
        return Ok(0.0);
    }
    if voltage_curve(params, params.capacity_mah)? >= target {
        return Ok(params.capacity_mah);
    }
    let (mut lo, mut hi) = (0.0_f64, params.capacity_mah);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if voltage_curve(params, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent fixed-point evaluation of the implicit voltage equation
    /// `V·(P/V)ⁿ = C`; kept deliberately separate from the closed form used
    /// by `discharge_step`.
    fn fixed_point_voltage(c: f64, power_w: f64, n: f64) -> f64 {
        let mut v = 12.0;
        for _ in 0..500 {
            let next = c / (power_w / v).powf(n);
            if (next - v).abs() < 1e-14 {
                return next;
            }
            v = next;
        }
        v
    }

    #[test]
    fn curve_anchor_at_zero_is_a1() {
        let p = BatteryParams::default();
        assert_eq!(voltage_curve(&p, 0.0).unwrap(), 12.0);
        let zero_num = BatteryParams {
            a: [0.0, 3.409, 0.0, 0.0, 0.0, 0.0],
            ..BatteryParams::default()
        };
        assert_eq!(voltage_curve(&zero_num, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn curve_at_600_matches_arbitrary_precision_evaluation() {
        // Reference value computed with exact rational arithmetic.
        let p = BatteryParams::default();
        assert_relative_eq!(
            voltage_curve(&p, 600.0).unwrap(),
            11.371970417380519,
            max_relative = 1e-14
        );
    }

    #[test]
    fn curve_finite_positive_and_decreasing_over_range() {
        let p = BatteryParams::default();
        let mut prev = f64::INFINITY;
        for d in 0..=1200 {
            let v = voltage_curve(&p, d as f64).unwrap();
            assert!(v.is_finite() && v > 0.0, "curve bad at {d}: {v}");
            assert!(v < prev, "curve not decreasing at {d}");
            prev = v;
        }
    }

    #[test]
    fn curve_pole_is_reported() {
        // a2 = -1/600 puts the denominator root near 600 mAh.
        let p = BatteryParams {
            a: [12.0, -1.0 / 600.0, 0.0, 0.0, 0.0, 0.0],
            ..BatteryParams::default()
        };
        assert!(matches!(
            voltage_curve(&p, 600.0),
            Err(BatteryError::CurvePole { .. })
        ));
    }

    #[test]
    fn discharge_step_matches_fixed_point_oracle_at_full() {
        let p = BatteryParams::default();
        let s = BatteryState::full(&p);
        let next = discharge_step(&p, &s, 12.0, 1.0).unwrap();
        let v_ref = fixed_point_voltage(12.0, 12.0, p.n).min(p.v_full);
        assert_relative_eq!(next.voltage, v_ref, epsilon = 1e-10);
        // Frozen: at C = P = 12 the voltage is exactly 12 V and I_t = 1 A.
        assert_relative_eq!(next.voltage, 12.0, epsilon = 1e-10);
        assert_relative_eq!(next.last_current_a, 1.0, epsilon = 1e-10);
        assert_relative_eq!(next.discharge_mah, 0.2777777777777778, epsilon = 1e-10);
    }

    #[test]
    fn discharge_step_matches_fixed_point_oracle_mid_curve() {
        let p = BatteryParams::default();
        let s = BatteryState::at_discharge(&p, 600.0).unwrap();
        let next = discharge_step(&p, &s, 12.0, 1.0).unwrap();
        let c = voltage_curve(&p, 600.0).unwrap();
        let v_ref = fixed_point_voltage(c, 12.0, p.n);
        assert_relative_eq!(next.voltage, v_ref, epsilon = 1e-10);
        // Frozen from the arbitrary-precision run.
        assert_relative_eq!(next.voltage, 11.368898968308213, epsilon = 1e-9);
        assert_relative_eq!(
            next.discharge_mah,
            600.0 + 0.29319755084685752,
            epsilon = 1e-9
        );
    }

    #[test]
    fn zero_power_holds_discharge() {
        let p = BatteryParams::default();
        let s = BatteryState::at_discharge(&p, 300.0).unwrap();
        let next = discharge_step(&p, &s, 0.0, 5.0).unwrap();
        assert_eq!(next.discharge_mah, 300.0);
        assert_eq!(next.last_current_a, 0.0);
    }

    #[test]
    fn unit_conversion_is_exact() {
        // 1.2 A sustained for 1 s must add exactly 1.2·1000/3600 mAh.
        // Pick a load/state pair that produces I_t = 1.2 A: P = 1.2·V_t.
        let p = BatteryParams::default();
        let s = BatteryState::full(&p);
        // Iterate to the power giving exactly 1.2 A at the resulting voltage.
        let mut power = 14.0;
        for _ in 0..100 {
            let next = discharge_step(&p, &s, power, 1.0).unwrap();
            power = 1.2 * next.voltage;
        }
        let next = discharge_step(&p, &s, power, 1.0).unwrap();
        assert_relative_eq!(next.last_current_a, 1.2, epsilon = 1e-9);
        assert_relative_eq!(
            next.discharge_mah - s.discharge_mah,
            1.2 * 1000.0 / 3600.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn depletion_is_an_error_with_saturated_state() {
        let p = BatteryParams::default();
        let s = BatteryState::at_discharge(&p, 1199.99).unwrap();
        let err = discharge_step(&p, &s, 50.0, 10.0).unwrap_err();
        match err {
            BatteryError::Depleted { state, .. } => {
                assert_eq!(state.discharge_mah, p.capacity_mah);
            }
            other => panic!("expected Depleted, got {other:?}"),
        }
    }

    #[test]
    fn charge_step_arithmetic() {
        let p = BatteryParams {
            charge_rate_ma: 600.0,
            ..BatteryParams::default()
        };
        let s = BatteryState::at_discharge(&p, 100.0).unwrap();
        let next = charge_step(&p, &s, 60.0).unwrap();
        assert_relative_eq!(next.discharge_mah, 90.0, epsilon = 1e-12);

        // Full recharge in one nominal hour at 1C.
        let p1c = BatteryParams::default();
        let empty = BatteryState::at_discharge(&p1c, 1200.0).unwrap();
        let full = charge_step(&p1c, &empty, 3600.0).unwrap();
        assert_eq!(full.discharge_mah, 0.0);

        // Already full: clamped at the floor.
        let s0 = BatteryState::full(&p1c);
        assert_eq!(charge_step(&p1c, &s0, 100.0).unwrap().discharge_mah, 0.0);
    }

    #[test]
    fn remaining_fraction_endpoints() {
        let p = BatteryParams::default();
        let full = BatteryState::full(&p);
        assert_eq!(remaining_fraction(&p, &full), 1.0);
        let empty = BatteryState::at_discharge(&p, 1200.0).unwrap();
        assert_eq!(remaining_fraction(&p, &empty), 0.0);
        let s = BatteryState::at_discharge(&p, 840.0).unwrap();
        assert_relative_eq!(remaining_fraction(&p, &s), 0.30, epsilon = 1e-12);
    }

    #[test]
    fn threshold_inversion_brackets_target() {
        let p = BatteryParams::default();
        let d = discharge_at_curve_value(&p, 11.5).unwrap();
        // Independent root: 275.7201264044916 from the precomputed solve.
        assert_relative_eq!(d, 275.7201264044916, epsilon = 1e-6);
        assert!(voltage_curve(&p, d - 0.01).unwrap() > 11.5);
        assert!(voltage_curve(&p, d + 0.01).unwrap() < 11.5);
    }

    proptest! {
        #[test]
        fn discharge_monotone_voltage_nonincreasing(
            power in 0.5f64..60.0,
            steps in 1usize..200,
            d0 in 0.0f64..900.0,
        ) {
            let p = BatteryParams::default();
            let mut s = BatteryState::at_discharge(&p, d0).unwrap();
            let mut last_v = f64::INFINITY;
            let mut last_d = s.discharge_mah;
            for _ in 0..steps {
                match discharge_step(&p, &s, power, 1.0) {
                    Ok(next) => {
                        prop_assert!(next.discharge_mah > last_d);
                        prop_assert!(next.voltage <= last_v + 1e-12);
                        last_d = next.discharge_mah;
                        last_v = next.voltage;
                        s = next;
                    }
                    Err(BatteryError::Depleted { .. }) => break,
                    Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
                }
            }
        }

        #[test]
        fn charge_never_decreases_remaining_fraction(
            d0 in 0.0f64..1200.0,
            dt in 0.1f64..3600.0,
        ) {
            let p = BatteryParams::default();
            let s = BatteryState::at_discharge(&p, d0).unwrap();
            let before = remaining_fraction(&p, &s);
            let after = remaining_fraction(&p, &charge_step(&p, &s, dt).unwrap());
            prop_assert!(after >= before);
        }
    }
}
