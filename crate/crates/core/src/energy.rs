//! Physics-based trip energy for battery buses.
//!
//! A trip is split into stop-to-stop segments. On each segment the bus
//! accelerates at a constant rate, cruises, then decelerates at the same
//! rate; the duration-minimal profile subject to speed and power limits has
//! a closed form, as does the battery energy over each phase (with
//! regenerative braking credited whenever wheel power is negative).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::transit::{haversine_km, Stop, Trip};
use crate::types::{BusVersion, LengthGroup, Season};

#[derive(Debug, thiserror::Error)]
pub enum EnergyError {
    #[error("segment {from}->{to}: required traction exceeds the power limits")]
    InfeasibleSegment { from: String, to: String },
    #[error("trip {trip_id}: stop {stop_id} missing from stop table")]
    MissingStop { trip_id: String, stop_id: String },
    #[error("trip {trip_id}: stop {stop_id} has no elevation")]
    MissingElevation { trip_id: String, stop_id: String },
}

/// Traction and drivetrain parameters for one vehicle length group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehiclePhysics {
    /// Rolling resistance coefficient.
    pub f_r: f64,
    /// Aerodynamic drag coefficient.
    pub c_d: f64,
    /// Frontal area in m².
    pub a_f: f64,
    /// Air density in kg/m³.
    pub rho_air: f64,
    /// Gravitational acceleration in m/s².
    pub g: f64,
    /// Transmission efficiency.
    pub eta_t: f64,
    /// Motor and inverter efficiency.
    pub eta_m: f64,
    /// Regenerative braking efficiency.
    pub eta_rb: f64,
    /// Curb mass of the bus body (no battery, no passengers) in kg.
    pub m_body: f64,
    /// Battery pack mass per kWh of capacity, kg/kWh.
    pub m_bat_per_kwh: f64,
    /// Rotating-mass factor: equivalent mass = factor × mass.
    pub m_eq_factor: f64,
    /// Acceleration/deceleration rate in m/s².
    pub accel: f64,
    /// Speed cap in m/s.
    pub v_max: f64,
    /// Motor power cap in W (binding only on uphill segments).
    pub p_max: f64,
    /// Low-speed traction limit slope in W/(m/s).
    pub kappa: f64,
    /// Passenger payload carried on service trips, kg.
    pub payload_kg: f64,
    /// Multiplier on deadheading segment energy.
    pub deadhead_energy_factor: f64,
}

/// One stop-to-stop piece of a trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub distance_m: f64,
    /// Road grade in radians, positive uphill.
    pub grade_rad: f64,
    pub from_stop: String,
    pub to_stop: String,
}

/// Trapezoidal speed profile: accelerate on [0, τ1], cruise on [τ1, τ2],
/// decelerate on [τ2, τ1+τ2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub tau1: f64,
    pub tau2: f64,
    pub accel: f64,
}

impl SpeedProfile {
    pub fn duration(&self) -> f64 {
        self.tau1 + self.tau2
    }

    pub fn cruise_speed(&self) -> f64 {
        self.accel * self.tau1
    }
}

/// Grade clamp guarding against bad elevation data.
pub const MAX_GRADE_RAD: f64 = 0.15;

/// Consumption multiplier relative to the nominal (spring/fall) estimate.
pub fn season_multiplier(season: Option<Season>) -> f64 {
    match season {
        Some(Season::Winter) => 1.15,
        Some(Season::Summer) => 1.05,
        None => 1.0,
    }
}

/// Power at the wheels for speed `v`, acceleration `accel` and grade
/// `alpha`: `(m g sinα + f_r m g cosα + ½ρ C_D A_f v² + m_eq a) v`.
pub fn traction_power(v: f64, accel: f64, alpha: f64, phys: &VehiclePhysics, mass: f64) -> f64 {
    let grade = mass * phys.g * alpha.sin();
    let rolling = phys.f_r * mass * phys.g * alpha.cos();
    let drag = 0.5 * phys.rho_air * phys.c_d * phys.a_f * v * v;
    let inertia = phys.m_eq_factor * mass * accel;
    (grade + rolling + drag + inertia) * v
}

/// Battery-side power: losses inflate positive wheel power, regeneration
/// recovers a fraction of negative wheel power.
pub fn battery_power(p_w: f64, phys: &VehiclePhysics) -> f64 {
    if p_w >= 0.0 {
        p_w / (phys.eta_t * phys.eta_m)
    } else {
        p_w * phys.eta_t * phys.eta_m * phys.eta_rb
    }
}

// Shorthand coefficients: P_w(τ) = (A + B v(τ)² + C a(τ)) v(τ).
fn coefficients(alpha: f64, phys: &VehiclePhysics, mass: f64) -> (f64, f64, f64) {
    let a_term = mass * phys.g * alpha.sin() + phys.f_r * mass * phys.g * alpha.cos();
    let b_term = 0.5 * phys.rho_air * phys.c_d * phys.a_f;
    let c_term = phys.m_eq_factor * mass;
    (a_term, b_term, c_term)
}

/// Duration-minimal trapezoidal profile for a segment.
///
/// τ1 is the least of: the triangular-profile bound √(d/a), the speed cap
/// V_max/a and, uphill, the traction-limit bound √((κ−A−Ca)/(Ba²)) and the
/// root of P_w(τ1) = P_max. Downhill and flat, the power bounds are
/// redundant. τ2 = d/(a·τ1).
pub fn optimal_profile(
    seg: &Segment,
    phys: &VehiclePhysics,
    mass: f64,
) -> Result<SpeedProfile, EnergyError> {
    let a = phys.accel;
    let d = seg.distance_m;
    let (a_term, b_term, c_term) = coefficients(seg.grade_rad, phys, mass);

    let mut tau1 = (d / a).sqrt().min(phys.v_max / a);

    if seg.grade_rad > 0.0 {
        let kappa_bound = phys.kappa - a_term - c_term * a;
        if kappa_bound <= 0.0 {
            return Err(EnergyError::InfeasibleSegment {
                from: seg.from_stop.clone(),
                to: seg.to_stop.clone(),
            });
        }
        tau1 = tau1.min((kappa_bound / (b_term * a * a)).sqrt());

        // P_w(τ1) is increasing in τ1, so the cap has at most one root on
        // [0, V_max/a]; bisect for it when the cap binds at the speed limit.
        let p_w = |t: f64| (a_term + b_term * (a * t).powi(2) + c_term * a) * (a * t);
        let hi = phys.v_max / a;
        if p_w(hi) > phys.p_max {
            let (mut lo, mut hi) = (0.0, hi);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if p_w(mid) > phys.p_max {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-12 * (1.0 + hi) {
                    break;
                }
            }
            tau1 = tau1.min(0.5 * (lo + hi));
        }
    }

    Ok(SpeedProfile {
        tau1,
        tau2: d / (a * tau1),
        accel: a,
    })
}

// ∫ (k + B a² x²) a x dx from 0 to t: the wheel-energy primitive shared by
// the acceleration (k = A + Ca) and deceleration (k = A − Ca) phases.
fn phase_integral(k: f64, b_term: f64, a: f64, t: f64) -> f64 {
    0.5 * k * a * t * t + 0.25 * b_term * a.powi(3) * t.powi(4)
}

/// Battery energy for one segment in Wh, from the exact phase integrals.
///
/// Each phase integrand changes sign at most once; the crossing times
/// τ̄ = √(−(A+Ca)/(Ba²)) and δ̄ = √((Ca−A)/(Ba²)) split the integral into a
/// regenerating part (scaled by η_t·η_m·η_rb) and a consuming part (scaled
/// by 1/(η_t·η_m)).
pub fn segment_energy(
    seg: &Segment,
    prof: &SpeedProfile,
    phys: &VehiclePhysics,
    mass: f64,
) -> f64 {
    let (a_term, b_term, c_term) = coefficients(seg.grade_rad, phys, mass);
    let a = prof.accel;
    let (tau1, tau2) = (prof.tau1, prof.tau2);
    let consume = 1.0 / (phys.eta_t * phys.eta_m);
    let regen = phys.eta_t * phys.eta_m * phys.eta_rb;

    // Acceleration phase: integrand (A + Ca + B a²τ²) a τ.
    let k_acc = a_term + c_term * a;
    let e_acc = if k_acc >= 0.0 {
        consume * phase_integral(k_acc, b_term, a, tau1)
    } else {
        let crossing = (-k_acc / (b_term * a * a)).sqrt();
        if crossing >= tau1 {
            regen * phase_integral(k_acc, b_term, a, tau1)
        } else {
            let at_crossing = phase_integral(k_acc, b_term, a, crossing);
            regen * at_crossing
                + consume * (phase_integral(k_acc, b_term, a, tau1) - at_crossing)
        }
    };

    // Cruise phase: constant integrand (A + B v²) v with v = aτ1.
    let v = a * tau1;
    let cruise_wheel = (a_term + b_term * v * v) * v * (tau2 - tau1);
    let e_cruise = if cruise_wheel >= 0.0 {
        consume * cruise_wheel
    } else {
        regen * cruise_wheel
    };

    // Deceleration phase, in time-from-stop δ: integrand (A − Ca + B a²δ²) a δ.
    let k_dec = a_term - c_term * a;
    let e_dec = if k_dec >= 0.0 {
        consume * phase_integral(k_dec, b_term, a, tau1)
    } else {
        let crossing = (-k_dec / (b_term * a * a)).sqrt();
        if crossing >= tau1 {
            regen * phase_integral(k_dec, b_term, a, tau1)
        } else {
            let at_crossing = phase_integral(k_dec, b_term, a, crossing);
            regen * at_crossing
                + consume * (phase_integral(k_dec, b_term, a, tau1) - at_crossing)
        }
    };

    (e_acc + e_cruise + e_dec) / 3600.0
}

/// Service mass: body, battery pack and passenger payload.
pub fn service_mass(version: &BusVersion, phys: &VehiclePhysics) -> f64 {
    phys.m_body + version.battery_mass_kg + phys.payload_kg
}

/// Deadheading mass: no passengers on board.
pub fn deadhead_mass(version: &BusVersion, phys: &VehiclePhysics) -> f64 {
    phys.m_body + version.battery_mass_kg
}

/// Build segments for a trip from its stop sequence. Straight-line
/// distances are inflated by the road-circuity factor and then rescaled so
/// they sum to the scheduled trip distance; grades come from elevation
/// deltas, clamped to ±[`MAX_GRADE_RAD`].
pub fn trip_segments(
    trip: &Trip,
    stops: &BTreeMap<String, Stop>,
    circuity: f64,
) -> Result<Vec<Segment>, EnergyError> {
    let mut raw: Vec<(f64, f64, &str, &str)> = Vec::new();
    for pair in trip.stop_sequence.windows(2) {
        let from = stops.get(&pair[0]).ok_or_else(|| EnergyError::MissingStop {
            trip_id: trip.trip_id.clone(),
            stop_id: pair[0].clone(),
        })?;
        let to = stops.get(&pair[1]).ok_or_else(|| EnergyError::MissingStop {
            trip_id: trip.trip_id.clone(),
            stop_id: pair[1].clone(),
        })?;
        for stop in [from, to] {
            if !stop.has_elevation() {
                return Err(EnergyError::MissingElevation {
                    trip_id: trip.trip_id.clone(),
                    stop_id: stop.id.clone(),
                });
            }
        }
        let dist_m = haversine_km(
            (from.latitude, from.longitude),
            (to.latitude, to.longitude),
        ) * circuity
            * 1000.0;
        if dist_m > 0.0 {
            raw.push((dist_m, to.elevation - from.elevation, &pair[0], &pair[1]));
        }
    }

    let scheduled_m = trip.scheduled_distance_km * 1000.0;
    if raw.is_empty() {
        // Degenerate shape (all stops coincide): one flat segment.
        let first = trip.stop_sequence.first().cloned().unwrap_or_default();
        let last = trip.stop_sequence.last().cloned().unwrap_or_default();
        return Ok(vec![Segment {
            distance_m: scheduled_m,
            grade_rad: 0.0,
            from_stop: first,
            to_stop: last,
        }]);
    }

    let total: f64 = raw.iter().map(|(d, ..)| d).sum();
    let scale = scheduled_m / total;
    Ok(raw
        .into_iter()
        .map(|(d, delev, from, to)| {
            let distance_m = d * scale;
            let grade = (delev / distance_m).atan();
            Segment {
                distance_m,
                grade_rad: grade.clamp(-MAX_GRADE_RAD, MAX_GRADE_RAD),
                from_stop: from.to_string(),
                to_stop: to.to_string(),
            }
        })
        .collect())
}

/// Battery energy over a list of segments in kWh (before seasonal scaling).
pub fn segments_energy_kwh(
    segments: &[Segment],
    phys: &VehiclePhysics,
    mass: f64,
) -> Result<f64, EnergyError> {
    let mut wh = 0.0;
    for seg in segments {
        let prof = optimal_profile(seg, phys, mass)?;
        wh += segment_energy(seg, &prof, phys, mass);
    }
    Ok(wh / 1000.0)
}

/// Battery energy for a service trip in kWh, including the seasonal
/// consumption multiplier.
pub fn trip_energy(
    trip: &Trip,
    stops: &BTreeMap<String, Stop>,
    version: &BusVersion,
    season: Option<Season>,
    phys: &VehiclePhysics,
    circuity: f64,
) -> Result<f64, EnergyError> {
    let segments = trip_segments(trip, stops, circuity)?;
    let kwh = segments_energy_kwh(&segments, phys, service_mass(version, phys))?;
    Ok(kwh * season_multiplier(season))
}

/// Battery energy for a deadheading run of `distance_km` on flat ground,
/// without passengers, in kWh.
pub fn deadhead_energy(
    distance_km: f64,
    version: &BusVersion,
    season: Option<Season>,
    phys: &VehiclePhysics,
) -> Result<f64, EnergyError> {
    if distance_km <= 0.0 {
        return Ok(0.0);
    }
    let seg = Segment {
        distance_m: distance_km * 1000.0,
        grade_rad: 0.0,
        from_stop: String::new(),
        to_stop: String::new(),
    };
    let kwh = segments_energy_kwh(&[seg], phys, deadhead_mass(version, phys))?;
    Ok(kwh * phys.deadhead_energy_factor * season_multiplier(season))
}

/// Default physics for a length group: shared constants plus the per-length
/// body mass, acceleration, power cap and payload.
pub fn default_physics(length: LengthGroup) -> VehiclePhysics {
    let (m_body, accel, p_max_kw, payload_kg) = match length {
        LengthGroup::M8 => (9_500.0, 2.1, 160.0, 3_000.0),
        LengthGroup::M10 => (15_000.0, 1.8, 200.0, 4_000.0),
        LengthGroup::M12 => (16_000.0, 1.7, 250.0, 5_000.0),
        LengthGroup::M18 => (25_000.0, 1.5, 350.0, 7_500.0),
    };
    let v_max = 30.0 / 3.6;
    let p_max = p_max_kw * 1000.0;
    VehiclePhysics {
        f_r: 0.01,
        c_d: 0.7,
        a_f: 0.85 * 3.25 * 2.55,
        rho_air: 1.225,
        g: 9.81,
        eta_t: 0.9,
        eta_m: 0.9,
        eta_rb: 0.25,
        m_body,
        m_bat_per_kwh: 5.0,
        m_eq_factor: 1.1,
        accel,
        v_max,
        p_max,
        // The linear traction limit binds only below quarter speed.
        kappa: p_max / (0.25 * v_max),
        payload_kg,
        deadhead_energy_factor: 0.9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;
    use crate::types::BusType;

    fn phys12() -> VehiclePhysics {
        default_physics(LengthGroup::M12)
    }

    fn version_280() -> BusVersion {
        BusVersion {
            id: "BEB-ONC-12m-280".into(),
            bus_type: BusType::BebOvernight,
            length: LengthGroup::M12,
            battery_capacity_kwh: 280.0,
            battery_mass_kg: 280.0 * 5.0,
            recharge_minutes: 373.3,
            economic_life: 12,
            purchase_cost: Money::from_dollars(440_000.0),
            diesel_l_per_km: 0.0,
            hydrogen_kg_per_km: 0.0,
        }
    }

    fn flat_segment(d: f64) -> Segment {
        Segment {
            distance_m: d,
            grade_rad: 0.0,
            from_stop: "a".into(),
            to_stop: "b".into(),
        }
    }

    #[test]
    fn traction_power_zero_speed_is_zero() {
        let phys = phys12();
        assert_eq!(traction_power(0.0, 2.0, 0.1, &phys, 19_100.0), 0.0);
    }

    #[test]
    fn traction_power_flat_cruise_matches_term_sum() {
        let phys = phys12();
        let (v, mass) = (8.333, 19_100.0);
        // Term-by-term: grade 0, rolling f_r·m·g, drag ½ρC_D·A_f·v², no inertia.
        let rolling = 0.01 * mass * 9.81;
        let drag = 0.5 * 1.225 * 0.7 * (0.85 * 3.25 * 2.55) * v * v;
        let expected = (rolling + drag) * v;
        let got = traction_power(v, 0.0, 0.0, &phys, mass);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn traction_power_steep_downhill_is_negative() {
        let phys = phys12();
        assert!(traction_power(2.0, 0.0, -0.05, &phys, 19_100.0) < 0.0);
    }

    #[test]
    fn battery_power_examples() {
        let phys = phys12();
        assert_eq!(battery_power(0.0, &phys), 0.0);
        assert!((battery_power(81.0, &phys) - 100.0).abs() < 1e-12);
        assert!((battery_power(-1000.0, &phys) + 202.5).abs() < 1e-12);
    }

    #[test]
    fn battery_power_monotone_and_continuous_at_zero() {
        let phys = phys12();
        let mut prev = f64::NEG_INFINITY;
        for i in -100..=100 {
            let p = battery_power(i as f64 * 10.0, &phys);
            assert!(p >= prev);
            prev = p;
        }
        assert!(battery_power(1e-9, &phys).abs() < 1e-8);
        assert!(battery_power(-1e-9, &phys).abs() < 1e-8);
    }

    #[test]
    fn profile_speed_cap_binds_exactly() {
        let phys = phys12();
        let a = phys.accel;
        // d chosen so √(d/a) equals V_max/a: the two bounds coincide.
        let d = phys.v_max * phys.v_max / a;
        let prof = optimal_profile(&flat_segment(d), &phys, 19_100.0).unwrap();
        assert!((prof.tau1 - phys.v_max / a).abs() < 1e-12);
        assert!((prof.cruise_speed() - phys.v_max).abs() < 1e-9);
    }

    #[test]
    fn profile_short_segment_is_triangular() {
        let mut phys = phys12();
        phys.v_max = 1e6;
        phys.p_max = 1e12;
        phys.kappa = 1e12;
        let d = 30.0;
        let prof = optimal_profile(&flat_segment(d), &phys, 19_100.0).unwrap();
        assert!((prof.tau1 - (d / phys.accel).sqrt()).abs() < 1e-12);
        assert!((prof.tau1 - prof.tau2).abs() < 1e-12);
    }

    #[test]
    fn profile_covers_distance() {
        let phys = phys12();
        for d in [25.0, 120.0, 400.0, 2_000.0] {
            for grade in [-0.08, -0.01, 0.0, 0.02, 0.09] {
                let seg = Segment {
                    distance_m: d,
                    grade_rad: grade,
                    from_stop: "a".into(),
                    to_stop: "b".into(),
                };
                let prof = optimal_profile(&seg, &phys, 21_000.0).unwrap();
                // accel + cruise + decel distance telescopes to a·τ1·τ2.
                let covered = prof.accel * prof.tau1 * prof.tau2;
                assert!((covered - d).abs() < 1e-6 * d);
                assert!(prof.tau1 <= prof.tau2 + 1e-9);
                assert!(prof.cruise_speed() <= phys.v_max + 1e-9);
            }
        }
    }

    #[test]
    fn profile_uphill_respects_power_cap() {
        let mut phys = phys12();
        phys.p_max = 60_000.0; // force the cap to bind
        let seg = Segment {
            distance_m: 800.0,
            grade_rad: 0.06,
            from_stop: "a".into(),
            to_stop: "b".into(),
        };
        let mass = 21_000.0;
        let prof = optimal_profile(&seg, &phys, mass).unwrap();
        let p_peak = traction_power(prof.cruise_speed(), phys.accel, seg.grade_rad, &phys, mass);
        assert!(p_peak <= phys.p_max * (1.0 + 1e-6), "{p_peak}");
        // And the cap really binds: a slightly larger τ1 would exceed it.
        let v_plus = phys.accel * (prof.tau1 * 1.01);
        assert!(traction_power(v_plus, phys.accel, seg.grade_rad, &phys, mass) > phys.p_max);
    }

    #[test]
    fn cruise_energy_is_linear_in_duration() {
        let phys = phys12();
        let mass = 21_000.0;
        let seg_a = flat_segment(500.0);
        let prof_a = optimal_profile(&seg_a, &phys, mass).unwrap();
        // Same cruise speed, extended cruise: energy grows by the constant
        // cruise integrand (A + Bv²)v/(η_t η_m) per second.
        let extra = 7.0;
        let prof_b = SpeedProfile {
            tau1: prof_a.tau1,
            tau2: prof_a.tau2 + extra,
            accel: prof_a.accel,
        };
        let seg_b = flat_segment(seg_a.distance_m + prof_a.cruise_speed() * extra);
        let e_a = segment_energy(&seg_a, &prof_a, &phys, mass);
        let e_b = segment_energy(&seg_b, &prof_b, &phys, mass);
        let v = prof_a.cruise_speed();
        let (a_term, b_term, _) = coefficients(0.0, &phys, mass);
        let expected = (a_term + b_term * v * v) * v * extra / (phys.eta_t * phys.eta_m) / 3600.0;
        assert!(((e_b - e_a) - expected).abs() < 1e-9 * e_a.max(1.0));
    }

    #[test]
    fn steep_descent_regenerates_within_potential_drop() {
        let phys = phys12();
        let mass = 21_000.0;
        let seg = Segment {
            distance_m: 900.0,
            grade_rad: -0.12,
            from_stop: "a".into(),
            to_stop: "b".into(),
        };
        let prof = optimal_profile(&seg, &phys, mass).unwrap();
        let e = segment_energy(&seg, &prof, &phys, mass);
        assert!(e < 0.0, "steep descent should regenerate, got {e} Wh");
        let drop_m = seg.distance_m * seg.grade_rad.sin().abs();
        let potential_wh = mass * phys.g * drop_m / 3600.0;
        let bound = phys.eta_t * phys.eta_m * phys.eta_rb * potential_wh;
        assert!(e.abs() <= bound + 1e-9, "|{e}| > bound {bound}");
    }

    #[test]
    fn trip_energy_single_flat_segment_equals_segment_energy() {
        let phys = phys12();
        let version = version_280();
        let mut stops = BTreeMap::new();
        stops.insert(
            "S1".to_string(),
            Stop {
                id: "S1".into(),
                latitude: 41.0,
                longitude: 29.0,
                elevation: 30.0,
            },
        );
        stops.insert(
            "S2".to_string(),
            Stop {
                id: "S2".into(),
                latitude: 41.0,
                longitude: 29.012,
                elevation: 30.0,
            },
        );
        let trip = Trip {
            route_code: "R1".into(),
            trip_id: "T1".into(),
            start_time: 6 * 3600,
            scheduled_distance_km: 1.4,
            depot: None,
            length_group: LengthGroup::M12,
            stop_sequence: vec!["S1".into(), "S2".into()],
            direction: "S1>S2".into(),
        };
        let mass = service_mass(&version, &phys);
        let seg = flat_segment(1400.0);
        let prof = optimal_profile(&seg, &phys, mass).unwrap();
        let expected = segment_energy(&seg, &prof, &phys, mass) / 1000.0;
        let got = trip_energy(&trip, &stops, &version, None, &phys, 1.3).unwrap();
        assert!((got - expected).abs() < 1e-12);

        // Winter-to-nominal ratio is exactly the seasonal multiplier.
        let winter = trip_energy(&trip, &stops, &version, Some(Season::Winter), &phys, 1.3)
            .unwrap();
        assert!((winter / got - 1.15).abs() < 1e-12);
    }

    #[test]
    fn trip_energy_nondecreasing_in_mass() {
        let phys = phys12();
        let seg = flat_segment(1_000.0);
        let mut prev = f64::NEG_INFINITY;
        for extra in [0.0, 1_000.0, 3_000.0, 8_000.0] {
            let mass = 17_400.0 + extra;
            let prof = optimal_profile(&seg, &phys, mass).unwrap();
            let e = segment_energy(&seg, &prof, &phys, mass);
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn segments_rescale_to_scheduled_distance() {
        let mut stops = BTreeMap::new();
        for (i, (lat, lon, elev)) in [
            (41.000, 29.000, 30.0),
            (41.010, 29.010, 42.0),
            (41.020, 29.022, 35.0),
        ]
        .iter()
        .enumerate()
        {
            let id = format!("S{}", i + 1);
            stops.insert(
                id.clone(),
                Stop {
                    id,
                    latitude: *lat,
                    longitude: *lon,
                    elevation: *elev,
                },
            );
        }
        let trip = Trip {
            route_code: "R1".into(),
            trip_id: "T1".into(),
            start_time: 0,
            scheduled_distance_km: 5.0,
            depot: None,
            length_group: LengthGroup::M12,
            stop_sequence: vec!["S1".into(), "S2".into(), "S3".into()],
            direction: "S1>S3".into(),
        };
        let segments = trip_segments(&trip, &stops, 1.3).unwrap();
        assert_eq!(segments.len(), 2);
        let total: f64 = segments.iter().map(|s| s.distance_m).sum();
        assert!((total - 5_000.0).abs() < 1e-6);
        assert!(segments.iter().all(|s| s.grade_rad.abs() <= MAX_GRADE_RAD));
        assert!(segments[0].grade_rad > 0.0 && segments[1].grade_rad < 0.0);
    }

    #[test]
    fn deadhead_energy_zero_distance() {
        let phys = phys12();
        let version = version_280();
        assert_eq!(deadhead_energy(0.0, &version, None, &phys).unwrap(), 0.0);
    }

    #[test]
    fn deadhead_uses_reduced_mass_and_factor() {
        let phys = phys12();
        let version = version_280();
        let d_km = 3.0;
        let seg = flat_segment(d_km * 1000.0);
        let mass = deadhead_mass(&version, &phys);
        let prof = optimal_profile(&seg, &phys, mass).unwrap();
        let base = segment_energy(&seg, &prof, &phys, mass) / 1000.0;
        let got = deadhead_energy(d_km, &version, None, &phys).unwrap();
        assert!((got - base * 0.9).abs() < 1e-12);
    }
}
