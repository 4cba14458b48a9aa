//! Reference systems used by tests, examples and the CLI.
//!
//! `c1` and `c2` are tiny hand-checkable cases. `synthetic_twelve` is a
//! twelve-module cascade with a 24-hour horizon whose installed capacity sums
//! to 537.4 MW; its parameters are invented and only loosely follow the shape
//! of a real Norwegian watercourse.

use crate::system::{CostParams, DischargeSegment, HydroModule, HydroSystem, TimeGrid};

fn costs() -> CostParams {
    CostParams {
        load_shed: 3000.0,
        power_spill: 1000.0,
        bypass_penalty: 0.5,
        spill_penalty: 1.0,
        reserve_epsilon: 1e-4,
    }
}

/// One module, one segment, one hour.
pub fn c1() -> HydroSystem {
    let module = HydroModule {
        id: "M1".into(),
        water_value: 1000.0,
        segments: vec![DischargeSegment {
            max_discharge: 10.0,
            energy_coeff: 2.0,
        }],
        max_bypass: 10.0,
        max_spill: 100.0,
        max_volume: 1.0,
        initial_volume: 0.5,
        max_production: 20.0,
        discharge_to: None,
        bypass_to: None,
        spill_to: None,
        inflow: vec![0.0],
    };
    let grid = TimeGrid {
        period_hours: vec![1.0],
        net_load: vec![10.0],
        reserve_req: vec![0.0],
    };
    HydroSystem::new(vec![module], grid, costs()).expect("c1 is valid")
}

/// Net load profile of [`c2`]; its peak plus 8 MW exceeds installed capacity.
pub const C2_LOAD: [f64; 4] = [20.0, 28.0, 32.0, 24.0];

/// Two modules in series: `A` discharges, bypasses and spills into `B`,
/// whose small reservoir limits how far the two plants can diverge.
/// `periods` must be between 1 and 4.
pub fn c2(periods: usize) -> HydroSystem {
    assert!((1..=4).contains(&periods), "c2 supports 1 to 4 periods");
    let upper = HydroModule {
        id: "A".into(),
        water_value: 4000.0,
        segments: vec![
            DischargeSegment {
                max_discharge: 10.0,
                energy_coeff: 1.5,
            },
            DischargeSegment {
                max_discharge: 5.0,
                energy_coeff: 1.2,
            },
        ],
        max_bypass: 5.0,
        max_spill: 50.0,
        max_volume: 2.0,
        initial_volume: 1.3,
        max_production: 20.0,
        discharge_to: Some("B".into()),
        bypass_to: Some("B".into()),
        spill_to: Some("B".into()),
        inflow: vec![5.0; periods],
    };
    let lower = HydroModule {
        id: "B".into(),
        water_value: 2000.0,
        segments: vec![
            DischargeSegment {
                max_discharge: 12.0,
                energy_coeff: 1.0,
            },
            DischargeSegment {
                max_discharge: 8.0,
                energy_coeff: 0.8,
            },
        ],
        max_bypass: 5.0,
        max_spill: 50.0,
        max_volume: 0.05,
        initial_volume: 0.0325,
        max_production: 18.0,
        discharge_to: None,
        bypass_to: None,
        spill_to: None,
        inflow: vec![2.0; periods],
    };
    let grid = TimeGrid {
        period_hours: vec![1.0; periods],
        net_load: C2_LOAD[..periods].to_vec(),
        reserve_req: vec![0.0; periods],
    };
    HydroSystem::new(vec![upper, lower], grid, costs()).expect("c2 is valid")
}

/// Hourly net-load forecast of the synthetic system, peaking at 420 MW for six hours.
pub const SYNTHETIC_LOAD: [f64; 24] = [
    265.0, 255.0, 250.0, 248.0, 255.0, 285.0, 335.0, 380.0, 405.0, 420.0, 420.0, 420.0, 410.0,
    398.0, 392.0, 400.0, 420.0, 420.0, 420.0, 396.0, 362.0, 330.0, 300.0, 278.0,
];

struct Spec {
    id: &'static str,
    water_value: f64,
    max_production: f64,
    head_coeff: f64,
    max_volume: f64,
    inflow: f64,
    max_bypass: f64,
    discharge_to: Option<&'static str>,
    bypass_to: Option<&'static str>,
}

/// Twelve-module cascade, 24 hourly periods, reserve requirement 42 MW.
pub fn synthetic_twelve() -> HydroSystem {
    #[rustfmt::skip]
    let specs = [
        Spec { id: "M1", water_value: 9000.0, max_production: 60.0, head_coeff: 4.0, max_volume: 40.0, inflow: 3.0, max_bypass: 10.0, discharge_to: Some("M2"), bypass_to: Some("M2") },
        Spec { id: "M2", water_value: 7000.0, max_production: 25.0, head_coeff: 1.5, max_volume: 0.12, inflow: 0.5, max_bypass: 5.0, discharge_to: Some("M3"), bypass_to: Some("M3") },
        Spec { id: "M3", water_value: 6100.0, max_production: 30.0, head_coeff: 2.0, max_volume: 0.2, inflow: 0.8, max_bypass: 5.0, discharge_to: Some("M4"), bypass_to: Some("M4") },
        Spec { id: "M4", water_value: 4600.0, max_production: 120.0, head_coeff: 3.0, max_volume: 30.0, inflow: 6.0, max_bypass: 20.0, discharge_to: Some("M7"), bypass_to: Some("M7") },
        Spec { id: "M5", water_value: 8400.0, max_production: 35.0, head_coeff: 3.5, max_volume: 15.0, inflow: 2.0, max_bypass: 0.0, discharge_to: Some("M6"), bypass_to: None },
        Spec { id: "M6", water_value: 6000.0, max_production: 40.0, head_coeff: 2.0, max_volume: 0.25, inflow: 1.0, max_bypass: 0.0, discharge_to: Some("M4"), bypass_to: None },
        Spec { id: "M7", water_value: 2300.0, max_production: 55.0, head_coeff: 1.2, max_volume: 0.3, inflow: 1.0, max_bypass: 0.0, discharge_to: Some("M8"), bypass_to: None },
        Spec { id: "M8", water_value: 1200.0, max_production: 45.0, head_coeff: 1.0, max_volume: 0.25, inflow: 0.5, max_bypass: 0.0, discharge_to: None, bypass_to: None },
        Spec { id: "M9", water_value: 4700.0, max_production: 30.0, head_coeff: 3.0, max_volume: 12.0, inflow: 2.0, max_bypass: 0.0, discharge_to: Some("M10"), bypass_to: None },
        Spec { id: "M10", water_value: 2400.0, max_production: 25.0, head_coeff: 1.5, max_volume: 0.15, inflow: 0.5, max_bypass: 0.0, discharge_to: Some("M8"), bypass_to: None },
        Spec { id: "M11", water_value: 3500.0, max_production: 40.0, head_coeff: 3.2, max_volume: 18.0, inflow: 2.5, max_bypass: 5.0, discharge_to: Some("M12"), bypass_to: Some("M12") },
        Spec { id: "M12", water_value: 1300.0, max_production: 32.4, head_coeff: 1.1, max_volume: 0.1, inflow: 0.6, max_bypass: 0.0, discharge_to: None, bypass_to: None },
    ];
    let periods = SYNTHETIC_LOAD.len();
    let round2 = |x: f64| (x * 100.0).round() / 100.0;
    let modules = specs
        .iter()
        .map(|s| {
            // Two segments: the efficient one covers 70% of capacity, the
            // second (10% less efficient) another 35%.
            let e0 = s.head_coeff;
            let e1 = round2(0.9 * e0);
            let q0 = round2(0.7 * s.max_production / e0);
            let q1 = round2(0.35 * s.max_production / e1);
            HydroModule {
                id: s.id.into(),
                water_value: s.water_value,
                segments: vec![
                    DischargeSegment {
                        max_discharge: q0,
                        energy_coeff: e0,
                    },
                    DischargeSegment {
                        max_discharge: q1,
                        energy_coeff: e1,
                    },
                ],
                max_bypass: s.max_bypass,
                max_spill: 200.0,
                max_volume: s.max_volume,
                initial_volume: 0.65 * s.max_volume,
                max_production: s.max_production,
                discharge_to: s.discharge_to.map(Into::into),
                bypass_to: s.bypass_to.map(Into::into),
                spill_to: s.discharge_to.map(Into::into),
                inflow: vec![s.inflow; periods],
            }
        })
        .collect();
    let grid = TimeGrid {
        period_hours: vec![1.0; periods],
        net_load: SYNTHETIC_LOAD.to_vec(),
        reserve_req: vec![42.0; periods],
    };
    HydroSystem::new(modules, grid, costs()).expect("synthetic system is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_capacity_and_storage() {
        let sys = synthetic_twelve();
        assert_eq!(sys.modules().len(), 12);
        assert!((sys.topology.total_capacity() - 537.4).abs() < 1e-9);
        for m in sys.modules() {
            assert!((m.initial_volume - 0.65 * m.max_volume).abs() < 1e-12);
            assert!((1200.0..=9000.0).contains(&m.water_value));
        }
        let peak = SYNTHETIC_LOAD.iter().cloned().fold(0.0, f64::max);
        assert_eq!(peak, 420.0);
        assert_eq!(SYNTHETIC_LOAD.iter().filter(|&&l| l == peak).count(), 6);
    }

    #[test]
    fn c2_periods() {
        for t in 1..=4 {
            assert_eq!(c2(t).periods(), t);
        }
    }
}
