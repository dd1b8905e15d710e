//! Synthetic scenarios.
//!
//! `threehub` uses the published hub parameters and tariffs with demand and
//! irradiance series generated to follow the qualitative description of the
//! original data (an industrial, a medium and a residential hub; PV peaking
//! at midday). The series are not the original measurements.
//!
//! The small fixtures are hand-checkable networks used by the test suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    DemandSeries, Scenario, TariffTable, TradeLink, DEFAULT_GAMMA, DEFAULT_KAPPA, DEFAULT_RHO,
};
use crate::hub::{pv_output, ChpSpec, GbSpec, HpSpec, HubSpec, PvSpec, StorageSpec};

pub const DEFAULT_SEED: u64 = 42;

/// Hours with daylight in the synthetic series.
pub const DAYLIGHT: std::ops::RangeInclusive<usize> = 7..=17;

fn paper_tariffs() -> TariffTable {
    TariffTable {
        grid_import: 0.22,
        grid_feed_in: 0.12,
        gas: 0.115,
    }
}

fn link(a: &str, b: &str) -> TradeLink {
    TradeLink {
        from_hub: a.into(),
        to_hub: b.into(),
        capacity_kappa: DEFAULT_KAPPA,
    }
}

/// The three hubs with their published converter and storage data.
pub fn threehub_hubs() -> Vec<HubSpec> {
    let hub1 = HubSpec {
        chp: Some(ChpSpec {
            eta: 0.36,
            vertices: [(380.0, 0.0), (315.0, 515.0), (745.0, 1220.0), (800.0, 0.0)],
        }),
        hp: Some(HpSpec {
            cop: 4.5,
            q_bounds: [0.0, 450.0],
        }),
        gb: Some(GbSpec {
            eta: 0.78,
            q_bounds: [0.0, 350.0],
        }),
        pv: Some(PvSpec {
            eta: 0.15,
            area_m2: 8400.0,
            p_bounds: [0.0, 2500.0],
        }),
        es: Some(StorageSpec {
            standby_gamma: 0.999,
            cycle_eta: 0.99,
            soc_bounds: [50.0, 750.0],
            charge_bounds: [0.0, 200.0],
            discharge_bounds: [0.0, 200.0],
            soc_initial: 50.0,
        }),
        ts: Some(StorageSpec {
            standby_gamma: 0.992,
            cycle_eta: 0.95,
            soc_bounds: [290.0, 12900.0],
            charge_bounds: [0.0, 3200.0],
            discharge_bounds: [0.0, 3200.0],
            soc_initial: 290.0,
        }),
        import_max: 5000.0,
        export_max: 5000.0,
        ..HubSpec::bare("hub1")
    };
    let hub2 = HubSpec {
        hp: Some(HpSpec {
            cop: 4.5,
            q_bounds: [0.0, 300.0],
        }),
        gb: Some(GbSpec {
            eta: 0.78,
            q_bounds: [0.0, 50.0],
        }),
        pv: Some(PvSpec {
            eta: 0.15,
            area_m2: 3170.0,
            p_bounds: [0.0, 350.0],
        }),
        ts: Some(StorageSpec {
            standby_gamma: 0.992,
            cycle_eta: 0.95,
            soc_bounds: [0.36, 1.62],
            charge_bounds: [0.0, 0.3],
            discharge_bounds: [0.0, 0.3],
            soc_initial: 0.36,
        }),
        import_max: 1000.0,
        export_max: 1000.0,
        ..HubSpec::bare("hub2")
    };
    let hub3 = HubSpec {
        hp: Some(HpSpec {
            cop: 4.5,
            q_bounds: [0.0, 50.0],
        }),
        pv: Some(PvSpec {
            eta: 0.15,
            area_m2: 380.0,
            p_bounds: [0.0, 80.0],
        }),
        import_max: 200.0,
        export_max: 200.0,
        ..HubSpec::bare("hub3")
    };
    vec![hub1, hub2, hub3]
}

/// Clear-sky-like irradiance with multiplicative cloud noise, kW/m².
fn irradiance(rng: &mut ChaCha8Rng, h: usize) -> f64 {
    if !DAYLIGHT.contains(&h) {
        return 0.0;
    }
    let x = (h as f64 - 6.5) / 11.0 * std::f64::consts::PI;
    (0.35 + 0.6 * x.sin()) * rng.random_range(0.96..1.0)
}

/// The three-hub network over 24 hours.
///
/// Shape of the generated series:
/// * hub 1 (industrial): electric load ≈ 200 kW at night, ≈ 450–650 kW on
///   the day shift; process heat ≈ 350 kW at night, ≈ 600 kW by day;
/// * hub 2 (medium) and hub 3 (residential): small night loads served from
///   the grid, and daytime loads kept just below their own PV output so they
///   never import while the sun shines.
pub fn threehub(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hubs = threehub_hubs();
    let hh = 24;
    let irr: Vec<f64> = (0..hh).map(|h| irradiance(&mut rng, h)).collect();
    let mut noise = |lo: f64, hi: f64| rng.random_range(lo..hi);

    let mut demand = Vec::new();
    // hub 1
    let mut e1 = Vec::new();
    let mut t1 = Vec::new();
    for h in 0..hh {
        let day = DAYLIGHT.contains(&h);
        let shift = if day {
            let x = (h as f64 - 6.5) / 11.0 * std::f64::consts::PI;
            450.0 + 200.0 * x.sin()
        } else {
            200.0
        };
        e1.push(shift * noise(0.95, 1.05));
        t1.push(if day { 600.0 } else { 350.0 } * noise(0.95, 1.05));
    }
    demand.push(DemandSeries {
        electric: e1,
        thermal: t1,
    });

    // hubs 2 and 3: night load from the grid, daytime load under own PV
    for (k, (night_e, night_t, day_t, share)) in
        [(26.0, 20.0, 15.0, 0.93), (2.0, 4.0, 3.0, 0.95)].into_iter().enumerate()
    {
        let spec = &hubs[k + 1];
        let pv = pv_output(spec.pv.as_ref().expect("hub has pv"), &irr);
        let cop = spec.hp.as_ref().expect("hub has hp").cop;
        let mut e = Vec::new();
        let mut t = Vec::new();
        for h in 0..hh {
            if DAYLIGHT.contains(&h) {
                let th = day_t * noise(0.9, 1.1);
                t.push(th);
                e.push((share * pv[h] - th / cop) * noise(0.97, 1.0));
            } else {
                t.push(night_t * noise(0.9, 1.1));
                e.push(night_e * noise(0.85, 1.15));
            }
        }
        demand.push(DemandSeries {
            electric: e,
            thermal: t,
        });
    }

    Scenario {
        name: "threehub".into(),
        hubs,
        tariffs: paper_tariffs(),
        links: vec![link("hub1", "hub2"), link("hub1", "hub3"), link("hub2", "hub3")],
        horizon_hours: hh,
        demand,
        irradiance: vec![irr.clone(), irr.clone(), irr],
        trading_tariff_gamma: DEFAULT_GAMMA,
        admm_penalty_rho: DEFAULT_RHO,
        import_regularization_weight: 1e-6,
    }
}

fn pv_hub(id: &str, available_kw: f64) -> HubSpec {
    HubSpec {
        pv: Some(PvSpec {
            eta: 0.2,
            area_m2: available_kw / 0.2,
            p_bounds: [0.0, 2.0 * available_kw.max(1.0)],
        }),
        ..HubSpec::bare(id)
    }
}

/// One hour, two hubs: `producer` has 100 kW of PV and no load, `consumer`
/// has a 50 kW load and no assets. No regularization.
///
/// With trade `p` into the consumer the social cost is
/// `0.22·(50 − p) − 0.12·(100 − p) + 2γp²`; stationarity
/// `−0.1 + 4γp = 0` gives `p = 25` kW at γ = 0.001, with every bound
/// inactive. Then `W = 5.5 − 9 + 1.25 = −2.25` CHF against
/// `W_nt = 11 − 12 = −1` CHF.
pub fn two_hub_toy() -> Scenario {
    Scenario {
        name: "two_hub_toy".into(),
        hubs: vec![pv_hub("producer", 100.0), HubSpec::bare("consumer")],
        tariffs: paper_tariffs(),
        links: vec![link("producer", "consumer")],
        horizon_hours: 1,
        demand: vec![
            DemandSeries {
                electric: vec![0.0],
                thermal: vec![0.0],
            },
            DemandSeries {
                electric: vec![50.0],
                thermal: vec![0.0],
            },
        ],
        irradiance: vec![vec![1.0], vec![0.0]],
        trading_tariff_gamma: DEFAULT_GAMMA,
        admm_penalty_rho: DEFAULT_RHO,
        import_regularization_weight: 0.0,
    }
}

/// Two hubs that both export PV surplus in every hour: trading has no
/// value.
pub fn self_sufficient() -> Scenario {
    let hh = 4;
    Scenario {
        name: "self_sufficient".into(),
        hubs: vec![pv_hub("east", 80.0), pv_hub("west", 60.0)],
        tariffs: paper_tariffs(),
        links: vec![link("east", "west")],
        horizon_hours: hh,
        demand: vec![
            DemandSeries {
                electric: vec![30.0, 40.0, 50.0, 20.0],
                thermal: vec![0.0; hh],
            },
            DemandSeries {
                electric: vec![10.0, 25.0, 35.0, 45.0],
                thermal: vec![0.0; hh],
            },
        ],
        irradiance: vec![vec![1.0; hh]; 2],
        trading_tariff_gamma: DEFAULT_GAMMA,
        admm_penalty_rho: DEFAULT_RHO,
        import_regularization_weight: 1e-4,
    }
}

/// Two producer–consumer pairs with no link between the pairs.
pub fn disconnected() -> Scenario {
    let hh = 2;
    let consumer = |id: &str| HubSpec {
        hp: Some(HpSpec {
            cop: 4.0,
            q_bounds: [0.0, 40.0],
        }),
        ..HubSpec::bare(id)
    };
    Scenario {
        name: "disconnected".into(),
        hubs: vec![
            pv_hub("north_pv", 120.0),
            consumer("north_load"),
            pv_hub("south_pv", 90.0),
            consumer("south_load"),
        ],
        tariffs: paper_tariffs(),
        links: vec![link("north_pv", "north_load"), link("south_load", "south_pv")],
        horizon_hours: hh,
        demand: vec![
            DemandSeries {
                electric: vec![40.0, 30.0],
                thermal: vec![0.0; hh],
            },
            DemandSeries {
                electric: vec![60.0, 45.0],
                thermal: vec![20.0, 10.0],
            },
            DemandSeries {
                electric: vec![20.0, 25.0],
                thermal: vec![0.0; hh],
            },
            DemandSeries {
                electric: vec![35.0, 50.0],
                thermal: vec![8.0, 12.0],
            },
        ],
        irradiance: vec![vec![1.0; hh], vec![0.0; hh], vec![1.0; hh], vec![0.0; hh]],
        trading_tariff_gamma: DEFAULT_GAMMA,
        admm_penalty_rho: DEFAULT_RHO,
        import_regularization_weight: 1e-4,
    }
}
