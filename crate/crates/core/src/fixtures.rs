//! Bundled desk-scale example networks.
//!
//! Constructed in code so tests, benches, and the CLI demos share one
//! source. `ieee57_shaped` mirrors the 57-bus/80-branch/7-generator shape
//! of the classic IEEE 57 system with deterministic synthetic parameters.

use crate::network::{Branch, BranchKind, Bus, BusKind, CostCurve, Generator, Load, Network};

fn bus(id: usize, kind: BusKind) -> Bus {
    Bus {
        id,
        v_min: 0.94,
        v_max: 1.06,
        kind,
        shunt_g: 0.0,
        shunt_b: 0.0,
    }
}

fn line(from: usize, to: usize, r: f64, x: f64, b_charge: f64, s_max: f64) -> Branch {
    Branch {
        from,
        to,
        r,
        x,
        b_charge,
        tap: 1.0,
        shift: 0.0,
        s_max,
        theta_min: -0.6,
        theta_max: 0.6,
        kind: BranchKind::AcLine,
    }
}

fn gen(id: usize, bus: usize, p_min: f64, p_max: f64, q_min: f64, q_max: f64, cost: [f64; 3]) -> Generator {
    Generator {
        id,
        bus,
        p_min,
        p_max,
        q_min,
        q_max,
        cost: CostCurve {
            c2: cost[0],
            c1: cost[1],
            c0: cost[2],
        },
    }
}

/// Lossless 2-bus case: one generator (c1 = 1), one 1.0 p.u. load, one
/// x = 0.1 line with ample rating.
pub fn two_bus() -> Network {
    Network::new(
        100.0,
        vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
        vec![line(1, 2, 0.0, 0.1, 0.0, 5.0)],
        vec![gen(1, 1, 0.0, 2.0, -1.5, 1.5, [0.0, 1.0, 0.0])],
        vec![Load {
            bus: 2,
            p_d: 1.0,
            q_d: 0.0,
        }],
    )
    .expect("fixture is valid")
}

/// Lossy 2-bus case with reactive demand; its DC warm start is visibly
/// AC-infeasible.
pub fn two_bus_lossy() -> Network {
    Network::new(
        100.0,
        vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
        vec![line(1, 2, 0.05, 0.1, 0.02, 5.0)],
        vec![gen(1, 1, 0.0, 2.0, -1.5, 1.5, [0.0, 1.0, 0.0])],
        vec![Load {
            bus: 2,
            p_d: 1.0,
            q_d: 0.3,
        }],
    )
    .expect("fixture is valid")
}

/// Weak 2-bus case (x = 1.0) used for loadability/nose-point checks.
pub fn weak_two_bus(p_d: f64) -> Network {
    Network::new(
        100.0,
        vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
        vec![line(1, 2, 0.0, 1.0, 0.0, 50.0)],
        vec![gen(1, 1, 0.0, 20.0, -10.0, 10.0, [0.0, 1.0, 0.0])],
        vec![Load {
            bus: 2,
            p_d,
            q_d: 0.0,
        }],
    )
    .expect("fixture is valid")
}

/// Single-bus copper plate with two generators for merit-order tests.
pub fn copper_plate() -> Network {
    Network::new(
        100.0,
        vec![bus(1, BusKind::Slack)],
        vec![],
        vec![
            gen(1, 1, 0.0, 1.0, -1.0, 1.0, [0.0, 1.0, 0.0]),
            gen(2, 1, 0.0, 1.0, -1.0, 1.0, [0.0, 2.0, 0.0]),
        ],
        vec![Load {
            bus: 1,
            p_d: 1.0,
            q_d: 0.0,
        }],
    )
    .expect("fixture is valid")
}

/// 3-bus triangle, all x = 0.1, ample ratings.
pub fn triangle3() -> Network {
    Network::new(
        100.0,
        vec![bus(1, BusKind::Slack), bus(2, BusKind::Pv), bus(3, BusKind::Pq)],
        vec![
            line(1, 2, 0.01, 0.1, 0.0, 5.0),
            line(1, 3, 0.01, 0.1, 0.0, 5.0),
            line(2, 3, 0.01, 0.1, 0.0, 5.0),
        ],
        vec![
            gen(1, 1, 0.0, 2.5, -1.5, 1.5, [0.0, 10.0, 0.0]),
            gen(2, 2, 0.0, 2.0, -1.5, 1.5, [0.0, 20.0, 0.0]),
        ],
        vec![Load {
            bus: 3,
            p_d: 1.5,
            q_d: 0.4,
        }],
    )
    .expect("fixture is valid")
}

/// 3-bus triangle where the cheap generator is throttled by the 0.5 p.u.
/// rating of line 1-3, forcing redispatch onto the expensive unit.
pub fn line_limit3() -> Network {
    Network::new(
        100.0,
        vec![bus(1, BusKind::Slack), bus(2, BusKind::Pv), bus(3, BusKind::Pq)],
        vec![
            line(1, 2, 0.01, 0.1, 0.0, 5.0),
            line(1, 3, 0.01, 0.1, 0.0, 0.5),
            line(2, 3, 0.01, 0.1, 0.0, 5.0),
        ],
        vec![
            gen(1, 1, 0.0, 2.5, -1.5, 1.5, [0.0, 5.0, 0.0]),
            gen(2, 2, 0.0, 2.0, -1.5, 1.5, [0.0, 15.0, 0.0]),
        ],
        vec![Load {
            bus: 3,
            p_d: 1.2,
            q_d: 0.3,
        }],
    )
    .expect("fixture is valid")
}

/// 2-bus case with strictly quadratic costs on both units.
pub fn quad_cost2() -> Network {
    Network::new(
        100.0,
        vec![bus(1, BusKind::Slack), bus(2, BusKind::Pv)],
        vec![line(1, 2, 0.01, 0.1, 0.0, 5.0)],
        vec![
            gen(1, 1, 0.0, 2.0, -1.5, 1.5, [2.0, 10.0, 0.0]),
            gen(2, 2, 0.0, 2.0, -1.5, 1.5, [4.0, 10.0, 0.0]),
        ],
        vec![Load {
            bus: 2,
            p_d: 1.0,
            q_d: 0.2,
        }],
    )
    .expect("fixture is valid")
}

/// 6-bus system (3 units, 3 loads, 11 lines) used by the training and
/// data-generation suites.
pub fn six_bus() -> Network {
    Network::new(
        100.0,
        vec![
            bus(1, BusKind::Slack),
            bus(2, BusKind::Pv),
            bus(3, BusKind::Pv),
            bus(4, BusKind::Pq),
            bus(5, BusKind::Pq),
            bus(6, BusKind::Pq),
        ],
        vec![
            line(1, 2, 0.10, 0.20, 0.04, 1.5),
            line(1, 4, 0.05, 0.20, 0.04, 1.5),
            line(1, 5, 0.08, 0.30, 0.06, 1.5),
            line(2, 3, 0.05, 0.25, 0.06, 1.5),
            line(2, 4, 0.05, 0.10, 0.02, 1.5),
            line(2, 5, 0.10, 0.30, 0.04, 1.5),
            line(2, 6, 0.07, 0.20, 0.05, 1.5),
            line(3, 5, 0.12, 0.26, 0.05, 1.5),
            line(3, 6, 0.02, 0.10, 0.02, 1.5),
            line(4, 5, 0.20, 0.40, 0.08, 1.2),
            line(5, 6, 0.10, 0.30, 0.06, 1.2),
        ],
        vec![
            gen(1, 1, 0.3, 2.0, -1.0, 1.5, [1.0, 10.0, 0.0]),
            gen(2, 2, 0.3, 1.5, -1.0, 1.5, [2.0, 11.0, 0.0]),
            gen(3, 3, 0.3, 1.8, -1.0, 1.5, [1.5, 12.0, 0.0]),
        ],
        vec![
            Load {
                bus: 4,
                p_d: 0.7,
                q_d: 0.25,
            },
            Load {
                bus: 5,
                p_d: 0.7,
                q_d: 0.25,
            },
            Load {
                bus: 6,
                p_d: 0.7,
                q_d: 0.25,
            },
        ],
    )
    .expect("fixture is valid")
}

/// 57-bus / 80-branch / 7-generator network shaped like the IEEE 57
/// system (same element counts, generator placement, and slack bus) with
/// deterministic synthetic impedances and loads.
pub fn ieee57_shaped() -> Network {
    let gen_buses = [1usize, 2, 3, 6, 8, 9, 12];
    let mut buses = Vec::with_capacity(57);
    for id in 1..=57 {
        let kind = if id == 1 {
            BusKind::Slack
        } else if gen_buses.contains(&id) {
            BusKind::Pv
        } else {
            BusKind::Pq
        };
        let mut b = bus(id, kind);
        if id % 13 == 0 {
            b.shunt_b = 0.04; // a few capacitor banks
        }
        buses.push(b);
    }

    // ring backbone (57 branches) + 20 chords + 3 transformers = 80
    let mut branches = Vec::with_capacity(80);
    for i in 1..=57 {
        let j = if i == 57 { 1 } else { i + 1 };
        let r = 0.010 + 0.002 * ((i % 5) as f64);
        let x = 0.050 + 0.010 * ((i % 7) as f64);
        let bc = 0.010 + 0.002 * ((i % 3) as f64);
        branches.push(line(i, j, r, x, bc, 2.0));
    }
    let chords = [
        (1, 15),
        (1, 29),
        (2, 44),
        (3, 20),
        (4, 18),
        (5, 32),
        (6, 25),
        (7, 50),
        (8, 22),
        (9, 38),
        (10, 51),
        (11, 41),
        (12, 33),
        (13, 49),
        (14, 46),
        (16, 35),
        (17, 53),
        (19, 40),
        (21, 55),
        (23, 47),
    ];
    for (k, &(i, j)) in chords.iter().enumerate() {
        let r = 0.012 + 0.002 * ((k % 4) as f64);
        let x = 0.060 + 0.012 * ((k % 6) as f64);
        branches.push(line(i, j, r, x, 0.012, 1.8));
    }
    for (k, &(i, j, tap, shift)) in [
        (24, 56, 0.98, 0.00),
        (26, 54, 1.02, 0.02),
        (28, 52, 0.97, 0.00),
    ]
    .iter()
    .enumerate()
    {
        branches.push(Branch {
            from: i,
            to: j,
            r: 0.008 + 0.002 * (k as f64),
            x: 0.080 + 0.010 * (k as f64),
            b_charge: 0.0,
            tap,
            shift,
            s_max: 1.5,
            theta_min: -0.6,
            theta_max: 0.6,
            kind: BranchKind::Transformer,
        });
    }

    let generators = vec![
        gen(1, 1, 0.2, 3.0, -1.5, 2.0, [0.8, 10.0, 0.0]),
        gen(2, 2, 0.1, 1.5, -0.8, 1.0, [1.2, 12.0, 0.0]),
        gen(3, 3, 0.1, 1.8, -0.8, 1.2, [1.0, 11.0, 0.0]),
        gen(4, 6, 0.1, 1.2, -0.6, 0.9, [1.5, 13.0, 0.0]),
        gen(5, 8, 0.2, 2.2, -1.0, 1.5, [0.9, 10.5, 0.0]),
        gen(6, 9, 0.1, 1.4, -0.7, 1.0, [1.3, 12.5, 0.0]),
        gen(7, 12, 0.1, 1.6, -0.8, 1.1, [1.1, 11.5, 0.0]),
    ];

    // 30 loads spread over non-generator buses, total about 4.3 p.u.
    let mut loads = Vec::new();
    for k in 0..30 {
        let id = 4 + (k * 7 + k / 3) % 54;
        let id = if gen_buses.contains(&id) { id + 1 } else { id };
        loads.push(Load {
            bus: ((id - 1) % 57) + 1,
            p_d: 0.08 + 0.04 * ((k % 5) as f64) / 4.0,
            q_d: 0.03 + 0.02 * ((k % 3) as f64) / 2.0,
        });
    }

    Network::new(100.0, buses, branches, generators, loads).expect("fixture is valid")
}
