//! Synthetic drilling telemetry with the nine-channel layout.
//!
//! A well alternates between on-bottom drilling stretches (hole depth rising,
//! bit on bottom) and connections where the bit is lifted and the pumps
//! slow down. Input channels follow a slowly varying formation state plus
//! AR(1) noise; the mud-volume target responds to smoothed pump output and
//! weight on bit.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::ingest::{forge_channels, Channel, ChannelRole, WellSeries, BIT_DEPTH, HOLE_DEPTH};
use crate::rng::{derive_seed, rng_from, Rng};

#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticTarget {
    /// The mud-volume model described in the module docs.
    MudVolume,
    /// The target is an exact copy of the named input channel.
    CopyOf(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWell {
    pub samples: usize,
    pub start_depth: f64,
    /// Inclusive range of drilling stretch lengths, in samples.
    pub drilling: (usize, usize),
    /// Inclusive range of connection lengths, in samples.
    pub connection: (usize, usize),
    /// Probability that any input reading is missing.
    pub missing_rate: f64,
    pub target: SyntheticTarget,
}

impl Default for SyntheticWell {
    fn default() -> Self {
        Self {
            samples: 50_000,
            start_depth: 1500.0,
            drilling: (3000, 9000),
            connection: (150, 600),
            missing_rate: 0.0005,
            target: SyntheticTarget::MudVolume,
        }
    }
}

struct Ar1 {
    value: f64,
    phi: f64,
    noise: Normal<f64>,
}

impl Ar1 {
    fn new(phi: f64, sd: f64) -> Self {
        Self {
            value: 0.0,
            phi,
            noise: Normal::new(0.0, sd).expect("finite sd"),
        }
    }

    fn step(&mut self, rng: &mut Rng) -> f64 {
        self.value = self.phi * self.value + self.noise.sample(rng);
        self.value
    }
}

/// Generates one well. The same `(id, cfg, seed)` always yields the same series.
pub fn generate(well_id: &str, cfg: &SyntheticWell, seed: u64) -> WellSeries {
    let mut rng = rng_from(derive_seed(seed, well_id));
    let n = cfg.samples;
    let specs = forge_channels();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); specs.len()];

    let mut formation = Ar1::new(0.9995, 0.01);
    let mut wob_n = Ar1::new(0.98, 0.4);
    let mut rop_n = Ar1::new(0.97, 0.8);
    let mut pump_n = Ar1::new(0.99, 8.0);
    let mut misc_n = Ar1::new(0.95, 1.0);
    let white = Normal::<f64>::new(0.0, 1.0).expect("unit normal");

    let mut depth = cfg.start_depth;
    let mut drilling = true;
    let mut remaining = rng.gen_range(cfg.drilling.0..=cfg.drilling.1);
    let mut lift = 0.0f64;
    let (mut pump_ema, mut wob_ema) = (0.0f64, 0.0f64);

    for t in 0..n {
        if remaining == 0 {
            drilling = !drilling;
            remaining = if drilling {
                rng.gen_range(cfg.drilling.0..=cfg.drilling.1)
            } else {
                rng.gen_range(cfg.connection.0..=cfg.connection.1)
            };
        }
        remaining -= 1;
        let hardness = 0.5 + 0.5 * formation.step(&mut rng).tanh();
        let (wob, rop, pump);
        if drilling {
            lift = (lift - 0.2).max(0.0);
            wob = 12.0 + 8.0 * hardness + wob_n.step(&mut rng);
            rop = (25.0 - 12.0 * hardness + 0.3 * wob_n.value + rop_n.step(&mut rng)).max(0.5);
            pump = 2100.0 + 150.0 * hardness + pump_n.step(&mut rng);
        } else {
            lift = (lift + 0.1).min(12.0);
            wob = 0.3 * white.sample(&mut rng).abs();
            rop = 0.0;
            pump = (600.0 + pump_n.step(&mut rng)).max(0.0);
        }
        let on_bottom = lift == 0.0;
        if drilling && on_bottom {
            depth += rop / 3600.0;
        }
        let bit = if on_bottom { depth } else { depth - lift };
        pump_ema += (pump - pump_ema) * 0.01;
        wob_ema += (wob - wob_ema) * 0.01;
        let mud = 320.0
            + 0.04 * (pump_ema - 1500.0)
            + 1.5 * wob_ema
            + 6.0 * (t as f64 / 4000.0).sin()
            + 0.3 * white.sample(&mut rng);
        let rpm = if drilling { 90.0 + 10.0 * hardness + misc_n.step(&mut rng) } else { 5.0 };
        let torque = if drilling { 8.0 + 0.4 * wob + 0.5 * misc_n.value } else { 0.5 };
        let spp = 0.9 * pump + 40.0 * white.sample(&mut rng);

        for (k, spec) in specs.iter().enumerate() {
            let v = match spec.name.as_str() {
                "WOB" => wob,
                "ROP" => rop,
                "Total Pump Output" => pump,
                HOLE_DEPTH => depth,
                BIT_DEPTH => bit,
                "Rotary RPM" => rpm,
                "Rotary Torque" => torque,
                "Standpipe Pressure" => spp,
                _ => mud,
            };
            cols[k].push(v);
        }
    }

    // Missing readings on model inputs, except depth channels which drive
    // segmentation directly and are left mostly intact.
    for (k, spec) in specs.iter().enumerate() {
        if spec.role != ChannelRole::Input {
            continue;
        }
        let rate = if spec.name == HOLE_DEPTH || spec.name == BIT_DEPTH {
            cfg.missing_rate * 0.1
        } else {
            cfg.missing_rate
        };
        for v in cols[k].iter_mut() {
            if rng.gen::<f64>() < rate {
                *v = f64::NAN;
            }
        }
    }
    if let SyntheticTarget::CopyOf(name) = &cfg.target {
        let src = specs.iter().position(|s| &s.name == name).expect("known input channel");
        let dst = specs
            .iter()
            .position(|s| s.role == ChannelRole::Target)
            .expect("one target channel");
        cols[dst] = cols[src].clone();
    }

    let channels = specs
        .into_iter()
        .zip(cols)
        .map(|(spec, values)| Channel { spec, values })
        .collect();
    WellSeries::new(well_id, channels).expect("consistent synthetic series")
}

/// The bundled two-well dataset: wells `58-32` and `16A-78` (names follow
/// the FORGE wells), `samples` rows each.
pub fn two_well_dataset(samples: usize, target: SyntheticTarget, seed: u64) -> Vec<WellSeries> {
    let cfg = SyntheticWell {
        samples,
        target,
        ..SyntheticWell::default()
    };
    ["16A-78", "58-32"]
        .iter()
        .map(|id| generate(id, &cfg, seed))
        .collect()
}
