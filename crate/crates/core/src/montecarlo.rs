//! Monte Carlo loading of a dipole trap from a thermal cloud and the
//! subsequent loss and heating of the trapped atoms.
//!
//! The state of each atom is its total energy (kinetic + potential, zero at
//! the edge of the trap). Atoms are independent. Atom `i` draws its loading
//! sample from ChaCha8 stream `2i` and its dynamics from stream `2i + 1`
//! under the scenario seed, so results do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::KB;
use crate::error::{non_negative, positive, Error, Result};
use crate::optics::Vec3;
use crate::species::AtomSpecies;
use crate::trapfield::TrapSite;

/// Identifies the generator and stream layout in output metadata.
pub const PRNG_DESCRIPTION: &str =
    "ChaCha8 (rand_chacha 0.9) seed_from_u64(seed); atom i: stream 2i loading, stream 2i+1 dynamics";

pub const DEFAULT_TIME_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McScenario {
    pub seed: u64,
    pub atom_count: usize,
    /// K
    pub cloud_temperature: f64,
    /// Gaussian rms radius per axis (m)
    pub cloud_radius: f64,
    /// 1/s
    pub background_loss_rate: f64,
    pub include_recoil_heating: bool,
    /// s
    pub duration: f64,
    /// s, increasing, within [0, duration]
    pub sample_times: Vec<f64>,
    /// heating step (s)
    pub time_step: f64,
}

impl McScenario {
    pub fn validate(&self) -> Result<()> {
        if self.atom_count == 0 {
            return Err(Error::invalid("atom_count", 0.0, "must be >= 1"));
        }
        positive("cloud_temperature", self.cloud_temperature)?;
        non_negative("cloud_radius", self.cloud_radius)?;
        non_negative("background_loss_rate", self.background_loss_rate)?;
        non_negative("duration", self.duration)?;
        positive("time_step", self.time_step)?;
        for w in self.sample_times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("sample_times", w[1], "must be strictly increasing"));
            }
        }
        for &t in &self.sample_times {
            if !(t >= 0.0 && t <= self.duration) {
                return Err(Error::invalid("sample_times", t, "must lie within [0, duration]"));
            }
        }
        Ok(())
    }

    /// `n` evenly spaced sample times from 0 to `duration` inclusive.
    pub fn even_samples(duration: f64, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![0.0],
            _ => (0..n).map(|k| duration * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

fn atom_rng(seed: u64, atom: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * atom as u64 + purpose);
    rng
}

fn normal3<R: Rng>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// A trapped atom after loading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadedAtom {
    pub index: usize,
    /// total energy (J), negative while bound
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome {
    pub atoms: Vec<LoadedAtom>,
    pub loaded_fraction: f64,
}

/// Samples the cloud and keeps the atoms whose total energy is below the trap
/// edge.
pub fn load(scenario: &McScenario, site: &TrapSite, species: &AtomSpecies) -> Result<LoadOutcome> {
    scenario.validate()?;
    if site.depth == 0.0 {
        return Ok(LoadOutcome {
            atoms: Vec::new(),
            loaded_fraction: 0.0,
        });
    }
    if !site.trapped {
        return Err(Error::Untrapped(format!("at {:?}", site.position.as_slice())));
    }
    let sigma_v = (KB * scenario.cloud_temperature / species.mass).sqrt();
    let half_m = 0.5 * species.mass;
    let candidates: Vec<Option<LoadedAtom>> = (0..scenario.atom_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = atom_rng(scenario.seed, i, 0);
            let position = site.position + normal3(&mut rng) * scenario.cloud_radius;
            let velocity = normal3(&mut rng) * sigma_v;
            let energy = half_m * velocity.norm_squared() + site.potential_at(&position);
            (energy < 0.0).then_some(LoadedAtom { index: i, energy })
        })
        .collect();
    let atoms: Vec<LoadedAtom> = candidates.into_iter().flatten().collect();
    let loaded_fraction = atoms.len() as f64 / scenario.atom_count as f64;
    Ok(LoadOutcome { atoms, loaded_fraction })
}

struct Trajectory {
    /// s; infinite if the atom survives the run
    loss_time: f64,
    /// energy at each sample time while still trapped
    energies: Vec<Option<f64>>,
}

fn evolve_atom(
    atom: &LoadedAtom,
    site: &TrapSite,
    species: &AtomSpecies,
    scenario: &McScenario,
    sample_steps: &[u64],
    total_steps: u64,
) -> Trajectory {
    let mut rng = atom_rng(scenario.seed, atom.index, 1);
    let background = if scenario.background_loss_rate > 0.0 {
        Exp::new(scenario.background_loss_rate).unwrap().sample(&mut rng)
    } else {
        f64::INFINITY
    };
    let dt = scenario.time_step;
    let heating = if scenario.include_recoil_heating && site.scattering_rate > 0.0 {
        Some(Poisson::new(site.scattering_rate * dt).unwrap())
    } else {
        None
    };
    let kick = 2.0 * species.recoil_energy();

    let mut energy = atom.energy;
    let mut heated_out = f64::INFINITY;
    let mut energies = Vec::with_capacity(sample_steps.len());
    let mut next = 0;
    for step in 0..=total_steps {
        while next < sample_steps.len() && sample_steps[next] == step {
            energies.push(Some(energy));
            next += 1;
        }
        if step == total_steps {
            break;
        }
        let Some(events) = heating.as_ref() else {
            // no dynamics beyond background loss: energy is constant
            while next < sample_steps.len() {
                energies.push(Some(energy));
                next += 1;
            }
            break;
        };
        let end = (step + 1) as f64 * dt;
        let n: f64 = events.sample(&mut rng);
        energy += kick * n;
        if energy > 0.0 {
            heated_out = end;
            break;
        }
        if end > background {
            break;
        }
    }
    let loss_time = background.min(heated_out);
    // samples at or after the loss are empty
    let energies = sample_steps
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let t = s as f64 * dt;
            if t >= loss_time {
                None
            } else {
                energies.get(j).copied().flatten()
            }
        })
        .collect();
    Trajectory { loss_time, energies }
}

/// Survival statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub loaded_fraction: f64,
    pub loaded_count: usize,
    /// (time s, atoms still trapped)
    pub survival_counts: Vec<(f64, usize)>,
    /// (time s, mean total energy of the trapped atoms, J)
    pub mean_energy: Vec<(f64, Option<f64>)>,
    pub fitted_lifetime: Option<f64>,
    pub fitted_lifetime_stderr: Option<f64>,
    /// why no lifetime was fitted, if none was
    pub fit_note: Option<String>,
    pub prng: String,
}

impl McResult {
    /// `time_s,count`
    pub fn survival_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "count"]).unwrap();
        for (t, n) in &self.survival_counts {
            w.write_record(&[t.to_string(), n.to_string()]).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Evolves loaded atoms through background loss and, optionally, recoil
/// heating at the site's photon scattering rate. Survival counts at the
/// sample times are fitted with [`fit_exponential`] when possible.
pub fn evolve(
    atoms: &[LoadedAtom],
    site: &TrapSite,
    species: &AtomSpecies,
    scenario: &McScenario,
) -> Result<McResult> {
    scenario.validate()?;
    let dt = scenario.time_step;
    let total_steps = (scenario.duration / dt - 1e-9).ceil().max(0.0) as u64;
    let sample_steps: Vec<u64> = scenario
        .sample_times
        .iter()
        .map(|t| ((t / dt + 1e-9).floor() as u64).min(total_steps))
        .collect();

    let trajectories: Vec<Trajectory> = atoms
        .par_iter()
        .map(|a| evolve_atom(a, site, species, scenario, &sample_steps, total_steps))
        .collect();

    let survival_counts: Vec<(f64, usize)> = scenario
        .sample_times
        .iter()
        .map(|&t| (t, trajectories.iter().filter(|tr| tr.loss_time > t).count()))
        .collect();
    let mean_energy = scenario
        .sample_times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let (sum, n) = trajectories
                .iter()
                .filter(|tr| tr.loss_time > t)
                .filter_map(|tr| tr.energies[j])
                .fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
            (t, (n > 0).then(|| sum / n as f64))
        })
        .collect();

    let points: Vec<(f64, f64)> = survival_counts
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|&(t, n)| (t, n as f64))
        .collect();
    let (fitted_lifetime, fitted_lifetime_stderr, fit_note) = match fit_exponential(&points) {
        Ok(fit) => (Some(fit.lifetime), Some(fit.stderr), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(McResult {
        loaded_fraction: 0.0,
        loaded_count: atoms.len(),
        survival_counts,
        mean_energy,
        fitted_lifetime,
        fitted_lifetime_stderr,
        fit_note,
        prng: PRNG_DESCRIPTION.to_string(),
    })
}

/// Load, evolve, and fit in one call.
pub fn simulate(scenario: &McScenario, site: &TrapSite, species: &AtomSpecies) -> Result<McResult> {
    let loaded = load(scenario, site, species)?;
    let mut result = evolve(&loaded.atoms, site, species, scenario)?;
    result.loaded_fraction = loaded.loaded_fraction;
    Ok(result)
}

/// Result of a single-exponential decay fit N(t) = A·exp(−t/τ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    /// τ (s)
    pub lifetime: f64,
    pub stderr: f64,
    /// A
    pub amplitude: f64,
}

/// Weighted linear least squares on ln N with weights N (the inverse
/// variance of ln N for Poisson counts). The standard error follows from the
/// same weights.
pub fn fit_exponential(survival_counts: &[(f64, f64)]) -> Result<ExpFit> {
    if survival_counts.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            survival_counts.len()
        )));
    }
    for &(t, n) in survival_counts {
        if !t.is_finite() || !n.is_finite() || n <= 0.0 {
            return Err(Error::DegenerateFit(format!("nonpositive or non-finite point ({t}, {n})")));
        }
    }
    let first = survival_counts[0].1;
    if survival_counts.iter().all(|&(_, n)| n == first) {
        return Err(Error::DegenerateFit("all counts are equal; no decay to fit".into()));
    }
    let sw: f64 = survival_counts.iter().map(|p| p.1).sum();
    let t_mean = survival_counts.iter().map(|&(t, n)| n * t).sum::<f64>() / sw;
    let y_mean = survival_counts.iter().map(|&(_, n)| n * n.ln()).sum::<f64>() / sw;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for &(t, n) in survival_counts {
        let dt = t - t_mean;
        stt += n * dt * dt;
        sty += n * dt * (n.ln() - y_mean);
    }
    if !(stt > 0.0) {
        return Err(Error::DegenerateFit("sample times do not vary".into()));
    }
    let slope = sty / stt;
    if !(slope < 0.0) {
        return Err(Error::DegenerateFit(format!("counts do not decay (slope {slope:.3e} /s)")));
    }
    let slope_err = (1.0 / stt).sqrt();
    let lifetime = -1.0 / slope;
    Ok(ExpFit {
        lifetime,
        stderr: slope_err / (slope * slope),
        amplitude: (y_mean - slope * t_mean).exp(),
    })
}

/// Thermal rms speed per axis, √(k_B T / m).
pub fn thermal_velocity(species: &AtomSpecies, temperature: f64) -> f64 {
    (KB * temperature / species.mass).sqrt()
}

/// Expected heating power 2·E_rec·Γ_sc of the recoil model (J/s).
pub fn recoil_heating_rate(site: &TrapSite, species: &AtomSpecies) -> f64 {
    2.0 * species.recoil_energy() * site.scattering_rate
}

/// Mean kinetic energy 3/2 k_B T of a cloud, for reference.
pub fn mean_thermal_energy(temperature: f64) -> f64 {
    1.5 * KB * temperature
}
