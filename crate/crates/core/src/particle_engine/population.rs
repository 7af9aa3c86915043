use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ensemble::{ExitEnsemble, ParticleEnsemble};
use super::rates::ParticleRates;
use crate::error::{domain, Error, Result};
use crate::kernels::bridge_min_prob;

pub const DEFAULT_PARTICLE_CAP: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierMode {
    /// Particles hitting the barrier are removed and recorded as side atoms.
    Absorb,
    /// Particles hitting the barrier are recorded as side atoms but keep evolving
    /// as ghosts, so the free process and its exit measure come from one run.
    Mark,
}

/// Barrier at `-y` in the frame drifting with speed `lambda0`, i.e. at
/// `-y - lambda0 s` in the un-drifted frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub y: f64,
    pub lambda0: f64,
    pub mode: BarrierMode,
}

impl Barrier {
    pub fn level(&self, s: f64) -> f64 {
        -self.y - self.lambda0 * s
    }
}

/// Mean-field closure for the far right of the population.
///
/// Particles whose drifted-frame position exceeds a moving threshold are folded
/// into a deterministic density grid that evolves by the mean semigroup
/// (heat flow times `e^{alpha s}`); grid mass drifting back below the threshold
/// is re-sampled into Poisson numbers of particles. The threshold is moved to
/// keep roughly `target_particles` particles in the exact zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FarFieldConfig {
    pub target_particles: usize,
    pub cell: f64,
    pub sync_dt: f64,
    pub hysteresis: f64,
    pub barrier_margin: f64,
    pub tail_cut: f64,
}

impl Default for FarFieldConfig {
    fn default() -> Self {
        Self {
            target_particles: 1000,
            cell: 0.1,
            sync_dt: 0.1,
            hysteresis: 0.5,
            barrier_margin: 2.0,
            tail_cut: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Particle {
    x: f64,
    t: f64,
    clock: f64,
    alive: bool,
    ghost: bool,
}

#[derive(Debug, Clone)]
struct FarField {
    cfg: FarFieldConfig,
    lambda0: f64,
    growth: f64,
    j0: i64,
    cells: Vec<f64>,
    threshold: Option<f64>,
    last_sync: f64,
    dropped: f64,
    kernel: Option<(f64, Vec<f64>)>,
}

impl FarField {
    fn center(&self, k: usize) -> f64 {
        (self.j0 + k as i64) as f64 * self.cfg.cell
    }

    fn mass(&self) -> f64 {
        self.cells.iter().sum()
    }

    fn add(&mut self, j: i64, m: f64) {
        if self.cells.is_empty() {
            self.j0 = j;
            self.cells.push(m);
            return;
        }
        if j < self.j0 {
            let pad = (self.j0 - j) as usize;
            let mut grown = vec![0.0; pad];
            grown.append(&mut self.cells);
            self.cells = grown;
            self.j0 = j;
        }
        let k = (j - self.j0) as usize;
        if k >= self.cells.len() {
            self.cells.resize(k + 1, 0.0);
        }
        self.cells[k] += m;
    }

    /// Cloud-in-cell deposit at un-drifted position `x`.
    fn deposit(&mut self, x: f64, m: f64) {
        let f = x / self.cfg.cell;
        let j = f.floor();
        let w = f - j;
        let j = j as i64;
        self.add(j, (1.0 - w) * m);
        if w > 0.0 {
            self.add(j + 1, w * m);
        }
    }

    fn evolve(&mut self, delta: f64) {
        if delta <= 0.0 {
            return;
        }
        let growth = (self.growth * delta).exp();
        self.dropped *= growth;
        if self.cells.is_empty() {
            return;
        }
        let h = self.cfg.cell;
        let stale = self.kernel.as_ref().is_none_or(|(d, _)| (*d - delta).abs() > 1e-12 * delta);
        if stale {
            let half = (8.0 * delta.sqrt() / h).ceil() as i64;
            let mut w: Vec<f64> = (-half..=half)
                .map(|k| {
                    let z = k as f64 * h;
                    (-z * z / (2.0 * delta)).exp()
                })
                .collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v *= growth / s);
            self.kernel = Some((delta, w));
        }
        let kernel = &self.kernel.as_ref().expect("kernel built above").1;
        let half = kernel.len() / 2;
        let mut out = vec![0.0; self.cells.len() + 2 * half];
        for (k, &m) in self.cells.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (o, &w) in out[k..k + kernel.len()].iter_mut().zip(kernel) {
                *o += m * w;
            }
        }
        self.cells = out;
        self.j0 -= half as i64;
    }

    fn trim(&mut self, s: f64, mass_unit: f64) {
        let total_weight: f64 = (0..self.cells.len())
            .map(|k| self.weight(k, s))
            .sum();
        let floor = self.cfg.tail_cut * total_weight;
        let keep_from = self.threshold.unwrap_or(f64::NEG_INFINITY) + 10.0;
        while let Some(&m) = self.cells.last() {
            let k = self.cells.len() - 1;
            let x = self.center(k) + self.lambda0 * s;
            if m == 0.0 || (x > keep_from && self.weight(k, s) < floor) {
                self.dropped += m;
                self.cells.pop();
            } else {
                break;
            }
        }
        let lead = self.cells.iter().take_while(|&&m| m < 1e-300 * mass_unit).count();
        if lead > 0 {
            self.cells.drain(..lead);
            self.j0 += lead as i64;
        }
    }

    fn weight(&self, k: usize, s: f64) -> f64 {
        let x = self.center(k) + self.lambda0 * s;
        self.cells[k] * (1.0 + x.abs()) * (-self.lambda0 * x).exp()
    }
}

/// Mass-`1/N` branching Brownian particle system approximating a superprocess.
///
/// Every particle carries its own exponential event clock; positions are only
/// sampled at event times and at observation times, so the law on any finite
/// set of times is exact for the particle system. Barrier crossings between
/// samples are detected with the Brownian-bridge crossing probability, which
/// is exact for a linear barrier.
#[derive(Debug, Clone)]
pub struct Population {
    rates: ParticleRates,
    thresholds: Vec<(f64, u32)>,
    death_cut: f64,
    total_rate: f64,
    mass: f64,
    particles: Vec<Particle>,
    live: usize,
    now: f64,
    barrier: Option<Barrier>,
    side: Vec<(f64, f64)>,
    far: Option<FarField>,
    cap: usize,
    pending: Vec<(f64, f64, usize)>,
    pending_sorted: bool,
}

impl Population {
    pub fn new(rates: ParticleRates) -> Self {
        let mut thresholds = Vec::new();
        let mut acc = rates.binary_rate;
        let death_cut = rates.binary_rate * rates.q0;
        thresholds.push((acc, 1));
        for j in &rates.jumps {
            acc += j.rate;
            thresholds.push((acc, j.offspring - 1));
        }
        let total_rate = acc;
        let mass = rates.mass();
        Self {
            rates,
            thresholds,
            death_cut,
            total_rate,
            mass,
            particles: Vec::new(),
            live: 0,
            now: 0.0,
            barrier: None,
            side: Vec::new(),
            far: None,
            cap: DEFAULT_PARTICLE_CAP,
            pending: Vec::new(),
            pending_sorted: true,
        }
    }

    pub fn with_barrier(mut self, barrier: Barrier) -> Result<Self> {
        if !(barrier.y > 0.0) {
            return Err(domain(format!("barrier depth y = {} must be positive", barrier.y)));
        }
        if barrier.mode == BarrierMode::Mark && self.far.is_some() {
            return Err(domain("ghost barrier mode cannot be combined with the far-field closure"));
        }
        self.barrier = Some(barrier);
        Ok(self)
    }

    /// Enables the far-field closure. `lambda0` sets the frame in which the
    /// threshold is placed; the grid grows at the particle system's drift.
    pub fn with_far_field(mut self, cfg: FarFieldConfig, lambda0: f64) -> Result<Self> {
        if cfg.target_particles < 10 || !(cfg.cell > 0.0) || !(cfg.sync_dt > 0.0) {
            return Err(domain("far-field closure needs target >= 10, positive cell and sync step"));
        }
        if (cfg.sync_dt.sqrt() / cfg.cell) < 1.0 {
            return Err(domain("far-field cell must not exceed the diffusion length of one sync step"));
        }
        if self.barrier.is_some_and(|b| b.mode == BarrierMode::Mark) {
            return Err(domain("ghost barrier mode cannot be combined with the far-field closure"));
        }
        self.far = Some(FarField {
            cfg,
            lambda0,
            growth: self.rates.drift(),
            j0: 0,
            cells: Vec::new(),
            threshold: None,
            last_sync: self.now,
            dropped: 0.0,
            kernel: None,
        });
        Ok(self)
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn rates(&self) -> &ParticleRates {
        &self.rates
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn particle_count(&self) -> usize {
        self.live
    }

    pub fn mass_unit(&self) -> f64 {
        self.mass
    }

    pub fn far_field_active(&self) -> bool {
        self.far.as_ref().is_some_and(|f| f.threshold.is_some())
    }

    pub fn total_mass(&self) -> f64 {
        let far = self.far.as_ref().map_or(0.0, |f| f.mass() + f.dropped);
        self.live as f64 * self.mass + far
    }

    pub fn is_extinct(&self) -> bool {
        self.live == 0 && self.pending.is_empty() && self.far.as_ref().is_none_or(|f| f.cells.is_empty() && f.dropped == 0.0)
    }

    /// Mass lost to the right-tail cut of the closure grid (counted in `total_mass`).
    pub fn dropped_mass(&self) -> f64 {
        self.far.as_ref().map_or(0.0, |f| f.dropped)
    }

    /// Adds `count` particles at un-drifted position `x` at the current time.
    pub fn add_particles<R: Rng + ?Sized>(&mut self, x: f64, count: usize, rng: &mut R) -> Result<()> {
        if !x.is_finite() {
            return Err(domain("particle position must be finite"));
        }
        for _ in 0..count {
            let clock = self.next_clock(self.now, rng);
            self.particles.push(Particle {
                x,
                t: self.now,
                clock,
                alive: true,
                ghost: false,
            });
        }
        self.live += count;
        self.check_cap()
    }

    /// Queues `count` particles to appear at un-drifted position `x` at time
    /// `s >= now`; they join the system when the run passes `s`.
    pub fn schedule_particles(&mut self, x: f64, s: f64, count: usize) -> Result<()> {
        if !x.is_finite() || !(s >= self.now) {
            return Err(domain(format!("cannot schedule particles at ({x}, {s}) with the clock at {}", self.now)));
        }
        if count > 0 {
            if self.pending.last().is_some_and(|p| p.0 < s) {
                self.pending_sorted = false;
            }
            self.pending.push((s, x, count));
        }
        Ok(())
    }

    fn flush_pending<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) {
        if !self.pending_sorted {
            self.pending.sort_by(|a, b| b.0.total_cmp(&a.0));
            self.pending_sorted = true;
        }
        while self.pending.last().is_some_and(|p| p.0 <= t_end) {
            let (s, x, count) = self.pending.pop().expect("checked non-empty");
            for _ in 0..count {
                let clock = self.next_clock(s, rng);
                self.particles.push(Particle {
                    x,
                    t: s,
                    clock,
                    alive: true,
                    ghost: false,
                });
            }
            self.live += count;
        }
    }

    /// Adds mass `m` at `x`, rounded stochastically to a whole number of particles.
    pub fn add_mass<R: Rng + ?Sized>(&mut self, x: f64, m: f64, rng: &mut R) -> Result<usize> {
        let count = stochastic_round(m / self.mass, rng);
        self.add_particles(x, count, rng)?;
        Ok(count)
    }

    fn next_clock<R: Rng + ?Sized>(&self, from: f64, rng: &mut R) -> f64 {
        if self.total_rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            from + e / self.total_rate
        } else {
            f64::INFINITY
        }
    }

    fn check_cap(&self) -> Result<()> {
        if self.live > self.cap {
            return Err(Error::Explosion {
                detail: format!("{} live particles exceed the cap of {} at t = {}", self.live, self.cap, self.now),
            });
        }
        Ok(())
    }

    /// Moves a particle to time `to`, applying the barrier. Returns false if it
    /// was absorbed.
    fn advance<R: Rng + ?Sized>(&mut self, p: &mut Particle, to: f64, rng: &mut R) -> bool {
        let dt = to - p.t;
        if dt <= 0.0 {
            return true;
        }
        let g: f64 = StandardNormal.sample(rng);
        let x1 = p.x + dt.sqrt() * g;
        if let Some(b) = self.barrier {
            if !p.ghost {
                let a0 = p.x - b.level(p.t);
                let a1 = x1 - b.level(to);
                let hit = if a1 <= 0.0 {
                    Some(p.t + dt * a0 / (a0 - a1))
                } else if rng.random::<f64>() < bridge_min_prob(a0, a1, dt, 0.0) {
                    Some(p.t + 0.5 * dt)
                } else {
                    None
                };
                if let Some(s) = hit {
                    self.side.push((s, self.mass));
                    match b.mode {
                        BarrierMode::Absorb => {
                            p.alive = false;
                            p.x = x1;
                            p.t = to;
                            return false;
                        }
                        BarrierMode::Mark => p.ghost = true,
                    }
                }
            }
        }
        p.x = x1;
        p.t = to;
        true
    }

    fn process_events<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<()> {
        self.flush_pending(t_end, rng);
        self.check_cap()?;
        let mut i = 0;
        while i < self.particles.len() {
            let mut p = self.particles[i];
            while p.alive && p.clock < t_end {
                let te = p.clock;
                let u = rng.random::<f64>() * self.total_rate;
                if u < self.death_cut {
                    if self.barrier.is_some() {
                        self.advance(&mut p, te, rng);
                    }
                    p.alive = false;
                    break;
                }
                let extra = self
                    .thresholds
                    .iter()
                    .find(|(c, _)| u < *c)
                    .map_or(self.thresholds.last().map_or(0, |c| c.1), |c| c.1);
                if !self.advance(&mut p, te, rng) {
                    break;
                }
                for _ in 0..extra {
                    let clock = self.next_clock(te, rng);
                    self.particles.push(Particle {
                        x: p.x,
                        t: te,
                        clock,
                        alive: true,
                        ghost: p.ghost,
                    });
                }
                self.live += extra as usize;
                if self.live > self.cap {
                    self.particles[i] = p;
                    return self.check_cap();
                }
                p.clock = self.next_clock(te, rng);
            }
            if !p.alive {
                self.live -= 1;
            }
            self.particles[i] = p;
            i += 1;
        }
        self.particles.retain(|p| p.alive);
        Ok(())
    }

    fn sync_positions<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) {
        let mut particles = std::mem::take(&mut self.particles);
        for p in particles.iter_mut() {
            if !self.advance(p, t, rng) {
                self.live -= 1;
            }
        }
        particles.retain(|p| p.alive);
        self.particles = particles;
    }

    /// Runs the system forward to time `t`.
    pub fn run_until<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<()> {
        if !(t >= self.now) {
            return Err(domain(format!("cannot run backwards from {} to {t}", self.now)));
        }
        let Some(sync_dt) = self.far.as_ref().map(|f| f.cfg.sync_dt) else {
            self.process_events(t, rng)?;
            self.now = t;
            return Ok(());
        };
        loop {
            let last = self.far.as_ref().map_or(self.now, |f| f.last_sync);
            let next = if t - last <= sync_dt * (1.0 + 1e-9) { t } else { last + sync_dt };
            self.process_events(next, rng)?;
            self.sync_positions(next, rng);
            self.now = next;
            self.far_sync(next, rng)?;
            if next >= t {
                return Ok(());
            }
        }
    }

    fn far_sync<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> Result<()> {
        let Some(mut far) = self.far.take() else {
            return Ok(());
        };
        far.evolve(s - far.last_sync);
        far.last_sync = s;
        let lambda0 = far.lambda0;
        let mass = self.mass;

        let target = far.cfg.target_particles;
        let hysteresis = far.cfg.hysteresis;
        if far.threshold.is_none() && self.live > 2 * target {
            far.threshold = Some(self.threshold_for(target, s, &far));
        }
        if let Some(xr) = far.threshold {
            self.convert_below(&mut far, xr, s, rng)?;
            self.deposit_above(&mut far, xr + hysteresis, s);
            if self.live > 2 * target {
                let xr = self.threshold_for(target, s, &far);
                far.threshold = Some(xr);
                self.deposit_above(&mut far, xr + hysteresis, s);
            } else if self.live < target / 2 && !far.cells.is_empty() {
                let need = (target - self.live) as f64;
                let mut acc = 0.0;
                let mut xr = far.center(far.cells.len() - 1) + lambda0 * s + far.cfg.cell;
                for (k, &m) in far.cells.iter().enumerate() {
                    acc += m / mass;
                    if acc >= need {
                        xr = far.center(k) + lambda0 * s + 0.5 * far.cfg.cell;
                        break;
                    }
                }
                let xr = self.clamp_threshold(xr, &far);
                far.threshold = Some(xr);
                self.convert_below(&mut far, xr, s, rng)?;
            }
            far.trim(s, mass);
            if far.cells.is_empty() && far.dropped == 0.0 {
                far.threshold = None;
            }
        }
        self.far = Some(far);
        self.check_cap()
    }

    fn clamp_threshold(&self, xr: f64, far: &FarField) -> f64 {
        match self.barrier {
            Some(b) => xr.max(-b.y + far.cfg.barrier_margin),
            None => xr,
        }
    }

    /// Drifted-frame position of the `target`-th leftmost particle.
    fn threshold_for(&self, target: usize, s: f64, far: &FarField) -> f64 {
        let mut xs: Vec<f64> = self.particles.iter().map(|p| p.x + far.lambda0 * s).collect();
        let k = target.min(xs.len() - 1);
        let (_, v, _) = xs.select_nth_unstable_by(k, f64::total_cmp);
        self.clamp_threshold(*v, far)
    }

    fn convert_below<R: Rng + ?Sized>(&mut self, far: &mut FarField, xr: f64, s: f64, rng: &mut R) -> Result<()> {
        let h = far.cfg.cell;
        let mut converted = 0;
        for k in 0..far.cells.len() {
            let center = far.center(k);
            if center + far.lambda0 * s >= xr {
                break;
            }
            let m = far.cells[k];
            far.cells[k] = 0.0;
            converted = k + 1;
            let mean = m / self.mass;
            if mean <= 0.0 {
                continue;
            }
            let n = Poisson::new(mean)
                .map_err(|e| domain(format!("Poisson mean {mean}: {e}")))?
                .sample(rng) as usize;
            for _ in 0..n {
                let x = center + h * (rng.random::<f64>() - 0.5);
                if let Some(b) = self.barrier {
                    if x <= b.level(s) {
                        self.side.push((s, self.mass));
                        continue;
                    }
                }
                let clock = self.next_clock(s, rng);
                self.particles.push(Particle {
                    x,
                    t: s,
                    clock,
                    alive: true,
                    ghost: false,
                });
                self.live += 1;
            }
        }
        if converted > 0 {
            far.cells.drain(..converted);
            far.j0 += converted as i64;
        }
        Ok(())
    }

    fn deposit_above(&mut self, far: &mut FarField, cut: f64, s: f64) {
        let mass = self.mass;
        let mut removed = 0;
        self.particles.retain(|p| {
            if p.x + far.lambda0 * s >= cut {
                far.deposit(p.x, mass);
                removed += 1;
                false
            } else {
                true
            }
        });
        self.live -= removed;
    }

    /// Free-process snapshot at time `t` (ghosts included). Closure-grid cells
    /// appear as atoms at their centres; the right-tail cut is not represented.
    pub fn ensemble<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<ParticleEnsemble> {
        self.observe_at(t, rng)?;
        let mut atoms: Vec<(f64, f64)> = self.particles.iter().map(|p| (p.x, self.mass)).collect();
        if let Some(far) = &self.far {
            atoms.extend(
                far.cells
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0.0)
                    .map(|(k, &m)| (far.center(k), m)),
            );
        }
        Ok(ParticleEnsemble { t, atoms })
    }

    /// Exit measure at time `t`, positions in the drifted frame.
    pub fn exit_ensemble<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<ExitEnsemble> {
        let Some(b) = self.barrier else {
            return Err(domain("exit ensemble requested from a run without barrier"));
        };
        self.observe_at(t, rng)?;
        let shift = b.lambda0 * t;
        let mut top: Vec<(f64, f64)> = self
            .particles
            .iter()
            .filter(|p| !p.ghost)
            .map(|p| ((p.x + shift).max(-b.y), self.mass))
            .collect();
        if let Some(far) = &self.far {
            top.extend(
                far.cells
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0.0)
                    .map(|(k, &m)| ((far.center(k) + shift).max(-b.y), m)),
            );
        }
        Ok(ExitEnsemble {
            y: b.y,
            t,
            side_atoms: self.side.clone(),
            top_atoms: top,
        })
    }

    fn observe_at<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<()> {
        let stale = t != self.now
            || self.pending.iter().any(|p| p.0 <= t)
            || self.particles.iter().any(|p| p.t != t);
        if stale {
            self.run_until(t, rng)?;
            self.sync_positions(t, rng);
        }
        Ok(())
    }
}

/// `floor(v)` plus a Bernoulli of the fractional part; unbiased for `v`.
pub fn stochastic_round<R: Rng + ?Sized>(v: f64, rng: &mut R) -> usize {
    if !(v > 0.0) {
        return 0;
    }
    let f = v.floor();
    f as usize + usize::from(rng.random::<f64>() < v - f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::BranchingMechanism;
    use crate::particle_engine::rates::discretize_offspring;
    use crate::rng::stream;

    #[test]
    fn pure_diffusion_marginal() {
        let mut rng = stream(11, 0);
        let mut pop = Population::new(ParticleRates::pure_diffusion(10));
        pop.add_particles(0.0, 20_000, &mut rng).unwrap();
        let ens = pop.ensemble(2.0, &mut rng).unwrap();
        let n = ens.len() as f64;
        let mean = ens.atoms.iter().map(|a| a.0).sum::<f64>() / n;
        let var = ens.atoms.iter().map(|a| a.0 * a.0).sum::<f64>() / n - mean * mean;
        assert!(mean.abs() < 4.0 * (2.0 / n).sqrt());
        assert!((var - 2.0).abs() < 0.1);
    }

    #[test]
    fn barrier_survival_matches_first_passage() {
        // no branching, lambda0 = 0: P(survive to t) = erf(y / sqrt(2t))
        let mut rng = stream(12, 0);
        let barrier = Barrier {
            y: 1.0,
            lambda0: 0.0,
            mode: BarrierMode::Absorb,
        };
        let mut pop = Population::new(ParticleRates::pure_diffusion(10)).with_barrier(barrier).unwrap();
        let n = 40_000;
        pop.add_particles(0.0, n, &mut rng).unwrap();
        for k in 1..=10 {
            pop.run_until(0.1 * k as f64, &mut rng).unwrap();
        }
        let exit = pop.exit_ensemble(1.0, &mut rng).unwrap();
        let p = exit.top_atoms.len() as f64 / n as f64;
        let expect = libm::erf(1.0 / 2f64.sqrt());
        assert!((p - expect).abs() < 4.0 * (expect * (1.0 - expect) / n as f64).sqrt(), "{p} vs {expect}");
        assert!((exit.side_mass() + exit.top_mass() - n as f64 / 10.0).abs() < 1e-6);
        assert!(exit.side_atoms.iter().all(|a| a.0 <= 1.0));
    }

    #[test]
    fn mark_mode_keeps_mass() {
        let mut rng = stream(13, 0);
        let barrier = Barrier {
            y: 0.5,
            lambda0: 1.0,
            mode: BarrierMode::Mark,
        };
        let mut pop = Population::new(ParticleRates::pure_diffusion(10)).with_barrier(barrier).unwrap();
        pop.add_particles(0.0, 1000, &mut rng).unwrap();
        let exit = pop.exit_ensemble(1.0, &mut rng).unwrap();
        let ens = pop.ensemble(1.0, &mut rng).unwrap();
        assert_eq!(ens.len(), 1000);
        assert!((exit.side_mass() + exit.top_mass() - 100.0).abs() < 1e-9);
        assert!(exit.top_atoms.iter().all(|a| a.0 >= -0.5));
    }

    #[test]
    fn growth_rate_matches_alpha() {
        let mech = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let rates = discretize_offspring(&mech, 20).unwrap();
        let reps = 400;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for r in 0..reps {
            let mut rng = stream(14, r);
            let mut pop = Population::new(rates.clone());
            pop.add_particles(0.0, 20, &mut rng).unwrap();
            pop.run_until(1.0, &mut rng).unwrap();
            let m = pop.total_mass();
            sum += m;
            sum2 += m * m;
        }
        let mean = sum / reps as f64;
        let se = ((sum2 / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!((mean - std::f64::consts::E).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn far_field_preserves_mean_mass() {
        let mech = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let rates = discretize_offspring(&mech, 10).unwrap();
        let cfg = FarFieldConfig {
            target_particles: 100,
            ..FarFieldConfig::default()
        };
        let reps = 200;
        let t = 6.0;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for r in 0..reps {
            let mut rng = stream(15, r);
            let mut pop = Population::new(rates.clone()).with_far_field(cfg, 2f64.sqrt()).unwrap();
            pop.add_particles(0.0, 10, &mut rng).unwrap();
            pop.run_until(t, &mut rng).unwrap();
            assert!(pop.particle_count() < 1000);
            let m = pop.total_mass() * (-t).exp();
            sum += m;
            sum2 += m * m;
        }
        let mean = sum / reps as f64;
        let se = ((sum2 / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!((mean - 1.0).abs() < 4.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn explosion_cap() {
        let mech = BranchingMechanism::quadratic(1.0, 1.0).unwrap();
        let rates = discretize_offspring(&mech, 100).unwrap();
        let mut rng = stream(16, 0);
        let mut pop = Population::new(rates).with_cap(2000);
        pop.add_particles(0.0, 1000, &mut rng).unwrap();
        assert!(matches!(pop.run_until(5.0, &mut rng), Err(Error::Explosion { .. })));
    }

    #[test]
    fn stochastic_round_is_unbiased() {
        let mut rng = stream(17, 0);
        let n = 100_000;
        let s: usize = (0..n).map(|_| stochastic_round(2.3, &mut rng)).sum();
        assert!((s as f64 / n as f64 - 2.3).abs() < 0.01);
        assert_eq!(stochastic_round(0.0, &mut rng), 0);
    }
}
