//! Tick-based clocks shared by the executor, capture loop and simulated desktop.

use std::time::{Duration, Instant};

/// A point on a clock, counted in whole ticks from the clock's origin.
pub type Tick = u64;

/// Default tick length of the simulated clock, in seconds.
pub const DEFAULT_TICK_SECS: f64 = 0.05;

pub trait Clock {
    fn now(&self) -> Tick;

    /// Seconds per tick.
    fn tick_secs(&self) -> f64;

    /// Block the caller for `ticks` ticks.
    fn sleep(&mut self, ticks: u64);

    /// Converts seconds to ticks, rounding to the nearest tick.
    fn ticks_for(&self, secs: f64) -> u64 {
        secs_to_ticks(secs, self.tick_secs())
    }

    fn secs(&self, ticks: u64) -> f64 {
        ticks as f64 * self.tick_secs()
    }
}

pub fn secs_to_ticks(secs: f64, tick_secs: f64) -> u64 {
    if secs <= 0.0 || !secs.is_finite() {
        return 0;
    }
    (secs / tick_secs).round() as u64
}

/// A virtual clock that only moves when slept on. Sleeping is instantaneous.
#[derive(Debug, Clone, PartialEq)]
pub struct SimClock {
    now: Tick,
    tick_secs: f64,
}

impl SimClock {
    pub fn new(tick_secs: f64) -> Self {
        assert!(tick_secs > 0.0 && tick_secs.is_finite(), "tick length must be positive");
        Self { now: 0, tick_secs }
    }

    pub fn starting_at(now: Tick, tick_secs: f64) -> Self {
        Self { now, ..Self::new(tick_secs) }
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new(DEFAULT_TICK_SECS)
    }
}

impl Clock for SimClock {
    fn now(&self) -> Tick {
        self.now
    }

    fn tick_secs(&self) -> f64 {
        self.tick_secs
    }

    fn sleep(&mut self, ticks: u64) {
        self.now += ticks;
    }
}

/// Wall-clock time quantized to ticks, for driving real backends.
#[derive(Debug, Clone)]
pub struct WallClock {
    origin: Instant,
    tick_secs: f64,
}

impl WallClock {
    pub fn new(tick_secs: f64) -> Self {
        Self { origin: Instant::now(), tick_secs }
    }
}

impl Clock for WallClock {
    fn now(&self) -> Tick {
        (self.origin.elapsed().as_secs_f64() / self.tick_secs).floor() as Tick
    }

    fn tick_secs(&self) -> f64 {
        self.tick_secs
    }

    fn sleep(&mut self, ticks: u64) {
        std::thread::sleep(Duration::from_secs_f64(ticks as f64 * self.tick_secs));
    }
}

impl<C: Clock + ?Sized> Clock for &mut C {
    fn now(&self) -> Tick {
        (**self).now()
    }
    fn tick_secs(&self) -> f64 {
        (**self).tick_secs()
    }
    fn sleep(&mut self, ticks: u64) {
        (**self).sleep(ticks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_clock_advances_only_on_sleep() {
        let mut clock = SimClock::new(0.5);
        assert_eq!(clock.now(), 0);
        clock.sleep(3);
        assert_eq!(clock.now(), 3);
        assert_eq!(clock.secs(3), 1.5);
    }

    #[test]
    fn tick_conversion_rounds() {
        let clock = SimClock::new(0.05);
        assert_eq!(clock.ticks_for(0.4), 8);
        assert_eq!(clock.ticks_for(0.0), 0);
        assert_eq!(clock.ticks_for(0.026), 1);
        assert_eq!(clock.ticks_for(-1.0), 0);
    }
}
