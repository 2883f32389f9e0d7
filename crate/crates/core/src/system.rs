//! System configuration and random network realizations.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::Rng;

use crate::fbl::CodeParams;
use crate::rng::{complex_gaussian, substream, Component};
use crate::{Error, Result};

/// How many users are active in a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activity {
    /// Exactly `K` users, chosen uniformly without replacement.
    Fixed(usize),
    /// Every user independently active with probability `λ`.
    Bernoulli(f64),
}

/// All scenario scalars plus solver knobs. Powers are linear, in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_users: usize,
    pub n_antennas: usize,
    pub block_len: usize,
    pub pilot_len: usize,
    pub payload_bits: usize,
    pub activity: Activity,
    /// Target received power per user after channel-inversion power control.
    pub rx_power: f64,
    pub noise_var: f64,
    pub amp_max_iters: usize,
    pub amp_tol: f64,
    pub trunc_tol: f64,
    /// Samples per stratum for the state-evolution expectation.
    pub se_samples: usize,
}

/// dB to linear.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm to linear watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub const TABLE_ONE_RX_POWER_DB: f64 = -123.8;
pub const TABLE_ONE_NOISE_DBM: f64 = -109.0;

impl SystemConfig {
    /// The reference network: 2000 users, 100 antennas, T = 250, c = 50,
    /// β = -123.8 dB, σ² = -109 dBm.
    pub fn table_one(active_count: usize, pilot_len: usize) -> Self {
        Self {
            n_users: 2000,
            n_antennas: 100,
            block_len: 250,
            pilot_len,
            payload_bits: 50,
            activity: Activity::Fixed(active_count),
            rx_power: db_to_linear(TABLE_ONE_RX_POWER_DB),
            noise_var: dbm_to_watts(TABLE_ONE_NOISE_DBM),
            amp_max_iters: 200,
            amp_tol: 1e-8,
            trunc_tol: 1e-12,
            se_samples: 100_000,
        }
    }

    pub fn with_pilot_len(&self, pilot_len: usize) -> Self {
        Self { pilot_len, ..self.clone() }
    }

    pub fn with_active_count(&self, k: usize) -> Self {
        Self { activity: Activity::Fixed(k), ..self.clone() }
    }

    /// Nominal K; in Bernoulli mode `round(λN)`.
    pub fn active_count(&self) -> usize {
        match self.activity {
            Activity::Fixed(k) => k,
            Activity::Bernoulli(p) => (p * self.n_users as f64).round() as usize,
        }
    }

    /// λ; in fixed mode `K / N`.
    pub fn activity_prob(&self) -> f64 {
        match self.activity {
            Activity::Fixed(k) => k as f64 / self.n_users as f64,
            Activity::Bernoulli(p) => p,
        }
    }

    /// d = T - L.
    pub fn data_len(&self) -> usize {
        self.block_len - self.pilot_len
    }

    /// R = c / d.
    pub fn coding_rate(&self) -> f64 {
        self.payload_bits as f64 / self.data_len() as f64
    }

    pub fn code(&self) -> CodeParams {
        CodeParams::new(self.data_len(), self.coding_rate())
    }

    /// β / σ².
    pub fn snr(&self) -> f64 {
        self.rx_power / self.noise_var
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_users == 0 {
            return bad("n_users must be positive".into());
        }
        if self.n_antennas == 0 {
            return bad("n_antennas must be at least 1".into());
        }
        if self.pilot_len == 0 || self.pilot_len >= self.block_len {
            return bad(format!(
                "pilot_len {} must satisfy 0 < L < T = {}",
                self.pilot_len, self.block_len
            ));
        }
        if self.payload_bits == 0 || self.payload_bits > self.data_len() {
            return bad(format!(
                "payload_bits {} must satisfy 0 < c <= T - L = {}",
                self.payload_bits,
                self.data_len()
            ));
        }
        match self.activity {
            Activity::Fixed(k) if k > self.n_users => {
                return bad(format!("active_count {k} exceeds n_users {}", self.n_users))
            }
            Activity::Bernoulli(p) if !(p > 0.0 && p <= 1.0) => {
                return bad(format!("activity_prob {p} must lie in (0, 1]"))
            }
            _ => {}
        }
        if !(self.rx_power > 0.0 && self.rx_power.is_finite()) {
            return bad("rx_power must be positive".into());
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return bad("noise_var must be positive".into());
        }
        if self.amp_max_iters == 0 || !(self.amp_tol > 0.0) {
            return bad("amp_max_iters and amp_tol must be positive".into());
        }
        if !(self.trunc_tol > 0.0 && self.trunc_tol <= 1e-6) {
            return bad(format!("trunc_tol {} must lie in (0, 1e-6]", self.trunc_tol));
        }
        if self.se_samples < 100 {
            return bad("se_samples must be at least 100".into());
        }
        Ok(())
    }
}

/// One realized network draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub activity: Vec<bool>,
    /// N x M; row n is h_n with i.i.d. CN(0, β) entries.
    pub channels: Array2<Complex64>,
    /// L x N; column n is p_n with i.i.d. CN(0, 1/L) entries.
    pub pilots: Array2<Complex64>,
    /// L x M; i.i.d. CN(0, σ²).
    pub pilot_noise: Array2<Complex64>,
    pub noise_var: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn active_indices(&self) -> Vec<usize> {
        self.activity
            .iter()
            .enumerate()
            .filter_map(|(n, &a)| a.then_some(n))
            .collect()
    }

    pub fn pilot_len(&self) -> usize {
        self.pilots.nrows()
    }

    /// The effective-channel matrix X with rows `u_n h_n`.
    pub fn effective_channels(&self) -> Array2<Complex64> {
        let mut x = self.channels.clone();
        for (n, mut row) in x.outer_iter_mut().enumerate() {
            if !self.activity[n] {
                row.fill(Complex64::new(0.0, 0.0));
            }
        }
        x
    }
}

/// Draws a scenario; a pure function of `(config, seed)`.
pub fn generate_scenario(config: &SystemConfig, seed: u64) -> Scenario {
    let (n, m, l) = (config.n_users, config.n_antennas, config.pilot_len);
    let mut act_rng = substream(seed, Component::Activity, 0);
    let activity = match config.activity {
        Activity::Fixed(k) => {
            let mut mask = vec![false; n];
            for i in rand::seq::index::sample(&mut act_rng, n, k.min(n)).into_iter() {
                mask[i] = true;
            }
            mask
        }
        Activity::Bernoulli(p) => (0..n).map(|_| act_rng.gen_bool(p)).collect(),
    };

    let mut channels = Array2::zeros((n, m));
    for (user, mut row) in channels.outer_iter_mut().enumerate() {
        let mut rng = substream(seed, Component::Channel, user as u64);
        row.iter_mut().for_each(|h| *h = complex_gaussian(&mut rng, config.rx_power));
    }

    let mut pilots = Array2::zeros((l, n));
    let pilot_var = 1.0 / l as f64;
    for (user, mut col) in pilots.columns_mut().into_iter().enumerate() {
        let mut rng = substream(seed, Component::Pilot, user as u64);
        col.iter_mut().for_each(|p| *p = complex_gaussian(&mut rng, pilot_var));
    }

    let mut pilot_noise = Array2::zeros((l, m));
    for (row_idx, mut row) in pilot_noise.outer_iter_mut().enumerate() {
        let mut rng = substream(seed, Component::PilotNoise, row_idx as u64);
        row.iter_mut().for_each(|z| *z = complex_gaussian(&mut rng, config.noise_var));
    }

    Scenario { activity, channels, pilots, pilot_noise, noise_var: config.noise_var, seed }
}

/// `Y_p = Σ_n √L u_n p_n h_nᵀ + N_p`, an L x M matrix.
pub fn received_pilot_signal(scenario: &Scenario) -> Array2<Complex64> {
    let active = scenario.active_indices();
    let mut y = scenario.pilot_noise.clone();
    if active.is_empty() {
        return y;
    }
    let l = scenario.pilot_len();
    let p_act = scenario.pilots.select(ndarray::Axis(1), &active);
    let h_act = scenario.channels.select(ndarray::Axis(0), &active);
    let scale = Complex64::new((l as f64).sqrt(), 0.0);
    ndarray::linalg::general_mat_mul(scale, &p_act, &h_act, Complex64::new(1.0, 0.0), &mut y);
    y
}

/// `Y = Σ_{n active} h_n s_nᵀ + N`, an M x d matrix with fresh noise.
///
/// `symbols` has one row per active user, in increasing user index.
pub fn received_data_signal(
    scenario: &Scenario,
    symbols: ArrayView2<Complex64>,
) -> Result<Array2<Complex64>> {
    let active = scenario.active_indices();
    if symbols.nrows() != active.len() {
        return Err(Error::Dimension(format!(
            "{} symbol rows for {} active users",
            symbols.nrows(),
            active.len()
        )));
    }
    let m = scenario.channels.ncols();
    let d = symbols.ncols();
    let mut y = Array2::zeros((m, d));
    for (row_idx, mut row) in y.outer_iter_mut().enumerate() {
        let mut rng = substream(scenario.seed, Component::DataNoise, row_idx as u64);
        row.iter_mut().for_each(|z| *z = complex_gaussian(&mut rng, scenario.noise_var));
    }
    if !active.is_empty() {
        let h_act_t = scenario.channels.select(ndarray::Axis(0), &active).reversed_axes();
        ndarray::linalg::general_mat_mul(
            Complex64::new(1.0, 0.0),
            &h_act_t,
            &symbols,
            Complex64::new(1.0, 0.0),
            &mut y,
        );
    }
    Ok(y)
}
