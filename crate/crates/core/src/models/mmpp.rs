//! Markov modulated Poisson process: likelihood, transformed posterior, simulator and
//! event-time files.
//!
//! Parameters are the intensities `psi` (strictly increasing) and the off-diagonal
//! generator entries in row-major order (`q12, q21` for two states). The posterior is
//! expressed in the unconstrained coordinates
//! `theta = (log psi_1, log(psi_2 - psi_1), ..., log q_ij ...)`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{Error, Result};
use crate::model::{Functional, TargetDensity};
use crate::models::expm::{expm_2x2, expm_pade6};
use crate::rng::ChainRng;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MmppParams {
    pub psi: Vec<f64>,
    /// Off-diagonal generator entries, row-major, diagonal skipped.
    pub q_offdiag: Vec<f64>,
}

impl MmppParams {
    pub fn new(psi: Vec<f64>, q_offdiag: Vec<f64>) -> Result<Self> {
        let p = MmppParams { psi, q_offdiag };
        p.validate(false)?;
        Ok(p)
    }

    pub fn two_state(psi1: f64, psi2: f64, q12: f64, q21: f64) -> Result<Self> {
        Self::new(vec![psi1, psi2], vec![q12, q21])
    }

    pub fn states(&self) -> usize {
        self.psi.len()
    }

    /// Checks positivity, shape and (unless `allow_equal_psi`) strict ordering of `psi`.
    pub fn validate(&self, allow_equal_psi: bool) -> Result<()> {
        let d = self.psi.len();
        if d == 0 {
            return Err(Error::InvalidInput("MMPP needs at least one state".into()));
        }
        if self.q_offdiag.len() != d * (d - 1) {
            return Err(Error::InvalidInput(format!(
                "{d} states need {} off-diagonal rates, got {}",
                d * (d - 1),
                self.q_offdiag.len()
            )));
        }
        if self.psi.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "intensities must be positive: {:?}",
                self.psi
            )));
        }
        if self.q_offdiag.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "transition rates must be positive: {:?}",
                self.q_offdiag
            )));
        }
        for w in self.psi.windows(2) {
            let ok = if allow_equal_psi { w[0] <= w[1] } else { w[0] < w[1] };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "intensities must be strictly increasing: {:?}",
                    self.psi
                )));
            }
        }
        Ok(())
    }

    /// Rate of the jump `i -> j` (`i != j`).
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let d = self.states();
        debug_assert!(i != j);
        self.q_offdiag[i * (d - 1) + if j < i { j } else { j - 1 }]
    }

    pub fn generator(&self) -> DMatrix<f64> {
        let d = self.states();
        let mut q = DMatrix::zeros(d, d);
        for i in 0..d {
            let mut out = 0.0;
            for j in 0..d {
                if i != j {
                    q[(i, j)] = self.rate(i, j);
                    out += q[(i, j)];
                }
            }
            q[(i, i)] = -out;
        }
        q
    }

    /// Stationary law of the modulating chain.
    pub fn stationary(&self) -> Vec<f64> {
        let d = self.states();
        if d == 1 {
            return vec![1.0];
        }
        if d == 2 {
            let (a, b) = (self.q_offdiag[0], self.q_offdiag[1]);
            return vec![b / (a + b), a / (a + b)];
        }
        // nu Q = 0 with the last equation replaced by sum(nu) = 1
        let mut a = self.generator().transpose();
        for j in 0..d {
            a[(d - 1, j)] = 1.0;
        }
        let mut rhs = nalgebra::DVector::zeros(d);
        rhs[d - 1] = 1.0;
        let nu = a.lu().solve(&rhs).expect("irreducible generator");
        nu.iter().copied().collect()
    }

    /// Relabels states by `perm` (new state `i` is old state `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> MmppParams {
        let d = self.states();
        let psi = perm.iter().map(|&p| self.psi[p]).collect();
        let mut q = Vec::with_capacity(d * (d - 1));
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    q.push(self.rate(perm[i], perm[j]));
                }
            }
        }
        MmppParams { psi, q_offdiag: q }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoglikOptions {
    /// Normalise the forward vector after every this many factors.
    pub renormalize_every: usize,
    /// Accept `psi_1 = psi_2` (ordering boundary; the model is then not identified).
    pub allow_equal_psi: bool,
    /// Accept intensities in any order (used for relabeling checks).
    pub allow_unordered_psi: bool,
}

impl Default for LoglikOptions {
    fn default() -> Self {
        LoglikOptions {
            renormalize_every: 1,
            allow_equal_psi: false,
            allow_unordered_psi: false,
        }
    }
}

/// Checks event times are strictly increasing within `[0, window]`.
pub fn validate_events(events: &[f64], window: f64) -> Result<()> {
    if !(window >= 0.0 && window.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "window must be finite and nonnegative, got {window}"
        )));
    }
    let mut prev = f64::NEG_INFINITY;
    for (i, &t) in events.iter().enumerate() {
        if !(0.0..=window).contains(&t) {
            return Err(Error::InvalidInput(format!(
                "event {i} at {t} lies outside [0, {window}]"
            )));
        }
        if t <= prev {
            return Err(Error::InvalidInput(format!(
                "event times must be strictly increasing (event {i}: {t} after {prev})"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Log-likelihood of the event times with the default options.
pub fn mmpp_loglik(params: &MmppParams, events: &[f64], window: f64) -> Result<f64> {
    mmpp_loglik_with(params, events, window, LoglikOptions::default())
}

pub fn mmpp_loglik_with(params: &MmppParams, events: &[f64], window: f64, opts: LoglikOptions) -> Result<f64> {
    if opts.allow_unordered_psi {
        let mut sorted = params.clone();
        sorted.psi.sort_by(f64::total_cmp);
        sorted.validate(true)?;
    } else {
        params.validate(opts.allow_equal_psi)?;
    }
    validate_events(events, window)?;
    if opts.renormalize_every == 0 {
        return Err(Error::InvalidInput("renormalize_every must be positive".into()));
    }
    Ok(forward(params, events, window, opts.renormalize_every))
}

/// Forward recursion without validation. Callers guarantee valid inputs.
fn forward(params: &MmppParams, events: &[f64], window: f64, every: usize) -> f64 {
    match params.states() {
        1 => {
            let psi = params.psi[0];
            events.len() as f64 * psi.ln() - psi * window
        }
        2 => forward_2(params, events, window, every),
        _ => forward_general(params, events, window, every),
    }
}

fn forward_2(params: &MmppParams, events: &[f64], window: f64, every: usize) -> f64 {
    let (p1, p2) = (params.psi[0], params.psi[1]);
    let (q12, q21) = (params.q_offdiag[0], params.q_offdiag[1]);
    let a = [[-q12 - p1, q12], [q21, -q21 - p2]];
    let mut v = [q21 / (q12 + q21), q12 / (q12 + q21)];
    let mut log_norm = 0.0;
    // product of pending normalisers; its log is taken lazily
    let mut pending = 1.0f64;
    let mut prev = 0.0;
    let mut since = 0;
    let gaps = events
        .iter()
        .map(|&t| (t, true))
        .chain(std::iter::once((window, false)));
    for (t, is_event) in gaps {
        let e = expm_2x2(a, t - prev);
        prev = t;
        let mut n0 = v[0] * e[0][0] + v[1] * e[1][0];
        let mut n1 = v[0] * e[0][1] + v[1] * e[1][1];
        if is_event {
            n0 *= p1;
            n1 *= p2;
        }
        v = [n0, n1];
        since += 1;
        if since == every || !is_event {
            since = 0;
            let c = v[0] + v[1];
            v = [v[0] / c, v[1] / c];
            pending *= c;
            if !(1e-250..=1e250).contains(&pending) {
                log_norm += pending.ln();
                pending = 1.0;
            }
        }
    }
    log_norm + pending.ln()
}

fn forward_general(params: &MmppParams, events: &[f64], window: f64, every: usize) -> f64 {
    let d = params.states();
    let a = params.generator() - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(params.psi.clone()));
    let mut v = nalgebra::RowDVector::from_vec(params.stationary());
    let mut log_norm = 0.0;
    let mut prev = 0.0;
    let mut since = 0;
    let gaps = events
        .iter()
        .map(|&t| (t, true))
        .chain(std::iter::once((window, false)));
    for (t, is_event) in gaps {
        let e = expm_pade6(&(&a * (t - prev)));
        prev = t;
        v = &v * e;
        if is_event {
            for j in 0..d {
                v[j] *= params.psi[j];
            }
        }
        since += 1;
        if since == every || !is_event {
            since = 0;
            let c = v.sum();
            v /= c;
            log_norm += c.ln();
        }
    }
    log_norm
}

/// Maps unconstrained coordinates to natural parameters for a `d`-state model.
pub fn inverse_transform(theta: &[f64], d: usize) -> Result<MmppParams> {
    if theta.len() != d * d {
        return Err(Error::InvalidInput(format!(
            "{d}-state model has {} transformed coordinates, got {}",
            d * d,
            theta.len()
        )));
    }
    let mut psi = Vec::with_capacity(d);
    let mut acc = 0.0;
    for &t in &theta[..d] {
        acc += t.exp();
        psi.push(acc);
    }
    let q = theta[d..].iter().map(|t| t.exp()).collect();
    Ok(MmppParams { psi, q_offdiag: q })
}

/// Inverse of [`inverse_transform`].
pub fn forward_transform(params: &MmppParams) -> Vec<f64> {
    let mut theta = Vec::with_capacity(params.psi.len() * params.psi.len());
    let mut prev = 0.0;
    for &p in &params.psi {
        theta.push((p - prev).ln());
        prev = p;
    }
    theta.extend(params.q_offdiag.iter().map(|q| q.ln()));
    theta
}

/// Posterior of the transformed parameters: likelihood, independent exponential
/// priors on the natural parameters and the log-Jacobian of the transform.
#[derive(Debug, Clone)]
pub struct MmppPosterior {
    states: usize,
    events: Vec<f64>,
    window: f64,
    /// Exponential prior means in natural order: `psi_1..psi_d`, then `q_offdiag`.
    prior_means: Vec<f64>,
    flat_likelihood: bool,
}

impl MmppPosterior {
    pub fn new(states: usize, events: Vec<f64>, window: f64, prior_means: Vec<f64>) -> Result<Self> {
        validate_events(&events, window)?;
        if states == 0 || prior_means.len() != states * states {
            return Err(Error::Config(format!(
                "{states}-state model needs {} prior means, got {}",
                states * states,
                prior_means.len()
            )));
        }
        if prior_means.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Config(format!("prior means must be positive: {prior_means:?}")));
        }
        Ok(MmppPosterior {
            states,
            events,
            window,
            prior_means,
            flat_likelihood: false,
        })
    }

    /// Same posterior with the likelihood replaced by a constant (prior-only checks).
    pub fn with_flat_likelihood(mut self) -> Self {
        self.flat_likelihood = true;
        self
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn prior_means(&self) -> &[f64] {
        &self.prior_means
    }

    pub fn log_prior(&self, params: &MmppParams) -> f64 {
        params
            .psi
            .iter()
            .chain(&params.q_offdiag)
            .zip(&self.prior_means)
            .map(|(&x, &mean)| -mean.ln() - x / mean)
            .sum()
    }

    /// Log posterior at `theta`; `-inf` where the parameters are degenerate.
    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        let params = inverse_transform(theta, self.states)?;
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinates {theta:?}")));
        }
        if params.validate(false).is_err() {
            // overflow/underflow of the exponentials: zero posterior mass
            return Ok(f64::NEG_INFINITY);
        }
        let ll = if self.flat_likelihood {
            0.0
        } else {
            forward(&params, &self.events, self.window, 1)
        };
        let lp = ll + self.log_prior(&params) + theta.iter().sum::<f64>();
        Ok(if lp.is_nan() { f64::NEG_INFINITY } else { lp })
    }

    /// A draw from the prior, returned in transformed coordinates. The intensities
    /// are sorted so the ordering constraint holds.
    pub fn sample_prior(&self, rng: &mut ChainRng) -> Vec<f64> {
        let d = self.states;
        let draw = |mean: f64, rng: &mut ChainRng| Exp::new(1.0 / mean).expect("positive mean").sample(rng);
        let mut psi: Vec<f64> = self.prior_means[..d].iter().map(|&m| draw(m, rng)).collect();
        psi.sort_by(f64::total_cmp);
        let q = self.prior_means[d..].iter().map(|&m| draw(m, rng)).collect();
        forward_transform(&MmppParams { psi, q_offdiag: q })
    }
}

impl TargetDensity for MmppPosterior {
    fn dim(&self) -> usize {
        self.states * self.states
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_posterior(x).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Natural-scale parameter names: `psi1.., q12, q21, ..`.
pub fn parameter_names(states: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=states).map(|j| format!("psi{j}")).collect();
    for i in 1..=states {
        for j in 1..=states {
            if i != j {
                names.push(format!("q{i}{j}"));
            }
        }
    }
    names
}

/// Functionals of the transformed state: every natural parameter and its square
/// (`<name>` and `<name>sq`).
pub fn mmpp_functionals(states: usize) -> Vec<Functional> {
    let names = parameter_names(states);
    let mut out = Vec::with_capacity(2 * names.len());
    for (idx, name) in names.iter().enumerate() {
        let natural = move |x: &[f64]| -> f64 {
            if idx < states {
                x[..=idx].iter().map(|t| t.exp()).sum()
            } else {
                x[idx].exp()
            }
        };
        out.push(Functional::new(name.clone(), natural));
        out.push(Functional::new(format!("{name}sq"), move |x| natural(x).powi(2)));
    }
    out
}

/// Simulates event times on `[0, window)`: the modulating chain starts from its
/// stationary law and each constant-intensity segment gets a Poisson number of
/// uniformly placed events.
pub fn simulate_mmpp(params: &MmppParams, window: f64, rng: &mut ChainRng) -> Result<Vec<f64>> {
    params.validate(true)?;
    if !(window >= 0.0 && window.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid window {window}")));
    }
    let d = params.states();
    let q = params.generator();
    let nu = params.stationary();
    let mut state = pick(&nu, rng);
    let mut t = 0.0;
    let mut events = Vec::new();
    while t < window {
        let out = -q[(state, state)];
        let hold = if out > 0.0 {
            Exp::new(out).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        };
        let end = (t + hold).min(window);
        let mean = params.psi[state] * (end - t);
        if mean > 0.0 {
            let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
            for _ in 0..count {
                events.push(t + (end - t) * rng.random::<f64>());
            }
        }
        t = end;
        if t < window {
            let probs: Vec<f64> = (0..d)
                .map(|j| if j == state { 0.0 } else { q[(state, j)] / out })
                .collect();
            state = pick(&probs, rng);
        }
    }
    events.sort_by(f64::total_cmp);
    events.dedup();
    Ok(events)
}

fn pick(probs: &[f64], rng: &mut ChainRng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Event times plus the observation window, if the file declared one.
#[derive(Debug, Clone, PartialEq)]
pub struct EventData {
    pub times: Vec<f64>,
    pub window: Option<f64>,
}

/// Parses the event-time text format: an optional first line `window=<float>`, then
/// one nonnegative decimal per line, strictly increasing. Blank lines are skipped.
pub fn parse_events(text: &str) -> Result<EventData> {
    let mut window = None;
    let mut times = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("window=") {
            if lineno != 0 || !times.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "line {}: the window header must come first",
                    lineno + 1
                )));
            }
            let w: f64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("line 1: cannot parse window `{rest}`")))?;
            window = Some(w);
            continue;
        }
        let t: f64 = line
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: cannot parse `{line}`", lineno + 1)))?;
        times.push(t);
    }
    validate_events(&times, window.unwrap_or(f64::MAX))?;
    Ok(EventData { times, window })
}

pub fn read_events(path: &Path) -> Result<EventData> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse_events(&text)
}

/// Writes events in the format read by [`parse_events`], with round-trip precision.
pub fn format_events(times: &[f64], window: Option<f64>) -> String {
    let mut out = String::new();
    if let Some(w) = window {
        let _ = writeln!(out, "window={w}");
    }
    for t in times {
        let _ = writeln!(out, "{t}");
    }
    out
}
