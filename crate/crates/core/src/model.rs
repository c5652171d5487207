//! Domain types and stateless kernels of the nondimensional pore model.
//!
//! A pore occupies `x` in `[0, 1]` and has radius `a(x, t)` in `(0, 1]`. All
//! spatial integrals use the trapezoidal rule on a uniform node grid.

use std::f64::consts::FRAC_PI_4;

use crate::error::ModelError;

/// Radius at which a node counts as blocked.
pub const CLOSURE_FLOOR: f64 = 1e-4;

/// Default number of grid intervals.
pub const DEFAULT_NX: usize = 200;

/// Tolerance on the upper radius bound, so a profile touching 1 is accepted.
const UPPER_TOL: f64 = 1e-12;

/// Tolerance on the feed fraction sum.
const FEED_SUM_TOL: f64 = 1e-12;

/// Polynomial initial pore profile `a0(x) = sum_k d_k x^k`, stored from `d_0` upward.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFunction {
    coeffs: Vec<f64>,
}

impl ShapeFunction {
    pub fn new(coeffs: Vec<f64>) -> Result<Self, ModelError> {
        if coeffs.is_empty() {
            return Err(ModelError::MalformedShape);
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::InvalidParameter(
                "shape coefficients must be finite".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    /// `a0(x) = intercept + slope * x`.
    pub fn linear(intercept: f64, slope: f64) -> Self {
        Self {
            coeffs: vec![intercept, slope],
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficient of `x`, zero for a constant profile.
    pub fn slope(&self) -> f64 {
        self.coeffs.get(1).copied().unwrap_or(0.0)
    }

    pub fn intercept(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Smallest and largest values over the check grid, with their locations.
    fn extremes(&self, n_check: usize) -> Extremes {
        let mut ext = Extremes {
            min_x: 0.0,
            min: f64::INFINITY,
            max_x: 0.0,
            max: f64::NEG_INFINITY,
        };
        let last = (n_check - 1) as f64;
        for k in 0..n_check {
            let x = k as f64 / last;
            ext.include(x, self.eval(x));
        }
        if self.coeffs.len() == 3 && self.coeffs[2] != 0.0 {
            let vertex = -self.coeffs[1] / (2.0 * self.coeffs[2]);
            if (0.0..=1.0).contains(&vertex) {
                ext.include(vertex, self.eval(vertex));
            }
        }
        ext
    }
}

#[derive(Debug, Clone, Copy)]
struct Extremes {
    min_x: f64,
    min: f64,
    max_x: f64,
    max: f64,
}

impl Extremes {
    fn include(&mut self, x: f64, v: f64) {
        if v < self.min {
            self.min = v;
            self.min_x = x;
        }
        if v > self.max {
            self.max = v;
            self.max_x = x;
        }
    }
}

/// Outcome of a shape feasibility check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeCheck {
    Feasible,
    /// The worst offending point: a nonpositive radius takes precedence over one above 1.
    Violation {
        x: f64,
        value: f64,
    },
}

impl ShapeCheck {
    pub fn is_feasible(&self) -> bool {
        matches!(self, ShapeCheck::Feasible)
    }
}

/// Checks `0 < a0(x) <= 1` on `n_check` uniform points plus the vertex of a quadratic.
pub fn validate_shape(shape: &ShapeFunction, n_check: usize) -> Result<ShapeCheck, ModelError> {
    if shape.coeffs.is_empty() {
        return Err(ModelError::MalformedShape);
    }
    if n_check < 2 {
        return Err(ModelError::InvalidParameter(format!(
            "n_check must be at least 2, got {n_check}"
        )));
    }
    let ext = shape.extremes(n_check);
    if ext.min <= 0.0 {
        Ok(ShapeCheck::Violation {
            x: ext.min_x,
            value: ext.min,
        })
    } else if ext.max > 1.0 + UPPER_TOL {
        Ok(ShapeCheck::Violation {
            x: ext.max_x,
            value: ext.max,
        })
    } else {
        Ok(ShapeCheck::Feasible)
    }
}

/// Distance of a shape from the feasible set, zero when feasible.
pub fn shape_violation(shape: &ShapeFunction, n_check: usize) -> f64 {
    let ext = shape.extremes(n_check.max(2));
    let below = if ext.min <= 0.0 {
        (-ext.min).max(f64::MIN_POSITIVE)
    } else {
        0.0
    };
    let above = (ext.max - 1.0 - UPPER_TOL).max(0.0);
    below + above
}

/// Discretized pore radius on `n_x + 1` uniform nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PoreProfile {
    radii: Vec<f64>,
    closed: bool,
}

impl PoreProfile {
    pub fn from_shape(shape: &ShapeFunction, n_x: usize) -> Result<Self, ModelError> {
        if n_x == 0 {
            return Err(ModelError::InvalidParameter("n_x must be positive".into()));
        }
        let radii = (0..=n_x)
            .map(|k| shape.eval(k as f64 / n_x as f64))
            .collect();
        Self::from_radii(radii)
    }

    pub fn uniform(radius: f64, n_x: usize) -> Result<Self, ModelError> {
        Self::from_shape(&ShapeFunction::new(vec![radius])?, n_x)
    }

    /// Builds a profile from node values. Values at or below the closure floor mark it closed.
    pub fn from_radii(radii: Vec<f64>) -> Result<Self, ModelError> {
        if radii.len() < 2 {
            return Err(ModelError::InvalidParameter(
                "a profile needs at least two nodes".into(),
            ));
        }
        if radii.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(ModelError::InvalidParameter(
                "radii must be finite and nonnegative".into(),
            ));
        }
        let closed = radii.iter().any(|&a| a <= CLOSURE_FLOOR);
        Ok(Self { radii, closed })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn n_x(&self) -> usize {
        self.radii.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_x() as f64
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n_x() as f64;
        (0..self.radii.len()).map(move |k| k as f64 / n)
    }

    /// Explicit Euler update `a += dt * rate`, clamped at the closure floor.
    pub(crate) fn advance(&mut self, rate: &[f64], dt: f64) {
        for (a, r) in self.radii.iter_mut().zip(rate) {
            let next = *a + dt * r;
            *a = if next <= CLOSURE_FLOOR {
                self.closed = true;
                CLOSURE_FLOOR
            } else {
                next
            };
        }
    }
}

/// Trapezoidal integral of uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values.iter().sum();
    h * (inner - 0.5 * (values[0] + values[n - 1]))
}

pub(crate) fn trapezoid_by(values: &[f64], h: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = values.len();
    let inner: f64 = values.iter().map(|&v| f(v)).sum();
    h * (inner - 0.5 * (f(values[0]) + f(values[n - 1])))
}

/// Running trapezoidal integral, `out[0] = 0`.
pub(crate) fn cumulative_trapezoid(values: &[f64], h: f64, out: &mut [f64]) {
    out[0] = 0.0;
    let mut acc = 0.0;
    for k in 1..values.len() {
        acc += 0.5 * h * (values[k - 1] + values[k]);
        out[k] = acc;
    }
}

fn inverse_fourth(a: f64) -> f64 {
    let sq = a * a;
    1.0 / (sq * sq)
}

/// `u = (int a^-4 dx)^-1` for a constant driving pressure.
pub fn flux_constant_pressure(profile: &PoreProfile) -> Result<f64, ModelError> {
    Ok(1.0 / inlet_pressure_constant_flux(profile)?)
}

/// `p(0) = int a^-4 dx` for a unit flux.
pub fn inlet_pressure_constant_flux(profile: &PoreProfile) -> Result<f64, ModelError> {
    if profile.closed {
        return Err(ModelError::PoreClosed);
    }
    Ok(trapezoid_by(
        &profile.radii,
        profile.spacing(),
        inverse_fourth,
    ))
}

/// How the flow through the pore is driven.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    ConstantPressure { flux: f64 },
    ConstantFlux,
}

impl Drive {
    pub fn flux(self) -> f64 {
        match self {
            Drive::ConstantPressure { flux } => flux,
            Drive::ConstantFlux => 1.0,
        }
    }

    /// Decay rate per unit `lambda * int a dx`.
    pub(crate) fn decay_scale(self) -> Result<f64, ModelError> {
        let u = self.flux();
        if u > 0.0 && u.is_finite() {
            Ok(FRAC_PI_4 / u)
        } else {
            Err(ModelError::DegenerateFlow(u))
        }
    }
}

/// One particle species of the feed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Species {
    /// Feed mass fraction.
    pub xi: f64,
    /// Deposition coefficient in the transport equation.
    pub lambda: f64,
    /// Wall growth per unit concentration relative to species 1.
    pub beta: f64,
}

impl Species {
    /// Growth coefficient used in the fouling law. A species that cannot deposit adds no growth.
    pub fn deposition_weight(&self) -> f64 {
        if self.lambda > 0.0 {
            self.beta
        } else {
            0.0
        }
    }
}

/// Screened deposition: the wall gets less sticky as material accumulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreeningParams {
    pub lambda_clean: f64,
    pub lambda_fouled: f64,
    pub h0: f64,
}

impl ScreeningParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "screening length must be positive, got {}",
                self.h0
            )));
        }
        if !(self.lambda_clean > 0.0 && self.lambda_clean.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "clean-wall coefficient must be positive, got {}",
                self.lambda_clean
            )));
        }
        if !(self.lambda_fouled >= 0.0 && self.lambda_fouled.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "fouled-wall coefficient must be nonnegative, got {}",
                self.lambda_fouled
            )));
        }
        Ok(())
    }

    pub fn is_trivial(&self) -> bool {
        self.lambda_clean == self.lambda_fouled
    }
}

/// `lambda(h) = lambda_fouled + (lambda_clean - lambda_fouled) * exp(-h / h0)`.
pub fn screened_lambda(screening: &ScreeningParams, h: f64) -> Result<f64, ModelError> {
    screening.validate()?;
    if !(h >= 0.0) {
        return Err(ModelError::InvalidParameter(format!(
            "deposited thickness must be nonnegative, got {h}"
        )));
    }
    Ok(screened_value(screening, h))
}

fn screened_value(s: &ScreeningParams, h: f64) -> f64 {
    s.lambda_fouled + (s.lambda_clean - s.lambda_fouled) * (-h / s.h0).exp()
}

/// Feed composition plus optional screening per species.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedSpec {
    species: Vec<Species>,
    screening: Option<Vec<ScreeningParams>>,
}

impl FeedSpec {
    pub fn new(species: Vec<Species>) -> Result<Self, ModelError> {
        if species.is_empty() {
            return Err(ModelError::InvalidParameter("feed has no species".into()));
        }
        for (i, s) in species.iter().enumerate() {
            let ok = s.xi > 0.0
                && s.xi <= 1.0
                && s.lambda >= 0.0
                && s.lambda.is_finite()
                && s.beta >= 0.0
                && s.beta.is_finite();
            if !ok {
                return Err(ModelError::InvalidParameter(format!(
                    "species {} has invalid parameters {s:?}",
                    i + 1
                )));
            }
        }
        let total: f64 = species.iter().map(|s| s.xi).sum();
        if (total - 1.0).abs() > FEED_SUM_TOL {
            return Err(ModelError::InvalidParameter(format!(
                "feed fractions sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            species,
            screening: None,
        })
    }

    /// Species with `lambda_i = beta_i * lambda1`, the equal-density coupling.
    pub fn coupled(xi: &[f64], beta: &[f64], lambda1: f64) -> Result<Self, ModelError> {
        if xi.len() != beta.len() {
            return Err(ModelError::InvalidParameter(format!(
                "{} fractions but {} deposition ratios",
                xi.len(),
                beta.len()
            )));
        }
        Self::new(
            xi.iter()
                .zip(beta)
                .map(|(&xi, &beta)| Species {
                    xi,
                    lambda: beta * lambda1,
                    beta,
                })
                .collect(),
        )
    }

    /// Two species with fractions `(xi, 1 - xi)` and ratios `(1, beta)`.
    pub fn two_species(xi: f64, beta: f64, lambda1: f64) -> Result<Self, ModelError> {
        Self::coupled(&[xi, 1.0 - xi], &[1.0, beta], lambda1)
    }

    pub fn with_screening(mut self, screening: Vec<ScreeningParams>) -> Result<Self, ModelError> {
        if screening.len() != self.species.len() {
            return Err(ModelError::InvalidParameter(format!(
                "{} screening entries for {} species",
                screening.len(),
                self.species.len()
            )));
        }
        for s in &screening {
            s.validate()?;
        }
        self.screening = Some(screening);
        Ok(self)
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn screening(&self) -> Option<&[ScreeningParams]> {
        self.screening.as_deref()
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    /// Inlet concentrations of the raw feed.
    pub fn inlet(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.xi).collect()
    }
}

/// `c(x_k) = inlet * exp(-lambda * pi / (4u) * int_0^x a)`.
pub fn concentration_profile(
    profile: &PoreProfile,
    drive: Drive,
    species: &Species,
    inlet: f64,
) -> Result<Vec<f64>, ModelError> {
    let scale = drive.decay_scale()?;
    let mut cum = vec![0.0; profile.radii.len()];
    cumulative_trapezoid(&profile.radii, profile.spacing(), &mut cum);
    let mut out = vec![0.0; cum.len()];
    fill_decay(&cum, scale * species.lambda, inlet, &mut out);
    Ok(out)
}

/// Concentration with the coefficient replaced pointwise by its screened value.
/// The deposited thickness is measured against `initial`.
pub fn screened_concentration_profile(
    profile: &PoreProfile,
    initial: &PoreProfile,
    drive: Drive,
    screening: &ScreeningParams,
    inlet: f64,
) -> Result<Vec<f64>, ModelError> {
    screening.validate()?;
    if initial.radii.len() != profile.radii.len() {
        return Err(ModelError::GridMismatch {
            expected: profile.radii.len(),
            found: initial.radii.len(),
        });
    }
    let scale = drive.decay_scale()?;
    let n = profile.radii.len();
    let mut out = vec![0.0; n];
    if screening.is_trivial() {
        let mut cum = vec![0.0; n];
        cumulative_trapezoid(&profile.radii, profile.spacing(), &mut cum);
        fill_decay(&cum, scale * screening.lambda_clean, inlet, &mut out);
    } else {
        let mut weighted = vec![0.0; n];
        let mut cum = vec![0.0; n];
        fill_screened_weight(profile, initial, screening, &mut weighted);
        cumulative_trapezoid(&weighted, profile.spacing(), &mut cum);
        fill_decay(&cum, scale, inlet, &mut out);
    }
    Ok(out)
}

/// `lambda_eff(x) * a(x)` on the grid.
pub(crate) fn fill_screened_weight(
    profile: &PoreProfile,
    initial: &PoreProfile,
    screening: &ScreeningParams,
    out: &mut [f64],
) {
    for ((w, &a), &a0) in out.iter_mut().zip(&profile.radii).zip(&initial.radii) {
        let h = (a0 - a).max(0.0);
        *w = screened_value(screening, h) * a;
    }
}

pub(crate) fn fill_decay(cum: &[f64], rate: f64, inlet: f64, out: &mut [f64]) {
    for (c, &s) in out.iter_mut().zip(cum) {
        *c = inlet * (-rate * s).exp();
    }
}

/// Wall growth rate `da/dt = -sum_i beta_i c_i`.
pub fn deposition_rate(
    profile: &PoreProfile,
    concentrations: &[Vec<f64>],
    feed: &FeedSpec,
) -> Result<Vec<f64>, ModelError> {
    if concentrations.len() != feed.len() {
        return Err(ModelError::InvalidParameter(format!(
            "{} concentration arrays for {} species",
            concentrations.len(),
            feed.len()
        )));
    }
    let n = profile.radii.len();
    if let Some(bad) = concentrations.iter().find(|c| c.len() != n) {
        return Err(ModelError::GridMismatch {
            expected: n,
            found: bad.len(),
        });
    }
    let mut rate = vec![0.0; n];
    accumulate_rate(concentrations, feed.species(), &mut rate);
    Ok(rate)
}

pub(crate) fn accumulate_rate(concentrations: &[Vec<f64>], species: &[Species], rate: &mut [f64]) {
    rate.iter_mut().for_each(|r| *r = 0.0);
    for (c, s) in concentrations.iter().zip(species) {
        let w = s.deposition_weight();
        if w == 0.0 {
            continue;
        }
        for (r, &ck) in rate.iter_mut().zip(c) {
            *r -= w * ck;
        }
    }
}
