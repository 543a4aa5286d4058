//! Mean-reverting fundamental value of the traded security.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::Time;
use crate::Error;

/// Round half away from zero. Used wherever a real is converted to a price.
pub fn round_price(x: f64) -> i64 {
    x.round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalParams {
    /// Long-run mean the process reverts to.
    pub mean: f64,
    /// Reversion strength in `[0, 1]`.
    pub kappa: f64,
    /// Variance of the per-tick Gaussian shock.
    pub shock_variance: f64,
    pub horizon: Time,
}

impl FundamentalParams {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::InvalidParameter(format!("kappa {} outside [0, 1]", self.kappa)));
        }
        if !(self.shock_variance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "shock variance {} must be non-negative",
                self.shock_variance
            )));
        }
        if !self.mean.is_finite() || self.mean < 0.0 {
            return Err(Error::InvalidParameter(format!("mean {} must be finite and non-negative", self.mean)));
        }
        Ok(())
    }
}

/// Precomputed `r_0..=r_T`, with `r_0` equal to the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSeries {
    params: FundamentalParams,
    values: Vec<f64>,
}

impl FundamentalSeries {
    /// Draw one shock per tick `1..=T`, in order, and clip the walk at zero.
    pub fn generate<R: Rng + ?Sized>(params: FundamentalParams, rng: &mut R) -> Result<Self, Error> {
        params.validate()?;
        let shock = Normal::new(0.0, params.shock_variance.sqrt())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut values = Vec::with_capacity(params.horizon as usize + 1);
        let mut r = params.mean;
        values.push(r);
        for _ in 1..=params.horizon {
            let u: f64 = shock.sample(rng);
            r = (params.kappa * params.mean + (1.0 - params.kappa) * r + u).max(0.0);
            values.push(r);
        }
        Ok(FundamentalSeries { params, values })
    }

    /// Build from explicit values (index 0 is `r_0`).
    pub fn from_values(params: FundamentalParams, values: Vec<f64>) -> Result<Self, Error> {
        params.validate()?;
        if values.len() != params.horizon as usize + 1 {
            return Err(Error::InvalidParameter(format!(
                "series has {} values, expected {}",
                values.len(),
                params.horizon + 1
            )));
        }
        Ok(FundamentalSeries { params, values })
    }

    pub fn params(&self) -> &FundamentalParams {
        &self.params
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Unrounded `r_t`.
    pub fn raw(&self, t: Time) -> f64 {
        self.values[t as usize]
    }

    /// `r_t` rounded to an integer price.
    ///
    /// # Panics
    ///
    /// When `t` is outside `1..=T`.
    pub fn fundamental_at(&self, t: Time) -> i64 {
        assert!(
            (1..=self.params.horizon).contains(&t),
            "fundamental lookup at t={t} outside 1..={}",
            self.params.horizon
        );
        round_price(self.values[t as usize])
    }

    /// Expected value at the horizon given `r_t`, rounded once at the end.
    pub fn estimate_terminal(&self, t: Time) -> i64 {
        assert!(
            (1..=self.params.horizon).contains(&t),
            "estimate at t={t} outside 1..={}",
            self.params.horizon
        );
        let FundamentalParams {
            mean,
            kappa,
            horizon,
            ..
        } = self.params;
        let decay = (1.0 - kappa).powi((horizon - t) as i32);
        round_price((1.0 - decay) * mean + decay * self.values[t as usize])
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.params.horizon as usize]
    }
}
