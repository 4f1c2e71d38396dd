//! Functions that forward transforms can be applied to.

use std::borrow::Cow;

use crate::error::{RadonError, Result};
use crate::phantom::{FunctionSpace, Phantom, SeparableFunction, ShiftedY};
use crate::types::{Field, TransformKind};

/// What a source claims about its function space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// Verified member of the given space.
    Certified(FunctionSpace),
    /// A phantom whose certification has not succeeded.
    Uncertified,
    /// Arbitrary user-supplied data; no claim is made or checked.
    Unchecked,
}

/// A function `f(x, y)` on `R^n x R`.
pub trait Source: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], y: f64) -> f64;

    fn membership(&self) -> Membership {
        Membership::Unchecked
    }

    /// Product-form view used by the fast forward path.
    fn separable(&self) -> Option<(Cow<'_, SeparableFunction>, f64)> {
        None
    }

    /// Short human-readable description for metadata.
    fn describe(&self) -> String;
}

/// Refuses sources that are known not to satisfy the requirements of `kind`.
pub fn require_membership(source: &dyn Source, kind: TransformKind) -> Result<()> {
    let Some(required) = FunctionSpace::required_by(kind) else {
        return Ok(());
    };
    match source.membership() {
        Membership::Unchecked => Ok(()),
        Membership::Certified(space) if space.contained_in(required) => Ok(()),
        Membership::Certified(space) => Err(RadonError::Uncertified(format!(
            "kind {kind}: source is certified for {space}, which does not imply {required}"
        ))),
        Membership::Uncertified => Err(RadonError::Uncertified(format!(
            "kind {kind}: phantom has not passed certification for {required}"
        ))),
    }
}

impl Source for Phantom {
    fn dim(&self) -> usize {
        self.n()
    }

    fn eval(&self, x: &[f64], y: f64) -> f64 {
        Phantom::eval(self, x, y)
    }

    fn membership(&self) -> Membership {
        if self.is_certified() {
            Membership::Certified(self.space)
        } else {
            Membership::Uncertified
        }
    }

    fn separable(&self) -> Option<(Cow<'_, SeparableFunction>, f64)> {
        Some((Cow::Owned(Phantom::separable(self)), 0.0))
    }

    fn describe(&self) -> String {
        let exps: Vec<String> = self
            .axis_profiles
            .iter()
            .map(|p| p.exponent.to_string())
            .collect();
        format!(
            "phantom {} x-exponents [{}] y-exponent {}",
            self.space,
            exps.join(","),
            self.y_profile.exponent
        )
    }
}

impl Source for SeparableFunction {
    fn dim(&self) -> usize {
        SeparableFunction::dim(self)
    }

    fn eval(&self, x: &[f64], y: f64) -> f64 {
        SeparableFunction::eval(self, x, y)
    }

    fn membership(&self) -> Membership {
        match self.certified {
            Some(space) => Membership::Certified(space),
            None => Membership::Unchecked,
        }
    }

    fn separable(&self) -> Option<(Cow<'_, SeparableFunction>, f64)> {
        Some((Cow::Borrowed(self), 0.0))
    }

    fn describe(&self) -> String {
        format!("separable function, y-polynomial degree {}", self.y_factor.coeffs.len() - 1)
    }
}

impl Source for ShiftedY<'_> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn eval(&self, x: &[f64], y: f64) -> f64 {
        self.f.eval(x, y - self.delta)
    }

    fn separable(&self) -> Option<(Cow<'_, SeparableFunction>, f64)> {
        Some((Cow::Borrowed(self.f), self.delta))
    }

    fn describe(&self) -> String {
        format!("{} shifted by {} in y", Source::describe(self.f), self.delta)
    }
}

/// Sampled field, multilinear between nodes and zero outside the grid.
impl Source for Field {
    fn dim(&self) -> usize {
        self.grid.n()
    }

    fn eval(&self, x: &[f64], y: f64) -> f64 {
        let axes: Vec<_> = self
            .grid
            .x_axes
            .iter()
            .chain(std::iter::once(&self.grid.y_axis))
            .collect();
        let dims: Vec<usize> = axes.iter().map(|a| a.count).collect();
        let mut base = Vec::with_capacity(axes.len());
        let mut frac = Vec::with_capacity(axes.len());
        for (k, a) in axes.iter().enumerate() {
            let v = if k < x.len() { x[k] } else { y };
            let pos = (v - a.min) / a.step();
            if !(pos >= 0.0 && pos <= (a.count - 1) as f64) {
                return 0.0;
            }
            let i = (pos.floor() as usize).min(a.count - 2);
            base.push(i);
            frac.push(pos - i as f64);
        }
        let d = axes.len();
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                weight *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat = flat * dims[k] + base[k] + bit;
            }
            if weight != 0.0 {
                total += weight * self.values[flat];
            }
        }
        total
    }

    fn describe(&self) -> String {
        format!("sampled field with {} values", self.values.len())
    }
}

/// Wraps a closure as an unchecked source.
pub struct FnSource<F> {
    pub dim: usize,
    pub f: F,
    pub label: String,
}

impl<F: Fn(&[f64], f64) -> f64 + Sync> FnSource<F> {
    pub fn new(dim: usize, label: impl Into<String>, f: F) -> Self {
        FnSource {
            dim,
            f,
            label: label.into(),
        }
    }
}

impl<F: Fn(&[f64], f64) -> f64 + Sync> Source for FnSource<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], y: f64) -> f64 {
        (self.f)(x, y)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}
