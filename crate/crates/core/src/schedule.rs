//! Map sequences: deterministic lists for sequential systems and i.i.d.
//! Bernoulli draws for the random dynamical system.
//!
//! Symbols are indexed from `k = 1`; the `k`-th symbol is the map applied at
//! time `k`, so `orbit` returns `(T_1 x0, T_2 T_1 x0, ...)`.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::maps::MapParam;
use crate::num::Real;
use crate::rng::{purpose, stream_id, unit_at, Stream};

/// A finite parameter set with a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace<T: Real> {
    omegas: Vec<MapParam<T>>,
    probs: Vec<T>,
    cumulative: Vec<f64>,
    alpha_max: T,
}

impl<T: Real> ParameterSpace<T> {
    /// `alpha_max` is the declared cap on every exponent in the set.
    pub fn new(omegas: Vec<MapParam<T>>, probs: Vec<T>, alpha_max: T) -> Result<Self> {
        for (i, a) in omegas.iter().enumerate() {
            if omegas[..i].iter().any(|b| b.alpha() == a.alpha()) {
                return Err(invalid("omegas", format!("duplicate exponent {}", a.alpha())));
            }
        }
        Self::with_repeats(omegas, probs, alpha_max)
    }

    /// Like [`ParameterSpace::new`] but allows the same map to appear more
    /// than once (degenerate control experiments).
    pub fn with_repeats(omegas: Vec<MapParam<T>>, probs: Vec<T>, alpha_max: T) -> Result<Self> {
        if omegas.is_empty() {
            return Err(invalid("omegas", "parameter set is empty"));
        }
        if omegas.len() != probs.len() {
            return Err(invalid(
                "probs",
                format!("{} probabilities for {} maps", probs.len(), omegas.len()),
            ));
        }
        if !(alpha_max < T::one()) {
            return Err(invalid("alpha_max", "cap must be below 1"));
        }
        if let Some(a) = omegas.iter().find(|a| a.alpha() > alpha_max) {
            return Err(invalid(
                "omegas",
                format!("exponent {} exceeds the cap {alpha_max}", a.alpha()),
            ));
        }
        if probs.iter().any(|&p| !(p >= T::zero())) {
            return Err(invalid("probs", "probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().map(|p| p.as_f64()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("probs", format!("probabilities sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p.as_f64();
                acc
            })
            .collect();
        Ok(Self {
            omegas,
            probs,
            cumulative,
            alpha_max,
        })
    }

    /// Builds a set from raw exponents, taking the largest one as the cap.
    pub fn from_alphas(alphas: &[T], probs: &[T]) -> Result<Self> {
        let omegas = alphas.iter().map(|&a| MapParam::new(a)).collect::<Result<Vec<_>>>()?;
        let cap = alphas.iter().copied().fold(T::zero(), T::max);
        Self::new(omegas, probs.to_vec(), cap)
    }

    pub fn omegas(&self) -> &[MapParam<T>] {
        &self.omegas
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn alpha_max(&self) -> T {
        self.alpha_max
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Index of the symbol selected by a uniform draw `u` in (0, 1).
    #[inline]
    pub fn index_for(&self, u: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.omegas.len() - 1)
            .min(self.omegas.len() - 1)
    }
}

/// A source of maps `T_1, T_2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T: Real> {
    FixedList(Arc<[MapParam<T>]>),
    Constant(MapParam<T>),
    /// i.i.d. symbols; `offset` counts how far the schedule has been shifted.
    Bernoulli {
        space: Arc<ParameterSpace<T>>,
        seed: u64,
        offset: u64,
    },
}

impl<T: Real> Schedule<T> {
    pub fn fixed(maps: Vec<MapParam<T>>) -> Self {
        Schedule::FixedList(maps.into())
    }

    pub fn constant(map: MapParam<T>) -> Self {
        Schedule::Constant(map)
    }

    pub fn bernoulli(space: ParameterSpace<T>, seed: u64) -> Self {
        Schedule::Bernoulli {
            space: Arc::new(space),
            seed,
            offset: 0,
        }
    }

    /// Length of a finite schedule; `None` for unbounded ones.
    pub fn len(&self) -> Option<usize> {
        match self {
            Schedule::FixedList(maps) => Some(maps.len()),
            _ => None,
        }
    }

    pub fn space(&self) -> Option<&ParameterSpace<T>> {
        match self {
            Schedule::Bernoulli { space, .. } => Some(space),
            _ => None,
        }
    }

    /// The map applied at time `k >= 1`.
    pub fn symbol_at(&self, k: usize) -> Result<MapParam<T>> {
        if k == 0 {
            return Err(invalid("k", "schedules are indexed from 1"));
        }
        match self {
            Schedule::FixedList(maps) => maps.get(k - 1).copied().ok_or(Error::Index {
                index: k,
                len: maps.len(),
            }),
            Schedule::Constant(map) => Ok(*map),
            Schedule::Bernoulli {
                space,
                seed,
                offset,
            } => {
                let u = unit_at(*seed, stream_id(purpose::SYMBOLS, 0), offset + k as u64 - 1);
                Ok(space.omegas[space.index_for(u)])
            }
        }
    }

    /// The first `n` symbols, streamed.
    pub fn symbols(&self, n: usize) -> Result<Vec<MapParam<T>>> {
        match self {
            Schedule::FixedList(maps) => {
                if n > maps.len() {
                    return Err(Error::Index {
                        index: n,
                        len: maps.len(),
                    });
                }
                Ok(maps[..n].to_vec())
            }
            Schedule::Constant(map) => Ok(vec![*map; n]),
            Schedule::Bernoulli {
                space,
                seed,
                offset,
            } => {
                let mut stream = Stream::at(*seed, stream_id(purpose::SYMBOLS, 0), *offset);
                Ok((0..n)
                    .map(|_| space.omegas[space.index_for(stream.next_unit())])
                    .collect())
            }
        }
    }

    /// Indices into the parameter set of the first `n` symbols of a
    /// Bernoulli schedule.
    pub fn symbol_indices(&self, n: usize) -> Option<Vec<usize>> {
        match self {
            Schedule::Bernoulli {
                space,
                seed,
                offset,
            } => {
                let mut stream = Stream::at(*seed, stream_id(purpose::SYMBOLS, 0), *offset);
                Some((0..n).map(|_| space.index_for(stream.next_unit())).collect())
            }
            _ => None,
        }
    }

    /// The left shift applied `k` times.
    pub fn shift(&self, k: usize) -> Schedule<T> {
        match self {
            Schedule::FixedList(maps) => {
                let start = k.min(maps.len());
                Schedule::FixedList(maps[start..].into())
            }
            Schedule::Constant(map) => Schedule::Constant(*map),
            Schedule::Bernoulli {
                space,
                seed,
                offset,
            } => Schedule::Bernoulli {
                space: Arc::clone(space),
                seed: *seed,
                offset: offset + k as u64,
            },
        }
    }

    /// The first `n` symbols in reverse order, as a fixed list.
    pub fn reverse_prefix(&self, n: usize) -> Result<Schedule<T>> {
        let mut maps = self.symbols(n)?;
        maps.reverse();
        Ok(Schedule::fixed(maps))
    }

    /// `(T_1 x0, ..., T_n ... T_1 x0)`.
    pub fn orbit(&self, x0: T, n: usize) -> Result<Vec<T>> {
        let maps = self.symbols(n)?;
        let mut x = x0;
        let mut out = Vec::with_capacity(n);
        for map in &maps {
            x = map.apply(x)?;
            out.push(x);
        }
        Ok(out)
    }
}
