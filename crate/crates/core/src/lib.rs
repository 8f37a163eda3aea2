pub mod cone;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod maps;
pub mod martingale;
pub mod num;
pub mod observable;
pub mod record;
pub mod rng;
pub mod schedule;
pub mod selftest;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};

pub type Map = maps::MapParam<f64>;
pub type Grid = grid::DensityGrid<f64>;
pub type MeshF64 = grid::Mesh<f64>;
pub type Measure = grid::MeasureKind<f64>;
pub type Space = schedule::ParameterSpace<f64>;
pub type Sched = schedule::Schedule<f64>;
pub type Phi = observable::Observable<f64>;
pub type Operator = transfer::TransferOperator<f64>;
pub type Cache = transfer::OperatorCache<f64>;
pub type Cone = cone::ConeParams<f64>;
