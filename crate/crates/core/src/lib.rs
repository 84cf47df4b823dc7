//! Surface reconstruction by separability maximization.
//!
//! A closed spline surface is pushed around a point cloud until the regions
//! just inside and just outside of it are maximally distinguishable, judged
//! by a Fisher ratio over occupancy and optional per-point attributes. No
//! training data, no voxel grid, no normal estimation; the only inputs are
//! the points themselves and a handful of window-size parameters.

pub mod bspline;
pub mod error;
pub mod geometry;
pub mod io;
pub mod membrane;
pub mod mesh;
pub mod metrics;
pub mod separability;
pub mod synth;

pub use bspline::{basis, div_count, BSplineSurface, Dir, KnotBasis, SampleGrid};
pub use error::{Error, Result};
pub use geometry::{BoundingBox, Cuboid, KdTree, PointCloud};
pub use io::{
    read_cloud, read_geometry, read_mesh, write_cloud, write_mesh, write_separability_map,
    write_trace, CloudFormat, Geometry, MeshFormat, RunConfig,
};
pub use membrane::{
    init_octagon, reconstruct, IterationRecord, Membrane, MembraneConfig, MembraneState,
    Reconstruction, RunTrace,
};
pub use mesh::TriMesh;
pub use metrics::{FScore, MetricsReport, OrientedSamples};
pub use separability::{
    DensityMode, GridSpec, PairSeparability, RegionCounts, SeparabilityEvaluator, SeparabilityMap,
    SeparabilityWeights, SplitResult,
};
