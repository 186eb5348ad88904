//! Inverse analysis: peak detection, molecule cataloging, super-resolution
//! rendering, pair statistics, spectral-diffusion statistics, dipole
//! mapping, and nanocrystal registration.

mod catalog;
mod diffusion;
mod dipoles;
mod pairs;
mod peaks;
mod register;
mod superres;

pub use catalog::{build_catalog, CatalogOptions, MoleculeRecord};
pub use diffusion::{diffusion_stats, percentile, scan_centers, DiffusionStat};
pub use dipoles::dipole_map;
pub use pairs::{close_pair_count, pair_statistics, PairHistogram, PairStat};
pub use peaks::{detect_peaks, PeakCandidate};
pub use register::{phi_position_correlation, register_ncs, RegisteredCloud, RegisteredPoint};
pub use superres::{render_superres, SuperResImage};
