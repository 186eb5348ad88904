//! Damped least-squares optimizer and the model fits used throughout the
//! analysis chain: Lorentzian lines, 2D Gaussian PSFs, cos^2 polarization
//! response, the saturation law, and the axial dipole-mixture model.

mod lm;
mod mixture;
pub(crate) mod models;

pub use lm::{
    finite_difference_jacobian, levenberg_marquardt, Bound, FitOptions, FitResult, Weighting,
};
pub use mixture::{delta_phi_density, fit_angle_mixture, DPHI_BIN_WIDTH_DEG};
pub use models::{
    cos2_model, fit_cos2, fit_gaussian2d, fit_lorentzian, fit_saturation, Gaussian2dFit,
    PixelGrid,
};
