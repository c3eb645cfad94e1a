//! Domains, c-segments, c-convexity and the support/level-set checks.

mod convexity;
mod domain;
mod frame;
mod hull;
mod segment;
mod support;

pub use convexity::{
    analytic_c_convexity, convexity_matrix, domain_c_convexity, image_c_convexity, AnalyticConvexity, DomainConvexity,
    ImageConvexity, ANALYTIC_TOL, GEOM_TOL_REL,
};
pub use domain::{BoundaryEntry, BoundarySample, DefiningFunction, Domain, DomainFile, PhiEntry, Shape};
pub use frame::LocalFrame;
pub use hull::{convex_hull_2d, depth_in_polygon};
pub use segment::{c_segment, CSegment, SegmentSample};
pub use support::{
    default_radii, level_set_monotonicity, level_set_probe, support_interpolation_check, violation_witness, CSupport,
    LevelSetProbe, LevelSetReport, RadiusMargin, SupportMarginReport, LEVEL_SET_TOL,
};

pub(crate) use domain::sphere_directions;
