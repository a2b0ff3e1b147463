pub mod distance;
pub mod expmap;
pub mod volume;

pub use distance::{distance_field, DistanceField, DistanceFieldConfig};
pub use expmap::{ball_inclusion_check, exp_jacobian, exp_map, jacobian_bound_check};
pub use volume::{ball_volume, sandwich_check, VolumeEstimate};
