//! Mesh loading, normalization, cameras and first-hit ray casting.

mod camera;
mod mesh;
mod raycast;

pub use camera::{orbit_poses, sample_camera_poses, CameraPose, DEFAULT_FOV_DEG, MIN_CAMERA_RADIUS};
pub use mesh::{icosphere, load_mesh, normalize_unit_sphere, parse_obj, two_spheres, unit_quad, Mesh, Vec3};
pub use raycast::{
    ray_triangle_intersect, render_geometry_pass, Bvh, Hit, HitMap, IntersectionBuffer, Raycaster, RAY_EPS,
};
