//! Bundled diffeomorphisms used by tests, examples and the CLI fixtures.

use crate::diffeo::{DiffeoSpec, Domain};

/// Unit ball shrinking and regrowing as `r(t, y) = y / (e^{-t^2} + 1)`.
pub fn moving_ball(dim: usize) -> DiffeoSpec {
    let forward: Vec<String> = (1..=dim).map(|i| format!("y{i}/(exp(-t^2)+1)")).collect();
    let inverse: Vec<String> = (1..=dim).map(|i| format!("(exp(-t^2)+1)*x{i}")).collect();
    DiffeoSpec::from_sources(dim, &forward, &inverse, Domain::Ball { radial: true })
        .expect("bundled fixture is well formed")
}

pub fn identity_box(dim: usize) -> DiffeoSpec {
    DiffeoSpec::identity(dim, Domain::Box { extents: vec![1.0; dim] })
        .expect("bundled fixture is well formed")
}

pub fn identity_ball(dim: usize) -> DiffeoSpec {
    DiffeoSpec::identity(dim, Domain::Ball { radial: true }).expect("bundled fixture is well formed")
}

/// Constant dilation `r(t, y) = 2y` of the unit box.
pub fn dilation(dim: usize) -> DiffeoSpec {
    let forward: Vec<String> = (1..=dim).map(|i| format!("2*y{i}")).collect();
    let inverse: Vec<String> = (1..=dim).map(|i| format!("x{i}/2")).collect();
    DiffeoSpec::from_sources(dim, &forward, &inverse, Domain::Box { extents: vec![1.0; dim] })
        .expect("bundled fixture is well formed")
}

/// Planar rotation `r(t, y) = R(t) y` of the unit disc; not separable.
pub fn rotation() -> DiffeoSpec {
    DiffeoSpec::from_sources(
        2,
        &["cos(t)*y1-sin(t)*y2", "sin(t)*y1+cos(t)*y2"],
        &["cos(t)*x1+sin(t)*x2", "-sin(t)*x1+cos(t)*x2"],
        Domain::Ball { radial: false },
    )
    .expect("bundled fixture is well formed")
}

/// Time-dependent shear of the unit square; produces off-diagonal `a_12`.
pub fn shear() -> DiffeoSpec {
    DiffeoSpec::from_sources(
        2,
        &["y1+0.3*sin(t)*y2", "y2"],
        &["x1-0.3*sin(t)*x2", "x2"],
        Domain::Box { extents: vec![1.0, 1.0] },
    )
    .expect("bundled fixture is well formed")
}

/// The planar rotation posed on the disc with the radial reduction requested;
/// its drift is tangential, so radial assembly must refuse it.
pub fn rotation_radial() -> DiffeoSpec {
    DiffeoSpec::new(
        2,
        rotation().forward().to_vec(),
        rotation().inverse().to_vec(),
        Domain::Ball { radial: true },
    )
    .expect("bundled fixture is well formed")
}
