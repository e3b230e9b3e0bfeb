//! Analytic true-coefficient models ("phantoms") for synthetic experiments.
//!
//! Two families: smooth Gaussian bumps over the unit background,
//! `1 + sum_i a_i exp(-|x - c_i|^2 / 0.2)`, and sharp spherical inclusions
//! of given diameter and contrast. Sampling a phantom onto a mesh projects
//! the nodal values to the admissible set, so the frozen exterior stays at
//! the background value exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, Vec3};
use crate::mesh::{BoxBounds, TetMesh};
use crate::objective::{AdmissibleSet, PermittivityField};

/// Squared-distance scale of the Gaussian bumps.
const GAUSSIAN_WIDTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub center: Vec3,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub diameter: f64,
    /// Coefficient value inside the inclusion.
    pub contrast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Empty,
    Gaussians,
    Spheres,
}

/// Declarative description of the true coefficient. Only the list matching
/// `kind` is consulted; the other must be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub gaussians: Vec<Gaussian>,
    pub spheres: Vec<Sphere>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec { kind: PhantomKind::Empty, gaussians: Vec::new(), spheres: Vec::new() }
    }
}

impl PhantomSpec {
    pub fn two_gaussians() -> Self {
        PhantomSpec {
            kind: PhantomKind::Gaussians,
            gaussians: vec![
                Gaussian { center: [0.3, 0.0, 0.0], amplitude: 1.0 },
                Gaussian { center: [-0.4, 0.2, 0.0], amplitude: 1.0 },
            ],
            spheres: Vec::new(),
        }
    }

    pub fn single_sphere(center: Vec3, diameter: f64, contrast: f64) -> Self {
        PhantomSpec {
            kind: PhantomKind::Spheres,
            gaussians: Vec::new(),
            spheres: vec![Sphere { center, diameter, contrast }],
        }
    }

    /// Checks internal consistency and that every feature center lies
    /// strictly inside `inner` (the region where the coefficient is free).
    pub fn validate(&self, inner: &BoxBounds) -> Result<()> {
        match self.kind {
            PhantomKind::Empty => {
                if !self.gaussians.is_empty() || !self.spheres.is_empty() {
                    return Err(Error::config(
                        "empty phantom must not list any features".to_string(),
                    ));
                }
            }
            PhantomKind::Gaussians => {
                if self.gaussians.is_empty() || !self.spheres.is_empty() {
                    return Err(Error::config(
                        "gaussian phantom needs gaussians and no spheres".to_string(),
                    ));
                }
            }
            PhantomKind::Spheres => {
                if self.spheres.is_empty() || !self.gaussians.is_empty() {
                    return Err(Error::config(
                        "sphere phantom needs spheres and no gaussians".to_string(),
                    ));
                }
            }
        }
        for g in &self.gaussians {
            if !(g.amplitude.is_finite() && g.amplitude >= 0.0) {
                return Err(Error::config(format!(
                    "gaussian amplitude must be a nonnegative number, got {}",
                    g.amplitude
                )));
            }
            check_center(g.center, inner)?;
        }
        for s in &self.spheres {
            if !(s.diameter > 0.0) {
                return Err(Error::config(format!(
                    "sphere diameter must be positive, got {}",
                    s.diameter
                )));
            }
            if !(s.contrast.is_finite() && s.contrast >= 1.0) {
                return Err(Error::config(format!(
                    "sphere contrast must be at least the background 1, got {}",
                    s.contrast
                )));
            }
            check_center(s.center, inner)?;
        }
        Ok(())
    }

    /// The analytic coefficient at a point, before any projection.
    pub fn eval(&self, p: Vec3) -> f64 {
        match self.kind {
            PhantomKind::Empty => 1.0,
            PhantomKind::Gaussians => {
                1.0 + self
                    .gaussians
                    .iter()
                    .map(|g| {
                        let d = geo::sub(p, g.center);
                        g.amplitude * (-geo::dot(d, d) / GAUSSIAN_WIDTH).exp()
                    })
                    .sum::<f64>()
            }
            PhantomKind::Spheres => self
                .spheres
                .iter()
                .filter(|s| geo::dist(p, s.center) <= 0.5 * s.diameter)
                .map(|s| s.contrast)
                .fold(1.0, f64::max),
        }
    }
}

fn check_center(center: Vec3, inner: &BoxBounds) -> Result<()> {
    if !inner.strictly_inside(center, 0.0) {
        return Err(Error::config(format!(
            "phantom center ({}, {}, {}) lies outside the interior box",
            center[0], center[1], center[2]
        )));
    }
    Ok(())
}

/// Samples the phantom at the mesh vertices and projects onto the
/// admissible set (clamp to `[1, eps_max]`, background on the frozen
/// exterior).
pub fn synthesize_phantom(
    spec: &PhantomSpec,
    mesh: &TetMesh,
    admissible: &AdmissibleSet,
) -> Result<PermittivityField> {
    spec.validate(&mesh.inner_box)?;
    let mut values: Vec<f64> = mesh.vertices.iter().map(|&p| spec.eval(p)).collect();
    admissible.project(&mut values);
    PermittivityField::new(mesh, admissible, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_mesh, BoxBounds};

    fn desk_mesh() -> TetMesh {
        let outer = BoxBounds::new([-0.8; 3], [0.8; 3]).unwrap();
        let inner = BoxBounds::new([-0.6; 3], [0.6; 3]).unwrap();
        build_uniform_mesh(outer, inner, 0.2).unwrap()
    }

    #[test]
    fn empty_phantom_is_the_background() {
        let mesh = desk_mesh();
        let adm = AdmissibleSet::new(&mesh, 5.0).unwrap();
        let field = synthesize_phantom(&PhantomSpec::default(), &mesh, &adm).unwrap();
        assert!(field.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn two_gaussian_value_at_the_first_center() {
        // At the first center the first bump contributes its full amplitude
        // and the second decays with the squared distance 0.49 + 0.04 = 0.53.
        let spec = PhantomSpec::two_gaussians();
        let expected = 2.0 + (-0.53 / 0.2_f64).exp();
        assert!((spec.eval([0.3, 0.0, 0.0]) - expected).abs() < 1e-12);
        assert!((expected - 2.07).abs() < 5e-3);
    }

    #[test]
    fn sphere_phantom_is_an_indicator() {
        let spec = PhantomSpec::single_sphere([0.2, 0.0, 0.0], 0.3, 2.0);
        assert_eq!(spec.eval([0.2, 0.0, 0.0]), 2.0);
        assert_eq!(spec.eval([0.2, 0.0, 0.149]), 2.0);
        assert_eq!(spec.eval([0.2, 0.0, 0.151]), 1.0);
        assert_eq!(spec.eval([-0.5, 0.3, 0.0]), 1.0);
    }

    #[test]
    fn centers_must_lie_inside_the_interior_box() {
        let mesh = desk_mesh();
        let adm = AdmissibleSet::new(&mesh, 5.0).unwrap();
        let spec = PhantomSpec::single_sphere([0.7, 0.0, 0.0], 0.2, 2.0);
        assert!(synthesize_phantom(&spec, &mesh, &adm).is_err());
        let spec = PhantomSpec {
            kind: PhantomKind::Gaussians,
            gaussians: vec![Gaussian { center: [0.0, -0.9, 0.0], amplitude: 1.0 }],
            spheres: Vec::new(),
        };
        assert!(synthesize_phantom(&spec, &mesh, &adm).is_err());
    }

    #[test]
    fn sampling_projects_to_admissibility() {
        let mesh = desk_mesh();
        let adm = AdmissibleSet::new(&mesh, 3.0).unwrap();
        let spec = PhantomSpec {
            kind: PhantomKind::Gaussians,
            gaussians: vec![Gaussian { center: [0.0; 3], amplitude: 10.0 }],
            spheres: Vec::new(),
        };
        let field = synthesize_phantom(&spec, &mesh, &adm).unwrap();
        let center = mesh
            .vertices
            .iter()
            .position(|&p| geo::norm(p) < 1e-12)
            .expect("origin is a mesh vertex");
        assert_eq!(field.values[center], 3.0);
        for (i, &v) in field.values.iter().enumerate() {
            assert!((1.0..=3.0).contains(&v));
            if adm.frozen[i] {
                assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn kind_and_feature_lists_must_agree() {
        let inner = BoxBounds::new([-0.6; 3], [0.6; 3]).unwrap();
        let mixed = PhantomSpec {
            kind: PhantomKind::Gaussians,
            gaussians: vec![Gaussian { center: [0.0; 3], amplitude: 1.0 }],
            spheres: vec![Sphere { center: [0.0; 3], diameter: 0.1, contrast: 2.0 }],
        };
        assert!(mixed.validate(&inner).is_err());
        let empty = PhantomSpec { kind: PhantomKind::Gaussians, ..PhantomSpec::default() };
        assert!(empty.validate(&inner).is_err());
    }
}
