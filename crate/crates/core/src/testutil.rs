//! Shared fixtures for unit tests.

use std::f64::consts::TAU;

use crate::ambient::{
    AmbientSpace, BoundaryKind, DensitySpec, Dimension, MetricKind, PeriodicAxis,
};
use crate::quadrature::Quadrature;
use crate::surface::{
    extrinsic_geometry, mesh_from_immersion, ExtrinsicData, Immersion, SurfaceMesh, SurfaceSpec,
};

pub(crate) fn space(d: DensitySpec, b: BoundaryKind) -> AmbientSpace {
    AmbientSpace::euclidean(d.build().unwrap(), b.build().unwrap())
}

pub(crate) fn half_space(d: DensitySpec) -> AmbientSpace {
    space(
        d,
        BoundaryKind::HalfSpace {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
        },
    )
}

pub(crate) fn product(d: DensitySpec, circles: &[usize], slab: bool) -> AmbientSpace {
    let axes = circles
        .iter()
        .map(|&axis| PeriodicAxis {
            axis,
            circumference: TAU,
        })
        .collect();
    let boundary = if slab {
        BoundaryKind::Slab {
            axis: [0.0, 0.0, 1.0],
            half_width: 1.0,
            center: 0.0,
        }
        .build()
        .unwrap()
    } else {
        None
    };
    AmbientSpace::new(
        Dimension::Three,
        MetricKind::FlatProduct(axes),
        d.build().unwrap(),
        boundary,
    )
    .unwrap()
}

pub(crate) fn constant() -> DensitySpec {
    DensitySpec::Constant { psi0: 0.0 }
}

pub(crate) fn radial_log(k: f64) -> DensitySpec {
    DensitySpec::RadialLog { k }
}

pub(crate) fn linear_s() -> DensitySpec {
    DensitySpec::Linear {
        a: [1.0, 0.0, 0.0],
        b: 0.0,
    }
}

pub(crate) fn hemisphere() -> SurfaceSpec {
    SurfaceSpec::Hemisphere {
        radius: 1.0,
        center: [0.0; 3],
    }
}

pub(crate) fn slice() -> SurfaceSpec {
    SurfaceSpec::ProductSlice {
        s0: 0.0,
        circumference: TAU,
        half_width: 1.0,
    }
}

pub(crate) fn geometry(
    space: &AmbientSpace,
    spec: &SurfaceSpec,
    res: usize,
) -> (Immersion, SurfaceMesh, ExtrinsicData) {
    let imm = spec.build().unwrap();
    let mesh = mesh_from_immersion(space, &imm, res).unwrap();
    let data = extrinsic_geometry(space, &imm, &mesh, Quadrature::FINE).unwrap();
    (imm, mesh, data)
}

pub(crate) fn cone_space(alpha: f64, d: DensitySpec) -> AmbientSpace {
    space(
        d,
        BoundaryKind::Cone {
            axis: [0.0, 0.0, 1.0],
            half_angle: alpha,
            apex_exclusion: 1e-3,
        },
    )
}

pub(crate) fn cylinder(d: DensitySpec) -> AmbientSpace {
    space(
        d,
        BoundaryKind::Cylinder {
            axis: [0.0, 0.0, 1.0],
            radius: 1.0,
        },
    )
}

pub(crate) fn disk(height: f64) -> SurfaceSpec {
    SurfaceSpec::FlatDisk {
        radius: 1.0,
        center: [0.0, 0.0, height],
    }
}

pub(crate) fn slice_at(s0: f64) -> SurfaceSpec {
    SurfaceSpec::ProductSlice {
        s0,
        circumference: TAU,
        half_width: 1.0,
    }
}

pub(crate) fn setup(sp: &AmbientSpace, spec: &SurfaceSpec, res: usize) -> (Immersion, SurfaceMesh) {
    let imm = spec.build().unwrap();
    let mesh = mesh_from_immersion(sp, &imm, res).unwrap();
    (imm, mesh)
}
