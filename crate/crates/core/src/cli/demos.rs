//! The canned scenarios behind `demo <name>`.

use std::collections::BTreeMap;

use super::scenario::{Bump, ClassifySettings, DensitySpec, GridSizes, MeasureSpec, Scenario};
use crate::cost::CostSpec;
use crate::error::{Error, Result};
use crate::geometry::Shape;

pub const DEMOS: [&str; 3] = ["quadratic-translate", "a3-ball", "loeper-break"];

fn shape(domain: Shape) -> MeasureSpec {
    MeasureSpec {
        domain: Some(domain),
        points_file: None,
        density: DensitySpec::Uniform,
        jitter: 0.0,
    }
}

fn unit_square() -> Shape {
    Shape::Box {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    }
}

pub fn demo(name: &str) -> Result<Scenario> {
    let base = |cost, source, target, coarse, fine| Scenario {
        name: name.to_string(),
        cost,
        source,
        target,
        grids: GridSizes { coarse, fine },
        seed: 1,
        tolerances: BTreeMap::new(),
        classify: ClassifySettings::default(),
    };
    Ok(match name {
        // The uniform translate of a uniform grid: the discrete map is the
        // translation and u is affine.
        "quadratic-translate" => base(
            CostSpec::Quadratic,
            shape(unit_square()),
            shape(Shape::Box {
                lo: vec![0.3, -0.2],
                hi: vec![1.3, 0.8],
            }),
            16,
            32,
        ),
        "a3-ball" => base(
            CostSpec::SqrtOneMinus,
            shape(Shape::Ball {
                center: vec![0.0, 0.0],
                radius: 0.2,
            }),
            shape(Shape::Ball {
                center: vec![0.45, 0.0],
                radius: 0.2,
            }),
            24,
            48,
        ),
        // Two well-separated bumps over a thin positive background; the
        // map tears between them.
        "loeper-break" => {
            let bump = |x: f64| Bump {
                center: vec![x, 0.5],
                width: 0.06,
                weight: 1.0,
            };
            let mut target = shape(Shape::Box {
                lo: vec![1.5, 0.0],
                hi: vec![2.5, 1.0],
            });
            target.density = DensitySpec::GaussianBumps {
                background: 0.01,
                bumps: vec![bump(1.75), bump(2.25)],
            };
            base(CostSpec::Power { p: 4.0 }, shape(unit_square()), target, 24, 48)
        }
        _ => {
            return Err(Error::Config {
                field: "demo".into(),
                message: format!("unknown demo '{name}', expected one of {DEMOS:?}"),
            })
        }
    })
}
