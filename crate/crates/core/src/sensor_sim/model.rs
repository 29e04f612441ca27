use std::path::Path;

use nalgebra::Vector3;

use crate::geometry::RigidTransform;
use crate::sensor_sim::sdf::{CombineOp, ModelPart, ObjectModel, Primitive};
use crate::{Error, Result};

/// Parses the plain-text object model format.
///
/// One statement per line; `#` starts a comment. An optional `name <ident>`
/// line sets the model name. Every other line is a part:
///
/// ```text
/// sphere   <radius>                       [pose tx ty tz rx ry rz] [subtract]
/// cylinder <radius> <height>              [pose tx ty tz rx ry rz] [subtract]
/// cone     <base_radius> <slope_deg> <height>   ...
/// box      <size_x> <size_y> <size_z>           ...
/// pyramid  <base_side> <slope_deg> <height>     ...
/// ```
///
/// Pose is a translation in mm plus XYZ Euler angles in degrees applied as
/// R = Rz(rz) * Ry(ry) * Rx(rx); it defaults to identity. Parts combine in
/// file order, union unless marked `subtract`.
pub fn parse_model(default_name: &str, text: &str) -> Result<ObjectModel> {
    let mut name = default_name.to_string();
    let mut parts = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: String| Error::ModelParse { line: lineno, msg };
        match tokens[0] {
            "name" => {
                if tokens.len() != 2 {
                    return Err(err("name takes exactly one identifier".into()));
                }
                name = tokens[1].to_string();
            }
            shape => {
                let arity = match shape {
                    "sphere" => 1,
                    "cylinder" => 2,
                    "cone" | "pyramid" => 3,
                    "box" => 3,
                    other => return Err(err(format!("unknown shape {other:?}"))),
                };
                if tokens.len() < 1 + arity {
                    return Err(err(format!("{shape} needs {arity} parameters")));
                }
                let nums: Vec<f64> = tokens[1..1 + arity]
                    .iter()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| err(format!("bad number {t:?}")))
                    })
                    .collect::<Result<_>>()?;
                let primitive = match shape {
                    "sphere" => Primitive::Sphere { radius: nums[0] },
                    "cylinder" => Primitive::Cylinder {
                        radius: nums[0],
                        height: nums[1],
                    },
                    "cone" => Primitive::Cone {
                        base_radius: nums[0],
                        slope_deg: nums[1],
                        height: nums[2],
                    },
                    "box" => Primitive::Cuboid {
                        size_x: nums[0],
                        size_y: nums[1],
                        size_z: nums[2],
                    },
                    "pyramid" => Primitive::Pyramid {
                        base_side: nums[0],
                        slope_deg: nums[1],
                        height: nums[2],
                    },
                    _ => unreachable!(),
                };
                primitive
                    .validate()
                    .map_err(|e| err(format!("invalid {shape}: {e}")))?;

                let mut rest = &tokens[1 + arity..];
                let mut pose = RigidTransform::identity();
                if rest.first() == Some(&"pose") {
                    if rest.len() < 7 {
                        return Err(err("pose needs 6 numbers: tx ty tz rx ry rz".into()));
                    }
                    let v: Vec<f64> = rest[1..7]
                        .iter()
                        .map(|t| {
                            t.parse::<f64>()
                                .map_err(|_| err(format!("bad pose number {t:?}")))
                        })
                        .collect::<Result<_>>()?;
                    let rot = RigidTransform::rotation_z(v[5].to_radians())
                        .compose(&RigidTransform::rotation_y(v[4].to_radians()))
                        .compose(&RigidTransform::rotation_x(v[3].to_radians()));
                    pose = RigidTransform::from_translation(Vector3::new(v[0], v[1], v[2]))
                        .compose(&rot);
                    rest = &rest[7..];
                }
                let op = match rest {
                    [] => CombineOp::Union,
                    ["subtract"] => CombineOp::Subtract,
                    ["union"] => CombineOp::Union,
                    other => {
                        return Err(err(format!("unexpected trailing tokens {other:?}")))
                    }
                };
                parts.push(ModelPart {
                    primitive,
                    pose,
                    op,
                });
            }
        }
    }
    ObjectModel::new(name, parts).map_err(|e| match e {
        Error::Usage(msg) => Error::ModelParse { line: 0, msg },
        other => other,
    })
}

pub fn load_model(path: &Path) -> Result<ObjectModel> {
    let text = std::fs::read_to_string(path)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("object");
    parse_model(stem, &text)
}

/// Models shipped with the crate: five calibration shapes (`cal_*`), five
/// evaluation primitives, and one composite localization object.
pub const BUNDLED_MODELS: &[(&str, &str)] = &[
    ("cal_sphere", include_str!("../../models/cal_sphere.txt")),
    ("cal_cone1", include_str!("../../models/cal_cone1.txt")),
    ("cal_cone2", include_str!("../../models/cal_cone2.txt")),
    ("cal_hollow", include_str!("../../models/cal_hollow.txt")),
    ("cal_pyramid", include_str!("../../models/cal_pyramid.txt")),
    ("cylinder", include_str!("../../models/cylinder.txt")),
    ("semicone", include_str!("../../models/semicone.txt")),
    (
        "double_cylinder",
        include_str!("../../models/double_cylinder.txt"),
    ),
    ("cuboid", include_str!("../../models/cuboid.txt")),
    ("semipyramid", include_str!("../../models/semipyramid.txt")),
    ("scissors", include_str!("../../models/scissors.txt")),
];

pub fn bundled_model_names() -> Vec<&'static str> {
    BUNDLED_MODELS.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_model(name: &str) -> Result<ObjectModel> {
    for (n, text) in BUNDLED_MODELS {
        if *n == name {
            return parse_model(n, text);
        }
    }
    Err(Error::Usage(format!(
        "no bundled model named {name:?} (available: {})",
        bundled_model_names().join(", ")
    )))
}
