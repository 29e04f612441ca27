//! Object models, contact simulation, tactile-image rendering, and grasp
//! planning.

mod contact;
mod model;
mod photometric;
mod plan;
mod sdf;

pub use contact::{simulate_contact, GraspPose};
pub use model::{
    bundled_model, bundled_model_names, load_model, parse_model, BUNDLED_MODELS,
};
pub use photometric::{render_tactile_image, PhotometricModel};
pub use plan::{default_opening, plan_grasp_candidates, plan_grasp_grid, PlanParams};
pub use sdf::{raycast, CombineOp, ModelPart, ObjectModel, Primitive, SdfView};
