//! Secure aggregation for federated averaging: Joye-Libert aggregate
//! encryption and low-overhead pairwise masking, the primitives beneath them,
//! the protocol roles, and an in-process simulator.

pub mod harness;
pub mod ids;
pub mod joye_libert;
pub mod keyagreement;
pub mod lom;
pub mod modmath;
pub mod protocol;
pub mod quantizer;
pub mod shamir;

pub use ids::NodeId;
pub use modmath::SecurityProfile;
