//! Colombeau generalized functions as ε-nets of smooth representatives.

pub mod asymptotic;
pub mod distribution;
pub mod domain;
pub mod embed;
pub mod error;
pub mod estimate;
pub mod forms;
pub mod gfunc;
pub mod jet;
pub mod manifold;
pub mod mechanics;
pub mod mollifier;
pub mod net;
pub mod ode;
pub mod pairing;
pub mod quad;
pub mod smooth;
pub mod tensor;

pub use distribution::{Diffeo, DiracTerm, DistributionSpec, Piece};
pub use embed::{embed_rn, pullback_commutator_demo};
pub use estimate::{classify_net, NetFit, Settings};
pub use forms::{exterior_d, homotopy_h, insert, integrate_nform, stokes_check, wedge, KForm, StarDomain, StokesDomain};
pub use gfunc::{embed_manifold, sigma_ambient, sigma_embed, CoherenceReport, GeneralizedFunction};
pub use manifold::{point_equiv, Atlas, AtlasSpec, Chart, GeneralizedPoint};
pub use mechanics::{
    hamiltonian_vf, poisson, reflection_limit_check, solve_singular_oscillator, HamiltonianSystem, StrictDeltaNet,
    SymplecticForm,
};
pub use mollifier::{build_mollifier, Mollifier, MollifierKind};
pub use ode::OdeOptions;
pub use pairing::{associate_net, AssociationVerdict, TestDensity};
pub use tensor::{bracket, contract, derivation_to_vector_field, gen_lie_derivative, lie_derivative_tensor, tensor_product, TensorField};
pub use asymptotic::{classify_scalar_net, estimate_order, AsymptoticFit, EpsGrid, OrderConfig, Verdict};
pub use domain::{sup_norm_on_box, BoxDomain};
pub use error::{Error, Result};
pub use jet::Jet;
pub use net::{gn_binary, gn_equal, GeneralizedNumber, Net, RingOp};
pub use smooth::SmoothFn;
