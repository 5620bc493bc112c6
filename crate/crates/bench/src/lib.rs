//! Fixtures shared by the benchmarks.

use visco_pt_core::domain::{Loading, Polynomial, ShearColumnMesh, State};
use visco_pt_core::{MaterialModel, Problem};

/// Relaxing material point of the scalar example.
pub fn scalar_relaxation() -> (Problem, State) {
    (
        Problem::new(MaterialModel::default(), Loading::zero()),
        State::material_point(1.5, 1.5),
    )
}

/// Shear column under a top traction, from rest.
pub fn loaded_column(n_elements: usize, a4: f64) -> (Problem, State) {
    let model = MaterialModel {
        a4,
        ..MaterialModel::default()
    };
    let loading = Loading {
        f: Polynomial::constant(0.2),
        g: Polynomial::constant(0.5),
    };
    let mesh = ShearColumnMesh::new(n_elements).expect("positive element count");
    (Problem::new(model, loading), mesh.rest())
}
