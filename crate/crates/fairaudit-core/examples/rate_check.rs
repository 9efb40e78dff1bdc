use fairaudit_core::glm::fit_logistic_weighted;
use nalgebra::{DMatrix, DVector};

fn main() {
    // separated data at small feature scale: saturation needs |b| ~ 37/0.01 = 3700
    let x = [-0.02, -0.01, 0.01, 0.02];
    let design = DMatrix::from_fn(4, 2, |r, c| if c == 0 { 1.0 } else { x[r] });
    let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
    let w = DVector::from_element(4, 1.0);
    println!("{:?}", fit_logistic_weighted(&design, &y, &w).map(|f| (f.coefficients[1], f.converged, f.iterations)));
}
