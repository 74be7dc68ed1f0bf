//! Sum-of-squares feasibility through the Gram parameterisation.
use compbarrier::polynomial::{Monomial, Polynomial, VarSpace};
use compbarrier::sdp::{solve, SdpStatus, Tolerances};
use compbarrier::sos::{AffinePoly, SosProgram};

fn check(name: &str, p: &Polynomial, basis_degree: Option<u32>) {
    let mut prog = SosProgram::new();
    prog.add_constraint(name, AffinePoly::from_poly(p), basis_degree)
        .unwrap();
    let sdp = prog.assemble().unwrap();
    let sol = solve(&sdp, &Tolerances::default()).unwrap();
    print!("{name:<28} {:?}", sol.status);
    if sol.status == SdpStatus::Feasible {
        print!(
            "  (Gram identity residual {:.1e})",
            prog.identity_residual(&sol)
        );
    }
    println!();
}

fn main() {
    let x = VarSpace::new(["x"]);
    let sq = Polynomial::from_terms(
        &x,
        [
            (Monomial::one(), 1.0),
            (Monomial::var(0), 2.0),
            (Monomial::from_dense(&[2]), 1.0),
        ],
    );
    check("x^2 + 2x + 1", &sq, None);
    let bad = Polynomial::from_terms(
        &x,
        [(Monomial::one(), -1.0), (Monomial::from_dense(&[2]), 1.0)],
    );
    check("x^2 - 1", &bad, None);

    // nonnegative but not a sum of squares
    let xy = VarSpace::new(["x", "y"]);
    let motzkin = Polynomial::from_terms(
        &xy,
        [
            (Monomial::from_dense(&[4, 2]), 1.0),
            (Monomial::from_dense(&[2, 4]), 1.0),
            (Monomial::from_dense(&[2, 2]), -3.0),
            (Monomial::one(), 1.0),
        ],
    );
    check("Motzkin x^4y^2 + x^2y^4 - 3x^2y^2 + 1", &motzkin, None);
}
