//! A small semidefinite program: minimise X00 + X11 subject to X01 = 1, X ⪰ 0.
//! The optimum is 2 at X = [[1, 1], [1, 1]].
use compbarrier::sdp::{solve, SdpConstraint, SdpEntry, SdpProblem, Tolerances};

fn main() {
    let mut p = SdpProblem::new(vec![2], 0);
    p.add_constraint(SdpConstraint {
        entries: vec![SdpEntry::new(0, 0, 1, 0.5)],
        rhs: 1.0,
        label: "off-diagonal".into(),
        ..Default::default()
    });
    p.objective = vec![SdpEntry::new(0, 0, 0, 1.0), SdpEntry::new(0, 1, 1, 1.0)];
    let sol = solve(&p, &Tolerances::default()).expect("valid problem");
    println!(
        "status {:?} after {} iterations",
        sol.status, sol.iterations
    );
    let x = &sol.blocks[0];
    println!(
        "X = [[{:.6}, {:.6}], [{:.6}, {:.6}]]",
        x[(0, 0)],
        x[(0, 1)],
        x[(1, 0)],
        x[(1, 1)]
    );
    println!(
        "primal residual {:.2e}, dual residual {:.2e}",
        sol.primal_residual, sol.dual_residual
    );
}
