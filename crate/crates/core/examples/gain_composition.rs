//! Gain matrix and Perron eigenvectors for three fully coupled subsystems
//! with λ = -0.1, α = 0.1, c = 0.0002.
use compbarrier::compose::{build_gain, eigen_residuals, LocalCertificate};
use compbarrier::polynomial::{Polynomial, VarSpace};

fn main() {
    let space = VarSpace::new(["x"]);
    let certs: Vec<LocalCertificate> = (0..3)
        .map(|i| LocalCertificate {
            barrier: Polynomial::var(&space, 0),
            lambda: -0.1,
            eps1: 0.0,
            eps2: 0.0,
            alpha: 0.1,
            c: 0.0002,
            l: 1e4,
            neighbours: (0..3).filter(|&j| j != i).collect(),
            mode_count: 2,
            growth_required: true,
        })
        .collect();
    let g = build_gain(&certs).unwrap();
    println!("A = {:?}", g.a.rows());
    println!("eta = {}", g.eta);
    println!("left  k = {:.4?}, nu = {:.3e}", g.k, g.nu);
    println!("right v = {:.4?}, mu = {:.3e}", g.v, g.mu);
    let (rk, rv) = eigen_residuals(&g);
    println!("eigen-residuals {rk:.1e} {rv:.1e}");
    println!(
        "sum form decays at {:.6}, max form at {:.6}",
        g.nu + g.eta,
        g.mu + g.eta
    );
}
