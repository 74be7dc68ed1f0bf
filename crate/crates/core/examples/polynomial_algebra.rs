//! Polynomial arithmetic, gradients and Lie derivatives.
use compbarrier::polynomial::{Polynomial, VarSpace};

fn main() {
    let space = VarSpace::new(["x", "y"]);
    let x = Polynomial::var(&space, 0);
    let y = Polynomial::var(&space, 1);
    let one = Polynomial::constant(&space, 1.0);

    let b = &(&x * &x) + &(&y * &y);
    let b = &b - &one;
    println!("B = {b}");

    // a damped rotation
    let f = vec![&(-&x) - &y, &x - &y];
    println!("grad B = [{}, {}]", b.gradient()[0], b.gradient()[1]);
    println!("dB/dt along f = {}", b.lie_derivative(&f));

    let p = (&x + &one).pow(3);
    println!("(x + 1)^3 = {p}, at x = 2: {}", p.eval(&[2.0, 0.0]));

    let shifted = b.compose_all(&[&x + &one, y.clone()]).unwrap();
    println!("B(x + 1, y) = {shifted}");
}
