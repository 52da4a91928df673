// Differentiating through a gradient: the tape records backward passes
// as ordinary ops, so `grad` can be applied to its own output.

use fedgm::autodiff::{finite_difference_check, Tape};
use fedgm::tensor::Tensor;

pub fn run_example() -> fedgm::Result<()> {
    // f(x) = sum(sigmoid(x)^3); g = df/dx; h = d(sum(g^2))/dx
    let tape = Tape::new();
    let x = tape.leaf(Tensor::row_vector(&[-1.0, 0.25, 2.0]));
    let s = tape.sigmoid(x)?;
    let f = tape.sum_all(tape.mul(tape.mul(s, s)?, s)?)?;
    let g = tape.grad(f, &[x])?[0];
    let gg = tape.sum_all(tape.mul(g, g)?)?;
    let h = tape.grad(gg, &[x])?[0];
    println!("f = {:.6}", tape.value(f).item());
    println!("df/dx = {:?}", tape.value(g).data());
    println!("d|df/dx|^2/dx = {:?}", tape.value(h).data());

    let err = finite_difference_check(
        |t, x| {
            let s = t.sigmoid(x)?;
            let f = t.sum_all(t.mul(t.mul(s, s)?, s)?)?;
            let g = t.grad(f, &[x])?[0];
            t.sum_all(t.mul(g, g)?)
        },
        &Tensor::row_vector(&[-1.0, 0.25, 2.0]),
        1e-6,
    )?;
    println!("max relative error vs central differences: {err:.2e}");
    assert!(err < 1e-6);
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedgm::Result<()> {
    run_example()
}
