//! Reverse-mode gradients on the tape and a finite-difference check.

use cotune::autodiff::{central_difference, grad_check, Tape};

fn main() {
    let tape = Tape::new();
    let x = tape.leaf(0.7).unwrap();
    let y = tape.leaf(1.9).unwrap();
    let f = (x * y).sin() + x.tanh() / y;
    let grads = tape.backward(f).unwrap();
    println!("f(0.7, 1.9) = {:.6}", f.value());
    println!("df/dx = {:.6}, df/dy = {:.6}", grads.wrt(x), grads.wrt(y));

    let plain = |p: &[f64]| (p[0] * p[1]).sin() + p[0].tanh() / p[1];
    let numeric = central_difference(plain, &[0.7, 1.9], |_| 1e-6);
    println!("central differences: {:.6}, {:.6}", numeric[0], numeric[1]);

    let ok = grad_check(|_, v| (v[0] * v[1]).sin() + v[0].tanh() / v[1], &[0.7, 1.9], 1e-6, 1e-6);
    println!("grad_check: {}", if ok { "agree" } else { "disagree" });
    println!("tape holds {} nodes", tape.len());
}
