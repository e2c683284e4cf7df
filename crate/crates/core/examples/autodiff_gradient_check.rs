//! Build a small expression on the tape, backpropagate, and compare against
//! central finite differences.

use cmla::tensor::{grad_check, init_uniform, Graph, Tensor};

fn main() -> cmla::Result<()> {
    let mut g = Graph::new();
    let a = g.param(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])?);
    let x = g.param(Tensor::vector(vec![0.5, -1.0, 0.25]));
    let ax = g.matmul(a, x)?;
    let h = g.tanh(ax);
    let p = g.softmax(h, 0)?;
    let sq = g.mul(p, p)?;
    let loss = g.sum(sq);
    let grads = g.backward(loss)?;
    println!("p = softmax(tanh(Ax)) = {:?}", g.value(p).data());
    println!("sum(p * p) = {}", g.value(loss).data()[0]);
    println!("d/dx = {:?}", grads.get(x).unwrap().data());

    let w = init_uniform(&[4, 3], -1.0, 1.0, 1)?;
    let v = init_uniform(&[3], -1.0, 1.0, 2)?;
    let report = grad_check(
        |g, p| {
            let y = g.matmul(p[0], p[1])?;
            let s = g.sigmoid(y);
            let sq = g.mul(s, s)?;
            Ok(g.sum(sq))
        },
        &[w, v],
        1e-5,
        100,
        0,
    )?;
    println!(
        "grad check over {} coordinates: max relative error {:.2e}",
        report.coordinates, report.max_rel_error
    );
    Ok(())
}
