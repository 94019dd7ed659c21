//! The autodiff tape on its own: build a loss, backpropagate, compare with
//! central differences and take a few Adam steps.
//!
//!     cargo run --release --example gradient_check

use gnnx::diff::{finite_diff_check, seeded, AdamState, Matrix, Tape, Tensor, Var};
use rand::Rng;

/// Two-layer softmax regression on fixed inputs.
fn loss(tape: &mut Tape, w1: Var, w2: Var, x: &Matrix) -> gnnx::Result<Var> {
    let x = tape.constant(x.clone())?;
    let h = tape.matmul(x, w1)?;
    let h = tape.relu(h)?;
    let logits = tape.matmul(h, w2)?;
    let p = tape.log_softmax_rows(logits)?;
    let s = tape.sum(p)?;
    tape.scalar_mul(s, -1.0)
}

fn main() -> gnnx::Result<()> {
    let mut rng = seeded(0);
    let x = Matrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
    let w1 = Matrix::from_fn(4, 5, |_, _| rng.gen_range(-1.0..1.0));
    let w2 = Matrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));

    let err = finite_diff_check(|t, v| loss(t, v[0], v[1], &x), &[w1.clone(), w2.clone()], 1e-6, 100, &mut rng)?;
    println!("largest relative gradient error {err:.2e}");

    let mut params = [Tensor::parameter(w1), Tensor::parameter(w2)];
    let mut adam = AdamState::new(0.05);
    for step in 0..=50 {
        let mut tape = Tape::new();
        let v1 = tape.watch(&params[0])?;
        let v2 = tape.watch(&params[1])?;
        let l = loss(&mut tape, v1, v2, &x)?;
        if step % 10 == 0 {
            println!("step {step:>2}: loss {:.4}", tape.value(l).as_scalar()?);
        }
        let grads = tape.backward(l)?;
        for (p, v) in params.iter_mut().zip([v1, v2]) {
            p.zero_grad();
            grads.accumulate_into(v, p)?;
        }
        let [a, b] = &mut params;
        adam.step(&mut [a, b])?;
    }
    Ok(())
}
