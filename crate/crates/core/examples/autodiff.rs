//! Reverse-mode gradients on a small graph, then an MLP fitted to a sine with Adam.

use deep_koopman::diffcore::{Activation, AdamConfig, AdamState, Graph, Mlp, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    // loss = mean((x·W)²) for a 2×3 input and a 3×1 weight
    let mut g = Graph::new();
    let x = g.input(Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0]]).unwrap()).unwrap();
    let w = g.param(Tensor::column(&[0.1, -0.2, 0.3])).unwrap();
    let y = g.matmul(x, w).unwrap();
    let sq = g.square(y);
    let loss = g.mean(sq);
    g.forward().unwrap();
    let grads = g.backward(loss).unwrap();
    println!("loss = {:.6}", g.scalar(loss).unwrap());
    println!("dloss/dW = {:?}", grads.get(w).unwrap().data());

    // Fit y = sin(x) on [-π, π] with a 1-16-16-1 tanh network.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut mlp = Mlp::new(&[1, 16, 16, 1], Activation::Tanh, &mut rng).unwrap();
    let xs: Vec<f64> = (0..64).map(|i| -std::f64::consts::PI + i as f64 * 0.1).collect();
    let inputs = Tensor::column(&xs);
    let targets = Tensor::column(&xs.iter().map(|x| x.sin()).collect::<Vec<_>>());

    let mut g = Graph::new();
    let vars = mlp.bind(&mut g).unwrap();
    let xin = g.input(inputs).unwrap();
    let target = g.input(targets).unwrap();
    let out = vars.forward(&mut g, xin).unwrap();
    let mse = g.mse(out, target).unwrap();
    let config = AdamConfig {
        lr: 1e-2,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(config, mlp.params());
    for step in 0..=2000 {
        vars.load(&mut g, &mlp).unwrap();
        g.forward().unwrap();
        let grads = g.backward(mse).unwrap();
        if step % 500 == 0 {
            println!("step {step:4}  mse {:.3e}", g.scalar(mse).unwrap());
        }
        adam.step(&mut mlp.params_mut(), grads.as_slice()).unwrap();
    }
    println!("sin(1.0) ≈ {:.4}", mlp.forward_one(&[1.0]).unwrap()[0]);
}
