//! Reverse-mode differentiation over unrolled sequences.
//!
//! A [`Tape`] records array-level primitives (affine maps, activations,
//! elementwise products, concatenation, summation) during the forward pass
//! and replays them in reverse to accumulate gradients — backpropagation
//! through time falls out of recording a recurrent cell once per step.
//! [`adam_step`] applies the optimizer and [`grad_check`] verifies any
//! recorded scalar function against central finite differences.

mod adam;
mod array;
mod cell;
mod grad_check;
mod params;
mod tape;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use array::RealArray;
pub use cell::{lstm_cell, rnn_cell, LstmCellNodes, LstmCellParams, GATES};
pub use grad_check::grad_check;
pub use params::{uniform_fan_in, BoundParams, Gradients, ParameterSet};
pub use tape::{Activation, NodeId, Tape};

#[cfg(test)]
mod bptt_tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Three-step LSTM unroll with a scalar loss; gradients must match
    /// central finite differences.
    #[test]
    fn lstm_unroll_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (d, h) = (2, 3);
        let cell = LstmCellParams::init(d, h, &mut rng);
        let mut params = ParameterSet::new();
        cell.store(&mut params, "lstm").unwrap();
        let inputs: Vec<Vec<f64>> =
            (0..3).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();

        let err = grad_check(
            |p, tape| {
                let mut wx = [NodeId(0); 4];
                let mut wh = [NodeId(0); 4];
                let mut b = [NodeId(0); 4];
                for k in 0..4 {
                    wx[k] = tape.param(&format!("lstm.wx_{}", GATES[k]), p.get(&format!("lstm.wx_{}", GATES[k]))?)?;
                    wh[k] = tape.param(&format!("lstm.wh_{}", GATES[k]), p.get(&format!("lstm.wh_{}", GATES[k]))?)?;
                    b[k] = tape.param(&format!("lstm.b_{}", GATES[k]), p.get(&format!("lstm.b_{}", GATES[k]))?)?;
                }
                let nodes = LstmCellNodes { wx, wh, b };
                let mut hn = tape.constant(RealArray::zeros(1, 3));
                let mut cn = tape.constant(RealArray::zeros(1, 3));
                let mut loss = None;
                for x in &inputs {
                    let xn = tape.constant(RealArray::row(x)?);
                    let (h2, c2) = lstm_cell(tape, xn, hn, cn, &nodes)?;
                    hn = h2;
                    cn = c2;
                    let sq = tape.mul(h2, h2)?;
                    let s = tape.sum(sq)?;
                    loss = Some(match loss {
                        None => s,
                        Some(acc) => tape.add(acc, s)?,
                    });
                }
                Ok(loss.unwrap())
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "max relative error {err}");
    }
}
