use rand::Rng;

use super::array::RealArray;
use super::params::{uniform_fan_in, ParameterSet};
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Gate order used throughout: input, forget, candidate, output.
pub const GATES: [&str; 4] = ["i", "f", "g", "o"];

/// Weights for one LSTM cell: per gate an input matrix (H x D), a
/// recurrent matrix (H x H) and a bias (1 x H).
///
/// No peephole connections. The forget-gate bias initializes to +1, all
/// other biases to zero, matrices uniform in ±1/sqrt(fan_in).
#[derive(Clone, Debug)]
pub struct LstmCellParams {
    pub wx: [RealArray; 4],
    pub wh: [RealArray; 4],
    pub b: [RealArray; 4],
}

impl LstmCellParams {
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let wx = std::array::from_fn(|_| uniform_fan_in(hidden_size, input_size, rng));
        let wh = std::array::from_fn(|_| uniform_fan_in(hidden_size, hidden_size, rng));
        let b = std::array::from_fn(|k| {
            let fill = if GATES[k] == "f" { 1.0 } else { 0.0 };
            RealArray::from_vec(1, hidden_size, vec![fill; hidden_size]).expect("finite")
        });
        LstmCellParams { wx, wh, b }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmCellParams {
            wx: std::array::from_fn(|_| RealArray::zeros(hidden_size, input_size)),
            wh: std::array::from_fn(|_| RealArray::zeros(hidden_size, hidden_size)),
            b: std::array::from_fn(|_| RealArray::zeros(1, hidden_size)),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.wx[0].rows()
    }

    pub fn input_size(&self) -> usize {
        self.wx[0].cols()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        let d = self.input_size();
        for k in 0..4 {
            if self.wx[k].shape() != (h, d) || self.wh[k].shape() != (h, h) || self.b[k].shape() != (1, h) {
                return Err(Error::shape(
                    "LstmCellParams::validate",
                    format!("gate {} has inconsistent shapes", GATES[k]),
                ));
            }
        }
        Ok(())
    }

    /// Flatten into `set` under `prefix.wx_i`, `prefix.wh_i`, `prefix.b_i`, ...
    pub fn store(&self, set: &mut ParameterSet, prefix: &str) -> Result<()> {
        for k in 0..4 {
            set.insert(&format!("{prefix}.wx_{}", GATES[k]), self.wx[k].clone())?;
            set.insert(&format!("{prefix}.wh_{}", GATES[k]), self.wh[k].clone())?;
            set.insert(&format!("{prefix}.b_{}", GATES[k]), self.b[k].clone())?;
        }
        Ok(())
    }
}

/// Tape handles for one LSTM cell's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LstmCellNodes {
    pub wx: [NodeId; 4],
    pub wh: [NodeId; 4],
    pub b: [NodeId; 4],
}

impl LstmCellNodes {
    /// Register a standalone [`LstmCellParams`] on `tape` (test and
    /// example convenience; networks bind through their ParameterSet).
    pub fn bind(tape: &mut Tape, params: &LstmCellParams, namespace: &str) -> Result<Self> {
        params.validate()?;
        let mut wx = [NodeId(0); 4];
        let mut wh = [NodeId(0); 4];
        let mut b = [NodeId(0); 4];
        for k in 0..4 {
            wx[k] = tape.param(&format!("{namespace}.wx_{}", GATES[k]), &params.wx[k])?;
            wh[k] = tape.param(&format!("{namespace}.wh_{}", GATES[k]), &params.wh[k])?;
            b[k] = tape.param(&format!("{namespace}.b_{}", GATES[k]), &params.b[k])?;
        }
        Ok(LstmCellNodes { wx, wh, b })
    }
}

/// One step of the standard LSTM recurrence, recorded on the tape:
///
/// i,f,o = sigmoid(Wx x + Wh h + b); g = tanh(...);
/// c' = f ⊙ c + i ⊙ g; h' = o ⊙ tanh(c').
///
/// Composed from tape primitives, so `backward` needs no special cases.
pub fn lstm_cell(
    tape: &mut Tape,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    p: &LstmCellNodes,
) -> Result<(NodeId, NodeId)> {
    let mut pre = [NodeId(0); 4];
    for k in 0..4 {
        let xin = tape.affine(x, p.wx[k], p.b[k])?;
        let hin = tape.matmul(h, p.wh[k])?;
        pre[k] = tape.add(xin, hin)?;
    }
    let i = tape.sigmoid(pre[0])?;
    let f = tape.sigmoid(pre[1])?;
    let g = tape.tanh(pre[2])?;
    let o = tape.sigmoid(pre[3])?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// Plain recurrent cell: h' = tanh(Wx x + Wh h + b).
pub fn rnn_cell(
    tape: &mut Tape,
    x: NodeId,
    h: NodeId,
    wx: NodeId,
    wh: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    let xin = tape.affine(x, wx, b)?;
    let hin = tape.matmul(h, wh)?;
    let pre = tape.add(xin, hin)?;
    tape.tanh(pre)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run_cell(
        params: &LstmCellParams,
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let nodes = LstmCellNodes::bind(&mut tape, params, "lstm").unwrap();
        let xn = tape.constant(RealArray::row(x).unwrap());
        let hn = tape.constant(RealArray::row(h).unwrap());
        let cn = tape.constant(RealArray::row(c).unwrap());
        let (h2, c2) = lstm_cell(&mut tape, xn, hn, cn, &nodes).unwrap();
        (tape.value(h2).data().to_vec(), tape.value(c2).data().to_vec())
    }

    /// Straight-line single-step LSTM, written independently of the tape.
    fn lstm_oracle(p: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hs = p.hidden_size();
        let gate = |k: usize, j: usize| -> f64 {
            let mut z = p.b[k].data()[j];
            for (d, xv) in x.iter().enumerate() {
                z += p.wx[k].get(j, d) * xv;
            }
            for (d, hv) in h.iter().enumerate() {
                z += p.wh[k].get(j, d) * hv;
            }
            z
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h2 = vec![0.0; hs];
        let mut c2 = vec![0.0; hs];
        for j in 0..hs {
            let i = sig(gate(0, j));
            let f = sig(gate(1, j));
            let g = gate(2, j).tanh();
            let o = sig(gate(3, j));
            c2[j] = f * c[j] + i * g;
            h2[j] = o * c2[j].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn zero_weights_zero_inputs_fixed_point() {
        let p = LstmCellParams::zeros(2, 3);
        let (h2, c2) = run_cell(&p, &[0.0, 0.0], &[0.0; 3], &[0.0; 3]);
        assert_eq!(h2, vec![0.0; 3]);
        assert_eq!(c2, vec![0.0; 3]);
    }

    #[test]
    fn zero_weights_half_gates() {
        // All gates sit at sigmoid(0) = 0.5, so c' = 0.5 c and
        // h' = 0.5 tanh(0.5 c).
        let p = LstmCellParams::zeros(2, 3);
        let c = [1.0, -0.5, 2.0];
        let (h2, c2) = run_cell(&p, &[0.0, 0.0], &[0.0; 3], &c);
        for j in 0..3 {
            assert!((c2[j] - 0.5 * c[j]).abs() < 1e-15);
            assert!((h2[j] - 0.5 * (0.5 * c[j]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = LstmCellParams::init(3, 4, &mut rng);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (h2, c2) = run_cell(&p, &x, &h, &c);
        let (oh, oc) = lstm_oracle(&p, &x, &h, &c);
        for j in 0..4 {
            assert!((h2[j] - oh[j]).abs() <= 1e-12, "h[{j}]: {} vs {}", h2[j], oh[j]);
            assert!((c2[j] - oc[j]).abs() <= 1e-12, "c[{j}]: {} vs {}", c2[j], oc[j]);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = LstmCellParams::zeros(2, 3);
        let mut tape = Tape::new();
        let nodes = LstmCellNodes::bind(&mut tape, &p, "lstm").unwrap();
        let x = tape.constant(RealArray::row(&[0.0, 0.0, 0.0]).unwrap()); // wrong D
        let h = tape.constant(RealArray::zeros(1, 3));
        let c = tape.constant(RealArray::zeros(1, 3));
        assert!(lstm_cell(&mut tape, x, h, c, &nodes).is_err());
    }
}
