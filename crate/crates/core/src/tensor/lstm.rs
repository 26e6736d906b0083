use super::{Graph, Var};
use crate::error::{Error, Result};

/// Gate order used for parameter naming and storage.
pub const LSTM_GATES: [&str; 4] = ["i", "f", "g", "o"];

/// Per-gate weights over the concatenated `[x, h]` input: `weight[k]` is
/// `[D+H, H]` and `bias[k]` is `[H]`, in [`LSTM_GATES`] order.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub weight: [Var; 4],
    pub bias: [Var; 4],
}

/// One LSTM step.
///
/// ```text
/// i = σ(W_i·[x,h] + b_i)   f = σ(W_f·[x,h] + b_f)
/// g = tanh(W_g·[x,h] + b_g) o = σ(W_o·[x,h] + b_o)
/// c' = f⊙c + i⊙g           h' = o⊙tanh(c')
/// ```
pub fn lstm_cell(graph: &mut Graph, x: Var, h: Var, c: Var, w: &LstmWeights) -> Result<(Var, Var)> {
    let hidden = graph.shape(h).get(1).copied().unwrap_or(0);
    if graph.shape(c) != graph.shape(h) {
        return Err(Error::dim(
            "lstm_cell",
            "cell state",
            format!("{:?} vs hidden {:?}", graph.shape(c), graph.shape(h)),
        ));
    }
    let xh = graph.concat(&[x, h], 1)?;
    let width = graph.shape(xh)[1];
    for k in 0..4 {
        if graph.shape(w.weight[k]) != [width, hidden] {
            return Err(Error::dim(
                "lstm_cell",
                format!("gate {} weight", LSTM_GATES[k]),
                format!("expected [{width}, {hidden}], got {:?}", graph.shape(w.weight[k])),
            ));
        }
    }

    let mut pre = [xh; 4];
    for k in 0..4 {
        pre[k] = graph.linear(xh, w.weight[k], Some(w.bias[k]))?;
    }
    let i = graph.sigmoid(pre[0]);
    let f = graph.sigmoid(pre[1]);
    let g = graph.tanh(pre[2]);
    let o = graph.sigmoid(pre[3]);

    let keep = graph.mul(f, c)?;
    let write = graph.mul(i, g)?;
    let c_next = graph.add(keep, write)?;
    let squashed = graph.tanh(c_next);
    let h_next = graph.mul(o, squashed)?;
    Ok((h_next, c_next))
}
