//! Parameter and FLOP accounting.
//!
//! Convention: one multiply-accumulate is two FLOPs and bias additions are
//! counted. Elementwise costs per element: relu 1, add 1, argmax 1,
//! pooling/mean 1 per input element, softmax 5, layer norm 7. Embedding
//! lookups and reshapes are free. All figures are for a single sample.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elementwise {
    Relu,
    Add,
    Argmax,
    Pool,
    Softmax,
}

impl Elementwise {
    pub fn flops_per_element(self) -> u64 {
        match self {
            Elementwise::Relu | Elementwise::Add | Elementwise::Argmax | Elementwise::Pool => 1,
            Elementwise::Softmax => 5,
        }
    }
}

/// Static description of one layer application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    /// `rows` independent applications of an `input → output` map
    /// (1 for a plain vector, T for a time-distributed layer).
    Dense {
        input: usize,
        output: usize,
        bias: bool,
        rows: usize,
    },
    Conv {
        cin: usize,
        cout: usize,
        k: usize,
        out_h: usize,
        out_w: usize,
        bias: bool,
    },
    Deconv {
        cin: usize,
        cout: usize,
        k: usize,
        in_h: usize,
        in_w: usize,
        out_h: usize,
        out_w: usize,
        bias: bool,
    },
    /// Layer norm with `features` normalized elements, applied over `elems`
    /// elements in total.
    Norm { features: usize, elems: usize },
    Lstm { input: usize, hidden: usize, steps: usize },
    Embedding { vocab: usize, dim: usize },
    Elementwise { op: Elementwise, elems: usize },
}

impl LayerSpec {
    pub fn params(&self) -> u64 {
        let p = match *self {
            LayerSpec::Dense { input, output, bias, .. } => input * output + if bias { output } else { 0 },
            LayerSpec::Conv { cin, cout, k, bias, .. } | LayerSpec::Deconv { cin, cout, k, bias, .. } => {
                cin * cout * k * k + if bias { cout } else { 0 }
            }
            LayerSpec::Norm { features, .. } => 2 * features,
            LayerSpec::Lstm { input, hidden, .. } => 4 * hidden * (input + hidden) + 4 * hidden,
            LayerSpec::Embedding { vocab, dim } => vocab * dim,
            LayerSpec::Elementwise { .. } => 0,
        };
        p as u64
    }

    pub fn flops(&self) -> u64 {
        let u = |v: usize| v as u64;
        match *self {
            LayerSpec::Dense { input, output, bias, rows } => {
                u(rows) * (2 * u(input) * u(output) + if bias { u(output) } else { 0 })
            }
            LayerSpec::Conv { cin, cout, k, out_h, out_w, bias } => {
                let outs = u(cout * out_h * out_w);
                2 * u(k * k * cin) * outs + if bias { outs } else { 0 }
            }
            LayerSpec::Deconv { cin, cout, k, in_h, in_w, out_h, out_w, bias } => {
                2 * u(k * k * cin * cout * in_h * in_w) + if bias { u(cout * out_h * out_w) } else { 0 }
            }
            LayerSpec::Norm { elems, .. } => 7 * u(elems),
            // gate matmuls, bias and the zx+zh add, five nonlinearities
            // (i, f, g, o, tanh c) and four elementwise products/sums.
            LayerSpec::Lstm { input, hidden, steps } => {
                let (x, h) = (u(input), u(hidden));
                u(steps) * (8 * h * (h + x) + 17 * h)
            }
            LayerSpec::Embedding { .. } => 0,
            LayerSpec::Elementwise { op, elems } => op.flops_per_element() * u(elems),
        }
    }
}

/// One row of a cost breakdown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEntry {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

impl CostEntry {
    pub fn from_layers(name: impl Into<String>, layers: &[LayerSpec]) -> Self {
        CostEntry {
            name: name.into(),
            params: layers.iter().map(LayerSpec::params).sum(),
            flops: layers.iter().map(LayerSpec::flops).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub model_id: String,
    pub param_count: u64,
    pub trainable_params: u64,
    pub frozen_params: u64,
    pub flops_per_forward: u64,
    pub per_block: Vec<CostEntry>,
}

impl CostReport {
    /// Totals are always derived from the breakdown.
    pub fn new(model_id: impl Into<String>, per_block: Vec<CostEntry>, frozen_params: u64) -> Self {
        let param_count = per_block.iter().map(|e| e.params).sum();
        let flops = per_block.iter().map(|e| e.flops).sum();
        CostReport {
            model_id: model_id.into(),
            param_count,
            trainable_params: param_count - frozen_params.min(param_count),
            frozen_params,
            flops_per_forward: flops,
            per_block,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost report serializes")
    }
}
