//! Cost reports compared against frozen JSON files. Each expected report is
//! rebuilt below from per-layer arithmetic that does not go through
//! `LayerSpec`, then checked against both the golden file and the library.

use serde::Deserialize;
use somnus::autoencoder::{AutoencoderArch, AutoencoderBundle};
use somnus::cost::{CostEntry, CostReport, LayerSpec};
use somnus::model::{BlockGraph, ModelConfig};

fn golden(name: &str) -> serde_json::Value {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn report_of(v: &serde_json::Value) -> CostReport {
    serde_json::from_value(v["report"].clone()).unwrap()
}

// Hand oracle. (params, flops) per layer with the counting rules written out.
fn dense(i: u64, o: u64) -> (u64, u64) {
    (i * o + o, 2 * i * o + o)
}
fn conv(cin: u64, cout: u64, k: u64, ho: u64, wo: u64) -> (u64, u64) {
    (cin * cout * k * k + cout, 2 * k * k * cin * cout * ho * wo + cout * ho * wo)
}
fn deconv(cin: u64, cout: u64, k: u64, hin: u64, win: u64, ho: u64, wo: u64) -> (u64, u64) {
    (cin * cout * k * k + cout, 2 * k * k * cin * cout * hin * win + cout * ho * wo)
}
fn norm(c: u64, h: u64, w: u64) -> (u64, u64) {
    (2 * c * h * w, 7 * c * h * w)
}
fn elementwise(n: u64) -> (u64, u64) {
    (0, n)
}
fn sum(parts: &[(u64, u64)]) -> (u64, u64) {
    parts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}
fn entry(name: &str, pf: (u64, u64)) -> CostEntry {
    CostEntry { name: name.into(), params: pf.0, flops: pf.1 }
}

// 1x8x8 input, stem conv K4 s2 p1 to 2x4x4, one 3x3 block to 3x4x4,
// pool to 3x2x2 and a 12 -> 2 classifier.
fn tiny_stem() -> (u64, u64) {
    sum(&[conv(1, 2, 4, 4, 4), norm(2, 4, 4), elementwise(32)])
}
fn tiny_chain() -> (u64, u64) {
    sum(&[conv(2, 3, 3, 4, 4), norm(3, 4, 4), elementwise(48)])
}
fn tiny_head() -> (u64, u64) {
    sum(&[elementwise(48), dense(12, 2)])
}

#[test]
fn dense_only_matches_golden() {
    let g = golden("dense_only.json");
    let expected = report_of(&g);

    let hidden = sum(&[dense(16, 8), elementwise(8)]);
    let output = dense(8, 3);
    let oracle = CostReport::new("dense-only", vec![entry("hidden", hidden), entry("output", output)], 0);
    assert_eq!(oracle, expected);

    #[derive(Deserialize)]
    struct Group {
        name: String,
        layers: Vec<LayerSpec>,
    }
    let groups: Vec<Group> = serde_json::from_value(g["network"].clone()).unwrap();
    let entries = groups.iter().map(|gr| CostEntry::from_layers(gr.name.clone(), &gr.layers)).collect();
    assert_eq!(CostReport::new("dense-only", entries, 0), expected);
}

#[test]
fn chain_one_block_matches_golden() {
    let g = golden("chain_one_block.json");
    let expected = report_of(&g);
    let oracle = CostReport::new(
        "Chain-1",
        vec![entry("stem", tiny_stem()), entry("block1", tiny_chain()), entry("head", tiny_head())],
        0,
    );
    assert_eq!(oracle, expected);

    let cfg: ModelConfig = serde_json::from_value(g["model"].clone()).unwrap();
    let model = BlockGraph::build(&cfg, None, g["seed"].as_u64().unwrap()).unwrap();
    assert_eq!(model.cost_report(), expected);
    assert_eq!(model.count_params().param_count, expected.param_count);
}

#[test]
fn sleepnet_one_tiny_matches_golden() {
    let g = golden("sleepnet1_tiny.json");
    let expected = report_of(&g);

    // Bundle: conv 1->2 K4 s2 (8x8 -> 4x4), conv 2->2 K4 s2 (-> 2x2),
    // dense 8 -> 3; decoder dense 3 -> 8, deconv 2->2 K2 s2, deconv 2->1 K2 s2.
    let encode = sum(&[conv(1, 2, 4, 4, 4), elementwise(32), conv(2, 2, 4, 2, 2), elementwise(8), dense(8, 3)]);
    let decoder_params = dense(3, 8).0 + deconv(2, 2, 2, 2, 2, 4, 4).0 + deconv(2, 1, 2, 4, 4, 8, 8).0;
    let bundle_params = encode.0 + decoder_params;

    // Pre-adapter lifts 2x4x4 to 1x8x8 (deconv K2 s2, then a 1x1 crop conv);
    // post-adapter maps the 3-dim latent onto the 48 block outputs.
    let pre = sum(&[deconv(2, 1, 2, 4, 4, 8, 8), conv(1, 1, 1, 8, 8)]);
    let post = dense(3, 48);
    let own = sum(&[tiny_chain(), pre, post, elementwise(48)]);
    let block = (own.0, own.1 + encode.1);

    let oracle = CostReport::new(
        "SleepNet-1",
        vec![
            entry("stem", tiny_stem()),
            entry("block1", block),
            entry("head", tiny_head()),
            entry("bundle", (bundle_params, 0)),
        ],
        bundle_params,
    );
    assert_eq!(oracle, expected);

    let cfg: ModelConfig = serde_json::from_value(g["model"].clone()).unwrap();
    let arch: AutoencoderArch = serde_json::from_value(g["bundle"].clone()).unwrap();
    let bundle = AutoencoderBundle::new(arch, 1).unwrap();
    let model = BlockGraph::build(&cfg, Some(bundle), g["seed"].as_u64().unwrap()).unwrap();
    assert_eq!(model.cost_report(), expected);
}
