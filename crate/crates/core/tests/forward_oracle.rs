//! Recomputes the encoder's `[CLS]` vector with plain loops over the stored
//! parameters and compares it with the autodiff forward pass.

use lexcase_core::textproc::{TokenId, CLS};
use lexcase_core::{ModelConfig, StructuredCaseModel, Tensor};

type Mat = Vec<Vec<f64>>;

fn mat(t: &Tensor) -> Mat {
    t.to_rows()
}

fn param(m: &StructuredCaseModel, name: &str) -> Mat {
    mat(m.params.get(name).unwrap())
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

fn linear(m: &StructuredCaseModel, x: &Mat, prefix: &str) -> Mat {
    let bias = &param(m, &format!("{prefix}.bias"))[0];
    matmul(x, &param(m, &format!("{prefix}.weight")))
        .into_iter()
        .map(|row| row.iter().zip(bias).map(|(v, b)| v + b).collect())
        .collect()
}

fn layer_norm(m: &StructuredCaseModel, x: &Mat, prefix: &str) -> Mat {
    let gamma = &param(m, &format!("{prefix}.gamma"))[0];
    let beta = &param(m, &format!("{prefix}.beta"))[0];
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + 1e-5).sqrt();
            row.iter().enumerate().map(|(j, v)| (v - mean) * inv * gamma[j] + beta[j]).collect()
        })
        .collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn attention(q: &Mat, k: &Mat, v: &Mat, heads: usize) -> Mat {
    let n = q.len();
    let d = q[0].len();
    let dh = d / heads;
    let mut out = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in cols.clone() {
                out[i][c] = (0..n).map(|j| exps[j] / z * v[j][c]).sum();
            }
        }
    }
    out
}

fn block(m: &StructuredCaseModel, x: &Mat, prefix: &str) -> Mat {
    let q = linear(m, x, &format!("{prefix}.attn.query"));
    let k = linear(m, x, &format!("{prefix}.attn.key"));
    let v = linear(m, x, &format!("{prefix}.attn.value"));
    let a = linear(m, &attention(&q, &k, &v, m.config.n_heads), &format!("{prefix}.attn.output"));
    let x = layer_norm(m, &add(x, &a), &format!("{prefix}.attn.ln"));
    let h: Mat = linear(m, &x, &format!("{prefix}.ffn.up"))
        .into_iter()
        .map(|row| row.into_iter().map(gelu).collect())
        .collect();
    let h = linear(m, &h, &format!("{prefix}.ffn.down"));
    layer_norm(m, &add(&x, &h), &format!("{prefix}.ffn.ln"))
}

fn fact_vector_oracle(m: &StructuredCaseModel, ids: &[TokenId]) -> Vec<f64> {
    let tokens = param(m, "embeddings.token");
    let positions = param(m, "embeddings.position");
    let x: Mat = std::iter::once(CLS)
        .chain(ids.iter().copied())
        .enumerate()
        .map(|(p, t)| tokens[t as usize].iter().zip(&positions[p]).map(|(a, b)| a + b).collect())
        .collect();
    let mut x = layer_norm(m, &x, "embeddings.ln");
    for i in 0..m.config.n_encoder_layers {
        x = block(m, &x, &format!("encoder.layer{i}"));
    }
    x.swap_remove(0)
}

#[test]
fn fact_vector_matches_loop_recomputation() {
    for (seed, heads, layers) in [(1u64, 1usize, 1usize), (2, 2, 2), (3, 4, 3)] {
        let config = ModelConfig {
            vocab_size: 40,
            d_model: 16,
            n_heads: heads,
            n_encoder_layers: layers,
            d_ff: 24,
            max_len: 20,
            init_std: 0.2,
            ..Default::default()
        };
        let model = StructuredCaseModel::new(config, seed).unwrap();
        for ids in [vec![7u32], vec![5, 9, 11, 38, 6, 6, 20], (5..24).collect::<Vec<TokenId>>()] {
            let got = model.embed(&ids).unwrap();
            let want = fact_vector_oracle(&model, &ids);
            let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "seed {seed} heads {heads} layers {layers} len {}: max error {err:e}", ids.len());
        }
    }
}
