use super::graph::{Graph, Mask, Var};
use super::tensor::Scalar;
use super::NnError;

pub struct AttentionOutput {
    pub out: Var,
    /// Attention probabilities, one `Tq × Tk` node per head.
    pub weights: Vec<Var>,
}

/// Scaled dot-product attention over `heads` column groups of `q`, `k`, `v`.
///
/// `q` is `Tq × d`, `k` and `v` are `Tk × d`. Masked positions are excluded
/// before the softmax.
pub fn multi_head_attention<S: Scalar>(
    g: &mut Graph<S>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    mask: Option<&Mask>,
) -> Result<AttentionOutput, NnError> {
    let d = g.value(q).cols();
    if heads == 0 || d % heads != 0 {
        return Err(NnError::DimensionMismatch(format!(
            "model dim {d} not divisible by {heads} heads"
        )));
    }
    if g.value(k).cols() != d || g.value(v).cols() != d {
        return Err(NnError::DimensionMismatch(format!(
            "q/k/v widths {d}/{}/{}",
            g.value(k).cols(),
            g.value(v).cols()
        )));
    }
    if g.value(k).rows() != g.value(v).rows() {
        return Err(NnError::DimensionMismatch("key/value lengths differ".into()));
    }
    let dh = d / heads;
    let scale = S::from_f64(1.0 / (dh as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dh, dh)?,
                g.slice_cols(k, h * dh, dh)?,
                g.slice_cols(v, h * dh, dh)?,
            )
        };
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale);
        let p = g.softmax_rows(scores, mask)?;
        outs.push(g.matmul(p, vh)?);
        weights.push(p);
    }
    let out = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    Ok(AttentionOutput { out, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64_slice(shape, v).unwrap()
    }

    #[test]
    fn identical_keys_average_values() {
        let mut g = Graph::new();
        let q = g.constant(t(&[1, 2], &[0.3, -1.0]));
        let k = g.constant(t(&[3, 2], &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]));
        let v = g.constant(t(&[3, 2], &[1.0, 0.0, 2.0, 3.0, 6.0, 3.0]));
        let o = multi_head_attention(&mut g, q, k, v, 2, None).unwrap();
        let out = g.value(o.out).data();
        assert!((out[0] - 3.0).abs() < 1e-12 && (out[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_token_returns_value_row() {
        let mut g = Graph::new();
        let q = g.constant(t(&[1, 3], &[5.0, 1.0, 2.0]));
        let k = g.constant(t(&[1, 3], &[0.1, 0.2, 0.3]));
        let v = g.constant(t(&[1, 3], &[7.0, 8.0, 9.0]));
        let o = multi_head_attention(&mut g, q, k, v, 1, None).unwrap();
        assert_eq!(g.value(o.out).data(), &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn causal_position_zero_ignores_later_tokens() {
        let run = |second: f64| {
            let mut g = Graph::new();
            let x = g.constant(t(&[2, 2], &[0.5, -0.2, second, 3.0 * second]));
            let m = Mask::causal(2);
            let o = multi_head_attention(&mut g, x, x, x, 1, Some(&m)).unwrap();
            g.value(o.out).row(0).to_vec()
        };
        assert_eq!(run(1.0), run(-40.0));
    }

    #[test]
    fn heads_must_divide_width() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::<f64>::zeros(&[2, 6]));
        assert!(matches!(
            multi_head_attention(&mut g, x, x, x, 4, None),
            Err(NnError::DimensionMismatch(_))
        ));
    }
}
