use super::Tensor;
use crate::error::{Error, Result};

fn check_slope(slope: f64) -> Result<()> {
    if !(0.0..1.0).contains(&slope) {
        return Err(Error::invalid(format!(
            "leaky ReLU slope must lie in [0, 1), got {slope}"
        )));
    }
    Ok(())
}

/// `x` for `x >= 0`, `slope * x` otherwise.
pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    check_slope(slope)?;
    Ok(x.map(|v| if v >= 0.0 { v } else { slope * v }))
}

/// Backward of [`leaky_relu`], using the saved forward input for the sign.
pub fn leaky_relu_backward(grad_out: &Tensor, input: &Tensor, slope: f64) -> Result<Tensor> {
    check_slope(slope)?;
    grad_out.zip_map(
        input,
        "leaky_relu_backward",
        |g, x| {
            if x >= 0.0 {
                g
            } else {
                slope * g
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check_at;
    use rand::{Rng, SeedableRng};

    #[test]
    fn leaky_values() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = leaky_relu(&x, 0.2).unwrap();
        assert_eq!(y.data(), &[-0.2, 0.0, 2.0]);
        let x = Tensor::new(vec![2], vec![-3.0, 4.0]).unwrap();
        assert_eq!(leaky_relu(&x, 0.0).unwrap().data(), &[0.0, 4.0]);
    }

    #[test]
    fn slope_out_of_range_is_rejected() {
        let x = Tensor::zeros(&[2]);
        assert!(leaky_relu(&x, 1.0).is_err());
        assert!(leaky_relu(&x, -0.1).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_kink() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let x = Tensor::from_fn(&[4, 5, 5], |_| rng.gen_range(-1.0..1.0));
            let w = Tensor::from_fn(&[4, 5, 5], |_| rng.gen_range(-1.0..1.0));
            let grad = leaky_relu_backward(&w, &x, 0.2).unwrap();
            let coords: Vec<usize> = (0..x.len()).filter(|&i| x.data()[i].abs() >= 1e-6).collect();
            let report = finite_diff_check_at(
                |t| {
                    let y = leaky_relu(t, 0.2)?;
                    Ok(y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum())
                },
                &grad,
                &x,
                1e-5,
                &coords,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }
}
