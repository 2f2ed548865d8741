//! Finite-difference validation of the reverse-mode tape on a small
//! composite graph (conv -> gelu -> pool -> mean of squares).

use hyperconv_kit::image::{avg_pool2d, conv2d, gelu, Padding};
use hyperconv_kit::tensor::{finite_difference_check, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hyperconv_kit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x0 = Tensor::<f64>::randn(&mut rng, &[1, 2, 8, 8], 1.0);
    let w = Tensor::<f64>::randn(&mut rng, &[3, 2, 3, 3], 0.5);

    let err = finite_difference_check(
        |x| {
            let y = conv2d(x, &w, 1, Padding::SameReflect, 1)?;
            let y = gelu(&y);
            let y = avg_pool2d(&y, 2, 2)?;
            Ok(y.mul(&y)?.mean_all())
        },
        &x0,
        1e-5,
        None,
    )?;
    println!("max relative gradient error: {err:e}");
    assert!(err < 1e-6);
    Ok(())
}
