//! Run a GRU over a short sequence and show that earlier states ignore later inputs.

use cmla::gru::{gru_run, GruParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cmla::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = GruParams::random(2, 4, 0.5, &mut rng)?;
    let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5]];
    let states = gru_run(&xs, &params, None)?;
    for (t, h) in states.iter().enumerate() {
        println!("h{t} = {h:.4?}");
    }

    let mut longer = xs.clone();
    longer.push(vec![5.0, -5.0]);
    let more = gru_run(&longer, &params, None)?;
    assert_eq!(&more[..3], &states[..]);
    println!("appending an input leaves the first {} states unchanged", states.len());
    Ok(())
}
