//! Prioritized replay sampling frequencies against the p^alpha law.

use epirl::agents::per::{Experience, PrioritizedBuffer};
use epirl::rng::{substream, Stream};

fn main() -> epirl::Result<()> {
    let priorities = [1.0, 2.0, 4.0];
    for alpha in [0.0, 0.6, 1.0] {
        let mut buf = PrioritizedBuffer::new(3, alpha, 0.4, 0.0)?;
        for (i, &p) in priorities.iter().enumerate() {
            buf.push(Experience {
                obs: vec![i as f64],
                action: 0,
                reward: 0.0,
                next_obs: vec![0.0],
                done: true,
            });
            buf.set_priority(i, p);
        }
        let mut rng = substream(5, Stream::Replay);
        let mut hits = [0usize; 3];
        let draws = 100_000;
        for _ in 0..draws / 10 {
            for i in buf.sample(10, &mut rng)?.indices {
                hits[i] += 1;
            }
        }
        let z: f64 = priorities.iter().map(|p: &f64| p.powf(alpha)).sum();
        print!("alpha {alpha}:");
        for (i, p) in priorities.iter().enumerate() {
            print!("  p={p} expected {:.3} observed {:.3}", p.powf(alpha) / z, hits[i] as f64 / draws as f64);
        }
        println!();
    }
    Ok(())
}
