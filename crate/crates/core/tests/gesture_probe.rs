//! Geometry of the synthesized gesture set. The probe-based learnability
//! criteria live in the acceptance gate.

use std::f64::consts::PI;

use gestnav::gesture::{
    intervention_gesture, referencing_gesture, GestureAnatomy, GestureSequence, DEFAULT_NOISE_SIGMA,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn referencing_samples(n: usize, seed: u64) -> Vec<(GestureSequence, f64)> {
    let anatomy = GestureAnatomy::from_seed(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let bearing = rng.random_range(-PI..PI);
            let style: u64 = rng.random();
            (
                referencing_gesture(bearing, &anatomy, style, DEFAULT_NOISE_SIGMA).unwrap(),
                bearing,
            )
        })
        .collect()
}

#[test]
fn templates_far_from_referencing_samples() {
    let anatomy = GestureAnatomy::from_seed(0);
    let refs = referencing_samples(100, 3);
    let templates: Vec<GestureSequence> = (0..10).map(|i| intervention_gesture(i, &anatomy).unwrap()).collect();
    let mut min_pair = f64::INFINITY;
    for i in 0..10 {
        for j in i + 1..10 {
            min_pair = min_pair.min(templates[i].l2_distance(&templates[j]));
        }
    }
    let min_cross = templates
        .iter()
        .flat_map(|t| refs.iter().map(move |(g, _)| t.l2_distance(g)))
        .fold(f64::INFINITY, f64::min);
    println!("min template pair distance {min_pair:.3}, min template-referencing distance {min_cross:.3}");
    assert!(min_pair > 1.0);
    assert!(min_cross > 1.0);
}
