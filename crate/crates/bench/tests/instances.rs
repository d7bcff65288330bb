use risk_sampling::sampler::{weighted_fastpam, Distances, FastPamConfig};
use risk_sampling_bench::clustered_instance;

#[test]
fn generated_instances_are_seeded_and_solvable() {
    let a = clustered_instance(300, 6, 9);
    let b = clustered_instance(300, 6, 9);
    assert_eq!(a.points, b.points);
    assert_eq!(a.weights, b.weights);

    let refs: Vec<&[f64]> = a.points.iter().map(|p| p.as_slice()).collect();
    let dist = Distances::dense(&refs);
    let fixed: Vec<usize> = (0..a.labeled).collect();
    let r = weighted_fastpam(&dist, &a.weights, &fixed, 20, &FastPamConfig::default()).unwrap();
    assert_eq!(r.free.len(), 20);
    assert!(r.free.iter().all(|&m| m >= a.labeled));
    assert!(r.td < r.initial_td);
}
