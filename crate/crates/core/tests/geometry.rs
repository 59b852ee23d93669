use scc_core::geometry::{GeometrySpec, ParticleShape, Placement};
use scc_core::volume::GridDims;

fn spec(shape: ParticleShape<f64>, n: usize, density: f64, placement: Placement, seed: u64) -> GeometrySpec<f64> {
    GeometrySpec { dims: GridDims::cube(n).unwrap(), shape, target_density: density, placement, seed, rsa_budget: None }
}

#[test]
fn rsa_stops_at_first_crossing() {
    let g = spec(ParticleShape::Sphere { radius: 15.0 }, 256, 0.1, Placement::NonOverlapping, 3).realize().unwrap();
    let p = g.density();
    assert!((0.1..=0.105).contains(&p), "{p}");
}

#[test]
fn realizations_ignore_thread_count() {
    let in_pool = |threads: usize, s: &GeometrySpec<f64>| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| s.realize().unwrap())
    };
    for (shape, placement, density) in [
        (ParticleShape::reference("cylinder").unwrap(), Placement::Boolean, 0.5),
        (ParticleShape::reference("cube").unwrap(), Placement::NonOverlapping, 0.1),
    ] {
        let s = spec(shape, 96, density, placement, 17);
        assert_eq!(in_pool(1, &s), in_pool(4, &s));
    }
}

#[test]
fn every_reference_configuration_is_constructible() {
    for shape in ParticleShape::<f64>::reference_set() {
        for density in [0.1, 0.3, 0.5, 0.7] {
            let g = spec(shape, 128, density, Placement::Boolean, 5).realize().unwrap();
            assert!(g.foreground_count() > 0 && g.background_count() > 0, "{} {density}", shape.name());
        }
        let g = spec(shape, 128, 0.1, Placement::NonOverlapping, 5).realize().unwrap();
        assert!(g.density() >= 0.1);
    }
}
