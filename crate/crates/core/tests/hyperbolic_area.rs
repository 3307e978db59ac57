use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochgeom::hyperbolic::{sample_uniform_in_ball, Isometry};
use stochgeom::stats::ks_one_sample;

// Area measure is isometry invariant: points uniform on B(o, 5) moved by a
// translation of length 1 are uniform on B(o, 2), which lies in the image.
#[test]
fn moved_area_sample_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = Isometry::translation(1.0, 0.8);
    let r: f64 = 2.0;
    let mut radii = Vec::new();
    while radii.len() < 3000 {
        let y = g.apply(&sample_uniform_in_ball(&mut rng, 5.0));
        if y.rho() <= r {
            radii.push(y.rho());
        }
    }
    let ks = ks_one_sample(&radii, |rho| (rho.cosh() - 1.0) / (r.cosh() - 1.0));
    assert!(ks.p_value > 0.01, "p = {}", ks.p_value);
}

#[test]
fn moved_angles_are_uniform_on_the_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let g = Isometry::translation(1.5, 0.0);
    let mut angles = Vec::new();
    while angles.len() < 3000 {
        let y = g.apply(&sample_uniform_in_ball(&mut rng, 5.0));
        if y.rho() <= 2.0 {
            angles.push(y.theta());
        }
    }
    let ks = ks_one_sample(&angles, |t| t / std::f64::consts::TAU);
    assert!(ks.p_value > 0.01, "p = {}", ks.p_value);
}
