//! Fusion invariants used by both the fusion tests and the acceptance run.

use fusedet::fusion::{compute_motion, fuse, FusionMode};
use fusedet::image::ImagePlane;
use rand::Rng;

use super::gradcheck::rng;

fn random_plane(seed: u64, w: usize, h: usize) -> ImagePlane {
    let mut r = rng(seed);
    let values = (0..w * h).map(|_| r.gen()).collect();
    ImagePlane::new(w, h, values).unwrap()
}

/// Motion of a frame against itself is zero everywhere.
pub fn identical_frames_have_zero_motion() -> bool {
    (0..5).all(|s| {
        let p = random_plane(s, 17, 11);
        compute_motion(&p, &p).unwrap().values().iter().all(|&v| v == 0)
    })
}

/// Every plane placed by `fuse` is an exact copy of its source.
pub fn fuse_copies_pixels() -> bool {
    let v = random_plane(1, 23, 9);
    let m = random_plane(2, 23, 9);
    let mo = compute_motion(&v, &random_plane(3, 23, 9)).unwrap();
    let expect: [(FusionMode, [&ImagePlane; 3]); 5] = [
        (FusionMode::VisibleOnly, [&v, &v, &v]),
        (FusionMode::MwirOnly, [&m, &m, &m]),
        (FusionMode::MotionOnly, [&mo, &mo, &mo]),
        (FusionMode::VisibleMwir, [&v, &v, &m]),
        (FusionMode::ThreeChannel, [&v, &mo, &m]),
    ];
    expect.iter().all(|(mode, planes)| {
        let f = fuse(Some(&v), Some(&m), Some(&mo), *mode, 0).unwrap();
        f.planes.iter().zip(planes).all(|(got, want)| got == *want)
    })
}

/// Distinct constant planes land in B = visible, G = motion, R = MWIR.
pub fn channel_assignment() -> bool {
    let (v, m, mo) = (ImagePlane::filled(4, 3, 10), ImagePlane::filled(4, 3, 200), ImagePlane::filled(4, 3, 77));
    let f = fuse(Some(&v), Some(&m), Some(&mo), FusionMode::ThreeChannel, 0).unwrap();
    let rgb = f.to_rgb_image();
    f.blue().values().iter().all(|&x| x == 10)
        && f.green().values().iter().all(|&x| x == 77)
        && f.red().values().iter().all(|&x| x == 200)
        && rgb.pixels().all(|p| p.0 == [200, 77, 10])
}
