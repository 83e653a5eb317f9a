//! Inputs shared by the benchmarks.

use activepoly::geometry::Point;
use activepoly::levelset::initialize_levelset;
use activepoly::{generate_phantom, EchoSequence, FitProblem, Frame, LevelSetField, PhantomConfig};

/// A noisy quartic sampled at `m` points.
pub fn quartic_problem(m: usize, lambda: f64) -> FitProblem {
    let points = (0..m)
        .map(|i| {
            let y = i as f64 * 300.0 / (m - 1) as f64;
            let t = y / 300.0;
            let x = 200.0 + 40.0 * t - 30.0 * t * t + 12.0 * t.powi(4) + ((i * 37) % 7) as f64 * 0.1;
            Point::new(x, y)
        })
        .collect();
    FitProblem {
        points,
        order: 4,
        lambda,
    }
}

/// The 128 x 128 bright disk of radius 40 with a radius-20 starting circle.
pub fn disk_setup() -> (Frame, LevelSetField) {
    let frame = Frame::from_fn(128, 128, |x, y| {
        let (dx, dy) = (x as f64 - 64.0, y as f64 - 64.0);
        if dx.hypot(dy) <= 40.0 {
            255
        } else {
            0
        }
    });
    let circle: Vec<Point> = (0..128)
        .map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 128.0;
            Point::new(64.0 + 20.0 * a.cos(), 64.0 + 20.0 * a.sin())
        })
        .collect();
    let field = initialize_levelset(&circle, 128, 128).expect("circle is valid");
    (frame, field)
}

/// A full-size noisy phantom echo.
pub fn phantom_echo(noise: f64) -> EchoSequence {
    let cfg = PhantomConfig {
        noise_sigma: noise,
        seed: 11,
        ..PhantomConfig::default()
    };
    generate_phantom(&cfg).expect("default phantom is valid").0
}
