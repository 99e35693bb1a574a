//! Stick-figure PNG frames at a fixed frame rate.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_circle_mut, draw_line_segment_mut};

use neurowalk::dynamics::Model;
use neurowalk::simulation::GaitTrace;

use crate::error::CliResult;

pub const FPS: f64 = 25.0;
pub const WIDTH: u32 = 640;
pub const HEIGHT: u32 = 480;
/// Pixels per meter.
const SCALE: f64 = 220.0;
/// Arrow length per body weight of GRF, m.
const GRF_LENGTH_PER_BW: f64 = 0.5;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const GROUND: Rgb<u8> = Rgb([90, 90, 90]);
const LEFT: Rgb<u8> = Rgb([200, 40, 40]);
const RIGHT: Rgb<u8> = Rgb([40, 60, 200]);
const TRUNK: Rgb<u8> = Rgb([20, 20, 20]);
const FORCE: Rgb<u8> = Rgb([20, 150, 60]);

/// What one frame shows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameInfo {
    pub frame: usize,
    pub t: f64,
    pub sample: usize,
    /// Whether a GRF arrow is drawn for the left and right foot.
    pub arrows: [bool; 2],
}

/// Frame count for a trace: one frame every 1/25 s over its duration.
pub fn frame_count(trace: &GaitTrace) -> usize {
    if trace.samples.is_empty() {
        return 0;
    }
    (trace.duration() * FPS + 1e-9).floor() as usize
}

pub fn frame_plan(trace: &GaitTrace) -> Vec<FrameInfo> {
    let t0 = trace.samples.first().map_or(0.0, |s| s.t);
    (0..frame_count(trace))
        .map(|k| {
            let t = t0 + k as f64 / FPS;
            let sample = trace.sample_index(t);
            let s = &trace.samples[sample];
            FrameInfo { frame: k, t, sample, arrows: [0, 1].map(|leg| s.cop[leg].is_some() && s.grf[leg][1] > 0.0) }
        })
        .collect()
}

/// Renders one frame; the view follows the hip horizontally.
pub fn render(model: &Model, trace: &GaitTrace, info: &FrameInfo) -> RgbImage {
    let s = &trace.samples[info.sample];
    let sk = model.skeleton(&s.state());
    let cx = sk.hip[0];
    let to_px = |p: [f64; 2]| -> (f32, f32) {
        (
            (WIDTH as f64 / 2.0 + (p[0] - cx) * SCALE) as f32,
            (HEIGHT as f64 * 0.85 - p[1] * SCALE) as f32,
        )
    };
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
    let half = WIDTH as f64 / 2.0 / SCALE;
    let n = 64;
    for i in 0..n {
        let xa = cx - half + 2.0 * half * i as f64 / n as f64;
        let xb = cx - half + 2.0 * half * (i + 1) as f64 / n as f64;
        let (ha, hb) = (trace.terrain.height(xa), trace.terrain.height(xb));
        draw_line_segment_mut(&mut img, to_px([xa, ha]), to_px([xb, ha]), GROUND);
        if ha != hb {
            draw_line_segment_mut(&mut img, to_px([xb, ha]), to_px([xb, hb]), GROUND);
        }
    }
    let thick = |img: &mut RgbImage, a: [f64; 2], b: [f64; 2], c: Rgb<u8>| {
        let (pa, pb) = (to_px(a), to_px(b));
        for d in [-1.0f32, 0.0, 1.0] {
            draw_line_segment_mut(img, (pa.0 + d, pa.1), (pb.0 + d, pb.1), c);
            draw_line_segment_mut(img, (pa.0, pa.1 + d), (pb.0, pb.1 + d), c);
        }
    };
    for (leg, color) in [(1, RIGHT), (0, LEFT)] {
        let [knee, ankle, heel, ball] = sk.legs[leg];
        thick(&mut img, sk.hip, knee, color);
        thick(&mut img, knee, ankle, color);
        thick(&mut img, ankle, heel, color);
        thick(&mut img, heel, ball, color);
        thick(&mut img, ankle, ball, color);
    }
    thick(&mut img, sk.hip, sk.head, TRUNK);
    let (hx, hy) = to_px(sk.head);
    draw_filled_circle_mut(&mut img, (hx as i32, hy as i32), 9, TRUNK);
    let (mx, my) = to_px(s.com);
    draw_filled_circle_mut(&mut img, (mx as i32, my as i32), 4, FORCE);
    let bw = model.body_weight();
    for leg in 0..2 {
        if !info.arrows[leg] {
            continue;
        }
        let cop = s.cop[leg].expect("arrow only for loaded feet");
        let f = s.grf[leg];
        let tip = [cop[0] + f[0] / bw * GRF_LENGTH_PER_BW, cop[1] + f[1] / bw * GRF_LENGTH_PER_BW];
        thick(&mut img, cop, tip, FORCE);
    }
    img
}

/// Writes `frame_00000.png`, … into `dir` and returns the paths.
pub fn write_frames(model: &Model, trace: &GaitTrace, dir: &Path) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for info in frame_plan(trace) {
        let path = dir.join(format!("frame_{:05}.png", info.frame));
        render(model, trace, &info).save(&path)?;
        paths.push(path);
    }
    Ok(paths)
}
