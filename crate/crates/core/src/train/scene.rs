use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vae::VideoTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Square,
    Circle,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Motion {
    Left,
    Right,
    Up,
    Down,
    Rotate,
}

pub const SHAPES: [Shape; 3] = [Shape::Square, Shape::Circle, Shape::Triangle];
pub const MOTIONS: [Motion; 5] = [Motion::Left, Motion::Right, Motion::Up, Motion::Down, Motion::Rotate];
pub const SIZES: [usize; 2] = [6, 8];
pub const SPEEDS: [usize; 2] = [1, 2];
pub const FPS: [usize; 2] = [12, 24];
/// Rotation per frame for speed 1, in degrees.
pub const DEGREES_PER_FRAME: f64 = 10.0;

pub const COLORS: [(&str, [f32; 3]); 7] = [
    ("red", [0.9, 0.1, 0.1]),
    ("green", [0.1, 0.9, 0.1]),
    ("blue", [0.2, 0.3, 0.95]),
    ("yellow", [0.9, 0.9, 0.1]),
    ("cyan", [0.1, 0.9, 0.9]),
    ("magenta", [0.9, 0.1, 0.9]),
    ("white", [0.9, 0.9, 0.9]),
];

/// One synthetic clip: a single shape on black, translating or spinning.
/// Placement is a function of the spec and frame size, which keeps captions
/// and specs in one-to-one correspondence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SceneSpec {
    pub shape: Shape,
    pub color: usize,
    pub motion: Motion,
    pub speed: usize,
    pub size: usize,
    pub fps: usize,
}

impl SceneSpec {
    pub fn random(rng: &mut Rng) -> Self {
        Self {
            shape: SHAPES[rng.below(SHAPES.len())],
            color: rng.below(COLORS.len()),
            motion: MOTIONS[rng.below(MOTIONS.len())],
            speed: SPEEDS[rng.below(SPEEDS.len())],
            size: SIZES[rng.below(SIZES.len())],
            fps: FPS[rng.below(FPS.len())],
        }
    }

    pub fn rgb(&self) -> [f32; 3] {
        COLORS[self.color].1
    }

    /// Object center (in pixel units, pixel `i` spans `[i, i+1)`) for each frame.
    pub fn trajectory(&self, frames: usize, height: usize, width: usize) -> Result<Vec<(f64, f64)>> {
        let travel = if self.motion == Motion::Rotate {
            0
        } else {
            (frames - 1) * self.speed
        };
        let half = self.size as f64 / 2.0;
        let span = |extent: usize| -> Result<f64> {
            // integer start keeps translation pixel-exact
            let start = ((extent - travel.min(extent)) / 2) as f64;
            if start < half || start + travel as f64 + half > extent as f64 {
                return Err(Error::Config(format!(
                    "{:?} of size {} at speed {} leaves a {extent}px frame over {frames} frames",
                    self.motion, self.size, self.speed
                )));
            }
            Ok(start)
        };
        let (cx0, cy0) = match self.motion {
            Motion::Left | Motion::Right => (span(width)?, (height / 2) as f64),
            Motion::Up | Motion::Down => ((width / 2) as f64, span(height)?),
            Motion::Rotate => {
                span(width)?;
                span(height)?;
                ((width / 2) as f64, (height / 2) as f64)
            }
        };
        let l = travel as f64;
        let s = self.speed as f64;
        Ok((0..frames)
            .map(|f| {
                let d = f as f64 * s;
                match self.motion {
                    Motion::Right => (cx0 + d, cy0),
                    Motion::Left => (cx0 + l - d, cy0),
                    Motion::Down => (cx0, cy0 + d),
                    Motion::Up => (cx0, cy0 + l - d),
                    Motion::Rotate => (cx0, cy0),
                }
            })
            .collect())
    }

    fn covers(&self, px: f64, py: f64, angle: f64) -> bool {
        // undo the clockwise rotation (screen y points down)
        let (c, s) = (angle.cos(), angle.sin());
        let (x, y) = (c * px + s * py, -s * px + c * py);
        let h = self.size as f64 / 2.0;
        match self.shape {
            Shape::Square => x.abs() < h && y.abs() < h,
            Shape::Circle => x * x + y * y <= h * h,
            Shape::Triangle => {
                // apex up, base at the bottom
                y < h && y > -h && x.abs() < (y + h) / 2.0
            }
        }
    }

    pub fn render<S: Scalar>(&self, frames: usize, height: usize, width: usize) -> Result<VideoTensor<S>> {
        let path = self.trajectory(frames, height, width)?;
        let rgb = self.rgb();
        let mut data = vec![S::zero(); frames * height * width * 3];
        for (f, &(cx, cy)) in path.iter().enumerate() {
            let angle = match self.motion {
                Motion::Rotate => (DEGREES_PER_FRAME * self.speed as f64 * f as f64).to_radians(),
                _ => 0.0,
            };
            for y in 0..height {
                for x in 0..width {
                    if self.covers(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy, angle) {
                        let o = ((f * height + y) * width + x) * 3;
                        for ch in 0..3 {
                            data[o + ch] = S::of(rgb[ch] as f64);
                        }
                    }
                }
            }
        }
        VideoTensor::new(Tensor::new(&[frames, height, width, 3], data), self.fps as f64)
    }
}

/// Caption words; id 0 is padding.
pub const VOCABULARY: [&str; 26] = [
    "<pad>", "small", "large", "red", "green", "blue", "yellow", "cyan", "magenta", "white", "square", "circle",
    "triangle", "moving", "left", "right", "up", "down", "rotating", "clockwise", "slowly", "quickly", "at", "12",
    "24", "fps",
];

pub const CAPTION_LEN: usize = 9;

fn shape_word(s: Shape) -> &'static str {
    match s {
        Shape::Square => "square",
        Shape::Circle => "circle",
        Shape::Triangle => "triangle",
    }
}

pub fn motion_word(m: Motion) -> &'static str {
    match m {
        Motion::Left => "left",
        Motion::Right => "right",
        Motion::Up => "up",
        Motion::Down => "down",
        Motion::Rotate => "clockwise",
    }
}

/// `"<size> <color> <shape> moving <dir> <speed> at <fps> fps"`, or
/// `"... rotating clockwise ..."` for spinning objects.
pub fn caption_text(spec: &SceneSpec) -> String {
    let size = if spec.size == SIZES[0] { "small" } else { "large" };
    let verb = match spec.motion {
        Motion::Rotate => "rotating",
        _ => "moving",
    };
    let speed = if spec.speed == SPEEDS[0] { "slowly" } else { "quickly" };
    format!(
        "{size} {} {} {verb} {} {speed} at {} fps",
        COLORS[spec.color].0,
        shape_word(spec.shape),
        motion_word(spec.motion),
        spec.fps
    )
}

pub fn parse_caption(text: &str) -> Result<SceneSpec> {
    let w: Vec<&str> = text.split_whitespace().collect();
    let bad = || Error::Domain(format!("not a scene caption: {text:?}"));
    if w.len() != CAPTION_LEN || w[6] != "at" || w[8] != "fps" {
        return Err(bad());
    }
    let size = match w[0] {
        "small" => SIZES[0],
        "large" => SIZES[1],
        _ => return Err(bad()),
    };
    let color = COLORS.iter().position(|(n, _)| *n == w[1]).ok_or_else(bad)?;
    let shape = *SHAPES.iter().find(|s| shape_word(**s) == w[2]).ok_or_else(bad)?;
    let motion = match (w[3], w[4]) {
        ("rotating", "clockwise") => Motion::Rotate,
        ("moving", d) => *MOTIONS[..4].iter().find(|m| motion_word(**m) == d).ok_or_else(bad)?,
        _ => return Err(bad()),
    };
    let speed = match w[5] {
        "slowly" => SPEEDS[0],
        "quickly" => SPEEDS[1],
        _ => return Err(bad()),
    };
    let fps = w[7].parse::<usize>().ok().filter(|f| FPS.contains(f)).ok_or_else(bad)?;
    Ok(SceneSpec {
        shape,
        color,
        motion,
        speed,
        size,
        fps,
    })
}

pub fn caption_ids(text: &str) -> Result<Vec<usize>> {
    text.split_whitespace()
        .map(|w| {
            VOCABULARY
                .iter()
                .position(|v| *v == w)
                .ok_or_else(|| Error::Domain(format!("word {w:?} not in the caption vocabulary")))
        })
        .collect()
}

pub fn caption_from_ids(ids: &[usize]) -> Result<String> {
    let words: Result<Vec<&str>> = ids
        .iter()
        .filter(|&&i| i != 0)
        .map(|&i| {
            VOCABULARY
                .get(i)
                .copied()
                .ok_or_else(|| Error::Domain(format!("caption id {i} out of range")))
        })
        .collect();
    Ok(words?.join(" "))
}

/// Intensity-weighted centroid per frame; pixels dimmer than `threshold`
/// (max over channels) are ignored. `None` for empty frames.
pub fn centroids<S: Scalar>(video: &VideoTensor<S>, threshold: f64) -> Vec<Option<(f64, f64)>> {
    let (t, h, w) = (video.frames(), video.height(), video.width());
    let d = video.pixels.data();
    (0..t)
        .map(|f| {
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let o = ((f * h + y) * w + x) * 3;
                    let v = (0..3).map(|c| d[o + c].to_f64().unwrap()).fold(f64::MIN, f64::max);
                    if v > threshold {
                        sx += v * (x as f64 + 0.5);
                        sy += v * (y as f64 + 0.5);
                        sw += v;
                    }
                }
            }
            (sw > 0.0).then(|| (sx / sw, sy / sw))
        })
        .collect()
}

/// Per-frame threshold for [`detect_motion`]: this fraction of the frame's
/// brightest value, but never below [`DETECT_FLOOR`].
pub const DETECT_RELATIVE: f64 = 0.5;
pub const DETECT_FLOOR: f64 = 0.1;
/// Net travel below which a clip counts as stationary: a rotating triangle's
/// centroid wanders about 2.7 px, the slowest translation covers 8 px on 9 frames.
pub const MIN_TRAVEL: f64 = 4.0;

fn frame_centroid<S: Scalar>(video: &VideoTensor<S>, frame: usize) -> Option<(f64, f64)> {
    let one = VideoTensor::new(video.pixels.narrow(0, frame, 1), video.fps).ok()?;
    let peak = one.pixels.data().iter().map(|v| v.to_f64().unwrap()).fold(f64::MIN, f64::max);
    if peak <= DETECT_FLOOR {
        return None;
    }
    centroids(&one, (DETECT_RELATIVE * peak).max(DETECT_FLOOR))[0]
}

/// Dominant direction of centroid travel from first to last frame, or
/// `Rotate` (stationary) when the object moves less than `min_travel` px.
/// `None` when either end frame has nothing brighter than the floor.
pub fn detect_motion<S: Scalar>(video: &VideoTensor<S>, min_travel: f64) -> Option<Motion> {
    let t = video.frames();
    if t == 0 {
        return None;
    }
    let (first, last) = (frame_centroid(video, 0)?, frame_centroid(video, t - 1)?);
    let (dx, dy) = (last.0 - first.0, last.1 - first.1);
    if dx.abs().max(dy.abs()) < min_travel {
        return Some(Motion::Rotate);
    }
    Some(if dx.abs() >= dy.abs() {
        if dx > 0.0 {
            Motion::Right
        } else {
            Motion::Left
        }
    } else if dy > 0.0 {
        Motion::Down
    } else {
        Motion::Up
    })
}
