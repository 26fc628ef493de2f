//! Gradient-descent fitting of a keypoint box to a target, and synthetic
//! scenes for exercising the evaluation pipeline.
//!
//! Plain fixed-step gradient descent on the head-tail loss recovers the
//! object's axis from any start; the final head lands on whichever of the
//! target's head or tail was closer.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{DatasetManifest, DetectionRecord, GroundTruthRecord};
use crate::geometry::{GeometryError, ImageSize, KeypointBox, ObbParams, Point2};
use crate::losses::{LossConfig, LossVariant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("degenerate axis: head coincides with center")]
    DegenerateAxis,
    #[error("diverged at iteration {iteration}: loss {loss} exceeds 1e6 × initial loss {initial}")]
    Diverged { iteration: usize, loss: f64, initial: f64 },
    #[error("invalid fit config: {0}")]
    BadConfig(String),
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Acute angle between the undirected axes of two boxes, in `[0, π/2]`.
pub fn direction_error(pred: &KeypointBox, gt: &KeypointBox) -> Result<f64, OptimError> {
    let (a, b) = (pred.axis(), gt.axis());
    if a == Point2::default() || b == Point2::default() {
        return Err(OptimError::DegenerateAxis);
    }
    Ok(a.cross(b).abs().atan2(a.dot(b).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Step size; `None` means `0.1·S`, which cancels the `1/S` in the
    /// gradient.
    pub learning_rate: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub variant: LossVariant,
    pub loss: LossConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            max_iters: 5000,
            tol: 1e-10,
            variant: LossVariant::HeadTail,
            loss: LossConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn effective_learning_rate(&self, img: &ImageSize) -> f64 {
        self.learning_rate.unwrap_or_else(|| 0.1 * self.loss.normalization.divisor(img))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Loss before each step and after the last one; `losses[i]` is the loss
    /// after `i` steps.
    pub losses: Vec<f64>,
    pub final_box: KeypointBox,
    pub converged: bool,
    pub iterations: usize,
    pub direction_error: f64,
}

/// Fixed-step gradient descent on the prediction's center, head and width.
pub fn fit_obb(
    init: &KeypointBox,
    target: &KeypointBox,
    img: &ImageSize,
    cfg: &FitConfig,
) -> Result<FitTrace, OptimError> {
    let lr = cfg.effective_learning_rate(img);
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(OptimError::BadConfig(format!("learning rate {lr}")));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(OptimError::BadConfig(format!("tol {}", cfg.tol)));
    }
    let loss_at = |b: &KeypointBox| cfg.variant.loss(b, target, img, &cfg.loss).value;

    let mut current = *init;
    let initial = loss_at(&current);
    let mut losses = vec![initial];
    let mut iterations = 0;
    let mut loss = initial;
    while loss > cfg.tol && iterations < cfg.max_iters {
        let g = cfg.variant.grad(&current, target, img, &cfg.loss);
        current.center = current.center - g.d_center * lr;
        current.head = current.head - g.d_head * lr;
        let width = current.width - g.d_width * lr;
        if width > 0.0 {
            current.width = width;
        }
        iterations += 1;
        loss = loss_at(&current);
        if !loss.is_finite() || loss > 1e6 * initial {
            return Err(OptimError::Diverged { iteration: iterations, loss, initial });
        }
        losses.push(loss);
    }
    let direction_error = direction_error(&current, target)?;
    Ok(FitTrace { losses, final_box: current, converged: loss <= cfg.tol, iterations, direction_error })
}

/// Parameters for a synthetic scene set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub image: ImageSize,
    pub num_images: usize,
    /// Objects per image for each category.
    pub counts: Vec<(String, usize)>,
    pub length_range: (f64, f64),
    /// Width/length ratio range, within `(0, 1]`.
    pub aspect_range: (f64, f64),
    /// Standard deviation of the center offset of detections, in pixels.
    pub coord_noise: f64,
    /// Standard deviation of the heading offset of detections, in radians.
    pub angle_noise: f64,
    /// Standard deviation of `1 − score` for matched detections.
    pub score_noise: f64,
    /// Random low-score boxes added per image.
    pub spurious_per_image: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            image: ImageSize { width_px: 1024, height_px: 1024 },
            num_images: 4,
            counts: vec![("ship".into(), 3), ("plane".into(), 2)],
            length_range: (20.0, 120.0),
            aspect_range: (0.2, 0.6),
            coord_noise: 0.0,
            angle_noise: 0.0,
            score_noise: 0.0,
            spurious_per_image: 0,
        }
    }
}

/// Highest score a spurious detection can get.
pub const SPURIOUS_MAX_SCORE: f64 = 0.05;

impl SynthSpec {
    fn validate(&self) -> Result<(), OptimError> {
        let (l0, l1) = self.length_range;
        let (a0, a1) = self.aspect_range;
        let bad = |m: String| Err(OptimError::Infeasible(m));
        if !(l0 > 0.0 && l0 <= l1 && l1.is_finite()) {
            return bad(format!("length range ({l0}, {l1})"));
        }
        if !(a0 > 0.0 && a0 <= a1 && a1 <= 1.0) {
            return bad(format!("aspect range ({a0}, {a1})"));
        }
        if [self.coord_noise, self.angle_noise, self.score_noise].iter().any(|n| !(*n >= 0.0 && n.is_finite())) {
            return bad("noise magnitudes must be finite and non-negative".into());
        }
        // the largest box must fit at any heading
        let diag = l1 * (1.0 + a1 * a1).sqrt();
        let side = self.image.width_px.min(self.image.height_px) as f64;
        if diag > side {
            return bad(format!("box diagonal {diag} exceeds image side {side}"));
        }
        Ok(())
    }
}

fn random_box<R: Rng>(rng: &mut R, spec: &SynthSpec) -> ObbParams {
    let length = rng.random_range(spec.length_range.0..=spec.length_range.1);
    let width = length * rng.random_range(spec.aspect_range.0..=spec.aspect_range.1);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let (s, c) = theta.sin_cos();
    let hx = 0.5 * (length * c.abs() + width * s.abs());
    let hy = 0.5 * (length * s.abs() + width * c.abs());
    let (w, h) = (spec.image.width_px as f64, spec.image.height_px as f64);
    let cx = rng.random_range(hx..=w - hx);
    let cy = rng.random_range(hy..=h - hy);
    ObbParams::new(cx, cy, length, width, theta).expect("sampled extents are positive")
}

/// Generates groundtruth and detections. Detections are noisy copies of every
/// groundtruth box plus `spurious_per_image` random boxes scored below
/// [`SPURIOUS_MAX_SCORE`]. Output depends only on the spec.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(DatasetManifest, Vec<DetectionRecord>), OptimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let coord = Normal::new(0.0, spec.coord_noise).map_err(|e| OptimError::Infeasible(e.to_string()))?;
    let angle = Normal::new(0.0, spec.angle_noise).map_err(|e| OptimError::Infeasible(e.to_string()))?;
    let score = Normal::new(0.0, spec.score_noise).map_err(|e| OptimError::Infeasible(e.to_string()))?;

    let categories: Vec<String> = spec.counts.iter().map(|(c, _)| c.clone()).collect();
    let mut images = Vec::with_capacity(spec.num_images);
    let mut groundtruth = Vec::new();
    let mut detections = Vec::new();
    for i in 0..spec.num_images {
        let image_id = format!("synth_{i:05}");
        images.push((image_id.clone(), spec.image));
        for (category, count) in &spec.counts {
            for _ in 0..*count {
                let b = random_box(&mut rng, spec);
                groundtruth.push(GroundTruthRecord {
                    image_id: image_id.clone(),
                    quad: b.to_quad(),
                    category: category.clone(),
                    difficult: false,
                });
                let noisy = ObbParams::new(
                    b.cx + coord.sample(&mut rng),
                    b.cy + coord.sample(&mut rng),
                    b.length,
                    b.width,
                    b.theta + angle.sample(&mut rng),
                )?;
                let s: f64 = score.sample(&mut rng);
                detections.push(DetectionRecord {
                    image_id: image_id.clone(),
                    obb: noisy,
                    category: category.clone(),
                    score: (1.0 - s.abs()).clamp(SPURIOUS_MAX_SCORE, 1.0),
                });
            }
        }
        if !categories.is_empty() {
            for _ in 0..spec.spurious_per_image {
                let b = random_box(&mut rng, spec);
                let category = categories.choose(&mut rng).expect("non-empty").clone();
                detections.push(DetectionRecord {
                    image_id: image_id.clone(),
                    obb: b,
                    category,
                    score: rng.random_range(0.0..SPURIOUS_MAX_SCORE),
                });
            }
        }
    }
    Ok((DatasetManifest { images, groundtruth, categories }, detections))
}

/// Random keypoint box fully inside `img`, with length in `length_range`
/// and width/length ratio in `aspect_range`.
pub fn random_keypoint_box<R: Rng>(
    rng: &mut R,
    img: &ImageSize,
    length_range: (f64, f64),
    aspect_range: (f64, f64),
) -> KeypointBox {
    let spec = SynthSpec { image: *img, length_range, aspect_range, ..SynthSpec::default() };
    random_box(rng, &spec).to_keypoints()
}
