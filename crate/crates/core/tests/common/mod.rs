//! Test-only oracles and samplers, written without touching the library's
//! loss or clipping code paths.

#![allow(dead_code)]

use obbkit::geometry::{ImageSize, KeypointBox, ObbParams, Point2};
use obbkit::losses::{LossConfig, LossGradient, LossVariant, Normalization, WidthTerm};
use rand::Rng;

/// Scalar brute-force evaluation of the head-tail loss: every branch is
/// written out with plain arithmetic and the minimum taken explicitly.
pub fn brute_force_head_tail(pred: &KeypointBox, gt: &KeypointBox, img: &ImageSize, cfg: &LossConfig) -> f64 {
    let s = match cfg.normalization {
        Normalization::PixelCount => img.width_px as f64 * img.height_px as f64,
        Normalization::PixelDiagSq => (img.width_px as f64).powi(2) + (img.height_px as f64).powi(2),
    };
    let (pcx, pcy, phx, phy) = (pred.center.x, pred.center.y, pred.head.x, pred.head.y);
    let (gcx, gcy, ghx, ghy) = (gt.center.x, gt.center.y, gt.head.x, gt.head.y);
    let (gtx, gty) = (2.0 * gcx - ghx, 2.0 * gcy - ghy);
    let center = (pcx - gcx) * (pcx - gcx) + (pcy - gcy) * (pcy - gcy);
    let to_head = (phx - ghx) * (phx - ghx) + (phy - ghy) * (phy - ghy);
    let to_tail = (phx - gtx) * (phx - gtx) + (phy - gty) * (phy - gty);
    let extremity = if to_tail < to_head { to_tail } else { to_head };
    let dw = pred.width - gt.width;
    let width = match cfg.width_term {
        WidthTerm::None => 0.0,
        WidthTerm::Absolute => dw.abs(),
        WidthTerm::Squared => dw * dw,
    };
    center / s + extremity / s + width / s
}

/// Scalar brute-force four-point loss, candidates built from the annotated
/// axis angle rather than from vector helpers.
pub fn brute_force_four_point(pred: &KeypointBox, gt: &KeypointBox, img: &ImageSize) -> f64 {
    let s = img.width_px as f64 * img.height_px as f64;
    let ang = (gt.head.y - gt.center.y).atan2(gt.head.x - gt.center.x);
    let half_len = ((gt.head.x - gt.center.x).powi(2) + (gt.head.y - gt.center.y).powi(2)).sqrt();
    let hw = gt.width / 2.0;
    let cands = [
        (gt.center.x + half_len * ang.cos(), gt.center.y + half_len * ang.sin()),
        (gt.center.x - half_len * ang.cos(), gt.center.y - half_len * ang.sin()),
        (gt.center.x - hw * ang.sin(), gt.center.y + hw * ang.cos()),
        (gt.center.x + hw * ang.sin(), gt.center.y - hw * ang.cos()),
    ];
    let ext =
        cands.iter().map(|(x, y)| (pred.head.x - x).powi(2) + (pred.head.y - y).powi(2)).fold(f64::INFINITY, f64::min);
    let center = (pred.center.x - gt.center.x).powi(2) + (pred.center.y - gt.center.y).powi(2);
    (center + ext) / s
}

/// Central finite differences of the loss over (center, head, width).
pub fn finite_difference(
    variant: LossVariant,
    pred: &KeypointBox,
    gt: &KeypointBox,
    img: &ImageSize,
    cfg: &LossConfig,
    h: f64,
) -> LossGradient {
    let f = |b: &KeypointBox| variant.loss(b, gt, img, cfg).value;
    let mut params = [pred.center.x, pred.center.y, pred.head.x, pred.head.y, pred.width];
    let mut grad = [0.0; 5];
    for i in 0..5 {
        let orig = params[i];
        params[i] = orig + h;
        let plus = f(&from_params(&params));
        params[i] = orig - h;
        let minus = f(&from_params(&params));
        params[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    LossGradient { d_center: Point2::new(grad[0], grad[1]), d_head: Point2::new(grad[2], grad[3]), d_width: grad[4] }
}

fn from_params(p: &[f64; 5]) -> KeypointBox {
    KeypointBox { center: Point2::new(p[0], p[1]), head: Point2::new(p[2], p[3]), width: p[4] }
}

pub fn grad_vec(g: &LossGradient) -> [f64; 5] {
    [g.d_center.x, g.d_center.y, g.d_head.x, g.d_head.y, g.d_width]
}

/// `‖a − b‖∞ / ‖b‖∞`, with `b` the analytic gradient.
pub fn grad_rel_error(fd: &LossGradient, analytic: &LossGradient) -> f64 {
    let (a, b) = (grad_vec(fd), grad_vec(analytic));
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn random_point<R: Rng>(rng: &mut R, img: &ImageSize) -> Point2 {
    Point2::new(rng.random_range(0.0..img.width_px as f64), rng.random_range(0.0..img.height_px as f64))
}

/// Random keypoint box with center in the image and an axis of up to 200 px.
pub fn random_keypoints<R: Rng>(rng: &mut R, img: &ImageSize) -> KeypointBox {
    loop {
        let center = random_point(rng, img);
        let head = center + Point2::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
        if let Ok(k) = KeypointBox::new(center, head, rng.random_range(1.0..80.0)) {
            return k;
        }
    }
}

/// Random point on a 1/1024-px lattice inside `[0, 4096)²`. Sums and
/// differences of such coordinates are exact in f64.
pub fn lattice_point<R: Rng>(rng: &mut R) -> Point2 {
    let q = |r: &mut R| rng_lattice(r);
    Point2::new(q(rng), q(rng))
}

fn rng_lattice<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(0..(4096u64 << 10)) as f64 / 1024.0
}

pub fn lattice_keypoints<R: Rng>(rng: &mut R) -> KeypointBox {
    loop {
        if let Ok(k) = KeypointBox::new(lattice_point(rng), lattice_point(rng), rng_lattice(rng) + 1.0) {
            return k;
        }
    }
}

pub fn random_image<R: Rng>(rng: &mut R) -> ImageSize {
    ImageSize::new(rng.random_range(64..4096), rng.random_range(64..4096)).unwrap()
}

/// A pair of boxes that overlap most of the time: the second is a perturbed
/// copy of the first.
pub fn random_overlapping_pair<R: Rng>(rng: &mut R) -> (ObbParams, ObbParams) {
    let a = ObbParams::new(
        rng.random_range(-100.0..100.0),
        rng.random_range(-100.0..100.0),
        rng.random_range(2.0..60.0),
        rng.random_range(1.0..60.0),
        rng.random_range(0.0..std::f64::consts::PI),
    )
    .unwrap();
    let reach = 0.5 * a.length;
    let b = ObbParams::new(
        a.cx + rng.random_range(-reach..reach),
        a.cy + rng.random_range(-reach..reach),
        a.length * rng.random_range(0.5..1.5),
        a.width * rng.random_range(0.5..1.5),
        a.theta + rng.random_range(-1.0..1.0),
    )
    .unwrap();
    (a, b)
}
