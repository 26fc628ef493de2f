//! Head-tail keypoint loss and its variants.
//!
//! For a predicted box `p` and an annotated box `g` the loss is
//!
//! ```text
//! (‖p.center − g.center‖² + min(‖p.head − g.head‖², ‖p.head − g.tail‖²)) / S
//! ```
//!
//! so a prediction pointing at the annotated tail is as good as one pointing
//! at the head: only the direction of the object is supervised, not its
//! heading. The four-point variant also accepts the midpoints of the two long
//! sides, which suits square-ish objects. An optional width term compares the
//! predicted and annotated widths.
//!
//! Gradients are taken with respect to the prediction only.

use serde::{Deserialize, Serialize};

use crate::geometry::{ImageSize, KeypointBox, Point2};

/// Divisor `S` applied to every loss term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `S = W·H`. Squared distances become invariant to uniform image scaling.
    #[default]
    PixelCount,
    /// `S = W² + H²`.
    PixelDiagSq,
}

impl Normalization {
    pub fn divisor(self, img: &ImageSize) -> f64 {
        match self {
            Normalization::PixelCount => img.pixel_count(),
            Normalization::PixelDiagSq => img.diag_sq(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthTerm {
    #[default]
    None,
    /// `|w_p − w_g| / S`
    Absolute,
    /// `(w_p − w_g)² / S`
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossConfig {
    pub normalization: Normalization,
    pub width_term: WidthTerm,
    /// Only used to filter near-tie samples in tests; it does not smooth the
    /// minimum.
    pub tie_epsilon: f64,
}

impl LossConfig {
    pub fn with_width_term(mut self, width_term: WidthTerm) -> Self {
        self.width_term = width_term;
        self
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }
}

/// Annotated point the predicted head was matched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Head,
    Tail,
    Left,
    Right,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Head => "head",
            Branch::Tail => "tail",
            Branch::Left => "left",
            Branch::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub center: f64,
    pub extremity: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub active_branch: Branch,
    pub components: LossComponents,
    /// Difference between the two smallest candidate extremity terms, in loss
    /// units. Zero at a tie.
    pub branch_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossGradient {
    pub d_center: Point2,
    pub d_head: Point2,
    pub d_width: f64,
}

/// Which head-matching rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Head or tail.
    #[default]
    HeadTail,
    /// Head, tail, left or right side midpoint.
    FourPoint,
}

impl LossVariant {
    pub fn loss(self, pred: &KeypointBox, gt: &KeypointBox, img: &ImageSize, cfg: &LossConfig) -> LossValue {
        match self {
            LossVariant::HeadTail => head_tail_loss(pred, gt, img, cfg),
            LossVariant::FourPoint => four_point_loss(pred, gt, img, cfg),
        }
    }

    pub fn grad(self, pred: &KeypointBox, gt: &KeypointBox, img: &ImageSize, cfg: &LossConfig) -> LossGradient {
        match self {
            LossVariant::HeadTail => head_tail_loss_grad(pred, gt, img, cfg),
            LossVariant::FourPoint => four_point_loss_grad(pred, gt, img, cfg),
        }
    }
}

/// Midpoints of the annotated box's long sides, placed with the annotated
/// width: `center ± (w/2)·u⊥`, with `u⊥` the counter-clockwise perpendicular
/// of the center-to-head direction.
pub fn side_points(gt: &KeypointBox) -> (Point2, Point2) {
    let axis = gt.axis();
    let perp = axis.perp() * (0.5 * gt.width / axis.norm());
    (gt.center + perp, gt.center - perp)
}

fn candidates(gt: &KeypointBox, variant: LossVariant) -> ([(Branch, Point2); 4], usize) {
    let mut out =
        [(Branch::Head, gt.head), (Branch::Tail, gt.tail()), (Branch::Left, gt.head), (Branch::Right, gt.head)];
    match variant {
        LossVariant::HeadTail => (out, 2),
        LossVariant::FourPoint => {
            let (left, right) = side_points(gt);
            out[2] = (Branch::Left, left);
            out[3] = (Branch::Right, right);
            (out, 4)
        }
    }
}

/// Picks the closest candidate; ties go to the earliest (head first).
/// Returns the branch, its point, its squared distance and the squared
/// distance of the runner-up.
fn select_branch(head: Point2, gt: &KeypointBox, variant: LossVariant) -> (Branch, Point2, f64, f64) {
    let (cands, n) = candidates(gt, variant);
    let mut best = (cands[0].0, cands[0].1, head.dist_sq(cands[0].1));
    let mut runner_up = f64::INFINITY;
    for &(branch, point) in &cands[1..n] {
        let d = head.dist_sq(point);
        if d < best.2 {
            runner_up = best.2;
            best = (branch, point, d);
        } else if d < runner_up {
            runner_up = d;
        }
    }
    (best.0, best.1, best.2, runner_up)
}

fn loss_impl(
    pred: &KeypointBox,
    gt: &KeypointBox,
    img: &ImageSize,
    cfg: &LossConfig,
    variant: LossVariant,
) -> LossValue {
    let s = cfg.normalization.divisor(img);
    let (branch, _, d_ext, d_next) = select_branch(pred.head, gt, variant);
    let dw = pred.width - gt.width;
    let components = LossComponents {
        center: pred.center.dist_sq(gt.center) / s,
        extremity: d_ext / s,
        width: match cfg.width_term {
            WidthTerm::None => 0.0,
            WidthTerm::Absolute => dw.abs() / s,
            WidthTerm::Squared => dw * dw / s,
        },
    };
    LossValue {
        value: components.center + components.extremity + components.width,
        active_branch: branch,
        components,
        branch_gap: (d_next - d_ext) / s,
    }
}

fn grad_impl(
    pred: &KeypointBox,
    gt: &KeypointBox,
    img: &ImageSize,
    cfg: &LossConfig,
    variant: LossVariant,
) -> LossGradient {
    let s = cfg.normalization.divisor(img);
    let (_, target, _, _) = select_branch(pred.head, gt, variant);
    let dw = pred.width - gt.width;
    let d_width = match cfg.width_term {
        WidthTerm::None => 0.0,
        WidthTerm::Absolute if dw == 0.0 => 0.0,
        WidthTerm::Absolute => dw.signum() / s,
        WidthTerm::Squared => 2.0 * dw / s,
    };
    LossGradient { d_center: (pred.center - gt.center) * (2.0 / s), d_head: (pred.head - target) * (2.0 / s), d_width }
}

pub fn head_tail_loss(pred: &KeypointBox, gt: &KeypointBox, img: &ImageSize, cfg: &LossConfig) -> LossValue {
    loss_impl(pred, gt, img, cfg, LossVariant::HeadTail)
}

pub fn head_tail_loss_grad(pred: &KeypointBox, gt: &KeypointBox, img: &ImageSize, cfg: &LossConfig) -> LossGradient {
    grad_impl(pred, gt, img, cfg, LossVariant::HeadTail)
}

pub fn four_point_loss(pred: &KeypointBox, gt: &KeypointBox, img: &ImageSize, cfg: &LossConfig) -> LossValue {
    loss_impl(pred, gt, img, cfg, LossVariant::FourPoint)
}

pub fn four_point_loss_grad(pred: &KeypointBox, gt: &KeypointBox, img: &ImageSize, cfg: &LossConfig) -> LossGradient {
    grad_impl(pred, gt, img, cfg, LossVariant::FourPoint)
}
