//! Per-pixel adaptive mixture-of-Gaussians background subtraction.
//!
//! Every pixel owns an ordered set of Gaussian components (weight, mean,
//! variance), ranked by `weight / sigma`. An observation is matched to the
//! first component within `match_sigma` standard deviations; weights decay
//! toward the match indicator, the matched component's mean and variance
//! track the observation, and unmatched observations spawn (or replace the
//! lowest-ranked) component. The highest-ranked components whose cumulative
//! weight exceeds `background_portion` form the background set; a pixel is
//! foreground when its observation matched nothing in that set.

use thiserror::Error;

use crate::frame::GrayFrame;
use crate::geom::Rect;

/// One Gaussian of a pixel mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// How the parameter learning rate `rho` of a matched component is derived
/// from the global learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoMode {
    /// `rho = alpha * eta(x | mean, variance)`, clamped below so adaptation
    /// never stalls on wide variances.
    Gaussian,
    /// `rho = alpha`; cross-checking mode.
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundParams {
    /// Maximum components per pixel.
    pub components: usize,
    /// Weight learning rate (alpha).
    pub learning_rate: f64,
    /// Cumulative weight portion treated as background (T).
    pub background_portion: f64,
    /// Match window in standard deviations (lambda).
    pub match_sigma: f64,
    /// Variance given to newly spawned components.
    pub initial_variance: f64,
    /// Weight given to newly spawned components before renormalization.
    pub new_component_weight: f64,
    /// Variances never drop below this.
    pub variance_floor: f64,
    pub rho_mode: RhoMode,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams {
            components: 3,
            learning_rate: 0.02,
            background_portion: 0.7,
            match_sigma: 2.5,
            initial_variance: 225.0,
            new_component_weight: 0.05,
            variance_floor: 4.0,
            rho_mode: RhoMode::Gaussian,
        }
    }
}

impl BackgroundParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.components < 1 {
            return Err(ModelError::BadParams("components must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.learning_rate >= 1.0 {
            return Err(ModelError::BadParams("learning_rate must be in (0, 1)".into()));
        }
        if self.background_portion.is_nan()
            || self.background_portion <= 0.0
            || self.background_portion >= 1.0
        {
            return Err(ModelError::BadParams("background_portion must be in (0, 1)".into()));
        }
        if self.match_sigma.is_nan() || self.match_sigma <= 0.0 {
            return Err(ModelError::BadParams("match_sigma must be > 0".into()));
        }
        if self.variance_floor.is_nan() || self.variance_floor <= 0.0 {
            return Err(ModelError::BadParams("variance_floor must be > 0".into()));
        }
        if self.initial_variance < self.variance_floor {
            return Err(ModelError::BadParams(
                "initial_variance must be >= variance_floor".into(),
            ));
        }
        if self.new_component_weight.is_nan()
            || self.new_component_weight <= 0.0
            || self.new_component_weight > 1.0
        {
            return Err(ModelError::BadParams(
                "new_component_weight must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("frame dimensions must be >= 1, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("invalid background parameters: {0}")]
    BadParams(String),
    #[error("frame is {got_width}x{got_height} but the model is {width}x{height}")]
    DimensionMismatch {
        width: u32,
        height: u32,
        got_width: u32,
        got_height: u32,
    },
    #[error("region {rect:?} exceeds {width}x{height} mask bounds")]
    RoiOutOfBounds { rect: Rect, width: u32, height: u32 },
}

#[inline]
fn gaussian_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-(d * d) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// True when `x` lies within `lambda` standard deviations of the component.
#[inline]
pub fn matches(x: f64, component: &GaussianComponent, lambda: f64) -> bool {
    (x - component.mean).abs() <= lambda * component.variance.sqrt()
}

/// The ordered Gaussian set of a single pixel.
///
/// Invariants after every update: weights sum to 1 (within 1e-9), variances
/// sit at or above the floor, and components are sorted by non-increasing
/// `weight / sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMixture {
    components: Vec<GaussianComponent>,
}

impl PixelMixture {
    /// Fresh mixture holding one full-weight component with an unseeded mean.
    fn unseeded(params: &BackgroundParams) -> Self {
        PixelMixture {
            components: vec![GaussianComponent {
                weight: 1.0,
                mean: 0.0,
                variance: params.initial_variance,
            }],
        }
    }

    /// Builds a mixture from explicit components; they are rank-sorted and
    /// the weights renormalized.
    pub fn with_components(components: Vec<GaussianComponent>) -> Self {
        assert!(!components.is_empty(), "a mixture holds at least one component");
        let mut m = PixelMixture { components };
        m.renormalize();
        m.sort_by_rank(None);
        m
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// First observation: the top component adopts the value as its mean.
    pub fn seed(&mut self, x: f64) {
        self.components[0].mean = x;
    }

    fn renormalize(&mut self) {
        let sum: f64 = self.components.iter().map(|c| c.weight).sum();
        for c in &mut self.components {
            c.weight /= sum;
        }
    }

    /// Stable sort by descending `weight / sigma`; returns the new position
    /// of `tracked`, if given.
    fn sort_by_rank(&mut self, tracked: Option<usize>) -> Option<usize> {
        let mut order: Vec<usize> = (0..self.components.len()).collect();
        order.sort_by(|&a, &b| {
            let ka = self.components[a].weight / self.components[a].variance.sqrt();
            let kb = self.components[b].weight / self.components[b].variance.sqrt();
            kb.total_cmp(&ka)
        });
        let sorted: Vec<GaussianComponent> =
            order.iter().map(|&i| self.components[i]).collect();
        self.components = sorted;
        tracked.and_then(|t| order.iter().position(|&i| i == t))
    }

    /// Number of top-ranked components whose cumulative weight first exceeds
    /// the background portion.
    fn background_count(&self, portion: f64) -> usize {
        let mut cumulative = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            cumulative += c.weight;
            if cumulative > portion {
                return i + 1;
            }
        }
        self.components.len()
    }

    /// Advances the mixture one observation; returns whether the pixel is
    /// foreground.
    pub fn update(&mut self, x: f64, params: &BackgroundParams) -> bool {
        let matched = self
            .components
            .iter()
            .position(|c| matches(x, c, params.match_sigma));

        let alpha = params.learning_rate;
        for (j, c) in self.components.iter_mut().enumerate() {
            let m = if matched == Some(j) { 1.0 } else { 0.0 };
            c.weight = (1.0 - alpha) * c.weight + alpha * m;
        }
        self.renormalize();

        match matched {
            Some(i) => {
                let c = &mut self.components[i];
                let rho = match params.rho_mode {
                    RhoMode::Simple => alpha,
                    RhoMode::Gaussian => (alpha * gaussian_density(x, c.mean, c.variance))
                        .clamp(alpha * 1e-4, 1.0),
                };
                c.mean = (1.0 - rho) * c.mean + rho * x;
                let d = x - c.mean;
                c.variance = ((1.0 - rho) * c.variance + rho * d * d).max(params.variance_floor);
            }
            None => {
                let fresh = GaussianComponent {
                    weight: params.new_component_weight,
                    mean: x,
                    variance: params.initial_variance,
                };
                if self.components.len() < params.components {
                    self.components.push(fresh);
                } else {
                    *self.components.last_mut().expect("non-empty mixture") = fresh;
                }
                self.renormalize();
            }
        }

        let new_pos = self.sort_by_rank(matched);
        let background = self.background_count(params.background_portion);
        match new_pos {
            Some(p) => p >= background,
            None => true,
        }
    }
}

/// One foreground flag per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl ForegroundMask {
    pub fn new(width: u32, height: u32) -> Self {
        ForegroundMask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Set-pixel count inside the region.
    pub fn foreground_area(&self, roi: Rect) -> Result<u64, ModelError> {
        if !roi.fits_within(self.width, self.height) {
            return Err(ModelError::RoiOutOfBounds {
                rect: roi,
                width: self.width,
                height: self.height,
            });
        }
        let mut n = 0u64;
        for y in roi.y..roi.bottom() {
            for x in roi.x..roi.right() {
                if self.get(x, y) {
                    n += 1;
                }
            }
        }
        Ok(n)
    }

    /// Debug view: foreground as 255 on black.
    pub fn to_gray_frame(&self, timestamp_ms: u64) -> GrayFrame {
        let pixels = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayFrame::new(self.width, self.height, pixels, timestamp_ms)
    }
}

/// Whole-frame background model: one mixture per pixel. The first applied
/// frame seeds the means; every later frame advances all mixtures one step.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    width: u32,
    height: u32,
    params: BackgroundParams,
    mixtures: Vec<PixelMixture>,
    seeded: bool,
}

impl BackgroundModel {
    pub fn new(width: u32, height: u32, params: BackgroundParams) -> Result<Self, ModelError> {
        if width == 0 || height == 0 {
            return Err(ModelError::ZeroDimension { width, height });
        }
        params.validate()?;
        let mixtures = vec![PixelMixture::unseeded(&params); width as usize * height as usize];
        Ok(BackgroundModel { width, height, params, mixtures, seeded: false })
    }

    pub fn params(&self) -> &BackgroundParams {
        &self.params
    }

    pub fn mixture(&self, x: u32, y: u32) -> &PixelMixture {
        &self.mixtures[y as usize * self.width as usize + x as usize]
    }

    /// Advances the model one frame and returns the foreground mask.
    pub fn apply(&mut self, frame: &GrayFrame) -> Result<ForegroundMask, ModelError> {
        if frame.width != self.width || frame.height != self.height {
            return Err(ModelError::DimensionMismatch {
                width: self.width,
                height: self.height,
                got_width: frame.width,
                got_height: frame.height,
            });
        }
        let mut mask = ForegroundMask::new(self.width, self.height);
        if !self.seeded {
            for (mixture, &px) in self.mixtures.iter_mut().zip(&frame.pixels) {
                mixture.seed(px as f64);
            }
            self.seeded = true;
            return Ok(mask);
        }
        for (i, (mixture, &px)) in self.mixtures.iter_mut().zip(&frame.pixels).enumerate() {
            if mixture.update(px as f64, &self.params) {
                mask.bits[i] = true;
            }
        }
        Ok(mask)
    }
}
