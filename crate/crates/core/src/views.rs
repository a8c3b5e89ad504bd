//! Normalized and augmented views of anchor/counterpart image pairs.
//!
//! The normalized view is a resize followed by per-channel standardization and
//! is exactly invertible given the stored statistics. Augmented views run a
//! stochastic policy first and finish with the same standardization, so both
//! kinds of view live on one input scale.

use ndarray::{Array2, ArrayView3, ArrayView4, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{crop_resize, gaussian_blur, hflip, luminance, resize_bilinear, Image};

/// Training shape plus per-channel standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl Normalizer {
    pub fn new(mean: Vec<f64>, std: Vec<f64>, height: usize, width: usize) -> Result<Self> {
        let n = Self {
            mean,
            std,
            height,
            width,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() || self.mean.is_empty() {
            return Err(Error::config("normalizer mean/std must be non-empty and equal length"));
        }
        if let Some(i) = self.std.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::config(format!("normalizer std[{i}] must be positive")));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("training shape must be non-empty"));
        }
        Ok(())
    }

    /// Per-channel mean and (population) std over a stack of images.
    pub fn fit(images: ArrayView4<'_, f64>, height: usize, width: usize) -> Result<Self> {
        let channels = images.len_of(Axis(1));
        let mut mean = Vec::with_capacity(channels);
        let mut std = Vec::with_capacity(channels);
        for ch in 0..channels {
            let plane = images.index_axis(Axis(1), ch);
            let m = plane.mean().unwrap_or(0.0);
            let var = plane.mapv(|v| (v - m) * (v - m)).mean().unwrap_or(0.0);
            mean.push(m);
            std.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self::new(mean, std, height, width)
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn check_channels(&self, image: ArrayView3<'_, f64>) -> Result<()> {
        if image.len_of(Axis(0)) != self.channels() {
            return Err(Error::shape(format!(
                "image has {} channels, normalizer {}",
                image.len_of(Axis(0)),
                self.channels()
            )));
        }
        Ok(())
    }

    /// Standardize an image already at training shape.
    pub fn standardize(&self, image: ArrayView3<'_, f64>) -> Result<Image> {
        self.check_channels(image)?;
        let mut out = image.to_owned();
        for (ch, mut plane) in out.axis_iter_mut(Axis(0)).enumerate() {
            let (m, s) = (self.mean[ch], self.std[ch]);
            plane.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    /// Inverse of [`Normalizer::standardize`].
    pub fn denormalize(&self, view: ArrayView3<'_, f64>) -> Result<Image> {
        self.check_channels(view)?;
        let mut out = view.to_owned();
        for (ch, mut plane) in out.axis_iter_mut(Axis(0)).enumerate() {
            let (m, s) = (self.mean[ch], self.std[ch]);
            plane.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }
}

/// Resize to the training shape, then standardize per channel.
pub fn normalized_view(image: ArrayView3<'_, f64>, norm: &Normalizer) -> Result<Image> {
    let resized = resize_bilinear(image, norm.height, norm.width);
    norm.standardize(resized.view())
}

/// One stochastic transform of an augmentation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Augment {
    /// Random area/aspect crop resized to the training shape.
    RandomResizedCrop { scale: [f64; 2], ratio: [f64; 2] },
    HorizontalFlip { p: f64 },
    /// Brightness, contrast and saturation factors drawn from
    /// `[1 - x, 1 + x]`, applied in that order. Values are not clamped.
    ColorJitter {
        p: f64,
        brightness: f64,
        contrast: f64,
        saturation: f64,
    },
    Grayscale { p: f64 },
    GaussianBlur { p: f64, sigma: [f64; 2], radius: usize },
}

/// Ordered list of stochastic transforms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub transforms: Vec<Augment>,
}

impl AugmentationPolicy {
    /// Applies nothing: augmented views equal normalized views.
    pub fn identity() -> Self {
        Self::default()
    }

    /// Crop, flip, color jitter, grayscale and blur.
    pub fn standard() -> Self {
        Self {
            transforms: vec![
                Augment::RandomResizedCrop {
                    scale: [0.2, 1.0],
                    ratio: [3.0 / 4.0, 4.0 / 3.0],
                },
                Augment::HorizontalFlip { p: 0.5 },
                Augment::ColorJitter {
                    p: 0.8,
                    brightness: 0.4,
                    contrast: 0.4,
                    saturation: 0.4,
                },
                Augment::Grayscale { p: 0.2 },
                Augment::GaussianBlur {
                    p: 0.5,
                    sigma: [0.1, 2.0],
                    radius: 1,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        for t in &self.transforms {
            let ok = match t {
                Augment::RandomResizedCrop { scale, ratio } => {
                    scale[0] > 0.0 && scale[0] <= scale[1] && scale[1] <= 1.0
                        && ratio[0] > 0.0 && ratio[0] <= ratio[1]
                }
                Augment::HorizontalFlip { p } | Augment::Grayscale { p } => prob(*p),
                Augment::ColorJitter {
                    p,
                    brightness,
                    contrast,
                    saturation,
                } => {
                    prob(*p)
                        && (0.0..=1.0).contains(brightness)
                        && (0.0..=1.0).contains(contrast)
                        && (0.0..=1.0).contains(saturation)
                }
                Augment::GaussianBlur { p, sigma, .. } => {
                    prob(*p) && sigma[0] > 0.0 && sigma[0] <= sigma[1]
                }
            };
            if !ok {
                return Err(Error::config(format!("invalid augmentation {t:?}")));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

fn random_resized_crop<R: Rng + ?Sized>(
    img: ArrayView3<'_, f64>,
    scale: [f64; 2],
    ratio: [f64; 2],
    out_h: usize,
    out_w: usize,
    rng: &mut R,
) -> Image {
    let (_, h, w) = img.dim();
    let (hf, wf) = (h as f64, w as f64);
    let log_ratio = [ratio[0].ln(), ratio[1].ln()];
    for _ in 0..10 {
        let area = hf * wf * uniform(rng, scale);
        let aspect = uniform(rng, log_ratio).exp();
        let cw = (area * aspect).sqrt();
        let ch = (area / aspect).sqrt();
        if cw <= wf && ch <= hf {
            let top = rng.gen::<f64>() * (hf - ch);
            let left = rng.gen::<f64>() * (wf - cw);
            return crop_resize(img, top, left, ch, cw, out_h, out_w);
        }
    }
    crop_resize(img, 0.0, 0.0, hf, wf, out_h, out_w)
}

fn apply<R: Rng + ?Sized>(t: &Augment, img: Image, norm: &Normalizer, rng: &mut R) -> Image {
    match *t {
        Augment::RandomResizedCrop { scale, ratio } => {
            random_resized_crop(img.view(), scale, ratio, norm.height, norm.width, rng)
        }
        Augment::HorizontalFlip { p } => {
            if rng.gen::<f64>() < p {
                hflip(img.view())
            } else {
                img
            }
        }
        Augment::ColorJitter {
            p,
            brightness,
            contrast,
            saturation,
        } => {
            if rng.gen::<f64>() >= p {
                return img;
            }
            let b = uniform(rng, [1.0 - brightness, 1.0 + brightness]);
            let c = uniform(rng, [1.0 - contrast, 1.0 + contrast]);
            let s = uniform(rng, [1.0 - saturation, 1.0 + saturation]);
            let mut out = img * b;
            let m = luminance(out.view()).mean().unwrap_or(0.0);
            out.mapv_inplace(|v| (v - m) * c + m);
            let gray = luminance(out.view());
            for mut plane in out.axis_iter_mut(Axis(0)) {
                plane.zip_mut_with(&gray, |v, &g| *v = (*v - g) * s + g);
            }
            out
        }
        Augment::Grayscale { p } => {
            if rng.gen::<f64>() >= p {
                return img;
            }
            let gray = luminance(img.view());
            let mut out = img;
            for mut plane in out.axis_iter_mut(Axis(0)) {
                plane.assign(&gray);
            }
            out
        }
        Augment::GaussianBlur { p, sigma, radius } => {
            if rng.gen::<f64>() >= p {
                return img;
            }
            let s = uniform(rng, sigma);
            gaussian_blur(img.view(), s, radius)
        }
    }
}

/// Run the policy, bring the result to the training shape and standardize.
/// The same rng state yields the same output.
pub fn augmented_view<R: Rng + ?Sized>(
    image: ArrayView3<'_, f64>,
    policy: &AugmentationPolicy,
    norm: &Normalizer,
    rng: &mut R,
) -> Result<Image> {
    let mut img = image.to_owned();
    for t in &policy.transforms {
        img = apply(t, img, norm, rng);
    }
    let img = resize_bilinear(img.view(), norm.height, norm.width);
    norm.standardize(img.view())
}

/// Uniform random derangement of `0..n`: `pairing[i]` is the counterpart of
/// anchor `i`, never `i` itself.
pub fn sample_counterparts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::config(format!("counterpart pairing needs at least 2 items, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    // Rejection sampling over uniform permutations is uniform over
    // derangements; expected ~e attempts.
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// Which transforms fill the two view slots of each image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewScheme {
    /// One normalized view and one augmented view.
    NormalizedAugmented,
    /// Two independent augmented views (the classic two-view recipe).
    AugmentedAugmented,
}

/// The four inputs for one anchor/counterpart pairing.
///
/// Under [`ViewScheme::AugmentedAugmented`] the `_n` slots hold a second,
/// independent augmentation instead of the normalized view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewQuadruple {
    pub anchor_n: Image,
    pub anchor_a: Image,
    pub counterpart_n: Image,
    pub counterpart_a: Image,
    pub anchor_index: usize,
    pub counterpart_index: usize,
}

fn view_pair<R: Rng + ?Sized>(
    image: ArrayView3<'_, f64>,
    scheme: ViewScheme,
    policy: &AugmentationPolicy,
    norm: &Normalizer,
    rng: &mut R,
) -> Result<(Image, Image)> {
    let first = match scheme {
        ViewScheme::NormalizedAugmented => normalized_view(image, norm)?,
        ViewScheme::AugmentedAugmented => augmented_view(image, policy, norm, rng)?,
    };
    let second = augmented_view(image, policy, norm, rng)?;
    Ok((first, second))
}

/// Build one quadruple per anchor, using `batch[pairing[i]]` as the
/// counterpart of `batch[i]`. Counterpart views are drawn independently of
/// that image's own anchor views.
pub fn make_view_quadruples<R: Rng + ?Sized>(
    batch: ArrayView4<'_, f64>,
    pairing: &[usize],
    scheme: ViewScheme,
    policy: &AugmentationPolicy,
    norm: &Normalizer,
    rng: &mut R,
) -> Result<Vec<ViewQuadruple>> {
    let n = batch.len_of(Axis(0));
    if pairing.len() != n {
        return Err(Error::shape(format!("pairing of length {} for batch of {n}", pairing.len())));
    }
    let mut seen = vec![false; n];
    for (i, &p) in pairing.iter().enumerate() {
        if p >= n || p == i || seen[p] {
            return Err(Error::config("pairing must be a derangement of the batch"));
        }
        seen[p] = true;
    }
    let mut quads = Vec::with_capacity(n);
    for (i, &c) in pairing.iter().enumerate() {
        let (anchor_n, anchor_a) = view_pair(batch.index_axis(Axis(0), i), scheme, policy, norm, rng)?;
        let (counterpart_n, counterpart_a) =
            view_pair(batch.index_axis(Axis(0), c), scheme, policy, norm, rng)?;
        quads.push(ViewQuadruple {
            anchor_n,
            anchor_a,
            counterpart_n,
            counterpart_a,
            anchor_index: i,
            counterpart_index: c,
        });
    }
    Ok(quads)
}

/// The four view slots of a batch, each flattened to an `N x features` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrices {
    pub anchor_n: Array2<f64>,
    pub anchor_a: Array2<f64>,
    pub counterpart_n: Array2<f64>,
    pub counterpart_a: Array2<f64>,
}

impl ViewMatrices {
    pub fn from_quadruples(quads: &[ViewQuadruple]) -> Self {
        let stack = |get: fn(&ViewQuadruple) -> &Image| {
            let rows: Vec<f64> = quads.iter().flat_map(|q| get(q).iter().copied()).collect();
            let width = quads.first().map_or(0, |q| get(q).len());
            Array2::from_shape_vec((quads.len(), width), rows).expect("uniform view shapes")
        };
        Self {
            anchor_n: stack(|q| &q.anchor_n),
            anchor_a: stack(|q| &q.anchor_a),
            counterpart_n: stack(|q| &q.counterpart_n),
            counterpart_a: stack(|q| &q.counterpart_a),
        }
    }

    pub fn slot(&self, slot: crate::objective::ViewSlot) -> &Array2<f64> {
        use crate::objective::ViewSlot;
        match slot {
            ViewSlot::AnchorFirst => &self.anchor_n,
            ViewSlot::AnchorSecond => &self.anchor_a,
            ViewSlot::CounterpartFirst => &self.counterpart_n,
            ViewSlot::CounterpartSecond => &self.counterpart_a,
        }
    }
}
