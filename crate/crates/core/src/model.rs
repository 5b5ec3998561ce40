//! Tensor ring (TR) and tree tensor network (TTN) regressors over the
//! `[1, x]` featurization.
//!
//! Both architectures describe their contraction order once, as a
//! schedule written against the [`Contractor`] trait. The same schedule
//! runs the standard forward pass (feature vectors, dense contractions) or
//! the degree-resolved pass (diagonal feature matrices, degree-preserving
//! contractions on lifted cores), and it runs either eagerly ([`Eval`]) or
//! on a gradient tape (see [`crate::grad`]).
//!
//! Core layouts:
//!
//! * TR feature core `i`: `[left, physical(2), right]`, the output core
//!   `[left, class, right]` sits between feature cores `m-1` and `0`.
//! * TTN core: `[in_left, in_right, out]`. Bottom-layer inputs are the
//!   physical pair `(x_{2t}, x_{2t+1})`; the top core's `out` axis is the
//!   class axis.

use std::borrow::Cow;
use std::fmt;
use std::io::{self, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degree::{self, h_feature, h_feature_matrix};
use crate::tensor::{self, DenseTensor, TensorError};

#[derive(Error, Debug)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("expected {expected} features, got {actual}")]
    FeatureCount { expected: usize, actual: usize },
    #[error("invalid model dimensions: {0}")]
    InvalidDimensions(String),
    #[error("tree tensor networks need a power-of-two feature count, got {0}")]
    NotPowerOfTwo(usize),
    #[error("degree cap {cap} exceeds the feature count {m}")]
    DegreeCapTooLarge { cap: usize, m: usize },
    #[error("invalid degree set: {0}")]
    DegreeSet(String),
    #[error("parameter {0} is not registered")]
    UnregisteredParameter(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Backend that realizes the primitive operations of a contraction
/// schedule.
pub trait Contractor {
    type Value;

    /// Parameter tensor `index` in the model's flat parameter order.
    fn param(&mut self, index: usize) -> Result<Self::Value>;
    /// Data-dependent tensor that carries no gradient.
    fn constant(&mut self, t: DenseTensor) -> Result<Self::Value>;
    fn contract(
        &mut self,
        a: &Self::Value,
        b: &Self::Value,
        pairs: &[(usize, usize)],
    ) -> Result<Self::Value>;
    /// Adds a leading degree axis of size one.
    fn lift(&mut self, a: &Self::Value) -> Result<Self::Value>;
    fn degree_contract(
        &mut self,
        a: &Self::Value,
        b: &Self::Value,
        pairs: &[(usize, usize)],
        j_max: Option<usize>,
    ) -> Result<Self::Value>;
    /// Called on each per-layer intermediate; used for structural audits.
    fn observe(&mut self, _v: &Self::Value) {}
}

/// Eager evaluation against borrowed parameters.
pub struct Eval<'a> {
    params: Vec<&'a DenseTensor>,
    observed: Option<Vec<Vec<usize>>>,
}

impl<'a> Eval<'a> {
    pub fn new(params: Vec<&'a DenseTensor>) -> Self {
        Self {
            params,
            observed: None,
        }
    }

    /// Records the shape of every observed per-layer intermediate.
    pub fn recording(params: Vec<&'a DenseTensor>) -> Self {
        Self {
            params,
            observed: Some(Vec::new()),
        }
    }

    pub fn observed_shapes(&self) -> &[Vec<usize>] {
        self.observed.as_deref().unwrap_or(&[])
    }
}

impl<'a> Contractor for Eval<'a> {
    type Value = Cow<'a, DenseTensor>;

    fn param(&mut self, index: usize) -> Result<Self::Value> {
        self.params
            .get(index)
            .map(|p| Cow::Borrowed(*p))
            .ok_or(ModelError::UnregisteredParameter(index))
    }

    fn constant(&mut self, t: DenseTensor) -> Result<Self::Value> {
        Ok(Cow::Owned(t))
    }

    fn contract(
        &mut self,
        a: &Self::Value,
        b: &Self::Value,
        pairs: &[(usize, usize)],
    ) -> Result<Self::Value> {
        Ok(Cow::Owned(tensor::contract(a, b, pairs)?))
    }

    fn lift(&mut self, a: &Self::Value) -> Result<Self::Value> {
        Ok(Cow::Owned(degree::lift(a).into_inner()))
    }

    fn degree_contract(
        &mut self,
        a: &Self::Value,
        b: &Self::Value,
        pairs: &[(usize, usize)],
        j_max: Option<usize>,
    ) -> Result<Self::Value> {
        Ok(Cow::Owned(degree::degree_contract_dense(a, b, pairs, j_max)?))
    }

    fn observe(&mut self, v: &Self::Value) {
        if let Some(obs) = &mut self.observed {
            obs.push(v.shape().to_vec());
        }
    }
}

/// How a schedule treats the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pass {
    /// `[1, x]` vectors and ordinary contractions; output shape `[n]`.
    Standard,
    /// Diagonal feature matrices and degree-preserving contractions;
    /// output shape `[min(m, cap) + 1, n]`.
    Degrees { j_max: Option<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tr,
    Ttn,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Tr => "tr",
            ModelKind::Ttn => "ttn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Tr => "TR",
            ModelKind::Ttn => "TTN",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tr" | "ring" => Ok(ModelKind::Tr),
            "ttn" | "tree" => Ok(ModelKind::Ttn),
            other => Err(ModelError::InvalidDimensions(format!(
                "unknown model kind {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "j", rename_all = "lowercase")]
pub enum DegreeSetKind {
    Full,
    Cumulative(usize),
    Single(usize),
    Custom,
}

/// The set of interaction degrees a model's output is built from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeSet {
    degrees: Vec<usize>,
    kind: DegreeSetKind,
}

impl DegreeSet {
    pub fn full(m: usize) -> Self {
        Self {
            degrees: (0..=m).collect(),
            kind: DegreeSetKind::Full,
        }
    }

    pub fn cumulative(j: usize, m: usize) -> Result<Self> {
        if j > m {
            return Err(ModelError::DegreeSet(format!("degree {j} exceeds m = {m}")));
        }
        Ok(Self {
            degrees: (0..=j).collect(),
            kind: DegreeSetKind::Cumulative(j),
        })
    }

    pub fn single(j: usize, m: usize) -> Result<Self> {
        if j > m {
            return Err(ModelError::DegreeSet(format!("degree {j} exceeds m = {m}")));
        }
        Ok(Self {
            degrees: vec![j],
            kind: DegreeSetKind::Single(j),
        })
    }

    pub fn custom(mut degrees: Vec<usize>, m: usize) -> Result<Self> {
        degrees.sort_unstable();
        degrees.dedup();
        match degrees.last() {
            None => Err(ModelError::DegreeSet("empty degree set".into())),
            Some(&top) if top > m => Err(ModelError::DegreeSet(format!(
                "degree {top} exceeds m = {m}"
            ))),
            _ if degrees.len() == m + 1 => Ok(Self::full(m)),
            _ => Ok(Self {
                degrees,
                kind: DegreeSetKind::Custom,
            }),
        }
    }

    /// Parses `full`, `cum:J`, `deg:J` or a comma-separated degree list.
    pub fn parse(spec: &str, m: usize) -> Result<Self> {
        let spec = spec.trim();
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| ModelError::DegreeSet(format!("bad degree {s:?} in {spec:?}")))
        };
        if spec.eq_ignore_ascii_case("full") {
            Ok(Self::full(m))
        } else if let Some(j) = spec.strip_prefix("cum:") {
            Self::cumulative(num(j)?, m)
        } else if let Some(j) = spec.strip_prefix("deg:") {
            Self::single(num(j)?, m)
        } else {
            let list = spec.split(',').map(num).collect::<Result<Vec<_>>>()?;
            Self::custom(list, m)
        }
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn kind(&self) -> &DegreeSetKind {
        &self.kind
    }

    pub fn max(&self) -> usize {
        *self.degrees.last().expect("degree sets are nonempty")
    }

    pub fn is_full(&self) -> bool {
        self.kind == DegreeSetKind::Full
    }

    pub fn contains(&self, j: usize) -> bool {
        self.degrees.binary_search(&j).is_ok()
    }

    /// Short tag used in file names: `full`, `cum4`, `deg1`, `set-1-3`.
    pub fn tag(&self) -> String {
        match self.kind {
            DegreeSetKind::Full => "full".into(),
            DegreeSetKind::Cumulative(j) => format!("cum{j}"),
            DegreeSetKind::Single(j) => format!("deg{j}"),
            DegreeSetKind::Custom => {
                let parts: Vec<String> = self.degrees.iter().map(|d| d.to_string()).collect();
                format!("set-{}", parts.join("-"))
            }
        }
    }

    /// Inverse of [`DegreeSet::parse`].
    pub fn spec(&self) -> String {
        match self.kind {
            DegreeSetKind::Full => "full".into(),
            DegreeSetKind::Cumulative(j) => format!("cum:{j}"),
            DegreeSetKind::Single(j) => format!("deg:{j}"),
            DegreeSetKind::Custom => {
                let parts: Vec<String> = self.degrees.iter().map(|d| d.to_string()).collect();
                parts.join(",")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum InitScheme {
    /// Identity-structured cores plus i.i.d. Gaussian noise of the given
    /// standard deviation.
    IdentityPlusNoise { sigma: f64 },
    /// Pure i.i.d. Gaussian cores.
    Gaussian { sigma: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::IdentityPlusNoise { sigma: 1e-2 }
    }
}

impl InitScheme {
    fn tag(self) -> u8 {
        match self {
            InitScheme::IdentityPlusNoise { .. } => 0,
            InitScheme::Gaussian { .. } => 1,
        }
    }

    fn sigma(self) -> f64 {
        match self {
            InitScheme::IdentityPlusNoise { sigma } | InitScheme::Gaussian { sigma } => sigma,
        }
    }

    fn from_tag(tag: u8, sigma: f64) -> Result<Self> {
        match tag {
            0 => Ok(InitScheme::IdentityPlusNoise { sigma }),
            1 => Ok(InitScheme::Gaussian { sigma }),
            t => Err(ModelError::Checkpoint(format!("unknown init scheme tag {t}"))),
        }
    }

    fn structured(self) -> bool {
        matches!(self, InitScheme::IdentityPlusNoise { .. })
    }
}

fn noisy(
    shape: Vec<usize>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
    base: impl Fn(&[usize]) -> f64,
) -> Result<DenseTensor> {
    let normal = Normal::new(0.0, sigma.max(0.0)).map_err(|e| {
        ModelError::InvalidDimensions(format!("bad init sigma {sigma}: {e}"))
    })?;
    let mut t = DenseTensor::zeros(shape.clone())?;
    let strides = tensor::strides_of(&shape);
    let mut idx = vec![0; shape.len()];
    for (flat, v) in t.data_mut().iter_mut().enumerate() {
        let mut rem = flat;
        for (k, s) in strides.iter().enumerate() {
            idx[k] = rem / s;
            rem %= s;
        }
        let noise = if sigma > 0.0 { normal.sample(rng) } else { 0.0 };
        *v = base(&idx) + noise;
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorRingModel {
    feature_cores: Vec<DenseTensor>,
    output_core: DenseTensor,
    bond: usize,
    classes: usize,
}

impl TensorRingModel {
    pub fn from_cores(feature_cores: Vec<DenseTensor>, output_core: DenseTensor) -> Result<Self> {
        let m = feature_cores.len();
        if m < 1 {
            return Err(ModelError::InvalidDimensions("a ring needs feature cores".into()));
        }
        let r = feature_cores[0].shape().first().copied().unwrap_or(0);
        for (i, c) in feature_cores.iter().enumerate() {
            if c.shape() != [r, 2, r] {
                return Err(ModelError::InvalidDimensions(format!(
                    "feature core {i} has shape {:?}, expected [{r}, 2, {r}]",
                    c.shape()
                )));
            }
        }
        let os = output_core.shape();
        if os.len() != 3 || os[0] != r || os[2] != r {
            return Err(ModelError::InvalidDimensions(format!(
                "output core has shape {os:?}, expected [{r}, n, {r}]"
            )));
        }
        let classes = os[1];
        Ok(Self {
            feature_cores,
            output_core,
            bond: r,
            classes,
        })
    }

    pub fn init(m: usize, r: usize, n: usize, seed: u64, scheme: InitScheme) -> Result<Self> {
        if m < 2 || r < 1 || n < 1 {
            return Err(ModelError::InvalidDimensions(format!(
                "need m >= 2, r >= 1, n >= 1 (got m={m}, r={r}, n={n})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = scheme.sigma();
        let structured = scheme.structured();
        let feature_cores = (0..m)
            .map(|_| {
                noisy(vec![r, 2, r], sigma, &mut rng, |i| {
                    if structured && i[1] == 0 && i[0] == i[2] {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let inv_r = 1.0 / r as f64;
        let output_core = noisy(vec![r, n, r], sigma, &mut rng, |i| {
            if structured && i[0] == i[2] {
                inv_r
            } else {
                0.0
            }
        })?;
        Self::from_cores(feature_cores, output_core)
    }

    pub fn features(&self) -> usize {
        self.feature_cores.len()
    }

    pub fn bond(&self) -> usize {
        self.bond
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Position of the output core in the ring (between the last and the
    /// first feature core).
    pub fn output_position(&self) -> usize {
        self.feature_cores.len()
    }

    pub fn feature_cores(&self) -> &[DenseTensor] {
        &self.feature_cores
    }

    pub fn output_core(&self) -> &DenseTensor {
        &self.output_core
    }

    /// Number of trainable elements in the feature cores (`2 m r²`).
    pub fn feature_parameter_count(&self) -> usize {
        self.feature_cores.iter().map(|c| c.len()).sum()
    }

    /// Stage 1 contracts each `[1, x_i]` into its core's physical axis;
    /// stage 2 multiplies the resulting matrices left to right and closes
    /// the ring through the output core.
    pub fn schedule<C: Contractor>(&self, c: &mut C, x: &[f64], pass: Pass) -> Result<C::Value> {
        let m = self.features();
        check_features(x, m)?;
        let out_index = m;
        let mut chain: Option<C::Value> = None;
        for (i, &xi) in x.iter().enumerate() {
            let core = c.param(i)?;
            let step = match pass {
                Pass::Standard => {
                    let h = c.constant(h_feature(xi)?)?;
                    c.contract(&core, &h, &[(1, 0)])?
                }
                Pass::Degrees { j_max } => {
                    let lifted = c.lift(&core)?;
                    let h = c.constant(h_feature_matrix(xi)?.into_inner())?;
                    c.degree_contract(&lifted, &h, &[(2, 1)], j_max)?
                }
            };
            chain = Some(match chain {
                None => step,
                Some(acc) => match pass {
                    Pass::Standard => c.contract(&acc, &step, &[(1, 0)])?,
                    Pass::Degrees { j_max } => c.degree_contract(&acc, &step, &[(2, 1)], j_max)?,
                },
            });
        }
        let acc = chain.expect("m >= 1");
        let out = c.param(out_index)?;
        match pass {
            Pass::Standard => c.contract(&acc, &out, &[(0, 2), (1, 0)]),
            Pass::Degrees { j_max } => {
                let lifted = c.lift(&out)?;
                c.degree_contract(&acc, &lifted, &[(1, 3), (2, 1)], j_max)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeTensorNetworkModel {
    /// `layers[0]` consumes feature pairs; the last layer holds the single
    /// top core carrying the class axis.
    layers: Vec<Vec<DenseTensor>>,
    bond: usize,
    classes: usize,
}

impl TreeTensorNetworkModel {
    pub fn from_layers(layers: Vec<Vec<DenseTensor>>) -> Result<Self> {
        let l = layers.len();
        if l == 0 {
            return Err(ModelError::InvalidDimensions("a tree needs layers".into()));
        }
        let top = layers[l - 1]
            .first()
            .ok_or_else(|| ModelError::InvalidDimensions("empty top layer".into()))?;
        let classes = *top.shape().last().unwrap_or(&0);
        let bond = if l > 1 { layers[0][0].shape()[2] } else { 2 };
        for (k, layer) in layers.iter().enumerate() {
            let expect_count = 1usize << (l - 1 - k);
            if layer.len() != expect_count {
                return Err(ModelError::InvalidDimensions(format!(
                    "layer {k} has {} cores, expected {expect_count}",
                    layer.len()
                )));
            }
            let input = if k == 0 { 2 } else { bond };
            let output = if k == l - 1 { classes } else { bond };
            for (t, c) in layer.iter().enumerate() {
                if c.shape() != [input, input, output] {
                    return Err(ModelError::InvalidDimensions(format!(
                        "core {t} of layer {k} has shape {:?}, expected [{input}, {input}, {output}]",
                        c.shape()
                    )));
                }
            }
        }
        Ok(Self {
            layers,
            bond,
            classes,
        })
    }

    pub fn init(m: usize, r: usize, n: usize, seed: u64, scheme: InitScheme) -> Result<Self> {
        if m < 2 || !m.is_power_of_two() {
            return Err(ModelError::NotPowerOfTwo(m));
        }
        if r < 1 || n < 1 {
            return Err(ModelError::InvalidDimensions(format!(
                "need r >= 1 and n >= 1 (got r={r}, n={n})"
            )));
        }
        let l = m.trailing_zeros() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = scheme.sigma();
        let structured = scheme.structured();
        let mut layers = Vec::with_capacity(l);
        for k in 0..l {
            let count = 1usize << (l - 1 - k);
            let input = if k == 0 { 2 } else { r };
            let top = k == l - 1;
            let output = if top { n } else { r };
            let layer = (0..count)
                .map(|_| {
                    noisy(vec![input, input, output], sigma, &mut rng, |i| {
                        let bias_channel = i[0] == 0 && i[1] == 0;
                        match (structured, k == 0, top) {
                            (false, _, _) => 0.0,
                            // the constant channel feeds every output
                            (true, true, _) => bias_channel as u8 as f64,
                            // normalized inner product of the two children
                            (true, false, true) => (i[0] == i[1]) as u8 as f64 / r as f64,
                            // elementwise product of the two children
                            (true, false, false) => (i[0] == i[1] && i[1] == i[2]) as u8 as f64,
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            layers.push(layer);
        }
        Self::from_layers(layers)
    }

    pub fn features(&self) -> usize {
        2 * self.layers[0].len()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn bond(&self) -> usize {
        self.bond
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[Vec<DenseTensor>] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().flatten().map(|c| c.len()).sum()
    }

    /// Layer by layer: each core absorbs its two children (features at the
    /// bottom) and emits one vector; the top core emits the class vector.
    pub fn schedule<C: Contractor>(&self, c: &mut C, x: &[f64], pass: Pass) -> Result<C::Value> {
        let m = self.features();
        check_features(x, m)?;
        let mut current: Vec<C::Value> = x
            .iter()
            .map(|&xi| match pass {
                Pass::Standard => c.constant(h_feature(xi)?),
                Pass::Degrees { .. } => c.constant(h_feature_matrix(xi)?.into_inner()),
            })
            .collect::<Result<_>>()?;
        let mut index = 0;
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.len());
            for pair in current.chunks(2) {
                let core = c.param(index)?;
                index += 1;
                let v = match pass {
                    Pass::Standard => {
                        let half = c.contract(&core, &pair[0], &[(0, 0)])?;
                        c.contract(&half, &pair[1], &[(0, 0)])?
                    }
                    Pass::Degrees { j_max } => {
                        let lifted = c.lift(&core)?;
                        let half = c.degree_contract(&lifted, &pair[0], &[(1, 1)], j_max)?;
                        c.degree_contract(&half, &pair[1], &[(1, 1)], j_max)?
                    }
                };
                c.observe(&v);
                next.push(v);
            }
            current = next;
        }
        Ok(current.pop().expect("top layer emits one tensor"))
    }
}

fn check_features(x: &[f64], m: usize) -> Result<()> {
    if x.len() != m {
        return Err(ModelError::FeatureCount {
            expected: m,
            actual: x.len(),
        });
    }
    Ok(())
}

/// A trained or freshly initialized regressor of either architecture.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorNetwork {
    Ring(TensorRingModel),
    Tree(TreeTensorNetworkModel),
}

impl From<TensorRingModel> for TensorNetwork {
    fn from(m: TensorRingModel) -> Self {
        TensorNetwork::Ring(m)
    }
}

impl From<TreeTensorNetworkModel> for TensorNetwork {
    fn from(m: TreeTensorNetworkModel) -> Self {
        TensorNetwork::Tree(m)
    }
}

impl TensorNetwork {
    pub fn init(
        kind: ModelKind,
        m: usize,
        r: usize,
        n: usize,
        seed: u64,
        scheme: InitScheme,
    ) -> Result<Self> {
        Ok(match kind {
            ModelKind::Tr => TensorRingModel::init(m, r, n, seed, scheme)?.into(),
            ModelKind::Ttn => TreeTensorNetworkModel::init(m, r, n, seed, scheme)?.into(),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TensorNetwork::Ring(_) => ModelKind::Tr,
            TensorNetwork::Tree(_) => ModelKind::Ttn,
        }
    }

    pub fn features(&self) -> usize {
        match self {
            TensorNetwork::Ring(t) => t.features(),
            TensorNetwork::Tree(t) => t.features(),
        }
    }

    pub fn bond(&self) -> usize {
        match self {
            TensorNetwork::Ring(t) => t.bond(),
            TensorNetwork::Tree(t) => t.bond(),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            TensorNetwork::Ring(t) => t.classes(),
            TensorNetwork::Tree(t) => t.classes(),
        }
    }

    /// Layer count of a tree (`m = 2^l`); zero for rings.
    pub fn layer_count(&self) -> usize {
        match self {
            TensorNetwork::Ring(_) => 0,
            TensorNetwork::Tree(t) => t.layer_count(),
        }
    }

    /// Parameters in the fixed traversal order used by schedules, gradients
    /// and checkpoints: ring feature cores then the output core; tree
    /// cores bottom layer first, left to right.
    pub fn parameters(&self) -> Vec<&DenseTensor> {
        match self {
            TensorNetwork::Ring(t) => t
                .feature_cores
                .iter()
                .chain(std::iter::once(&t.output_core))
                .collect(),
            TensorNetwork::Tree(t) => t.layers.iter().flatten().collect(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut DenseTensor> {
        match self {
            TensorNetwork::Ring(t) => t
                .feature_cores
                .iter_mut()
                .chain(std::iter::once(&mut t.output_core))
                .collect(),
            TensorNetwork::Tree(t) => t.layers.iter_mut().flatten().collect(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn schedule<C: Contractor>(&self, c: &mut C, x: &[f64], pass: Pass) -> Result<C::Value> {
        match self {
            TensorNetwork::Ring(t) => t.schedule(c, x, pass),
            TensorNetwork::Tree(t) => t.schedule(c, x, pass),
        }
    }

    /// Standard forward pass: the class vector `f(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut eval = Eval::new(self.parameters());
        Ok(self.schedule(&mut eval, x, Pass::Standard)?.into_owned().into_data())
    }

    /// Degree-resolved output: row `j` (of `j_max + 1`) is the degree-`j`
    /// contribution to `f(x)`.
    pub fn interaction_decompose(&self, x: &[f64], j_max: usize) -> Result<DenseTensor> {
        let m = self.features();
        if j_max > m {
            return Err(ModelError::DegreeCapTooLarge { cap: j_max, m });
        }
        let mut eval = Eval::new(self.parameters());
        Ok(self
            .schedule(&mut eval, x, Pass::Degrees { j_max: Some(j_max) })?
            .into_owned())
    }

    /// Output restricted to the degrees in `dset`.
    pub fn d_degree_forward(&self, x: &[f64], dset: &DegreeSet) -> Result<Vec<f64>> {
        let m = self.features();
        if dset.max() > m {
            return Err(ModelError::DegreeCapTooLarge { cap: dset.max(), m });
        }
        let rows = self.interaction_decompose(x, dset.max())?;
        let n = self.classes();
        let mut out = vec![0.0; n];
        for &j in dset.degrees() {
            for (o, v) in out.iter_mut().zip(&rows.data()[j * n..(j + 1) * n]) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W, meta: &CheckpointMeta) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&[match self.kind() {
            ModelKind::Tr => 0u8,
            ModelKind::Ttn => 1u8,
        }])?;
        for v in [
            self.features(),
            self.bond(),
            self.classes(),
            self.layer_count(),
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&meta.seed.to_le_bytes())?;
        w.write_all(&[meta.init.tag()])?;
        w.write_all(&meta.init.sigma().to_le_bytes())?;
        for p in self.parameters() {
            p.write_fragment(w)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(Self, CheckpointMeta)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        r.read_exact(&mut b1)?;
        let kind = match b1[0] {
            0 => ModelKind::Tr,
            1 => ModelKind::Ttn,
            k => return Err(ModelError::Checkpoint(format!("unknown model kind {k}"))),
        };
        let mut dims = [0usize; 4];
        for d in &mut dims {
            r.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        let [m, bond, n, l] = dims;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b1)?;
        r.read_exact(&mut b8)?;
        let init = InitScheme::from_tag(b1[0], f64::from_le_bytes(b8))?;
        let mut read = || DenseTensor::read_fragment(r).map_err(ModelError::from);
        let model: TensorNetwork = match kind {
            ModelKind::Tr => {
                let cores = (0..m).map(|_| read()).collect::<Result<Vec<_>>>()?;
                TensorRingModel::from_cores(cores, read()?)?.into()
            }
            ModelKind::Ttn => {
                if l == 0 || l > 30 || m != 1 << l {
                    return Err(ModelError::Checkpoint(format!(
                        "inconsistent tree header m={m}, l={l}"
                    )));
                }
                let layers = (0..l)
                    .map(|k| (0..1usize << (l - 1 - k)).map(|_| read()).collect())
                    .collect::<Result<Vec<_>>>()?;
                TreeTensorNetworkModel::from_layers(layers)?.into()
            }
        };
        if model.features() != m || model.classes() != n || model.bond() != bond {
            return Err(ModelError::Checkpoint(
                "header dimensions disagree with stored cores".into(),
            ));
        }
        Ok((model, CheckpointMeta { seed, init }))
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TNID";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub init: InitScheme,
}
