//! A small fully convolutional 3D segmenter with hand-written backward pass.
//!
//! Architecture: `3x3x3 conv (1 -> C) + ReLU`, `3x3x3 conv (C -> C) + ReLU`,
//! `1x1x1 conv (C -> K)` producing per-class logits. Convolutions use zero
//! padding so the output lattice equals the input lattice.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ClassVolume, LabelVolume, ScalarVolume, Shape3};

pub const DEFAULT_HIDDEN: usize = 8;

/// Parameter tensors in checkpoint and optimizer order.
pub const TENSOR_NAMES: [&str; 6] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "head.weight",
    "head.bias",
];

const CHECKPOINT_MAGIC: &[u8; 8] = b"BMAPNET1";

/// Cubic convolution with `size` in {1, 3}; weights laid out
/// `(out, in, kz, ky, kx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub size: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, size: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            size,
            weight: vec![0.0; out_channels * in_channels * size * size * size],
            bias: vec![0.0; out_channels],
        }
    }

    /// Glorot-uniform weights, zero biases.
    fn init(in_channels: usize, out_channels: usize, size: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, size);
        let taps = (size * size * size) as f64;
        let limit = libm::sqrt(6.0 / ((in_channels as f64 + out_channels as f64) * taps));
        for w in &mut layer.weight {
            *w = rng.random_range(-limit..limit);
        }
        layer
    }

    fn weight_dims(&self) -> [usize; 5] {
        [
            self.out_channels,
            self.in_channels,
            self.size,
            self.size,
            self.size,
        ]
    }

    fn taps(&self) -> usize {
        self.size * self.size * self.size
    }

    fn forward(&self, shape: &Shape3, input: &[f64], out: &mut [f64]) {
        let n = shape.len();
        for (oc, b) in self.bias.iter().enumerate() {
            out[oc * n..(oc + 1) * n].fill(*b);
        }
        for oc in 0..self.out_channels {
            for ic in 0..self.in_channels {
                let src = &input[ic * n..(ic + 1) * n];
                let dst = &mut out[oc * n..(oc + 1) * n];
                let wbase = (oc * self.in_channels + ic) * self.taps();
                for_each_tap(shape, self.size, |tap, span| {
                    let w = self.weight[wbase + tap];
                    if w == 0.0 {
                        return;
                    }
                    for (o, i) in dst[span.dst..span.dst + span.len]
                        .iter_mut()
                        .zip(&src[span.src..span.src + span.len])
                    {
                        *o += w * i;
                    }
                });
            }
        }
    }

    /// Accumulates parameter gradients into `grad` and, when requested, the
    /// input gradient into `grad_input`.
    fn backward(
        &self,
        shape: &Shape3,
        input: &[f64],
        grad_out: &[f64],
        grad: &mut ConvLayer,
        mut grad_input: Option<&mut [f64]>,
    ) {
        let n = shape.len();
        for oc in 0..self.out_channels {
            let g = &grad_out[oc * n..(oc + 1) * n];
            grad.bias[oc] += g.iter().sum::<f64>();
            for ic in 0..self.in_channels {
                let src = &input[ic * n..(ic + 1) * n];
                let wbase = (oc * self.in_channels + ic) * self.taps();
                let mut gin = grad_input
                    .as_deref_mut()
                    .map(|gi| &mut gi[ic * n..(ic + 1) * n]);
                for_each_tap(shape, self.size, |tap, span| {
                    let go = &g[span.dst..span.dst + span.len];
                    let mut dot = 0.0;
                    for (a, b) in go.iter().zip(&src[span.src..span.src + span.len]) {
                        dot += a * b;
                    }
                    grad.weight[wbase + tap] += dot;
                    if let Some(gi) = gin.as_deref_mut() {
                        let w = self.weight[wbase + tap];
                        for (d, a) in gi[span.src..span.src + span.len].iter_mut().zip(go) {
                            *d += w * a;
                        }
                    }
                });
            }
        }
    }
}

/// Contiguous x-run shared by an output row and the shifted input row.
struct Span {
    dst: usize,
    src: usize,
    len: usize,
}

/// Visits, for every kernel tap, each x-run where output voxel `v` reads
/// input voxel `v + offset` inside the volume.
fn for_each_tap(shape: &Shape3, size: usize, mut f: impl FnMut(usize, Span)) {
    let r = (size / 2) as isize;
    let (nx, ny, nz) = (shape.nx as isize, shape.ny as isize, shape.nz as isize);
    let mut tap = 0;
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                let x0 = (-dx).max(0);
                let x1 = (nx - dx).min(nx);
                if x1 > x0 {
                    for z in (-dz).max(0)..(nz - dz).min(nz) {
                        for y in (-dy).max(0)..(ny - dy).min(ny) {
                            let dst = (x0 + nx * (y + ny * z)) as usize;
                            let src = (x0 + dx + nx * (y + dy + ny * (z + dz))) as usize;
                            f(
                                tap,
                                Span {
                                    dst,
                                    src,
                                    len: (x1 - x0) as usize,
                                },
                            );
                        }
                    }
                }
                tap += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegNet {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub head: ConvLayer,
    pub seed: u64,
}

/// Activations kept by [`SegNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    shape: Shape3,
    hidden: usize,
    num_classes: usize,
    input: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    act2: Vec<f64>,
}

/// One gradient block per parameter tensor, in [`TENSOR_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub blocks: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &SegNet) -> Self {
        Self {
            blocks: net.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    fn from_layers(layers: [ConvLayer; 3]) -> Self {
        let [a, b, c] = layers;
        Self {
            blocks: vec![a.weight, a.bias, b.weight, b.bias, c.weight, c.bias],
        }
    }

    /// `self += other * scale`.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

impl SegNet {
    pub fn new(hidden: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            conv1: ConvLayer::init(1, hidden, 3, &mut rng),
            conv2: ConvLayer::init(hidden, hidden, 3, &mut rng),
            head: ConvLayer::init(hidden, num_classes, 1, &mut rng),
            seed,
        }
    }

    pub fn zeros(hidden: usize, num_classes: usize) -> Self {
        Self {
            conv1: ConvLayer::zeros(1, hidden, 3),
            conv2: ConvLayer::zeros(hidden, hidden, 3),
            head: ConvLayer::zeros(hidden, num_classes, 1),
            seed: 0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.conv1.out_channels
    }

    pub fn num_classes(&self) -> usize {
        self.head.out_channels
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.head.weight,
            &self.head.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn forward(&self, image: &ScalarVolume) -> (ClassVolume, Tape) {
        let shape = *image.shape();
        let n = shape.len();
        let c = self.hidden();
        let input = image.data().to_vec();
        let mut pre1 = vec![0.0; c * n];
        self.conv1.forward(&shape, &input, &mut pre1);
        let act1 = relu(&pre1);
        let mut pre2 = vec![0.0; c * n];
        self.conv2.forward(&shape, &act1, &mut pre2);
        let act2 = relu(&pre2);
        let mut logits = vec![0.0; self.num_classes() * n];
        self.head.forward(&shape, &act2, &mut logits);
        // unchecked: training reports divergence through the loss value
        let logits = ClassVolume::from_vec_unchecked(shape, self.num_classes(), logits);
        let tape = Tape {
            shape,
            hidden: c,
            num_classes: self.num_classes(),
            input,
            pre1,
            act1,
            pre2,
            act2,
        };
        (logits, tape)
    }

    /// Hard labels by per-voxel argmax of the logits.
    pub fn predict(&self, image: &ScalarVolume) -> LabelVolume {
        self.forward(image).0.argmax()
    }

    pub fn backward(&self, tape: &Tape, loss_grad: &ClassVolume) -> Result<GradientSet> {
        if tape.hidden != self.hidden()
            || tape.num_classes != self.num_classes()
            || loss_grad.num_classes() != self.num_classes()
            || !loss_grad.shape().same_lattice(&tape.shape)
        {
            return Err(Error::TapeMismatch);
        }
        let shape = tape.shape;
        let n = shape.len();
        let c = self.hidden();
        let mut g_head = ConvLayer::zeros(c, self.num_classes(), 1);
        let mut g2 = ConvLayer::zeros(c, c, 3);
        let mut g1 = ConvLayer::zeros(1, c, 3);

        let mut d_act2 = vec![0.0; c * n];
        self.head.backward(
            &shape,
            &tape.act2,
            loss_grad.data(),
            &mut g_head,
            Some(&mut d_act2),
        );
        relu_backward(&tape.pre2, &mut d_act2);
        let mut d_act1 = vec![0.0; c * n];
        self.conv2
            .backward(&shape, &tape.act1, &d_act2, &mut g2, Some(&mut d_act1));
        relu_backward(&tape.pre1, &mut d_act1);
        self.conv1
            .backward(&shape, &tape.input, &d_act1, &mut g1, None);

        Ok(GradientSet::from_layers([g1, g2, g_head]))
    }

    /// Serialize to the `BMAPNET1` checkpoint layout: magic, then per tensor
    /// its dimensions as little-endian `u64` followed by little-endian `f64`
    /// values.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * (self.parameter_count() + 24));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for layer in [&self.conv1, &self.conv2, &self.head] {
            for d in layer.weight_dims() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &layer.weight {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&(layer.out_channels as u64).to_le_bytes());
            for v in &layer.bias {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = ByteReader { bytes, pos: 0 };
        if reader.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".to_string()));
        }
        let mut layers = Vec::with_capacity(3);
        for (i, expected_size) in [3usize, 3, 1].into_iter().enumerate() {
            let dims: Vec<usize> = (0..5).map(|_| reader.dim()).collect::<Result<_>>()?;
            let [out_c, in_c, kz, ky, kx] = [dims[0], dims[1], dims[2], dims[3], dims[4]];
            if kz != expected_size || ky != expected_size || kx != expected_size {
                return Err(Error::Checkpoint(alloc::format!(
                    "{}: unexpected kernel {kz}x{ky}x{kx}",
                    TENSOR_NAMES[2 * i]
                )));
            }
            let mut layer = ConvLayer::zeros(in_c, out_c, expected_size);
            for w in &mut layer.weight {
                *w = reader.value()?;
            }
            if reader.dim()? != out_c {
                return Err(Error::Checkpoint(alloc::format!(
                    "{}: length disagrees with weight",
                    TENSOR_NAMES[2 * i + 1]
                )));
            }
            for b in &mut layer.bias {
                *b = reader.value()?;
            }
            layers.push(layer);
        }
        if reader.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".to_string()));
        }
        let head = layers.pop().unwrap();
        let conv2 = layers.pop().unwrap();
        let conv1 = layers.pop().unwrap();
        let hidden = conv1.out_channels;
        if conv1.in_channels != 1
            || conv2.in_channels != hidden
            || conv2.out_channels != hidden
            || head.in_channels != hidden
            || head.out_channels < 2
        {
            return Err(Error::Checkpoint("inconsistent channel counts".to_string()));
        }
        Ok(Self {
            conv1,
            conv2,
            head,
            seed: 0,
        })
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(Error::Checkpoint(truncated(self.bytes.len(), end)));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn dim(&mut self) -> Result<usize> {
        let d = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if d == 0 || d > (1 << 20) {
            return Err(Error::Checkpoint(alloc::format!(
                "implausible dimension {d}"
            )));
        }
        Ok(d as usize)
    }

    fn value(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".to_string()));
        }
        Ok(v)
    }
}

fn truncated(actual: usize, needed: usize) -> String {
    alloc::format!("truncated: {actual} bytes, needed at least {needed}")
}

fn relu(pre: &[f64]) -> Vec<f64> {
    pre.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Zeroes gradient where the pre-activation is not strictly positive.
fn relu_backward(pre: &[f64], grad: &mut [f64]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}
