//! Network architecture and parameter storage.
//!
//! Fixed topology: five 3x3 conv blocks (each conv + batch norm + ReLU,
//! blocks 2 and 3 followed by 2x2 max pooling, the last conv unpadded)
//! and a final fully connected layer producing one scalar. The full-width
//! channel progression is 64/128/256/512/1024; a width divisor shrinks
//! every block uniformly for fast tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::STACK_CHANNELS;

/// Full-width output channels of the five conv blocks.
pub const FULL_CHANNELS: [usize; 5] = [64, 128, 256, 512, 1024];
/// Spatial side of each block's input: 13, 13, 6, 3, 3.
pub const BLOCK_IN_SIDE: [usize; 5] = [13, 13, 6, 3, 3];
/// Spatial side of each block's output (after optional pooling).
pub const BLOCK_OUT_SIDE: [usize; 5] = [13, 6, 3, 3, 1];
/// Which blocks are followed by 2x2 max pooling.
pub const BLOCK_POOLED: [bool; 5] = [false, true, true, false, false];
/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnnArchitecture {
    divisor: usize,
}

impl CnnArchitecture {
    /// The full-width network.
    pub fn full() -> Self {
        CnnArchitecture { divisor: 1 }
    }

    /// Width-reduced variant: every channel count divided by `divisor`.
    pub fn reduced(divisor: usize) -> Result<Self> {
        if divisor == 0 || FULL_CHANNELS[0] % divisor != 0 {
            return Err(Error::invalid(format!(
                "width divisor {divisor} must divide {}",
                FULL_CHANNELS[0]
            )));
        }
        Ok(CnnArchitecture { divisor })
    }

    pub fn divisor(&self) -> usize {
        self.divisor
    }

    /// Output channels of each conv block.
    pub fn channels(&self) -> [usize; 5] {
        let mut ch = FULL_CHANNELS;
        for c in &mut ch {
            *c /= self.divisor;
        }
        ch
    }

    /// Input channels of each conv block.
    pub fn in_channels(&self) -> [usize; 5] {
        let ch = self.channels();
        [STACK_CHANNELS, ch[0], ch[1], ch[2], ch[3]]
    }

    /// Length of the fully connected input (the last block is 1x1).
    pub fn fc_inputs(&self) -> usize {
        self.channels()[4]
    }
}

/// One conv + batch-norm block's parameters. Stored as `f32` (the on-disk
/// precision); all arithmetic widens to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    /// Kernel, laid out `[out][in][ky][kx]` with 3x3 taps.
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
    pub bn_scale: Vec<f32>,
    pub bn_shift: Vec<f32>,
    pub bn_mean: Vec<f32>,
    pub bn_var: Vec<f32>,
}

impl ConvBlock {
    fn zeros(in_ch: usize, out_ch: usize) -> Self {
        ConvBlock {
            kernel: vec![0.0; out_ch * in_ch * 9],
            bias: vec![0.0; out_ch],
            bn_scale: vec![1.0; out_ch],
            bn_shift: vec![0.0; out_ch],
            bn_mean: vec![0.0; out_ch],
            bn_var: vec![1.0; out_ch],
        }
    }
}

/// All learnable parameters plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsBundle {
    pub arch: CnnArchitecture,
    /// Seed used at initialization, kept as provenance metadata.
    pub init_seed: u64,
    pub conv: Vec<ConvBlock>,
    pub fc_weight: Vec<f32>,
    pub fc_bias: f32,
}

impl WeightsBundle {
    /// All-zero parameters (batch-norm scale included), for tests that
    /// need a fully deterministic degenerate network.
    pub fn zeros(arch: CnnArchitecture) -> Self {
        let in_ch = arch.in_channels();
        let out_ch = arch.channels();
        let mut conv = Vec::with_capacity(5);
        for b in 0..5 {
            let mut block = ConvBlock::zeros(in_ch[b], out_ch[b]);
            block.bn_scale.iter_mut().for_each(|v| *v = 0.0);
            conv.push(block);
        }
        WeightsBundle {
            arch,
            init_seed: 0,
            conv,
            fc_weight: vec![0.0; arch.fc_inputs()],
            fc_bias: 0.0,
        }
    }

    /// He-style initialization: kernels from N(0, 2/fan_in), biases zero,
    /// batch-norm scale 1 / shift 0, running mean 0 / variance 1.
    pub fn init(arch: CnnArchitecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_ch = arch.in_channels();
        let out_ch = arch.channels();
        let mut conv = Vec::with_capacity(5);
        for b in 0..5 {
            let mut block = ConvBlock::zeros(in_ch[b], out_ch[b]);
            let fan_in = in_ch[b] * 9;
            let normal = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt()).unwrap();
            for k in &mut block.kernel {
                *k = normal.sample(&mut rng) as f32;
            }
            conv.push(block);
        }
        let fc_in = arch.fc_inputs();
        let normal = Normal::new(0.0f64, (1.0 / fc_in as f64).sqrt()).unwrap();
        let fc_weight = (0..fc_in).map(|_| normal.sample(&mut rng) as f32).collect();
        let _ = rng.gen::<u64>();
        WeightsBundle {
            arch,
            init_seed: seed,
            conv,
            fc_weight,
            fc_bias: 0.0,
        }
    }

    /// Check tensor shapes against the architecture and the positivity of
    /// running variances.
    pub fn validate(&self) -> Result<()> {
        if self.conv.len() != 5 {
            return Err(Error::Format(format!(
                "expected 5 conv blocks, found {}",
                self.conv.len()
            )));
        }
        let in_ch = self.arch.in_channels();
        let out_ch = self.arch.channels();
        for (b, block) in self.conv.iter().enumerate() {
            let name = format!("conv{}", b + 1);
            if block.kernel.len() != out_ch[b] * in_ch[b] * 9 {
                return Err(Error::Format(format!("{name}.kernel has wrong shape")));
            }
            for (field, v) in [
                ("bias", &block.bias),
                ("bn_scale", &block.bn_scale),
                ("bn_shift", &block.bn_shift),
                ("bn_mean", &block.bn_mean),
                ("bn_var", &block.bn_var),
            ] {
                if v.len() != out_ch[b] {
                    return Err(Error::Format(format!("{name}.{field} has wrong shape")));
                }
            }
            if block.bn_var.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Format(format!(
                    "{name}.bn_var must be strictly positive"
                )));
            }
        }
        if self.fc_weight.len() != self.arch.fc_inputs() {
            return Err(Error::Format("fc.weight has wrong shape".into()));
        }
        Ok(())
    }
}

/// Gradient (or momentum-velocity) buffers shaped like the trainable part
/// of a [`WeightsBundle`], in `f64`.
#[derive(Debug, Clone)]
pub struct GradBuffers {
    pub kernel: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
    pub bn_scale: Vec<Vec<f64>>,
    pub bn_shift: Vec<Vec<f64>>,
    pub fc_weight: Vec<f64>,
    pub fc_bias: f64,
}

impl GradBuffers {
    pub fn zeros(arch: CnnArchitecture) -> Self {
        let in_ch = arch.in_channels();
        let out_ch = arch.channels();
        GradBuffers {
            kernel: (0..5).map(|b| vec![0.0; out_ch[b] * in_ch[b] * 9]).collect(),
            bias: (0..5).map(|b| vec![0.0; out_ch[b]]).collect(),
            bn_scale: (0..5).map(|b| vec![0.0; out_ch[b]]).collect(),
            bn_shift: (0..5).map(|b| vec![0.0; out_ch[b]]).collect(),
            fc_weight: vec![0.0; arch.fc_inputs()],
            fc_bias: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &GradBuffers) {
        for b in 0..5 {
            for (a, o) in self.kernel[b].iter_mut().zip(&other.kernel[b]) {
                *a += o;
            }
            for (a, o) in self.bias[b].iter_mut().zip(&other.bias[b]) {
                *a += o;
            }
            for (a, o) in self.bn_scale[b].iter_mut().zip(&other.bn_scale[b]) {
                *a += o;
            }
            for (a, o) in self.bn_shift[b].iter_mut().zip(&other.bn_shift[b]) {
                *a += o;
            }
        }
        for (a, o) in self.fc_weight.iter_mut().zip(&other.fc_weight) {
            *a += o;
        }
        self.fc_bias += other.fc_bias;
    }

    /// Flatten view for generic parameter walks (tests, SGD).
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for b in 0..5 {
            self.kernel[b].iter_mut().for_each(&mut f);
            self.bias[b].iter_mut().for_each(&mut f);
            self.bn_scale[b].iter_mut().for_each(&mut f);
            self.bn_shift[b].iter_mut().for_each(&mut f);
        }
        self.fc_weight.iter_mut().for_each(&mut f);
        f(&mut self.fc_bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_width_divides_all_channels() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        assert_eq!(arch.channels(), [8, 16, 32, 64, 128]);
        assert_eq!(arch.in_channels(), [4, 8, 16, 32, 64]);
        assert_eq!(arch.fc_inputs(), 128);
        assert!(CnnArchitecture::reduced(0).is_err());
        assert!(CnnArchitecture::reduced(3).is_err());
    }

    #[test]
    fn init_is_deterministic_and_valid() {
        let arch = CnnArchitecture::reduced(8).unwrap();
        let a = WeightsBundle::init(arch, 7);
        let b = WeightsBundle::init(arch, 7);
        let c = WeightsBundle::init(arch, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
    }
}
