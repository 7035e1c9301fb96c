use crate::params::param_struct;
use crate::rng::{self, SeededRng};
use crate::tensor::Matrix;

/// Default lower bound applied to vertex degrees.
pub const DEFAULT_DEGREE_EPSILON: f64 = 1e-4;

/// Hidden width of the channel-attention MLP for `channels` inputs
/// (reduction ratio 4, at least one unit).
pub fn hidden_width(channels: usize) -> usize {
    (channels / 4).max(1)
}

param_struct! {
    /// Trainable weights of one graph convolution layer.
    pub struct BiGConvParams {
        /// `C × C` weights of the first embedding ψ.
        w_psi,
        b_psi,
        /// `C × C` weights of the second embedding (φ, or ζ with a boundary).
        w_second,
        b_second,
        mlp_w1,
        mlp_b1,
        mlp_w2,
        mlp_b2,
        /// 1×1 convolution on the channel-pooled map (spatial attention).
        conv_s_weight,
        conv_s_bias,
        /// 1×1 convolutions producing the boundary-aware factors `u`, `v`.
        conv_u_weight,
        conv_u_bias,
        conv_v_weight,
        conv_v_bias,
        /// `C × C` output weights.
        w_g,
    }
    plain {
        degree_epsilon: f64,
    }
}

impl BiGConvParams {
    /// Random initialisation for `channels` channels.
    pub fn init(channels: usize, rng: &mut SeededRng) -> Self {
        let c = channels;
        let h = hidden_width(c);
        Self {
            w_psi: rng::fan_in(rng, c, c),
            b_psi: Matrix::zeros(1, c),
            w_second: rng::fan_in(rng, c, c),
            b_second: Matrix::zeros(1, c),
            mlp_w1: rng::fan_in(rng, c, h),
            mlp_b1: Matrix::zeros(1, h),
            mlp_w2: rng::fan_in(rng, h, c),
            mlp_b2: Matrix::zeros(1, c),
            conv_s_weight: Matrix::scalar(1.0),
            conv_s_bias: Matrix::scalar(0.0),
            conv_u_weight: Matrix::scalar(1.0),
            conv_u_bias: Matrix::scalar(0.0),
            conv_v_weight: Matrix::scalar(1.0),
            conv_v_bias: Matrix::scalar(0.0),
            w_g: rng::normal(rng, c, c, 0.1 / (c as f64).sqrt()),
            degree_epsilon: DEFAULT_DEGREE_EPSILON,
        }
    }

    /// All weights and biases zero.
    pub fn zeros(channels: usize) -> Self {
        let c = channels;
        let h = hidden_width(c);
        Self {
            w_psi: Matrix::zeros(c, c),
            b_psi: Matrix::zeros(1, c),
            w_second: Matrix::zeros(c, c),
            b_second: Matrix::zeros(1, c),
            mlp_w1: Matrix::zeros(c, h),
            mlp_b1: Matrix::zeros(1, h),
            mlp_w2: Matrix::zeros(h, c),
            mlp_b2: Matrix::zeros(1, c),
            conv_s_weight: Matrix::scalar(0.0),
            conv_s_bias: Matrix::scalar(0.0),
            conv_u_weight: Matrix::scalar(0.0),
            conv_u_bias: Matrix::scalar(0.0),
            conv_v_weight: Matrix::scalar(0.0),
            conv_v_bias: Matrix::scalar(0.0),
            w_g: Matrix::zeros(c, c),
            degree_epsilon: DEFAULT_DEGREE_EPSILON,
        }
    }

    /// Random values for every entry, biases and conv scalars included.
    /// Used by tests and oracles.
    pub fn random(channels: usize, rng: &mut SeededRng) -> Self {
        let c = channels;
        let h = hidden_width(c);
        let mut u = |r, cc| rng::uniform(rng, r, cc, -1.0, 1.0);
        Self {
            w_psi: u(c, c),
            b_psi: u(1, c),
            w_second: u(c, c),
            b_second: u(1, c),
            mlp_w1: u(c, h),
            mlp_b1: u(1, h),
            mlp_w2: u(h, c),
            mlp_b2: u(1, c),
            conv_s_weight: u(1, 1),
            conv_s_bias: u(1, 1),
            conv_u_weight: u(1, 1),
            conv_u_bias: u(1, 1),
            conv_v_weight: u(1, 1),
            conv_v_bias: u(1, 1),
            w_g: u(c, c),
            degree_epsilon: DEFAULT_DEGREE_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.w_psi.rows()
    }

    pub fn is_finite(&self) -> bool {
        use crate::params::Parameters;
        let mut ok = self.degree_epsilon > 0.0;
        self.visit("", &mut |_, m| ok &= m.is_finite());
        ok
    }
}
