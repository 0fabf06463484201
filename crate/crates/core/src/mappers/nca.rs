use super::{check_aligned, check_len, MapperError, Result, Side};
use crate::linalg::DenseMatrix;
use crate::nn::{train, FeedForwardNet, Samples, TrainConfig, TrainOutcome};
use crate::rng::SeededRng;

const SHUFFLE_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Neural concept approximation: a feed-forward net regresses target-language
/// embeddings from source-language ones. Source vectors are pushed through
/// `net_xy`; target vectors are used as they are.
#[derive(Debug, Clone, PartialEq)]
pub struct NcaModel {
    net_xy: FeedForwardNet,
    net_yx: FeedForwardNet,
}

/// Trains `x → y` and `y → x` nets in parallel. Both share `cfg`; the reverse
/// net uses `cfg.seed + 1`.
pub fn fit_nca(
    x_train: &DenseMatrix,
    y_train: &DenseMatrix,
    x_val: &DenseMatrix,
    y_val: &DenseMatrix,
    cfg: &TrainConfig,
) -> Result<NcaModel> {
    check_aligned(x_train, y_train)?;
    check_aligned(x_val, y_val)?;
    if x_val.cols() != x_train.cols() {
        return Err(MapperError::Misaligned(format!(
            "validation width {} differs from training width {}",
            x_val.cols(),
            x_train.cols()
        )));
    }
    let reverse_cfg = TrainConfig {
        seed: cfg.seed.wrapping_add(1),
        ..cfg.clone()
    };
    let (xy, yx) = rayon::join(
        || fit_direction(x_train, y_train, x_val, y_val, cfg),
        || fit_direction(y_train, x_train, y_val, x_val, &reverse_cfg),
    );
    Ok(NcaModel {
        net_xy: xy?.net,
        net_yx: yx?.net,
    })
}

/// Fits one direction and returns the full training history.
pub fn fit_direction(
    inputs: &DenseMatrix,
    targets: &DenseMatrix,
    val_inputs: &DenseMatrix,
    val_targets: &DenseMatrix,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut init_rng = SeededRng::new(cfg.seed);
    let net = FeedForwardNet::glorot(inputs.cols(), cfg.hidden_units, targets.cols(), &mut init_rng);
    let shuffle_cfg = TrainConfig {
        seed: cfg.seed ^ SHUFFLE_SEED_MIX,
        ..cfg.clone()
    };
    Ok(train(
        net,
        Samples::new(inputs, targets)?,
        Samples::new(val_inputs, val_targets)?,
        &shuffle_cfg,
    )?)
}

impl NcaModel {
    pub fn from_nets(net_xy: FeedForwardNet, net_yx: FeedForwardNet) -> Result<Self> {
        let k = net_xy.input_dim();
        if net_xy.output_dim() != k || net_yx.input_dim() != k || net_yx.output_dim() != k {
            return Err(MapperError::Misaligned(format!(
                "nets map {} -> {} and {} -> {}",
                net_xy.input_dim(),
                net_xy.output_dim(),
                net_yx.input_dim(),
                net_yx.output_dim()
            )));
        }
        Ok(Self { net_xy, net_yx })
    }

    pub fn input_dim(&self) -> usize {
        self.net_xy.input_dim()
    }

    pub fn net_xy(&self) -> &FeedForwardNet {
        &self.net_xy
    }

    pub fn net_yx(&self) -> &FeedForwardNet {
        &self.net_yx
    }

    /// The same model with the roles of the two languages swapped.
    pub fn reversed(&self) -> Self {
        Self {
            net_xy: self.net_yx.clone(),
            net_yx: self.net_xy.clone(),
        }
    }

    pub fn encode(&self, v: &[f64], side: Side) -> Result<Vec<f64>> {
        check_len(v, self.input_dim())?;
        match side {
            Side::Source => Ok(self.net_xy.forward(v)?),
            Side::Target => Ok(v.to_vec()),
        }
    }

    pub fn encode_batch(&self, rows: &DenseMatrix, side: Side) -> Result<DenseMatrix> {
        match side {
            Side::Source => Ok(self.net_xy.forward_batch(rows)?),
            Side::Target => Ok(rows.clone()),
        }
    }
}
