//! Structured unit pruning and layer reinitialization.
//!
//! A "unit" is one conv output filter or one dense output neuron. Pruning
//! zeroes the incoming weights and bias of the selected units; L1 pruning
//! ranks units globally by the L1 norm of their incoming weights, smallest
//! first.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Layer;
use super::network::Network;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneStrategy {
    L1Ascending,
    Random,
}

impl std::str::FromStr for PruneStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "l1_ascending" => Ok(Self::L1Ascending),
            "random" => Ok(Self::Random),
            other => Err(Error::Mode(other.to_string())),
        }
    }
}

/// Which layers a reinitialization targets.
#[derive(Debug, Clone)]
pub enum LayerSelector {
    LastDense,
    AllDense,
    Named(Vec<String>),
}

/// Zero out a fraction of units, smallest-L1 first or at random. Returns a
/// pruned copy; the input network is untouched. Ratio 0 is an exact copy.
pub fn prune<F: Scalar>(
    net: &Network<F>,
    ratio: f64,
    strategy: PruneStrategy,
    seed: u64,
) -> Result<Network<F>> {
    if !(0.0..=1.0).contains(&ratio) || ratio.is_nan() {
        return Err(Error::InvalidRatio(ratio));
    }
    let mut out = net.clone();
    // (layer index, unit index, L1 norm of incoming weights)
    let mut units: Vec<(usize, usize, f64)> = Vec::new();
    for (li, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Dense(d) => {
                for o in 0..d.out_features {
                    let norm: f64 = d.w[o * d.in_features..(o + 1) * d.in_features]
                        .iter()
                        .map(|w| w.into_f64().abs())
                        .sum();
                    units.push((li, o, norm));
                }
            }
            Layer::Conv(c) => {
                let per = c.in_c * c.kh * c.kw;
                for o in 0..c.out_c {
                    let norm: f64 = c.w[o * per..(o + 1) * per]
                        .iter()
                        .map(|w| w.into_f64().abs())
                        .sum();
                    units.push((li, o, norm));
                }
            }
            _ => {}
        }
    }
    let count = (ratio * units.len() as f64).round() as usize;
    let victims: Vec<(usize, usize)> = match strategy {
        PruneStrategy::L1Ascending => {
            units.sort_by(|a, b| {
                a.2.partial_cmp(&b.2)
                    .expect("finite norms")
                    .then(a.0.cmp(&b.0))
                    .then(a.1.cmp(&b.1))
            });
            units.iter().take(count).map(|&(l, u, _)| (l, u)).collect()
        }
        PruneStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ids: Vec<(usize, usize)> = units.iter().map(|&(l, u, _)| (l, u)).collect();
            ids.shuffle(&mut rng);
            ids.truncate(count);
            ids
        }
    };
    for (li, unit) in victims {
        zero_unit(&mut out, li, unit);
    }
    Ok(out)
}

fn zero_unit<F: Scalar>(net: &mut Network<F>, layer_idx: usize, unit: usize) {
    match &mut net.layers_mut()[layer_idx] {
        Layer::Dense(d) => {
            d.w[unit * d.in_features..(unit + 1) * d.in_features]
                .iter_mut()
                .for_each(|w| *w = F::zero());
            d.b[unit] = F::zero();
        }
        Layer::Conv(c) => {
            let per = c.in_c * c.kh * c.kw;
            c.w[unit * per..(unit + 1) * per]
                .iter_mut()
                .for_each(|w| *w = F::zero());
            c.b[unit] = F::zero();
        }
        _ => unreachable!("only parameterized layers hold units"),
    }
}

/// Re-draw the selected layers from the init distribution; all other layers
/// keep their parameters bit for bit. Returns a fresh copy.
pub fn reinit_layers<F: Scalar>(
    net: &Network<F>,
    selector: &LayerSelector,
    seed: u64,
) -> Result<Network<F>> {
    let names = net.layer_names();
    let targets: Vec<usize> = match selector {
        LayerSelector::LastDense => net.last_dense_index().into_iter().collect(),
        LayerSelector::AllDense => names
            .iter()
            .filter(|(i, _)| matches!(net.layers()[*i], Layer::Dense(_)))
            .map(|(i, _)| *i)
            .collect(),
        LayerSelector::Named(wanted) => {
            let mut targets = Vec::new();
            for want in wanted {
                let found = names.iter().find(|(_, n)| n == want);
                match found {
                    Some((i, _)) => targets.push(*i),
                    None => {
                        return Err(Error::Selector(format!(
                            "no layer named `{want}` (have: {})",
                            names
                                .iter()
                                .map(|(_, n)| n.as_str())
                                .collect::<Vec<_>>()
                                .join(", ")
                        )))
                    }
                }
            }
            targets
        }
    };
    if targets.is_empty() {
        return Err(Error::Selector(format!("{selector:?} matched nothing")));
    }
    let mut out = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sorted = targets;
    sorted.sort_unstable();
    for idx in sorted {
        out.layers_mut()[idx].init_params(&mut rng);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::NetworkConfig;
    use crate::nn::tensor::Tensor;
    use crate::nn::LayerSpec;

    fn net_with_norms() -> Network<f64> {
        // one dense layer, 4 units with L1 norms 1, 2, 3, 4
        let config = NetworkConfig {
            input_shape: vec![2],
            num_labels: 4,
            layers: vec![LayerSpec::Dense { out_features: 4 }, LayerSpec::Softmax],
        };
        let mut net = Network::init(config, 0).unwrap();
        if let Layer::Dense(d) = &mut net.layers_mut()[0] {
            d.w.copy_from_slice(&[0.5, 0.5, 1.0, 1.0, 1.5, 1.5, 2.0, 2.0]);
            d.b.copy_from_slice(&[0.1, 0.2, 0.3, 0.4]);
        }
        net
    }

    #[test]
    fn ratio_zero_is_identity() {
        let net = net_with_norms();
        let pruned = prune(&net, 0.0, PruneStrategy::L1Ascending, 0).unwrap();
        assert_eq!(pruned.flat_params(), net.flat_params());
    }

    #[test]
    fn ratio_one_zeroes_everything() {
        let net = net_with_norms();
        let pruned = prune(&net, 1.0, PruneStrategy::L1Ascending, 0).unwrap();
        assert!(pruned.flat_params().iter().all(|&v| v == 0.0));
        let batch = Tensor::from_vec(&[1, 2], vec![0.7, -0.3]).unwrap();
        assert!(pruned.forward(&batch).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l1_prunes_smallest_norms_first() {
        let net = net_with_norms();
        let pruned = prune(&net, 0.5, PruneStrategy::L1Ascending, 0).unwrap();
        if let Layer::Dense(d) = &pruned.layers()[0] {
            assert_eq!(&d.w[0..4], &[0.0, 0.0, 0.0, 0.0]); // units with norms 1 and 2
            assert_eq!(&d.w[4..8], &[1.5, 1.5, 2.0, 2.0]);
            assert_eq!(d.b, vec![0.0, 0.0, 0.3, 0.4]);
        } else {
            panic!("expected dense");
        }
    }

    #[test]
    fn random_prune_is_seeded() {
        let net = net_with_norms();
        let a = prune(&net, 0.5, PruneStrategy::Random, 7).unwrap();
        let b = prune(&net, 0.5, PruneStrategy::Random, 7).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        let zeros = a.flat_params().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros >= 4); // two units of two weights + biases
    }

    #[test]
    fn invalid_ratio_rejected() {
        let net = net_with_norms();
        assert!(matches!(
            prune(&net, 1.5, PruneStrategy::L1Ascending, 0),
            Err(Error::InvalidRatio(_))
        ));
        assert!(matches!(
            prune(&net, -0.1, PruneStrategy::L1Ascending, 0),
            Err(Error::InvalidRatio(_))
        ));
    }

    #[test]
    fn prune_leaves_original_untouched() {
        let net = net_with_norms();
        let before = net.flat_params();
        let _ = prune(&net, 1.0, PruneStrategy::L1Ascending, 0).unwrap();
        assert_eq!(net.flat_params(), before);
    }

    fn two_dense_net() -> Network<f32> {
        let config = NetworkConfig {
            input_shape: vec![3],
            num_labels: 2,
            layers: vec![
                LayerSpec::Dense { out_features: 4 },
                LayerSpec::ReLU,
                LayerSpec::Dense { out_features: 2 },
                LayerSpec::Softmax,
            ],
        };
        Network::init(config, 5).unwrap()
    }

    #[test]
    fn reinit_last_dense_preserves_earlier_layers() {
        let net = two_dense_net();
        let out = reinit_layers(&net, &LayerSelector::LastDense, 99).unwrap();
        let (a, b) = (net.layers(), out.layers());
        match (&a[0], &b[0]) {
            (Layer::Dense(x), Layer::Dense(y)) => assert_eq!(x.w, y.w),
            _ => panic!(),
        }
        match (&a[2], &b[2]) {
            (Layer::Dense(x), Layer::Dense(y)) => assert_ne!(x.w, y.w),
            _ => panic!(),
        }
    }

    #[test]
    fn reinit_same_seed_is_identical() {
        let net = two_dense_net();
        let a = reinit_layers(&net, &LayerSelector::AllDense, 4).unwrap();
        let b = reinit_layers(&net, &LayerSelector::AllDense, 4).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn reinit_by_name_and_bad_name() {
        let net = two_dense_net();
        assert!(reinit_layers(&net, &LayerSelector::Named(vec!["dense1".into()]), 0).is_ok());
        assert!(matches!(
            reinit_layers(&net, &LayerSelector::Named(vec!["conv9".into()]), 0),
            Err(Error::Selector(_))
        ));
    }
}
