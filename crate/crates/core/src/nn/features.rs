//! Flat feature encodings fed to the networks: one-hot for tabular states and
//! discrete actions, raw values for vectors, intensities in [0, 1] for images.

use crate::env::{Action, ActionSpace, Obs, ObsSpace};
use ndarray::Array2;

pub fn obs_features(obs: &[Obs], space: &ObsSpace) -> Array2<f64> {
    let dim = space.feat_dim();
    let mut out = Array2::zeros((obs.len(), dim));
    for (i, o) in obs.iter().enumerate() {
        let mut row = out.row_mut(i);
        match o {
            Obs::Index(k) => row[*k as usize] = 1.0,
            Obs::Vector(v) => {
                for (j, &x) in v.iter().enumerate() {
                    row[j] = f64::from(x);
                }
            }
            Obs::Image(img) => {
                for (j, &b) in img.data.iter().enumerate() {
                    row[j] = f64::from(b) / 255.0;
                }
            }
        }
    }
    out
}

pub fn action_features(actions: &[Action], space: &ActionSpace) -> Array2<f64> {
    let dim = space.feat_dim();
    let mut out = Array2::zeros((actions.len(), dim));
    for (i, a) in actions.iter().enumerate() {
        let mut row = out.row_mut(i);
        match a {
            Action::Discrete(k) => row[*k as usize] = 1.0,
            Action::Continuous(v) => {
                for (j, &x) in v.iter().enumerate() {
                    row[j] = f64::from(x);
                }
            }
        }
    }
    out
}
