//! Closed registry of component transfer functions.
//!
//! Transfers are pure: output = f(concatenated parent outputs, config params).
//! Stochasticity is added by the executor as `noise_scale * z` on top of the
//! transfer output, never inside it.

use serde::{Deserialize, Serialize};

use crate::config::{ConfigSpace, ConfigValue};
use crate::error::{Error, Result};
use crate::value::ValueVec;

/// Row-major matrix stored flat, used by linear-style transfers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix { rows: n, cols: n, data }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

/// How a lookup-table entry combines with the component input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LookupMode {
    /// Elementwise product; scalar entries broadcast over the input.
    Scale,
    /// Elementwise addition; scalar entries broadcast over the input.
    Offset,
}

/// One linear route of a gated-routing transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// The transfer function registry. `params` in the JSON schema maps onto the
/// variant payloads below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Transfer {
    /// y = W x + b + C v, where v is the config parameter vector (optional).
    Linear {
        weight: Matrix,
        bias: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config_weight: Option<Matrix>,
    },
    /// y = x + (peak - sum_i curvature_i (v_i - center_i)^2) * direction.
    /// The bowl argument v is the config parameter vector.
    QuadraticBowl {
        center: Vec<f64>,
        curvature: Vec<f64>,
        peak: f64,
        direction: Vec<f64>,
    },
    /// y = entry (*) x or x + entry, entry taken from the config parameter
    /// vector (discrete option vector or pool candidate parameters).
    LookupTable { mode: LookupMode },
    /// y = W_i x + b_i with the route index taken from a discrete config.
    GatedRouting { routes: Vec<Route> },
}

impl Transfer {
    /// Applies the transfer. `input` is the concatenated parent output,
    /// `config`/`space` identify the component's configured parameters.
    pub fn apply(
        &self,
        input: &[f64],
        config: &ConfigValue,
        space: &ConfigSpace,
        out_dim: usize,
    ) -> Result<ValueVec> {
        let out: Vec<f64> = match self {
            Transfer::Linear {
                weight,
                bias,
                config_weight,
            } => {
                if weight.cols != input.len() {
                    return Err(Error::execution(format!(
                        "linear transfer expects input dim {}, got {}",
                        weight.cols,
                        input.len()
                    )));
                }
                let mut y = weight.mul_vec(input);
                for (yi, b) in y.iter_mut().zip(bias) {
                    *yi += b;
                }
                if let Some(cw) = config_weight {
                    let v = config
                        .as_param_vec(space)
                        .ok_or_else(|| Error::execution("linear transfer needs config params"))?;
                    if cw.cols != v.dim() {
                        return Err(Error::execution("config injection dim mismatch"));
                    }
                    for (yi, c) in y.iter_mut().zip(cw.mul_vec(v.as_slice())) {
                        *yi += c;
                    }
                }
                y
            }
            Transfer::QuadraticBowl {
                center,
                curvature,
                peak,
                direction,
            } => {
                let v = config
                    .as_param_vec(space)
                    .ok_or_else(|| Error::execution("quadratic bowl needs config params"))?;
                if v.dim() != center.len() {
                    return Err(Error::execution("bowl center dim mismatch"));
                }
                let bowl: f64 = peak
                    - v.iter()
                        .zip(center.iter().zip(curvature))
                        .map(|(x, (c, a))| a * (x - c) * (x - c))
                        .sum::<f64>();
                if direction.len() != input.len() {
                    return Err(Error::execution("bowl direction dim mismatch"));
                }
                input
                    .iter()
                    .zip(direction)
                    .map(|(x, d)| x + bowl * d)
                    .collect()
            }
            Transfer::LookupTable { mode } => {
                let entry = config
                    .as_param_vec(space)
                    .ok_or_else(|| Error::execution("lookup table needs config params"))?;
                let broadcast = entry.dim() == 1;
                if !broadcast && entry.dim() != input.len() {
                    return Err(Error::execution("lookup entry dim mismatch"));
                }
                input
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let e = if broadcast { entry[0] } else { entry[i] };
                        match mode {
                            LookupMode::Scale => x * e,
                            LookupMode::Offset => x + e,
                        }
                    })
                    .collect()
            }
            Transfer::GatedRouting { routes } => {
                let idx = match config {
                    ConfigValue::DiscreteIndex(i) => *i,
                    _ => return Err(Error::execution("gated routing needs a discrete config")),
                };
                let route = routes
                    .get(idx)
                    .ok_or_else(|| Error::execution(format!("route {idx} out of range")))?;
                if route.weight.cols != input.len() {
                    return Err(Error::execution("route weight dim mismatch"));
                }
                let mut y = route.weight.mul_vec(input);
                for (yi, b) in y.iter_mut().zip(&route.bias) {
                    *yi += b;
                }
                y
            }
        };
        if out.len() != out_dim {
            return Err(Error::execution(format!(
                "transfer produced dim {} but component declares {out_dim}",
                out.len()
            )));
        }
        let v = ValueVec::from(out);
        v.check_finite("transfer output")?;
        Ok(v)
    }

    /// Output dimension implied by the transfer parameters for a given input
    /// dimension, used by graph validation.
    pub fn implied_out_dim(&self, in_dim: usize) -> Option<usize> {
        match self {
            Transfer::Linear { weight, .. } => Some(weight.rows),
            Transfer::QuadraticBowl { .. } => Some(in_dim),
            Transfer::LookupTable { .. } => Some(in_dim),
            Transfer::GatedRouting { routes } => routes.first().map(|r| r.weight.rows),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vv(data: &[f64]) -> ValueVec {
        ValueVec::new(data.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity_passes_input_through() {
        let t = Transfer::Linear {
            weight: Matrix::identity(2),
            bias: vec![0.0, 0.0],
            config_weight: None,
        };
        let y = t
            .apply(&[1.5, -2.0], &ConfigValue::Empty, &ConfigSpace::Empty, 2)
            .unwrap();
        assert_eq!(y.as_slice(), &[1.5, -2.0]);
    }

    #[test]
    fn linear_config_injection_adds_offset() {
        let t = Transfer::Linear {
            weight: Matrix::identity(1),
            bias: vec![0.0],
            config_weight: Some(Matrix::identity(1)),
        };
        let space = ConfigSpace::Continuous {
            lower: vv(&[-1.0]),
            upper: vv(&[1.0]),
        };
        let y = t
            .apply(&[0.25], &ConfigValue::ContinuousVec(vv(&[0.5])), &space, 1)
            .unwrap();
        assert!((y[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lookup_scale_uses_discrete_option() {
        let space = ConfigSpace::Discrete {
            options: vec![vv(&[0.5]), vv(&[2.0])],
        };
        let t = Transfer::LookupTable {
            mode: LookupMode::Scale,
        };
        let y = t
            .apply(&[3.0, 4.0], &ConfigValue::DiscreteIndex(1), &space, 2)
            .unwrap();
        assert_eq!(y.as_slice(), &[6.0, 8.0]);
    }

    #[test]
    fn gated_routing_selects_route() {
        let t = Transfer::GatedRouting {
            routes: vec![
                Route {
                    weight: Matrix::identity(2),
                    bias: vec![0.0, 0.0],
                },
                Route {
                    weight: Matrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
                    bias: vec![0.0, 0.0],
                },
            ],
        };
        let space = ConfigSpace::Discrete {
            options: vec![vv(&[0.0]), vv(&[1.0])],
        };
        let y = t
            .apply(&[1.0, 2.0], &ConfigValue::DiscreteIndex(1), &space, 2)
            .unwrap();
        assert_eq!(y.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn bowl_peaks_at_center() {
        let t = Transfer::QuadraticBowl {
            center: vec![10.0],
            curvature: vec![0.01],
            peak: 0.5,
            direction: vec![1.0],
        };
        let space = ConfigSpace::Discrete {
            options: vec![vv(&[5.0]), vv(&[10.0])],
        };
        let at5 = t
            .apply(&[0.0], &ConfigValue::DiscreteIndex(0), &space, 1)
            .unwrap();
        let at10 = t
            .apply(&[0.0], &ConfigValue::DiscreteIndex(1), &space, 1)
            .unwrap();
        assert!(at10[0] > at5[0]);
        assert!((at10[0] - 0.5).abs() < 1e-15);
    }
}
