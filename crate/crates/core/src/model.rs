//! Linear scoring models and a hinge-loss trainer.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::{Descriptor, DescriptorKind};

/// Which pipeline stage a model serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prescreen,
    Boundary,
    Classify,
}

impl Stage {
    pub fn descriptor_kind(&self) -> DescriptorKind {
        match self {
            Stage::Prescreen => DescriptorKind::Rhog,
            Stage::Boundary => DescriptorKind::Boundary,
            Stage::Classify => DescriptorKind::Shog,
        }
    }

    pub fn dim(&self) -> usize {
        self.descriptor_kind().dim()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Prescreen => "prescreen",
            Stage::Boundary => "boundary",
            Stage::Classify => "classify",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prescreen" | "pre-screen" => Ok(Stage::Prescreen),
            "boundary" | "segment" | "segmentation" => Ok(Stage::Boundary),
            "classify" | "classification" => Ok(Stage::Classify),
            other => Err(Error::invalid(format!("unknown stage '{other}'"))),
        }
    }
}

/// Hyper-parameters of [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    pub epochs: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: crate::config::DEFAULT_C,
            epochs: 20,
            restarts: 10,
            seed: 0,
        }
    }
}

/// Provenance stored next to trained weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub c: f64,
    pub epochs: usize,
    pub restarts: usize,
    pub seed: u64,
    pub positives: usize,
    pub negatives: usize,
    pub objective: f64,
}

/// `score(x) = <weights, x> + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub stage: Stage,
    pub dim: usize,
    pub bias: f64,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingInfo>,
}

impl LinearModel {
    pub fn new(stage: Stage, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.len() != stage.dim() {
            return Err(Error::DimensionMismatch {
                expected: stage.dim(),
                got: weights.len(),
            });
        }
        Ok(LinearModel {
            stage,
            dim: weights.len(),
            bias,
            weights,
            training: None,
        })
    }

    pub fn zeros(stage: Stage, bias: f64) -> Self {
        Self::new(stage, vec![0.0; stage.dim()], bias).expect("dimension from stage")
    }

    /// Score of a raw feature vector.
    pub fn score_values(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn score(&self, d: &Descriptor) -> Result<f64> {
        self.score_values(d.values())
    }

    pub fn expect_stage(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::StageMismatch {
                expected: stage.to_string(),
                got: self.stage.to_string(),
            });
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let model: LinearModel = serde_json::from_str(s)?;
        if model.weights.len() != model.dim {
            return Err(Error::invalid(format!(
                "model header declares dim {} but carries {} weights",
                model.dim,
                model.weights.len()
            )));
        }
        if model.dim != model.stage.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.stage.dim(),
                got: model.dim,
            });
        }
        if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("model has non-finite parameters"));
        }
        Ok(model)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `0.5 |w|^2 + C sum_i max(0, 1 - y_i (<w, x_i> + b))`.
pub fn hinge_objective(weights: &[f64], bias: f64, data: &[(&[f64], f64)], c: f64) -> f64 {
    let reg = 0.5 * dot(weights, weights);
    let loss: f64 = data
        .iter()
        .map(|(x, y)| (1.0 - y * (dot(weights, x) + bias)).max(0.0))
        .sum();
    reg + c * loss
}

/// Trains an L2-regularised hinge-loss model by stochastic subgradient
/// descent. Each restart shuffles with its own seed; the restart with the
/// lowest objective wins, and within a restart the better of the last
/// iterate and the average of the later epoch-end iterates is kept.
pub fn train(
    stage: Stage,
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<LinearModel> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::invalid(format!(
            "training needs both classes (positives {}, negatives {})",
            positives.len(),
            negatives.len()
        )));
    }
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(Error::invalid(format!(
            "C must be positive, got {}",
            config.c
        )));
    }
    if config.epochs == 0 || config.restarts == 0 {
        return Err(Error::invalid("epochs and restarts must be positive"));
    }
    let dim = stage.dim();
    if let Some(bad) = positives.iter().chain(negatives).find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let (weights, bias, objective) = fit(dim, positives, negatives, config);
    let mut model = LinearModel::new(stage, weights, bias)?;
    model.training = Some(TrainingInfo {
        c: config.c,
        epochs: config.epochs,
        restarts: config.restarts,
        seed: config.seed,
        positives: positives.len(),
        negatives: negatives.len(),
        objective,
    });
    Ok(model)
}

fn fit(
    dim: usize,
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    config: &TrainConfig,
) -> (Vec<f64>, f64, f64) {
    let data: Vec<(&[f64], f64)> = positives
        .iter()
        .map(|x| (x.as_slice(), 1.0))
        .chain(negatives.iter().map(|x| (x.as_slice(), -1.0)))
        .collect();
    let n = data.len();
    let lambda = 1.0 / (config.c * n as f64);
    // Offset so the first step is at most `ETA0`.
    const ETA0: f64 = 0.5;
    let t0 = 1.0 / (lambda * ETA0);

    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    for restart in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(
            config.seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let mut order: Vec<usize> = (0..n).collect();
        // w = scale * v, so the shrink step is O(1).
        let mut v = vec![0.0; dim];
        let mut scale = 1.0;
        let mut b = 0.0;
        let mut avg_w = vec![0.0; dim];
        let mut avg_b = 0.0;
        let mut avg_count = 0.0;
        let mut t = 0.0;
        let tail_start = config.epochs / 2;
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1.0;
                let eta = 1.0 / (lambda * (t + t0));
                let (x, y) = data[i];
                let margin = y * (scale * dot(&v, x) + b);
                scale *= 1.0 - eta * lambda;
                if margin < 1.0 {
                    let step = eta * y / scale;
                    for (vj, xj) in v.iter_mut().zip(x) {
                        *vj += step * xj;
                    }
                    b += eta * y;
                }
                if scale < 1e-9 {
                    for vj in v.iter_mut() {
                        *vj *= scale;
                    }
                    scale = 1.0;
                }
            }
            // Tail average over epoch-end iterates.
            if epoch >= tail_start {
                avg_count += 1.0;
                let k = 1.0 / avg_count;
                for (a, vj) in avg_w.iter_mut().zip(&v) {
                    *a += (scale * vj - *a) * k;
                }
                avg_b += (b - avg_b) * k;
            }
        }
        let w: Vec<f64> = v.iter().map(|vj| scale * vj).collect();
        for (cand_w, cand_b) in [(w, b), (avg_w, avg_b)] {
            let obj = hinge_objective(&cand_w, cand_b, &data, config.c);
            if best.as_ref().is_none_or(|(_, _, o)| obj < *o) {
                best = Some((cand_w, cand_b, obj));
            }
        }
    }
    best.expect("at least one restart")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn boundary_vec(f: impl FnMut(usize) -> f64) -> Vec<f64> {
        (0..Stage::Boundary.dim()).map(f).collect()
    }

    fn random_model(rng: &mut ChaCha8Rng) -> LinearModel {
        let w = (0..27).map(|_| rng.random_range(-2.0..2.0)).collect();
        LinearModel::new(Stage::Boundary, w, rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn zero_weights_return_bias() {
        let m = LinearModel::zeros(Stage::Boundary, -0.3);
        assert_eq!(m.score_values(&boundary_vec(|i| i as f64)).unwrap(), -0.3);
    }

    #[test]
    fn self_inner_product() {
        let x = boundary_vec(|i| (i as f64 * 0.37).sin());
        let m = LinearModel::new(Stage::Boundary, x.clone(), 0.5).unwrap();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        assert!((m.score_values(&x).unwrap() - (norm2 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn score_matches_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let m = random_model(&mut rng);
            let x = boundary_vec(|_| rng.random_range(-1.0..1.0));
            let mut expect = m.bias;
            for i in (0..27).rev() {
                expect += m.weights[i] * x[i];
            }
            assert!((m.score_values(&x).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn score_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = random_model(&mut rng);
        m.bias = 0.0;
        let a = boundary_vec(|_| rng.random_range(-1.0..1.0));
        let b = boundary_vec(|_| rng.random_range(-1.0..1.0));
        let (alpha, beta) = (0.7, -1.3);
        let mix: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        let lhs = m.score_values(&mix).unwrap();
        let rhs = alpha * m.score_values(&a).unwrap() + beta * m.score_values(&b).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn positive_scaling_preserves_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng);
        let scaled = LinearModel::new(
            Stage::Boundary,
            m.weights.iter().map(|w| w * 3.5).collect(),
            m.bias * 3.5,
        )
        .unwrap();
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|_| boundary_vec(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let argmax = |m: &LinearModel| {
            (0..xs.len())
                .max_by(|&i, &j| {
                    m.score_values(&xs[i])
                        .unwrap()
                        .total_cmp(&m.score_values(&xs[j]).unwrap())
                })
                .unwrap()
        };
        assert_eq!(argmax(&m), argmax(&scaled));
    }

    #[test]
    fn dimension_mismatch() {
        let m = LinearModel::zeros(Stage::Boundary, 0.0);
        assert!(m.score_values(&[1.0; 26]).is_err());
        assert!(LinearModel::new(Stage::Classify, vec![0.0; 27], 0.0).is_err());
    }

    fn unit(k: usize, sign: f64) -> Vec<f64> {
        boundary_vec(|i| if i == k { sign } else { 0.0 })
    }

    #[test]
    fn separable_pair() {
        let cfg = TrainConfig::default();
        let m = train(Stage::Boundary, &[unit(0, 1.0)], &[unit(0, -1.0)], &cfg).unwrap();
        assert!(m.weights[0] > 0.0);
        assert!(m.score_values(&unit(0, 1.0)).unwrap() > 0.0);
        assert!(m.score_values(&unit(0, -1.0)).unwrap() < 0.0);
        assert_eq!(m.training.as_ref().unwrap().c, 10.0);
    }

    #[test]
    fn separable_clouds_fit_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cloud = |shift: f64| -> Vec<Vec<f64>> {
            (0..60)
                .map(|_| {
                    boundary_vec(|i| {
                        let base = rng.random_range(0.0..0.3);
                        if i < 3 {
                            base + shift
                        } else {
                            base
                        }
                    })
                })
                .collect()
        };
        let pos = cloud(0.5);
        let neg = cloud(0.0);
        let m = train(Stage::Boundary, &pos, &neg, &TrainConfig::default()).unwrap();
        assert!(pos.iter().all(|x| m.score_values(x).unwrap() > 0.0));
        assert!(neg.iter().all(|x| m.score_values(x).unwrap() < 0.0));
    }

    #[test]
    fn training_is_deterministic() {
        let pos = vec![unit(1, 1.0), unit(2, 0.5)];
        let neg = vec![unit(1, -1.0), unit(3, 1.0)];
        let cfg = TrainConfig {
            seed: 42,
            ..TrainConfig::default()
        };
        let a = train(Stage::Boundary, &pos, &neg, &cfg).unwrap();
        let b = train(Stage::Boundary, &pos, &neg, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_training_input() {
        let cfg = TrainConfig::default();
        assert!(train(Stage::Boundary, &[], &[unit(0, 1.0)], &cfg).is_err());
        assert!(train(Stage::Boundary, &[unit(0, 1.0)], &[vec![0.0; 5]], &cfg).is_err());
        let bad_c = TrainConfig { c: 0.0, ..cfg };
        assert!(train(Stage::Boundary, &[unit(0, 1.0)], &[unit(0, -1.0)], &bad_c).is_err());
    }

    #[test]
    fn objective_near_grid_optimum_in_two_dimensions() {
        // Only the first two components vary; the grid covers (w0, w1, b).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sample = |c0: f64, c1: f64| {
            boundary_vec(|i| match i {
                0 => c0 + rng.random_range(-0.6..0.6),
                1 => c1 + rng.random_range(-0.6..0.6),
                _ => 0.0,
            })
        };
        let pos: Vec<_> = (0..15).map(|_| sample(0.6, 0.3)).collect();
        let neg: Vec<_> = (0..15).map(|_| sample(-0.2, -0.4)).collect();
        let c = 1.0;
        let cfg = TrainConfig {
            c,
            epochs: 200,
            ..TrainConfig::default()
        };
        let m = train(Stage::Boundary, &pos, &neg, &cfg).unwrap();
        let data: Vec<(&[f64], f64)> = pos
            .iter()
            .map(|x| (x.as_slice(), 1.0))
            .chain(neg.iter().map(|x| (x.as_slice(), -1.0)))
            .collect();
        let trained = hinge_objective(&m.weights, m.bias, &data, c);

        let mut grid_best = f64::INFINITY;
        let steps: Vec<f64> = (0..=120).map(|k| -6.0 + 0.1 * k as f64).collect();
        let mut w = vec![0.0; 27];
        for &w0 in &steps {
            for &w1 in &steps {
                w[0] = w0;
                w[1] = w1;
                for &b in &steps {
                    grid_best = grid_best.min(hinge_objective(&w, b, &data, c));
                }
            }
        }
        assert!(
            trained <= grid_best * 1.01,
            "trained {trained} grid {grid_best}"
        );
    }

    #[test]
    fn json_round_trip_and_stable_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_model(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        m.save(&a).unwrap();
        m.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(LinearModel::load(&a).unwrap(), m);
    }

    #[test]
    fn rejects_inconsistent_files() {
        let bad_dim = r#"{"stage":"boundary","dim":27,"bias":0.0,"weights":[1.0,2.0]}"#;
        assert!(LinearModel::from_json_str(bad_dim).is_err());
        let wrong_stage_dim = format!(
            r#"{{"stage":"classify","dim":27,"bias":0.0,"weights":{:?}}}"#,
            vec![0.0; 27]
        );
        assert!(LinearModel::from_json_str(&wrong_stage_dim).is_err());
        match LinearModel::from_json_str("{\n\"stage\": \"boundary\",\n\"dim\": }") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
