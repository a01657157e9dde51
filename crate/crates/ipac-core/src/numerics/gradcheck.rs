use alloc::vec::Vec;

use super::{Graph, NodeId, NumericsError, Tensor};
use crate::math;
use crate::rng::Rng;

/// Central-difference gradient verification for a scalar function of one or
/// more tensors.
///
/// `build` must construct the full forward computation on the given graph
/// from the supplied leaves and return the scalar loss node. It is invoked
/// once per function evaluation, so it must be deterministic (fixed dropout
/// seeds, no external state).
pub struct GradCheck {
    /// Central-difference step.
    pub step: f64,
    /// Cap on coordinates probed per input tensor; all coordinates when the
    /// tensor is smaller. Probed coordinates are drawn with this seed.
    pub max_coords_per_input: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords_per_input: usize::MAX,
            seed: 0,
        }
    }
}

impl GradCheck {
    /// Returns the maximum over probed coordinates of
    /// `|analytic - central| / max(1, |analytic|, |central|)`.
    pub fn run<F>(&self, build: &mut F, points: &[Tensor]) -> Result<f64, NumericsError>
    where
        F: FnMut(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
    {
        let analytic = self.analytic_grads(build, points)?;
        let mut rng = Rng::new(self.seed);
        let mut worst = 0.0f64;
        for (t_idx, tensor) in points.iter().enumerate() {
            let coords = self.pick_coords(tensor.len(), &mut rng);
            for c in coords {
                let center = tensor.data()[c];
                let plus = self.eval_at(build, points, t_idx, c, center + self.step)?;
                let minus = self.eval_at(build, points, t_idx, c, center - self.step)?;
                let numeric = (plus - minus) / (2.0 * self.step);
                let a = analytic[t_idx][c];
                let denom = 1.0f64.max(math::abs(a)).max(math::abs(numeric));
                let rel = math::abs(a - numeric) / denom;
                if rel > worst {
                    worst = rel;
                }
            }
        }
        Ok(worst)
    }

    fn analytic_grads<F>(
        &self,
        build: &mut F,
        points: &[Tensor],
    ) -> Result<Vec<Vec<f64>>, NumericsError>
    where
        F: FnMut(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
    {
        let mut graph = Graph::new();
        let leaves: Vec<NodeId> = points
            .iter()
            .map(|t| graph.leaf(t.clone(), true))
            .collect();
        let loss = build(&mut graph, &leaves)?;
        graph.backward(loss)?;
        Ok(leaves
            .iter()
            .map(|&id| graph.grad(id).unwrap().to_vec())
            .collect())
    }

    fn eval_at<F>(
        &self,
        build: &mut F,
        points: &[Tensor],
        t_idx: usize,
        coord: usize,
        value: f64,
    ) -> Result<f64, NumericsError>
    where
        F: FnMut(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
    {
        let mut graph = Graph::new();
        let leaves: Vec<NodeId> = points
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut t = t.clone();
                if i == t_idx {
                    t.data_mut()[coord] = value;
                }
                graph.leaf(t, false)
            })
            .collect();
        let loss = build(&mut graph, &leaves)?;
        Ok(graph.value(loss).data()[0])
    }

    fn pick_coords(&self, len: usize, rng: &mut Rng) -> Vec<usize> {
        if len <= self.max_coords_per_input {
            return (0..len).collect();
        }
        let mut all: Vec<usize> = (0..len).collect();
        rng.shuffle(&mut all);
        all.truncate(self.max_coords_per_input);
        all.sort_unstable();
        all
    }
}

/// Full-coverage check with the default step.
pub fn gradcheck<F>(build: &mut F, points: &[Tensor]) -> Result<f64, NumericsError>
where
    F: FnMut(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
{
    GradCheck::default().run(build, points)
}

/// Convenience for a scalar function of a single tensor.
pub fn gradcheck_single<F>(build: &mut F, point: &Tensor, step: f64) -> Result<f64, NumericsError>
where
    F: FnMut(&mut Graph, NodeId) -> Result<NodeId, NumericsError>,
{
    GradCheck {
        step,
        ..GradCheck::default()
    }
    .run(&mut |g, leaves| build(g, leaves[0]), core::slice::from_ref(point))
}
