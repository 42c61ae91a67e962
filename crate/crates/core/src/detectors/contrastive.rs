//! Ego-net contrastive detector.
//!
//! Each target node gets an ego-net of `K` nodes sampled by random walk with
//! restart. The target's own attributes are masked inside its ego-net, and a
//! one-layer GCN embeds the ego-net. Two bilinear discriminators contrast:
//!
//! * node vs. subgraph (NS): the target's embedding against the mean of its
//!   ego-net neighbours, versus another target's ego-net readout;
//! * node vs. node (NN): the masked target's ego-net embedding against its own
//!   attribute embedding, versus another target's.
//!
//! The loss is `(1 - alpha) * L_NN + alpha * L_NS`. Scores average
//! `alpha * (s_neg - s_pos)_NS + (1 - alpha) * (s_neg - s_pos)_NN` over rounds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NormalizedAdjacency};
use crate::tensor::{sigmoid, Adam, Matrix, Parameter, SparseMatrix, Tape, Var};

use super::{check_loss, finalize_rounds, DetectorSpec, Differentiable, TrainOutput};

/// Restart probability of the ego-net random walk.
pub const RESTART_PROBABILITY: f64 = 0.5;

const W_NS: usize = 0;
const W_NN: usize = 1;
const B_NS: usize = 2;
const B_NN: usize = 3;

/// Samples the ego-net of `target`: `target` first, then nodes in order of
/// first visit by a random walk with restart. The result has exactly
/// `min(k, |component of target|)` distinct nodes; walks that stall are
/// completed in breadth-first order.
pub fn sample_egonet<R: Rng + ?Sized>(
    g: &AttributedGraph,
    target: usize,
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let ball = bfs_ball(g, target, k);
    let want = ball.len();
    let mut nodes = vec![target];
    let mut current = target;
    let mut steps = 0;
    let budget = 50 * k.max(1);
    while nodes.len() < want && steps < budget {
        steps += 1;
        if rng.random::<f64>() < RESTART_PROBABILITY {
            current = target;
        }
        let nb = g.neighbors(current);
        if nb.is_empty() {
            current = target;
            continue;
        }
        current = nb[rng.random_range(0..nb.len())];
        if !nodes.contains(&current) {
            nodes.push(current);
        }
    }
    for v in ball {
        if nodes.len() >= want {
            break;
        }
        if !nodes.contains(&v) {
            nodes.push(v);
        }
    }
    nodes
}

/// The first `k` nodes reached by breadth-first search from `root`.
fn bfs_ball(g: &AttributedGraph, root: usize, k: usize) -> Vec<usize> {
    let mut seen = vec![root];
    let mut head = 0;
    while head < seen.len() && seen.len() < k {
        let u = seen[head];
        head += 1;
        for &v in g.neighbors(u) {
            if seen.len() >= k {
                break;
            }
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
    }
    seen
}

/// Ego-nets of a set of targets packed into one block-diagonal graph.
#[derive(Debug, Clone)]
struct EgoBatch {
    /// Normalized block-diagonal adjacency over all packed nodes.
    adjacency: SparseMatrix,
    /// Packed node attributes with each target's row zeroed.
    features: Matrix,
    /// `b x B`: mean over each ego-net's non-target members.
    readout: SparseMatrix,
    /// `b x B`: picks each target's packed row.
    select: SparseMatrix,
    /// Unmasked target attributes, `b x d`.
    target_attributes: Matrix,
    /// Negative partner of each target: a cyclic shift of a random order.
    partners: Vec<usize>,
}

impl EgoBatch {
    fn sample<R: Rng + ?Sized>(
        g: &AttributedGraph,
        targets: &[usize],
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let b = targets.len();
        if b < 2 {
            return Err(Error::Validation("contrast needs at least two targets".into()));
        }
        let d = g.attribute_dim();
        let x = g.attributes();
        let mut packed = Vec::new();
        let mut edges = Vec::new();
        let mut readout = Vec::new();
        let mut select = Vec::with_capacity(b);
        let mut target_attributes = Vec::with_capacity(b * d);
        for (j, &t) in targets.iter().enumerate() {
            let nodes = sample_egonet(g, t, k, rng);
            let offset = packed.len();
            edges.extend(
                g.induced_edges(&nodes)
                    .into_iter()
                    .map(|(u, v)| (u + offset, v + offset)),
            );
            select.push((j, offset, 1.0));
            let others = nodes.len() - 1;
            for pos in 1..nodes.len() {
                readout.push((j, offset + pos, 1.0 / others as f64));
            }
            target_attributes.extend_from_slice(x.row(t));
            packed.extend(nodes);
        }
        let total = packed.len();
        let mut features = Matrix::zeros(total, d);
        let mut is_target = vec![false; total];
        for &(_, row, _) in &select {
            is_target[row] = true;
        }
        for (row, &v) in packed.iter().enumerate() {
            if !is_target[row] {
                features.row_mut(row).copy_from_slice(x.row(v));
            }
        }

        let mut order: Vec<usize> = (0..b).collect();
        order.shuffle(rng);
        let mut partners = vec![0; b];
        for (i, &j) in order.iter().enumerate() {
            partners[j] = order[(i + 1) % b];
        }

        Ok(EgoBatch {
            adjacency: NormalizedAdjacency::from_edges(total, &edges).matrix().clone(),
            features,
            readout: SparseMatrix::from_triplets(b, total, readout)?,
            select: SparseMatrix::from_triplets(b, total, select)?,
            target_attributes: Matrix::from_vec(b, d, target_attributes)?,
            partners,
        })
    }

    fn len(&self) -> usize {
        self.partners.len()
    }
}

struct ViewOutputs {
    loss: Var,
    pos_ns: Var,
    neg_ns: Var,
    pos_nn: Var,
    neg_nn: Var,
}

/// Contrastive loss over a fixed set of sampled views.
pub struct ContrastiveObjective {
    alpha: f64,
    k: usize,
    views: Vec<EgoBatch>,
    params: Vec<Parameter>,
    rng: ChaCha8Rng,
}

impl ContrastiveObjective {
    /// Initializes parameters from `spec.seed` and samples two views over
    /// all nodes.
    pub fn new(g: &AttributedGraph, spec: &DetectorSpec) -> Result<Self> {
        let n = g.node_count();
        let k = spec
            .egonet_size()
            .ok_or_else(|| Error::Validation("contrastive detector needs K".into()))?;
        if n < 2 {
            return Err(Error::Validation("contrastive detector needs two nodes".into()));
        }
        let d = g.attribute_dim();
        let e = spec.training.embed_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let params = vec![
            Parameter::glorot(d, e, &mut rng),
            Parameter::glorot(d, e, &mut rng),
            Parameter::glorot(e, e, &mut rng),
            Parameter::glorot(e, e, &mut rng),
        ];
        let mut obj = ContrastiveObjective {
            alpha: spec.alpha(),
            k,
            views: Vec::new(),
            params,
            rng,
        };
        let all: Vec<usize> = (0..n).collect();
        obj.resample(g, &all)?;
        Ok(obj)
    }

    /// Draws two fresh views over `targets`.
    fn resample(&mut self, g: &AttributedGraph, targets: &[usize]) -> Result<()> {
        self.views = (0..2)
            .map(|_| EgoBatch::sample(g, targets, self.k, &mut self.rng))
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn view_forward<'t>(
        &self,
        tape: &mut Tape<'t>,
        view: &'t EgoBatch,
        w: &[Var],
    ) -> Result<ViewOutputs> {
        let b = view.len();
        let features = tape.constant(view.features.clone());
        let targets = tape.constant(view.target_attributes.clone());

        let gcn = |tape: &mut Tape<'t>, weight: Var| -> Result<Var> {
            let xw = tape.matmul(features, weight)?;
            let h = tape.sparse_matmul(&view.adjacency, xw)?;
            Ok(tape.relu(h))
        };
        let embed = |tape: &mut Tape<'t>, weight: Var| -> Result<Var> {
            let xw = tape.matmul(targets, weight)?;
            Ok(tape.relu(xw))
        };
        let bilinear = |tape: &mut Tape<'t>, left: Var, right: Var| -> Result<Var> {
            let prod = tape.mul(left, right)?;
            Ok(tape.row_sum(prod))
        };

        // node vs. subgraph
        let h_ns = gcn(tape, w[W_NS])?;
        let summary = tape.sparse_matmul(&view.readout, h_ns)?;
        let node_ns = embed(tape, w[W_NS])?;
        let node_ns = tape.matmul(node_ns, w[B_NS])?;
        let pos_ns = bilinear(tape, node_ns, summary)?;
        let other_summary = tape.gather_rows(summary, view.partners.clone())?;
        let neg_ns = bilinear(tape, node_ns, other_summary)?;

        // node vs. node
        let h_nn = gcn(tape, w[W_NN])?;
        let masked = tape.sparse_matmul(&view.select, h_nn)?;
        let masked = tape.matmul(masked, w[B_NN])?;
        let node_nn = embed(tape, w[W_NN])?;
        let pos_nn = bilinear(tape, masked, node_nn)?;
        let other_masked = tape.gather_rows(masked, view.partners.clone())?;
        let neg_nn = bilinear(tape, other_masked, node_nn)?;

        let bce = |tape: &mut Tape<'t>, pos: Var, neg: Var| -> Result<Var> {
            let flipped = tape.scale(pos, -1.0);
            let a = tape.softplus(flipped);
            let a = tape.sum(a);
            let c = tape.softplus(neg);
            let c = tape.sum(c);
            let total = tape.add(a, c)?;
            Ok(tape.scale(total, 1.0 / (2.0 * b as f64)))
        };
        let l_ns = bce(tape, pos_ns, neg_ns)?;
        let l_nn = bce(tape, pos_nn, neg_nn)?;
        let l_ns = tape.scale(l_ns, self.alpha);
        let l_nn = tape.scale(l_nn, 1.0 - self.alpha);
        let loss = tape.add(l_nn, l_ns)?;
        Ok(ViewOutputs {
            loss,
            pos_ns,
            neg_ns,
            pos_nn,
            neg_nn,
        })
    }

    fn build<'t>(&'t self, tape: &mut Tape<'t>) -> Result<(Var, Vec<Var>)> {
        let w: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let mut total: Option<Var> = None;
        for view in &self.views {
            let out = self.view_forward(tape, view, &w)?;
            total = Some(match total {
                None => out.loss,
                Some(t) => tape.add(t, out.loss)?,
            });
        }
        let total = total.ok_or_else(|| Error::Contract("no views sampled".into()))?;
        let loss = tape.scale(total, 1.0 / self.views.len() as f64);
        Ok((loss, w))
    }

    /// Raw per-target scores of one freshly sampled view.
    fn score_round(&mut self, g: &AttributedGraph, targets: &[usize]) -> Result<Vec<f64>> {
        let view = EgoBatch::sample(g, targets, self.k, &mut self.rng)?;
        let mut tape = Tape::new();
        let w: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let out = self.view_forward(&mut tape, &view, &w)?;
        let alpha = self.alpha;
        let read = |v: Var| tape.value(v).as_slice().iter().map(|&x| sigmoid(x)).collect::<Vec<_>>();
        let (pns, nns, pnn, nnn) = (read(out.pos_ns), read(out.neg_ns), read(out.pos_nn), read(out.neg_nn));
        Ok((0..targets.len())
            .map(|i| alpha * (nns[i] - pns[i]) + (1.0 - alpha) * (nnn[i] - pnn[i]))
            .collect())
    }
}

impl Differentiable for ContrastiveObjective {
    fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    fn loss(&self) -> Result<f64> {
        let mut tape = Tape::new();
        let (loss, _) = self.build(&mut tape)?;
        Ok(tape.value(loss).as_slice()[0])
    }

    fn loss_and_gradients(&self) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let (loss, w) = self.build(&mut tape)?;
        let value = tape.value(loss).as_slice()[0];
        let mut grads = tape.backward(loss)?;
        let out = w
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Matrix::zeros(p.value.rows(), p.value.cols()))
            })
            .collect();
        Ok((value, out))
    }
}

/// Splits `order` into batches of `size` (0 = one batch), folding a
/// trailing singleton into the previous batch.
fn batches(order: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 || size >= order.len() {
        return vec![order.to_vec()];
    }
    let mut out: Vec<Vec<usize>> = order.chunks(size.max(2)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

pub fn train_contrastive(g: &AttributedGraph, spec: &DetectorSpec) -> Result<TrainOutput> {
    spec.validate()?;
    let mut objective = ContrastiveObjective::new(g, spec)?;
    let adam = Adam::new(spec.training.learning_rate);
    let n = g.node_count();
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_history = Vec::with_capacity(spec.training.epochs);
    for epoch in 0..spec.training.epochs {
        if spec.training.batch_size > 0 {
            order.shuffle(&mut objective.rng);
        }
        let groups = batches(&order, spec.training.batch_size);
        let mut epoch_loss = 0.0;
        for group in &groups {
            if epoch > 0 || groups.len() > 1 {
                objective.resample(g, group)?;
            }
            let (loss, grads) = objective.loss_and_gradients()?;
            check_loss(loss, epoch)?;
            epoch_loss += loss;
            for (p, gr) in objective.params.iter_mut().zip(&grads) {
                p.accumulate_grad(gr)?;
            }
            adam.step(&mut objective.params)?;
        }
        loss_history.push(epoch_loss / groups.len() as f64);
    }

    let all: Vec<usize> = (0..n).collect();
    let groups = batches(&all, spec.training.batch_size);
    let mut rounds = Vec::with_capacity(spec.training.rounds);
    for _ in 0..spec.training.rounds {
        let mut round = Vec::with_capacity(n);
        for group in &groups {
            round.extend(objective.score_round(g, group)?);
        }
        rounds.push(round);
    }
    Ok(TrainOutput {
        scores: finalize_rounds(&rounds)?,
        loss_history,
    })
}
