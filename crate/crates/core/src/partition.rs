//! Assigning a labeled example pool to clients.
//!
//! Partitioners return, per client, the pool indices it owns. All three
//! sample without replacement, so outputs are disjoint and every client
//! receives exactly `per_client` examples.
//!
//! The Dirichlet partitioners keep global per-label pools. When a draw
//! empties a pool the label is pruned for everyone, and the current
//! client's multinomial is renormalized over what remains. Later clients
//! draw their Dirichlets over the surviving labels only.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{categorical, symmetric_dirichlet};
use crate::tasks::ClientDataset;

/// Probabilities over the current children of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Multinomial {
    p: Vec<f64>,
}

impl Multinomial {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Degenerate(format!("not a probability vector (sum {total})")));
        }
        Ok(Self { p })
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            p: alloc::vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        categorical(rng, &self.p)
    }

    /// Remove category `i` and divide the rest by `a = Σ_{k≠i} p_k`.
    pub fn renormalize(&self, i: usize) -> Result<Multinomial> {
        if self.p.len() < 2 {
            return Err(Error::Degenerate("cannot remove the only category".into()));
        }
        if i >= self.p.len() {
            return Err(Error::Lookup { kind: "category", id: i });
        }
        let a: f64 = self.p.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, v)| v).sum();
        if !(a > 0.0) {
            return Err(Error::Degenerate(format!("category {i} carries all the mass")));
        }
        let p = self
            .p
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, v)| v / a)
            .collect();
        Ok(Multinomial { p })
    }

    /// [`renormalize`](Self::renormalize), falling back to uniform over the
    /// remaining categories when the removed one held all the mass.
    fn remove_or_uniform(&self, i: usize) -> Multinomial {
        match self.renormalize(i) {
            Ok(m) => m,
            Err(_) => Multinomial::uniform(self.p.len() - 1),
        }
    }
}

fn dirichlet_multinomial<R: Rng + ?Sized>(rng: &mut R, concentration: f64, k: usize) -> Multinomial {
    let p = symmetric_dirichlet(rng, concentration, k);
    let total: f64 = p.iter().sum();
    // Guard the 1e-12 contract against accumulated rounding.
    Multinomial {
        p: p.into_iter().map(|v| v / total).collect(),
    }
}

fn check_capacity(m: usize, per_client: usize, available: usize) -> Result<()> {
    let needed = m
        .checked_mul(per_client)
        .ok_or(Error::Capacity { needed: usize::MAX, available })?;
    if needed > available {
        return Err(Error::Capacity { needed, available });
    }
    Ok(())
}

/// Uniformly random disjoint split: `m` clients with `per_client` examples each.
pub fn partition_iid<R: Rng + ?Sized>(pool_len: usize, m: usize, per_client: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    check_capacity(m, per_client, pool_len)?;
    let chosen = index::sample(rng, pool_len, m * per_client).into_vec();
    Ok((0..m).map(|i| chosen[i * per_client..(i + 1) * per_client].to_vec()).collect())
}

/// Draw a uniform example from `pool` and remove it.
fn take_uniform<R: Rng + ?Sized>(pool: &mut Vec<usize>, rng: &mut R) -> usize {
    let k = rng.random_range(0..pool.len());
    pool.swap_remove(k)
}

/// Single-level Dirichlet split: each client draws `θ ∼ Dir(alpha)` over the
/// surviving labels, then samples labels from `θ` and examples uniformly
/// within the drawn label.
pub fn partition_lda<R: Rng + ?Sized>(
    labels: &[usize],
    m: usize,
    per_client: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if !(alpha > 0.0) {
        return Err(crate::error::contract("LDA concentration must be positive"));
    }
    check_capacity(m, per_client, labels.len())?;
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (e, &y) in labels.iter().enumerate() {
        by_label.entry(y).or_default().push(e);
    }
    let mut alive: Vec<(usize, Vec<usize>)> = by_label.into_iter().collect();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let mut theta = dirichlet_multinomial(rng, alpha, alive.len());
        let mut mine = Vec::with_capacity(per_client);
        for _ in 0..per_client {
            let k = theta.sample(rng);
            mine.push(take_uniform(&mut alive[k].1, rng));
            if alive[k].1.is_empty() {
                alive.remove(k);
                if !alive.is_empty() {
                    theta = theta.remove_or_uniform(k);
                }
            }
        }
        out.push(mine);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineNode {
    pub label: usize,
    pub pool: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseNode {
    pub label: usize,
    pub children: Vec<FineNode>,
}

/// Two-level label DAG with per-fine-label example pools.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDag {
    coarse: Vec<CoarseNode>,
}

impl LabelDag {
    /// Build from `(coarse, fine)` labels, one pair per example index.
    pub fn from_labels(labels: &[(usize, usize)]) -> Result<Self> {
        let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
        let mut tree: BTreeMap<usize, BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
        for (e, &(c, y)) in labels.iter().enumerate() {
            match parent.get(&y) {
                Some(&p) if p != c => {
                    return Err(crate::error::contract(format!(
                        "fine label {y} appears under coarse labels {p} and {c}"
                    )))
                }
                _ => {
                    parent.insert(y, c);
                }
            }
            tree.entry(c).or_default().entry(y).or_default().push(e);
        }
        let coarse = tree
            .into_iter()
            .map(|(label, fine)| CoarseNode {
                label,
                children: fine.into_iter().map(|(label, pool)| FineNode { label, pool }).collect(),
            })
            .collect();
        Ok(Self { coarse })
    }

    pub fn coarse(&self) -> &[CoarseNode] {
        &self.coarse
    }

    pub fn total_examples(&self) -> usize {
        self.coarse.iter().flat_map(|c| &c.children).map(|f| f.pool.len()).sum()
    }

    /// Every surviving fine label has a nonempty pool and every surviving
    /// coarse label has a child.
    pub fn is_pruned(&self) -> bool {
        self.coarse
            .iter()
            .all(|c| !c.children.is_empty() && c.children.iter().all(|f| !f.pool.is_empty()))
    }
}

/// Pachinko allocation over a coarse/fine label DAG. `observe` is called
/// with the pruned DAG after each client.
pub fn partition_pachinko_observed<R: Rng + ?Sized>(
    dag: &LabelDag,
    m: usize,
    per_client: usize,
    alpha: f64,
    beta: f64,
    rng: &mut R,
    observe: &mut dyn FnMut(usize, &LabelDag),
) -> Result<Vec<Vec<usize>>> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(crate::error::contract("pachinko concentrations must be positive"));
    }
    check_capacity(m, per_client, dag.total_examples())?;
    let mut g = dag.clone();
    // Drop nodes that start out empty.
    for c in g.coarse.iter_mut() {
        c.children.retain(|f| !f.pool.is_empty());
    }
    g.coarse.retain(|c| !c.children.is_empty());

    let mut out = Vec::with_capacity(m);
    for client in 0..m {
        let mut theta_r = dirichlet_multinomial(rng, alpha, g.coarse.len());
        let mut theta_c: Vec<Multinomial> = g
            .coarse
            .iter()
            .map(|c| dirichlet_multinomial(rng, beta, c.children.len()))
            .collect();
        let mut mine = Vec::with_capacity(per_client);
        for _ in 0..per_client {
            let ci = theta_r.sample(rng);
            let yi = theta_c[ci].sample(rng);
            let node = &mut g.coarse[ci];
            mine.push(take_uniform(&mut node.children[yi].pool, rng));
            if node.children[yi].pool.is_empty() {
                node.children.remove(yi);
                if node.children.is_empty() {
                    g.coarse.remove(ci);
                    theta_c.remove(ci);
                    if !g.coarse.is_empty() {
                        theta_r = theta_r.remove_or_uniform(ci);
                    }
                } else {
                    theta_c[ci] = theta_c[ci].remove_or_uniform(yi);
                }
            }
        }
        out.push(mine);
        observe(client, &g);
    }
    Ok(out)
}

pub fn partition_pachinko<R: Rng + ?Sized>(
    dag: &LabelDag,
    m: usize,
    per_client: usize,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    partition_pachinko_observed(dag, m, per_client, alpha, beta, rng, &mut |_, _| {})
}

/// Wrap index lists as client datasets with batch size `batch_size`.
pub fn into_datasets(parts: &[Vec<usize>], batch_size: usize) -> Result<Vec<ClientDataset>> {
    parts.iter().map(|ids| ClientDataset::new(ids.clone(), batch_size)).collect()
}

/// Number of distinct values of `label(e)` over each client's examples.
pub fn unique_labels_per_client(parts: &[Vec<usize>], label: impl Fn(usize) -> usize) -> Vec<usize> {
    parts
        .iter()
        .map(|ids| {
            let mut ys: Vec<usize> = ids.iter().map(|&e| label(e)).collect();
            ys.sort_unstable();
            ys.dedup();
            ys.len()
        })
        .collect()
}
