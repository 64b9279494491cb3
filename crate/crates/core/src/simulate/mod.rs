//! Node-level simulation of the generative model and aggregation into group
//! counts, plus the oracles used to check the closed-form results.

mod oracle;
pub mod quadrature;

pub use oracle::{
    enumerate_second_moment, mc_kernel_moments, mc_moments, mc_samples, Estimate,
    KernelMomentEstimates, MomentEstimate,
};
pub use quadrature::{integrate, quadrature_gaussian_exp, QuadratureError};

use std::io::{self, BufRead, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use thiserror::Error;

use crate::kernel::KernelParams;
use crate::likelihood::{AggregateMatrix, LikelihoodError};
use crate::moments::{GroupConfig, NetworkKind};
use crate::seed::rng_from_seed;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("group sizes up to {limit} are supported by enumeration, got {size}")]
    TooLarge { size: u64, limit: u64 },
    #[error("at least {min} simulations are required, got {got}")]
    TooFewSimulations { got: usize, min: usize },
    #[error("group index {index} out of range for {groups} groups")]
    IndexOutOfRange { index: usize, groups: usize },
    #[error("malformed input on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// One simulated network: latent coordinates, group labels and adjacency.
///
/// `adjacency[(i, j)]` is the connection from node `j` to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRealization {
    pub coords: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub adjacency: DMatrix<u32>,
    pub kind: NetworkKind,
    pub n_groups: usize,
}

impl NetworkRealization {
    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups];
        for &g in &self.labels {
            sizes[g] += 1;
        }
        sizes
    }

    /// Number of edges (each unordered pair once for undirected networks).
    pub fn edge_total(&self) -> u64 {
        let n = self.n_nodes();
        let mut total = 0u64;
        for i in 0..n {
            for j in 0..n {
                if self.kind.directed || i < j {
                    total += u64::from(self.adjacency[(i, j)]);
                }
            }
        }
        total
    }

    /// Writes `source target weight` lines for every non-zero entry (`i < j`
    /// only for undirected networks). Node ids are zero-based.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.n_nodes();
        writeln!(w, "# source target weight")?;
        for target in 0..n {
            for source in 0..n {
                let weight = self.adjacency[(target, source)];
                if weight == 0 || (!self.kind.directed && source < target) {
                    continue;
                }
                writeln!(w, "{source} {target} {weight}")?;
            }
        }
        Ok(())
    }

    /// Writes `node group` lines.
    pub fn write_labels<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# node group")?;
        for (node, g) in self.labels.iter().enumerate() {
            writeln!(w, "{node} {g}")?;
        }
        Ok(())
    }

    /// Reads a network written by [`write_edge_list`](Self::write_edge_list)
    /// and [`write_labels`](Self::write_labels). Coordinates are not part of
    /// the format and come back as an `n × 0` matrix.
    pub fn read<E: BufRead, L: BufRead>(
        edges: E,
        labels: L,
        kind: NetworkKind,
    ) -> Result<Self, SimulateError> {
        let mut label_pairs = Vec::new();
        for (line_no, row) in data_lines(labels)? {
            let [node, group] = parse_fields::<2>(&row, line_no)?;
            label_pairs.push((node as usize, group as usize));
        }
        label_pairs.sort_unstable();
        let n = label_pairs.len();
        let mut labels = Vec::with_capacity(n);
        for (expected, (node, group)) in label_pairs.into_iter().enumerate() {
            if node != expected {
                return Err(SimulateError::Parse {
                    line: 0,
                    message: format!("node ids must be 0..{n}, missing {expected}"),
                });
            }
            labels.push(group);
        }
        let n_groups = labels.iter().max().map_or(0, |g| g + 1);
        let mut adjacency = DMatrix::zeros(n, n);
        for (line_no, row) in data_lines(edges)? {
            let [source, target, weight] = parse_fields::<3>(&row, line_no)?;
            let (s, t) = (source as usize, target as usize);
            if s >= n || t >= n || s == t {
                return Err(SimulateError::Parse {
                    line: line_no,
                    message: format!("invalid edge {s} -> {t} for {n} nodes"),
                });
            }
            let w = u32::try_from(weight).map_err(|_| SimulateError::Parse {
                line: line_no,
                message: "weight too large".into(),
            })?;
            adjacency[(t, s)] = w;
            if !kind.directed {
                adjacency[(s, t)] = w;
            }
        }
        Ok(Self {
            coords: DMatrix::zeros(n, 0),
            labels,
            adjacency,
            kind,
            n_groups,
        })
    }
}

fn data_lines<R: BufRead>(r: R) -> Result<Vec<(usize, String)>, SimulateError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn parse_fields<const N: usize>(row: &str, line: usize) -> Result<[u64; N], SimulateError> {
    let fields: Vec<&str> = row.split_whitespace().collect();
    if fields.len() != N {
        return Err(SimulateError::Parse {
            line,
            message: format!("expected {N} fields, found {}", fields.len()),
        });
    }
    let mut out = [0u64; N];
    for (slot, f) in out.iter_mut().zip(fields) {
        *slot = f.parse().map_err(|_| SimulateError::Parse {
            line,
            message: format!("not a non-negative integer: {f:?}"),
        })?;
    }
    Ok(out)
}

/// Group labels for nodes laid out group by group.
pub fn contiguous_labels(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &n)| std::iter::repeat_n(g, n))
        .collect()
}

fn draw_coords<R: Rng + ?Sized>(cfg: &GroupConfig, labels: &[usize], rng: &mut R) -> DMatrix<f64> {
    let q = cfg.dim();
    let mut coords = DMatrix::zeros(labels.len(), q);
    for (i, &g) in labels.iter().enumerate() {
        let scale = cfg.scales()[g];
        for s in 0..q {
            let e: f64 = StandardNormal.sample(rng);
            coords[(i, s)] = cfg.centres()[(g, s)] + scale * e;
        }
    }
    coords
}

fn kernel_value(coords: &DMatrix<f64>, i: usize, j: usize, theta: f64) -> f64 {
    let sq: f64 = coords
        .row(i)
        .iter()
        .zip(coords.row(j).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    theta * (-0.5 * sq).exp()
}

fn draw_edge<R: Rng + ?Sized>(lambda: f64, weighted: bool, rng: &mut R) -> u32 {
    if weighted {
        if lambda <= 0.0 {
            return 0;
        }
        let poisson = Poisson::new(lambda).expect("kernel rate is finite and positive");
        poisson.sample(rng) as u32
    } else {
        u32::from(rng.random::<f64>() < lambda)
    }
}

pub fn simulate_network_with<R: Rng + ?Sized>(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
    rng: &mut R,
) -> NetworkRealization {
    let labels = contiguous_labels(cfg.sizes());
    let n = labels.len();
    let coords = draw_coords(cfg, &labels, rng);
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j || (!kind.directed && j < i) {
                continue;
            }
            let lambda = kernel_value(&coords, i, j, kp.theta());
            let y = draw_edge(lambda, kind.weighted, rng);
            adjacency[(i, j)] = y;
            if !kind.directed {
                adjacency[(j, i)] = y;
            }
        }
    }
    NetworkRealization {
        coords,
        labels,
        adjacency,
        kind,
        n_groups: cfg.n_groups(),
    }
}

/// Draws coordinates per group, then every ordered pair (unordered pair for
/// undirected networks) independently.
pub fn simulate_network(
    cfg: &GroupConfig,
    kp: &KernelParams,
    kind: NetworkKind,
    seed: u64,
) -> NetworkRealization {
    simulate_network_with(cfg, kp, kind, &mut rng_from_seed(seed))
}

/// `Y_ab = Σ_{i≠j} [g_i = a][g_j = b] y_ij`; undirected networks count each
/// edge once, in the entry with `a <= b`, and store the result symmetric.
pub fn aggregate(net: &NetworkRealization) -> Result<AggregateMatrix, SimulateError> {
    let r = net.n_groups;
    if let Some(&g) = net.labels.iter().find(|&&g| g >= r) {
        return Err(SimulateError::IndexOutOfRange { index: g, groups: r });
    }
    let n = net.n_nodes();
    let mut counts = DMatrix::<u64>::zeros(r, r);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let y = u64::from(net.adjacency[(i, j)]);
            if y == 0 {
                continue;
            }
            let (a, b) = (net.labels[i], net.labels[j]);
            if net.kind.directed {
                counts[(a, b)] += y;
            } else if i < j {
                counts[(a.min(b), a.max(b))] += y;
            }
        }
    }
    if !net.kind.directed {
        for a in 0..r {
            for b in 0..a {
                counts[(a, b)] = counts[(b, a)];
            }
        }
    }
    Ok(AggregateMatrix::new(counts, net.kind, net.group_sizes())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::aggregate_mean;

    fn cfg(sizes: Vec<usize>, q: usize, scale: f64) -> GroupConfig {
        let r = sizes.len();
        let mut centres = DMatrix::zeros(r, q);
        for g in 0..r {
            centres[(g, 0)] = g as f64 * 0.7;
        }
        GroupConfig::new(sizes, centres, vec![scale; r]).unwrap()
    }

    #[test]
    fn zero_propensity_gives_empty_graph() {
        let c = cfg(vec![5, 4], 2, 1.0);
        let kp = KernelParams::new(0.0, 2).unwrap();
        for kind in [NetworkKind::DIRECTED, NetworkKind { directed: true, weighted: true }] {
            let net = simulate_network(&c, &kp, kind, 1);
            assert_eq!(net.edge_total(), 0);
        }
    }

    #[test]
    fn unit_kernel_gives_complete_graph() {
        let c = GroupConfig::new(vec![4, 3], DMatrix::zeros(2, 2), vec![0.0, 0.0]).unwrap();
        let kp = KernelParams::new(1.0, 2).unwrap();
        let net = simulate_network(&c, &kp, NetworkKind::DIRECTED, 5);
        assert_eq!(net.edge_total(), 7 * 6);
        for i in 0..7 {
            assert_eq!(net.adjacency[(i, i)], 0);
        }
    }

    #[test]
    fn undirected_networks_are_symmetric() {
        let c = cfg(vec![6, 5, 4], 2, 0.8);
        let kp = KernelParams::new(0.6, 2).unwrap();
        let net = simulate_network(&c, &kp, NetworkKind::UNDIRECTED, 11);
        assert_eq!(net.adjacency, net.adjacency.transpose());
        let y = aggregate(&net).unwrap();
        assert_eq!(y.total(), net.edge_total());
    }

    #[test]
    fn singleton_groups_reproduce_adjacency() {
        let sizes = vec![1; 6];
        let c = cfg(sizes, 2, 0.5);
        let kp = KernelParams::new(0.9, 2).unwrap();
        let net = simulate_network(&c, &kp, NetworkKind::DIRECTED, 2);
        let y = aggregate(&net).unwrap();
        assert_eq!(y.counts(), &net.adjacency.map(u64::from));
    }

    #[test]
    fn single_group_collects_all_edges() {
        let c = cfg(vec![12], 1, 1.0);
        let kp = KernelParams::new(0.7, 1).unwrap();
        let net = simulate_network(&c, &kp, NetworkKind::DIRECTED, 3);
        let y = aggregate(&net).unwrap();
        assert_eq!(y.get(0, 0), net.edge_total());
    }

    #[test]
    fn aggregation_conserves_edges() {
        for (seed, kind) in [
            (1, NetworkKind::DIRECTED),
            (2, NetworkKind::UNDIRECTED),
            (3, NetworkKind { directed: true, weighted: true }),
            (4, NetworkKind { directed: false, weighted: true }),
        ] {
            let c = cfg(vec![7, 3, 9], 2, 1.2);
            let kp = KernelParams::new(0.8, 2).unwrap();
            let net = simulate_network(&c, &kp, kind, seed);
            let y = aggregate(&net).unwrap();
            assert_eq!(y.total(), net.edge_total());
            if kind.directed {
                let raw: u64 = net.adjacency.iter().map(|&v| u64::from(v)).sum();
                let dense: u64 = y.counts().iter().sum();
                assert_eq!(raw, dense);
            }
        }
    }

    #[test]
    fn seeded_simulation_is_reproducible() {
        let c = cfg(vec![8, 8], 2, 1.0);
        let kp = KernelParams::new(0.5, 2).unwrap();
        let a = simulate_network(&c, &kp, NetworkKind::DIRECTED, 99);
        let b = simulate_network(&c, &kp, NetworkKind::DIRECTED, 99);
        assert_eq!(a, b);
        assert_ne!(a, simulate_network(&c, &kp, NetworkKind::DIRECTED, 100));
    }

    #[test]
    fn edge_list_round_trip() {
        for kind in [NetworkKind::DIRECTED, NetworkKind { directed: false, weighted: true }] {
            let c = cfg(vec![5, 6], 2, 1.0);
            let kp = KernelParams::new(0.9, 2).unwrap();
            let net = simulate_network(&c, &kp, kind, 8);
            let (mut edges, mut labels) = (Vec::new(), Vec::new());
            net.write_edge_list(&mut edges).unwrap();
            net.write_labels(&mut labels).unwrap();
            let back = NetworkRealization::read(&edges[..], &labels[..], kind).unwrap();
            assert_eq!(back.adjacency, net.adjacency);
            assert_eq!(back.labels, net.labels);
            let mut again = Vec::new();
            back.write_edge_list(&mut again).unwrap();
            assert_eq!(again, edges);
        }
    }

    #[test]
    fn malformed_edge_lines_are_reported() {
        let labels = b"0 0\n1 0\n";
        let err = NetworkRealization::read(&b"0 1\n"[..], &labels[..], NetworkKind::DIRECTED);
        assert!(matches!(err, Err(SimulateError::Parse { line: 1, .. })));
        let err = NetworkRealization::read(&b"0 5 1\n"[..], &labels[..], NetworkKind::DIRECTED);
        assert!(matches!(err, Err(SimulateError::Parse { .. })));
    }

    #[test]
    fn edge_density_tracks_predicted_mean() {
        // a larger network, checked against the total predicted edge count
        let c = cfg(vec![30, 25, 40, 35], 2, 0.6);
        let kp = KernelParams::new(0.5, 2).unwrap();
        let kind = NetworkKind::DIRECTED;
        let predicted: f64 = (0..4)
            .flat_map(|a| (0..4).map(move |b| (a, b)))
            .map(|(a, b)| aggregate_mean(&c, &kp, kind, a, b).unwrap())
            .sum();
        let totals: Vec<f64> = (0..200)
            .map(|s| simulate_network(&c, &kp, kind, s).edge_total() as f64)
            .collect();
        let est = MomentEstimate::from_samples(&totals);
        assert!(
            (est.mean_hat - predicted).abs() < 3.0 * est.std_error_mean,
            "{} vs {predicted} (se {})",
            est.mean_hat,
            est.std_error_mean
        );
    }
}
