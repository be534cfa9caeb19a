//! Discrete priors over valuation and observation grids.
//!
//! Independent private-value priors are stored as a product of marginals.
//! Interdependent or correlated priors are binned from a latent-variable
//! sampler into weighted atoms; their marginals are always recomputed from
//! the binned joint so that strategy row sums match the joint used by the
//! gradient.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sampler::{stream_rng, Marginal, PriorModel, SimRng};

const CHUNK: usize = 1 << 16;
const MAX_AXIS: usize = u16::MAX as usize;

/// Probability vector proportional to `density` evaluated at the grid points.
pub fn discretize_density<F: Fn(f64) -> f64>(grid: &Grid, density: F) -> Result<Vec<f64>> {
    let raw: Vec<f64> = grid.points().iter().map(|&x| density(x)).collect();
    if raw.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::DegeneratePrior("density must be finite and nonnegative".into()));
    }
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegeneratePrior("density vanishes on every grid point".into()));
    }
    Ok(raw.into_iter().map(|d| d / total).collect())
}

/// Weighted atoms of a binned joint distribution, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomTable {
    agents: usize,
    obs: Vec<u16>,
    values: Vec<u16>,
    mass: Vec<f64>,
}

impl AtomTable {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn obs(&self, atom: usize) -> &[u16] {
        &self.obs[atom * self.agents..(atom + 1) * self.agents]
    }

    /// Valuation indices, or `None` under private values.
    pub fn values(&self, atom: usize) -> Option<&[u16]> {
        if self.values.is_empty() {
            None
        } else {
            Some(&self.values[atom * self.agents..(atom + 1) * self.agents])
        }
    }

    pub fn mass(&self, atom: usize) -> f64 {
        self.mass[atom]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Joint {
    /// Product of the per-agent marginals (independent private values).
    Product,
    Atoms(AtomTable),
}

#[derive(Debug, Clone)]
pub struct DiscretePrior {
    obs_grids: Vec<Grid>,
    value_grids: Vec<Grid>,
    marginals: Vec<Vec<f64>>,
    joint: Joint,
    values_equal_observations: bool,
}

impl DiscretePrior {
    /// Independent private values with the given discrete marginals.
    pub fn independent(obs_grids: Vec<Grid>, marginals: Vec<Vec<f64>>) -> Result<Self> {
        if obs_grids.len() != marginals.len() || obs_grids.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: obs_grids.len(),
                actual: marginals.len(),
            });
        }
        for (g, m) in obs_grids.iter().zip(&marginals) {
            if g.len() != m.len() {
                return Err(Error::DimensionMismatch { expected: g.len(), actual: m.len() });
            }
            let total: f64 = m.iter().sum();
            if m.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::DegeneratePrior("marginal must be a probability vector".into()));
            }
            if m.iter().any(|&p| p == 0.0) {
                return Err(Error::DegeneratePrior(
                    "marginal has zero-mass observation points; shrink the observation interval".into(),
                ));
            }
        }
        Ok(Self {
            value_grids: obs_grids.clone(),
            obs_grids,
            marginals,
            joint: Joint::Product,
            values_equal_observations: true,
        })
    }

    /// Independent marginals discretized by density evaluation.
    pub fn from_marginals(marginals: &[Marginal], obs_grids: Vec<Grid>) -> Result<Self> {
        let vectors = marginals
            .iter()
            .zip(&obs_grids)
            .map(|(m, g)| {
                m.validate()?;
                discretize_density(g, |x| m.density(x))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::independent(obs_grids, vectors)
    }

    /// Empirical joint from `sample_count` latent draws binned to the nearest
    /// grid point on every axis. `value_grids = None` means private values
    /// (valuation equals observation). Agents listed together in
    /// `exchangeable` are symmetrized by permuting each atom within its group.
    pub fn from_latent<F>(
        sampler: F,
        value_grids: Option<Vec<Grid>>,
        obs_grids: Vec<Grid>,
        sample_count: usize,
        seed: u64,
        exchangeable: &[Vec<usize>],
    ) -> Result<Self>
    where
        F: Fn(&mut SimRng, &mut [f64], &mut [f64]) + Sync,
    {
        let n = obs_grids.len();
        let private = value_grids.is_none();
        let axes = if private { n } else { 2 * n };
        if axes > 8 {
            return Err(Error::Unsupported(format!("binned joints support at most 8 axes, got {axes}")));
        }
        if obs_grids.iter().chain(value_grids.iter().flatten()).any(|g| g.len() > MAX_AXIS) {
            return Err(Error::Unsupported("grid too large for binned joint".into()));
        }
        if let Some(vg) = &value_grids {
            if vg.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: vg.len() });
            }
        }
        if sample_count == 0 {
            return Err(Error::InvalidParameter { name: "sample_count", reason: "must be positive".into() });
        }

        let chunks = sample_count.div_ceil(CHUNK);
        let partial: Vec<HashMap<u128, u64>> = (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = stream_rng(seed, chunk as u64);
                let draws = CHUNK.min(sample_count - chunk * CHUNK);
                let mut counts: HashMap<u128, u64> = HashMap::new();
                let (mut v, mut o) = (vec![0.0; n], vec![0.0; n]);
                for _ in 0..draws {
                    sampler(&mut rng, &mut v, &mut o);
                    let mut key = 0u128;
                    for i in 0..n {
                        key |= (obs_grids[i].nearest_index(o[i]) as u128) << (16 * i);
                    }
                    if let Some(vg) = &value_grids {
                        for i in 0..n {
                            key |= (vg[i].nearest_index(v[i]) as u128) << (16 * (n + i));
                        }
                    }
                    *counts.entry(key).or_insert(0) += 1;
                }
                counts
            })
            .collect();
        let mut counts: HashMap<u128, u64> = HashMap::new();
        for part in partial {
            for (k, c) in part {
                *counts.entry(k).or_insert(0) += c;
            }
        }

        let decode = |key: u128| -> Vec<u16> {
            (0..axes).map(|a| ((key >> (16 * a)) & 0xffff) as u16).collect()
        };
        let mut symmetric: HashMap<u128, u64> = HashMap::with_capacity(counts.len());
        let perms = group_permutations(n, exchangeable)?;
        for (key, c) in counts {
            let axes_idx = decode(key);
            for perm in &perms {
                let mut out = 0u128;
                // agent `perm[i]` takes the role of agent `i`
                for i in 0..n {
                    out |= (axes_idx[perm[i]] as u128) << (16 * i);
                    if !private {
                        out |= (axes_idx[n + perm[i]] as u128) << (16 * (n + i));
                    }
                }
                *symmetric.entry(out).or_insert(0) += c;
            }
        }
        let total = (sample_count as u128 * perms.len() as u128) as f64;
        let mut entries: Vec<(u128, u64)> = symmetric.into_iter().collect();
        entries.sort_unstable_by_key(|e| e.0);

        let mut table = AtomTable {
            agents: n,
            obs: Vec::with_capacity(entries.len() * n),
            values: Vec::with_capacity(if private { 0 } else { entries.len() * n }),
            mass: Vec::with_capacity(entries.len()),
        };
        for (key, c) in entries {
            let idx = decode(key);
            table.obs.extend_from_slice(&idx[..n]);
            if !private {
                table.values.extend_from_slice(&idx[n..]);
            }
            table.mass.push(c as f64 / total);
        }

        let mut marginals: Vec<Vec<f64>> = obs_grids.iter().map(|g| vec![0.0; g.len()]).collect();
        for a in 0..table.len() {
            for (i, &k) in table.obs(a).iter().enumerate() {
                marginals[i][k as usize] += table.mass(a);
            }
        }
        for (i, m) in marginals.iter().enumerate() {
            if let Some(k) = m.iter().position(|&p| p == 0.0) {
                return Err(Error::DegeneratePrior(format!(
                    "agent {i} observation point {k} received no samples; use a coarser grid or more samples"
                )));
            }
        }

        Ok(Self {
            value_grids: value_grids.unwrap_or_else(|| obs_grids.clone()),
            obs_grids,
            marginals,
            joint: Joint::Atoms(table),
            values_equal_observations: private,
        })
    }

    /// Discrete prior for a continuous model. Independent models use density
    /// evaluation, latent models Monte-Carlo binning.
    pub fn from_model(
        model: &PriorModel,
        obs_grids: Vec<Grid>,
        value_grids: Option<Vec<Grid>>,
        sample_count: usize,
        seed: u64,
        exchangeable: &[Vec<usize>],
    ) -> Result<Self> {
        model.validate()?;
        if obs_grids.len() != model.agents() {
            return Err(Error::DimensionMismatch { expected: model.agents(), actual: obs_grids.len() });
        }
        match model {
            PriorModel::Independent { marginals } => Self::from_marginals(marginals, obs_grids),
            _ => {
                let value_grids = if model.private_values() {
                    None
                } else {
                    Some(value_grids.ok_or_else(|| {
                        Error::Config("interdependent prior needs valuation grids".into())
                    })?)
                };
                Self::from_latent(
                    |rng, v, o| model.draw(rng, v, o),
                    value_grids,
                    obs_grids,
                    sample_count,
                    seed,
                    exchangeable,
                )
            }
        }
    }

    pub fn agents(&self) -> usize {
        self.obs_grids.len()
    }

    pub fn obs_grid(&self, agent: usize) -> &Grid {
        &self.obs_grids[agent]
    }

    pub fn value_grid(&self, agent: usize) -> &Grid {
        &self.value_grids[agent]
    }

    pub fn marginal(&self, agent: usize) -> &[f64] {
        &self.marginals[agent]
    }

    pub fn joint(&self) -> &Joint {
        &self.joint
    }

    pub fn values_equal_observations(&self) -> bool {
        self.values_equal_observations
    }

    pub fn is_product(&self) -> bool {
        matches!(self.joint, Joint::Product)
    }

    /// Visits every atom with nonzero mass as (observation indices,
    /// valuation indices, mass).
    pub fn for_each_atom<F: FnMut(&[usize], &[usize], f64)>(&self, mut f: F) {
        let n = self.agents();
        match &self.joint {
            Joint::Product => {
                let dims: Vec<usize> = self.marginals.iter().map(Vec::len).collect();
                let mut idx = vec![0usize; n];
                loop {
                    let mass: f64 = (0..n).map(|i| self.marginals[i][idx[i]]).product();
                    if mass > 0.0 {
                        f(&idx, &idx, mass);
                    }
                    if !advance(&mut idx, &dims) {
                        break;
                    }
                }
            }
            Joint::Atoms(table) => {
                let mut obs = vec![0usize; n];
                let mut values = vec![0usize; n];
                for a in 0..table.len() {
                    for (dst, &src) in obs.iter_mut().zip(table.obs(a)) {
                        *dst = src as usize;
                    }
                    match table.values(a) {
                        Some(vals) => {
                            for (dst, &src) in values.iter_mut().zip(vals) {
                                *dst = src as usize;
                            }
                        }
                        None => values.copy_from_slice(&obs),
                    }
                    f(&obs, &values, table.mass(a));
                }
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        let mut total = 0.0;
        self.for_each_atom(|_, _, m| total += m);
        total
    }
}

/// LLG prior under the Bernoulli-weights correlation model.
pub fn bernoulli_weights_prior(
    gamma: f64,
    local_grid: Grid,
    global_grid: Grid,
    sample_count: usize,
    seed: u64,
) -> Result<DiscretePrior> {
    let model = PriorModel::BernoulliLlg { gamma };
    model.validate()?;
    DiscretePrior::from_model(
        &model,
        vec![local_grid.clone(), local_grid, global_grid],
        None,
        sample_count,
        seed,
        &[vec![0, 1]],
    )
}

/// Odometer increment over `dims`; returns false after the last index.
pub(crate) fn advance(idx: &mut [usize], dims: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < dims[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

fn group_permutations(n: usize, groups: &[Vec<usize>]) -> Result<Vec<Vec<usize>>> {
    let mut seen = vec![false; n];
    for g in groups {
        for &a in g {
            if a >= n || seen[a] {
                return Err(Error::Config(format!("invalid exchangeable group {g:?}")));
            }
            seen[a] = true;
        }
    }
    let mut result = vec![(0..n).collect::<Vec<_>>()];
    for g in groups.iter().filter(|g| g.len() > 1) {
        let mut next = Vec::new();
        for base in &result {
            for p in permutations(g.len()) {
                let mut perm = base.clone();
                for (slot, &src) in p.iter().enumerate() {
                    perm[g[slot]] = base[g[src]];
                }
                next.push(perm);
            }
        }
        result = next;
    }
    Ok(result)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total_variation(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    #[test]
    fn density_examples() {
        let g = Grid::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(discretize_density(&g, |_| 1.0).unwrap(), vec![0.25; 4]);
        let g = Grid::uniform(0.0, 1.0, 3).unwrap();
        let v = discretize_density(&g, |x| x).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-15 && (v[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!(discretize_density(&g, |_| 0.0).is_err());
    }

    #[test]
    fn constant_density_is_exactly_uniform() {
        for k in [2usize, 3, 7, 64, 100] {
            let g = Grid::uniform(-1.0, 3.0, k).unwrap();
            let v = discretize_density(&g, |_| 2.5).unwrap();
            assert!(v.iter().all(|&p| p == v[0]));
        }
    }

    #[test]
    fn truncated_gaussian_density_is_symmetric_unimodal() {
        let g = Grid::uniform(1.0, 1.4, 32).unwrap();
        let m = Marginal::GaussianTrunc { mean: 1.2, std: 0.1, lower: 1.0, upper: 1.4 };
        let v = discretize_density(&g, |x| m.density(x)).unwrap();
        // independent oracle: raw Gaussian pdf normalized by hand
        let raw: Vec<f64> = g
            .points()
            .iter()
            .map(|x| (-(x - 1.2f64).powi(2) / (2.0 * 0.01)).exp() / (0.1 * (2.0 * std::f64::consts::PI).sqrt()))
            .collect();
        let s: f64 = raw.iter().sum();
        for (a, b) in v.iter().zip(&raw) {
            assert!((a - b / s).abs() < 1e-14);
        }
        for k in 0..16 {
            assert!((v[k] - v[31 - k]).abs() < 1e-12);
        }
        let peak = (0..32).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert!(peak == 15 || peak == 16);
    }

    #[test]
    fn degenerate_sampler_gives_single_atom() {
        let g = Grid::uniform(0.0, 1.0, 5).unwrap();
        let p = DiscretePrior::from_latent(
            |_, v: &mut [f64], o: &mut [f64]| {
                o.fill(0.5);
                v.fill(0.5);
            },
            None,
            vec![g.clone(), g],
            1000,
            1,
            &[],
        );
        // single observation point leaves the others unsupported
        assert!(matches!(p, Err(Error::DegeneratePrior(_))));
    }

    #[test]
    fn degenerate_sampler_atom_on_single_point_grid() {
        let g = Grid::uniform(0.0, 1.0, 2).unwrap();
        let p = DiscretePrior::from_latent(
            |rng: &mut SimRng, v: &mut [f64], o: &mut [f64]| {
                use rand::Rng;
                let x: f64 = if rng.random::<bool>() { 0.0 } else { 1.0 };
                o.fill(x);
                v.fill(x);
            },
            None,
            vec![g.clone(), g],
            10_000,
            1,
            &[],
        )
        .unwrap();
        let Joint::Atoms(t) = p.joint() else { panic!() };
        assert_eq!(t.len(), 2);
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affiliated_marginal_is_triangular() {
        let g = Grid::uniform(0.0, 2.0, 21).unwrap();
        let model = PriorModel::Affiliated;
        let p = DiscretePrior::from_model(
            &model,
            vec![g.clone(), g.clone()],
            Some(vec![g.clone(), g.clone()]),
            1_000_000,
            11,
            &[vec![0, 1]],
        )
        .unwrap();
        assert!((p.total_mass() - 1.0).abs() < 1e-10);
        // oracle: exact probability of each bin under the triangle density
        let cdf = |x: f64| -> f64 {
            let x = x.clamp(0.0, 2.0);
            if x <= 1.0 { 0.5 * x * x } else { 1.0 - 0.5 * (2.0 - x) * (2.0 - x) }
        };
        let h = 0.05;
        let exact: Vec<f64> = g.points().iter().map(|&x| cdf(x + h) - cdf(x - h)).collect();
        assert!(total_variation(p.marginal(0), &exact) < 0.005);
        assert!(total_variation(p.marginal(0), p.marginal(1)) < 1e-12);
    }

    #[test]
    fn common_value_marginal_is_decreasing_and_seed_stable() {
        let og = Grid::uniform(0.0, 2.0, 16).unwrap();
        let vg = Grid::uniform(0.0, 1.0, 16).unwrap();
        let build = |seed| {
            DiscretePrior::from_model(
                &PriorModel::CommonValue { agents: 3 },
                vec![og.clone(); 3],
                Some(vec![vg.clone(); 3]),
                1_000_000,
                seed,
                &[vec![0, 1, 2]],
            )
            .unwrap()
        };
        let (a, b) = (build(1), build(2));
        assert!((a.total_mass() - 1.0).abs() < 1e-10);
        assert!(total_variation(a.marginal(0), b.marginal(0)) < 0.005);
        let m = a.marginal(0);
        // interior bins decrease; the first bin is a half-width bin
        for k in 1..15 {
            assert!(m[k] > m[k + 1], "bin {k}: {} <= {}", m[k], m[k + 1]);
        }
    }

    #[test]
    fn marginals_match_joint() {
        let g = Grid::uniform(0.0, 1.0, 8).unwrap();
        let gg = Grid::uniform(0.0, 2.0, 8).unwrap();
        let p = bernoulli_weights_prior(0.5, g, gg, 200_000, 5).unwrap();
        for i in 0..3 {
            let mut m = vec![0.0; 8];
            p.for_each_atom(|o, _, w| m[o[i]] += w);
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (x, y) in m.iter().zip(p.marginal(i)) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    fn binned_correlation(p: &DiscretePrior) -> f64 {
        let g = p.obs_grid(0).points().to_vec();
        let (mut m1, mut m2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
        p.for_each_atom(|o, _, w| {
            let (x, y) = (g[o[0]], g[o[1]]);
            m1 += w * x;
            m2 += w * y;
            s11 += w * x * x;
            s22 += w * y * y;
            s12 += w * x * y;
        });
        (s12 - m1 * m2) / ((s11 - m1 * m1) * (s22 - m2 * m2)).sqrt()
    }

    #[test]
    fn bernoulli_weights_correlation() {
        let lg = Grid::uniform(0.0, 1.0, 64).unwrap();
        let gg = Grid::uniform(0.0, 2.0, 64).unwrap();
        let p = bernoulli_weights_prior(0.5, lg.clone(), gg.clone(), 1_000_000, 3).unwrap();
        assert!((binned_correlation(&p) - 0.5).abs() < 0.02);

        let p1 = bernoulli_weights_prior(1.0, lg.clone(), gg.clone(), 200_000, 3).unwrap();
        p1.for_each_atom(|o, _, _| assert_eq!(o[0], o[1]));

        let p0 = bernoulli_weights_prior(0.0, lg, gg, 1_000_000, 3).unwrap();
        assert!(binned_correlation(&p0).abs() < 0.01);
        // joint of the locals against the product of marginals
        let mut joint = vec![0.0; 64 * 64];
        p0.for_each_atom(|o, _, w| joint[o[0] * 64 + o[1]] += w);
        let (m0, m1) = (p0.marginal(0), p0.marginal(1));
        let tv: f64 = (0..64 * 64).map(|c| (joint[c] - m0[c / 64] * m1[c % 64]).abs()).sum::<f64>() * 0.5;
        assert!(tv < 0.05, "tv {tv}");
    }

    #[test]
    fn latent_private_values_match_density_marginal() {
        // tent density vanishing at both bounds: nearest-point binning and
        // point evaluation agree up to sampling noise
        let tent = Marginal::Tabulated { xs: vec![0.0, 0.5, 1.0], density: vec![0.0, 1.0, 0.0] };
        let inner = Grid::uniform(0.05, 0.95, 32).unwrap();
        let p = DiscretePrior::from_latent(
            |rng: &mut SimRng, v: &mut [f64], o: &mut [f64]| {
                loop {
                    o[0] = tent.sample(rng);
                    if (0.05 - 0.45 / 31.0..=0.95 + 0.45 / 31.0).contains(&o[0]) {
                        break;
                    }
                }
                v[0] = o[0];
            },
            None,
            vec![inner.clone()],
            1_000_000,
            9,
            &[],
        )
        .unwrap();
        let evaluated = discretize_density(&inner, |x| tent.density(x)).unwrap();
        assert!(total_variation(p.marginal(0), &evaluated) < 0.005);
    }

    #[test]
    fn permutation_groups() {
        let perms = group_permutations(3, &[vec![0, 1]]).unwrap();
        assert_eq!(perms.len(), 2);
        assert_eq!(group_permutations(3, &[vec![0, 1, 2]]).unwrap().len(), 6);
        assert!(group_permutations(3, &[vec![0, 0]]).is_err());
    }
}
