//! Synthetic population with household, school, work and community layers.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::agent::Agent;
use super::params::PopulationConfig;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Compressed adjacency lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csr {
    offsets: Vec<u32>,
    targets: Vec<u32>,
}

impl Csr {
    pub fn empty(n: usize) -> Self {
        Self {
            offsets: vec![0; n + 1],
            targets: Vec::new(),
        }
    }

    /// Undirected graph from an edge list; each edge appears in both endpoints' lists.
    pub fn from_edges(n: usize, edges: &[(u32, u32)], dedup: bool) -> Self {
        let mut csr = Csr::default();
        csr.rebuild(n, edges);
        if dedup {
            let mut offsets = Vec::with_capacity(n + 1);
            let mut targets = Vec::with_capacity(csr.targets.len());
            offsets.push(0);
            for i in 0..n {
                let mut row = csr.neighbors(i).to_vec();
                row.sort_unstable();
                row.dedup();
                targets.extend_from_slice(&row);
                offsets.push(targets.len() as u32);
            }
            csr = Csr { offsets, targets };
        }
        csr
    }

    /// Rebuilds in place, reusing allocations.
    pub fn rebuild(&mut self, n: usize, edges: &[(u32, u32)]) {
        self.offsets.clear();
        self.offsets.resize(n + 1, 0);
        for &(u, v) in edges {
            self.offsets[u as usize + 1] += 1;
            self.offsets[v as usize + 1] += 1;
        }
        for i in 0..n {
            self.offsets[i + 1] += self.offsets[i];
        }
        self.targets.clear();
        self.targets.resize(2 * edges.len(), 0);
        let mut cursor: Vec<u32> = self.offsets[..n].to_vec();
        for &(u, v) in edges {
            self.targets[cursor[u as usize] as usize] = v;
            cursor[u as usize] += 1;
            self.targets[cursor[v as usize] as usize] = u;
            cursor[v as usize] += 1;
        }
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        if i + 1 >= self.offsets.len() {
            return &[];
        }
        &self.targets[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn n_directed_entries(&self) -> usize {
        self.targets.len()
    }
}

/// Agents plus the static contact layers of one episode.
#[derive(Clone, Debug)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub households: Vec<Vec<u32>>,
    pub school: Csr,
    pub work: Csr,
    /// Mean community degree used when resampling the community layer each day.
    pub community_mean: f64,
}

impl Population {
    /// Assembles a population from explicit parts (crafted scenarios, tests).
    pub fn from_parts(
        agents: Vec<Agent>,
        school_edges: &[(u32, u32)],
        work_edges: &[(u32, u32)],
        community_mean: f64,
    ) -> Result<Self> {
        let n = agents.len();
        for (k, a) in agents.iter().enumerate() {
            if a.id as usize != k {
                return Err(Error::config("agent ids must equal their index"));
            }
        }
        let n_households = agents.iter().map(|a| a.household as usize + 1).max().unwrap_or(0);
        let mut households = vec![Vec::new(); n_households];
        for a in &agents {
            households[a.household as usize].push(a.id);
        }
        if households.iter().any(Vec::is_empty) {
            return Err(Error::config("household ids must be contiguous"));
        }
        if school_edges
            .iter()
            .chain(work_edges)
            .any(|&(u, v)| u as usize >= n || v as usize >= n || u == v)
        {
            return Err(Error::config("edge endpoint out of range or self-loop"));
        }
        Ok(Self {
            school: Csr::from_edges(n, school_edges, true),
            work: Csr::from_edges(n, work_edges, true),
            agents,
            households,
            community_mean,
        })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn household_members(&self, i: usize) -> &[u32] {
        &self.households[self.agents[i].household as usize]
    }
}

/// Builds a population deterministically from `seed`.
///
/// Households are formed over consecutive ids with size `max(1, Poisson(h))`;
/// a lone leftover agent joins the last household. School-aged and working-aged
/// agents are chunked into schools and workplaces, each a static random graph
/// with mean degree from the `s`/`w` contacts.
pub fn synthesize_population(config: &PopulationConfig, seed: u64) -> Result<Population> {
    config.validate()?;
    let n = config.pop_size;
    let mut rng = substream(seed, Stream::Population);

    let mut agents: Vec<Agent> = Vec::with_capacity(n);
    let household_size = Poisson::new(config.contacts.h).map_err(|e| Error::config(e.to_string()))?;
    let mut household = 0u32;
    let mut next = 0usize;
    while next < n {
        let drawn = (household_size.sample(&mut rng) as usize).max(1);
        let mut size = drawn.min(n - next);
        if n - next - size == 1 {
            size += 1;
        }
        for _ in 0..size {
            let age = config.age_pyramid.sample(&mut rng);
            agents.push(Agent::new(next as u32, age, household));
            next += 1;
        }
        household += 1;
    }

    let in_range = |age: f64, r: [f64; 2]| age >= r[0] && age < r[1];
    let students: Vec<u32> = agents
        .iter()
        .filter(|a| in_range(a.age, config.school_age))
        .map(|a| a.id)
        .collect();
    let workers: Vec<u32> = agents
        .iter()
        .filter(|a| in_range(a.age, config.work_age))
        .map(|a| a.id)
        .collect();

    let mut school_edges = Vec::new();
    for (k, chunk) in students.chunks(config.school_size).enumerate() {
        for &id in chunk {
            agents[id as usize].school = Some(k as u32);
        }
        cluster_edges(chunk, config.contacts.s, &mut rng, &mut school_edges)?;
    }
    let mut work_edges = Vec::new();
    for (k, chunk) in workers.chunks(config.workplace_size).enumerate() {
        for &id in chunk {
            agents[id as usize].workplace = Some(k as u32);
        }
        cluster_edges(chunk, config.contacts.w, &mut rng, &mut work_edges)?;
    }

    Population::from_parts(agents, &school_edges, &work_edges, config.contacts.c)
}

/// Random static contacts inside one cluster with mean degree `mean_degree`.
fn cluster_edges<R: Rng>(
    members: &[u32],
    mean_degree: f64,
    rng: &mut R,
    out: &mut Vec<(u32, u32)>,
) -> Result<()> {
    if members.len() < 2 {
        return Ok(());
    }
    let per_member = Poisson::new(mean_degree / 2.0).map_err(|e| Error::config(e.to_string()))?;
    let m = members.len();
    for (k, &id) in members.iter().enumerate() {
        let draws = per_member.sample(rng) as usize;
        for _ in 0..draws {
            let mut j = rng.random_range(0..m - 1);
            if j >= k {
                j += 1;
            }
            out.push((id, members[j]));
        }
    }
    Ok(())
}

/// Samples one day's community layer: each agent initiates `Poisson(mean / 2)`
/// contacts with uniformly chosen others.
pub(crate) fn sample_community<R: Rng>(
    n: usize,
    mean_degree: f64,
    rng: &mut R,
    edges: &mut Vec<(u32, u32)>,
    out: &mut Csr,
) {
    edges.clear();
    if n >= 2 && mean_degree > 0.0 {
        let per_agent = Poisson::new(mean_degree / 2.0).expect("positive mean");
        for i in 0..n {
            let draws = per_agent.sample(rng) as usize;
            for _ in 0..draws {
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                edges.push((i as u32, j as u32));
            }
        }
    }
    out.rebuild(n, edges);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(n: usize) -> PopulationConfig {
        PopulationConfig {
            pop_size: n,
            ..PopulationConfig::default()
        }
    }

    #[test]
    fn two_agents_share_one_household() {
        let mut cfg = small_config(2);
        cfg.contacts.h = 2.0;
        for seed in 0..50 {
            let pop = synthesize_population(&cfg, seed).unwrap();
            assert_eq!(pop.households.len(), 1);
            assert_eq!(pop.households[0], vec![0, 1]);
        }
    }

    #[test]
    fn every_agent_in_exactly_one_household() {
        let pop = synthesize_population(&small_config(3000), 5).unwrap();
        let mut seen = vec![0u32; pop.len()];
        for h in &pop.households {
            for &id in h {
                seen[id as usize] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        let mean_size = pop.len() as f64 / pop.households.len() as f64;
        assert!((mean_size - 3.0).abs() < 0.3, "mean household size {mean_size}");
    }

    #[test]
    fn layer_membership_by_age() {
        let cfg = small_config(2000);
        let pop = synthesize_population(&cfg, 9).unwrap();
        for a in &pop.agents {
            assert_eq!(a.school.is_some(), a.age >= 6.0 && a.age < 22.0);
            assert_eq!(a.workplace.is_some(), a.age >= 22.0 && a.age < 65.0);
            if a.school.is_none() {
                assert!(pop.school.neighbors(a.id as usize).is_empty());
            }
        }
        let workers = pop.agents.iter().filter(|a| a.workplace.is_some()).count();
        let mean_work_degree = pop.work.n_directed_entries() as f64 / workers as f64;
        assert!(mean_work_degree > 14.0 && mean_work_degree < 21.0, "{mean_work_degree}");
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = small_config(1000);
        let a = synthesize_population(&cfg, 7).unwrap();
        let b = synthesize_population(&cfg, 7).unwrap();
        assert_eq!(a.agents, b.agents);
        assert_eq!(a.households, b.households);
        assert_eq!(a.school, b.school);
        assert_eq!(a.work, b.work);
        let c = synthesize_population(&cfg, 8).unwrap();
        assert_ne!(a.agents, c.agents);
    }

    #[test]
    fn invalid_sizes_rejected() {
        assert!(synthesize_population(&small_config(1), 0).is_err());
        let mut cfg = small_config(100);
        cfg.total_pop = 0.0;
        assert!(synthesize_population(&cfg, 0).is_err());
    }

    #[test]
    fn community_degree_matches_mean() {
        let mut rng = substream(1, Stream::Contacts);
        let mut edges = Vec::new();
        let mut csr = Csr::default();
        sample_community(5000, 20.0, &mut rng, &mut edges, &mut csr);
        let mean = csr.n_directed_entries() as f64 / 5000.0;
        assert!((mean - 20.0).abs() < 0.3, "{mean}");
        assert!((0..5000).all(|i| !csr.neighbors(i).contains(&(i as u32))));
    }
}
