//! Cascade simulation on hypergraphs with group pressure, snapshot capture and
//! labeled dataset generation.
//!
//! Propagation is synchronous discrete-time. Each round, an ignorant node
//! receives one pairwise activation attempt per eligible spreader co-member
//! `u` (probability `p_u`) and one group attempt per incident hyperedge `e`
//! (probability `coeff · |e ∩ spreaders| / |e|`). Attempts are independent;
//! the node turns spreader iff any succeeds. IC spreaders get a single chance
//! (the round after infection); SI/SIS/SIR spreaders attempt every round.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, IncidenceView};
use crate::derive_seed;

/// Propagation model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffusionModel {
    #[serde(rename = "IC")]
    Ic,
    #[serde(rename = "SI")]
    Si,
    #[serde(rename = "SIS")]
    Sis,
    #[serde(rename = "SIR")]
    Sir,
}

impl std::fmt::Display for DiffusionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DiffusionModel::Ic => "IC",
            DiffusionModel::Si => "SI",
            DiffusionModel::Sis => "SIS",
            DiffusionModel::Sir => "SIR",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for DiffusionModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IC" => Ok(DiffusionModel::Ic),
            "SI" => Ok(DiffusionModel::Si),
            "SIS" => Ok(DiffusionModel::Sis),
            "SIR" => Ok(DiffusionModel::Sir),
            other => Err(Error::InvalidConfig(format!("unknown diffusion model '{other}'"))),
        }
    }
}

/// Simulation parameters for one cascade family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub model: DiffusionModel,
    /// Fraction of nodes seeded as sources (ceil to a count).
    pub source_fraction: f64,
    /// Upper bound of the per-node pairwise probability law `U(0, cap)`.
    pub pairwise_prob_cap: f64,
    /// Constant in the group-pressure probability.
    pub group_coeff: f64,
    /// Per-round recovery probability (SIS/SIR only).
    pub recovery_prob: f64,
    /// Snapshot fraction δ: capture once spreaders reach this share of nodes.
    pub snapshot_fraction: f64,
    /// Hard cap on simulated rounds.
    pub max_steps: usize,
    /// Normalize visible timestamps by the capture step into [0, 1].
    pub normalize_timestamps: bool,
    pub seed: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            model: DiffusionModel::Ic,
            source_fraction: 0.05,
            pairwise_prob_cap: 0.5,
            group_coeff: 0.3,
            recovery_prob: 0.1,
            snapshot_fraction: 0.30,
            max_steps: 1000,
            normalize_timestamps: true,
            seed: 0,
        }
    }
}

impl PropagationConfig {
    /// Range-check every field against the node count it will run on.
    pub fn validate(&self, n: usize) -> Result<()> {
        let probs = [
            ("pairwiseProbCap", self.pairwise_prob_cap),
            ("groupCoeff", self.group_coeff),
            ("recoveryProb", self.recovery_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "propagation.{name} must be in [0,1], got {p}"
                )));
            }
        }
        if !(self.source_fraction > 0.0 && self.source_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "propagation.sourceFraction must be in (0,1), got {}",
                self.source_fraction
            )));
        }
        if !(self.snapshot_fraction > 0.0 && self.snapshot_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "propagation.delta must be in (0,1], got {}",
                self.snapshot_fraction
            )));
        }
        if (self.source_fraction * n as f64).ceil() < 1.0 {
            return Err(Error::InvalidConfig(
                "sourceFraction * n must yield at least one source".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("propagation.maxSteps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One node's compartment during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Ignorant,
    Spreader,
    Recovered,
}

/// Mutable state of a running cascade.
#[derive(Debug, Clone)]
pub struct CascadeState {
    pub states: Vec<NodeState>,
    /// Round of first infection, -1 if never infected.
    pub first_infect: Vec<i64>,
    pub sources: Vec<usize>,
    /// Per-node pairwise activation probability, drawn once per cascade.
    pub pairwise_prob: Vec<f64>,
    pub step: usize,
}

impl CascadeState {
    /// Fresh cascade: sources spreading at round 0, everyone else ignorant.
    pub fn new(n: usize, sources: Vec<usize>, pairwise_prob: Vec<f64>) -> Self {
        let mut states = vec![NodeState::Ignorant; n];
        let mut first_infect = vec![-1i64; n];
        for &s in &sources {
            states[s] = NodeState::Spreader;
            first_infect[s] = 0;
        }
        Self { states, first_infect, sources, pairwise_prob, step: 0 }
    }

    pub fn spreader_count(&self) -> usize {
        self.states.iter().filter(|s| **s == NodeState::Spreader).count()
    }
}

/// Snapshot metadata serialized with every cascade.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct SnapshotMeta {
    pub seed: u64,
    pub model: DiffusionModel,
    pub delta: f64,
    /// Round at which the snapshot was captured.
    pub step: usize,
    pub died_out: bool,
    /// Spreader fraction at capture.
    pub terminal_fraction: f64,
}

/// Observed network state at capture time.
///
/// `states[v]` is true iff `v` is a spreader at capture. `timestamps[v]` holds
/// the visible infection time: first-infection round normalized by the capture
/// step into [0, 1] for spreaders (raw rounds when normalization is off), and
/// -1 for everyone else. SIS/SIR nodes that recovered before capture appear as
/// non-spreaders with timestamp -1.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    #[serde(with = "bits01")]
    pub states: Vec<bool>,
    pub timestamps: Vec<f64>,
    pub sources: Vec<usize>,
    pub meta: SnapshotMeta,
}

impl Snapshot {
    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    pub fn spreaders(&self) -> Vec<usize> {
        (0..self.states.len()).filter(|&v| self.states[v]).collect()
    }

    pub fn is_source(&self, v: usize) -> bool {
        self.sources.contains(&v)
    }
}

/// 0/1 integer encoding for the `states` array in dataset files.
mod bits01 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&b| u8::from(b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<bool>, D::Error> {
        let raw: Vec<u8> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|b| b != 0).collect())
    }
}

/// A generated train/test split of cascades.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CascadeDataset {
    pub train: Vec<Snapshot>,
    pub test: Vec<Snapshot>,
}

/// Sample `ceil(source_fraction * n)` distinct source nodes uniformly.
pub fn sample_sources(g: &Hypergraph, cfg: &PropagationConfig, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let n = g.node_count();
    let count = ((cfg.source_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let mut picked: Vec<usize> = ids.into_iter().take(count).collect();
    picked.sort_unstable();
    picked
}

/// Group-pressure probability of one hyperedge: `coeff · |e ∩ spreaders| / |e|`.
pub fn group_pressure_prob(members: &[usize], states: &[NodeState], coeff: f64) -> f64 {
    let infected = members
        .iter()
        .filter(|&&v| states[v] == NodeState::Spreader)
        .count();
    coeff * infected as f64 / members.len() as f64
}

/// Advance one synchronous round in place. Returns true iff any node changed.
pub fn step(
    state: &mut CascadeState,
    g: &Hypergraph,
    inc: &IncidenceView,
    cfg: &PropagationConfig,
    rng: &mut ChaCha12Rng,
) -> bool {
    let n = g.node_count();
    let round = state.step;
    let mut newly_infected: Vec<usize> = Vec::new();

    for v in 0..n {
        if state.states[v] != NodeState::Ignorant {
            continue;
        }
        let mut infected = false;

        // Pairwise channel: one attempt per distinct eligible spreader co-member.
        let mut attackers: Vec<usize> = Vec::new();
        for &e in &inc.node_edges[v] {
            for &u in &inc.edge_members[e] {
                if u == v || state.states[u] != NodeState::Spreader {
                    continue;
                }
                if cfg.model == DiffusionModel::Ic && state.first_infect[u] != round as i64 {
                    continue; // IC: single chance, the round after infection
                }
                attackers.push(u);
            }
        }
        attackers.sort_unstable();
        attackers.dedup();
        for &u in &attackers {
            let p = state.pairwise_prob[u];
            if p > 0.0 && rng.gen::<f64>() < p {
                infected = true;
                break;
            }
        }

        // Group channel: one attempt per incident hyperedge, re-evaluated on
        // current occupancy.
        if !infected {
            for &e in &inc.node_edges[v] {
                let p = group_pressure_prob(&inc.edge_members[e], &state.states, cfg.group_coeff);
                if p > 0.0 && rng.gen::<f64>() < p {
                    infected = true;
                    break;
                }
            }
        }

        if infected {
            newly_infected.push(v);
        }
    }

    // Recovery of round-start spreaders (they still attempted above).
    let mut recovered_changes: Vec<(usize, NodeState)> = Vec::new();
    if matches!(cfg.model, DiffusionModel::Sis | DiffusionModel::Sir) && cfg.recovery_prob > 0.0 {
        for v in 0..n {
            if state.states[v] == NodeState::Spreader && rng.gen::<f64>() < cfg.recovery_prob {
                let to = match cfg.model {
                    DiffusionModel::Sis => NodeState::Ignorant,
                    _ => NodeState::Recovered,
                };
                recovered_changes.push((v, to));
            }
        }
    }

    let changed = !newly_infected.is_empty() || !recovered_changes.is_empty();
    for &v in &newly_infected {
        state.states[v] = NodeState::Spreader;
        if state.first_infect[v] < 0 {
            state.first_infect[v] = (round + 1) as i64;
        }
    }
    for (v, to) in recovered_changes {
        state.states[v] = to;
    }
    state.step = round + 1;
    changed
}

/// True if some ignorant node has a positive infection probability this round.
fn infection_possible(state: &CascadeState, inc: &IncidenceView, cfg: &PropagationConfig) -> bool {
    let round = state.step as i64;
    for v in 0..state.states.len() {
        if state.states[v] != NodeState::Ignorant {
            continue;
        }
        for &e in &inc.node_edges[v] {
            for &u in &inc.edge_members[e] {
                if u == v || state.states[u] != NodeState::Spreader {
                    continue;
                }
                if cfg.group_coeff > 0.0 {
                    return true;
                }
                let eligible = cfg.model != DiffusionModel::Ic || state.first_infect[u] == round;
                if eligible && state.pairwise_prob[u] > 0.0 {
                    return true;
                }
            }
        }
    }
    false
}

/// Run a cascade from a fresh seed until the spreader fraction reaches δ,
/// the dynamics become absorbing, or `max_steps` elapse.
pub fn run_until_fraction(g: &Hypergraph, cfg: &PropagationConfig) -> Result<Snapshot> {
    let inc = g.build_incidence();
    run_with_incidence(g, &inc, cfg)
}

/// Same as [`run_until_fraction`] with a pre-built incidence view.
pub fn run_with_incidence(
    g: &Hypergraph,
    inc: &IncidenceView,
    cfg: &PropagationConfig,
) -> Result<Snapshot> {
    cfg.validate(g.node_count())?;
    let n = g.node_count();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let sources = sample_sources(g, cfg, &mut rng);
    let pairwise: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * cfg.pairwise_prob_cap).collect();
    let mut state = CascadeState::new(n, sources, pairwise);

    let target = ((cfg.snapshot_fraction * n as f64).ceil() as usize).max(1);
    let mut died_out = false;
    loop {
        if state.spreader_count() >= target {
            break;
        }
        if state.step >= cfg.max_steps {
            died_out = state.spreader_count() < target;
            break;
        }
        if !infection_possible(&state, inc, cfg) {
            // IC/SI can never infect again; SIR never re-creates ignorants. A
            // reverted SIS node may re-open the frontier, so SIS keeps running
            // while spreaders remain.
            let absorbing = match cfg.model {
                DiffusionModel::Ic | DiffusionModel::Si | DiffusionModel::Sir => true,
                DiffusionModel::Sis => {
                    state.spreader_count() == 0 || cfg.recovery_prob == 0.0
                }
            };
            if absorbing {
                died_out = true;
                break;
            }
        }
        step(&mut state, g, inc, cfg, &mut rng);
    }

    let capture_step = state.step;
    let mut states = vec![false; n];
    let mut timestamps = vec![-1.0; n];
    for v in 0..n {
        if state.states[v] == NodeState::Spreader {
            states[v] = true;
            let t = state.first_infect[v] as f64;
            timestamps[v] = if cfg.normalize_timestamps {
                if capture_step == 0 { 0.0 } else { t / capture_step as f64 }
            } else {
                t
            };
        }
    }
    let spreaders = states.iter().filter(|&&b| b).count();
    Ok(Snapshot {
        states,
        timestamps,
        sources: state.sources,
        meta: SnapshotMeta {
            seed: cfg.seed,
            model: cfg.model,
            delta: cfg.snapshot_fraction,
            step: capture_step,
            died_out,
            terminal_fraction: spreaders as f64 / n as f64,
        },
    })
}

/// Generate `count` independent cascades and split them train/test.
///
/// Each cascade owns a seed derived from `(cfg.seed, index)`; died-out
/// cascades are re-drawn with fresh sub-seeds up to 10 times, then kept and
/// flagged. The split is by cascade index, rounding toward the train side.
pub fn generate_dataset(
    g: &Hypergraph,
    cfg: &PropagationConfig,
    count: usize,
    train_ratio: f64,
) -> Result<CascadeDataset> {
    if count < 5 {
        return Err(Error::InvalidConfig(format!("cascade count must be >= 5, got {count}")));
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train ratio must be in (0,1), got {train_ratio}"
        )));
    }
    let inc = g.build_incidence();
    let mut snapshots = Vec::with_capacity(count);
    for i in 0..count {
        let base_seed = derive_seed(cfg.seed, i as u64);
        let mut snap = None;
        for retry in 0..=10u64 {
            let seed = if retry == 0 { base_seed } else { derive_seed(base_seed, 1000 + retry) };
            let sub_cfg = PropagationConfig { seed, ..cfg.clone() };
            let s = run_with_incidence(g, &inc, &sub_cfg)?;
            let dead = s.meta.died_out;
            snap = Some(s);
            if !dead {
                break;
            }
        }
        snapshots.push(snap.expect("at least one draw"));
    }
    // Epsilon absorbs representation error in (1 - ratio) so that e.g.
    // 100 * 0.2 floors to 20, not 19.
    let test_count = ((count as f64) * (1.0 - train_ratio) + 1e-9).floor() as usize;
    let train_count = count - test_count;
    let test = snapshots.split_off(train_count);
    Ok(CascadeDataset { train: snapshots, test })
}

/// Generate a random hypergraph: `m` hyperedges with sizes uniform in
/// `[size_min, size_max]`, members sampled uniformly without replacement.
/// Connectivity is not guaranteed.
pub fn random_hypergraph(
    n: usize,
    m: usize,
    size_min: usize,
    size_max: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Hypergraph> {
    if n < 4 || m < 1 {
        return Err(Error::InvalidConfig(format!(
            "random hypergraph needs n >= 4 and m >= 1, got n={n} m={m}"
        )));
    }
    if size_min < 2 || size_max < size_min {
        return Err(Error::InvalidConfig(format!(
            "bad hyperedge size range [{size_min}, {size_max}]"
        )));
    }
    if size_max > n {
        return Err(Error::InvalidConfig(format!(
            "hyperedge size {size_max} exceeds node count {n}"
        )));
    }
    let mut edges = Vec::with_capacity(m);
    let mut ids: Vec<usize> = (0..n).collect();
    for _ in 0..m {
        let size = rng.gen_range(size_min..=size_max);
        ids.shuffle(rng);
        let mut members: Vec<usize> = ids[..size].to_vec();
        members.sort_unstable();
        edges.push(members);
    }
    Hypergraph::new(n, edges)
}

/// Write a dataset as pretty JSON.
pub fn save_dataset(snapshots: &[Snapshot], path: &std::path::Path) -> Result<()> {
    let json = serde_json::to_string_pretty(snapshots)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a dataset written by [`save_dataset`].
pub fn load_dataset(path: &std::path::Path) -> Result<Vec<Snapshot>> {
    let raw = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&raw)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> PropagationConfig {
        PropagationConfig { seed, ..Default::default() }
    }

    fn two_node_edge() -> Hypergraph {
        Hypergraph::new(2, vec![vec![0, 1]]).unwrap()
    }

    #[test]
    fn source_sampling_counts_and_determinism() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let g = random_hypergraph(100, 80, 2, 5, &mut rng).unwrap();
        let c = cfg(9);
        let mut r1 = ChaCha12Rng::seed_from_u64(5);
        let s1 = sample_sources(&g, &c, &mut r1);
        assert_eq!(s1.len(), 5);
        let mut r2 = ChaCha12Rng::seed_from_u64(5);
        assert_eq!(sample_sources(&g, &c, &mut r2), s1);

        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let g10 = random_hypergraph(10, 5, 2, 3, &mut rng).unwrap();
        let mut r = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(sample_sources(&g10, &c, &mut r).len(), 1); // ceiling rule
    }

    #[test]
    fn group_pressure_formula() {
        let states = vec![
            NodeState::Spreader,
            NodeState::Spreader,
            NodeState::Ignorant,
            NodeState::Ignorant,
        ];
        let e = vec![0, 1, 2, 3];
        assert!((group_pressure_prob(&e, &states, 0.3) - 0.15).abs() < 1e-15);

        let all_ig = vec![NodeState::Ignorant; 4];
        assert_eq!(group_pressure_prob(&e, &all_ig, 0.3), 0.0);

        let all_sp = vec![NodeState::Spreader; 4];
        assert!((group_pressure_prob(&e, &all_sp, 0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn single_step_infection_probability_monte_carlo() {
        // Two independent attempts: pairwise p=0.5 and group 0.3*(1/2)=0.15,
        // so P(infected) = 1 - 0.5*0.85 = 0.575. 1e4 trials, 3σ ≈ 0.015.
        let g = two_node_edge();
        let inc = g.build_incidence();
        let base = PropagationConfig { group_coeff: 0.3, ..cfg(0) };
        let trials = 10_000;
        let mut hits = 0usize;
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..trials {
            let mut state = CascadeState::new(2, vec![0], vec![0.5, 0.5]);
            step(&mut state, &g, &inc, &base, &mut rng);
            if state.states[1] == NodeState::Spreader {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.575).abs() <= 0.015, "freq = {freq}");
    }

    #[test]
    fn empty_spreader_state_is_absorbing() {
        let g = two_node_edge();
        let inc = g.build_incidence();
        let mut state = CascadeState::new(2, vec![], vec![0.5, 0.5]);
        state.states = vec![NodeState::Ignorant; 2];
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let changed = step(&mut state, &g, &inc, &cfg(0), &mut rng);
        assert!(!changed);
        assert!(state.states.iter().all(|s| *s == NodeState::Ignorant));
    }

    #[test]
    fn saturated_si_state_is_fixed() {
        let g = two_node_edge();
        let inc = g.build_incidence();
        let c = PropagationConfig { model: DiffusionModel::Si, ..cfg(0) };
        let mut state = CascadeState::new(2, vec![0, 1], vec![0.5, 0.5]);
        let before = state.states.clone();
        let fi = state.first_infect.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(!step(&mut state, &g, &inc, &c, &mut rng));
        assert_eq!(state.states, before);
        assert_eq!(state.first_infect, fi);
    }

    #[test]
    fn capture_threshold_is_ceiling_of_fraction() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let g = random_hypergraph(10, 12, 2, 4, &mut rng).unwrap();
        let c = PropagationConfig {
            model: DiffusionModel::Si,
            snapshot_fraction: 0.3,
            source_fraction: 0.1,
            ..cfg(4)
        };
        let snap = run_until_fraction(&g, &c).unwrap();
        if !snap.meta.died_out {
            assert!(snap.spreaders().len() >= 3);
        }
    }

    #[test]
    fn zero_probability_run_dies_out_with_sources_only() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let g = random_hypergraph(10, 8, 2, 4, &mut rng).unwrap();
        let c = PropagationConfig {
            pairwise_prob_cap: 0.0,
            group_coeff: 0.0,
            source_fraction: 0.1,
            ..cfg(7)
        };
        let snap = run_until_fraction(&g, &c).unwrap();
        assert!(snap.meta.died_out);
        assert_eq!(snap.spreaders(), snap.sources);
    }

    #[test]
    fn earlier_delta_captures_no_later_than_larger_delta() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let g = random_hypergraph(40, 50, 2, 5, &mut rng).unwrap();
        for seed in 0..5 {
            let small = PropagationConfig { snapshot_fraction: 0.1, ..cfg(seed) };
            let large = PropagationConfig { snapshot_fraction: 0.3, ..cfg(seed) };
            let a = run_until_fraction(&g, &small).unwrap();
            let b = run_until_fraction(&g, &large).unwrap();
            assert!(a.meta.step <= b.meta.step);
        }
    }

    #[test]
    fn spreaders_monotone_and_first_infect_set_once_under_ic_si() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let g = random_hypergraph(30, 40, 2, 5, &mut rng).unwrap();
        let inc = g.build_incidence();
        for model in [DiffusionModel::Ic, DiffusionModel::Si] {
            let c = PropagationConfig { model, seed: 8, ..Default::default() };
            let mut rng = ChaCha12Rng::seed_from_u64(c.seed);
            let sources = sample_sources(&g, &c, &mut rng);
            let p: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() * 0.5).collect();
            let mut state = CascadeState::new(30, sources, p);
            let mut prev = state.spreader_count();
            let mut seen: Vec<i64> = state.first_infect.clone();
            for _ in 0..15 {
                step(&mut state, &g, &inc, &c, &mut rng);
                let cur = state.spreader_count();
                assert!(cur >= prev);
                prev = cur;
                for v in 0..30 {
                    if seen[v] >= 0 {
                        assert_eq!(seen[v], state.first_infect[v]);
                    }
                }
                seen = state.first_infect.clone();
            }
        }
    }

    #[test]
    fn deterministic_replay() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let g = random_hypergraph(25, 30, 2, 5, &mut rng).unwrap();
        for model in [DiffusionModel::Ic, DiffusionModel::Si, DiffusionModel::Sis, DiffusionModel::Sir] {
            let c = PropagationConfig { model, seed: 1234, ..Default::default() };
            let a = run_until_fraction(&g, &c).unwrap();
            let b = run_until_fraction(&g, &c).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dataset_split_sizes() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let g = random_hypergraph(20, 25, 2, 4, &mut rng).unwrap();
        let c = PropagationConfig { source_fraction: 0.1, ..cfg(3) };
        let d = generate_dataset(&g, &c, 100, 0.8).unwrap();
        assert_eq!(d.train.len(), 80);
        assert_eq!(d.test.len(), 20);

        let d = generate_dataset(&g, &c, 5, 0.8).unwrap();
        assert_eq!(d.train.len(), 4);
        assert_eq!(d.test.len(), 1);
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let g = random_hypergraph(20, 25, 2, 4, &mut rng).unwrap();
        let c = PropagationConfig { source_fraction: 0.1, ..cfg(42) };
        let a = generate_dataset(&g, &c, 10, 0.8).unwrap();
        let b = generate_dataset(&g, &c, 10, 0.8).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn dataset_json_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let g = random_hypergraph(15, 18, 2, 4, &mut rng).unwrap();
        let c = PropagationConfig { source_fraction: 0.1, ..cfg(11) };
        let d = generate_dataset(&g, &c, 6, 0.8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.json");
        save_dataset(&d.train, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), d.train);
    }

    #[test]
    fn random_hypergraph_respects_sizes_and_seed() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let g = random_hypergraph(10, 5, 2, 2, &mut rng).unwrap();
        assert!(g.edges().iter().all(|e| e.len() == 2));

        let mut r1 = ChaCha12Rng::seed_from_u64(9);
        let mut r2 = ChaCha12Rng::seed_from_u64(9);
        let a = random_hypergraph(12, 9, 2, 5, &mut r1).unwrap();
        let b = random_hypergraph(12, 9, 2, 5, &mut r2).unwrap();
        assert_eq!(a, b);

        let mut rng = ChaCha12Rng::seed_from_u64(8);
        assert!(random_hypergraph(3, 2, 4, 4, &mut rng).is_err());
    }

    #[test]
    fn sir_recovered_nodes_hidden_in_snapshot() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let g = random_hypergraph(30, 40, 2, 5, &mut rng).unwrap();
        let c = PropagationConfig {
            model: DiffusionModel::Sir,
            recovery_prob: 0.5,
            seed: 13,
            ..Default::default()
        };
        let snap = run_until_fraction(&g, &c).unwrap();
        for v in 0..30 {
            if !snap.states[v] {
                assert_eq!(snap.timestamps[v], -1.0);
            } else {
                assert!(snap.timestamps[v] >= 0.0 && snap.timestamps[v] <= 1.0);
            }
        }
    }
}
